//! Run manifests: enough to replay a command and check it saw the same inputs.

use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub inputs: Vec<InputRecord>,
    pub out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Full argument list (without the program name) that reproduces the run.
    pub argv: Vec<String>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(command: &str, out: &Path, seed: Option<u64>, argv: Vec<String>) -> Self {
        RunManifest {
            tool: format!("sdl {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            inputs: Vec::new(),
            out: out.display().to_string(),
            seed,
            argv,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> anyhow::Result<()> {
        self.inputs.push(InputRecord {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }

    /// Fail if any recorded input has changed since the manifest was written.
    pub fn verify_inputs(&self) -> anyhow::Result<()> {
        for i in &self.inputs {
            let now = sha256_file(Path::new(&i.path))?;
            if now != i.sha256 {
                bail!("{} input {} changed since the run (sha256 {} != {})", i.role, i.path, now, i.sha256);
            }
        }
        Ok(())
    }

    /// The recorded arguments with the output directory replaced.
    pub fn argv_with_out(&self, out: &Path) -> Vec<String> {
        let mut argv = self.argv.clone();
        if let Some(i) = argv.iter().position(|a| a == "--out") {
            if i + 1 < argv.len() {
                argv[i + 1] = out.display().to_string();
            }
        }
        argv
    }
}
