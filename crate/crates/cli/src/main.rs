use clap::Parser;

fn main() {
    let cli = sdl_cli::cli::Cli::parse();
    match sdl_cli::run(cli) {
        Ok(outcome) => std::process::exit(outcome.exit_code()),
        Err(f) => {
            eprintln!("sdl: {f}");
            std::process::exit(f.exit_code());
        }
    }
}
