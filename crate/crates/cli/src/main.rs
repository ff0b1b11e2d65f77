use clap::Parser;
use fxcurve_cli::commands::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
