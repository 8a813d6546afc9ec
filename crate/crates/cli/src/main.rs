use clap::Parser;
use tsr_cli::{execute, Cli};

fn main() {
    if let Err(e) = execute(Cli::parse()) {
        eprintln!("tsr: {e}");
        std::process::exit(e.exit_code());
    }
}
