use clap::Parser;
use flowbridge_cli::cli::{execute, init_threads, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|_| execute(cli)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
