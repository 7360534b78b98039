use clap::Parser;

use flowcast::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = cli::execute(cli) {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(cause) = source {
            eprintln!("  caused by: {cause}");
            source = cause.source();
        }
        std::process::exit(cli::exit_code(&err));
    }
}
