use clap::Parser;

use mathgcl_cli::commands::{error_message, error_report, run, Cli};
use mathgcl_cli::logging;

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    logging::init();
    if let Err(err) = run(cli) {
        log::error!("{}", error_message(&err));
        println!("{}", error_report(&err));
        std::process::exit(1);
    }
}
