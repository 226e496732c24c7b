use std::io;

use channelwave::commands::{execute, Cli, SEED_ENV};
use clap::Parser;

fn main() {
    let cli = Cli::parse();
    let seed = std::env::var(SEED_ENV).ok();
    let code = execute(cli, seed.as_deref(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
