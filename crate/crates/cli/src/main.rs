use clap::Parser;
use symctl_cli::commands::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
