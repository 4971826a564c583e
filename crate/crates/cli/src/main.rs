use clap::Parser;
use lfcs::commands::{run, Cli};

fn main() -> anyhow::Result<()> {
    run(Cli::parse())
}
