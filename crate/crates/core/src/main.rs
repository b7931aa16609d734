use clap::Parser;
use transverse_nls::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
