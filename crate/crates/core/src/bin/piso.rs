use clap::Parser;
use parabolic_iso::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
