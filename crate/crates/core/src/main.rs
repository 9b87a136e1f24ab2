use clap::Parser;

fn main() {
    std::process::exit(parfnet::cli::run(parfnet::cli::Cli::parse()));
}
