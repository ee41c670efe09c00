use clap::Parser;

fn main() {
    let args = feddb::cli::Args::parse();
    std::process::exit(feddb::cli::main_with(&args));
}
