use clap::Parser;

fn main() {
    let cli = sosrf::cli::Cli::parse();
    std::process::exit(sosrf::cli::run(cli));
}
