use clap::Parser;

fn main() {
    let cli = gaitmesh::cli::Cli::parse();
    std::process::exit(gaitmesh::cli::run(cli));
}
