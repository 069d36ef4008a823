use clap::Parser;

fn main() {
    let cli = motsdn_cli::Cli::parse();
    std::process::exit(motsdn_cli::run(cli));
}
