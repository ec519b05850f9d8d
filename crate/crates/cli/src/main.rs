use clap::Parser;

fn main() {
    let cli = qsd_cli::commands::Cli::parse();
    std::process::exit(qsd_cli::commands::execute(cli));
}
