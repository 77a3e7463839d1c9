use clap::Parser;

fn main() {
    let cli = ba_sim_cli::Cli::parse();
    std::process::exit(ba_sim_cli::execute(cli));
}
