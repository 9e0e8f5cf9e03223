use clap::Parser;

fn main() {
    let cli = mmmi_cli::Cli::parse();
    std::process::exit(mmmi_cli::run(cli));
}
