use clap::Parser;

fn main() {
    let cli = qfluct_cli::Cli::parse();
    if let Err(e) = qfluct_cli::run(&cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
