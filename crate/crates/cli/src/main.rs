use clap::Parser;

fn main() {
    let cli = iss_cli::Cli::parse();
    if let Err(e) = iss_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(iss_cli::exit_code(&e));
    }
}
