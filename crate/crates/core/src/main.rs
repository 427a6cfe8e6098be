use clap::Parser;

fn main() {
    let cli = uosr::cli::Cli::parse();
    if let Err(e) = uosr::cli::run(cli, &mut std::io::stdout().lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
