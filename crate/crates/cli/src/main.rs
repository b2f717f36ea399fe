use clap::Parser;

fn main() {
    let cli = tde_cli::Cli::parse();
    if let Err(e) = tde_cli::run(cli) {
        eprintln!("tde: {e}");
        std::process::exit(e.exit_code());
    }
}
