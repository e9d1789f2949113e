use clap::Parser;

fn main() {
    let cli = sqznb_cli::Cli::parse();
    if let Err(e) = sqznb_cli::run(cli) {
        eprintln!("sqznb: {e}");
        std::process::exit(e.exit_code());
    }
}
