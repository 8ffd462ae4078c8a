use clap::Parser;
use treetn_cli::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = cli.execute() {
        eprintln!("treetn: {e}");
        std::process::exit(e.exit_code());
    }
}
