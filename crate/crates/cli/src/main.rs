use clap::Parser;
use mwdk_cli::commands::{execute, Command};

#[derive(Debug, Parser)]
#[command(name = "mwdk", version, about = "Graph embedding and community detection experiments")]
struct Cli {
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            std::process::exit(2);
        }
    }
    if let Err(e) = execute(&cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
