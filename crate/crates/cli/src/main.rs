use clap::Parser;
use forge_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&summary.json).expect("summary serializes"));
            } else {
                println!("{}", summary.text);
            }
        }
        Err(e) => {
            eprintln!("forge: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
