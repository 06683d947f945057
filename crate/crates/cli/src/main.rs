use clap::Parser;
use condensate_cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { condensate_cli::commands::EXIT_CONFIG } else { 0 });
        }
    };
    std::process::exit(run(cli));
}
