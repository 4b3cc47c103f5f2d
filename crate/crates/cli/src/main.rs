use std::process::ExitCode;

use bnsearch_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\t', '\n'], " ");
            eprintln!("error\t{}\t{msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
