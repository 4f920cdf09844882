use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use hearth_lp_cli::{one_line, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = run(cli, &mut out).and_then(|()| out.flush().map_err(Into::into));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hearth-lp: error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
