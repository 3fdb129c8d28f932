use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = gacm_cli::Cli::parse();
    ExitCode::from(gacm_cli::run(cli, &mut std::io::stdout(), &mut std::io::stderr()))
}
