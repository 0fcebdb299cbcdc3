//! Exit codes: 0 success, 1 usage error, 2 data error, 3 fit finished with
//! convergence warnings.

use clap::Parser;

use dtomo_cli::commands::{run, Cli, CmdError, Outcome};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version output through the error
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            std::process::exit(code);
        }
    };

    match run(&cli) {
        Ok(Outcome::Clean) => {}
        Ok(Outcome::ConvergenceWarned) => std::process::exit(3),
        Err(CmdError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(CmdError::Data(msg)) => {
            eprintln!("data error: {msg}");
            std::process::exit(2);
        }
    }
}
