use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use covreg::cli::{run, thread_cap_from_env, Cli};
use covreg::par::with_thread_cap;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = with_thread_cap(thread_cap_from_env(), || {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        let r = run(&cli, &mut lock);
        let _ = lock.flush();
        r
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("covreg: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
