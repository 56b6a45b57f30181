mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

const THREADS_ENV: &str = "GRADCODEC_THREADS";

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or environment: exit 2.
    Usage(String),
    /// Valid invocation the library rejected: exit 1.
    Domain(String),
}

impl From<gradcodec::Error> for Failure {
    fn from(e: gradcodec::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot configure thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("usage error");
            eprintln!("gradcodec: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("gradcodec: {}", one_line(&msg));
            ExitCode::from(2)
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("gradcodec: {}", one_line(&msg));
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::one_line;

    #[test]
    fn diagnostics_collapse_to_one_line() {
        assert_eq!(one_line("bad\n  value\tthere "), "bad value there");
    }
}
