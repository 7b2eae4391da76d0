mod args;
mod commands;
mod manifest;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use manifest::RunManifest;

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, configuration or input contents.
    Usage(String),
    /// Non-finite losses, singular matrices, degenerate geometry.
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure::Io(format!("{}: {err}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ccmx::Error> for Failure {
    fn from(e: ccmx::Error) -> Self {
        use ccmx::Error as E;
        match e {
            E::Io(err) => Failure::Io(err.to_string()),
            E::Numerical(_) | E::Degenerate(_) => Failure::Numerical(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    let command = match command {
        Command::Replay(r) => {
            let mut recorded = RunManifest::read(&r.manifest)?.command;
            if let Some(out) = r.out {
                recorded.set_out_dir(out);
            }
            recorded
        }
        other => other,
    };
    let command = commands::resolve_paths(command)?;
    let outcome = commands::execute(&command)?;
    let dir = command.out_dir().expect("replay was unwrapped");
    let path = RunManifest::new(command.clone(), outcome.config, outcome.outputs).write(dir)?;
    print!("{}", outcome.summary);
    println!("manifest: {}", path.display());
    Ok(())
}
