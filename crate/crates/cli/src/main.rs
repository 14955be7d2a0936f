//! `pacmia` command line.

mod args;
mod commands;
mod error;
mod manifest;
mod provider;

use clap::error::ErrorKind;
use clap::Parser;

use args::{BenchCommand, Cli, Command};
use error::CliResult;
use manifest::RunRecorder;

fn dispatch(cli: &Cli, rec: &mut RunRecorder) -> CliResult<()> {
    match &cli.command {
        Command::Score(a) => commands::score::run(a, rec),
        Command::Evaluate(a) => commands::report::evaluate(a, rec),
        Command::Calibrate(a) => commands::report::calibrate(a, rec),
        Command::Track(a) => commands::track::run(a, rec),
        Command::Bench(BenchCommand::Build(a)) => commands::bench::build(a, rec),
        Command::Bench(BenchCommand::Gate(a)) => commands::bench::gate(a, rec),
        Command::Contamination(a) => commands::report::contamination(a, rec),
        Command::Demo(a) => commands::demo::run(a, rec),
        Command::Rerun(_) => unreachable!("handled before dispatch"),
    }
}

fn run(argv: Vec<String>, nested: bool) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    if !nested {
        let level = match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        };
        let _ = env_logger::Builder::new().filter_level(level).parse_env("PACMIA_LOG").try_init();
    }

    if let Command::Rerun(r) = &cli.command {
        let recorded = match manifest::load(&r.manifest) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {}: {e}", r.manifest.display());
                return 1;
            }
        };
        if nested || recorded.command.get(1).map(String::as_str) == Some("rerun") {
            eprintln!("error: a manifest cannot rerun another rerun");
            return 1;
        }
        return run(recorded.command, true);
    }

    let config = serde_json::to_value(&cli.command).unwrap_or_default();
    let mut rec = RunRecorder::new(argv, cli.command.name(), config);
    let result = dispatch(&cli, &mut rec);
    if let Err(e) = &result {
        rec.note(format!("failed: {e}"));
    }
    if rec.path().is_some() {
        if let Err(e) = rec.finish() {
            eprintln!("error: writing manifest: {e}");
            return 1;
        }
    }
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    // Die quietly when piped into `head` instead of panicking on EPIPE.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(run(std::env::args().collect(), false));
}

