use std::process::ExitCode;

use cdnod_cli::commands::{run, Cli};
use cdnod_cli::config::expand_config;
use clap::{CommandFactory, Parser};

/// Usage line of the subcommand named in `args`, or of the program.
fn usage(args: &[std::ffi::OsString]) -> String {
    let mut cmd = Cli::command();
    let name = args.get(1).map(|a| a.to_string_lossy().into_owned()).unwrap_or_default();
    match cmd.find_subcommand_mut(&name) {
        Some(sub) => sub.clone().bin_name(format!("cdnod {name}")).render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CDNOD_LOG", "warn")).init();
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", usage(&args));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
