//! Argument parsing.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgMatches, Command};

use crate::config::{flag_name, RunConfig, KEYS};
use crate::error::exit;
use crate::pipeline::{self, COMMANDS};

pub fn command() -> Command {
    let mut cmd = Command::new("genshield")
        .about("Sensor data transformation that hides gender while keeping activity recognisable")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key=value configuration file"),
        );
    for (key, default, help) in KEYS {
        let help = if default.is_empty() {
            help.to_string()
        } else {
            format!("{help} [default: {default}]")
        };
        cmd = cmd.arg(Arg::new(*key).long(flag_name(key)).global(true).value_name("VALUE").help(help));
    }
    for (name, about) in COMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about));
    }
    cmd
}

fn overrides(m: &ArgMatches) -> Vec<(String, String)> {
    KEYS.iter()
        .filter_map(|(key, _, _)| m.get_one::<String>(key).map(|v| (key.to_string(), v.clone())))
        .collect()
}

/// Parses `args`, runs the chosen command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let file = sub.get_one::<String>("config").map(PathBuf::from);
    let result = RunConfig::load(file.as_deref(), &overrides(sub)).and_then(|cfg| {
        let precision = pipeline::precision_from_env()?;
        pipeline::run(name, &cfg, &precision)
    });
    match result {
        Ok((report, path)) => {
            if name == "inspect-model" {
                if let Some(summary) = report.results.get("summary").and_then(|s| s.as_str()) {
                    println!("digest {}", report.results["digest"].as_str().unwrap_or(""));
                    print!("{summary}");
                    if !summary.ends_with('\n') {
                        println!();
                    }
                }
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{name}: report written to {}", path.display());
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
