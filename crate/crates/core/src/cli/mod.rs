//! Command-line front end. Every command takes `--key value` settings,
//! optionally seeded from `--config FILE`, and writes a `resolved.conf`
//! that reproduces the run on its own.

pub mod ablate;
pub mod config;
pub mod eval;
pub mod generate;
pub mod io;
pub mod train;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use crate::baselines::{BASELINE_CONFIG_KEYS, BASELINE_NAMES};
use crate::error::VieError;
use crate::trainer::{CONFIG_KEYS, PRESET_NAMES};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Exit status for a failed command.
pub fn exit_code(e: &VieError) -> i32 {
    match e {
        VieError::Contract(_) | VieError::Parse { .. } | VieError::Io(_) => EXIT_USAGE,
        VieError::Mismatch(_) => EXIT_MISMATCH,
        VieError::Domain(_) | VieError::Training { .. } => EXIT_NUMERIC,
    }
}

fn key_help(groups: &[(&str, &[&str])]) -> String {
    groups.iter().map(|(title, keys)| format!("{title}:\n  {}", keys.join(" "))).collect::<Vec<_>>().join("\n\n")
}

fn generate_help() -> String {
    key_help(&[("Keys", &["out"]), ("Generator keys", &generate::GENERATOR_KEYS)])
}

fn train_help() -> String {
    let models = format!("variant: {}\nbaseline: {}", PRESET_NAMES.join(" "), BASELINE_NAMES.join(" "));
    format!(
        "{models}\n\n{}",
        key_help(&[
            ("Keys", &["data", "train", "valid", "out", "variant", "baseline"]),
            ("Variant keys", &CONFIG_KEYS),
            ("Baseline keys", &BASELINE_CONFIG_KEYS),
            ("Baseline parameters", &["alpha", "gamma", "mode", "w0", "w1"]),
        ])
    )
}

fn eval_help() -> String {
    key_help(&[("Keys", &eval::EVAL_KEYS)])
}

fn ablate_help() -> String {
    let gen: Vec<String> = generate::GENERATOR_KEYS.iter().map(|k| format!("{}{k}", ablate::GEN_PREFIX)).collect();
    let gen: Vec<&str> = gen.iter().map(String::as_str).collect();
    let train: Vec<&str> = CONFIG_KEYS.iter().copied().filter(|k| *k != "seed").collect();
    key_help(&[("Keys", &["data", "out", "presets", "seeds"]), ("Generator keys", &gen), ("Training keys", &train)])
}

/// Settings as `--key value` pairs; `--config FILE` loads a file first.
#[derive(clap::Args, Debug)]
struct Settings {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    settings: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset and split it 6:2:2 into train/valid/test CSVs.
    #[command(after_help = generate_help())]
    Generate(Settings),
    /// Train a variant or a baseline on train.csv with early stopping on valid.csv.
    #[command(after_help = train_help())]
    Train(Settings),
    /// Score a checkpoint on a dataset and write metrics and plot series.
    #[command(after_help = eval_help())]
    Eval(Settings),
    /// Train every preset at several seeds and tabulate test AUC and AUPRC.
    #[command(after_help = ablate_help())]
    Ablate(Settings),
}

#[derive(Parser, Debug)]
#[command(name = "vie", version, about = "Rare-event classification with heavy-tailed latent variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (name, settings, command): (&str, _, fn(&RunConfig) -> crate::Result<()>) = match &cli.command {
        Command::Generate(s) => ("generate", s, generate::cmd_generate),
        Command::Train(s) => ("train", s, train::cmd_train),
        Command::Eval(s) => ("eval", s, eval::cmd_eval),
        Command::Ablate(s) => ("ablate", s, ablate::cmd_ablate),
    };
    if settings.settings.iter().any(|a| a == "--help" || a == "-h") {
        let _ = <Cli as clap::CommandFactory>::command().find_subcommand_mut(name).map(|c| c.print_long_help());
        return EXIT_OK;
    }
    match RunConfig::from_args(&settings.settings).and_then(|c| command(&c)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("vie {name}: {e}");
            let code = exit_code(&e);
            if code == EXIT_USAGE {
                eprintln!("usage: vie {name} [--config FILE] [--KEY VALUE ...]  (see `vie {name} --help`)");
            }
            code
        }
    }
}
