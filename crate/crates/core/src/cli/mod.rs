//! The `emograph` command line.
//!
//! Exit codes: 0 success, 1 internal or numeric failure, 2 usage or I/O error.
//! A malformed input file counts as I/O, even when the fault is a width mismatch.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::analytics::Grouping;
use crate::error::{Error, Result};
use crate::training::{with_pool, AblationMode};

pub use commands::{
    ablation_table, cmd_ablate, cmd_concepts, cmd_evaluate, cmd_explain, cmd_gradcheck, cmd_synth,
    cmd_train, load_samples, render_concepts, render_gradcheck, AblationRow, AblationTable,
    TrainReport, SWEEP_LAYERS, SWEEP_N,
};
pub use config::{synth_config, CommonArgs, FileConfig, RunConfig, SplitPart, Sweep};

#[derive(Parser, Debug)]
#[command(
    name = "emograph",
    version,
    about = "Emotion classification by reasoning over detected objects"
)]
pub struct Cli {
    /// TOML file with default values for any flag (flags take precedence)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model; writes checkpoint.json, metrics.jsonl and evaluation.json
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a checkpoint
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Which part of the seeded split to evaluate
        #[arg(long = "on", value_enum, default_value_t = SplitPart::All)]
        part: SplitPart,
    },
    /// Train every ablation row (or a node-count / depth sweep) and tabulate accuracies
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        sweep: Option<Sweep>,
    },
    /// Compare analytic and finite-difference gradients on a tiny built-in instance
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Attention-ranked objects and the masked affinity for one image
    Explain {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        image_id: String,
    },
    /// Per-category emotional concept tables
    Concepts {
        #[command(flatten)]
        common: CommonArgs,
        /// Concepts kept per category [default: 10]
        #[arg(long)]
        top_k: Option<usize>,
        /// Group images by predicted instead of gold category
        #[arg(long)]
        group_by_predicted: bool,
    },
    /// Generate a synthetic dataset with a planted labelling rule
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        samples: Option<usize>,
        /// object-pair or scene-cluster [default: object-pair]
        #[arg(long)]
        rule: Option<String>,
        /// Feature noise standard deviation
        #[arg(long)]
        noise: Option<f64>,
        /// Probability that the scene agrees with the label
        #[arg(long)]
        scene_agreement: Option<f64>,
    },
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) | Error::Shape { .. } => 1,
        Error::AtLine { .. } => 2,
        _ => 2,
    }
}

fn execute(cli: Cli) -> Result<String> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Train { common } => {
            let cfg = RunConfig::resolve(&common, &file)?;
            let r = with_pool(cfg.train.threads, || cmd_train(&cfg))??;
            let pct = |e: &Option<crate::training::Evaluation>| {
                e.as_ref()
                    .map_or("-".into(), |e| format!("{:.2}%", 100.0 * e.accuracy))
            };
            Ok(format!(
                "best epoch {}\ntrain {:.2}%  val {}  test {}\ncheckpoint {}\nmetrics {}\n",
                r.best_epoch.map_or("-".into(), |e| e.to_string()),
                100.0 * r.train.accuracy,
                pct(&r.val),
                pct(&r.test),
                r.checkpoint.display(),
                r.metrics.display()
            ))
        }
        Command::Evaluate { common, part } => {
            let cfg = RunConfig::resolve(&common, &file)?;
            let ev = with_pool(cfg.train.threads, || cmd_evaluate(&cfg, part))??;
            Ok(format!("{}\n", serde_json::to_string_pretty(&ev)?))
        }
        Command::Ablate { common, sweep } => {
            let cfg = RunConfig::resolve(&common, &file)?;
            let sweep = sweep.or(file.sweep);
            let table = with_pool(cfg.train.threads, || cmd_ablate(&cfg, sweep))??;
            Ok(table.to_tsv())
        }
        Command::Gradcheck { seed, mode } => {
            let mode = match mode.or(file.mode.clone()) {
                Some(m) => AblationMode::from_name(&m)?,
                None => AblationMode::FULL,
            };
            let reports = cmd_gradcheck(seed.or(file.seed).unwrap_or(0), mode)?;
            let text = render_gradcheck(&reports);
            let failed: Vec<&str> = reports
                .iter()
                .filter(|r| !r.passed)
                .map(|r| r.group.as_str())
                .collect();
            if failed.is_empty() {
                Ok(text)
            } else {
                print!("{text}");
                Err(Error::Numeric(format!(
                    "gradient check failed for {}",
                    failed.join(", ")
                )))
            }
        }
        Command::Explain { common, image_id } => {
            let cfg = RunConfig::resolve(&common, &file)?;
            cmd_explain(&cfg, &image_id)
        }
        Command::Concepts {
            common,
            top_k,
            group_by_predicted,
        } => {
            let cfg = RunConfig::resolve(&common, &file)?;
            let grouping = if group_by_predicted || file.group_by_predicted.unwrap_or(false) {
                Grouping::Predicted
            } else {
                Grouping::Gold
            };
            let top_k = top_k.or(file.top_k).unwrap_or(10);
            let rows = with_pool(cfg.train.threads, || cmd_concepts(&cfg, top_k, grouping))??;
            Ok(render_concepts(&rows))
        }
        Command::Synth {
            common,
            samples,
            rule,
            noise,
            scene_agreement,
        } => {
            let sc = synth_config(&common, &file, samples, noise, scene_agreement);
            let rule = match rule {
                Some(r) => r.parse()?,
                None => file
                    .rule
                    .unwrap_or(crate::ingestion::PlantedRule::ObjectPair),
            };
            let out = common
                .out
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("emograph-out"));
            let seed = common.seed.or(file.seed).unwrap_or(0);
            let paths = cmd_synth(&out, &sc, seed, rule)?;
            Ok(paths.iter().map(|p| format!("{}\n", p.display())).collect())
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// prints its output. Errors go to standard error.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run() -> ExitCode {
    run_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_valid() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_documented_flag() {
        let mut cmd = Cli::command();
        cmd.build();
        let help = cmd
            .find_subcommand_mut("ablate")
            .unwrap()
            .render_long_help()
            .to_string();
        for flag in [
            "--detections",
            "--embeddings",
            "--scenes",
            "--out",
            "--seed",
            "--n",
            "--d1",
            "--d2",
            "--classes",
            "--layers",
            "--tau",
            "--lr",
            "--wd",
            "--epochs",
            "--batch",
            "--mode",
            "--sweep",
            "--config",
        ] {
            assert!(help.contains(flag), "{flag}");
        }
        let help = cmd
            .find_subcommand_mut("concepts")
            .unwrap()
            .render_long_help()
            .to_string();
        assert!(help.contains("--top-k"));
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(
            run_from(["emograph", "train", "--learning-rate", "1"]),
            ExitCode::from(2)
        );
    }

    #[test]
    fn exit_code_classes() {
        assert_eq!(exit_code(&Error::Numeric("x".into())), 1);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Empty("x".into())), 2);
        let bad_line = Error::AtLine {
            line: 3,
            source: Box::new(Error::shape("scene", (4, 1), (2, 1))),
        };
        assert_eq!(exit_code(&bad_line), 2);
    }
}
