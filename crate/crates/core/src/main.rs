use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use anydim::compat::{compatible_bias_basis, compatible_map_basis, extend_network, ExtensionOptions};
use anydim::conseq::{degrees, SeqExpr};
use anydim::eqbasis::{equivariant_map_basis, invariant_basis, BasisMode};
use anydim::expcli::{
    evaluate_across_dims, parse_dims, read_records, run_experiment, summarize, write_plot_data, CsvSink,
    ExperimentConfig,
};
use anydim::groupseq::GroupFamily;
use anydim::netcore::Network;
use anydim::training::Task;
use anydim::{Error, Result};

#[derive(Parser)]
#[command(name = "anydim", version, about = "Train equivariant networks at one dimension, run them at any other")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Free,
    Compatible,
}

impl From<ModeArg> for BasisMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Free => BasisMode::Free,
            ModeArg::Compatible => BasisMode::Compatible,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate as described by a JSON experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute a weight (or, with --bias, bias) basis and print its size and checksum.
    Basis {
        #[arg(long = "in", default_value = "S")]
        input: String,
        #[arg(long)]
        out: String,
        #[arg(long, default_value = "Sn")]
        group: String,
        #[arg(long)]
        level: usize,
        #[arg(long, value_enum, default_value = "free")]
        mode: ModeArg,
        /// Invariant vectors of --out (biases) instead of maps --in -> --out.
        #[arg(long)]
        bias: bool,
        /// Write the basis as JSON.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Move a saved network to another level.
    Extend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        to: usize,
        /// Defaults to `<model>_n<to>.json` next to the input.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a saved network on fresh data at several levels.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// `2..15` (inclusive), `2..=15` or `3,5,7`.
        #[arg(long)]
        dims: String,
        /// Needed only when the model file does not record its task.
        #[arg(long)]
        task: Option<String>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append records to this CSV instead of printing them.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Turn a results CSV into long-format min/mean/max rows for plotting.
    PlotData {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let out = run_experiment(&cfg)?;
            for row in &out.summary {
                println!(
                    "{} {} n={:<3} {} mean={:.3e} min={:.3e} max={:.3e}",
                    row.task, row.mode, row.dimension, row.metric, row.mean, row.min, row.max
                );
            }
            for (mode, run, f) in &out.failures {
                eprintln!("{mode} run {run} n={}: {}", f.dimension, f.error);
            }
            Ok(())
        }
        Command::Basis {
            input,
            out,
            group,
            level,
            mode,
            bias,
            save,
        } => {
            let family: GroupFamily = group.parse()?;
            let input: SeqExpr = input.parse()?;
            let output: SeqExpr = out.parse()?;
            let basis = match (BasisMode::from(mode), bias) {
                (BasisMode::Free, false) => equivariant_map_basis(&input, &output, family, level)?,
                (BasisMode::Free, true) => invariant_basis(&output, family, level)?,
                (BasisMode::Compatible, false) => compatible_map_basis(&input, &output, family, level)?,
                (BasisMode::Compatible, true) => compatible_bias_basis(&output, family, level)?,
            };
            let space = if bias { output.clone() } else { SeqExpr::tensor([input, output]) };
            let deg = degrees(&space, family).ok();
            if let Some(path) = &save {
                basis.save(path)?;
            }
            println!(
                "{}",
                json!({
                    "kind": basis.kind().to_string(),
                    "family": family.name(),
                    "level": level,
                    "mode": basis.mode().to_string(),
                    "dimension": basis.len(),
                    "degrees": deg,
                    "checksum": basis.checksum(),
                })
            );
            Ok(())
        }
        Command::Extend { model, to, output } => {
            let net = Network::load(&model)?;
            let moved = extend_network(&net, to, &ExtensionOptions::default())?;
            let output = output.unwrap_or_else(|| sibling(&model, to));
            moved.save(&output)?;
            println!(
                "{}",
                json!({
                    "from": net.level(),
                    "to": to,
                    "unique": moved.is_unique(),
                    "output": output,
                })
            );
            Ok(())
        }
        Command::Eval {
            model,
            dims,
            task,
            samples,
            seed,
            csv,
        } => {
            let net = Network::load(&model)?;
            let task: Task = match (task, net.task()) {
                (Some(t), _) => t.parse()?,
                (None, Some(t)) => t,
                (None, None) => {
                    return Err(Error::InvalidConfig(
                        "the model does not record its task; pass --task".into(),
                    ))
                }
            };
            let dims = parse_dims(&dims)?;
            let eval = evaluate_across_dims(&net, task, 0, &dims, samples, seed);
            match csv {
                Some(path) => {
                    let mut sink = CsvSink::open(&path)?;
                    for r in &eval.records {
                        sink.write(r)?;
                    }
                }
                None => {
                    println!("dimension,metric,value");
                    for r in &eval.records {
                        println!("{},{},{:e}", r.dimension, r.metric, r.value);
                    }
                }
            }
            for f in &eval.failures {
                eprintln!("n={}: {}", f.dimension, f.error);
            }
            if eval.records.is_empty() && !eval.failures.is_empty() {
                return Err(Error::Numerical("evaluation failed at every dimension".into()));
            }
            Ok(())
        }
        Command::PlotData { results, output } => {
            let summary = summarize(&read_records(&results)?);
            let output = output.unwrap_or_else(|| results.with_file_name("plot_data.csv"));
            write_plot_data(&summary, &output)?;
            println!("{}", output.display());
            Ok(())
        }
    }
}

fn sibling(model: &Path, to: usize) -> PathBuf {
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    model.with_file_name(format!("{stem}_n{to}.json"))
}
