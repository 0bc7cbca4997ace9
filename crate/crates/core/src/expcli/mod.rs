//! Experiment harness: train at one level, move the network to other levels, evaluate.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compat::{extend_network, ExtensionOptions};
use crate::eqbasis::BasisMode;
use crate::error::{Error, Result};
use crate::netcore::Network;
use crate::training::{derive_seed, mean_loss, train, Dataset, Task, TrainReport};

pub use config::{parse_dims, ArchOverride, ExperimentConfig, ModeSelect};

pub const CSV_HEADER: [&str; 7] = ["task", "mode", "run", "dimension", "metric", "value", "wall_ms"];

/// Seed streams, so that training data, initialization and test data never share a draw.
const STREAM_TRAIN_DATA: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_TEST_DATA: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: Task,
    pub mode: BasisMode,
    pub run: usize,
    pub dimension: usize,
    pub metric: String,
    pub value: f64,
    pub wall_ms: f64,
}

/// A dimension at which extension or evaluation failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimFailure {
    pub dimension: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub records: Vec<ResultRecord>,
    pub failures: Vec<DimFailure>,
}

/// Mean task metric of `net` on fresh test data at each level in `dims`.
pub fn evaluate_across_dims(
    net: &Network,
    task: Task,
    run: usize,
    dims: &[usize],
    samples: usize,
    seed: u64,
) -> Evaluation {
    let mut out = Evaluation::default();
    for &n in dims {
        let start = Instant::now();
        let value = (|| -> Result<f64> {
            let moved;
            let at_n = if n == net.level() {
                net
            } else {
                moved = extend_network(net, n, &ExtensionOptions::default())?;
                &moved
            };
            let test = Dataset::generate(task, n, samples, derive_seed(seed, &[STREAM_TEST_DATA, run as u64, n as u64]))?;
            mean_loss(at_n, &test.inputs, &test.targets)
        })();
        match value {
            Ok(value) => out.records.push(ResultRecord {
                task,
                mode: net.spec().mode,
                run,
                dimension: n,
                metric: task.metric().into(),
                value,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            }),
            Err(e) => {
                log::warn!("{task} at dimension {n}: {e}");
                out.failures.push(DimFailure {
                    dimension: n,
                    error: e.to_string(),
                });
            }
        }
    }
    out
}

/// Appends records to a CSV file, writing the header only into an empty file.
pub struct CsvSink {
    writer: csv::Writer<File>,
}

impl CsvSink {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let empty = file.metadata()?.len() == 0;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if empty {
            writer.write_record(CSV_HEADER)?;
            writer.flush()?;
        }
        Ok(Self { writer })
    }

    pub fn write(&mut self, r: &ResultRecord) -> Result<()> {
        self.writer.write_record([
            r.task.name().to_string(),
            r.mode.to_string(),
            r.run.to_string(),
            r.dimension.to_string(),
            r.metric.clone(),
            format!("{:e}", r.value),
            format!("{:.3}", r.wall_ms),
        ])?;
        self.writer.flush()?;
        Ok(())
    }
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let bad = |what: &str| Error::InvalidConfig(format!("bad {what} in {}: {row:?}", path.display()));
        out.push(ResultRecord {
            task: field(0).parse()?,
            mode: match field(1) {
                "free" => BasisMode::Free,
                "compatible" => BasisMode::Compatible,
                _ => return Err(bad("mode")),
            },
            run: field(2).parse().map_err(|_| bad("run"))?,
            dimension: field(3).parse().map_err(|_| bad("dimension"))?,
            metric: field(4).into(),
            value: field(5).parse().map_err(|_| bad("value"))?,
            wall_ms: field(6).parse().map_err(|_| bad("wall_ms"))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: Task,
    pub mode: BasisMode,
    pub dimension: usize,
    pub metric: String,
    pub runs: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Min, mean and max over runs for every (task, mode, dimension, metric).
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, usize, String), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.task.name().into(), r.mode.to_string(), r.dimension, r.metric.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let vals: Vec<f64> = rs.iter().map(|r| r.value).collect();
            SummaryRow {
                task: rs[0].task,
                mode: rs[0].mode,
                dimension: rs[0].dimension,
                metric: rs[0].metric.clone(),
                runs: vals.len(),
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Long-format rows `task,mode,dimension,metric,stat,value` for external plotting.
pub fn write_plot_data(summary: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["task", "mode", "dimension", "metric", "stat", "value"])?;
    for s in summary {
        for (stat, v) in [("min", s.min), ("mean", s.mean), ("max", s.max)] {
            w.write_record([
                s.task.name().to_string(),
                s.mode.to_string(),
                s.dimension.to_string(),
                s.metric.clone(),
                stat.to_string(),
                format!("{v:e}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedRun {
    pub mode: BasisMode,
    pub run: usize,
    pub model: PathBuf,
    pub report: TrainReport,
    pub train_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub runs: Vec<TrainedRun>,
    pub records: Vec<ResultRecord>,
    pub failures: Vec<(BasisMode, usize, DimFailure)>,
    pub summary: Vec<SummaryRow>,
}

pub fn results_csv(dir: &Path) -> PathBuf {
    dir.join("results.csv")
}

pub fn summary_json(dir: &Path) -> PathBuf {
    dir.join("summary.json")
}

/// Stage 1 (train at `n0`) and stage 2 (move to each dimension and evaluate) for every
/// requested mode and run. Records are flushed to `results.csv` as they are produced.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let task = config.task;
    let n0 = config.level();
    fs::create_dir_all(&config.output_dir)?;
    let mut sink = CsvSink::open(&results_csv(&config.output_dir))?;
    let mut out = ExperimentOutput {
        config: config.clone(),
        runs: Vec::new(),
        records: Vec::new(),
        failures: Vec::new(),
        summary: Vec::new(),
    };
    let result = (|| -> Result<()> {
        for mode in config.mode.modes() {
            let spec = config.network_spec(mode)?;
            for run in 0..config.runs {
                let stage = format!("train {task} {mode} run {run}");
                log::info!("{stage} at level {n0}");
                let streams = |s: u64| derive_seed(config.seed(), &[s, run as u64, n0 as u64]);
                let data = Dataset::generate(task, n0, config.train_samples, streams(STREAM_TRAIN_DATA))
                    .map_err(|e| e.in_stage(&stage))?;
                let mut hp = config.hyperparams.clone();
                hp.seed = streams(STREAM_INIT);
                let start = Instant::now();
                let (net, report) = train(&spec, &data, &hp).map_err(|e| e.in_stage(&stage))?;
                let net = net.with_task(task);
                let train_ms = start.elapsed().as_secs_f64() * 1e3;
                log::info!("{stage}: validation loss {:.3e} after {} epochs", report.val_loss, report.epochs);
                let model = config.output_dir.join(format!("{task}_{mode}_run{run}.json"));
                net.save(&model).map_err(|e| e.in_stage(&stage))?;
                out.runs.push(TrainedRun {
                    mode,
                    run,
                    model,
                    report,
                    train_ms,
                });
                let eval = evaluate_across_dims(&net, task, run, &config.eval_dims(), config.test_samples, config.seed());
                for r in &eval.records {
                    sink.write(r)?;
                }
                out.records.extend(eval.records);
                out.failures
                    .extend(eval.failures.into_iter().map(|f| (mode, run, f)));
            }
        }
        Ok(())
    })();
    out.summary = summarize(&out.records);
    fs::write(summary_json(&config.output_dir), serde_json::to_string_pretty(&out)?)?;
    result.map(|_| out)
}
