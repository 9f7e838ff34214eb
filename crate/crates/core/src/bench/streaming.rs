//! Trains the click-log pipeline over a generated file and reports peak memory.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::synth::ClickLog;
use crate::dataview::{DataView, ExecContext};
use crate::error::Result;
use crate::io::load_text;
use crate::learners::{LearnerConfig, LinearLearner};
use crate::pipeline::Pipeline;
use crate::transforms::{ColumnPairs, Concat, HashOneHot, MinMaxNormalizer, MissingHandler};

/// Missing-value fill and min-max scaling of the numeric block, hashed one-hot
/// encoding of every categorical column, concatenation into `Features` and a
/// logistic learner.
pub fn click_pipeline(hash_bits: u32, learner: LearnerConfig) -> Result<Pipeline> {
    let cats = ClickLog::categorical_columns();
    let cat_refs: Vec<&str> = cats.iter().map(String::as_str).collect();
    let mut inputs = vec!["Numeric"];
    inputs.extend(&cat_refs);
    Ok(Pipeline::new()
        .append(MissingHandler::new(ColumnPairs::same(&["Numeric"])))
        .append(MinMaxNormalizer::new(ColumnPairs::same(&["Numeric"])))
        .append(HashOneHot::new(ColumnPairs::same(&cat_refs), hash_bits)?)
        .append(Concat::new(&inputs, "Features")?)
        .append(LinearLearner::sgd_logistic(learner)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct StreamingReport {
    pub rows: u64,
    pub file_bytes: u64,
    pub generate_seconds: f64,
    pub train_seconds: f64,
    /// Lines the loader read during training, over all passes.
    pub lines_read: u64,
    /// Process high-water resident set size, when the platform reports it.
    pub peak_rss_bytes: Option<u64>,
}

/// Writes `rows` click-log rows under `dir`, then trains a single-epoch
/// [`click_pipeline`] over the file without caching it.
pub fn run(rows: u64, dir: &Path, ctx: &ExecContext) -> Result<StreamingReport> {
    let path = dir.join("clicks.tsv");
    let started = Instant::now();
    {
        let mut out = BufWriter::new(File::create(&path)?);
        ClickLog::new(1).write(&mut out, rows, 2)?;
        std::io::Write::flush(&mut out)?;
    }
    let generate_seconds = started.elapsed().as_secs_f64();
    let file_bytes = std::fs::metadata(&path)?.len();

    let loader = load_text(&path, ClickLog::loader_config())?;
    let stats = loader.stats().clone();
    let data: Arc<dyn DataView> = Arc::new(loader);
    let learner = LearnerConfig {
        epochs: 1,
        ..LearnerConfig::default()
    };
    let started = Instant::now();
    click_pipeline(18, learner)?.fit(data, ctx)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let _ = std::fs::remove_file(&path);
    Ok(StreamingReport {
        rows,
        file_bytes,
        generate_seconds,
        train_seconds,
        lines_read: stats.lines_read(),
        peak_rss_bytes: super::peak_rss_bytes(),
    })
}
