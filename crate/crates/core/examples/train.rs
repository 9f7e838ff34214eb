//! Fits a small logistic pipeline on a headered TSV file and saves the model.
//!
//! `cargo run -p dvml --example train -- TRAIN.tsv MODEL.zip`

use std::sync::Arc;

use dvml::io::{infer_schema, load_text};
use dvml::learners::{LearnerConfig, LinearLearner};
use dvml::pipeline::Pipeline;
use dvml::transforms::{ColumnPairs, Concat, MinMaxNormalizer, MissingHandler};
use dvml::{ExecContext, Result};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let (Some(train), Some(out)) = (args.next(), args.next()) else {
        eprintln!("usage: train TRAIN.tsv MODEL.zip");
        std::process::exit(2);
    };
    let config = infer_schema(&train, '\t', 1000)?;
    let data = Arc::new(load_text(&train, config)?);
    let model = Pipeline::new()
        .append(MissingHandler::new(ColumnPairs::same(&["X1", "X2"])))
        .append(MinMaxNormalizer::new(ColumnPairs::same(&["X1", "X2"])))
        .append(Concat::new(&["X1", "X2"], "Features")?)
        .append(LinearLearner::sgd_logistic(LearnerConfig::default())?)
        .fit(data, &ExecContext::with_threads(4))?;
    model.save(&out)?;
    println!("saved {} stages to {out}", model.stages().len());
    Ok(())
}
