//! Scan throughput of a composed transform chain versus a row interpreter that looks
//! up and type-checks every value on every access.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataview::{DataView, ExecContext, InMemoryView};
use crate::error::{Error, Result};
use crate::pipeline::{Estimator, Pipeline};
use crate::transforms::{ColumnPairs, MinMaxNormalizer, MissingHandler};
use crate::types::ColumnType;
use crate::value::Value;

const COLUMNS: [&str; 2] = ["A", "B"];
const STAGES: usize = 10;
const FIT_ROWS: usize = 10_000;
const MISSING_RATE: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct GettersReport {
    pub rows: usize,
    pub stages: usize,
    pub composed_seconds: f64,
    pub baseline_seconds: f64,
    /// Baseline time over composed time.
    pub ratio: f64,
    pub composed_checksum: f64,
    pub baseline_checksum: f64,
}

fn source(rows: usize, seed: u64) -> (Vec<f32>, Vec<f32>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut col = |scale: f32| -> Vec<f32> {
        (0..rows)
            .map(|_| {
                if r.gen_bool(MISSING_RATE) {
                    f32::NAN
                } else {
                    r.gen::<f32>() * scale - 1.0
                }
            })
            .collect()
    };
    let a = col(4.0);
    let b = col(100.0);
    (a, b)
}

fn view(a: &[f32], b: &[f32]) -> Result<Arc<dyn DataView>> {
    Ok(InMemoryView::builder()
        .column(COLUMNS[0], ColumnType::R4, a.to_vec())
        .column(COLUMNS[1], ColumnType::R4, b.to_vec())
        .build()?
        .into_arc())
}

/// Alternating missing-value and min-max stages over both columns, each hiding its input.
fn chain() -> Pipeline {
    let mut p = Pipeline::new();
    for i in 0..STAGES {
        let stage: Arc<dyn Estimator> = if i % 2 == 0 {
            Arc::new(MissingHandler::new(ColumnPairs::same(&COLUMNS)))
        } else {
            Arc::new(MinMaxNormalizer::new(ColumnPairs::same(&COLUMNS)))
        };
        p.push(stage);
    }
    p
}

type Row = HashMap<String, Value>;
type DynStage = Box<dyn Fn(&mut Row) -> Result<()>>;

fn read(row: &Row, col: &str) -> Result<f32> {
    match row.get(col) {
        Some(Value::R4(x)) => Ok(*x),
        Some(v) => Err(Error::schema(format!("column '{col}' holds {}, expected R4", v.type_name()))),
        None => Err(Error::schema(format!("no column '{col}'"))),
    }
}

fn write(row: &mut Row, col: &str, x: f32) -> Result<()> {
    match row.get_mut(col) {
        Some(slot) => {
            *slot = Value::R4(x);
            Ok(())
        }
        None => Err(Error::schema(format!("no column '{col}'"))),
    }
}

/// The same chain as dynamically dispatched closures over a name-keyed row, fitted by
/// running the interpreter itself over the fit sample.
fn baseline_chain(a: &[f32], b: &[f32]) -> Result<Vec<DynStage>> {
    let mut sample: Vec<Row> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| [(COLUMNS[0].to_string(), Value::R4(x)), (COLUMNS[1].to_string(), Value::R4(y))].into())
        .collect();
    let mut stages: Vec<DynStage> = Vec::new();
    for i in 0..STAGES {
        for col in COLUMNS {
            let xs: Vec<f64> = sample
                .iter()
                .map(|r| read(r, col).map(f64::from))
                .filter(|x| x.as_ref().map_or(true, |x| !x.is_nan()))
                .collect::<Result<_>>()?;
            let stage: DynStage = if i % 2 == 0 {
                let mean = if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
                Box::new(move |row: &mut Row| {
                    let x = read(row, col)?;
                    write(row, col, if x.is_nan() { mean as f32 } else { x })
                })
            } else {
                let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
                let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let scale = if max > min { max - min } else { 0.0 };
                Box::new(move |row: &mut Row| {
                    let x = f64::from(read(row, col)?);
                    let y = if x.is_nan() {
                        x
                    } else if scale == 0.0 {
                        0.0
                    } else {
                        (x - min) / scale
                    };
                    write(row, col, y as f32)
                })
            };
            for r in &mut sample {
                stage(r)?;
            }
            stages.push(stage);
        }
    }
    Ok(stages)
}

fn scan_composed(view: &Arc<dyn DataView>, pipeline: &Pipeline, ctx: &ExecContext) -> Result<(f64, f64)> {
    let fit_rows = view.row_count().unwrap_or(0).min(FIT_ROWS as u64) as usize;
    let (a, b) = sample_of(&**view, fit_rows)?;
    let model = pipeline.fit(self::view(&a, &b)?, ctx)?;

    let started = Instant::now();
    let out = model.transform(view.clone())?;
    let cols: Vec<usize> = COLUMNS.iter().map(|c| out.schema().require(c)).collect::<Result<_>>()?;
    let mut cur = out.cursor(&cols)?;
    let mut ga = cur.get_getter::<f32>(cols[0])?;
    let mut gb = cur.get_getter::<f32>(cols[1])?;
    let (mut x, mut y) = (0f32, 0f32);
    let mut sum = 0f64;
    while cur.move_next()? {
        ga.get(&mut x)?;
        gb.get(&mut y)?;
        sum += f64::from(x) + f64::from(y);
    }
    Ok((started.elapsed().as_secs_f64(), sum))
}

fn sample_of(view: &dyn DataView, rows: usize) -> Result<(Vec<f32>, Vec<f32>)> {
    let mut cur = view.cursor(&[0, 1])?;
    let mut ga = cur.get_getter::<f32>(0)?;
    let mut gb = cur.get_getter::<f32>(1)?;
    let (mut a, mut b) = (Vec::with_capacity(rows), Vec::with_capacity(rows));
    while a.len() < rows && cur.move_next()? {
        let (mut x, mut y) = (0f32, 0f32);
        ga.get(&mut x)?;
        gb.get(&mut y)?;
        a.push(x);
        b.push(y);
    }
    Ok((a, b))
}

fn scan_baseline(a: &[f32], b: &[f32]) -> Result<(f64, f64)> {
    let fit = a.len().min(FIT_ROWS);
    let stages = baseline_chain(&a[..fit], &b[..fit])?;
    let started = Instant::now();
    let mut row: Row = COLUMNS.iter().map(|c| (c.to_string(), Value::R4(0.0))).collect();
    let mut sum = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        write(&mut row, COLUMNS[0], x)?;
        write(&mut row, COLUMNS[1], y)?;
        for stage in &stages {
            stage(&mut row)?;
        }
        sum += f64::from(read(&row, COLUMNS[0])?) + f64::from(read(&row, COLUMNS[1])?);
    }
    Ok((started.elapsed().as_secs_f64(), sum))
}

/// Scans `rows` synthetic rows through a ten-stage chain both ways, keeping the best of
/// `repeats` timings for each. Checksums let callers confirm both did the same work.
pub fn run(rows: usize, repeats: usize, seed: u64) -> Result<GettersReport> {
    if rows == 0 || repeats == 0 {
        return Err(Error::invalid_argument("rows and repeats must be positive"));
    }
    let (a, b) = source(rows, seed);
    let data = view(&a, &b)?;
    let pipeline = chain();
    let ctx = ExecContext::with_threads(1);
    let mut composed = (f64::INFINITY, 0.0);
    let mut baseline = (f64::INFINITY, 0.0);
    for _ in 0..repeats {
        let c = scan_composed(&data, &pipeline, &ctx)?;
        if c.0 < composed.0 {
            composed = c;
        }
        let d = scan_baseline(&a, &b)?;
        if d.0 < baseline.0 {
            baseline = d;
        }
    }
    Ok(GettersReport {
        rows,
        stages: STAGES,
        composed_seconds: composed.0,
        baseline_seconds: baseline.0,
        ratio: baseline.0 / composed.0,
        composed_checksum: composed.1,
        baseline_checksum: baseline.1,
    })
}
