//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any
//! fails. Runs without the libtest harness so criteria execute one at a time (timings
//! and peak memory are not disturbed by neighbours) and so the counting allocator can
//! be installed. Pass criterion numbers as arguments to run a subset.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use dvml::bench::alloc::{thread_allocations, CountingAlloc};
use dvml::bench::streaming::click_pipeline;
use dvml::bench::synth::{ClickLog, LinearTask, ReviewCorpus};
use dvml::dataview::{InMemoryView, RowCursor};
use dvml::evaluate::{auc, evaluate_binary, evaluate_regression, EvalColumns};
use dvml::io::{load_text, LoaderColumn, TextLoaderConfig};
use dvml::learners::{LearnerConfig, LinearLearner, LinearState, LogisticState};
use dvml::pipeline::{Estimator, Pipeline, PipelineModel, PredictionEngine};
use dvml::transforms::{
    ColumnPairs, Concat, FeaturizeText, HashOneHot, L2Normalize, MinMaxNormalizer, MissingHandler, NGramHash,
    NGramMode, NGramSpec, NormalizeText, Tokenize,
};
use dvml::{ColumnType, DataView, ExecContext, ItemKind, Value, VBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

struct Fail(String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(e.to_string())
    }
}

type Outcome = Result<String, Fail>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(Fail(format!($($msg)+)));
        }
    };
}

const DVML: &str = env!("CARGO_BIN_EXE_dvml");

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Fail> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn loader(path: &Path, config: TextLoaderConfig) -> Result<Arc<dyn DataView>, Fail> {
    Ok(Arc::new(load_text(path, config)?))
}

fn test_auc(model: &PipelineModel, test: Arc<dyn DataView>) -> Result<f64, Fail> {
    let scored = model.transform(test)?;
    let report = evaluate_binary(&*scored, &EvalColumns::default(), &ExecContext::default())?;
    report.metric("auc").ok_or_else(|| Fail("test set has a single class".into()))
}

/// Every row of every column, read through a cursor opened by `ctx`.
fn scan(view: &dyn DataView, ctx: &ExecContext) -> Result<Vec<Vec<Value>>, Fail> {
    let cols: Vec<usize> = (0..view.schema().len()).collect();
    let mut cur = ctx.open_columns(view, &cols)?;
    let mut getters = cols.iter().map(|&c| cur.get_getter_dyn(c)).collect::<dvml::Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    while cur.move_next()? {
        let mut row: Vec<Value> = view.schema().columns().iter().map(|c| Value::missing_for(&c.ty)).collect();
        for (g, v) in getters.iter_mut().zip(&mut row) {
            g.fill_value(v)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn rows_bit_eq(a: &[Vec<Value>], b: &[Vec<Value>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(u, v)| u.bit_eq(v)))
}

// ---------------------------------------------------------------------------------
// 1. laziness

fn laziness() -> Outcome {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("clicks.tsv");
    write_file(&path, |w| ClickLog::new(5).write(w, 2_000, 6))?;

    let source = load_text(&path, ClickLog::loader_config())?;
    let stats = source.stats().clone();
    let data: Arc<dyn DataView> = Arc::new(source);
    let pipeline = click_pipeline(12, LearnerConfig { epochs: 1, ..Default::default() })?;
    ensure!(pipeline.len() == 5, "pipeline has {} stages", pipeline.len());
    pipeline.validate(data.schema())?;
    ensure!(
        stats.lines_read() == 0 && stats.bytes_read() == 0,
        "building and validating read {} lines",
        stats.lines_read()
    );
    let model = pipeline.fit(data, &ExecContext::default())?;
    let after_fit = stats.lines_read();
    ensure!(after_fit > 0, "fit read nothing");

    let fresh = load_text(&path, ClickLog::loader_config())?;
    let fresh_stats = fresh.stats().clone();
    let scored = model.transform(Arc::new(fresh))?;
    let mut cur = scored.cursor(&model.prediction_columns())?;
    ensure!(fresh_stats.lines_read() == 0, "applying the model read {} lines", fresh_stats.lines_read());
    ensure!(cur.move_next()?, "scored view is empty");
    ensure!(fresh_stats.lines_read() > 0, "advancing a cursor read nothing");
    Ok(format!("0 lines read before fit, {after_fit} after"))
}

// ---------------------------------------------------------------------------------
// 2. streaming memory

fn bench_streaming(rows: u64) -> Result<u64, Fail> {
    let out = Command::new(DVML)
        .args(["bench", "--suite", "streaming", "--rows", &rows.to_string()])
        .output()?;
    ensure!(
        out.status.success(),
        "bench exited with {}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Json = serde_json::from_slice(&out.stdout)?;
    report["peak_rss_bytes"]
        .as_u64()
        .ok_or_else(|| Fail(format!("no peak memory reported: {report}")))
}

fn streaming_memory() -> Outcome {
    const MIB: f64 = 1024.0 * 1024.0;
    let small = bench_streaming(500_000)?;
    let large = bench_streaming(5_000_000)?;
    let ratio = large as f64 / small as f64;
    let detail = format!(
        "peak {:.1} MiB at 5M rows, {:.1} MiB at 500k, ratio {ratio:.3}",
        large as f64 / MIB,
        small as f64 / MIB
    );
    ensure!((large as f64) < 256.0 * MIB, "{detail}");
    ensure!(ratio < 1.1, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------------
// 3. parallel determinism

fn review_pipeline(seed: Option<u64>, epochs: u32) -> Result<Pipeline, Fail> {
    Ok(Pipeline::new()
        .append(FeaturizeText::new(
            ColumnPairs::renamed(&[("Text", "Features")]),
            NGramSpec::new(&[1, 2], &[1, 2, 3], 18)?,
        )?)
        .append(LinearLearner::averaged_perceptron(LearnerConfig {
            epochs,
            learning_rate: 1.0,
            shuffle_seed: seed,
            ..Default::default()
        })?))
}

fn parallel_determinism() -> Outcome {
    let dir = tempfile::tempdir()?;
    let clicks = dir.path().join("clicks.tsv");
    let reviews = dir.path().join("reviews.tsv");
    write_file(&clicks, |w| ClickLog::new(7).write(w, 20_000, 8))?;
    write_file(&reviews, |w| ReviewCorpus::new(7).write(w, 4_000, 8))?;
    let click_data = loader(&clicks, ClickLog::loader_config())?;
    let review_data = loader(&reviews, ReviewCorpus::loader_config())?;

    let serial = ExecContext::with_threads(1);
    let click_model = click_pipeline(14, LearnerConfig { epochs: 2, ..Default::default() })?.fit(click_data.clone(), &serial)?;
    let views: Vec<(&str, Arc<dyn DataView>)> = vec![
        ("click loader", click_data.clone()),
        ("scored clicks", click_model.transform(click_data.clone())?),
        ("review loader", review_data.clone()),
    ];
    let mut scans = 0;
    for (name, view) in &views {
        let expected = scan(&**view, &serial)?;
        for n in [1, 2, 4, 8] {
            for batch in [1, 97, 4096] {
                let ctx = ExecContext { threads: n, batch_size: batch };
                ensure!(rows_bit_eq(&scan(&**view, &ctx)?, &expected), "{name}: scan with {n} threads, batch {batch} differs");
                scans += 1;
            }
        }
    }

    let mut trains = 0;
    let fits: Vec<(&str, Box<dyn Fn() -> Result<Pipeline, Fail>>, Arc<dyn DataView>)> = vec![
        (
            "click",
            Box::new(|| Ok(click_pipeline(14, LearnerConfig { epochs: 2, shuffle_seed: Some(3), ..Default::default() })?)),
            click_data,
        ),
        ("review", Box::new(|| review_pipeline(Some(5), 3)), review_data),
    ];
    for (name, build, data) in &fits {
        let expected = build()?.fit(data.clone(), &serial)?.to_bytes()?;
        for n in [2, 4, 8] {
            let bytes = build()?.fit(data.clone(), &ExecContext::with_threads(n))?.to_bytes()?;
            ensure!(bytes == expected, "{name}: archive trained with {n} threads differs");
            trains += 1;
        }
    }
    Ok(format!("{scans} scans and {trains} training runs identical to serial"))
}

// ---------------------------------------------------------------------------------
// 4. getter performance

fn getter_performance() -> Outcome {
    let r = dvml::bench::getters::run(1_000_000, 3, 7)?;
    ensure!(r.composed_checksum == r.baseline_checksum, "checksums differ: {r:?}");
    let detail = format!(
        "ratio {:.1}x ({:.3}s composed, {:.3}s baseline, {} stages, {} rows)",
        r.ratio, r.composed_seconds, r.baseline_seconds, r.stages, r.rows
    );
    ensure!(r.ratio >= 2.0, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------------
// 5. allocation bound

/// Allocations made while reading every remaining row of `cur`, after `warm` rows have
/// been read to size the caller's buffers.
fn steady_allocations(
    cur: &mut dyn RowCursor,
    warm: usize,
    mut read: impl FnMut() -> dvml::Result<()>,
) -> Result<(u64, u64), Fail> {
    for _ in 0..warm {
        ensure!(cur.move_next()?, "ran out of rows while warming up");
        read()?;
    }
    let before = thread_allocations();
    let mut rows = 0;
    while cur.move_next()? {
        read()?;
        rows += 1;
    }
    Ok((thread_allocations() - before, rows))
}

fn allocation_bound() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    let n = 20_000;
    let mut report = Vec::new();
    let mut total = 0;

    // primitive columns in memory
    let view = InMemoryView::builder()
        .column("I", ColumnType::I4, (0..n).map(|i| i).collect())
        .column("R", ColumnType::R4, (0..n).map(|_| r.gen::<f32>()).collect())
        .column("D", ColumnType::R8, (0..n).map(|_| r.gen::<f64>()).collect())
        .column("B", ColumnType::BOOL, (0..n).map(|_| r.gen::<bool>()).collect())
        .build()?;
    {
        let mut cur = (&view as &dyn DataView).cursor(&[0, 1, 2, 3])?;
        let mut gi = cur.get_getter::<i32>(0)?;
        let mut gr = cur.get_getter::<f32>(1)?;
        let mut gd = cur.get_getter::<f64>(2)?;
        let mut gb = cur.get_getter::<bool>(3)?;
        let (mut i, mut x, mut d, mut b) = (0, 0f32, 0f64, false);
        let (a, rows) = steady_allocations(&mut *cur, 10, || {
            gi.get(&mut i)?;
            gr.get(&mut x)?;
            gd.get(&mut d)?;
            gb.get(&mut b)
        })?;
        report.push(format!("primitive {a}/{rows}"));
        total += a;
    }

    // vector columns in memory, dense and sparse, with a buffer sized by a first pass
    let dense: Vec<VBuffer<f32>> = (0..n).map(|_| VBuffer::dense((0..8).map(|_| r.gen()).collect())).collect();
    let sparse: Vec<VBuffer<f32>> = (0..n)
        .map(|_| {
            let k = r.gen_range(0..6u32);
            VBuffer::sparse(1000, (0..k).map(|j| j * 150 + r.gen_range(0..100)).collect(), vec![1.0; k as usize]).unwrap()
        })
        .collect();
    let view: Arc<dyn DataView> = InMemoryView::builder()
        .column("Dense", ColumnType::vector(ItemKind::R4, 8)?, dense)
        .column("Sparse", ColumnType::vector(ItemKind::R4, 1000)?, sparse)
        .build()?
        .into_arc();
    {
        let mut dbuf = VBuffer::<f32>::default();
        let mut sbuf = VBuffer::<f32>::default();
        for pass in 0..2 {
            let mut cur = view.cursor(&[0, 1])?;
            let mut gd = cur.get_getter::<VBuffer<f32>>(0)?;
            let mut gs = cur.get_getter::<VBuffer<f32>>(1)?;
            let (a, rows) = steady_allocations(&mut *cur, 0, || {
                gd.get(&mut dbuf)?;
                gs.get(&mut sbuf)
            })?;
            if pass == 1 {
                report.push(format!("vector {a}/{rows}"));
                total += a;
            }
        }
    }

    // primitive columns parsed from text
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("nums.tsv");
    write_file(&path, |w| {
        for i in 0..n {
            writeln!(w, "{i}\t{}\t{}", r.gen::<f32>(), r.gen::<f64>())?;
        }
        Ok(())
    })?;
    let text = load_text(
        &path,
        TextLoaderConfig::new(vec![
            LoaderColumn::new("I", ColumnType::I4, 0),
            LoaderColumn::new("R", ColumnType::R4, 1),
            LoaderColumn::new("D", ColumnType::R8, 2),
        ]),
    )?;
    {
        let mut cur = (&text as &dyn DataView).cursor(&[0, 1, 2])?;
        let mut gi = cur.get_getter::<i32>(0)?;
        let mut gr = cur.get_getter::<f32>(1)?;
        let mut gd = cur.get_getter::<f64>(2)?;
        let (mut i, mut x, mut d) = (0, 0f32, 0f64);
        let (a, rows) = steady_allocations(&mut *cur, 10, || {
            gi.get(&mut i)?;
            gr.get(&mut x)?;
            gd.get(&mut d)
        })?;
        report.push(format!("text loader {a}/{rows}"));
        total += a;
    }

    // composed transform getters and the prediction engine
    let data = InMemoryView::builder()
        .column("A", ColumnType::R4, (0..n).map(|i| if i % 7 == 0 { f32::NAN } else { r.gen() }).collect())
        .column("B", ColumnType::R4, (0..n).map(|_| r.gen::<f32>() * 10.0).collect())
        .column("Label", ColumnType::R4, (0..n).map(|_| r.gen::<f32>()).collect())
        .build()?
        .into_arc();
    let model = Pipeline::new()
        .append(MissingHandler::new(ColumnPairs::same(&["A"])))
        .append(MinMaxNormalizer::new(ColumnPairs::same(&["A", "B"])))
        .append(Concat::new(&["A", "B"], "Features")?)
        .append(LinearLearner::ogd_regressor(LearnerConfig { epochs: 1, ..Default::default() })?)
        .fit(data.clone(), &ExecContext::default())?;
    {
        let scored = model.transform(data.clone())?;
        let f = scored.schema().require("Features")?;
        let s = scored.schema().require("Score")?;
        let mut cur = scored.cursor(&[f, s])?;
        let mut gf = cur.get_getter::<VBuffer<f32>>(f)?;
        let mut gs = cur.get_getter::<f32>(s)?;
        let mut fb = VBuffer::<f32>::default();
        let mut score = 0f32;
        let (a, rows) = steady_allocations(&mut *cur, 10, || {
            gf.get(&mut fb)?;
            gs.get(&mut score)
        })?;
        report.push(format!("transform chain {a}/{rows}"));
        total += a;
    }
    {
        let mut engine = PredictionEngine::new(&model, data.schema())?;
        let mut example = engine.example();
        let mut prediction = engine.prediction();
        let predictions = 1000;
        let mut allocations = 0;
        for k in 0..predictions + 2 {
            let before = thread_allocations();
            example.set("A", &Value::R4(k as f32 * 0.01))?;
            example.set("B", &Value::R4(3.0))?;
            engine.predict_into(&example, &mut prediction)?;
            if k >= 2 {
                allocations += thread_allocations() - before;
            }
        }
        report.push(format!("prediction engine {allocations}/{predictions}"));
        total += allocations;
    }

    let detail = format!("allocations/rows: {}", report.join(", "));
    ensure!(total == 0, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------------
// 6. AUC oracle

fn pairwise_auc(scores: &[f32], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0f64, 0.0f64);
    for (i, &sp) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sn) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0f64;
    let mut tied = 0;
    for instance in 0..200 {
        let n = r.gen_range(2..=2000);
        let levels = r.gen_range(1..=60);
        let positive_rate = r.gen_range(0.05..0.95);
        let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(positive_rate)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f32> = (0..n).map(|_| r.gen_range(0..levels) as f32 * 0.25 - 3.0).collect();
        let expected = pairwise_auc(&scores, &labels);

        let view = InMemoryView::builder()
            .column("Label", ColumnType::R4, labels.iter().map(|&l| if l { 1.0f32 } else { 0.0 }).collect())
            .column("Score", ColumnType::R4, scores.clone())
            .column("Probability", ColumnType::R4, scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect())
            .build()?;
        let report = evaluate_binary(&view, &EvalColumns::default(), &ExecContext::default())?;
        let got = report.metric("auc").ok_or_else(|| Fail(format!("instance {instance}: no auc")))?;
        let mut pairs: Vec<(f64, bool)> = scores.iter().map(|&s| f64::from(s)).zip(labels.iter().copied()).collect();
        let direct = auc(&mut pairs).ok_or_else(|| Fail(format!("instance {instance}: no auc")))?;
        let err = (got - expected).abs().max((direct - expected).abs());
        ensure!(err <= 1e-12, "instance {instance} (n={n}): {got} vs oracle {expected}");
        worst = worst.max(err);
        tied += usize::from(levels < n);
    }
    Ok(format!("200 instances ({tied} with ties), max error {worst:.1e}"))
}

// ---------------------------------------------------------------------------------
// 7. learner sanity

fn log_loss(w: &[f64], b: f64, x: &[f64], y: f64) -> f64 {
    let z: f64 = w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b;
    let p = 1.0 / (1.0 + (-z).exp());
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn learner_sanity() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let ctx = ExecContext::default();

    // averaged perceptron on a margin-1 separable set
    let angle: f64 = r.gen_range(0.0..std::f64::consts::TAU);
    let (u, v, c) = (angle.cos(), angle.sin(), r.gen_range(-1.0..1.0));
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    while feats.len() < 200 {
        let (x, y) = (r.gen_range(-5.0..5.0f64), r.gen_range(-5.0..5.0f64));
        let m = u * x + v * y + c;
        if m.abs() >= 1.0 {
            feats.push(VBuffer::dense(vec![x as f32, y as f32]));
            labels.push(if m > 0.0 { 1.0f32 } else { 0.0 });
        }
    }
    let data = InMemoryView::builder()
        .column("Features", ColumnType::vector(ItemKind::R4, 2)?, feats)
        .column("Label", ColumnType::R4, labels)
        .build()?
        .into_arc();
    let model = Pipeline::new()
        .append(LinearLearner::averaged_perceptron(LearnerConfig { epochs: 10, ..Default::default() })?)
        .fit(data.clone(), &ctx)?;
    let acc = evaluate_binary(&*model.transform(data)?, &EvalColumns::default(), &ctx)?
        .metric("accuracy")
        .unwrap_or(f64::NAN);
    ensure!(acc == 1.0, "perceptron training accuracy {acc}");

    // logistic step against a central finite difference of the log-loss
    let mut worst = 0f64;
    for _ in 0..200 {
        let dim = 4;
        let w: Vec<f32> = (0..dim).map(|_| r.gen_range(-2.0..2.0)).collect();
        let b: f32 = r.gen_range(-1.0..1.0);
        let x: Vec<f32> = (0..dim).map(|_| r.gen_range(-2.0..2.0)).collect();
        let positive = r.gen_bool(0.5);
        let lr = 0.1f32;
        let mut s = LogisticState::new(dim, lr);
        s.state = LinearState { weights: w.clone(), bias: b };
        s.step(&VBuffer::dense(x.clone()), positive);
        let y = if positive { 1.0 } else { 0.0 };
        let wf: Vec<f64> = w.iter().map(|&a| f64::from(a)).collect();
        let xf: Vec<f64> = x.iter().map(|&a| f64::from(a)).collect();
        let h = 1e-5;
        for j in 0..=dim {
            let (mut wp, mut wm) = (wf.clone(), wf.clone());
            let (mut bp, mut bm) = (f64::from(b), f64::from(b));
            if j < dim {
                wp[j] += h;
                wm[j] -= h;
            } else {
                bp += h;
                bm -= h;
            }
            let grad = (log_loss(&wp, bp, &xf, y) - log_loss(&wm, bm, &xf, y)) / (2.0 * h);
            let delta = if j < dim {
                f64::from(s.state.weights[j]) - wf[j]
            } else {
                f64::from(s.state.bias) - f64::from(b)
            };
            let err = (delta + f64::from(lr) * grad).abs();
            ensure!(err < 1e-4, "logistic step off by {err}");
            worst = worst.max(err);
        }
    }

    // online gradient descent on exact linear data
    let task = LinearTask::new(3, 0.0, 41);
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("linear.tsv");
    write_file(&path, |w| task.write(w, 500, 42))?;
    let data = loader(&path, task.loader_config())?;
    let model = Pipeline::new()
        .append(LinearLearner::ogd_regressor(LearnerConfig { epochs: 10, ..Default::default() })?)
        .fit(data.clone(), &ctx)?;
    let rms = evaluate_regression(&*model.transform(data)?, &EvalColumns::default(), &ctx)?
        .metric("rms")
        .unwrap_or(f64::NAN);
    ensure!(rms < 0.01, "regression training rms {rms}");
    Ok(format!("perceptron accuracy {acc}, logistic step error {worst:.1e}, regression rms {rms:.2e}"))
}

// ---------------------------------------------------------------------------------
// 8. desk-scale analogs

fn click_analog() -> Result<f64, Fail> {
    let dir = tempfile::tempdir()?;
    let gen = ClickLog::new(101);
    let (train, test) = (dir.path().join("train.tsv"), dir.path().join("test.tsv"));
    write_file(&train, |w| gen.write(w, 100_000, 1))?;
    write_file(&test, |w| gen.write(w, 20_000, 2))?;
    let ctx = ExecContext::with_threads(4);
    let model = click_pipeline(16, LearnerConfig { epochs: 5, ..Default::default() })?
        .fit(loader(&train, ClickLog::loader_config())?, &ctx)?;
    test_auc(&model, loader(&test, ClickLog::loader_config())?)
}

fn review_analog() -> Result<f64, Fail> {
    let dir = tempfile::tempdir()?;
    let gen = ReviewCorpus::new(202);
    let (train, test) = (dir.path().join("train.tsv"), dir.path().join("test.tsv"));
    write_file(&train, |w| gen.write(w, 20_000, 1))?;
    write_file(&test, |w| gen.write(w, 5_000, 2))?;
    let model = review_pipeline(None, 10)?.fit(loader(&train, ReviewCorpus::loader_config())?, &ExecContext::with_threads(4))?;
    test_auc(&model, loader(&test, ReviewCorpus::loader_config())?)
}

fn regression_analog() -> Result<(f64, f64), Fail> {
    let dir = tempfile::tempdir()?;
    let task = LinearTask::new(10, 0.5, 303);
    let (train, test) = (dir.path().join("train.tsv"), dir.path().join("test.tsv"));
    write_file(&train, |w| task.write(w, 100_000, 1))?;
    write_file(&test, |w| task.write(w, 20_000, 2))?;
    let model = Pipeline::new()
        .append(LinearLearner::ogd_regressor(LearnerConfig {
            epochs: 3,
            learning_rate: 0.01,
            ..Default::default()
        })?)
        .fit(loader(&train, task.loader_config())?, &ExecContext::default())?;
    let scored = model.transform(loader(&test, task.loader_config())?)?;
    let rms = evaluate_regression(&*scored, &EvalColumns::default(), &ExecContext::default())?
        .metric("rms")
        .unwrap_or(f64::NAN);
    Ok((rms, task.noise))
}

fn desk_scale() -> Outcome {
    let click = click_analog()?;
    let review = review_analog()?;
    let (rms, noise) = regression_analog()?;
    let detail = format!("click AUC {click:.4}, review AUC {review:.4}, regression rms {rms:.4} vs noise {noise}");
    ensure!(click >= 0.75, "{detail}");
    ensure!(review >= 0.85, "{detail}");
    ensure!(rms <= 1.1 * noise, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------------
// Random pipelines, shared by 9 and 10

const NUMERIC: [&str; 3] = ["N1", "N2", "V"];

#[derive(Clone, Debug)]
enum Stage {
    Missing(Vec<&'static str>),
    MinMax(Vec<&'static str>),
    OneHot { bits: u32 },
    Featurize { word: Vec<u32>, chars: Vec<u32>, bits: u32 },
    Normalize,
    Tokenize,
    NGram { mode: NGramMode, lengths: Vec<u32>, bits: u32 },
    L2(&'static str),
    Concat(Vec<&'static str>),
    Learner { op: &'static str, config: LearnerConfig },
}

impl Stage {
    fn estimator(&self) -> Result<Arc<dyn Estimator>, Fail> {
        Ok(match self {
            Stage::Missing(cols) => Arc::new(MissingHandler::new(ColumnPairs::same(cols))),
            Stage::MinMax(cols) => Arc::new(MinMaxNormalizer::new(ColumnPairs::same(cols))),
            Stage::OneHot { bits } => Arc::new(HashOneHot::new(ColumnPairs::renamed(&[("Cat", "CatH")]), *bits)?),
            Stage::Featurize { word, chars, bits } => Arc::new(FeaturizeText::new(
                ColumnPairs::renamed(&[("Doc", "DocF")]),
                NGramSpec::new(word, chars, *bits)?,
            )?),
            Stage::Normalize => Arc::new(NormalizeText::new(ColumnPairs::renamed(&[("Doc", "DocN")]))),
            Stage::Tokenize => Arc::new(Tokenize::new(ColumnPairs::renamed(&[("DocN", "DocT")]))),
            Stage::NGram { mode, lengths, bits } => {
                let input = if *mode == NGramMode::Word { "DocT" } else { "DocN" };
                Arc::new(NGramHash::new(ColumnPairs::renamed(&[(input, "DocF")]), *mode, lengths, *bits)?)
            }
            Stage::L2(col) => Arc::new(L2Normalize::new(ColumnPairs::same(&[col]))),
            Stage::Concat(cols) => Arc::new(Concat::new(cols, "Features")?),
            Stage::Learner { op, config } => Arc::new(match *op {
                dvml::learners::AVG_PERCEPTRON => LinearLearner::averaged_perceptron(config.clone())?,
                dvml::learners::SGD_LOGISTIC => LinearLearner::sgd_logistic(config.clone())?,
                _ => LinearLearner::ogd_regressor(config.clone())?,
            }),
        })
    }

    /// Operator id and params of the equivalent graph node.
    fn node(&self) -> (&'static str, Json) {
        let renamed = |from: &str, to: &str| json!({ "columns": [from], "outputs": [to] });
        let with = |mut base: Json, extra: Json| {
            base.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
            base
        };
        match self {
            Stage::Missing(cols) => ("transform.missing_handler", json!({ "columns": cols })),
            Stage::MinMax(cols) => ("transform.minmax", json!({ "columns": cols })),
            Stage::OneHot { bits } => ("transform.hash_onehot", with(renamed("Cat", "CatH"), json!({ "hash_bits": bits }))),
            Stage::Featurize { word, chars, bits } => (
                "transform.featurize_text",
                with(
                    renamed("Doc", "DocF"),
                    json!({ "word_ngram_lengths": word, "char_ngram_lengths": chars, "hash_bits": bits }),
                ),
            ),
            Stage::Normalize => ("transform.normalize_text", renamed("Doc", "DocN")),
            Stage::Tokenize => ("transform.tokenize", renamed("DocN", "DocT")),
            Stage::NGram { mode, lengths, bits } => {
                let (input, mode) = if *mode == NGramMode::Word { ("DocT", "word") } else { ("DocN", "char") };
                (
                    "transform.ngram_hash",
                    with(renamed(input, "DocF"), json!({ "mode": mode, "lengths": lengths, "hash_bits": bits })),
                )
            }
            Stage::L2(col) => ("transform.l2_normalize", json!({ "columns": [col] })),
            Stage::Concat(cols) => ("transform.concat", json!({ "inputs": cols, "output": "Features" })),
            Stage::Learner { op, config } => (op, serde_json::to_value(config).unwrap()),
        }
    }
}

fn subset(r: &mut ChaCha8Rng, items: &[&'static str]) -> Vec<&'static str> {
    loop {
        let s: Vec<_> = items.iter().copied().filter(|_| r.gen_bool(0.6)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

fn lengths(r: &mut ChaCha8Rng, max: u32) -> Vec<u32> {
    (1..=max).filter(|_| r.gen_bool(0.6)).collect()
}

fn random_pipeline(r: &mut ChaCha8Rng) -> Vec<Stage> {
    // learners reject missing values, so every numeric feature is imputed
    let mut features = subset(r, &NUMERIC);
    let mut imputed = features.clone();
    imputed.extend(NUMERIC.iter().filter(|c| !features.contains(c) && r.gen_bool(0.3)));
    let mut stages = vec![Stage::Missing(imputed)];
    if r.gen_bool(0.5) {
        stages.push(Stage::MinMax(subset(r, &NUMERIC)));
        if r.gen_bool(0.3) {
            stages.reverse();
        }
    }
    if r.gen_bool(0.6) {
        stages.push(Stage::OneHot { bits: r.gen_range(2..=10) });
        features.push("CatH");
    }
    let bits = r.gen_range(4..=12);
    match r.gen_range(0..4) {
        0 => {}
        1 => {
            let mut word = lengths(r, 3);
            if word.is_empty() {
                word.push(1);
            }
            stages.push(Stage::Featurize { word, chars: lengths(r, 4), bits });
            features.push("DocF");
        }
        2 => {
            stages.push(Stage::Normalize);
            stages.push(Stage::Tokenize);
            stages.push(Stage::NGram { mode: NGramMode::Word, lengths: lengths(r, 3), bits });
            if r.gen_bool(0.5) {
                stages.push(Stage::L2("DocF"));
            }
            features.push("DocF");
        }
        _ => {
            stages.push(Stage::Normalize);
            stages.push(Stage::NGram { mode: NGramMode::Char, lengths: lengths(r, 4), bits });
            features.push("DocF");
        }
    }
    stages.push(Stage::Concat(features));
    if r.gen_bool(0.3) {
        stages.push(Stage::L2("Features"));
    }
    let op = [
        dvml::learners::AVG_PERCEPTRON,
        dvml::learners::SGD_LOGISTIC,
        dvml::learners::OGD_REGRESSOR,
    ][r.gen_range(0..3)];
    stages.push(Stage::Learner {
        op,
        config: LearnerConfig {
            epochs: r.gen_range(1..=3),
            learning_rate: [0.01f32, 0.1, 0.5, 1.0][r.gen_range(0..4)],
            shuffle_seed: r.gen_bool(0.5).then(|| r.gen_range(0..1000)),
            ..Default::default()
        },
    });
    stages
}

fn build(stages: &[Stage]) -> Result<Pipeline, Fail> {
    let mut p = Pipeline::new();
    for s in stages {
        p.push(s.estimator()?);
    }
    Ok(p)
}

fn mixed_config() -> TextLoaderConfig {
    TextLoaderConfig::new(vec![
        LoaderColumn::new("Label", ColumnType::R4, 0),
        LoaderColumn::new("N1", ColumnType::R4, 1),
        LoaderColumn::new("N2", ColumnType::R4, 2),
        LoaderColumn::range("V", ColumnType::vector(ItemKind::R4, 4).unwrap(), 3, 6),
        LoaderColumn::new("Cat", ColumnType::TEXT, 7),
        LoaderColumn::new("Doc", ColumnType::TEXT, 8),
    ])
}

/// Rows with missing numbers, a small categorical vocabulary and short documents.
fn write_mixed(path: &Path, rows: usize, seed: u64) -> Result<(), Fail> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let words = ["good", "Bad", "fine", "terrible!", "ok,", "GREAT", "meh", "item", "the", "a"];
    let num = |r: &mut ChaCha8Rng| {
        if r.gen_bool(0.1) {
            String::new()
        } else {
            format!("{}", r.gen_range(-50.0f32..50.0))
        }
    };
    write_file(path, |w| {
        for _ in 0..rows {
            let label = u8::from(r.gen_bool(0.5));
            let mut fields = vec![label.to_string(), num(&mut r), num(&mut r)];
            fields.extend((0..4).map(|_| num(&mut r)));
            fields.push(format!("c{}", r.gen_range(0..12)));
            let len = r.gen_range(0..12);
            fields.push((0..len).map(|_| words[r.gen_range(0..words.len())]).collect::<Vec<_>>().join(" "));
            writeln!(w, "{}", fields.join("\t"))?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------------
// 9. persistence fidelity

fn persistence_fidelity() -> Outcome {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("mixed.tsv");
    write_mixed(&path, 300, 9)?;
    let data = loader(&path, mixed_config())?;
    let ctx = ExecContext::default();
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let mut stage_count = 0;
    for i in 0..100 {
        let stages = random_pipeline(&mut r);
        stage_count += stages.len();
        let model = build(&stages)?.fit(data.clone(), &ctx).map_err(|e| Fail(format!("pipeline {i} {stages:?}: {e}")))?;
        let file = dir.path().join(format!("model{i}.zip"));
        model.save(&file)?;
        let loaded = PipelineModel::load(&file)?;
        let expected = scan(&*model.transform(data.clone())?, &ctx)?;
        let got = scan(&*loaded.transform(data.clone())?, &ctx)?;
        ensure!(rows_bit_eq(&got, &expected), "pipeline {i} scores differ after reload: {stages:?}");
        ensure!(loaded.to_bytes()? == model.to_bytes()?, "pipeline {i} re-saves differently");
    }
    Ok(format!("100 pipelines ({stage_count} stages) score identically after save and load"))
}

// ---------------------------------------------------------------------------------
// 10. graph equivalence

fn graph_nodes(stages: &[Stage], wire_models: bool) -> Vec<Json> {
    let columns = serde_json::to_value(&mixed_config().columns).unwrap();
    let mut nodes = vec![json!({
        "id": "load", "op": "loader.text", "params": { "columns": columns },
        "inputs": { "path": "data" }, "outputs": { "data": "d0" },
    })];
    for (k, s) in stages.iter().enumerate() {
        let (op, params) = s.node();
        let mut node = json!({
            "id": format!("s{k}"), "op": op, "params": params,
            "inputs": { "data": format!("d{k}") }, "outputs": { "data": format!("d{}", k + 1) },
        });
        if wire_models {
            node["outputs"]["model"] = json!(format!("m{k}"));
            if k > 0 {
                node["inputs"]["model"] = json!(format!("m{}", k - 1));
            }
        }
        nodes.push(node);
    }
    nodes
}

fn run_cli(args: &[&str]) -> Result<Json, Fail> {
    let out = Command::new(DVML).args(args).output()?;
    ensure!(
        out.status.success(),
        "dvml {} exited with {}: {}",
        args.join(" "),
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(serde_json::from_slice(&out.stdout)?)
}

fn graph_equivalence() -> Outcome {
    let dir = tempfile::tempdir()?;
    let data_path = dir.path().join("mixed.tsv");
    write_mixed(&data_path, 300, 10)?;
    let data = loader(&data_path, mixed_config())?;
    let mut r = ChaCha8Rng::seed_from_u64(1010);
    let path_str = |p: &PathBuf| p.display().to_string();
    let (mut graphs, mut trains) = (0, 0);
    for i in 0..40 {
        let stages = random_pipeline(&mut r);
        let expected = build(&stages)?.fit(data.clone(), &ExecContext::default())?.to_bytes()?;

        let mut nodes = graph_nodes(&stages, true);
        nodes.push(json!({
            "id": "save", "op": "model.save",
            "inputs": { "model": format!("m{}", stages.len() - 1), "path": "out" },
            "outputs": { "path": "saved" },
        }));
        let graph = json!({ "version": 1, "inputs": { "data": "path", "out": "path" }, "outputs": ["saved"], "nodes": nodes });
        let graph_file = dir.path().join(format!("graph{i}.json"));
        std::fs::write(&graph_file, serde_json::to_string_pretty(&graph)?)?;
        let model_file = dir.path().join(format!("graph{i}.zip"));
        run_cli(&[
            "graph-run",
            "--graph",
            &path_str(&graph_file),
            "--bind",
            &format!("data={}", data_path.display()),
            "--bind",
            &format!("out={}", model_file.display()),
        ])?;
        ensure!(std::fs::read(&model_file)? == expected, "graph-run archive {i} differs: {stages:?}");
        graphs += 1;

        if i % 4 == 0 {
            let chain = json!({ "inputs": { "data": "path" }, "nodes": graph_nodes(&stages, false) });
            let chain_file = dir.path().join(format!("chain{i}.json"));
            std::fs::write(&chain_file, serde_json::to_string(&chain)?)?;
            let model_file = dir.path().join(format!("train{i}.zip"));
            run_cli(&[
                "train",
                "--pipeline",
                &path_str(&chain_file),
                "--data",
                &path_str(&data_path),
                "--out",
                &path_str(&model_file),
            ])?;
            ensure!(std::fs::read(&model_file)? == expected, "train archive {i} differs: {stages:?}");
            trains += 1;
        }
    }
    Ok(format!("{graphs} graph-run and {trains} train archives match the programmatic fits"))
}

// ---------------------------------------------------------------------------------
// 11. hidden columns

fn hidden_columns() -> Outcome {
    let data = InMemoryView::builder()
        .column("A", ColumnType::R4, vec![3.0f32, 0.0, 1.0])
        .column("B", ColumnType::R4, vec![4.0f32, 2.0, 1.0])
        .build()?
        .into_arc();
    let model = Pipeline::new()
        .append(Concat::new(&["A", "B"], "Features")?)
        .append(L2Normalize::new(ColumnPairs::same(&["Features"])))
        .fit(data.clone(), &ExecContext::default())?;
    let model = PipelineModel::from_bytes(&model.to_bytes()?)?;
    let out = model.transform(data)?;
    let schema = out.schema();
    let first = 2;
    let second = schema.resolve("Features").ok_or_else(|| Fail("Features does not resolve".into()))?;
    ensure!(second == 3 && schema.len() == 4, "Features resolves to column {second} of {}", schema.len());
    ensure!(schema.columns()[first].name == "Features", "column {first} is {}", schema.columns()[first].name);
    ensure!(schema.is_hidden(first) && !schema.is_hidden(second), "wrong hidden flags");

    let mut cur = out.cursor(&[first, second])?;
    let mut raw = cur.get_getter::<VBuffer<f32>>(first)?;
    let mut unit = cur.get_getter::<VBuffer<f32>>(second)?;
    let (mut x, mut y) = (VBuffer::default(), VBuffer::default());
    let expected_raw = [[3.0f32, 4.0], [0.0, 2.0], [1.0, 1.0]];
    let expected_unit = [[0.6f32, 0.8], [0.0, 1.0], [1.0 / 2f32.sqrt(), 1.0 / 2f32.sqrt()]];
    let mut row = 0;
    while cur.move_next()? {
        raw.get(&mut x)?;
        unit.get(&mut y)?;
        ensure!(x.to_dense_vec() == expected_raw[row], "row {row}: first Features is {:?}", x.to_dense_vec());
        let close = y.to_dense_vec().iter().zip(expected_unit[row]).all(|(a, b)| (a - b).abs() <= f32::EPSILON);
        ensure!(close, "row {row}: second Features is {:?}", y.to_dense_vec());
        row += 1;
    }
    ensure!(row == 3, "read {row} rows");
    Ok("Features resolves to the normalized column; the concatenation stays at index 2".into())
}

// ---------------------------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "laziness", laziness),
        (2, "streaming memory", streaming_memory),
        (3, "parallel determinism", parallel_determinism),
        (4, "getter performance", getter_performance),
        (5, "allocation bound", allocation_bound),
        (6, "AUC oracle", auc_oracle),
        (7, "learner sanity", learner_sanity),
        (8, "desk-scale analogs", desk_scale),
        (9, "persistence fidelity", persistence_fidelity),
        (10, "graph equivalence", graph_equivalence),
        (11, "hidden-column semantics", hidden_columns),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(Fail(format!("panicked: {msg}")))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS [{secs:.1}s] {detail}"),
            Err(Fail(detail)) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
