use std::io::{Cursor, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use zip::write::SimpleFileOptions;

use super::*;
use crate::dataview::{collect_rows, DataView, ExecContext, InMemoryView};
use crate::error::ErrorKind;
use crate::learners::{LearnerConfig, LinearLearner};
use crate::schema::Schema;
use crate::text::Text;
use crate::transforms::{ColumnPairs, Concat, FeaturizeText, MinMaxNormalizer, MissingHandler, NGramSpec};
use crate::types::{ColumnType, ItemKind};
use crate::value::Value;

fn sentiment() -> Arc<InMemoryView> {
    let docs = [
        ("what a wonderful film", 1.0f32),
        ("dull plot and awful acting", 0.0),
        ("wonderful cast, great fun", 1.0),
        ("awful, simply awful", 0.0),
        ("great film", 1.0),
        ("a dull evening", 0.0),
    ];
    Arc::new(
        InMemoryView::builder()
            .column("Text", ColumnType::TEXT, docs.iter().map(|d| Text::new(d.0)).collect())
            .column("Label", ColumnType::R4, docs.iter().map(|d| d.1).collect())
            .build()
            .unwrap(),
    )
}

fn text_pipeline() -> Pipeline {
    Pipeline::new()
        .append(
            FeaturizeText::new(
                ColumnPairs::renamed(&[("Text", "Features")]),
                NGramSpec::new(&[1, 2], &[1, 2, 3], 10).unwrap(),
            )
            .unwrap(),
        )
        .append(
            LinearLearner::averaged_perceptron(LearnerConfig {
                shuffle_seed: Some(7),
                ..LearnerConfig::default()
            })
            .unwrap(),
        )
}

fn numeric(rows: usize, seed: u64) -> Arc<InMemoryView> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut y = Vec::new();
    for _ in 0..rows {
        let x0: f32 = if rng.gen_bool(0.1) { f32::NAN } else { rng.gen_range(-5.0..5.0) };
        let x1: f32 = rng.gen_range(0.0..10.0);
        a.push(x0);
        b.push(x1);
        y.push((x1 > 5.0) as u8 as f32);
    }
    Arc::new(
        InMemoryView::builder()
            .column("A", ColumnType::R4, a)
            .column("B", ColumnType::R4, b)
            .column("Label", ColumnType::R4, y)
            .build()
            .unwrap(),
    )
}

fn numeric_pipeline() -> Pipeline {
    Pipeline::new()
        .append(MissingHandler::new(ColumnPairs::same(&["A"])))
        .append(MinMaxNormalizer::new(ColumnPairs::same(&["A", "B"])))
        .append(Concat::new(&["A", "B"], "Features").unwrap())
        .append(
            LinearLearner::sgd_logistic(LearnerConfig {
                epochs: 3,
                ..LearnerConfig::default()
            })
            .unwrap(),
        )
}

fn scores(model: &PipelineModel, data: Arc<dyn DataView>) -> Vec<Vec<Value>> {
    let out = model.transform(data).unwrap();
    let cols = model.prediction_columns();
    collect_rows(&*out, &cols).unwrap()
}

fn bit_equal(a: &[Vec<Value>], b: &[Vec<Value>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.iter().zip(y).all(|(u, v)| u.bit_eq(v)))
}

#[test]
fn toy_sentiment_fits_and_scores_every_row() {
    let data = sentiment();
    let model = text_pipeline().fit(data.clone(), &ExecContext::default()).unwrap();
    let rows = scores(&model, data);
    assert_eq!(rows.len(), 6);
    let names: Vec<_> = model
        .prediction_columns()
        .iter()
        .map(|&c| model.output_schema().columns()[c].name.clone())
        .collect();
    assert_eq!(names, ["Score", "Probability"]);
}

#[test]
fn stateless_pipeline_fit_reads_no_rows() {
    let data = sentiment();
    let p = Pipeline::new().append(
        FeaturizeText::new(ColumnPairs::same(&["Text"]), NGramSpec::new(&[1], &[], 4).unwrap()).unwrap(),
    );
    let model = p.fit(data.clone(), &ExecContext::default()).unwrap();
    assert_eq!(data.rows_read(), 0);
    model.transform(data.clone()).unwrap();
    assert_eq!(data.rows_read(), 0);
}

#[test]
fn schema_errors_name_the_stage_before_any_read() {
    let data = numeric(50, 1);
    let p = Pipeline::new()
        .append(MissingHandler::new(ColumnPairs::same(&["A"])))
        .append(Concat::new(&["A", "Nope"], "Features").unwrap());
    let err = p.fit(data.clone(), &ExecContext::default()).unwrap_err();
    match err.kind() {
        ErrorKind::Validation { stage, op, message } => {
            assert_eq!(*stage, 1);
            assert_eq!(op, "transform.concat");
            assert!(message.contains("Nope"), "{message}");
        }
        k => panic!("unexpected {k:?}"),
    }
    assert_eq!(data.rows_read(), 0);
}

#[test]
fn fitting_twice_gives_identical_archives() {
    let ctx = ExecContext::default();
    let a = numeric_pipeline().fit(numeric(300, 2), &ctx).unwrap().to_bytes().unwrap();
    let b = numeric_pipeline().fit(numeric(300, 2), &ctx).unwrap().to_bytes().unwrap();
    assert_eq!(a, b);
    let c = text_pipeline().fit(sentiment(), &ctx).unwrap().to_bytes().unwrap();
    let d = text_pipeline().fit(sentiment(), &ctx).unwrap().to_bytes().unwrap();
    assert_eq!(c, d);
}

#[test]
fn archive_round_trip_scores_bitwise() {
    let ctx = ExecContext::default();
    let model = numeric_pipeline().fit(numeric(300, 3), &ctx).unwrap();
    let loaded = PipelineModel::from_bytes(&model.to_bytes().unwrap()).unwrap();
    let test = numeric(100, 4);
    assert!(bit_equal(&scores(&model, test.clone()), &scores(&loaded, test)));
    assert_eq!(loaded.to_bytes().unwrap(), model.to_bytes().unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.zip");
    model.save(&path).unwrap();
    let from_file = PipelineModel::load(&path).unwrap();
    assert_eq!(from_file.to_bytes().unwrap(), model.to_bytes().unwrap());
}

#[test]
fn scoring_an_empty_view_is_empty() {
    let model = numeric_pipeline().fit(numeric(100, 5), &ExecContext::default()).unwrap();
    assert!(scores(&model, numeric(0, 5)).is_empty());
}

#[test]
fn applying_is_pure() {
    let model = numeric_pipeline().fit(numeric(100, 6), &ExecContext::default()).unwrap();
    let data = numeric(40, 7);
    let once = scores(&model, data.clone());
    let twice = scores(&model, data);
    assert!(bit_equal(&once, &twice));
}

/// Rebuilds an archive with `edit` applied to each (name, bytes) entry.
fn rewrite(bytes: &[u8], edit: impl Fn(&str, Vec<u8>) -> Option<(String, Vec<u8>)>) -> Vec<u8> {
    let mut src = zip::ZipArchive::new(Cursor::new(bytes)).unwrap();
    let mut out = zip::ZipWriter::new(Cursor::new(Vec::new()));
    for i in 0..src.len() {
        let mut f = src.by_index(i).unwrap();
        let name = f.name().unwrap().to_string();
        let mut data = Vec::new();
        std::io::Read::read_to_end(&mut f, &mut data).unwrap();
        if let Some((name, data)) = edit(&name, data) {
            out.start_file(name, SimpleFileOptions::default()).unwrap();
            out.write_all(&data).unwrap();
        }
    }
    out.finish().unwrap().into_inner()
}

fn edit_manifest(bytes: &[u8], f: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
    rewrite(bytes, |name, data| {
        if name == "manifest.json" {
            let mut m: serde_json::Value = serde_json::from_slice(&data).unwrap();
            f(&mut m);
            Some((name.to_string(), serde_json::to_vec(&m).unwrap()))
        } else {
            Some((name.to_string(), data))
        }
    })
}

#[test]
fn damaged_archives_are_rejected() {
    let model = numeric_pipeline().fit(numeric(100, 8), &ExecContext::default()).unwrap();
    let bytes = model.to_bytes().unwrap();
    let kind = |b: &[u8]| PipelineModel::from_bytes(b).unwrap_err().into_kind();

    let dropped = rewrite(&bytes, |name, data| (!name.starts_with("stage_003/")).then(|| (name.to_string(), data)));
    assert!(matches!(kind(&dropped), ErrorKind::Corruption(m) if m.contains("stage_003")));

    let future = edit_manifest(&bytes, |m| m["format_version"] = 2.into());
    assert!(matches!(kind(&future), ErrorKind::Version { found: 2, supported: 1 }));

    let unknown = edit_manifest(&bytes, |m| m["stages"][1]["op"] = "transform.nonexistent".into());
    assert!(matches!(kind(&unknown), ErrorKind::UnknownOperator(op) if op == "transform.nonexistent"));

    let swapped = edit_manifest(&bytes, |m| m["stages"][0]["op"] = "transform.minmax".into());
    assert!(PipelineModel::from_bytes(&swapped).is_err());

    let extra = rewrite(&bytes, |name, data| {
        Some((name.replace("stage_003/", "stage_004/"), data))
    });
    assert!(matches!(kind(&extra), ErrorKind::Corruption(_)));

    assert!(matches!(kind(b"not a zip"), ErrorKind::Corruption(_)));
}

#[test]
fn manifest_count_larger_than_directories_is_corruption() {
    let model = Pipeline::new()
        .append(MissingHandler::new(ColumnPairs::same(&["A"])))
        .append(MinMaxNormalizer::new(ColumnPairs::same(&["A"])))
        .fit(numeric(20, 9), &ExecContext::default())
        .unwrap();
    let bytes = edit_manifest(&model.to_bytes().unwrap(), |m| {
        m["stage_count"] = 3.into();
        let mut third = m["stages"][1].clone();
        third["dir"] = "stage_002".into();
        m["stages"].as_array_mut().unwrap().push(third);
    });
    let err = PipelineModel::from_bytes(&bytes).unwrap_err();
    assert!(matches!(err.kind(), ErrorKind::Corruption(m) if m.contains("stage_002")), "{err}");
}

#[test]
fn engine_matches_batch_scores() {
    let data = sentiment();
    let model = text_pipeline().fit(data.clone(), &ExecContext::default()).unwrap();
    let batch = scores(&model, data.clone());
    let mut engine = PredictionEngine::new(&model, model.input_schema()).unwrap();
    assert_eq!(engine.required_fields().collect::<Vec<_>>(), ["Text"]);
    let texts = collect_rows(&*data, &[0]).unwrap();
    let mut ex = engine.example();
    let mut out = engine.prediction();
    for (row, expected) in texts.iter().zip(&batch) {
        ex.set("Text", &row[0]).unwrap();
        engine.predict_into(&ex, &mut out).unwrap();
        assert!(out.values().iter().zip(expected).all(|(a, b)| a.bit_eq(b)));
    }
}

#[test]
fn engine_rejects_missing_fields() {
    let model = text_pipeline().fit(sentiment(), &ExecContext::default()).unwrap();
    let mut engine = PredictionEngine::new(&model, model.input_schema()).unwrap();
    let ex = engine.example();
    let err = engine.predict(&ex).unwrap_err();
    assert!(matches!(err.kind(), ErrorKind::Input(m) if m.contains("Text")));
    let mut ex = engine.example();
    assert!(ex.set("Text", &Value::R4(1.0)).is_err());
    assert!(ex.set("Missing", &Value::R4(1.0)).is_err());
}

#[test]
fn engine_outputs_skip_hidden_columns() {
    let schema = Schema::new(vec![crate::schema::Column::new("Features", ColumnType::vector(ItemKind::R4, 2).unwrap())]);
    let model = numeric_pipeline().fit(numeric(100, 10), &ExecContext::default()).unwrap();
    assert!(PredictionEngine::new(&model, &schema).is_err());
    let engine = PredictionEngine::new(&model, model.input_schema()).unwrap();
    let p = engine.prediction();
    let names: Vec<_> = p.iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["Score", "Probability"]);
}

#[test]
fn loadable_ops_cover_every_fitted_stage() {
    let ctx = ExecContext::default();
    for model in [
        numeric_pipeline().fit(numeric(50, 11), &ctx).unwrap(),
        text_pipeline().fit(sentiment(), &ctx).unwrap(),
    ] {
        for s in model.stages() {
            assert!(loadable_ops().contains(&s.op_id()));
        }
    }
    let ops = loadable_ops();
    assert!(ops.windows(2).all(|w| w[0] < w[1]));
}
