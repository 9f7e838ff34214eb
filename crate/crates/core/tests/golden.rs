//! Pins the model archive bytes for a fixed pipeline and data set, so format changes
//! are deliberate. Regenerate with `DVML_BLESS=1 cargo test -p dvml --test golden`.

use std::path::Path;
use std::sync::Arc;

use dvml::dataview::InMemoryView;
use dvml::learners::{LearnerConfig, LinearLearner};
use dvml::pipeline::{Pipeline, PipelineModel};
use dvml::transforms::{ColumnPairs, Concat, FeaturizeText, MinMaxNormalizer, MissingHandler, NGramSpec};
use dvml::{ColumnType, DataView, ExecContext, Text};

const WORDS: [&str; 6] = ["good", "bad", "fine", "awful", "great", "dull"];

/// Integer-derived rows, so the data does not depend on any RNG implementation.
fn data() -> Arc<dyn DataView> {
    let rows = 120u32;
    let a: Vec<f32> = (0..rows).map(|i| if i % 11 == 0 { f32::NAN } else { (i * 37 % 101) as f32 / 10.0 }).collect();
    let b: Vec<f32> = (0..rows).map(|i| (i * 53 % 97) as f32 - 48.0).collect();
    let docs: Vec<Text> = (0..rows as usize)
        .map(|i| Text::new(format!("{} {}", WORDS[i % 6], WORDS[i * 7 % 6])))
        .collect();
    let label: Vec<f32> = (0..rows as usize).map(|i| (i % 6 % 2 == 0) as u8 as f32).collect();
    InMemoryView::builder()
        .column("A", ColumnType::R4, a)
        .column("B", ColumnType::R4, b)
        .column("Doc", ColumnType::TEXT, docs)
        .column("Label", ColumnType::R4, label)
        .build()
        .unwrap()
        .into_arc()
}

fn model() -> PipelineModel {
    Pipeline::new()
        .append(MissingHandler::new(ColumnPairs::same(&["A"])))
        .append(MinMaxNormalizer::new(ColumnPairs::same(&["A", "B"])))
        .append(FeaturizeText::new(ColumnPairs::renamed(&[("Doc", "DocF")]), NGramSpec::new(&[1, 2], &[2], 8).unwrap()).unwrap())
        .append(Concat::new(&["A", "B", "DocF"], "Features").unwrap())
        .append(
            LinearLearner::sgd_logistic(LearnerConfig {
                epochs: 3,
                shuffle_seed: Some(9),
                ..LearnerConfig::default()
            })
            .unwrap(),
        )
        .fit(data(), &ExecContext::with_threads(1))
        .unwrap()
}

#[test]
fn archive_bytes_are_pinned() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/model.zip");
    let bytes = model().to_bytes().unwrap();
    if std::env::var_os("DVML_BLESS").is_some() {
        std::fs::write(&golden, &bytes).unwrap();
    }
    let want = std::fs::read(&golden).expect("golden archive exists; run with DVML_BLESS=1 to create it");
    assert!(bytes == want, "archive bytes changed ({} vs {} bytes)", bytes.len(), want.len());
}

#[test]
fn pinned_archive_loads_and_scores_like_a_fresh_fit() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/model.zip");
    let loaded = PipelineModel::load(&golden).unwrap();
    let fresh = model();
    let score = |m: &PipelineModel| -> Vec<u32> {
        let out = m.transform(data()).unwrap();
        let c = out.schema().require("Score").unwrap();
        let mut cur = out.cursor(&[c]).unwrap();
        let mut g = cur.get_getter::<f32>(c).unwrap();
        let mut v = Vec::new();
        let mut x = 0f32;
        while cur.move_next().unwrap() {
            g.get(&mut x).unwrap();
            v.push(x.to_bits());
        }
        v
    };
    let s = score(&loaded);
    assert_eq!(s.len(), 120);
    assert_eq!(s, score(&fresh));
}
