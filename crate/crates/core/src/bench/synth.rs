//! Seeded synthetic workloads with planted signal, written as tab-separated text.
//!
//! Each generator is a pure function of its seed: the same seed always yields the same
//! bytes.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};

use crate::io::{LoaderColumn, TextLoaderConfig};
use crate::types::{ColumnType, ItemKind};

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Click-log shaped rows: a 0/1 label, 13 numeric fields and 26 categorical fields.
///
/// Each categorical column draws values from a Zipf-skewed vocabulary whose entries
/// carry hidden log-odds weights; numeric fields are standard normal with hidden
/// coefficients. Some fields are left empty.
pub struct ClickLog {
    vocab: Vec<Vec<String>>,
    weights: Vec<Vec<f64>>,
    coefs: Vec<f64>,
    zipf: Vec<Zipf<f64>>,
    bias: f64,
}

impl ClickLog {
    pub const NUMERIC: usize = 13;
    pub const CATEGORICAL: usize = 26;
    const VOCAB_SIZES: [u64; 7] = [4, 12, 40, 120, 400, 1200, 4000];
    const NUMERIC_MISSING: f64 = 0.1;
    const CATEGORICAL_MISSING: f64 = 0.04;

    pub fn new(seed: u64) -> Self {
        let mut r = rng(seed, 0);
        let cat_weight = Normal::new(0.0, 0.5).unwrap();
        let num_coef = Normal::new(0.0, 0.4).unwrap();
        let mut vocab = Vec::new();
        let mut weights = Vec::new();
        let mut zipf = Vec::new();
        for c in 0..Self::CATEGORICAL {
            let size = Self::VOCAB_SIZES[c % Self::VOCAB_SIZES.len()];
            vocab.push((0..size).map(|_| format!("{:08x}", r.gen::<u32>())).collect());
            weights.push((0..size).map(|_| cat_weight.sample(&mut r)).collect());
            zipf.push(Zipf::new(size, 1.1).unwrap());
        }
        let coefs = (0..Self::NUMERIC).map(|_| num_coef.sample(&mut r)).collect();
        ClickLog {
            vocab,
            weights,
            coefs,
            zipf,
            bias: -1.0,
        }
    }

    /// Loader layout: `Label` (R4), `Numeric` (Vector<R4,13>) and `C1`..`C26` (Text).
    pub fn loader_config() -> TextLoaderConfig {
        let mut cols = vec![
            LoaderColumn::new("Label", ColumnType::R4, 0),
            LoaderColumn::range("Numeric", ColumnType::vector(ItemKind::R4, Self::NUMERIC).expect("fixed size"), 1, Self::NUMERIC),
        ];
        for c in 0..Self::CATEGORICAL {
            cols.push(LoaderColumn::new(format!("C{}", c + 1), ColumnType::TEXT, 1 + Self::NUMERIC + c));
        }
        TextLoaderConfig::new(cols)
    }

    pub fn categorical_columns() -> Vec<String> {
        (1..=Self::CATEGORICAL).map(|c| format!("C{c}")).collect()
    }

    /// Writes `rows` rows drawn from stream `seed`.
    pub fn write(&self, out: &mut impl Write, rows: u64, seed: u64) -> io::Result<()> {
        let mut r = rng(seed, 1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut line = String::with_capacity(512);
        let mut fields = String::with_capacity(480);
        for _ in 0..rows {
            line.clear();
            fields.clear();
            let mut logit = self.bias;
            for coef in &self.coefs {
                fields.push('\t');
                if r.gen_bool(Self::NUMERIC_MISSING) {
                    continue;
                }
                let x: f64 = normal.sample(&mut r);
                logit += coef * x;
                use std::fmt::Write as _;
                let _ = write!(fields, "{x:.4}");
            }
            for c in 0..Self::CATEGORICAL {
                fields.push('\t');
                if r.gen_bool(Self::CATEGORICAL_MISSING) {
                    continue;
                }
                let v = self.zipf[c].sample(&mut r) as usize - 1;
                logit += self.weights[c][v];
                fields.push_str(&self.vocab[c][v]);
            }
            let label = r.gen_bool(sigmoid(logit));
            line.push(if label { '1' } else { '0' });
            line.push_str(&fields);
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Short product-review shaped documents with a 0/1 sentiment label.
///
/// Words are random lowercase strings drawn from three vocabularies. A document mostly
/// uses neutral words, with a few words from its own polarity's vocabulary and fewer
/// from the opposite one. Casing and trailing punctuation vary.
pub struct ReviewCorpus {
    positive: Vec<String>,
    negative: Vec<String>,
    neutral: Vec<String>,
    neutral_zipf: Zipf<f64>,
}

impl ReviewCorpus {
    const SENTIMENT_WORDS: usize = 150;
    const NEUTRAL_WORDS: usize = 3000;
    const OWN_RATE: f64 = 0.12;
    const OPPOSITE_RATE: f64 = 0.04;

    pub fn new(seed: u64) -> Self {
        let mut r = rng(seed, 0);
        let word = |r: &mut ChaCha8Rng| -> String {
            let len = r.gen_range(3..=9);
            (0..len).map(|_| r.gen_range(b'a'..=b'z') as char).collect()
        };
        let positive = (0..Self::SENTIMENT_WORDS).map(|_| word(&mut r)).collect();
        let negative = (0..Self::SENTIMENT_WORDS).map(|_| word(&mut r)).collect();
        let neutral = (0..Self::NEUTRAL_WORDS).map(|_| word(&mut r)).collect();
        ReviewCorpus {
            positive,
            negative,
            neutral,
            neutral_zipf: Zipf::new(Self::NEUTRAL_WORDS as u64, 1.0).unwrap(),
        }
    }

    /// Loader layout: `Label` (R4) and `Text`.
    pub fn loader_config() -> TextLoaderConfig {
        TextLoaderConfig::new(vec![
            LoaderColumn::new("Label", ColumnType::R4, 0),
            LoaderColumn::new("Text", ColumnType::TEXT, 1),
        ])
    }

    pub fn write(&self, out: &mut impl Write, docs: u64, seed: u64) -> io::Result<()> {
        let mut r = rng(seed, 1);
        let mut line = String::with_capacity(512);
        for _ in 0..docs {
            line.clear();
            let label = r.gen_bool(0.5);
            let (own, other) = if label {
                (&self.positive, &self.negative)
            } else {
                (&self.negative, &self.positive)
            };
            line.push(if label { '1' } else { '0' });
            line.push('\t');
            let len = r.gen_range(8..=40);
            for i in 0..len {
                let u: f64 = r.gen();
                let w = if u < Self::OWN_RATE {
                    &own[r.gen_range(0..own.len())]
                } else if u < Self::OWN_RATE + Self::OPPOSITE_RATE {
                    &other[r.gen_range(0..other.len())]
                } else {
                    &self.neutral[self.neutral_zipf.sample(&mut r) as usize - 1]
                };
                if i > 0 {
                    line.push(' ');
                }
                match r.gen_range(0..20) {
                    0 => line.push_str(&w.to_uppercase()),
                    1 | 2 => {
                        let mut cs = w.chars();
                        line.extend(cs.next().map(|c| c.to_ascii_uppercase()));
                        line.extend(cs);
                    }
                    _ => line.push_str(w),
                }
                if r.gen_bool(0.08) {
                    line.push([',', '.', '!', '?'][r.gen_range(0..4)]);
                }
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Rows of `y = w·x + b + noise` with standard normal features and Gaussian noise of a
/// known standard deviation.
pub struct LinearTask {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub noise: f64,
}

impl LinearTask {
    pub fn new(dims: usize, noise: f64, seed: u64) -> Self {
        let mut r = rng(seed, 0);
        let n = Normal::new(0.0, 1.0).unwrap();
        LinearTask {
            weights: (0..dims).map(|_| n.sample(&mut r)).collect(),
            bias: n.sample(&mut r),
            noise,
        }
    }

    /// Loader layout: `Label` (R4) and `Features` (Vector<R4,dims>).
    pub fn loader_config(&self) -> TextLoaderConfig {
        let d = self.weights.len();
        TextLoaderConfig::new(vec![
            LoaderColumn::new("Label", ColumnType::R4, 0),
            LoaderColumn::range("Features", ColumnType::vector(ItemKind::R4, d).expect("dims are positive"), 1, d),
        ])
    }

    pub fn write(&self, out: &mut impl Write, rows: u64, seed: u64) -> io::Result<()> {
        use std::fmt::Write as _;
        let mut r = rng(seed, 1);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut line = String::new();
        let mut xs = vec![0.0f32; self.weights.len()];
        for _ in 0..rows {
            line.clear();
            let mut y = self.bias + self.noise * n.sample(&mut r);
            for (x, w) in xs.iter_mut().zip(&self.weights) {
                *x = n.sample(&mut r) as f32;
                y += w * f64::from(*x);
            }
            let _ = write!(line, "{}", y as f32);
            for x in &xs {
                let _ = write!(line, "\t{x}");
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let gen = |seed| {
            let mut a = Vec::new();
            ClickLog::new(seed).write(&mut a, 50, 9).unwrap();
            a
        };
        assert_eq!(gen(1), gen(1));
        assert_ne!(gen(1), gen(2));
        let text = String::from_utf8(gen(1)).unwrap();
        for line in text.lines() {
            assert_eq!(line.split('\t').count(), 1 + ClickLog::NUMERIC + ClickLog::CATEGORICAL);
        }

        let mut docs = Vec::new();
        ReviewCorpus::new(3).write(&mut docs, 20, 4).unwrap();
        let text = String::from_utf8(docs).unwrap();
        assert!(text.lines().all(|l| l.split('\t').count() == 2));
    }

    #[test]
    fn linear_rows_follow_the_model() {
        let task = LinearTask::new(4, 0.0, 5);
        let mut out = Vec::new();
        task.write(&mut out, 10, 6).unwrap();
        for line in String::from_utf8(out).unwrap().lines() {
            let v: Vec<f64> = line.split('\t').map(|s| s.parse().unwrap()).collect();
            let pred: f64 = task.bias + v[1..].iter().zip(&task.weights).map(|(x, w)| x * w).sum::<f64>();
            assert!((pred - v[0]).abs() < 1e-4 * (1.0 + pred.abs()));
        }
    }
}
