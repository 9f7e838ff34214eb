//! Text featurization primitives and their fused composition.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hash::slot;
use super::onehot::check_bits;
use super::{require_column, stateless_estimator, ColumnPairs, FnMapper, NumItem};
use crate::dataview::{DataView, RowCursor};
use crate::error::{Error, Result};
use crate::pipeline::{ParamReader, ParamWriter, Transformer};
use crate::schema::{Column, Schema};
use crate::text::Text;
use crate::types::{ColumnType, ItemKind};
use crate::value::{AnyGetter, ColumnValue, Getter};
use crate::vbuffer::VBuffer;

pub(super) const NORMALIZE_OP: &str = "transform.normalize_text";
pub(super) const TOKENIZE_OP: &str = "transform.tokenize";
pub(super) const NGRAM_OP: &str = "transform.ngram_hash";
pub(super) const L2_OP: &str = "transform.l2_normalize";
pub(super) const FEATURIZE_OP: &str = "transform.featurize_text";

/// Separator placed between the tokens of a word n-gram before hashing.
const GRAM_JOIN: u8 = 0x01;

/// Lowercases `s` and replaces every character that is neither alphanumeric nor
/// whitespace with a space.
pub fn normalize_into(s: &str, out: &mut String) {
    out.clear();
    for c in s.chars() {
        if c.is_alphanumeric() || c.is_whitespace() {
            out.extend(c.to_lowercase());
        } else {
            out.push(' ');
        }
    }
}

/// Whitespace-separated tokens of `s`, empties dropped.
pub fn tokenize_into<'a>(s: &'a str) -> impl Iterator<Item = &'a str> + 'a {
    s.split_whitespace()
}

/// Appends the hash slot of every contiguous word n-gram for each length in `lengths`.
pub fn word_ngram_indices(tokens: &[&str], lengths: &[u32], bits: u32, out: &mut Vec<u32>) {
    let mut scratch = Vec::new();
    word_slots(tokens.len(), |i| tokens[i].as_bytes(), lengths, bits, &mut scratch, out);
}

fn word_slots<'a>(
    n_tokens: usize,
    token: impl Fn(usize) -> &'a [u8],
    lengths: &[u32],
    bits: u32,
    scratch: &mut Vec<u8>,
    out: &mut Vec<u32>,
) {
    for &n in lengths {
        let n = n as usize;
        if n == 0 || n > n_tokens {
            continue;
        }
        for start in 0..=n_tokens - n {
            scratch.clear();
            for k in start..start + n {
                if k > start {
                    scratch.push(GRAM_JOIN);
                }
                scratch.extend_from_slice(token(k));
            }
            out.push(slot(scratch, bits));
        }
    }
}

/// Appends the hash slot of every contiguous character n-gram of `text`.
pub fn char_ngram_indices(text: &str, lengths: &[u32], bits: u32, out: &mut Vec<u32>) {
    let mut bounds = Vec::new();
    char_slots(text, lengths, bits, &mut bounds, out);
}

fn char_slots(text: &str, lengths: &[u32], bits: u32, bounds: &mut Vec<usize>, out: &mut Vec<u32>) {
    bounds.clear();
    bounds.extend(text.char_indices().map(|(i, _)| i));
    bounds.push(text.len());
    let n_chars = bounds.len() - 1;
    let bytes = text.as_bytes();
    for &n in lengths {
        let n = n as usize;
        if n == 0 || n > n_chars {
            continue;
        }
        for start in 0..=n_chars - n {
            out.push(slot(&bytes[bounds[start]..bounds[start + n]], bits));
        }
    }
}

/// Turns a list of hash slots into a count vector of length `dim`. Sorts `slots`.
fn counts_into(slots: &mut [u32], dim: usize, dst: &mut VBuffer<f32>) {
    slots.sort_unstable();
    dst.start_sparse(dim);
    let mut k = 0;
    while k < slots.len() {
        let s = slots[k];
        let run = slots[k..].iter().take_while(|&&x| x == s).count();
        dst.push_sparse(s as usize, run as f32);
        k += run;
    }
    dst.finish_auto();
}

/// Divides every stored value by the vector's Euclidean norm; zero vectors stay zero.
fn l2_scale<T: NumItem>(v: &mut VBuffer<T>) {
    let sq: f64 = v.values().iter().map(|x| x.to_f64() * x.to_f64()).sum();
    if sq > 0.0 {
        let norm = sq.sqrt();
        for x in v.values_mut() {
            *x = T::from_f64(x.to_f64() / norm);
        }
    }
}

/// Writes `a ++ b` into `dst` the way [`Concat`](super::Concat) does.
fn concat2(a: &VBuffer<f32>, b: &VBuffer<f32>, dst: &mut VBuffer<f32>) {
    dst.start_sparse(a.len() + b.len());
    for (offset, v) in [(0, a), (a.len(), b)] {
        for (i, &x) in v.iter_stored() {
            if x != 0.0 {
                dst.push_sparse(offset + i, x);
            }
        }
    }
    dst.finish_auto();
}

fn text_column(schema: &Schema, name: &str, op: &str) -> Result<usize> {
    Ok(require_column(schema, name, op, "Text", |t| *t == ColumnType::TEXT)?.0)
}

macro_rules! stateless_transformer {
    ($t:ty, $op:expr, $save:expr) => {
        impl Transformer for $t {
            fn op_id(&self) -> &'static str {
                $op
            }
            fn output_schema(&self, input: &Schema) -> Result<Schema> {
                Ok(self.plan(input)?.output_schema(input))
            }
            fn apply(&self, input: Arc<dyn DataView>) -> Result<Arc<dyn DataView>> {
                Ok(self.plan(input.schema())?.apply(input))
            }
            fn save_params(&self, w: &mut ParamWriter) {
                let f: fn(&$t, &mut ParamWriter) = $save;
                f(self, w)
            }
        }
        stateless_estimator!($t);
    };
}

/// Lowercases text and turns punctuation into spaces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizeText {
    pub pairs: ColumnPairs,
}

impl NormalizeText {
    pub fn new(pairs: ColumnPairs) -> Self {
        NormalizeText { pairs }
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        Ok(Arc::new(NormalizeText::new(ColumnPairs::load(r)?)))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        self.pairs.validate(NORMALIZE_OP)?;
        let mut m = FnMapper::default();
        for (name, out) in self.pairs.pairs() {
            let c = text_column(schema, name, NORMALIZE_OP)?;
            m.push(Column::new(out, ColumnType::TEXT), vec![c], move |cur| {
                let mut g = cur.get_getter::<Text>(c)?;
                let mut src = Text::default();
                Ok(Text::into_any_getter(Getter::new(move |dst: &mut Text| {
                    g.get(&mut src)?;
                    if src.is_missing() {
                        dst.set_missing();
                    } else {
                        normalize_into(src.as_str(), dst.buffer_mut());
                    }
                    Ok(())
                })))
            });
        }
        Ok(m)
    }
}

stateless_transformer!(NormalizeText, NORMALIZE_OP, |s, w| s.pairs.save(w));

/// Splits text on whitespace into a variable-length token vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tokenize {
    pub pairs: ColumnPairs,
}

impl Tokenize {
    pub fn new(pairs: ColumnPairs) -> Self {
        Tokenize { pairs }
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        Ok(Arc::new(Tokenize::new(ColumnPairs::load(r)?)))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        self.pairs.validate(TOKENIZE_OP)?;
        let mut m = FnMapper::default();
        for (name, out) in self.pairs.pairs() {
            let c = text_column(schema, name, TOKENIZE_OP)?;
            m.push(Column::new(out, ColumnType::var_vector(ItemKind::Text)), vec![c], move |cur| {
                let mut g = cur.get_getter::<Text>(c)?;
                let mut src = Text::default();
                Ok(VBuffer::<Text>::into_any_getter(Getter::new(move |dst: &mut VBuffer<Text>| {
                    g.get(&mut src)?;
                    dst.refill_dense(tokenize_into(src.as_str()), |t, s| t.set(s));
                    Ok(())
                })))
            });
        }
        Ok(m)
    }
}

stateless_transformer!(Tokenize, TOKENIZE_OP, |s, w| s.pairs.save(w));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NGramMode {
    /// Consumes a token vector.
    Word,
    /// Consumes (normalized) text.
    Char,
}

/// Hashes every n-gram of the given lengths into a count vector of `2^hash_bits` slots.
/// An empty length list yields the zero vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramHash {
    #[serde(flatten)]
    pub pairs: ColumnPairs,
    pub mode: NGramMode,
    pub lengths: Vec<u32>,
    pub hash_bits: u32,
}

impl NGramHash {
    pub fn new(pairs: ColumnPairs, mode: NGramMode, lengths: &[u32], hash_bits: u32) -> Result<Self> {
        let mut h = NGramHash {
            pairs,
            mode,
            lengths: lengths.to_vec(),
            hash_bits,
        };
        h.validate()?;
        h.lengths = canonical_lengths(&h.lengths);
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        self.pairs.validate(NGRAM_OP)?;
        check_bits(NGRAM_OP, self.hash_bits)?;
        check_lengths(NGRAM_OP, &self.lengths)
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        let mode = match r.str("mode")? {
            "word" => NGramMode::Word,
            "char" => NGramMode::Char,
            m => return Err(Error::corruption(format!("unknown n-gram mode '{m}'"))),
        };
        let h = NGramHash {
            pairs: ColumnPairs::load(r)?,
            mode,
            lengths: r.u32s("lengths")?.to_vec(),
            hash_bits: r.u32("hash_bits")?,
        };
        h.validate().map_err(|e| Error::corruption(e.to_string()))?;
        Ok(Arc::new(h))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        self.validate()?;
        let bits = self.hash_bits;
        let dim = 1usize << bits;
        let out_ty = ColumnType::vector(ItemKind::R4, dim)?;
        let lengths: Arc<[u32]> = canonical_lengths(&self.lengths).into();
        let mut m = FnMapper::default();
        for (name, out) in self.pairs.pairs() {
            let lengths = lengths.clone();
            match self.mode {
                NGramMode::Char => {
                    let c = text_column(schema, name, NGRAM_OP)?;
                    m.push(Column::new(out, out_ty), vec![c], move |cur| {
                        char_gram_getter(cur, c, lengths.clone(), bits)
                    });
                }
                NGramMode::Word => {
                    let (c, _) = require_column(schema, name, NGRAM_OP, "a Text vector", |t| {
                        t.is_vector() && t.item() == ItemKind::Text
                    })?;
                    m.push(Column::new(out, out_ty), vec![c], move |cur| {
                        word_gram_getter(cur, c, lengths.clone(), bits)
                    });
                }
            }
        }
        Ok(m)
    }
}

fn char_gram_getter(cur: &mut dyn RowCursor, c: usize, lengths: Arc<[u32]>, bits: u32) -> Result<AnyGetter> {
    let mut g = cur.get_getter::<Text>(c)?;
    let mut src = Text::default();
    let mut bounds = Vec::new();
    let mut slots = Vec::new();
    let dim = 1usize << bits;
    Ok(VBuffer::<f32>::into_any_getter(Getter::new(move |dst: &mut VBuffer<f32>| {
        g.get(&mut src)?;
        slots.clear();
        char_slots(src.as_str(), &lengths, bits, &mut bounds, &mut slots);
        counts_into(&mut slots, dim, dst);
        Ok(())
    })))
}

fn word_gram_getter(cur: &mut dyn RowCursor, c: usize, lengths: Arc<[u32]>, bits: u32) -> Result<AnyGetter> {
    let mut g = cur.get_getter::<VBuffer<Text>>(c)?;
    let mut src = VBuffer::<Text>::default();
    let mut dense = Vec::new();
    let mut scratch = Vec::new();
    let mut slots = Vec::new();
    let dim = 1usize << bits;
    Ok(VBuffer::<f32>::into_any_getter(Getter::new(move |dst: &mut VBuffer<f32>| {
        g.get(&mut src)?;
        slots.clear();
        let tokens: &[Text] = if src.is_dense() {
            src.values()
        } else {
            src.copy_dense_into(&mut dense);
            &dense
        };
        word_slots(tokens.len(), |i| tokens[i].as_str().as_bytes(), &lengths, bits, &mut scratch, &mut slots);
        counts_into(&mut slots, dim, dst);
        Ok(())
    })))
}

fn check_lengths(op: &str, lengths: &[u32]) -> Result<()> {
    if lengths.contains(&0) {
        return Err(Error::params(op, "n-gram lengths must be positive"));
    }
    Ok(())
}

/// Sorted, deduplicated copy.
fn canonical_lengths(lengths: &[u32]) -> Vec<u32> {
    let mut v = lengths.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

stateless_transformer!(NGramHash, NGRAM_OP, |s, w| {
    s.pairs.save(w);
    w.str(
        "mode",
        match s.mode {
            NGramMode::Word => "word",
            NGramMode::Char => "char",
        },
    )
    .u32s("lengths", &canonical_lengths(&s.lengths))
    .u32("hash_bits", s.hash_bits);
});

/// Scales numeric vectors to unit Euclidean norm.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct L2Normalize {
    pub pairs: ColumnPairs,
}

impl L2Normalize {
    pub fn new(pairs: ColumnPairs) -> Self {
        L2Normalize { pairs }
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        Ok(Arc::new(L2Normalize::new(ColumnPairs::load(r)?)))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        self.pairs.validate(L2_OP)?;
        let mut m = FnMapper::default();
        for (name, out) in self.pairs.pairs() {
            let (c, ty) = require_column(schema, name, L2_OP, "an R4 or R8 vector", |t| {
                t.is_vector() && t.item().is_float()
            })?;
            m.push(Column::new(out, ty), vec![c], move |cur| {
                fn getter<T: NumItem>(cur: &mut dyn RowCursor, c: usize) -> Result<AnyGetter>
                where
                    VBuffer<T>: ColumnValue,
                {
                    let mut g = cur.get_getter::<VBuffer<T>>(c)?;
                    Ok(VBuffer::<T>::into_any_getter(Getter::new(move |dst: &mut VBuffer<T>| {
                        g.get(dst)?;
                        l2_scale(dst);
                        Ok(())
                    })))
                }
                if ty.item() == ItemKind::R8 {
                    getter::<f64>(cur, c)
                } else {
                    getter::<f32>(cur, c)
                }
            });
        }
        Ok(m)
    }
}

stateless_transformer!(L2Normalize, L2_OP, |s, w| s.pairs.save(w));

/// Word and character n-gram settings for [`FeaturizeText`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramSpec {
    #[serde(default)]
    pub word_ngram_lengths: Vec<u32>,
    #[serde(default)]
    pub char_ngram_lengths: Vec<u32>,
    pub hash_bits: u32,
}

impl NGramSpec {
    pub fn new(word: &[u32], chars: &[u32], hash_bits: u32) -> Result<Self> {
        let s = NGramSpec {
            word_ngram_lengths: canonical_lengths(word),
            char_ngram_lengths: canonical_lengths(chars),
            hash_bits,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(FEATURIZE_OP, self.hash_bits)?;
        check_lengths(FEATURIZE_OP, &self.word_ngram_lengths)?;
        check_lengths(FEATURIZE_OP, &self.char_ngram_lengths)?;
        if self.word_ngram_lengths.is_empty() && self.char_ngram_lengths.is_empty() {
            return Err(Error::params(FEATURIZE_OP, "word and char n-gram lengths are both empty"));
        }
        Ok(())
    }

    /// Slots per extractor.
    pub fn dim(&self) -> usize {
        1 << self.hash_bits
    }
}

/// Text to a fixed `Vector<R4, 2 * 2^hash_bits>`: normalize, tokenize, hash word and
/// character n-gram counts, L2-normalize each block and concatenate (word block first).
/// Produces exactly what the chain of primitive transforms produces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizeText {
    #[serde(flatten)]
    pub pairs: ColumnPairs,
    #[serde(flatten)]
    pub spec: NGramSpec,
}

impl FeaturizeText {
    pub fn new(pairs: ColumnPairs, spec: NGramSpec) -> Result<Self> {
        let f = FeaturizeText { pairs, spec };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        self.pairs.validate(FEATURIZE_OP)?;
        self.spec.validate()
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        let f = FeaturizeText {
            pairs: ColumnPairs::load(r)?,
            spec: NGramSpec {
                word_ngram_lengths: r.u32s("word_ngram_lengths")?.to_vec(),
                char_ngram_lengths: r.u32s("char_ngram_lengths")?.to_vec(),
                hash_bits: r.u32("hash_bits")?,
            },
        };
        f.validate().map_err(|e| Error::corruption(e.to_string()))?;
        Ok(Arc::new(f))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        self.validate()?;
        let dim = self.spec.dim();
        let out_ty = ColumnType::vector(ItemKind::R4, 2 * dim)?;
        let spec = Arc::new(NGramSpec {
            word_ngram_lengths: canonical_lengths(&self.spec.word_ngram_lengths),
            char_ngram_lengths: canonical_lengths(&self.spec.char_ngram_lengths),
            hash_bits: self.spec.hash_bits,
        });
        let mut m = FnMapper::default();
        for (name, out) in self.pairs.pairs() {
            let c = text_column(schema, name, FEATURIZE_OP)?;
            let spec = spec.clone();
            m.push(Column::new(out, out_ty), vec![c], move |cur| featurize_getter(cur, c, spec.clone()));
        }
        Ok(m)
    }
}

fn featurize_getter(cur: &mut dyn RowCursor, c: usize, spec: Arc<NGramSpec>) -> Result<AnyGetter> {
    let mut g = cur.get_getter::<Text>(c)?;
    let mut src = Text::default();
    let mut norm = String::new();
    let mut tokens: Vec<(usize, usize)> = Vec::new();
    let mut scratch = Vec::new();
    let mut bounds = Vec::new();
    let mut slots = Vec::new();
    let mut word = VBuffer::default();
    let mut chars = VBuffer::default();
    let bits = spec.hash_bits;
    let dim = spec.dim();
    Ok(VBuffer::<f32>::into_any_getter(Getter::new(move |dst: &mut VBuffer<f32>| {
        g.get(&mut src)?;
        normalize_into(src.as_str(), &mut norm);

        tokens.clear();
        let base = norm.as_ptr() as usize;
        tokens.extend(tokenize_into(&norm).map(|t| {
            let start = t.as_ptr() as usize - base;
            (start, start + t.len())
        }));
        slots.clear();
        let bytes = norm.as_bytes();
        word_slots(
            tokens.len(),
            |i| &bytes[tokens[i].0..tokens[i].1],
            &spec.word_ngram_lengths,
            bits,
            &mut scratch,
            &mut slots,
        );
        counts_into(&mut slots, dim, &mut word);
        l2_scale(&mut word);

        slots.clear();
        char_slots(&norm, &spec.char_ngram_lengths, bits, &mut bounds, &mut slots);
        counts_into(&mut slots, dim, &mut chars);
        l2_scale(&mut chars);

        concat2(&word, &chars, dst);
        Ok(())
    })))
}

stateless_transformer!(FeaturizeText, FEATURIZE_OP, |s, w| {
    s.pairs.save(w);
    w.u32s("word_ngram_lengths", &canonical_lengths(&s.spec.word_ngram_lengths))
        .u32s("char_ngram_lengths", &canonical_lengths(&s.spec.char_ngram_lengths))
        .u32("hash_bits", s.spec.hash_bits);
});
