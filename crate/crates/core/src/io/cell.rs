//! Text form of single values.
//!
//! Scalars are written as plain decimal text; missing numbers and missing text are
//! empty cells. Vectors use `N:v1,...,vN` (dense) or `N:i1=v1,...` (sparse) where `N` is
//! the logical length. Inside a vector, text items escape `\`, `,` and `=` with a
//! backslash.

use std::io::Write;

use super::tsv::{write_f32, write_f64};
use crate::text::Text;
use crate::types::ColumnType;
use crate::value::{Item, Value, I4_MISSING};
use crate::vbuffer::VBuffer;

/// Items that have a text form.
pub(crate) trait TextItem: Item {
    fn missing_item() -> Self;
    /// Parses `s` into `dst`. An empty `s` is the missing item. Returns false when `s`
    /// does not parse; `dst` then holds the missing item.
    fn parse_into(s: &str, dst: &mut Self) -> bool;
    fn write_text(&self, out: &mut Vec<u8>);
}

impl TextItem for bool {
    fn missing_item() -> Self {
        false
    }
    fn parse_into(s: &str, dst: &mut Self) -> bool {
        let s = s.trim();
        *dst = match s {
            "" | "0" | "false" | "False" | "FALSE" => false,
            "1" | "true" | "True" | "TRUE" => true,
            _ => {
                *dst = false;
                return false;
            }
        };
        true
    }
    fn write_text(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(if *self { b"true" } else { b"false" });
    }
}

impl TextItem for i32 {
    fn missing_item() -> Self {
        I4_MISSING
    }
    fn parse_into(s: &str, dst: &mut Self) -> bool {
        let s = s.trim();
        if s.is_empty() {
            *dst = I4_MISSING;
            return true;
        }
        match s.parse() {
            Ok(v) => {
                *dst = v;
                true
            }
            Err(_) => {
                *dst = I4_MISSING;
                false
            }
        }
    }
    fn write_text(&self, out: &mut Vec<u8>) {
        if *self != I4_MISSING {
            let _ = write!(out, "{self}");
        }
    }
}

macro_rules! float_item {
    ($t:ty, $write:ident) => {
        impl TextItem for $t {
            fn missing_item() -> Self {
                <$t>::NAN
            }
            fn parse_into(s: &str, dst: &mut Self) -> bool {
                let s = s.trim();
                if s.is_empty() {
                    *dst = <$t>::NAN;
                    return true;
                }
                match s.parse() {
                    Ok(v) => {
                        *dst = v;
                        true
                    }
                    Err(_) => {
                        *dst = <$t>::NAN;
                        false
                    }
                }
            }
            fn write_text(&self, out: &mut Vec<u8>) {
                $write(out, *self)
            }
        }
    };
}

float_item!(f32, write_f32);
float_item!(f64, write_f64);

impl TextItem for Text {
    fn missing_item() -> Self {
        Text::missing()
    }
    fn parse_into(s: &str, dst: &mut Self) -> bool {
        dst.set(s);
        true
    }
    fn write_text(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.as_str().as_bytes());
    }
}

/// Parses one field into `dst`, whose variant already matches `ty`. Returns false when
/// the field does not parse; `dst` then holds the type's missing value.
pub(crate) fn parse_cell(ty: &ColumnType, field: &[u8], quoted: bool, dst: &mut Value) -> bool {
    let Ok(s) = std::str::from_utf8(field) else {
        set_missing(ty, dst);
        return false;
    };
    let size = match ty {
        ColumnType::Vector { size, .. } => size.map(|n| n.get() as usize),
        _ => None,
    };
    match dst {
        Value::Bool(v) => bool::parse_into(s, v),
        Value::I4(v) => i32::parse_into(s, v),
        Value::R4(v) => f32::parse_into(s, v),
        Value::R8(v) => f64::parse_into(s, v),
        Value::Text(v) => {
            if s.is_empty() && !quoted {
                v.set_missing();
            } else {
                v.set(s);
            }
            true
        }
        Value::VecBool(v) => parse_vector(s, size, v),
        Value::VecI4(v) => parse_vector(s, size, v),
        Value::VecR4(v) => parse_vector(s, size, v),
        Value::VecR8(v) => parse_vector(s, size, v),
        Value::VecText(v) => parse_vector(s, size, v),
    }
}

/// Parses one vector item from a range field.
pub(crate) fn parse_range_item(field: &[u8], quoted: bool, dst: &mut Value, k: usize) -> bool {
    fn item<T: TextItem>(s: Option<&str>, v: &mut VBuffer<T>, k: usize) -> bool {
        let slot = &mut v.values_mut()[k];
        match s {
            Some(s) => T::parse_into(s, slot),
            None => {
                *slot = T::missing_item();
                false
            }
        }
    }
    let s = std::str::from_utf8(field).ok();
    match dst {
        Value::VecBool(v) => item(s, v, k),
        Value::VecI4(v) => item(s, v, k),
        Value::VecR4(v) => item(s, v, k),
        Value::VecR8(v) => item(s, v, k),
        Value::VecText(v) => {
            let slot = &mut v.values_mut()[k];
            match s {
                Some("") if !quoted => slot.set_missing(),
                Some(s) => slot.set(s),
                None => {
                    slot.set_missing();
                    return false;
                }
            }
            true
        }
        _ => false,
    }
}

/// Resets `dst` to a dense vector of `n` slots ready for [`parse_range_item`].
pub(crate) fn start_range(dst: &mut Value, n: usize) {
    fn start<T: TextItem>(v: &mut VBuffer<T>, n: usize) {
        if !(v.is_dense() && v.len() == n) {
            v.start_dense(n);
            for _ in 0..n {
                v.push_dense(T::missing_item());
            }
        }
    }
    match dst {
        Value::VecBool(v) => start(v, n),
        Value::VecI4(v) => start(v, n),
        Value::VecR4(v) => start(v, n),
        Value::VecR8(v) => start(v, n),
        Value::VecText(v) => start(v, n),
        _ => {}
    }
}

fn set_missing(ty: &ColumnType, dst: &mut Value) {
    match (ty, dst) {
        (ColumnType::Vector { size: Some(n), .. }, dst) => {
            fn fill<T: TextItem>(v: &mut VBuffer<T>, n: usize) {
                v.start_dense(n);
                for _ in 0..n {
                    v.push_dense(T::missing_item());
                }
            }
            let n = n.get() as usize;
            match dst {
                Value::VecBool(v) => fill(v, n),
                Value::VecI4(v) => fill(v, n),
                Value::VecR4(v) => fill(v, n),
                Value::VecR8(v) => fill(v, n),
                Value::VecText(v) => fill(v, n),
                _ => {}
            }
        }
        (ty, dst) => *dst = Value::missing_for(ty),
    }
}

/// Splits a vector body on unescaped commas into `(index, value)` items, unescaping
/// backslashes. Returns `None` for a dangling escape.
fn split_items(body: &str) -> Option<Vec<(Option<String>, String)>> {
    let mut items = Vec::new();
    if body.is_empty() {
        return Some(items);
    }
    let mut key: Option<String> = None;
    let mut cur = String::new();
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => cur.push(chars.next()?),
            ',' => items.push((key.take(), std::mem::take(&mut cur))),
            '=' if key.is_none() => key = Some(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    items.push((key, cur));
    Some(items)
}

fn parse_vector<T: TextItem>(s: &str, size: Option<usize>, dst: &mut VBuffer<T>) -> bool {
    if parse_vector_inner(s, size, dst).is_some() {
        return true;
    }
    match size {
        Some(n) => {
            dst.start_dense(n);
            for _ in 0..n {
                dst.push_dense(T::missing_item());
            }
        }
        None => dst.start_dense(0),
    }
    false
}

fn parse_vector_inner<T: TextItem>(s: &str, size: Option<usize>, dst: &mut VBuffer<T>) -> Option<()> {
    let (n, body) = s.split_once(':')?;
    let n: usize = n.trim().parse().ok()?;
    if size.is_some_and(|size| size != n) {
        return None;
    }
    let items = split_items(body)?;
    let sparse = items.first().is_some_and(|(k, _)| k.is_some()) || (items.is_empty() && n > 0);
    if sparse {
        dst.start_sparse(n);
        let mut last = None;
        for (k, v) in &items {
            let i: usize = k.as_deref()?.trim().parse().ok()?;
            if i >= n || last.is_some_and(|l| l >= i) {
                return None;
            }
            last = Some(i);
            let mut x = T::default();
            if !T::parse_into(v, &mut x) {
                return None;
            }
            dst.push_sparse(i, x);
        }
    } else {
        if items.len() != n || items.iter().any(|(k, _)| k.is_some()) {
            return None;
        }
        dst.start_dense(n);
        for (_, v) in &items {
            let mut x = T::default();
            if !T::parse_into(v, &mut x) {
                return None;
            }
            dst.push_dense(x);
        }
    }
    Some(())
}

fn write_vector<T: TextItem>(v: &VBuffer<T>, out: &mut Vec<u8>, escape: bool) {
    let _ = write!(out, "{}:", v.len());
    let mut scratch = Vec::new();
    for (k, (i, x)) in v.iter_stored().enumerate() {
        if k > 0 {
            out.push(b',');
        }
        if !v.is_dense() {
            let _ = write!(out, "{i}=");
        }
        if escape {
            scratch.clear();
            x.write_text(&mut scratch);
            for &b in &scratch {
                if matches!(b, b'\\' | b',' | b'=') {
                    out.push(b'\\');
                }
                out.push(b);
            }
        } else {
            x.write_text(out);
        }
    }
}

/// Appends the cell text of `v`, unquoted. Returns false for a missing text value, which
/// must be written as an empty unquoted field.
pub(crate) fn write_cell(v: &Value, out: &mut Vec<u8>) -> bool {
    match v {
        Value::Bool(x) => x.write_text(out),
        Value::I4(x) => x.write_text(out),
        Value::R4(x) => x.write_text(out),
        Value::R8(x) => x.write_text(out),
        Value::Text(t) => {
            if t.is_missing() {
                return false;
            }
            t.write_text(out)
        }
        Value::VecBool(x) => write_vector(x, out, false),
        Value::VecI4(x) => write_vector(x, out, false),
        Value::VecR4(x) => write_vector(x, out, false),
        Value::VecR8(x) => write_vector(x, out, false),
        Value::VecText(x) => write_vector(x, out, true),
    }
    true
}
