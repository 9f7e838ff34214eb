//! Tagged little-endian encoding of a fitted stage's parameters.
//!
//! Layout: `DVPM`, u16 version, then entries of `u8 tag, u16 name length, name, payload`
//! in the order they were written. Arrays carry a u32 element count before the items.

use std::collections::BTreeMap;

use crate::error::{Error, ErrorKind, Result};

const MAGIC: &[u8; 4] = b"DVPM";
pub const PARAMS_VERSION: u16 = 1;

const T_U32: u8 = 1;
const T_U64: u8 = 2;
const T_F32: u8 = 3;
const T_F64: u8 = 4;
const T_STR: u8 = 5;
const T_BOOL: u8 = 6;
const T_F32S: u8 = 7;
const T_U32S: u8 = 8;
const T_STRS: u8 = 9;
const T_F64S: u8 = 10;

#[derive(Clone, Debug, PartialEq)]
enum Param {
    U32(u32),
    U64(u64),
    F32(f32),
    F64(f64),
    Str(String),
    Bool(bool),
    F32s(Vec<f32>),
    U32s(Vec<u32>),
    Strs(Vec<String>),
    F64s(Vec<f64>),
}

impl Param {
    fn kind(&self) -> &'static str {
        match self {
            Param::U32(_) => "u32",
            Param::U64(_) => "u64",
            Param::F32(_) => "f32",
            Param::F64(_) => "f64",
            Param::Str(_) => "string",
            Param::Bool(_) => "bool",
            Param::F32s(_) => "f32 array",
            Param::U32s(_) => "u32 array",
            Param::Strs(_) => "string array",
            Param::F64s(_) => "f64 array",
        }
    }
}

/// Builds a params blob.
#[derive(Debug)]
pub struct ParamWriter {
    buf: Vec<u8>,
}

impl Default for ParamWriter {
    fn default() -> Self {
        let mut buf = MAGIC.to_vec();
        buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        ParamWriter { buf }
    }
}

impl ParamWriter {
    pub fn new() -> Self {
        Self::default()
    }

    fn head(&mut self, tag: u8, name: &str) {
        self.buf.push(tag);
        self.buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        self.buf.extend_from_slice(name.as_bytes());
    }

    fn str_payload(&mut self, s: &str) {
        self.buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn u32(&mut self, name: &str, v: u32) -> &mut Self {
        self.head(T_U32, name);
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, name: &str, v: u64) -> &mut Self {
        self.head(T_U64, name);
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f32(&mut self, name: &str, v: f32) -> &mut Self {
        self.head(T_F32, name);
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
        self
    }

    pub fn f64(&mut self, name: &str, v: f64) -> &mut Self {
        self.head(T_F64, name);
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
        self
    }

    pub fn bool(&mut self, name: &str, v: bool) -> &mut Self {
        self.head(T_BOOL, name);
        self.buf.push(v as u8);
        self
    }

    pub fn str(&mut self, name: &str, v: &str) -> &mut Self {
        self.head(T_STR, name);
        self.str_payload(v);
        self
    }

    pub fn f32s(&mut self, name: &str, v: &[f32]) -> &mut Self {
        self.head(T_F32S, name);
        self.buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for x in v {
            self.buf.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        self
    }

    pub fn f64s(&mut self, name: &str, v: &[f64]) -> &mut Self {
        self.head(T_F64S, name);
        self.buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for x in v {
            self.buf.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        self
    }

    pub fn u32s(&mut self, name: &str, v: &[u32]) -> &mut Self {
        self.head(T_U32S, name);
        self.buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
        self
    }

    pub fn strs(&mut self, name: &str, v: &[String]) -> &mut Self {
        self.head(T_STRS, name);
        self.buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for s in v {
            self.str_payload(s);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Decoded params blob with typed, name-based access.
#[derive(Debug)]
pub struct ParamReader {
    entries: BTreeMap<String, Param>,
}

struct Bytes<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Bytes<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::corruption("params blob is truncated"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::corruption("params string is not UTF-8"))
    }
    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(item_bytes) > self.data.len() - self.pos {
            return Err(Error::corruption("params array is longer than the blob"));
        }
        Ok(n)
    }
}

impl ParamReader {
    pub fn parse(data: &[u8]) -> Result<ParamReader> {
        let mut b = Bytes { data, pos: 0 };
        if b.take(4).ok() != Some(&MAGIC[..]) {
            return Err(Error::corruption("params blob has a bad magic"));
        }
        let version = b.u16()?;
        if version != PARAMS_VERSION {
            return Err(ErrorKind::Version {
                found: version as u32,
                supported: PARAMS_VERSION as u32,
            }
            .into());
        }
        let mut entries = BTreeMap::new();
        while b.pos < data.len() {
            let tag = b.take(1)?[0];
            let n = b.u16()? as usize;
            let name = b.string(n)?;
            let value = match tag {
                T_U32 => Param::U32(b.u32()?),
                T_U64 => Param::U64(b.u64()?),
                T_F32 => Param::F32(f32::from_bits(b.u32()?)),
                T_F64 => Param::F64(f64::from_bits(b.u64()?)),
                T_BOOL => Param::Bool(b.take(1)?[0] != 0),
                T_STR => {
                    let n = b.u32()? as usize;
                    Param::Str(b.string(n)?)
                }
                T_F32S => {
                    let n = b.count(4)?;
                    Param::F32s((0..n).map(|_| b.u32().map(f32::from_bits)).collect::<Result<_>>()?)
                }
                T_F64S => {
                    let n = b.count(8)?;
                    Param::F64s((0..n).map(|_| b.u64().map(f64::from_bits)).collect::<Result<_>>()?)
                }
                T_U32S => {
                    let n = b.count(4)?;
                    Param::U32s((0..n).map(|_| b.u32()).collect::<Result<_>>()?)
                }
                T_STRS => {
                    let n = b.count(4)?;
                    let mut v = Vec::with_capacity(n);
                    for _ in 0..n {
                        let len = b.u32()? as usize;
                        v.push(b.string(len)?);
                    }
                    Param::Strs(v)
                }
                t => return Err(Error::corruption(format!("unknown params tag {t}"))),
            };
            if entries.insert(name.clone(), value).is_some() {
                return Err(Error::corruption(format!("params entry '{name}' appears twice")));
            }
        }
        Ok(ParamReader { entries })
    }

    fn get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::corruption(format!("params entry '{name}' is missing")))
    }

    fn wrong(name: &str, want: &str, got: &Param) -> Error {
        Error::corruption(format!("params entry '{name}' should be {want} but is {}", got.kind()))
    }

    pub fn has(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn u32(&self, name: &str) -> Result<u32> {
        match self.get(name)? {
            Param::U32(v) => Ok(*v),
            p => Err(Self::wrong(name, "u32", p)),
        }
    }

    pub fn u64(&self, name: &str) -> Result<u64> {
        match self.get(name)? {
            Param::U64(v) => Ok(*v),
            p => Err(Self::wrong(name, "u64", p)),
        }
    }

    pub fn f32(&self, name: &str) -> Result<f32> {
        match self.get(name)? {
            Param::F32(v) => Ok(*v),
            p => Err(Self::wrong(name, "f32", p)),
        }
    }

    pub fn f64(&self, name: &str) -> Result<f64> {
        match self.get(name)? {
            Param::F64(v) => Ok(*v),
            p => Err(Self::wrong(name, "f64", p)),
        }
    }

    pub fn bool(&self, name: &str) -> Result<bool> {
        match self.get(name)? {
            Param::Bool(v) => Ok(*v),
            p => Err(Self::wrong(name, "bool", p)),
        }
    }

    pub fn str(&self, name: &str) -> Result<&str> {
        match self.get(name)? {
            Param::Str(v) => Ok(v),
            p => Err(Self::wrong(name, "string", p)),
        }
    }

    pub fn f32s(&self, name: &str) -> Result<&[f32]> {
        match self.get(name)? {
            Param::F32s(v) => Ok(v),
            p => Err(Self::wrong(name, "f32 array", p)),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match self.get(name)? {
            Param::F64s(v) => Ok(v),
            p => Err(Self::wrong(name, "f64 array", p)),
        }
    }

    pub fn u32s(&self, name: &str) -> Result<&[u32]> {
        match self.get(name)? {
            Param::U32s(v) => Ok(v),
            p => Err(Self::wrong(name, "u32 array", p)),
        }
    }

    pub fn strs(&self, name: &str) -> Result<&[String]> {
        match self.get(name)? {
            Param::Strs(v) => Ok(v),
            p => Err(Self::wrong(name, "string array", p)),
        }
    }
}
