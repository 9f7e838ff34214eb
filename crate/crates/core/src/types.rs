//! Column types.
//!
//! A column is either a scalar of one primitive [`ItemKind`] or a vector of such items.
//! Vectors never nest: the item of a vector is always primitive.

use std::fmt;
use std::num::NonZeroU32;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ItemKind {
    Bool,
    I4,
    R4,
    R8,
    Text,
}

impl ItemKind {
    pub fn name(self) -> &'static str {
        match self {
            ItemKind::Bool => "Bool",
            ItemKind::I4 => "I4",
            ItemKind::R4 => "R4",
            ItemKind::R8 => "R8",
            ItemKind::Text => "Text",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ItemKind::I4 | ItemKind::R4 | ItemKind::R8)
    }

    pub fn is_float(self) -> bool {
        matches!(self, ItemKind::R4 | ItemKind::R8)
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            ItemKind::Bool => 0,
            ItemKind::I4 => 1,
            ItemKind::R4 => 2,
            ItemKind::R8 => 3,
            ItemKind::Text => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<ItemKind> {
        Some(match tag {
            0 => ItemKind::Bool,
            1 => ItemKind::I4,
            2 => ItemKind::R4,
            3 => ItemKind::R8,
            4 => ItemKind::Text,
            _ => return None,
        })
    }
}

impl FromStr for ItemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Bool" => ItemKind::Bool,
            "I4" => ItemKind::I4,
            "R4" => ItemKind::R4,
            "R8" => ItemKind::R8,
            "Text" => ItemKind::Text,
            _ => return Err(Error::schema(format!("unknown item kind '{s}'"))),
        })
    }
}

/// The type of one column.
///
/// Textual form (used in JSON): `Bool`, `I4`, `R4`, `R8`, `Text`, `Vector<R4,5>` for a
/// fixed-size vector and `Vector<Text>` for a variable-length one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColumnType {
    Scalar(ItemKind),
    Vector {
        item: ItemKind,
        /// `None` means the length varies per row.
        size: Option<NonZeroU32>,
    },
}

impl ColumnType {
    pub const BOOL: ColumnType = ColumnType::Scalar(ItemKind::Bool);
    pub const I4: ColumnType = ColumnType::Scalar(ItemKind::I4);
    pub const R4: ColumnType = ColumnType::Scalar(ItemKind::R4);
    pub const R8: ColumnType = ColumnType::Scalar(ItemKind::R8);
    pub const TEXT: ColumnType = ColumnType::Scalar(ItemKind::Text);

    /// Fixed-size vector type. Fails when `size` is zero or does not fit in 32 bits.
    pub fn vector(item: ItemKind, size: usize) -> Result<ColumnType> {
        let size = u32::try_from(size)
            .ok()
            .and_then(NonZeroU32::new)
            .ok_or_else(|| Error::shape(format!("vector size must be in 1..=2^32-1, got {size}")))?;
        Ok(ColumnType::Vector {
            item,
            size: Some(size),
        })
    }

    pub fn var_vector(item: ItemKind) -> ColumnType {
        ColumnType::Vector { item, size: None }
    }

    pub fn item(&self) -> ItemKind {
        match *self {
            ColumnType::Scalar(k) => k,
            ColumnType::Vector { item, .. } => item,
        }
    }

    pub fn is_vector(&self) -> bool {
        matches!(self, ColumnType::Vector { .. })
    }

    /// Number of values per row: 1 for scalars, the size for fixed vectors, `None` for
    /// variable-length vectors.
    pub fn value_count(&self) -> Option<usize> {
        match *self {
            ColumnType::Scalar(_) => Some(1),
            ColumnType::Vector { size, .. } => size.map(|s| s.get() as usize),
        }
    }

    pub fn is_known_size_vector(&self) -> bool {
        matches!(self, ColumnType::Vector { size: Some(_), .. })
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnType::Scalar(k) => f.write_str(k.name()),
            ColumnType::Vector { item, size: None } => write!(f, "Vector<{}>", item.name()),
            ColumnType::Vector {
                item,
                size: Some(n),
            } => write!(f, "Vector<{},{}>", item.name(), n),
        }
    }
}

impl FromStr for ColumnType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("Vector<").and_then(|r| r.strip_suffix('>')) {
            let mut parts = inner.split(',').map(str::trim);
            let item: ItemKind = parts.next().unwrap_or_default().parse()?;
            let ty = match parts.next() {
                None => ColumnType::var_vector(item),
                Some(n) => {
                    let n: usize = n
                        .parse()
                        .map_err(|_| Error::schema(format!("bad vector size in '{s}'")))?;
                    ColumnType::vector(item, n)?
                }
            };
            if parts.next().is_some() {
                return Err(Error::schema(format!("bad column type '{s}'")));
            }
            Ok(ty)
        } else {
            Ok(ColumnType::Scalar(s.parse()?))
        }
    }
}

impl Serialize for ColumnType {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ColumnType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
