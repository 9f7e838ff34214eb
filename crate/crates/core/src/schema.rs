use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorKind, Result};
use crate::types::ColumnType;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }
}

/// Ordered list of columns. Names may repeat; a later column hides earlier columns
/// with the same name, which stay addressable by index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Self {
        Schema { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> Result<&Column> {
        self.columns.get(index).ok_or_else(|| {
            ErrorKind::InvalidColumn {
                index,
                len: self.columns.len(),
            }
            .into()
        })
    }

    /// Greatest index bearing `name`.
    pub fn resolve(&self, name: &str) -> Option<usize> {
        self.columns.iter().rposition(|c| c.name == name)
    }

    /// Like [`Schema::resolve`] but reports a schema error naming the column.
    pub fn require(&self, name: &str) -> Result<usize> {
        self.resolve(name)
            .ok_or_else(|| Error::schema(format!("column '{name}' not found in schema {self}")))
    }

    pub fn is_hidden(&self, index: usize) -> bool {
        match self.columns.get(index) {
            Some(c) => self.resolve(&c.name) != Some(index),
            None => false,
        }
    }

    /// Copy of this schema with `extra` appended. Appended columns hide same-named
    /// earlier ones.
    pub fn appended(&self, extra: impl IntoIterator<Item = Column>) -> Schema {
        let mut columns = self.columns.clone();
        columns.extend(extra);
        Schema { columns }
    }

    /// Indices of the visible (non-hidden) columns.
    pub fn visible(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.columns.len()).filter(|&i| !self.is_hidden(i))
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}:{}", c.name, c.ty)?;
        }
        f.write_str("]")
    }
}

impl FromIterator<Column> for Schema {
    fn from_iter<I: IntoIterator<Item = Column>>(iter: I) -> Self {
        Schema::new(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ItemKind;
    use proptest::prelude::*;

    #[test]
    fn latest_column_wins() {
        let s = Schema::new(vec![
            Column::new("A", ColumnType::R4),
            Column::new("B", ColumnType::TEXT),
            Column::new("A", ColumnType::vector(ItemKind::R4, 5).unwrap()),
        ]);
        assert_eq!(s.resolve("A"), Some(2));
        assert_eq!(s.resolve("B"), Some(1));
        assert_eq!(s.resolve("Z"), None);
        assert!(s.is_hidden(0));
        assert!(!s.is_hidden(2));
        assert_eq!(s.visible().collect::<Vec<_>>(), vec![1, 2]);
        // the hidden column is still addressable
        assert_eq!(s.column(0).unwrap().ty, ColumnType::R4);
    }

    #[test]
    fn missing_name_is_absent() {
        let s = Schema::new(vec![Column::new("A", ColumnType::R4)]);
        assert_eq!(s.resolve("Z"), None);
        assert!(s.require("Z").is_err());
        assert!(s.column(3).is_err());
    }

    proptest! {
        #[test]
        fn resolve_is_max_index(names in proptest::collection::vec(0u8..4, 0..12), probe in 0u8..5) {
            let s: Schema = names.iter().map(|n| Column::new(format!("c{n}"), ColumnType::R4)).collect();
            let name = format!("c{probe}");
            let expected = names.iter().enumerate().filter(|(_, n)| format!("c{n}") == name).map(|(i, _)| i).max();
            prop_assert_eq!(s.resolve(&name), expected);
        }
    }
}
