use std::fmt;

/// A text value. The missing value is distinct from the empty string.
///
/// `clone_from` reuses the destination's string capacity, which is what lets text
/// getters fill caller buffers without allocating.
#[derive(Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Text {
    value: String,
    missing: bool,
}

impl Text {
    pub fn new(s: impl Into<String>) -> Self {
        Text {
            value: s.into(),
            missing: false,
        }
    }

    pub fn missing() -> Self {
        Text {
            value: String::new(),
            missing: true,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.missing
    }

    /// The string content; empty for missing values.
    pub fn as_str(&self) -> &str {
        &self.value
    }

    pub fn set(&mut self, s: &str) {
        self.value.clear();
        self.value.push_str(s);
        self.missing = false;
    }

    pub fn set_missing(&mut self) {
        self.value.clear();
        self.missing = true;
    }

    /// Clears to a present empty string and hands out the buffer for appending.
    pub fn buffer_mut(&mut self) -> &mut String {
        self.value.clear();
        self.missing = false;
        &mut self.value
    }

    pub fn capacity(&self) -> usize {
        self.value.capacity()
    }
}

impl Clone for Text {
    fn clone(&self) -> Self {
        Text {
            value: self.value.clone(),
            missing: self.missing,
        }
    }

    fn clone_from(&mut self, source: &Self) {
        self.value.clone_from(&source.value);
        self.missing = source.missing;
    }
}

impl fmt::Debug for Text {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.missing {
            f.write_str("<missing>")
        } else {
            fmt::Debug::fmt(&self.value, f)
        }
    }
}

impl fmt::Display for Text {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

impl From<&str> for Text {
    fn from(s: &str) -> Self {
        Text::new(s)
    }
}

impl From<String> for Text {
    fn from(s: String) -> Self {
        Text::new(s)
    }
}
