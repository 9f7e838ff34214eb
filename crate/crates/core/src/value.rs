//! Typed column values, getters and their type-erased forms.
//!
//! Every column type maps onto one Rust type:
//!
//! | column type        | Rust type          |
//! |--------------------|--------------------|
//! | `Bool`             | `bool`             |
//! | `I4`               | `i32`              |
//! | `R4`               | `f32`              |
//! | `R8`               | `f64`              |
//! | `Text`             | [`Text`]           |
//! | `Vector<K, ..>`    | [`VBuffer<K>`]     |
//!
//! Missing values: NaN for `R4`/`R8`, `i32::MIN` for `I4`, [`Text::missing`] for text.

use std::fmt;

use crate::error::Result;
use crate::text::Text;
use crate::types::{ColumnType, ItemKind};
use crate::vbuffer::VBuffer;

/// Missing-value encoding for `I4`.
pub const I4_MISSING: i32 = i32::MIN;

/// A per-column value producer bound to one cursor.
///
/// Activity and type checks happen when the getter is acquired; a call only writes the
/// current row's value into `dst`, reusing its buffers.
pub struct Getter<T>(Box<dyn FnMut(&mut T) -> Result<()> + Send>);

impl<T> Getter<T> {
    pub fn new(f: impl FnMut(&mut T) -> Result<()> + Send + 'static) -> Self {
        Getter(Box::new(f))
    }

    #[inline]
    pub fn get(&mut self, dst: &mut T) -> Result<()> {
        (self.0)(dst)
    }
}

impl<T> fmt::Debug for Getter<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Getter")
    }
}

/// Rust types that can be the value of a column.
pub trait ColumnValue: Clone + Default + fmt::Debug + PartialEq + Send + Sync + 'static {
    /// Human-readable type name used in error messages.
    const NAME: &'static str;

    fn matches(ty: &ColumnType) -> bool;
    fn into_any_getter(g: Getter<Self>) -> AnyGetter;
    fn from_any_getter(g: AnyGetter) -> Option<Getter<Self>>;
    fn column_vec(v: &ColumnVec) -> Option<&Vec<Self>>;
    fn column_vec_mut(v: &mut ColumnVec) -> Option<&mut Vec<Self>>;
    fn into_value(self) -> Value;
    fn from_value(v: &Value) -> Option<&Self>;
    fn from_value_mut(v: &mut Value) -> Option<&mut Self>;
    /// Rough heap plus inline footprint, used for cache accounting.
    fn approx_bytes(&self) -> usize;
    fn empty_column() -> ColumnVec;
    /// Logical length for vector values, `None` for scalars.
    fn vector_len(&self) -> Option<usize>;
}

/// Primitive (non-vector) column values; the items of vectors.
pub trait Item: ColumnValue {
    const KIND: ItemKind;
    fn is_default(&self) -> bool;
}

macro_rules! impl_item {
    ($t:ty, $kind:ident, $default:expr) => {
        impl Item for $t {
            const KIND: ItemKind = ItemKind::$kind;
            #[inline]
            fn is_default(&self) -> bool {
                let f: fn(&$t) -> bool = $default;
                f(self)
            }
        }
    };
}

impl_item!(bool, Bool, |v| !*v);
impl_item!(i32, I4, |v| *v == 0);
impl_item!(f32, R4, |v| *v == 0.0);
impl_item!(f64, R8, |v| *v == 0.0);
impl_item!(Text, Text, |v| !v.is_missing() && v.as_str().is_empty());

macro_rules! value_types {
    ($( $variant:ident : $t:ty => $matcher:expr, $name:expr, $bytes:expr, $vlen:expr ;)*) => {
        /// A getter whose value type has been erased.
        pub enum AnyGetter {
            $( $variant(Getter<$t>), )*
        }

        /// A growable column of values of one type.
        #[derive(Clone, Debug, PartialEq)]
        pub enum ColumnVec {
            $( $variant(Vec<$t>), )*
        }

        /// A single dynamically-typed value.
        #[derive(Clone, Debug, PartialEq)]
        pub enum Value {
            $( $variant($t), )*
        }

        $(
        impl ColumnValue for $t {
            const NAME: &'static str = $name;
            fn matches(ty: &ColumnType) -> bool {
                let f: fn(&ColumnType) -> bool = $matcher;
                f(ty)
            }
            fn into_any_getter(g: Getter<Self>) -> AnyGetter {
                AnyGetter::$variant(g)
            }
            fn from_any_getter(g: AnyGetter) -> Option<Getter<Self>> {
                match g {
                    AnyGetter::$variant(g) => Some(g),
                    #[allow(unreachable_patterns)]
                    _ => None,
                }
            }
            fn column_vec(v: &ColumnVec) -> Option<&Vec<Self>> {
                match v {
                    ColumnVec::$variant(v) => Some(v),
                    #[allow(unreachable_patterns)]
                    _ => None,
                }
            }
            fn column_vec_mut(v: &mut ColumnVec) -> Option<&mut Vec<Self>> {
                match v {
                    ColumnVec::$variant(v) => Some(v),
                    #[allow(unreachable_patterns)]
                    _ => None,
                }
            }
            fn into_value(self) -> Value {
                Value::$variant(self)
            }
            fn from_value(v: &Value) -> Option<&Self> {
                match v {
                    Value::$variant(v) => Some(v),
                    #[allow(unreachable_patterns)]
                    _ => None,
                }
            }
            fn from_value_mut(v: &mut Value) -> Option<&mut Self> {
                match v {
                    Value::$variant(v) => Some(v),
                    #[allow(unreachable_patterns)]
                    _ => None,
                }
            }
            fn approx_bytes(&self) -> usize {
                let f: fn(&$t) -> usize = $bytes;
                f(self)
            }
            fn empty_column() -> ColumnVec {
                ColumnVec::$variant(Vec::new())
            }
            fn vector_len(&self) -> Option<usize> {
                let f: fn(&$t) -> Option<usize> = $vlen;
                f(self)
            }
        }
        )*

        impl AnyGetter {
            /// Writes the current value into row `row` of `col`, growing it by one when
            /// `row == col.len()`. Existing slots are overwritten in place so their
            /// buffers are reused.
            pub fn fill_into(&mut self, col: &mut ColumnVec, row: usize) -> Result<()> {
                match (self, col) {
                    $( (AnyGetter::$variant(g), ColumnVec::$variant(v)) => {
                        if row < v.len() {
                            g.get(&mut v[row])
                        } else {
                            let mut x = <$t>::default();
                            g.get(&mut x)?;
                            v.push(x);
                            Ok(())
                        }
                    } )*
                    _ => Err(crate::error::Error::contract("getter and buffer types differ")),
                }
            }

            /// Writes the current value into `dst`, reusing its buffers when the
            /// variant already matches.
            pub fn fill_value(&mut self, dst: &mut Value) -> Result<()> {
                match self {
                    $( AnyGetter::$variant(g) => {
                        if let Value::$variant(v) = dst {
                            g.get(v)
                        } else {
                            let mut x = <$t>::default();
                            g.get(&mut x)?;
                            *dst = Value::$variant(x);
                            Ok(())
                        }
                    } )*
                }
            }
        }

        impl ColumnVec {
            pub fn len(&self) -> usize {
                match self {
                    $( ColumnVec::$variant(v) => v.len(), )*
                }
            }

            pub fn is_empty(&self) -> bool {
                self.len() == 0
            }

            pub fn truncate(&mut self, n: usize) {
                match self {
                    $( ColumnVec::$variant(v) => v.truncate(n), )*
                }
            }

            /// Approximate memory footprint of the first `rows` values.
            pub fn approx_bytes(&self, rows: usize) -> usize {
                match self {
                    $( ColumnVec::$variant(v) => v[..rows.min(v.len())].iter().map(|x| x.approx_bytes()).sum(), )*
                }
            }

            /// Approximate memory footprint of the value at `row`.
            pub fn value_bytes(&self, row: usize) -> usize {
                match self {
                    $( ColumnVec::$variant(v) => v.get(row).map_or(0, |x| x.approx_bytes()), )*
                }
            }

            /// Clones row `row` out as a [`Value`].
            pub fn value_at(&self, row: usize) -> Option<Value> {
                match self {
                    $( ColumnVec::$variant(v) => v.get(row).cloned().map(Value::$variant), )*
                }
            }

            /// Appends `value`; fails when the value's type differs from the column's.
            pub fn push_value(&mut self, value: Value) -> Result<()> {
                match (self, value) {
                    $( (ColumnVec::$variant(v), Value::$variant(x)) => { v.push(x); Ok(()) } )*
                    (c, v) => Err(crate::error::Error::schema(format!(
                        "cannot store {} in a {} column", v.type_name(), c.type_name()
                    ))),
                }
            }

            fn type_name(&self) -> &'static str {
                match self {
                    $( ColumnVec::$variant(_) => <$t as ColumnValue>::NAME, )*
                }
            }
        }

        impl Value {
            pub fn type_name(&self) -> &'static str {
                match self {
                    $( Value::$variant(_) => <$t as ColumnValue>::NAME, )*
                }
            }

            /// True when this value can be stored in a column of type `ty`.
            pub fn fits(&self, ty: &ColumnType) -> bool {
                match self {
                    $( Value::$variant(_) => <$t as ColumnValue>::matches(ty), )*
                }
            }

            /// Copies `self` into `dst` reusing `dst`'s buffers when the types agree.
            pub fn assign_to(&self, dst: &mut Value) {
                match (self, dst) {
                    $( (Value::$variant(s), Value::$variant(d)) => d.clone_from(s), )*
                    (s, d) => *d = s.clone(),
                }
            }
        }
    };
}

fn scalar(kind: ItemKind) -> impl Fn(&ColumnType) -> bool {
    move |ty| *ty == ColumnType::Scalar(kind)
}

fn vector_of(kind: ItemKind) -> impl Fn(&ColumnType) -> bool {
    move |ty| matches!(ty, ColumnType::Vector { item, .. } if *item == kind)
}

fn vbuf_bytes<T: ColumnValue>(v: &VBuffer<T>) -> usize {
    48 + v.values().iter().map(|x| x.approx_bytes()).sum::<usize>()
        + v.indices().map_or(0, |i| i.len() * 4)
}

value_types! {
    Bool: bool => |t| scalar(ItemKind::Bool)(t), "Bool", |_| 1, |_| None;
    I4: i32 => |t| scalar(ItemKind::I4)(t), "I4", |_| 4, |_| None;
    R4: f32 => |t| scalar(ItemKind::R4)(t), "R4", |_| 4, |_| None;
    R8: f64 => |t| scalar(ItemKind::R8)(t), "R8", |_| 8, |_| None;
    Text: Text => |t| scalar(ItemKind::Text)(t), "Text", |t| 32 + t.as_str().len(), |_| None;
    VecBool: VBuffer<bool> => |t| vector_of(ItemKind::Bool)(t), "Vector<Bool>", vbuf_bytes, |v| Some(v.len());
    VecI4: VBuffer<i32> => |t| vector_of(ItemKind::I4)(t), "Vector<I4>", vbuf_bytes, |v| Some(v.len());
    VecR4: VBuffer<f32> => |t| vector_of(ItemKind::R4)(t), "Vector<R4>", vbuf_bytes, |v| Some(v.len());
    VecR8: VBuffer<f64> => |t| vector_of(ItemKind::R8)(t), "Vector<R8>", vbuf_bytes, |v| Some(v.len());
    VecText: VBuffer<Text> => |t| vector_of(ItemKind::Text)(t), "Vector<Text>", vbuf_bytes, |v| Some(v.len());
}

/// Binds a local type alias `$T` to the Rust type of column type `$ty` and evaluates
/// `$body` with it.
#[macro_export]
macro_rules! dispatch_type {
    ($ty:expr, $T:ident => $body:expr) => {{
        use $crate::types::{ColumnType as __Ct, ItemKind as __K};
        match $ty {
            __Ct::Scalar(__K::Bool) => { type $T = bool; $body }
            __Ct::Scalar(__K::I4) => { type $T = i32; $body }
            __Ct::Scalar(__K::R4) => { type $T = f32; $body }
            __Ct::Scalar(__K::R8) => { type $T = f64; $body }
            __Ct::Scalar(__K::Text) => { type $T = $crate::text::Text; $body }
            __Ct::Vector { item: __K::Bool, .. } => { type $T = $crate::vbuffer::VBuffer<bool>; $body }
            __Ct::Vector { item: __K::I4, .. } => { type $T = $crate::vbuffer::VBuffer<i32>; $body }
            __Ct::Vector { item: __K::R4, .. } => { type $T = $crate::vbuffer::VBuffer<f32>; $body }
            __Ct::Vector { item: __K::R8, .. } => { type $T = $crate::vbuffer::VBuffer<f64>; $body }
            __Ct::Vector { item: __K::Text, .. } => { type $T = $crate::vbuffer::VBuffer<$crate::text::Text>; $body }
        }
    }};
}

impl ColumnVec {
    /// Empty column for values of type `ty`.
    pub fn for_type(ty: &ColumnType) -> ColumnVec {
        dispatch_type!(*ty, T => T::empty_column())
    }
}

impl Value {
    /// The missing value of a scalar column type, or an empty vector.
    pub fn missing_for(ty: &ColumnType) -> Value {
        match ty {
            ColumnType::Scalar(ItemKind::Bool) => Value::Bool(false),
            ColumnType::Scalar(ItemKind::I4) => Value::I4(I4_MISSING),
            ColumnType::Scalar(ItemKind::R4) => Value::R4(f32::NAN),
            ColumnType::Scalar(ItemKind::R8) => Value::R8(f64::NAN),
            ColumnType::Scalar(ItemKind::Text) => Value::Text(Text::missing()),
            ty => dispatch_type!(*ty, T => T::default().into_value()),
        }
    }

    /// Bitwise equality: floats compare by bit pattern so NaNs are equal to themselves.
    pub fn bit_eq(&self, other: &Value) -> bool {
        fn vb<T: Item>(a: &VBuffer<T>, b: &VBuffer<T>, eq: impl Fn(&T, &T) -> bool) -> bool {
            a.len() == b.len()
                && a.is_dense() == b.is_dense()
                && a.indices() == b.indices()
                && a.values().len() == b.values().len()
                && a.values().iter().zip(b.values()).all(|(x, y)| eq(x, y))
        }
        match (self, other) {
            (Value::R4(a), Value::R4(b)) => a.to_bits() == b.to_bits(),
            (Value::R8(a), Value::R8(b)) => a.to_bits() == b.to_bits(),
            (Value::VecR4(a), Value::VecR4(b)) => vb(a, b, |x, y| x.to_bits() == y.to_bits()),
            (Value::VecR8(a), Value::VecR8(b)) => vb(a, b, |x, y| x.to_bits() == y.to_bits()),
            (a, b) => a == b,
        }
    }
}

impl Value {
    /// JSON form: scalars map to JSON scalars with NaN as `null`, dense vectors to
    /// arrays and sparse vectors to `{"size", "indices", "values"}`.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        fn num(x: f64) -> J {
            serde_json::Number::from_f64(x).map_or(J::Null, J::Number)
        }
        fn vec<T>(v: &VBuffer<T>, item: impl Fn(&T) -> J) -> J {
            let values: Vec<J> = v.values().iter().map(&item).collect();
            match v.indices() {
                None => J::Array(values),
                Some(idx) => serde_json::json!({ "size": v.len(), "indices": idx, "values": values }),
            }
        }
        match self {
            Value::Bool(v) => J::Bool(*v),
            Value::I4(v) => J::from(*v),
            Value::R4(v) => num(f64::from(*v)),
            Value::R8(v) => num(*v),
            Value::Text(v) => J::String(v.as_str().to_string()),
            Value::VecBool(v) => vec(v, |x| J::Bool(*x)),
            Value::VecI4(v) => vec(v, |x| J::from(*x)),
            Value::VecR4(v) => vec(v, |x| num(f64::from(*x))),
            Value::VecR8(v) => vec(v, |x| num(*x)),
            Value::VecText(v) => vec(v, |x| J::String(x.as_str().to_string())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn vec<T: fmt::Display>(f: &mut fmt::Formatter<'_>, v: &VBuffer<T>) -> fmt::Result {
            write!(f, "{}:", v.len())?;
            for (k, (i, x)) in v.iter_stored().enumerate() {
                if k > 0 {
                    f.write_str(",")?;
                }
                if v.is_dense() {
                    write!(f, "{x}")?;
                } else {
                    write!(f, "{i}={x}")?;
                }
            }
            Ok(())
        }
        match self {
            Value::Bool(v) => write!(f, "{v}"),
            Value::I4(v) => write!(f, "{v}"),
            Value::R4(v) => write!(f, "{v}"),
            Value::R8(v) => write!(f, "{v}"),
            Value::Text(v) => write!(f, "{v}"),
            Value::VecBool(v) => vec(f, v),
            Value::VecI4(v) => vec(f, v),
            Value::VecR4(v) => vec(f, v),
            Value::VecR8(v) => vec(f, v),
            Value::VecText(v) => vec(f, v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_form() {
        assert_eq!(Value::R4(f32::NAN).to_json(), serde_json::Value::Null);
        assert_eq!(Value::R4(0.5).to_json(), serde_json::json!(0.5));
        assert_eq!(Value::VecI4(VBuffer::dense(vec![1, 2])).to_json(), serde_json::json!([1, 2]));
        let sparse = VBuffer::sparse(5, vec![3], vec![2.0f32]).unwrap();
        assert_eq!(
            Value::VecR4(sparse).to_json(),
            serde_json::json!({"size": 5, "indices": [3], "values": [2.0]})
        );
    }

    #[test]
    fn type_matching() {
        assert!(f32::matches(&ColumnType::R4));
        assert!(!f32::matches(&ColumnType::R8));
        assert!(VBuffer::<f32>::matches(&ColumnType::vector(ItemKind::R4, 3).unwrap()));
        assert!(VBuffer::<f32>::matches(&ColumnType::var_vector(ItemKind::R4)));
        assert!(!VBuffer::<f32>::matches(&ColumnType::R4));
        assert!(Text::matches(&ColumnType::TEXT));
    }

    #[test]
    fn fill_into_grows_then_reuses() {
        let mut n = 0;
        let mut g = f32::into_any_getter(Getter::new(move |d: &mut f32| {
            n += 1;
            *d = n as f32;
            Ok(())
        }));
        let mut col = ColumnVec::for_type(&ColumnType::R4);
        g.fill_into(&mut col, 0).unwrap();
        g.fill_into(&mut col, 1).unwrap();
        g.fill_into(&mut col, 0).unwrap();
        assert_eq!(col, ColumnVec::R4(vec![3.0, 2.0]));
    }

    #[test]
    fn missing_values() {
        assert!(matches!(Value::missing_for(&ColumnType::R4), Value::R4(x) if x.is_nan()));
        assert_eq!(Value::missing_for(&ColumnType::I4), Value::I4(i32::MIN));
        assert_eq!(
            Value::missing_for(&ColumnType::TEXT),
            Value::Text(Text::missing())
        );
    }

    #[test]
    fn bit_eq_treats_nan_as_equal() {
        assert!(Value::R4(f32::NAN).bit_eq(&Value::R4(f32::NAN)));
        assert!(!Value::R4(0.0).bit_eq(&Value::R4(-0.0)));
    }
}
