//! Property values and their byte encoding.
//!
//! Every value is a one-byte type tag followed by its payload. Fixed-width
//! numbers are little-endian; strings and float vectors carry a `u32 LE`
//! count; a composite carries the `u32 LE` byte length of the concatenated
//! encodings of its members.

use std::fmt;

const TAG_STR: u8 = 1;
const TAG_INT: u8 = 2;
const TAG_FLOAT: u8 = 3;
const TAG_FLOATS: u8 = 4;
const TAG_COMPOSITE: u8 = 5;

#[derive(Clone, Debug, PartialEq)]
pub enum PropertyValue {
    Str(String),
    Int(i64),
    Float(f64),
    Floats(Vec<f64>),
    /// Mixed strings and numbers; also used for meta-properties.
    Composite(Vec<PropertyValue>),
}

impl PropertyValue {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            PropertyValue::Str(s) => {
                out.push(TAG_STR);
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
            PropertyValue::Int(i) => {
                out.push(TAG_INT);
                out.extend_from_slice(&i.to_le_bytes());
            }
            PropertyValue::Float(f) => {
                out.push(TAG_FLOAT);
                out.extend_from_slice(&f.to_le_bytes());
            }
            PropertyValue::Floats(v) => {
                out.push(TAG_FLOATS);
                out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                for f in v {
                    out.extend_from_slice(&f.to_le_bytes());
                }
            }
            PropertyValue::Composite(items) => {
                out.push(TAG_COMPOSITE);
                let at = out.len();
                out.extend_from_slice(&[0; 4]);
                for item in items {
                    item.encode_into(out);
                }
                let len = (out.len() - at - 4) as u32;
                out[at..at + 4].copy_from_slice(&len.to_le_bytes());
            }
        }
    }

    /// Decodes one value from the front of `buf`, returning it and the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Option<(Self, usize)> {
        let (&tag, rest) = buf.split_first()?;
        let u32_at = |b: &[u8]| -> Option<usize> {
            Some(u32::from_le_bytes(b.get(..4)?.try_into().ok()?) as usize)
        };
        match tag {
            TAG_STR => {
                let n = u32_at(rest)?;
                let s = std::str::from_utf8(rest.get(4..4 + n)?).ok()?;
                Some((PropertyValue::Str(s.to_string()), 5 + n))
            }
            TAG_INT => Some((
                PropertyValue::Int(i64::from_le_bytes(rest.get(..8)?.try_into().ok()?)),
                9,
            )),
            TAG_FLOAT => Some((
                PropertyValue::Float(f64::from_le_bytes(rest.get(..8)?.try_into().ok()?)),
                9,
            )),
            TAG_FLOATS => {
                let n = u32_at(rest)?;
                let body = rest.get(4..4 + n.checked_mul(8)?)?;
                let v = body
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Some((PropertyValue::Floats(v), 5 + 8 * n))
            }
            TAG_COMPOSITE => {
                let n = u32_at(rest)?;
                let mut body = rest.get(4..4 + n)?;
                let mut items = Vec::new();
                while !body.is_empty() {
                    let (item, used) = PropertyValue::decode(body)?;
                    items.push(item);
                    body = &body[used..];
                }
                Some((PropertyValue::Composite(items), 5 + n))
            }
            _ => None,
        }
    }

    /// Decodes a buffer holding exactly one value.
    pub fn decode_exact(buf: &[u8]) -> Option<Self> {
        match Self::decode(buf)? {
            (v, n) if n == buf.len() => Some(v),
            _ => None,
        }
    }

    /// Parses a CSV cell: integer, then float, else string.
    pub fn parse_loose(s: &str) -> Self {
        if let Ok(i) = s.parse::<i64>() {
            PropertyValue::Int(i)
        } else if let Ok(f) = s.parse::<f64>() {
            PropertyValue::Float(f)
        } else {
            PropertyValue::Str(s.to_string())
        }
    }
}

impl fmt::Display for PropertyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyValue::Str(s) => write!(f, "{s:?}"),
            PropertyValue::Int(i) => write!(f, "{i}"),
            PropertyValue::Float(x) => write!(f, "{x:?}"),
            PropertyValue::Floats(v) => {
                write!(f, "[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x:?}")?;
                }
                write!(f, "]")
            }
            PropertyValue::Composite(items) => {
                write!(f, "(")?;
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl From<&str> for PropertyValue {
    fn from(s: &str) -> Self {
        PropertyValue::Str(s.to_string())
    }
}

impl From<String> for PropertyValue {
    fn from(s: String) -> Self {
        PropertyValue::Str(s)
    }
}

impl From<i64> for PropertyValue {
    fn from(i: i64) -> Self {
        PropertyValue::Int(i)
    }
}

impl From<f64> for PropertyValue {
    fn from(f: f64) -> Self {
        PropertyValue::Float(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn value() -> impl Strategy<Value = PropertyValue> {
        let leaf = prop_oneof![
            ".{0,12}".prop_map(PropertyValue::Str),
            any::<i64>().prop_map(PropertyValue::Int),
            any::<f64>()
                .prop_filter("nan != nan", |f| !f.is_nan())
                .prop_map(PropertyValue::Float),
            proptest::collection::vec(-1e9f64..1e9, 0..5).prop_map(PropertyValue::Floats),
        ];
        leaf.prop_recursive(3, 16, 4, |inner| {
            proptest::collection::vec(inner, 0..4).prop_map(PropertyValue::Composite)
        })
    }

    proptest! {
        #[test]
        fn encoding_roundtrips(v in value()) {
            let enc = v.encode();
            prop_assert_eq!(PropertyValue::decode_exact(&enc), Some(v));
        }
    }

    #[test]
    fn wire_layout() {
        assert_eq!(PropertyValue::Int(30).encode(), [2, 30, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(PropertyValue::from("ab").encode(), [1, 2, 0, 0, 0, b'a', b'b']);
        let c = PropertyValue::Composite(vec![PropertyValue::Int(1)]);
        assert_eq!(c.encode(), [5, 9, 0, 0, 0, 2, 1, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let enc = PropertyValue::Floats(vec![1.0, 2.0]).encode();
        assert!(PropertyValue::decode(&enc[..enc.len() - 1]).is_none());
        assert!(PropertyValue::decode(&[9]).is_none());
    }

    #[test]
    fn loose_parse() {
        assert_eq!(PropertyValue::parse_loose("42"), PropertyValue::Int(42));
        assert_eq!(PropertyValue::parse_loose("0.5"), PropertyValue::Float(0.5));
        assert_eq!(PropertyValue::parse_loose("x"), PropertyValue::from("x"));
    }
}
