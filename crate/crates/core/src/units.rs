//! Length literals in configuration files.
//!
//! Lengths are stored in metres. In text they may be written as a bare
//! number (metres) or as a string with a unit suffix: `"80 nm"`, `"1um"`,
//! `"1 µm"`, `"2.5e-9 m"`.

use crate::error::{Error, Result};

pub fn parse_length(text: &str) -> Result<f64> {
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            c.is_alphabetic() && !((c == 'e' || c == 'E') && is_exponent(t, i))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse length {text:?}")))?;
    let scale = match unit.trim() {
        "" | "m" => 1.0,
        "mm" => 1e-3,
        "um" | "µm" | "μm" => 1e-6,
        "nm" => 1e-9,
        "pm" => 1e-12,
        other => return Err(Error::Config(format!("unknown length unit {other:?} in {text:?}"))),
    };
    if !value.is_finite() {
        return Err(Error::Config(format!("length {text:?} is not finite")));
    }
    Ok(value * scale)
}

// An 'e' is an exponent marker when it follows a digit and precedes a digit or sign.
fn is_exponent(t: &str, i: usize) -> bool {
    let before = t[..i].chars().last().map_or(false, |c| c.is_ascii_digit() || c == '.');
    let after = t[i + 1..].chars().next().map_or(false, |c| c.is_ascii_digit() || c == '-' || c == '+');
    before && after
}

/// Serde adapter: accepts numbers (metres) or suffixed strings, writes metres.
pub mod length {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(*value)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct LengthVisitor;
        impl<'de> Visitor<'de> for LengthVisitor {
            type Value = f64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a length in metres or a string such as \"80 nm\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                super::parse_length(v).map_err(E::custom)
            }
        }
        d.deserialize_any(LengthVisitor)
    }
}

/// Same as [`length`] for a list of lengths.
pub mod length_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    struct Item(#[serde(with = "super::length")] f64);

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(values.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let items: Vec<Item> = Vec::deserialize(d)?;
        Ok(items.into_iter().map(|i| i.0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_length("80 nm").unwrap(), 80.0 * 1e-9);
        assert_eq!(parse_length("1um").unwrap(), 1e-6);
        assert_eq!(parse_length("1 µm").unwrap(), 1e-6);
        assert_eq!(parse_length("2.5e-9").unwrap(), 2.5e-9);
        assert_eq!(parse_length("2.5e-9 m").unwrap(), 2.5e-9);
        assert_eq!(parse_length("1e2nm").unwrap(), 1e2 * 1e-9);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_length("eighty nm").is_err());
        assert!(parse_length("80 furlongs").is_err());
    }
}
