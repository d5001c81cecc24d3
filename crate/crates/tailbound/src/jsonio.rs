//! Serde helpers for extended reals: infinities serialize as the strings
//! `"inf"` / `"-inf"` so JSON files round-trip exactly.

use serde::de::{self, Deserializer, Unexpected, Visitor};
use serde::ser::Serializer;
use std::fmt;

pub fn serialize_ext<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

struct ExtVisitor;

impl Visitor<'_> for ExtVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a finite number or \"inf\"/\"-inf\"")
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
        match v {
            "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
            "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
            _ => v
                .parse::<f64>()
                .map_err(|_| de::Error::invalid_value(Unexpected::Str(v), &self)),
        }
    }
}

pub fn deserialize_ext<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    d.deserialize_any(ExtVisitor)
}

pub mod ext {
    pub use super::{deserialize_ext as deserialize, serialize_ext as serialize};
}

/// `Vec<(f64, f64)>` of intervals whose endpoints may be infinite,
/// serialized as two-element arrays.
pub mod ext_pairs {
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::Deserialize;

    pub fn serialize<S: Serializer>(v: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        #[derive(serde::Serialize)]
        struct Pair(#[serde(with = "super::ext")] f64, #[serde(with = "super::ext")] f64);
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &(a, b) in v {
            seq.serialize_element(&Pair(a, b))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
        let raw: Vec<[serde_json::Value; 2]> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|[a, b]| Ok((value_to_f64::<D>(&a)?, value_to_f64::<D>(&b)?)))
            .collect()
    }

    fn value_to_f64<'de, D: Deserializer<'de>>(v: &serde_json::Value) -> Result<f64, D::Error> {
        match v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| de::Error::custom("bad number")),
            serde_json::Value::String(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => other.parse().map_err(de::Error::custom),
            },
            other => Err(de::Error::custom(format!("expected number or inf, got {other}"))),
        }
    }
}

/// `Vec<f64>` where entries may be infinite.
pub mod ext_vec {
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::Deserialize;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_infinite() {
                seq.serialize_element(if *x > 0.0 { "inf" } else { "-inf" })?;
            } else {
                seq.serialize_element(x)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let raw: Vec<Raw> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|r| match r {
                Raw::Num(x) => Ok(x),
                Raw::Str(s) => match s.as_str() {
                    "inf" | "+inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    _ => s.parse::<f64>().map_err(|_| {
                        de::Error::invalid_value(Unexpected::Str(&s), &"number or inf")
                    }),
                },
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct Probe {
        #[serde(with = "super::ext")]
        a: f64,
        #[serde(with = "super::ext_vec")]
        v: Vec<f64>,
    }

    #[test]
    fn infinities_round_trip_as_strings() {
        let p = Probe {
            a: f64::INFINITY,
            v: vec![1.5, f64::NEG_INFINITY],
        };
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"inf\""));
        assert!(s.contains("\"-inf\""));
        let q: Probe = serde_json::from_str(&s).unwrap();
        assert!(q.a.is_infinite() && q.a > 0.0);
        assert_eq!(q.v[0], 1.5);
        assert!(q.v[1].is_infinite() && q.v[1] < 0.0);
    }
}
