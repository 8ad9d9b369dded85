//! Serde helpers for complex numbers stored as `[re, im]` pairs.
//!
//! Plain JSON numbers are accepted on input and read as purely real values.

use num_complex::Complex64;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Newtype wrapper so complex values can sit inside derived structs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cx(pub Complex64);

impl From<Complex64> for Cx {
    fn from(z: Complex64) -> Self {
        Cx(z)
    }
}

impl From<Cx> for Complex64 {
    fn from(z: Cx) -> Self {
        z.0
    }
}

impl Serialize for Cx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(2))?;
        seq.serialize_element(&self.0.re)?;
        seq.serialize_element(&self.0.im)?;
        seq.end()
    }
}

struct CxVisitor;

impl<'de> Visitor<'de> for CxVisitor {
    type Value = Cx;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a [re, im] pair")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Cx, E> {
        Ok(Cx(Complex64::new(v, 0.0)))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Cx, E> {
        Ok(Cx(Complex64::new(v as f64, 0.0)))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Cx, E> {
        Ok(Cx(Complex64::new(v as f64, 0.0)))
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Cx, A::Error> {
        let re: f64 = seq
            .next_element()?
            .ok_or_else(|| de::Error::invalid_length(0, &self))?;
        let im: f64 = seq
            .next_element()?
            .ok_or_else(|| de::Error::invalid_length(1, &self))?;
        if seq.next_element::<f64>()?.is_some() {
            return Err(de::Error::invalid_length(3, &self));
        }
        Ok(Cx(Complex64::new(re, im)))
    }
}

impl<'de> Deserialize<'de> for Cx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Cx, D::Error> {
        d.deserialize_any(CxVisitor)
    }
}

/// `#[serde(with = "cjson::one")]` for a single `Complex64` field.
pub mod one {
    use super::Cx;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        Cx(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        Cx::deserialize(d).map(|c| c.0)
    }
}

/// `#[serde(with = "cjson::vec")]` for `Vec<Complex64>` fields.
pub mod vec {
    use super::Cx;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<Cx> = v.iter().map(|z| Cx(*z)).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Vec::<Cx>::deserialize(d).map(|v| v.into_iter().map(|c| c.0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_and_scalar_forms() {
        let a: Cx = serde_json::from_str("[1.5, -2]").unwrap();
        assert_eq!(a.0, Complex64::new(1.5, -2.0));
        let b: Cx = serde_json::from_str("3").unwrap();
        assert_eq!(b.0, Complex64::new(3.0, 0.0));
        assert!(serde_json::from_str::<Cx>("[1, 2, 3]").is_err());
        assert_eq!(serde_json::to_string(&a).unwrap(), "[1.5,-2.0]");
    }
}
