//! Quantities written as `"<number> <unit>"` strings. Bare numbers are
//! rejected for dimensional fields so that centimeters never pass for meters.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

pub trait Dimension {
    const NAME: &'static str;
    const CANONICAL: &'static str;
    /// Accepted unit spellings and their factor to the canonical unit.
    const UNITS: &'static [(&'static str, f64)];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthDim;
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductivityDim;
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleDim;

impl Dimension for LengthDim {
    const NAME: &'static str = "length";
    const CANONICAL: &'static str = "m";
    const UNITS: &'static [(&'static str, f64)] = &[("m", 1.0), ("cm", 1e-2), ("mm", 1e-3)];
}

impl Dimension for ConductivityDim {
    const NAME: &'static str = "conductivity";
    const CANONICAL: &'static str = "S/m";
    const UNITS: &'static [(&'static str, f64)] = &[("S/m", 1.0), ("mS/m", 1e-3), ("S/cm", 1e2)];
}

impl Dimension for AngleDim {
    const NAME: &'static str = "angle";
    const CANONICAL: &'static str = "rad";
    const UNITS: &'static [(&'static str, f64)] = &[("rad", 1.0), ("deg", std::f64::consts::PI / 180.0)];
}

/// A value stored in the canonical unit of its dimension.
#[derive(Clone, Copy, PartialEq)]
pub struct Quantity<D> {
    pub value: f64,
    _dim: PhantomData<D>,
}

pub type Length = Quantity<LengthDim>;
pub type Conductivity = Quantity<ConductivityDim>;
pub type Angle = Quantity<AngleDim>;

impl<D: Dimension> Quantity<D> {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            _dim: PhantomData,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let split = text
            .find(|c: char| c.is_whitespace())
            .ok_or_else(|| format!("{} '{text}' needs a unit, e.g. '1.5 {}'", D::NAME, D::CANONICAL))?;
        let (num, unit) = (&text[..split], text[split..].trim());
        let value: f64 = num
            .parse()
            .map_err(|_| format!("cannot read number '{num}' in {} '{text}'", D::NAME))?;
        if !value.is_finite() {
            return Err(format!("{} '{text}' is not finite", D::NAME));
        }
        let factor = D::UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .map(|(_, f)| *f)
            .ok_or_else(|| {
                let known: Vec<&str> = D::UNITS.iter().map(|(u, _)| *u).collect();
                format!("unknown {} unit '{unit}' (known: {})", D::NAME, known.join(", "))
            })?;
        Ok(Self::new(value * factor))
    }
}

impl<D: Dimension> fmt::Debug for Quantity<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {}", self.value, D::CANONICAL)
    }
}

impl<D: Dimension> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:?} {}", self.value, D::CANONICAL))
    }
}

struct QuantityVisitor<D>(PhantomData<D>);

impl<D: Dimension> Visitor<'_> for QuantityVisitor<D> {
    type Value = Quantity<D>;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "a {} string with an explicit unit such as \"1 {}\"",
            D::NAME,
            D::CANONICAL
        )
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        Quantity::parse(v).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
        Err(E::custom(format!(
            "bare number {v} for a {} is ambiguous; write it with a unit, e.g. \"{v} {}\"",
            D::NAME,
            D::CANONICAL
        )))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
        self.visit_f64(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
        self.visit_f64(v as f64)
    }
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
        d.deserialize_any(QuantityVisitor(PhantomData))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_to_canonical() {
        assert_eq!(Length::parse("2.5 cm").unwrap().value, 0.025);
        assert_eq!(Length::parse("0.1 m").unwrap().value, 0.1);
        assert_eq!(Conductivity::parse("200 S/m").unwrap().value, 200.0);
        assert!((Angle::parse("90 deg").unwrap().value - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_missing_or_wrong_unit() {
        assert!(Length::parse("0.1").is_err());
        assert!(Length::parse("0.1 S/m").is_err());
        assert!(Conductivity::parse("abc S/m").is_err());
    }

    #[test]
    fn rejects_bare_numbers_in_toml() {
        #[derive(Deserialize)]
        struct T {
            #[allow(dead_code)]
            r: Length,
        }
        let err = toml::from_str::<T>("r = 0.1").err().unwrap().to_string();
        assert!(err.contains("ambiguous"), "{err}");
        assert!(toml::from_str::<T>("r = \"10 cm\"").is_ok());
    }

    #[test]
    fn serializes_round_trip() {
        let l = Length::parse("2.5 cm").unwrap();
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(serde_json::from_str::<Length>(&s).unwrap(), l);
    }
}
