//! Doubles as hexadecimal text, `[-]0x1.<hex>p<exp>`, so stored numbers
//! round-trip bit for bit. Infinities and NaN are written `inf`, `-inf`
//! and `nan`.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const MANT_BITS: u32 = 52;
const MANT_MASK: u64 = (1 << MANT_BITS) - 1;

pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> MANT_BITS) & 0x7ff) as i64;
    let mant = bits & MANT_MASK;
    if exp == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let digits = format!("{mant:013x}");
    let digits = digits.trim_end_matches('0');
    let frac = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    format!("{sign}0x{lead}{frac}p{e:+}")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("not a hexadecimal float: `{0}`")]
pub struct ParseError(pub String);

pub fn parse(s: &str) -> Result<f64, ParseError> {
    match s {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    hexf_parse::parse_hexf64(s, false).map_err(|_| ParseError(s.into()))
}

/// A double that serializes as hexadecimal text. It deserializes from that
/// text or from a plain number, so hand-written configs can use decimals.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Hf(pub f64);

impl From<f64> for Hf {
    fn from(x: f64) -> Self {
        Hf(x)
    }
}

impl Serialize for Hf {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(self.0))
    }
}

struct HfVisitor;

impl Visitor<'_> for HfVisitor {
    type Value = Hf;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a hexadecimal float string")
    }
    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Hf, E> {
        Ok(Hf(v))
    }
    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Hf, E> {
        Ok(Hf(v as f64))
    }
    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Hf, E> {
        Ok(Hf(v as f64))
    }
    fn visit_str<E: de::Error>(self, v: &str) -> Result<Hf, E> {
        parse(v).map(Hf).map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Hf {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(HfVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_forms() {
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(-0.5), "-0x1p-1");
        assert_eq!(format(3.0), "0x1.8p+1");
        assert_eq!(format(0.0), "0x0p+0");
        assert_eq!(format(-0.0), "-0x0p+0");
        assert_eq!(format(f64::MIN_POSITIVE / 2.0), "0x0.8p-1022");
        assert_eq!(parse("0x1.8p+1").unwrap(), 3.0);
    }

    #[test]
    fn specials() {
        for x in [f64::INFINITY, f64::NEG_INFINITY, f64::MAX, f64::MIN_POSITIVE, 5e-324, -0.0] {
            assert_eq!(parse(&format(x)).unwrap().to_bits(), x.to_bits(), "{x}");
        }
        assert!(parse(&format(f64::NAN)).unwrap().is_nan());
        assert!(parse("0x1.g").is_err());
    }
}
