//! Numbers given as decimals or exact fractions such as `7/24`.

use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer};

use crate::error::{Error, Result};

/// Parses `a/b` exactly before a single rounding to `f64`; anything else as
/// a decimal.
pub fn parse_number(s: &str) -> Result<f64> {
    let t = s.trim();
    let v = if t.contains('/') {
        let r = Ratio::<i128>::from_str(t).map_err(|_| Error::Number(s.to_string()))?;
        ratio_to_f64(r)
    } else {
        t.parse::<f64>().map_err(|_| Error::Number(s.to_string()))?
    };
    if !v.is_finite() {
        return Err(Error::Number(s.to_string()));
    }
    Ok(v)
}

fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    let (n, d) = (*r.numer(), *r.denom());
    // both sides exact in f64 means the quotient is correctly rounded
    if n.unsigned_abs() < 1 << 53 && d.unsigned_abs() < 1 << 53 {
        n as f64 / d as f64
    } else {
        let q = n / d;
        q as f64 + (n - q * d) as f64 / d as f64
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(parse_number).collect()
}

/// `"1,2,3,4"` (also accepts `-` or whitespace as separators, and `{}` for
/// the empty set).
pub fn parse_label(s: &str) -> Result<Vec<usize>> {
    let t = s.trim().trim_start_matches('{').trim_end_matches('}');
    t.split(|c: char| c == ',' || c == '-' || c.is_whitespace())
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<usize>().map_err(|_| Error::Invalid(format!("bad subset member '{x}' in '{s}'"))))
        .collect()
}

/// Several labels separated by `;`.
pub fn parse_labels(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';').filter(|x| !x.trim().is_empty()).map(parse_label).collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrString {
    Number(f64),
    Text(String),
}

impl NumberOrString {
    fn value(self) -> Result<f64> {
        match self {
            NumberOrString::Number(v) => Ok(v),
            NumberOrString::Text(s) => parse_number(&s),
        }
    }
}

/// Accepts JSON numbers or fraction strings.
pub fn de_number<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    NumberOrString::deserialize(d)?.value().map_err(serde::de::Error::custom)
}

pub fn de_numbers<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<NumberOrString>::deserialize(d)?
        .into_iter()
        .map(|x| x.value().map_err(serde::de::Error::custom))
        .collect()
}

pub fn de_matrix<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
    Vec::<Vec<NumberOrString>>::deserialize(d)?
        .into_iter()
        .map(|row| row.into_iter().map(|x| x.value().map_err(serde::de::Error::custom)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_round_once() {
        assert_eq!(parse_number("7/24").unwrap(), 7.0 / 24.0);
        assert_eq!(parse_number(" -5/12 ").unwrap(), -5.0 / 12.0);
        assert_eq!(parse_number("0.5").unwrap(), 0.5);
        assert_eq!(parse_number("1e-3").unwrap(), 0.001);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("abc").is_err());
        assert!(parse_number("inf").is_err());
        assert_eq!(parse_list("7/24,7/24, 7/24").unwrap(), vec![7.0 / 24.0; 3]);
    }

    #[test]
    fn labels() {
        assert_eq!(parse_label("1,2,3,4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_label("{1-4}").unwrap(), vec![1, 4]);
        assert_eq!(parse_label("{}").unwrap(), Vec::<usize>::new());
        assert_eq!(parse_labels("1,2;3,4").unwrap(), vec![vec![1, 2], vec![3, 4]]);
        assert!(parse_label("1,x").is_err());
    }

    #[test]
    fn json_accepts_strings() {
        #[derive(Deserialize)]
        struct T {
            #[serde(deserialize_with = "de_numbers")]
            v: Vec<f64>,
        }
        let t: T = serde_json::from_str(r#"{"v": [0.25, "7/24", "1"]}"#).unwrap();
        assert_eq!(t.v, vec![0.25, 7.0 / 24.0, 1.0]);
        assert!(serde_json::from_str::<T>(r#"{"v": ["x"]}"#).is_err());
    }
}
