//! Temperature units.
//!
//! Everything inside the crate runs in Kelvin and hours. Fahrenheit and
//! Celsius only show up when reading or writing files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TempUnit {
    #[serde(rename = "K")]
    Kelvin,
    #[serde(rename = "F")]
    Fahrenheit,
    #[serde(rename = "C")]
    Celsius,
}

impl TempUnit {
    pub fn tag(self) -> &'static str {
        match self {
            TempUnit::Kelvin => "K",
            TempUnit::Fahrenheit => "F",
            TempUnit::Celsius => "C",
        }
    }

    fn to_kelvin(self, value: f64) -> f64 {
        match self {
            TempUnit::Kelvin => value,
            TempUnit::Celsius => value + 273.15,
            TempUnit::Fahrenheit => (value - 32.0) * 5.0 / 9.0 + 273.15,
        }
    }

    fn from_kelvin(self, kelvin: f64) -> f64 {
        match self {
            TempUnit::Kelvin => kelvin,
            TempUnit::Celsius => kelvin - 273.15,
            TempUnit::Fahrenheit => (kelvin - 273.15) * 9.0 / 5.0 + 32.0,
        }
    }

    /// Size of one degree of this unit in Kelvin.
    fn degree_in_kelvin(self) -> f64 {
        match self {
            TempUnit::Fahrenheit => 5.0 / 9.0,
            TempUnit::Kelvin | TempUnit::Celsius => 1.0,
        }
    }
}

impl FromStr for TempUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "K" | "k" => Ok(TempUnit::Kelvin),
            "F" | "f" | "°F" => Ok(TempUnit::Fahrenheit),
            "C" | "c" | "°C" => Ok(TempUnit::Celsius),
            other => Err(Error::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for TempUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Affine conversion of an absolute temperature.
pub fn convert_temperature(value: f64, from: TempUnit, to: TempUnit) -> f64 {
    if from == to {
        return value;
    }
    to.from_kelvin(from.to_kelvin(value))
}

/// Converts a temperature difference (a spread or a standard deviation), which
/// scales but does not shift.
pub fn convert_interval(value: f64, from: TempUnit, to: TempUnit) -> f64 {
    if from == to {
        return value;
    }
    value * from.degree_in_kelvin() / to.degree_in_kelvin()
}

/// Convenience for the very common Fahrenheit literal.
pub fn fahrenheit(value: f64) -> f64 {
    convert_temperature(value, TempUnit::Fahrenheit, TempUnit::Kelvin)
}

/// Parses strings such as `"70 F"`, `"294.26K"` or `"21.5 C"`.
pub fn parse_quantity(text: &str) -> Result<(f64, TempUnit)> {
    let text = text.trim();
    let split = text
        .rfind(|c: char| c.is_ascii_digit() || c == '.')
        .map(|i| i + 1)
        .ok_or_else(|| Error::parse("temperature", format!("no number in `{text}`")))?;
    let (number, unit) = text.split_at(split);
    if unit.trim().is_empty() {
        return Err(Error::parse(
            "temperature",
            format!("`{text}` is missing a unit suffix (K, F or C)"),
        ));
    }
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|e| Error::parse("temperature", format!("`{text}`: {e}")))?;
    Ok((value, unit.parse()?))
}

/// Parses an absolute temperature with unit suffix and returns Kelvin.
pub fn parse_temperature(text: &str) -> Result<f64> {
    let (v, u) = parse_quantity(text)?;
    Ok(convert_temperature(v, u, TempUnit::Kelvin))
}

/// Parses a temperature difference with unit suffix and returns Kelvin.
pub fn parse_interval(text: &str) -> Result<f64> {
    let (v, u) = parse_quantity(text)?;
    Ok(convert_interval(v, u, TempUnit::Kelvin))
}

/// Formats a Kelvin value so that [`parse_temperature`] recovers it bit-exactly.
pub fn format_kelvin(value: f64) -> String {
    format!("{value:?} K")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn eighty_fahrenheit() {
        let k = convert_temperature(80.0, TempUnit::Fahrenheit, TempUnit::Kelvin);
        assert_abs_diff_eq!(k, 299.817, epsilon = 5e-4);
    }

    #[test]
    fn zero_celsius() {
        assert_eq!(
            convert_temperature(0.0, TempUnit::Celsius, TempUnit::Kelvin),
            273.15
        );
    }

    #[test]
    fn identity() {
        assert_eq!(
            convert_temperature(301.7, TempUnit::Kelvin, TempUnit::Kelvin),
            301.7
        );
    }

    #[test]
    fn unknown_unit() {
        assert!(matches!("R".parse::<TempUnit>(), Err(Error::UnknownUnit(_))));
        assert!(parse_temperature("70 R").is_err());
        assert!(parse_temperature("70").is_err());
    }

    #[test]
    fn parses_suffixes() {
        assert_abs_diff_eq!(parse_temperature("85 F").unwrap(), 302.594, epsilon = 5e-4);
        assert_eq!(parse_temperature("300K").unwrap(), 300.0);
        assert_eq!(parse_temperature("-5 C").unwrap(), 268.15);
        assert_abs_diff_eq!(parse_interval("9 F").unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn kelvin_formatting_round_trips() {
        for v in [294.26111111111106, 1.0e-3, 300.0] {
            assert_eq!(parse_temperature(&format_kelvin(v)).unwrap(), v);
        }
    }

    proptest! {
        #[test]
        fn f_to_k_to_f(value in -200.0f64..300.0) {
            let k = convert_temperature(value, TempUnit::Fahrenheit, TempUnit::Kelvin);
            let back = convert_temperature(k, TempUnit::Kelvin, TempUnit::Fahrenheit);
            prop_assert!((back - value).abs() <= 1e-9);
        }

        #[test]
        fn c_to_f_to_c(value in -100.0f64..200.0) {
            let f = convert_temperature(value, TempUnit::Celsius, TempUnit::Fahrenheit);
            let back = convert_temperature(f, TempUnit::Fahrenheit, TempUnit::Celsius);
            prop_assert!((back - value).abs() <= 1e-9);
        }
    }
}
