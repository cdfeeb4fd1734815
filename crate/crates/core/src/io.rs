//! Number formatting shared by the CSV and JSON writers.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// JSON number written with [`fmt17`]; non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

pub fn opt17(x: Option<f64>) -> Option<F17> {
    x.map(F17)
}

pub(crate) fn ser_f17<S: Serializer>(x: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    F17(*x).serialize(serializer)
}

pub(crate) fn ser_opt_f17<S: Serializer>(x: &Option<f64>, serializer: S) -> Result<S::Ok, S::Error> {
    opt17(*x).serialize(serializer)
}

pub(crate) fn ser_vec_f17<S: Serializer>(x: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
    serializer.collect_seq(x.iter().map(|v| F17(*v)))
}
