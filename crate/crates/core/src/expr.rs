//! Closed-form scalar expressions read from run configurations, such as
//! `"0.1*sin(2*PI*y)*exp(-t)"`.

use crate::error::{Error, Result};
use exmex::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Parsed expression in a fixed set of named variables.
#[derive(Clone, Debug)]
pub struct Expr {
    text: String,
    flat: FlatEx<f64>,
    /// for each variable of `flat` (alphabetical), its slot in the caller's list
    slots: Vec<usize>,
    vars: Vec<&'static str>,
    constant: Option<f64>,
}

impl Expr {
    /// Parses `text`, accepting only variables from `vars`.
    pub fn parse(text: &str, vars: &[&'static str]) -> Result<Self> {
        let flat = exmex::parse::<f64>(text).map_err(|e| Error::InvalidArgument(format!("expression {text:?}: {e}")))?;
        let mut slots = Vec::new();
        for name in flat.var_names() {
            let pos = vars.iter().position(|v| v == name).ok_or_else(|| {
                Error::InvalidArgument(format!("expression {text:?} uses unknown variable {name:?} (allowed: {vars:?})"))
            })?;
            slots.push(pos);
        }
        let constant = if slots.is_empty() {
            Some(flat.eval(&[]).map_err(|e| Error::InvalidArgument(format!("expression {text:?}: {e}")))?)
        } else {
            None
        };
        Ok(Self { text: text.to_string(), flat, slots, vars: vars.to_vec(), constant })
    }

    pub fn zero(vars: &[&'static str]) -> Self {
        Self::parse("0", vars).expect("literal zero parses")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some(0.0)
    }

    /// Evaluates with `values` ordered like the variable list given at parse time.
    pub fn eval(&self, values: &[f64]) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let mut buf = [0.0; 4];
        for (i, &s) in self.slots.iter().enumerate() {
            buf[i] = values[s];
        }
        self.flat.eval(&buf[..self.slots.len()]).unwrap_or(f64::NAN)
    }

    /// Re-parses with a different variable set (used after deserialization).
    pub fn with_vars(&self, vars: &[&'static str]) -> Result<Self> {
        Self::parse(&self.text, vars)
    }

    pub fn vars(&self) -> &[&'static str] {
        &self.vars
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

/// Deserializes permissively in `t, x, y`; call sites narrow the variable set.
impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Expr::parse(&text, &["t", "x", "y"]).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variables_are_mapped_by_name() {
        let e = Expr::parse("2*y - x + t^2", &["t", "x", "y"]).unwrap();
        assert_eq!(e.eval(&[3.0, 1.0, 5.0]), 18.0);
        let e = Expr::parse("y*10", &["t", "y"]).unwrap();
        assert_eq!(e.eval(&[7.0, 0.5]), 5.0);
        assert!((Expr::parse("sin(PI/2)", &[]).unwrap().eval(&[]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_variables_and_detects_zero() {
        assert!(Expr::parse("z+1", &["t", "y"]).is_err());
        assert!(Expr::parse("0*1", &["y"]).unwrap().is_zero());
        assert!(!Expr::parse("y", &["y"]).unwrap().is_zero());
    }
}
