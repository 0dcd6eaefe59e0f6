//! Config-file helpers shared by the subcommands.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Parses JSON, reporting the file and the line/column of syntax errors.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Input(format!("{origin}: {e}")))
}

pub fn load_config<T: DeserializeOwned>(path: Option<&Path>, subcommand: &str) -> Result<(T, PathBuf)> {
    let path = path.ok_or_else(|| CliError::Input(format!("{subcommand} needs --config PATH")))?;
    let text = read_text(path)?;
    let cfg = parse_json(&text, &path.display().to_string())?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

/// Either a path to a JSON file (relative to the config file) or the
/// object itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(String),
    Inline(T),
}

/// A loaded input together with the hash of its serialized form.
pub struct Loaded<T> {
    pub value: T,
    pub digest: String,
}

impl<T: DeserializeOwned + Serialize + Clone> Source<T> {
    pub fn load(&self, base: &Path) -> Result<Loaded<T>> {
        match self {
            Source::Path(p) => {
                let path = base.join(p);
                let text = read_text(&path)?;
                Ok(Loaded {
                    value: parse_json(&text, &path.display().to_string())?,
                    digest: sha256_hex(text.as_bytes()),
                })
            }
            Source::Inline(v) => {
                let text = serde_json::to_string(v).map_err(|e| CliError::Invariant(e.to_string()))?;
                Ok(Loaded {
                    value: v.clone(),
                    digest: sha256_hex(text.as_bytes()),
                })
            }
        }
    }
}

/// A complex number written as a number or as `[re, im]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ComplexIn {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexIn {
    pub fn value(self) -> Complex64 {
        match self {
            ComplexIn::Real(x) => Complex64::new(x, 0.0),
            ComplexIn::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

/// A modulus that may be infinite, written as a number or `"inf"`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Modulus {
    Finite(f64),
    Named(String),
}

impl Modulus {
    pub fn value(&self) -> Result<f64> {
        match self {
            Modulus::Finite(x) => Ok(*x),
            Modulus::Named(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Modulus::Named(s) => Err(CliError::Input(format!("modulus {s:?} is neither a number nor \"inf\""))),
        }
    }
}

pub use complab_core::csv_number as num;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_and_modulus_forms() {
        let v: Vec<ComplexIn> = serde_json::from_str("[2, [3, 4]]").unwrap();
        assert_eq!(v[0].value(), Complex64::new(2.0, 0.0));
        assert_eq!(v[1].value(), Complex64::new(3.0, 4.0));
        let m: Vec<Modulus> = serde_json::from_str(r#"[1.5, "inf"]"#).unwrap();
        assert_eq!(m[0].value().unwrap(), 1.5);
        assert_eq!(m[1].value().unwrap(), f64::INFINITY);
        let bad: Modulus = serde_json::from_str(r#""big""#).unwrap();
        assert!(matches!(bad.value(), Err(CliError::Input(_))));
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = parse_json::<Vec<f64>>("[1,\n 2,,]", "x.json").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("line 2"), "{e}");
    }
}
