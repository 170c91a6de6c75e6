//! JSON and CSV files used by the command line.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::dynamics::DynamicsConfig;
use crate::error::{Error, Result};
use crate::token::Sequence;
use crate::transformer::Transformer;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::InvalidInput(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Pretty JSON with a trailing newline; floats use the shortest round-trip form.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Parses and validates a dataset file.
pub fn read_dataset(path: &Path) -> Result<Dataset<f64>> {
    let ds: Dataset<f64> = read_json(path)?;
    ds.validate()?;
    Ok(ds)
}

/// Parses a transformer file and checks every layer acts on `R^d`.
pub fn read_transformer(path: &Path) -> Result<Transformer<f64>> {
    let t: Transformer<f64> = read_json(path)?;
    t.validate()?;
    Ok(t)
}

/// A sequence stored as a JSON array of equal-length coordinate arrays.
pub fn read_sequence(path: &Path) -> Result<Sequence<f64>> {
    let rows: Vec<Vec<f64>> = read_json(path)?;
    Sequence::from_rows(rows)
}

pub fn read_dynamics_config(path: &Path) -> Result<DynamicsConfig<f64>> {
    let cfg: DynamicsConfig<f64> = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// `index,label,sequence,token,coord_0..` rows for a list of labelled states.
pub fn states_csv<'a>(
    states: impl IntoIterator<Item = (usize, &'a str, &'a [Sequence<f64>])>,
) -> String {
    let mut out = String::new();
    let mut header = false;
    for (index, label, seqs) in states {
        if !header {
            let d = seqs.first().map_or(0, |s| s.dim());
            out.push_str("index,label,sequence,token");
            for c in 0..d {
                out.push_str(&format!(",coord_{c}"));
            }
            out.push('\n');
            header = true;
        }
        for (j, s) in seqs.iter().enumerate() {
            for (l, x) in s.iter().enumerate() {
                out.push_str(&format!("{index},{label},{j},{l}"));
                for c in x.iter_coords() {
                    out.push_str(&format!(",{c:.16e}"));
                }
                out.push('\n');
            }
        }
    }
    out
}
