//! Plain-text checkpoints. Floats are printed with Rust's shortest
//! round-trip formatting, so save followed by load reproduces every tensor
//! bit for bit.

use super::policy::PolicyNet;
use super::tensor::Tensor;
use crate::{Error, Result};
use indexmap::IndexMap;
use std::path::Path;

const MAGIC: &str = "flocklab-checkpoint v1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: IndexMap<String, String>,
    pub tensors: IndexMap<String, Tensor>,
}

impl Checkpoint {
    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        assert!(!key.contains(char::is_whitespace), "meta key with whitespace");
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key {key}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta_str(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("meta key {key} failed to parse")))
    }

    pub fn insert_tensor(&mut self, name: &str, t: Tensor) {
        assert!(!name.contains(char::is_whitespace), "tensor name with whitespace");
        self.tensors.insert(name.to_string(), t);
    }

    /// Capture the network parameters with a name prefix (empty for none).
    pub fn capture_net(&mut self, prefix: &str, net: &PolicyNet) {
        for (name, tensor) in net.params() {
            self.insert_tensor(&format!("{prefix}{name}"), tensor.as_ref().clone());
        }
    }

    /// Restore parameters captured by [`capture_net`]. Every network
    /// parameter must be present with a matching shape.
    pub fn restore_net(&self, prefix: &str, net: &mut PolicyNet) -> Result<()> {
        let names: Vec<String> = net.param_names().map(|s| s.to_string()).collect();
        for name in names {
            let stored = self
                .tensors
                .get(&format!("{prefix}{name}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {prefix}{name}")))?;
            net.set_param(&name, stored.clone())?;
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from(MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            out.push_str(&format!("tensor {name} {} {}\n", t.rows, t.cols));
            for r in 0..t.rows {
                let row: Vec<String> =
                    (0..t.cols).map(|c| format_float(t.at(r, c))).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Checkpoint> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Checkpoint("bad or missing checkpoint header".into()));
        }
        let mut ckpt = Checkpoint::default();
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (key, value) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::Checkpoint(format!("bad meta line: {line}")))?;
                ckpt.meta.insert(key.to_string(), value.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let fields: Vec<&str> = rest.split(' ').collect();
                if fields.len() != 3 {
                    return Err(Error::Checkpoint(format!("bad tensor line: {line}")));
                }
                let name = fields[0].to_string();
                let rows: usize = fields[1]
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad row count for {name}")))?;
                let cols: usize = fields[2]
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad col count for {name}")))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let row = lines.next().ok_or_else(|| {
                        Error::Checkpoint(format!("truncated tensor {name}"))
                    })?;
                    for tok in row.split(' ') {
                        data.push(parse_float(tok).ok_or_else(|| {
                            Error::Checkpoint(format!("bad float {tok:?} in tensor {name}"))
                        })?);
                    }
                }
                if data.len() != rows * cols {
                    return Err(Error::Checkpoint(format!(
                        "tensor {name}: expected {} values, got {}",
                        rows * cols,
                        data.len()
                    )));
                }
                ckpt.tensors.insert(name, Tensor::from_vec(rows, cols, data));
            } else {
                return Err(Error::Checkpoint(format!("unrecognized line: {line}")));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::parse(&std::fs::read_to_string(path)?)
    }
}

/// Shortest decimal form that parses back to the same bits; non-finite
/// values get explicit spellings since Display would lose the sign of NaN.
fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_float(tok: &str) -> Option<f64> {
    match tok {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse().ok(),
    }
}
