use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Params, Tensor};
use crate::{Error, Result};

const MAGIC: &str = "duetmf-checkpoint";
const VERSION: u32 = 1;

/// Named tensors plus string metadata.
///
/// Text layout: a `duetmf-checkpoint 1` header, `meta <key> <value>` lines,
/// then for each tensor a `tensor <name> <ndim> <dims..>` line followed by
/// one line of values in shortest round-trip notation, and a final `end`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: Params,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key {key}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {}", v.replace('\n', " "));
        }
        for (name, t) in self.params.iter() {
            let _ = write!(out, "tensor {name} {}", t.shape().len());
            for d in t.shape() {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            let mut first = true;
            for v in t.data() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:e}");
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(bad(1, "not a checkpoint"));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, "missing version"))?;
        if version != VERSION {
            return Err(bad(1, &format!("unsupported version {version}")));
        }
        let mut ckpt = Checkpoint::default();
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            if line == "end" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                if fields.len() < 2 {
                    return Err(bad(n, "bad tensor header"));
                }
                let ndim: usize = fields[1].parse().map_err(|_| bad(n, "bad ndim"))?;
                if fields.len() != 2 + ndim {
                    return Err(bad(n, "dimension count mismatch"));
                }
                let shape = fields[2..]
                    .iter()
                    .map(|d| d.parse::<usize>().map_err(|_| bad(n, "bad dimension")))
                    .collect::<Result<Vec<_>>>()?;
                let (vn, values) = lines.next().ok_or_else(|| bad(n, "missing values"))?;
                let data = values
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| bad(vn, "bad value")))
                    .collect::<Result<Vec<_>>>()?;
                let tensor = Tensor::new(shape, data).map_err(|e| bad(vn, &e.to_string()))?;
                ckpt.params.add(fields[0], tensor);
            } else {
                return Err(bad(n, "unexpected line"));
            }
        }
        if !ended {
            return Err(Error::Checkpoint(
                "truncated checkpoint (no end marker)".into(),
            ));
        }
        Ok(ckpt)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut ckpt = Checkpoint::default();
        ckpt.meta.insert("kind".into(), "test model".into());
        ckpt.params.add(
            "w",
            Tensor::matrix(2, 2, vec![0.1, -1e-300, 1.0 / 3.0, f64::MAX]).unwrap(),
        );
        ckpt.params
            .add("k", Tensor::new(vec![1, 1, 2], vec![5e-7, -0.0]).unwrap());
        let back = Checkpoint::from_text(&ckpt.to_text()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.meta("kind").unwrap(), "test model");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Checkpoint::from_text("something else\n").is_err());
        assert!(Checkpoint::from_text("duetmf-checkpoint 2\nend\n").is_err());
        assert!(
            Checkpoint::from_text("duetmf-checkpoint 1\ntensor w 2 2 2\n1 2 3\nend\n").is_err()
        );
        assert!(Checkpoint::from_text("duetmf-checkpoint 1\n").is_err());
    }
}
