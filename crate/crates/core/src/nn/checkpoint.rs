//! Plain-text checkpoints.
//!
//! ```text
//! equisym-checkpoint 1
//! meta <key> <value>
//! net <name> <layers> activation tanh
//! layer <in> <out>
//! w <in*out values, row-major>
//! b <out values>
//! end
//! ```
//! Floats are written in shortest round-trip form, so a reload is bit exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::mlp::{Layer, MlpParams};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "equisym-checkpoint";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub nets: Vec<(String, MlpParams)>,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Option<&MlpParams> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} {FORMAT_VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        for (name, net) in &self.nets {
            let _ = writeln!(
                s,
                "net {name} {} activation {}",
                net.layers().len(),
                net.activation().name()
            );
            for layer in net.layers() {
                let _ = writeln!(s, "layer {} {}", layer.inputs(), layer.outputs());
                s.push('w');
                for r in 0..layer.inputs() {
                    for c in 0..layer.outputs() {
                        let _ = write!(s, " {:?}", layer.weight[(r, c)]);
                    }
                }
                s.push_str("\nb");
                for v in layer.bias.iter() {
                    let _ = write!(s, " {v:?}");
                }
                s.push('\n');
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let bad = |line: usize, msg: &str| Error::Config(format!("checkpoint line {line}: {msg}"));
        let (n, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let mut hw = header.split_whitespace();
        if hw.next() != Some(MAGIC) {
            return Err(bad(n, "not an equisym checkpoint"));
        }
        let version: u32 = hw
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(n, "missing version"))?;
        if version != FORMAT_VERSION {
            return Err(bad(n, &format!("unsupported version {version}")));
        }
        let mut ck = Checkpoint::default();
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            match words.next() {
                Some("meta") => {
                    let k = words.next().ok_or_else(|| bad(n, "meta without key"))?;
                    let v: Vec<&str> = words.collect();
                    ck.meta.insert(k.to_string(), v.join(" "));
                }
                Some("net") => {
                    let name = words.next().ok_or_else(|| bad(n, "net without name"))?;
                    let count: usize = words
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad(n, "net without layer count"))?;
                    if words.next() != Some("activation") || words.next() != Some("tanh") {
                        return Err(bad(n, "unsupported activation"));
                    }
                    let mut layers = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (ln, l) = lines.next().ok_or_else(|| bad(n, "truncated net"))?;
                        let dims: Vec<usize> = match l.strip_prefix("layer ") {
                            Some(rest) => rest
                                .split_whitespace()
                                .map(|v| v.parse().map_err(|_| bad(ln, "bad layer size")))
                                .collect::<Result<_>>()?,
                            None => return Err(bad(ln, "expected layer")),
                        };
                        if dims.len() != 2 {
                            return Err(bad(ln, "layer needs two sizes"));
                        }
                        let (wn, wl) = lines.next().ok_or_else(|| bad(ln, "missing weights"))?;
                        let w =
                            parse_floats(wl, "w", dims[0] * dims[1]).map_err(|m| bad(wn, &m))?;
                        let (bn, bl) = lines.next().ok_or_else(|| bad(wn, "missing biases"))?;
                        let b = parse_floats(bl, "b", dims[1]).map_err(|m| bad(bn, &m))?;
                        layers.push(Layer {
                            weight: Matrix::from_row_slice(dims[0], dims[1], &w),
                            bias: Vector::from_vec(b),
                        });
                    }
                    ck.nets
                        .push((name.to_string(), MlpParams::from_layers(layers)?));
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                Some(other) => return Err(bad(n, &format!("unknown record {other:?}"))),
                None => {}
            }
        }
        if !ended {
            return Err(Error::Config("checkpoint is truncated".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_floats(line: &str, tag: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let mut words = line.split_whitespace();
    if words.next() != Some(tag) {
        return Err(format!("expected {tag} record"));
    }
    let vals: Vec<f64> = words
        .map(|w| w.parse::<f64>().map_err(|_| format!("bad number {w:?}")))
        .collect::<std::result::Result<_, _>>()?;
    if vals.len() != expected {
        return Err(format!("expected {expected} values, found {}", vals.len()));
    }
    Ok(vals)
}
