//! Plain-text checkpoint format:
//!
//! ```text
//! amsum-checkpoint 1
//! vocab_size <n>
//! emb_dim <n>
//! hidden_dim <n>
//! attn_dim <n>
//! use_pointer <true|false>
//! seed <n>
//! tensor <name> <rows> <cols>
//! <cols space-separated values>     (one line per row)
//! ...
//! ```
//!
//! Values are written with the shortest representation that round-trips an
//! `f64`, so load∘save is bit-exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

const MAGIC: &str = "amsum-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub seed: u64,
}

pub fn write_checkpoint<T: Scalar, W: Write>(ckpt: &Checkpoint<T>, out: &mut W) -> std::io::Result<()> {
    let c = &ckpt.params.config;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "vocab_size {}", c.vocab_size)?;
    writeln!(out, "emb_dim {}", c.emb_dim)?;
    writeln!(out, "hidden_dim {}", c.hidden_dim)?;
    writeln!(out, "attn_dim {}", c.attn_dim)?;
    writeln!(out, "use_pointer {}", c.use_pointer)?;
    writeln!(out, "seed {}", ckpt.seed)?;
    for (name, t) in ckpt.params.tensors() {
        writeln!(out, "tensor {name} {} {}", t.rows(), t.cols())?;
        for r in 0..t.rows() {
            let row: Vec<String> = t.row_slice(r).iter().map(|v| format!("{:?}", v.as_f64())).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(ckpt, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(Error::format(self.last + 1, "unexpected end of checkpoint")),
        }
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.trim())),
            _ => Err(Error::format(n, format!("expected `{key} <value>`"))),
        }
    }

    fn number(&mut self, key: &str) -> Result<usize> {
        let (n, v) = self.field(key)?;
        v.parse().map_err(|_| Error::format(n, format!("invalid {key} `{v}`")))
    }
}

pub fn parse_checkpoint<T: Scalar>(text: &str) -> Result<Checkpoint<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (n, magic) = lines.next()?;
    if magic.trim() != MAGIC {
        return Err(Error::format(n, "not an amsum checkpoint"));
    }
    let vocab_size = lines.number("vocab_size")?;
    let emb_dim = lines.number("emb_dim")?;
    let hidden_dim = lines.number("hidden_dim")?;
    let attn_dim = lines.number("attn_dim")?;
    let (n, up) = lines.field("use_pointer")?;
    let use_pointer = up
        .parse()
        .map_err(|_| Error::format(n, format!("invalid use_pointer `{up}`")))?;
    let (n, s) = lines.field("seed")?;
    let seed = s.parse().map_err(|_| Error::format(n, format!("invalid seed `{s}`")))?;
    let config = ModelConfig {
        vocab_size,
        emb_dim,
        hidden_dim,
        attn_dim,
        use_pointer,
    };
    config.validate()?;

    let mut tensors = Vec::new();
    for (name, (rows, cols)) in config.parameter_shapes() {
        let (n, header) = lines.next()?;
        let expected = format!("tensor {name} {rows} {cols}");
        if header.trim() != expected {
            return Err(Error::format(n, format!("expected `{expected}`, found `{header}`")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = lines.next()?;
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::format(n, format!("invalid value `{tok}`")))?;
                data.push(T::lit(v));
            }
            if data.len() - before != cols {
                return Err(Error::format(
                    n,
                    format!("expected {cols} values, found {}", data.len() - before),
                ));
            }
        }
        tensors.push(Tensor2D::new(rows, cols, data)?);
    }
    if let Some((i, l)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::format(i + 1, format!("trailing content `{l}`")));
    }
    Ok(Checkpoint {
        params: ModelParams::from_tensors(config, tensors)?,
        seed,
    })
}
