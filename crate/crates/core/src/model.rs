//! Trainable heads and their on-disk format.
//!
//! ```text
//! seekqa-model 1
//! dim 64
//! block phi.w 1 128
//! <row of 128 values>
//! ...
//! end
//! ```
//!
//! Each block is `block <name> <rows> <cols>` followed by `rows` lines of
//! `cols` whitespace-separated decimal values (row-major). Values use Rust's
//! shortest round-trip formatting, so save/load is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAGIC: &str = "seekqa-model";
const VERSION: u32 = 1;

pub const PHI_W: usize = 0;
pub const PHI_B: usize = 1;
pub const LINK_W: usize = 2;
pub const ANSWER_START: usize = 3;
pub const ANSWER_END: usize = 4;
pub const PI_FUNC: usize = 5;
pub const PI_W1: usize = 6;
pub const PI_B1: usize = 7;
pub const PI_W2: usize = 8;
pub const PI_B2: usize = 9;

const NAMES: [&str; 10] = [
    "phi.w",
    "phi.b",
    "link.w",
    "answer.start",
    "answer.end",
    "pi.func",
    "pi.w1",
    "pi.b1",
    "pi.w2",
    "pi.b2",
];

fn shapes(d: usize) -> [(usize, usize); 10] {
    [
        (1, 2 * d),
        (1, 1),
        (1, d),
        (1, d),
        (1, d),
        (4, d),
        (4 * d, 3 * d),
        (1, 4 * d),
        (1, 4 * d),
        (1, 1),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// All head parameters. The same layout doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dim: usize,
    pub blocks: Vec<Block>,
}

impl Model {
    pub fn zeros(dim: usize) -> Self {
        let blocks = NAMES
            .iter()
            .zip(shapes(dim))
            .map(|(&name, (rows, cols))| Block {
                name,
                rows,
                cols,
                data: vec![0.0; rows * cols],
            })
            .collect();
        Model { dim, blocks }
    }

    /// Small uniform initialization for matrices, zero biases.
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut m = Model::zeros(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &mut m.blocks {
            if b.name.ends_with(".b") || b.name.ends_with(".b1") || b.name.ends_with(".b2") {
                continue;
            }
            let scale = (1.0 / b.cols as f64).sqrt();
            for x in &mut b.data {
                *x = rng.gen_range(-scale..scale);
            }
        }
        m
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.blocks[i].data
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.blocks[i].data
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.blocks.iter().flat_map(|b| b.data.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.blocks.iter_mut().flat_map(|b| b.data.iter_mut())
    }

    pub fn fill(&mut self, v: f64) {
        self.params_mut().for_each(|x| *x = v);
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Model, scale: f64) {
        for (a, b) in self.params_mut().zip(other.params()) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|x| x.is_finite())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC} {VERSION}")?;
        writeln!(w, "dim {}", self.dim)?;
        for b in &self.blocks {
            writeln!(w, "block {} {} {}", b.name, b.rows, b.cols)?;
            for row in b.data.chunks(b.cols) {
                let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        writeln!(w, "end")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn parse<R: Read>(r: R) -> Result<Model> {
        let bad = |line: usize, msg: String| Error::ModelFormat(format!("line {line}: {msg}"));
        let mut lines = BufReader::new(r).lines().enumerate();
        let mut next = || -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(bad(i + 1, e.to_string())),
                None => Err(Error::ModelFormat("unexpected end of file".into())),
            }
        };
        let (n, header) = next()?;
        if header.trim() != format!("{MAGIC} {VERSION}") {
            return Err(bad(n, format!("expected `{MAGIC} {VERSION}`")));
        }
        let (n, dim_line) = next()?;
        let dim: usize = dim_line
            .strip_prefix("dim ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(n, "expected `dim <int>`".into()))?;
        let mut model = Model::zeros(dim);
        for b in &mut model.blocks {
            let (n, head) = next()?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            let expected = format!("block {} {} {}", b.name, b.rows, b.cols);
            if parts.join(" ") != expected {
                return Err(bad(n, format!("expected `{expected}`, found `{head}`")));
            }
            for r in 0..b.rows {
                let (n, row) = next()?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|x| x.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(n, e.to_string()))?;
                if vals.len() != b.cols {
                    return Err(bad(
                        n,
                        format!("expected {} values, found {}", b.cols, vals.len()),
                    ));
                }
                b.data[r * b.cols..(r + 1) * b.cols].copy_from_slice(&vals);
            }
        }
        let (n, end) = next()?;
        if end.trim() != "end" {
            return Err(bad(n, "expected `end`".into()));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Model> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Model::parse(f)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(model: &Model, lr: f64) -> Self {
        let n = model.num_params();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut Model, grad: &Model) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in model
            .params_mut()
            .zip(grad.params())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}
