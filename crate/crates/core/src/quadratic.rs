//! Local quadratic model of the loss around reference weights `wbar`:
//!
//! ```text
//! Q(w) = g'd + 1/2 d'Hd + (n lambda / 2) ||d||^2,   d = w - wbar
//! ```
//!
//! with `g = (1/n) X'e` and `H = rho * blockdiag(X_B' X_B)` built from the
//! `n x p` per-sample gradient matrix `X`. `H` is never formed: every product
//! goes through the per-block residual `r_B = X_B d_B` of length `n`.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bundle::ProblemBundle;
use crate::error::{check_len, FalconError, Result};

#[derive(Debug, Clone)]
pub struct LowRankQuadratic {
    w_bar: Vec<f64>,
    /// Row-major `n x p`.
    samples: Arc<[f32]>,
    n: usize,
    g: Vec<f64>,
    block_offsets: Vec<usize>,
    rho: f64,
    lambda: f64,
}

/// Split every range of `offsets` into `ceil(len / bsize)` contiguous pieces
/// whose sizes differ by at most one, larger pieces first.
pub fn subdivide_blocks(offsets: &[usize], bsize: usize) -> Result<Vec<usize>> {
    if bsize == 0 {
        return Err(FalconError::Domain("block size must be at least 1".into()));
    }
    let mut out = vec![0];
    for w in offsets.windows(2) {
        let (start, len) = (w[0], w[1].saturating_sub(w[0]));
        let pieces = len.div_ceil(bsize);
        let (base, extra) = (len / pieces.max(1), len % pieces.max(1));
        let mut at = start;
        for k in 0..pieces {
            at += base + usize::from(k < extra);
            out.push(at);
        }
    }
    Ok(out)
}

impl LowRankQuadratic {
    pub fn new(
        w_bar: Vec<f64>,
        samples: Arc<[f32]>,
        n: usize,
        block_offsets: Vec<usize>,
        rho: f64,
        lambda: f64,
    ) -> Result<Self> {
        let p = w_bar.len();
        if n == 0 {
            return Err(FalconError::Domain("the model needs at least one sample".into()));
        }
        check_len("sample matrix", n * p, samples.len())?;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(FalconError::Domain(format!("rho must be positive, got {rho}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(FalconError::Domain(format!(
                "ridge strength must be nonnegative, got {lambda}"
            )));
        }
        let valid_blocks = block_offsets.len() >= 2
            && block_offsets[0] == 0
            && *block_offsets.last().unwrap() == p
            && block_offsets.windows(2).all(|w| w[0] < w[1]);
        if !valid_blocks {
            return Err(FalconError::Domain(
                "block offsets must increase strictly from 0 to p".into(),
            ));
        }
        let mut m = Self {
            w_bar,
            samples,
            n,
            g: Vec::new(),
            block_offsets,
            rho,
            lambda,
        };
        let mut g = vec![0.0; p];
        m.for_each_block_mut(&mut g, |m, range, out| {
            for row in 0..m.n {
                for (o, &x) in out.iter_mut().zip(m.row_slice(row, range.clone())) {
                    *o += f64::from(x);
                }
            }
            let scale = 1.0 / m.n as f64;
            out.iter_mut().for_each(|o| *o *= scale);
        });
        m.g = g;
        Ok(m)
    }

    /// Model at the bundle weights, with the bundle blocks subdivided to at
    /// most `bsize` parameters each.
    pub fn from_bundle(bundle: &ProblemBundle, lambda: f64, rho: f64, bsize: usize) -> Result<Self> {
        let blocks = subdivide_blocks(&bundle.meta.block_offsets, bsize)?;
        Self::new(
            bundle.weights_f64(),
            Arc::clone(&bundle.samples),
            bundle.meta.n,
            blocks,
            rho,
            lambda,
        )
    }

    pub fn p(&self) -> usize {
        self.w_bar.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w_bar(&self) -> &[f64] {
        &self.w_bar
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `n * lambda`, the coefficient of the ridge term.
    pub fn ridge(&self) -> f64 {
        self.n as f64 * self.lambda
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn block_offsets(&self) -> &[usize] {
        &self.block_offsets
    }

    pub fn num_blocks(&self) -> usize {
        self.block_offsets.len() - 1
    }

    pub fn block_range(&self, j: usize) -> Range<usize> {
        self.block_offsets[j]..self.block_offsets[j + 1]
    }

    /// Row `row` of `X` restricted to `cols`.
    pub fn row_slice(&self, row: usize, cols: Range<usize>) -> &[f32] {
        let base = row * self.p();
        &self.samples[base + cols.start..base + cols.end]
    }

    /// `X_B d_B` for the block spanning `range`; `delta` is the full vector.
    pub fn block_residual(&self, range: Range<usize>, delta: &[f64]) -> Vec<f64> {
        let d = &delta[range.clone()];
        (0..self.n)
            .map(|row| {
                self.row_slice(row, range.clone())
                    .iter()
                    .zip(d)
                    .map(|(&x, &v)| f64::from(x) * v)
                    .sum()
            })
            .collect()
    }

    fn delta(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("weights", self.p(), w.len())?;
        Ok(w.iter().zip(&self.w_bar).map(|(a, b)| a - b).collect())
    }

    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        let delta = self.delta(w)?;
        let ridge = self.ridge();
        let per_block: Vec<f64> = (0..self.num_blocks())
            .into_par_iter()
            .map(|j| {
                let range = self.block_range(j);
                let r = self.block_residual(range.clone(), &delta);
                let linear: f64 = self.g[range.clone()]
                    .iter()
                    .zip(&delta[range.clone()])
                    .map(|(a, b)| a * b)
                    .sum();
                let sq: f64 = delta[range].iter().map(|v| v * v).sum();
                linear + 0.5 * self.rho * r.iter().map(|v| v * v).sum::<f64>() + 0.5 * ridge * sq
            })
            .collect();
        Ok(per_block.iter().sum())
    }

    /// `g + (H + n lambda I) d`.
    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let delta = self.delta(w)?;
        let ridge = self.ridge();
        let mut out = vec![0.0; self.p()];
        self.for_each_block_mut(&mut out, |m, range, out| {
            let r = m.block_residual(range.clone(), &delta);
            for (k, o) in out.iter_mut().enumerate() {
                let i = range.start + k;
                *o = m.g[i] + ridge * delta[i];
            }
            for (row, &rk) in r.iter().enumerate() {
                let scaled = m.rho * rk;
                for (o, &x) in out.iter_mut().zip(m.row_slice(row, range.clone())) {
                    *o += scaled * f64::from(x);
                }
            }
        });
        Ok(out)
    }

    /// Run `f` on every block with the matching disjoint slice of `out`.
    fn for_each_block_mut<F>(&self, out: &mut [f64], f: F)
    where
        F: Fn(&Self, Range<usize>, &mut [f64]) + Sync,
    {
        let mut slices = Vec::with_capacity(self.num_blocks());
        let mut rest = out;
        for j in 0..self.num_blocks() {
            let (head, tail) = rest.split_at_mut(self.block_range(j).len());
            slices.push((j, head));
            rest = tail;
        }
        slices
            .into_par_iter()
            .for_each(|(j, slice)| f(self, self.block_range(j), slice));
    }
}
