//! Truncated-line grids and discrete fields with Sobolev norms.

use crate::error::{Error, Result};
use crate::C64;
use std::sync::Arc;

/// Uniform grid on `[-L, L]` with an odd number of nodes so that the midpoint
/// node sits exactly at `x = 0` (the phase condition is evaluated there).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid1D {
    pub l: f64,
    pub n_points: usize,
    pub h: f64,
    pub nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(l: f64, n_points: usize) -> Result<Arc<Grid1D>> {
        if !(l > 0.0) {
            return Err(Error::Config(format!("half-width L must be positive, got {l}")));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(Error::Config(format!(
                "grid point count must be an odd integer >= 3, got {n_points}"
            )));
        }
        let h = 2.0 * l / (n_points - 1) as f64;
        let mid = (n_points - 1) / 2;
        let nodes: Vec<f64> = (0..n_points)
            .map(|i| {
                if i == mid {
                    0.0
                } else {
                    -l + i as f64 * h
                }
            })
            .collect();
        Ok(Arc::new(Grid1D { l, n_points, h, nodes }))
    }

    /// Index of the node at `x = 0`.
    pub fn mid_index(&self) -> usize {
        (self.n_points - 1) / 2
    }
}

/// Complex field with `n_comp` components sampled on a [`Grid1D`], stored
/// node-major: entry `(node i, component c)` at `i * n_comp + c`. This layout
/// matches the banded operator assembly.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub grid: Arc<Grid1D>,
    pub n_comp: usize,
    pub data: Vec<C64>,
}

impl DiscreteField {
    pub fn zeros(grid: Arc<Grid1D>, n_comp: usize) -> Self {
        let len = grid.n_points * n_comp;
        DiscreteField {
            grid,
            n_comp,
            data: vec![C64::new(0.0, 0.0); len],
        }
    }

    pub fn from_fn(grid: Arc<Grid1D>, n_comp: usize, f: impl Fn(f64, usize) -> C64) -> Self {
        let mut out = Self::zeros(grid, n_comp);
        for i in 0..out.grid.n_points {
            let x = out.grid.nodes[i];
            for c in 0..n_comp {
                out.data[i * n_comp + c] = f(x, c);
            }
        }
        out
    }

    pub fn from_scalar_fn(grid: Arc<Grid1D>, f: impl Fn(f64) -> C64) -> Self {
        Self::from_fn(grid, 1, |x, _| f(x))
    }

    #[inline]
    pub fn get(&self, node: usize, comp: usize) -> C64 {
        self.data[node * self.n_comp + comp]
    }

    #[inline]
    pub fn set(&mut self, node: usize, comp: usize, v: C64) {
        self.data[node * self.n_comp + comp] = v;
    }

    /// Value vector at a node.
    pub fn at(&self, node: usize) -> &[C64] {
        &self.data[node * self.n_comp..(node + 1) * self.n_comp]
    }

    /// Trapezoid-rule `L²` inner product `⟨self, other⟩ = ∫ self · conj(other)`.
    pub fn inner_l2(&self, other: &DiscreteField) -> C64 {
        assert_eq!(self.data.len(), other.data.len());
        let h = self.grid.h;
        let np = self.grid.n_points;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..np {
            let w = if i == 0 || i == np - 1 { 0.5 } else { 1.0 };
            for c in 0..self.n_comp {
                acc += w * self.get(i, c) * other.get(i, c).conj();
            }
        }
        acc * h
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner_l2(self).re.max(0.0).sqrt()
    }

    /// Centered first derivative, one-sided (second order) at the ends.
    pub fn derivative(&self) -> DiscreteField {
        let np = self.grid.n_points;
        let h = self.grid.h;
        let mut out = DiscreteField::zeros(self.grid.clone(), self.n_comp);
        for c in 0..self.n_comp {
            out.set(
                0,
                c,
                (-1.5 * self.get(0, c) + 2.0 * self.get(1, c) - 0.5 * self.get(2, c)) / h,
            );
            for i in 1..np - 1 {
                out.set(i, c, (self.get(i + 1, c) - self.get(i - 1, c)) / (2.0 * h));
            }
            out.set(
                np - 1,
                c,
                (1.5 * self.get(np - 1, c) - 2.0 * self.get(np - 2, c)
                    + 0.5 * self.get(np - 3, c))
                    / h,
            );
        }
        out
    }

    /// Second derivative: centered in the interior, copied inward at ends.
    pub fn second_derivative(&self) -> DiscreteField {
        let np = self.grid.n_points;
        let h2 = self.grid.h * self.grid.h;
        let mut out = DiscreteField::zeros(self.grid.clone(), self.n_comp);
        for c in 0..self.n_comp {
            for i in 1..np - 1 {
                out.set(
                    i,
                    c,
                    (self.get(i + 1, c) - 2.0 * self.get(i, c) + self.get(i - 1, c)) / h2,
                );
            }
            out.set(0, c, out.get(1, c));
            out.set(np - 1, c, out.get(np - 2, c));
        }
        out
    }

    pub fn norm_h1(&self) -> f64 {
        let d = self.derivative();
        (self.norm_l2().powi(2) + d.norm_l2().powi(2)).sqrt()
    }

    pub fn norm_h2(&self) -> f64 {
        let d = self.derivative();
        let dd = self.second_derivative();
        (self.norm_l2().powi(2) + d.norm_l2().powi(2) + dd.norm_l2().powi(2)).sqrt()
    }

    pub fn norm_sup(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: C64) -> DiscreteField {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= a;
        }
        out
    }

    pub fn add(&self, other: &DiscreteField) -> DiscreteField {
        assert_eq!(self.data.len(), other.data.len());
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, other: &DiscreteField) -> DiscreteField {
        assert_eq!(self.data.len(), other.data.len());
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= *b;
        }
        out
    }

    pub fn conj(&self) -> DiscreteField {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = v.conj();
        }
        out
    }
}
