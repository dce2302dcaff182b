//! Banded complex linear algebra: storage, LU factorization with partial
//! pivoting and pivot-growth diagnostics, and solves. This is the primitive
//! every resolvent evaluation in the crate goes through.

use crate::error::{Error, Result};
use crate::C64;
use num_complex::Complex;

/// Complex band matrix in LAPACK-like storage.
///
/// Entry `(i, j)` with `j - ku <= i <= j + kl` lives at
/// `data[row_index(i, j)][j]` where `row_index = ku + i - j`. The extra `kl`
/// rows needed for fill-in are only allocated at factorization time.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    pub dim: usize,
    pub kl: usize,
    pub ku: usize,
    /// `(kl + ku + 1) x dim`, row-major by band row.
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(dim: usize, kl: usize, ku: usize) -> Self {
        BandMatrix {
            dim,
            kl,
            ku,
            data: vec![C64::new(0.0, 0.0); (kl + ku + 1) * dim],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.dim || j >= self.dim {
            return None;
        }
        let (i, j) = (i as isize, j as isize);
        let r = self.ku as isize + i - j;
        if r < 0 || r > (self.kl + self.ku) as isize {
            None
        } else {
            Some(r as usize * self.dim + j as usize)
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        match self.idx(i, j) {
            Some(p) => self.data[p],
            None => C64::new(0.0, 0.0),
        }
    }

    /// Panics when `(i, j)` falls outside the band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        let p = self
            .idx(i, j)
            .unwrap_or_else(|| panic!("({i},{j}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[p] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let p = self
            .idx(i, j)
            .unwrap_or_else(|| panic!("({i},{j}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[p] += v;
    }

    /// Raw band storage, for entrywise transforms.
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// Clears a whole row inside the band.
    pub fn clear_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl.min(i) + self.ku).max(i.saturating_sub(self.ku + self.kl));
        let _ = lo;
        let jmin = i.saturating_sub(self.kl);
        let jmax = (i + self.ku).min(self.dim - 1);
        for j in jmin..=jmax {
            if let Some(p) = self.idx(i, j) {
                self.data[p] = C64::new(0.0, 0.0);
            }
        }
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        for i in 0..self.dim {
            let jmin = i.saturating_sub(self.kl);
            let jmax = (i + self.ku).min(self.dim - 1);
            let mut acc = C64::new(0.0, 0.0);
            for j in jmin..=jmax {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// Conjugate transpose as a new band matrix (kl and ku swap roles).
    pub fn conjugate_transpose(&self) -> BandMatrix {
        let mut out = BandMatrix::zeros(self.dim, self.ku, self.kl);
        for j in 0..self.dim {
            let imin = j.saturating_sub(self.ku);
            let imax = (j + self.kl).min(self.dim - 1);
            for i in imin..=imax {
                let v = self.get(i, j);
                if v != C64::new(0.0, 0.0) {
                    out.set(j, i, v.conj());
                }
            }
        }
        out
    }

    /// `self - other`, entrywise; bands must agree in shape.
    pub fn sub(&self, other: &BandMatrix) -> BandMatrix {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.kl, other.kl);
        assert_eq!(self.ku, other.ku);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= *b;
        }
        out
    }

    /// Adds `v` to every diagonal entry.
    pub fn shift_diagonal(&mut self, v: C64) {
        for i in 0..self.dim {
            self.add(i, i, v);
        }
    }

    /// Dense copy, for oracles and small diagnostics only.
    pub fn to_dense(&self) -> nalgebra::DMatrix<C64> {
        let mut m = nalgebra::DMatrix::from_element(self.dim, self.dim, C64::new(0.0, 0.0));
        for i in 0..self.dim {
            let jmin = i.saturating_sub(self.kl);
            let jmax = (i + self.ku).min(self.dim - 1);
            for j in jmin..=jmax {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting.
    pub fn factor(&self) -> Result<BandLu> {
        let n = self.dim;
        let (kl, ku) = (self.kl, self.ku);
        let kuf = ku + kl; // fill-in widens the upper band
        let ldab = kl + kuf + 1;
        // ab[kuf + i - j][j]
        let mut ab = vec![C64::new(0.0, 0.0); ldab * n];
        let at = |r: usize, c: usize| r * n + c;
        for j in 0..n {
            let imin = j.saturating_sub(ku);
            let imax = (j + kl).min(n - 1);
            for i in imin..=imax {
                ab[at(kuf + i - j, j)] = self.get(i, j);
            }
        }
        let mut ipiv = vec![0usize; n];
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut min_pivot = f64::INFINITY;
        let mut max_u: f64 = 0.0;
        for j in 0..n {
            let imax = (j + kl).min(n - 1);
            // pivot search in column j
            let mut p = j;
            let mut best = ab[at(kuf, j)].norm();
            for i in (j + 1)..=imax {
                let v = ab[at(kuf + i - j, j)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            ipiv[j] = p;
            if best == 0.0 {
                return Err(Error::Singular { pivot_ratio: 0.0 });
            }
            min_pivot = min_pivot.min(best);
            max_u = max_u.max(best);
            if p != j {
                let cmax = (j + kuf).min(n - 1);
                for c in j..=cmax {
                    ab.swap(at(kuf + j - c, c), at(kuf + p - c, c));
                }
            }
            let piv = ab[at(kuf, j)];
            for i in (j + 1)..=imax {
                let m = ab[at(kuf + i - j, j)] / piv;
                ab[at(kuf + i - j, j)] = m;
                let cmax = (j + kuf).min(n - 1);
                for c in (j + 1)..=cmax {
                    let u = ab[at(kuf + j - c, c)];
                    if u != C64::new(0.0, 0.0) {
                        ab[at(kuf + i - c, c)] -= m * u;
                    }
                }
            }
        }
        Ok(BandLu {
            dim: n,
            kl,
            kuf,
            ab,
            ipiv,
            pivot_ratio: min_pivot / max_u.max(scale),
            norm_a: scale,
        })
    }
}

/// Factored form of a [`BandMatrix`].
#[derive(Clone, Debug)]
pub struct BandLu {
    dim: usize,
    kl: usize,
    kuf: usize,
    ab: Vec<C64>,
    ipiv: Vec<usize>,
    /// min |pivot| / max |U|; small values flag near-singularity.
    pub pivot_ratio: f64,
    /// Max-abs entry of the factored matrix, the scale for condition probes.
    pub norm_a: f64,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Relative smallest-singular-value estimate from one probe solve with a
    /// deterministic pseudo-random right-hand side: the amplification
    /// `||A^{-1}r|| / ||r||` picks up `1/sigma_min` for near-singular `A`.
    /// Returns roughly `sigma_min / ||A||`; values near machine epsilon mean
    /// the shift sits on the discrete spectrum.
    pub fn near_singularity(&self) -> f64 {
        // simple xorshift sequence; no RNG dependency, bit-reproducible
        let mut state = 0x9e3779b97f4a7c15u64 ^ (self.dim as u64);
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let r: Vec<C64> = (0..self.dim).map(|_| C64::new(next(), next())).collect();
        let x = self.solve(&r);
        let nr = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        nr / (nx * self.norm_a).max(f64::MIN_POSITIVE)
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let at = |r: usize, c: usize| r * n + c;
        let mut x = b.to_vec();
        // forward: apply pivots and L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let imax = (j + self.kl).min(n - 1);
            let xj = x[j];
            for i in (j + 1)..=imax {
                let m = self.ab[at(self.kuf + i - j, j)];
                if m != C64::new(0.0, 0.0) {
                    x[i] -= m * xj;
                }
            }
        }
        // backward: U x = y
        for j in (0..n).rev() {
            let cmax = (j + self.kuf).min(n - 1);
            let mut acc = x[j];
            for c in (j + 1)..=cmax {
                let u = self.ab[at(self.kuf + j - c, c)];
                if u != C64::new(0.0, 0.0) {
                    acc -= u * x[c];
                }
            }
            x[j] = acc / self.ab[at(self.kuf, j)];
        }
        x
    }
}

/// Least-squares solution of a small dense overdetermined system via normal
/// equations; used by the wave-speed fit.
pub fn least_squares_scalar(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let ata: f64 = a.iter().map(|x| x * x).sum();
    let atb: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let c = atb / ata;
    let res: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (y - c * x).powi(2))
        .sum::<f64>()
        .sqrt();
    (c, res)
}

/// Log-log least squares slope of `values` against `ks`.
pub fn loglog_slope(ks: &[f64], values: &[f64]) -> f64 {
    assert_eq!(ks.len(), values.len());
    let n = ks.len() as f64;
    let lx: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

pub fn cnear(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol
}

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}
