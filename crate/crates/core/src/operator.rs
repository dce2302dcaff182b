//! Banded discretization of the mode operators
//! `L_k^d u = (Au)' + ikBu + (k^2 - ikd)u - u''`
//! on the truncated line with homogeneous Dirichlet conditions, plus the
//! resolvent solves and inverse-norm decay measurements built on them.

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::linalg::{loglog_slope, BandLu, BandMatrix};
use crate::model::{DirectOperatorModel, FluxModel, ShockProfile};
use crate::C64;
use nalgebra::DMatrix;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Default relative singularity threshold below which a shifted operator is
/// treated as sitting on the discrete spectrum.
pub const TOL_SING: f64 = 1e-10;

/// Matrix coefficient samples `A(x_i)`, `B(x_i)` feeding the assembly; built
/// either from a computed profile and its flux or from a direct operator
/// model.
#[derive(Clone)]
pub struct Coefficients {
    pub grid: Arc<Grid1D>,
    pub n: usize,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

impl Coefficients {
    pub fn from_profile(profile: &ShockProfile, model: &FluxModel) -> Self {
        let np = profile.grid.n_points;
        Coefficients {
            grid: profile.grid.clone(),
            n: profile.n,
            a: (0..np).map(|i| profile.a_matrix(model, i)).collect(),
            b: (0..np).map(|i| profile.b_matrix(model, i)).collect(),
        }
    }

    pub fn from_direct(model: &DirectOperatorModel, eps: f64, grid: Arc<Grid1D>) -> Self {
        let np = grid.n_points;
        Coefficients {
            n: model.n,
            a: (0..np).map(|i| (model.a)(eps, grid.nodes[i])).collect(),
            b: (0..np).map(|i| (model.b)(eps, grid.nodes[i])).collect(),
            grid,
        }
    }
}

/// Localized potential `V(eps, x) = (eps - eps0) * amp * exp(-(x-x0)^2) * I`
/// added to the `|k| = k_star` operators only; drives a discrete eigenvalue
/// across the imaginary axis as `eps` varies.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BumpPotential {
    pub k_star: i64,
    pub eps0: f64,
    pub amp: f64,
    pub x0: f64,
    /// Imaginary part of the potential strength, used by models without
    /// reflection symmetry; zero keeps the crossing eigenvalue real.
    pub amp_im: f64,
}

impl BumpPotential {
    pub fn value(&self, eps: f64, x: f64) -> C64 {
        let g = (-(x - self.x0) * (x - self.x0)).exp();
        C64::new(self.amp, self.amp_im) * (eps - self.eps0) * g
    }
}

/// One banded mode operator with a factorization cache for resolvent shifts.
pub struct ModeOperator {
    pub k: i64,
    pub d: f64,
    pub epsilon: f64,
    pub grid: Arc<Grid1D>,
    pub n: usize,
    /// Banded `L_k^d`; boundary rows are identically zero (fields carry
    /// homogeneous Dirichlet values, enforced in the resolvent assembly).
    pub matrix: BandMatrix,
    cache: Mutex<HashMap<(u64, u64), Arc<BandLu>>>,
    adjoint_cache: Mutex<HashMap<(u64, u64), Arc<BandLu>>>,
}

impl ModeOperator {
    /// Assembles `L_k^d` from coefficient samples. `(Au)'` is discretized in
    /// conservation form with midpoint-averaged coefficients, `u''` with the
    /// centered three-point stencil.
    pub fn assemble(
        coeffs: &Coefficients,
        k: i64,
        d: f64,
        eps: f64,
        bump: Option<&BumpPotential>,
    ) -> ModeOperator {
        let n = coeffs.n;
        let np = coeffs.grid.n_points;
        let h = coeffs.grid.h;
        let dim = np * n;
        let kw = 2 * n - 1;
        let mut m = BandMatrix::zeros(dim, kw.max(1), kw.max(1));
        let kf = k as f64;
        let ik = C64::new(0.0, kf);
        let zeta = C64::new(kf * kf, -kf * d); // k^2 - ikd
        for i in 1..np - 1 {
            // A at cell midpoints
            let ap = 0.5 * (&coeffs.a[i] + &coeffs.a[i + 1]);
            let am = 0.5 * (&coeffs.a[i - 1] + &coeffs.a[i]);
            for r in 0..n {
                for c in 0..n {
                    // (Au)' in conservation form
                    let w_p = ap[(r, c)] / (2.0 * h);
                    let w_m = am[(r, c)] / (2.0 * h);
                    m.add(i * n + r, (i + 1) * n + c, C64::new(w_p, 0.0));
                    m.add(i * n + r, i * n + c, C64::new(w_p - w_m, 0.0));
                    m.add(i * n + r, (i - 1) * n + c, C64::new(-w_m, 0.0));
                    // ikB
                    m.add(i * n + r, i * n + c, ik * coeffs.b[i][(r, c)]);
                }
                // (k^2 - ikd) u - u''
                let h2 = h * h;
                m.add(i * n + r, i * n + r, zeta + C64::new(2.0 / h2, 0.0));
                m.add(i * n + r, (i + 1) * n + r, C64::new(-1.0 / h2, 0.0));
                m.add(i * n + r, (i - 1) * n + r, C64::new(-1.0 / h2, 0.0));
                if let Some(bp) = bump {
                    if k.abs() == bp.k_star.abs() {
                        let v = bp.value(eps, coeffs.grid.nodes[i]);
                        // conjugate-pair potential keeps sigma(L_{-k}) = conj sigma(L_k)
                        let v = if k >= 0 { v } else { v.conj() };
                        m.add(i * n + r, i * n + r, v);
                    }
                }
            }
        }
        ModeOperator {
            k,
            d,
            epsilon: eps,
            grid: coeffs.grid.clone(),
            n,
            matrix: m,
            cache: Mutex::new(HashMap::new()),
            adjoint_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.n_points * self.n
    }

    /// Operator action; boundary entries of the output are zero by the
    /// Dirichlet convention.
    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(u)
    }

    /// `lambda I - L` with boundary rows replaced by the identity (so the
    /// solve enforces `u(±L) = 0`).
    pub fn shifted_matrix(&self, lambda: C64) -> BandMatrix {
        let mut m = self.matrix.clone();
        let dim = self.dim();
        for p in m_data_mut(&mut m) {
            *p = -*p;
        }
        for i in 0..dim {
            let node = i / self.n;
            if node == 0 || node == self.grid.n_points - 1 {
                m.clear_row(i);
                m.set(i, i, C64::new(1.0, 0.0));
            } else {
                m.add(i, i, lambda);
            }
        }
        m
    }

    fn factor_at(&self, lambda: C64, adjoint: bool) -> Result<Arc<BandLu>> {
        let key = (lambda.re.to_bits(), lambda.im.to_bits());
        let cache = if adjoint { &self.adjoint_cache } else { &self.cache };
        if let Some(f) = cache.lock().unwrap().get(&key) {
            return Ok(f.clone());
        }
        let m = self.shifted_matrix(lambda);
        let m = if adjoint { m.conjugate_transpose() } else { m };
        let lu = m.factor().map_err(|e| match e {
            Error::Singular { pivot_ratio } => Error::NearSpectrum { lambda, pivot_ratio },
            other => other,
        })?;
        let sing = lu.near_singularity();
        if sing < TOL_SING {
            return Err(Error::NearSpectrum {
                lambda,
                pivot_ratio: sing,
            });
        }
        let arc = Arc::new(lu);
        cache.lock().unwrap().insert(key, arc.clone());
        Ok(arc)
    }

    /// Solves `(lambda I - L) u = f` with Dirichlet values; boundary entries
    /// of `f` are ignored.
    pub fn resolvent_solve(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        let lu = self.factor_at(lambda, false)?;
        let mut rhs = f.to_vec();
        self.zero_boundary(&mut rhs);
        let mut u = lu.solve(&rhs);
        self.zero_boundary(&mut u);
        Ok(u)
    }

    /// Solves the conjugate-transposed system `(lambda I - L)^H u = f`.
    pub fn resolvent_solve_adjoint(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        let lu = self.factor_at(lambda, true)?;
        let mut rhs = f.to_vec();
        self.zero_boundary(&mut rhs);
        let mut u = lu.solve(&rhs);
        self.zero_boundary(&mut u);
        Ok(u)
    }

    pub fn zero_boundary(&self, u: &mut [C64]) {
        for c in 0..self.n {
            u[c] = C64::new(0.0, 0.0);
            u[(self.grid.n_points - 1) * self.n + c] = C64::new(0.0, 0.0);
        }
    }

    /// Dense matrix of the operator restricted to interior nodes; used only
    /// by small-scale eigensolve oracles.
    pub fn dense_interior(&self) -> DMatrix<C64> {
        let np = self.grid.n_points;
        let nd = (np - 2) * self.n;
        let mut m = DMatrix::from_element(nd, nd, C64::new(0.0, 0.0));
        for i in 0..nd {
            for j in 0..nd {
                m[(i, j)] = self.matrix.get(i + self.n, j + self.n);
            }
        }
        m
    }
}

fn m_data_mut(m: &mut BandMatrix) -> impl Iterator<Item = &mut C64> {
    m.data_mut().iter_mut()
}

/// Measured decay of `||L_k^{-1}||` and its derivative-weighted variants
/// over a dyadic range of modes.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub ks: Vec<i64>,
    pub inv_norms: Vec<f64>,
    pub dx_inv_norms: Vec<f64>,
    pub dxx_inv_norms: Vec<f64>,
    /// log-log slopes fitted over the full k range.
    pub slope_inv: f64,
    pub slope_dx_inv: f64,
    pub slope_dxx_inv: f64,
    pub power_iterations: usize,
    pub converged: bool,
}

fn dx_apply(grid: &Grid1D, n: usize, u: &[C64], out: &mut [C64]) {
    // centered interior, zero at the (Dirichlet) ends
    let np = grid.n_points;
    let h2 = 2.0 * grid.h;
    for p in out.iter_mut() {
        *p = C64::new(0.0, 0.0);
    }
    for i in 1..np - 1 {
        for c in 0..n {
            out[i * n + c] = (u[(i + 1) * n + c] - u[(i - 1) * n + c]) / h2;
        }
    }
}

fn dx_transpose_apply(grid: &Grid1D, n: usize, u: &[C64], out: &mut [C64]) {
    let np = grid.n_points;
    let h2 = 2.0 * grid.h;
    for p in out.iter_mut() {
        *p = C64::new(0.0, 0.0);
    }
    for i in 1..np - 1 {
        for c in 0..n {
            let v = u[i * n + c] / h2;
            out[(i + 1) * n + c] += v;
            out[(i - 1) * n + c] -= v;
        }
    }
}

fn dxx_apply(grid: &Grid1D, n: usize, u: &[C64], out: &mut [C64]) {
    let np = grid.n_points;
    let h2 = grid.h * grid.h;
    for p in out.iter_mut() {
        *p = C64::new(0.0, 0.0);
    }
    for i in 1..np - 1 {
        for c in 0..n {
            out[i * n + c] =
                (u[(i + 1) * n + c] - 2.0 * u[i * n + c] + u[(i - 1) * n + c]) / h2;
        }
    }
}

fn dxx_transpose_apply(grid: &Grid1D, n: usize, u: &[C64], out: &mut [C64]) {
    let np = grid.n_points;
    let h2 = grid.h * grid.h;
    for p in out.iter_mut() {
        *p = C64::new(0.0, 0.0);
    }
    for i in 1..np - 1 {
        for c in 0..n {
            let v = u[i * n + c] / h2;
            out[(i + 1) * n + c] += v;
            out[i * n + c] -= 2.0 * v;
            out[(i - 1) * n + c] += v;
        }
    }
}

#[derive(Clone, Copy)]
enum Weight {
    None,
    Dx,
    Dxx,
}

/// Largest singular value of `W ∘ L^{-1}` by power iteration on the normal
/// operator, with `W` one of identity, `∂_x`, `∂_x²`.
fn inverse_norm(op: &ModeOperator, w: Weight, max_iter: usize, tol: f64) -> (f64, usize, bool) {
    use rand::prelude::*;
    let dim = op.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed ^ op.k as u64);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut sigma = 0.0f64;
    let mut tmp = vec![C64::new(0.0, 0.0); dim];
    let mut iters = 0;
    let mut converged = false;
    for it in 0..max_iter {
        iters = it + 1;
        // normal-operator sweep: v <- L^{-H} W^T W L^{-1} v
        let mut y = op.resolvent_solve(C64::new(0.0, 0.0), &v).unwrap();
        for p in y.iter_mut() {
            *p = -*p; // (0 - L)^{-1} = -L^{-1}
        }
        match w {
            Weight::None => {}
            Weight::Dx => {
                dx_apply(&op.grid, op.n, &y, &mut tmp);
                dx_transpose_apply(&op.grid, op.n, &tmp, &mut y);
            }
            Weight::Dxx => {
                dxx_apply(&op.grid, op.n, &y, &mut tmp);
                dxx_transpose_apply(&op.grid, op.n, &tmp, &mut y);
            }
        }
        let mut z = op.resolvent_solve_adjoint(C64::new(0.0, 0.0), &y).unwrap();
        for p in z.iter_mut() {
            *p = -*p;
        }
        let nz = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let s_new = (nz / nv).sqrt();
        for (a, b) in v.iter_mut().zip(&z) {
            *a = b / nz;
        }
        if (s_new - sigma).abs() <= tol * s_new.max(1e-300) {
            sigma = s_new;
            converged = true;
            break;
        }
        sigma = s_new;
    }
    (sigma, iters, converged)
}

/// Measures the inverse-norm decay of `L_k` over `k_list` (which must avoid
/// `0` and the critical modes) and fits log-log slopes.
pub fn measure_inverse_norm_decay(
    coeffs: &Coefficients,
    d: f64,
    eps: f64,
    k_list: &[i64],
) -> Result<DecayReport> {
    let mut inv = Vec::new();
    let mut dx = Vec::new();
    let mut dxx = Vec::new();
    let mut total_iters = 0;
    let mut all_converged = true;
    for &k in k_list {
        if k == 0 {
            return Err(Error::Spectral("k = 0 not invertible without bordering".into()));
        }
        let op = ModeOperator::assemble(coeffs, k, d, eps, None);
        for (w, store) in [
            (Weight::None, &mut inv),
            (Weight::Dx, &mut dx),
            (Weight::Dxx, &mut dxx),
        ] {
            let (s, it, ok) = inverse_norm(&op, w, 60, 1e-8);
            store.push(s);
            total_iters += it;
            all_converged &= ok;
        }
    }
    let kf: Vec<f64> = k_list.iter().map(|&k| k.abs() as f64).collect();
    Ok(DecayReport {
        ks: k_list.to_vec(),
        slope_inv: loglog_slope(&kf, &inv),
        slope_dx_inv: loglog_slope(&kf, &dx),
        slope_dxx_inv: loglog_slope(&kf, &dxx),
        inv_norms: inv,
        dx_inv_norms: dx,
        dxx_inv_norms: dxx,
        power_iterations: total_iters,
        converged: all_converged,
    })
}
