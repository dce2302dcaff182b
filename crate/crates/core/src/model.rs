//! Flux models, viscous shock profiles and the structural hypotheses on the
//! endstates.
//!
//! A profile solves the first-order system
//! `ubar' = f1(eps, ubar) - c*ubar - (f1(eps, u_minus) - c*u_minus)`
//! on a truncated line, with the phase fixed by centering the profile at the
//! grid origin. Endstate matrices `A± = Df1(eps, u±) - cI` must carry real,
//! distinct, nonzero spectra with the Lax dimension count
//! `dim E^s(A+) + dim E^u(A-) = n + 1`.

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::linalg::{least_squares_scalar, BandMatrix};
use crate::C64;
use nalgebra::DMatrix;
use std::sync::Arc;

pub type VecFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;

/// A 2D conservation-law flux pair with Jacobians.
#[derive(Clone)]
pub struct FluxModel {
    pub n: usize,
    /// Closed parameter interval containing 0.
    pub param_interval: (f64, f64),
    /// Declared bounded box `|u_i| <= box_bound` on which the fluxes are used.
    pub box_bound: f64,
    pub f1: VecFn,
    pub f2: VecFn,
    pub df1: MatFn,
    pub df2: MatFn,
}

impl FluxModel {
    /// Scalar viscous Burgers flux `f1 = u^2/2`, `f2 = gamma*u^2/2 + sigma*u`.
    pub fn burgers(gamma: f64, sigma: f64) -> FluxModel {
        FluxModel {
            n: 1,
            param_interval: (-1.0, 1.0),
            box_bound: 10.0,
            f1: Arc::new(|_eps, u| vec![0.5 * u[0] * u[0]]),
            f2: Arc::new(move |_eps, u| vec![0.5 * gamma * u[0] * u[0] + sigma * u[0]]),
            df1: Arc::new(|_eps, u| DMatrix::from_element(1, 1, u[0])),
            df2: Arc::new(move |_eps, u| DMatrix::from_element(1, 1, gamma * u[0] + sigma)),
        }
    }

    /// Maximum relative Jacobian error against central finite differences at
    /// `probes` random points in the box.
    pub fn check_jacobians(&self, probes: usize, seed: u64) -> f64 {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let step = f64::EPSILON.cbrt();
        for _ in 0..probes {
            let eps = rng.gen_range(self.param_interval.0..=self.param_interval.1);
            let u: Vec<f64> = (0..self.n)
                .map(|_| rng.gen_range(-self.box_bound..self.box_bound) * 0.5)
                .collect();
            for (f, df) in [(&self.f1, &self.df1), (&self.f2, &self.df2)] {
                let jac = df(eps, &u);
                let scale = jac.amax().max(1.0);
                let mut fd = DMatrix::zeros(self.n, self.n);
                for j in 0..self.n {
                    let h = step * u[j].abs().max(1.0);
                    let mut up = u.clone();
                    let mut um = u.clone();
                    up[j] += h;
                    um[j] -= h;
                    let fp = f(eps, &up);
                    let fm = f(eps, &um);
                    for i in 0..self.n {
                        fd[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                    }
                }
                worst = worst.max((&jac - &fd).amax() / scale);
            }
        }
        worst
    }
}

/// Operator-coefficient model given directly as matrix families `A(eps, x)`,
/// `B(eps, x)` with known asymptotics; lets the spectral machinery be tested
/// on manufactured operators independent of any flux.
#[derive(Clone)]
pub struct DirectOperatorModel {
    pub n: usize,
    pub a: Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>,
    pub b: Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>,
    pub a_plus: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    pub a_minus: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    pub alpha: f64,
}

impl DirectOperatorModel {
    /// Checks `||A(eps,x) - A±(eps)|| <= C e^{-alpha |x|}` on samples; returns
    /// the fitted decay rate of the measured deviation.
    pub fn measure_coefficient_decay(&self, eps: f64, l: f64) -> f64 {
        let xs: Vec<f64> = (0..20).map(|i| 0.3 * l + 0.025 * l * i as f64).collect();
        let devs: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let dp = ((self.a)(eps, x) - (self.a_plus)(eps)).amax();
                let dm = ((self.a)(eps, -x) - (self.a_minus)(eps)).amax();
                dp.max(dm).max(1e-300)
            })
            .collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = devs.iter().map(|d| d.ln()).sum::<f64>() / n;
        let num: f64 = xs
            .iter()
            .zip(&devs)
            .map(|(x, d)| (x - mx) * (d.ln() - my))
            .sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        -num / den
    }
}

/// A computed viscous shock profile in the moving frame.
#[derive(Clone)]
pub struct ShockProfile {
    pub grid: Arc<Grid1D>,
    pub n: usize,
    /// Node-major samples of the profile, `ubar[i*n + c]`.
    pub ubar: Vec<f64>,
    /// Analytic derivative from the profile ODE, same layout.
    pub ubar_x: Vec<f64>,
    pub c: f64,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    /// Fitted exponential decay rate of `ubar - u±`.
    pub alpha: f64,
    pub epsilon: f64,
}

impl ShockProfile {
    #[inline]
    pub fn value(&self, node: usize) -> &[f64] {
        &self.ubar[node * self.n..(node + 1) * self.n]
    }

    #[inline]
    pub fn deriv(&self, node: usize) -> &[f64] {
        &self.ubar_x[node * self.n..(node + 1) * self.n]
    }

    /// `A(x_i) = Df1(eps, ubar(x_i)) - cI`.
    pub fn a_matrix(&self, model: &FluxModel, node: usize) -> DMatrix<f64> {
        let mut m = (model.df1)(self.epsilon, self.value(node));
        for i in 0..self.n {
            m[(i, i)] -= self.c;
        }
        m
    }

    /// `B(x_i) = Df2(eps, ubar(x_i))`.
    pub fn b_matrix(&self, model: &FluxModel, node: usize) -> DMatrix<f64> {
        (model.df2)(self.epsilon, self.value(node))
    }

    /// Sup norm of the collocation residual of the profile ODE on the box
    /// scheme, i.e. the system the Newton solver drove to zero.
    pub fn collocation_residual(&self, model: &FluxModel) -> f64 {
        let np = self.grid.n_points;
        let h = self.grid.h;
        let mut worst: f64 = 0.0;
        for i in 0..np - 1 {
            let um: Vec<f64> = (0..self.n)
                .map(|c| 0.5 * (self.value(i)[c] + self.value(i + 1)[c]))
                .collect();
            let g = profile_rhs(model, self.epsilon, &um, self.c, &self.u_minus);
            for c in 0..self.n {
                let r = (self.value(i + 1)[c] - self.value(i)[c]) / h - g[c];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Sup norm of `ubar' - g(ubar)` with the derivative taken by centered
    /// differences at the nodes; this measures the discretization error of
    /// the profile itself.
    pub fn node_residual(&self, model: &FluxModel) -> f64 {
        let np = self.grid.n_points;
        let h = self.grid.h;
        let mut worst: f64 = 0.0;
        for i in 1..np - 1 {
            let g = profile_rhs(model, self.epsilon, self.value(i), self.c, &self.u_minus);
            for c in 0..self.n {
                let d = (self.value(i + 1)[c] - self.value(i - 1)[c]) / (2.0 * h);
                worst = worst.max((d - g[c]).abs());
            }
        }
        worst
    }
}

/// Right-hand side of the integrated profile ODE:
/// `g(u) = f1(eps,u) - c*u - (f1(eps,u_minus) - c*u_minus)`.
pub fn profile_rhs(model: &FluxModel, eps: f64, u: &[f64], c: f64, u_minus: &[f64]) -> Vec<f64> {
    let fu = (model.f1)(eps, u);
    let fm = (model.f1)(eps, u_minus);
    (0..model.n)
        .map(|i| fu[i] - c * u[i] - (fm[i] - c * u_minus[i]))
        .collect()
}

fn profile_rhs_jac(model: &FluxModel, eps: f64, u: &[f64], c: f64) -> DMatrix<f64> {
    let mut j = (model.df1)(eps, u);
    for i in 0..model.n {
        j[(i, i)] -= c;
    }
    j
}

/// Least-squares wave speed from the Rankine-Hugoniot relation
/// `f1(u+) - f1(u-) = c (u+ - u-)`; returns `(c, residual)`.
pub fn compute_speed(
    model: &FluxModel,
    eps: f64,
    u_minus: &[f64],
    u_plus: &[f64],
) -> Result<(f64, f64)> {
    let du: Vec<f64> = u_plus.iter().zip(u_minus).map(|(a, b)| a - b).collect();
    if du.iter().map(|d| d * d).sum::<f64>() == 0.0 {
        return Err(Error::Model("endstates coincide; no shock".into()));
    }
    let fp = (model.f1)(eps, u_plus);
    let fm = (model.f1)(eps, u_minus);
    let df: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| a - b).collect();
    Ok(least_squares_scalar(&du, &df))
}

/// Spectral data of one endstate matrix.
#[derive(Clone, Debug)]
pub struct EndstateSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Right eigenvectors, columns matching `eigenvalues`.
    pub right: DMatrix<f64>,
    /// Left eigenvectors (rows of the inverse of `right`), same order.
    pub left: DMatrix<f64>,
    pub dim_stable: usize,
    pub dim_unstable: usize,
}

/// Lax-condition report for a pair of endstates.
#[derive(Clone, Debug)]
pub struct LaxReport {
    pub plus: EndstateSpectrum,
    pub minus: EndstateSpectrum,
}

fn endstate_spectrum(a: &DMatrix<f64>, sep_tol: f64) -> Result<EndstateSpectrum> {
    let n = a.nrows();
    let eigs_c = a.clone().complex_eigenvalues();
    let mut eigs: Vec<f64> = Vec::with_capacity(n);
    for e in eigs_c.iter() {
        if e.im.abs() > sep_tol * (1.0 + e.norm()) {
            return Err(Error::LaxCondition(format!(
                "endstate matrix has non-real eigenvalue {:.6}+{:.6}i",
                e.re, e.im
            )));
        }
        eigs.push(e.re);
    }
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in eigs.windows(2) {
        if (w[1] - w[0]).abs() <= sep_tol * (1.0 + w[0].abs().max(w[1].abs())) {
            return Err(Error::LaxCondition(format!(
                "endstate eigenvalues {:.6} and {:.6} not distinct",
                w[0], w[1]
            )));
        }
    }
    for &e in &eigs {
        if e.abs() <= sep_tol {
            return Err(Error::LaxCondition(format!(
                "endstate matrix has (near-)zero eigenvalue {e:.3e}"
            )));
        }
    }
    // Eigenvectors via null spaces of A - mu I (real simple eigenvalues).
    let mut right = DMatrix::zeros(n, n);
    for (j, &mu) in eigs.iter().enumerate() {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= mu;
        }
        let svd = m.svd(true, true);
        let vt = svd.v_t.as_ref().unwrap();
        // row of v_t for the smallest singular value
        let v = vt.row(n - 1);
        for i in 0..n {
            right[(i, j)] = v[i];
        }
    }
    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::LaxCondition("eigenvector matrix is singular".into()))?;
    let dim_stable = eigs.iter().filter(|&&e| e < 0.0).count();
    let dim_unstable = eigs.iter().filter(|&&e| e > 0.0).count();
    Ok(EndstateSpectrum {
        eigenvalues: eigs,
        right,
        left,
        dim_stable,
        dim_unstable,
    })
}

/// Validates that `A± = Df1(eps, u±) - cI` have real, distinct, nonzero
/// spectra with `dim E^s(A+) + dim E^u(A-) = n + 1`.
pub fn verify_lax(
    model: &FluxModel,
    eps: f64,
    u_minus: &[f64],
    u_plus: &[f64],
    c: f64,
) -> Result<LaxReport> {
    verify_lax_matrices(
        &shifted_jacobian(model, eps, u_plus, c),
        &shifted_jacobian(model, eps, u_minus, c),
        model.n,
    )
}

fn shifted_jacobian(model: &FluxModel, eps: f64, u: &[f64], c: f64) -> DMatrix<f64> {
    let mut m = (model.df1)(eps, u);
    for i in 0..model.n {
        m[(i, i)] -= c;
    }
    m
}

/// Same check on explicitly given endstate matrices.
pub fn verify_lax_matrices(
    a_plus: &DMatrix<f64>,
    a_minus: &DMatrix<f64>,
    n: usize,
) -> Result<LaxReport> {
    let sep_tol = 1e-9;
    let plus = endstate_spectrum(a_plus, sep_tol)?;
    let minus = endstate_spectrum(a_minus, sep_tol)?;
    let count = plus.dim_stable + minus.dim_unstable;
    if count != n + 1 {
        return Err(Error::LaxCondition(format!(
            "Lax dimension count {count} != n + 1 = {}",
            n + 1
        )));
    }
    Ok(LaxReport { plus, minus })
}

/// Damped-Newton solve of the box-scheme collocation system for the profile.
///
/// Rows: one block per cell (midpoint rule for `u' = g(u)`), boundary
/// projection rows pinning the non-decaying directions at `±L`, and one phase
/// row centering the profile. The Lax count makes the system square.
pub fn solve_profile(
    model: &FluxModel,
    eps: f64,
    u_minus: &[f64],
    u_plus: &[f64],
    c: f64,
    grid: Arc<Grid1D>,
) -> Result<ShockProfile> {
    let tol_rh = 1e-10;
    let (_, rh_res) = compute_speed(model, eps, u_minus, u_plus)?;
    if rh_res > tol_rh {
        return Err(Error::RankineHugoniot {
            residual: rh_res,
            tol: tol_rh,
        });
    }
    let lax = verify_lax(model, eps, u_minus, u_plus, c)?;
    let n = model.n;
    let np = grid.n_points;
    let dim = np * n;
    let mid = grid.mid_index();

    // rows pinning directions that do not decay on each side
    let n_bnd_minus = n - lax.minus.dim_unstable;
    let n_bnd_plus = n - lax.plus.dim_stable;
    debug_assert_eq!((np - 1) * n + n_bnd_minus + n_bnd_plus + 1, dim);

    // row ordering keeps the system banded: left boundary rows, then cell
    // blocks with the phase row spliced in before cell `mid`
    let cell_row = |i: usize| -> usize {
        n_bnd_minus + i * n + if i >= mid { 1 } else { 0 }
    };
    let phase_row = n_bnd_minus + mid * n;
    let plus_rows = dim - n_bnd_plus;

    let jump: Vec<f64> = u_plus.iter().zip(u_minus).map(|(a, b)| a - b).collect();
    let umid: Vec<f64> = u_plus
        .iter()
        .zip(u_minus)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();

    // tanh interpolant initial guess
    let mut u: Vec<f64> = Vec::with_capacity(dim);
    for i in 0..np {
        let t = 0.5 * (1.0 + (grid.nodes[i] / 2.0).tanh());
        for comp in 0..n {
            u.push(u_minus[comp] * (1.0 - t) + u_plus[comp] * t);
        }
    }

    let h = grid.h;
    let residual = |u: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; dim];
        for j in 0..n_bnd_minus {
            // stable left-eigendirections of A- must vanish at -L
            let lrow = lax.minus.left.row(j); // eigenvalues ascending: stable first
            r[j] = (0..n).map(|cc| lrow[cc] * (u[cc] - u_minus[cc])).sum();
        }
        for i in 0..np - 1 {
            let um: Vec<f64> = (0..n).map(|cc| 0.5 * (u[i * n + cc] + u[(i + 1) * n + cc])).collect();
            let g = profile_rhs(model, eps, &um, c, u_minus);
            for cc in 0..n {
                r[cell_row(i) + cc] = (u[(i + 1) * n + cc] - u[i * n + cc]) / h - g[cc];
            }
        }
        r[phase_row] = (0..n).map(|cc| (u[mid * n + cc] - umid[cc]) * jump[cc]).sum();
        for j in 0..n_bnd_plus {
            // unstable left-eigendirections of A+ must vanish at +L
            let lrow = lax.plus.left.row(n - 1 - j); // unstable are the largest
            r[plus_rows + j] = (0..n)
                .map(|cc| lrow[cc] * (u[(np - 1) * n + cc] - u_plus[cc]))
                .sum();
        }
        r
    };

    let kw = 3 * n; // generous band for the row/column offsets above
    let assemble_jacobian = |u: &[f64]| -> BandMatrix {
        let mut jm = BandMatrix::zeros(dim, kw, kw);
        for j in 0..n_bnd_minus {
            let lrow = lax.minus.left.row(j);
            for cc in 0..n {
                jm.set(j, cc, C64::new(lrow[cc], 0.0));
            }
        }
        for i in 0..np - 1 {
            let um: Vec<f64> = (0..n).map(|cc| 0.5 * (u[i * n + cc] + u[(i + 1) * n + cc])).collect();
            let dg = profile_rhs_jac(model, eps, &um, c);
            for rr in 0..n {
                for cc in 0..n {
                    let d = -0.5 * dg[(rr, cc)];
                    let diag = if rr == cc { 1.0 / h } else { 0.0 };
                    jm.add(cell_row(i) + rr, i * n + cc, C64::new(-diag + d, 0.0));
                    jm.add(cell_row(i) + rr, (i + 1) * n + cc, C64::new(diag + d, 0.0));
                }
            }
        }
        for cc in 0..n {
            jm.set(phase_row, mid * n + cc, C64::new(jump[cc], 0.0));
        }
        for j in 0..n_bnd_plus {
            let lrow = lax.plus.left.row(n - 1 - j);
            for cc in 0..n {
                jm.set(plus_rows + j, (np - 1) * n + cc, C64::new(lrow[cc], 0.0));
            }
        }
        jm
    };

    let max_iter = 50;
    let tol_newton = 1e-13;
    let mut converged = false;
    for _ in 0..max_iter {
        let r = residual(&u);
        let rn = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if rn <= tol_newton {
            converged = true;
            break;
        }
        let jm = assemble_jacobian(&u);
        let lu = jm.factor().map_err(|e| match e {
            Error::Singular { pivot_ratio } => Error::NewtonDiverged(format!(
                "singular profile Jacobian (pivot ratio {pivot_ratio:.3e}); try a larger domain"
            )),
            other => other,
        })?;
        let rhs: Vec<C64> = r.iter().map(|&v| C64::new(-v, 0.0)).collect();
        let step = lu.solve(&rhs);
        // damping by halving until the residual decreases
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = u
                .iter()
                .zip(&step)
                .map(|(a, s)| a + t * s.re)
                .collect();
            let rt = residual(&trial);
            let rtn = rt.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if rtn < rn {
                u = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged(
                "profile line search stalled; try a larger domain or finer grid".into(),
            ));
        }
    }
    if !converged {
        let r = residual(&u);
        let rn = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if rn > 1e-10 {
            return Err(Error::NewtonDiverged(format!(
                "profile Newton residual {rn:.3e} after {max_iter} iterations"
            )));
        }
    }

    // analytic derivative from the ODE itself (exact where the profile is)
    let mut ubar_x = vec![0.0; dim];
    for i in 0..np {
        let g = profile_rhs(model, eps, &u[i * n..(i + 1) * n], c, u_minus);
        ubar_x[i * n..(i + 1) * n].copy_from_slice(&g);
    }

    let alpha = fit_decay_rate(&grid, n, &u, u_minus, u_plus);
    let profile = ShockProfile {
        grid: grid.clone(),
        n,
        ubar: u,
        ubar_x,
        c,
        u_minus: u_minus.to_vec(),
        u_plus: u_plus.to_vec(),
        alpha,
        epsilon: eps,
    };

    // endstate attainment at the truncation boundary
    let tol_end = 1e-6_f64.max(10.0 * (-alpha * grid.l).exp());
    for cc in 0..n {
        if (profile.value(0)[cc] - u_minus[cc]).abs() > tol_end
            || (profile.value(np - 1)[cc] - u_plus[cc]).abs() > tol_end
        {
            return Err(Error::NewtonDiverged(format!(
                "profile does not reach its endstates at +-L (tolerance {tol_end:.1e}); enlarge L"
            )));
        }
    }
    Ok(profile)
}

/// Fitted exponential rate of `ubar - u±` on the outer quarter of the grid
/// (staying clear of the truncation boundary).
fn fit_decay_rate(grid: &Grid1D, n: usize, u: &[f64], u_minus: &[f64], u_plus: &[f64]) -> f64 {
    let np = grid.n_points;
    let fit_side = |idx: Vec<usize>, target: &[f64]| -> f64 {
        let xs: Vec<f64> = idx.iter().map(|&i| grid.nodes[i].abs()).collect();
        let ys: Vec<f64> = idx
            .iter()
            .map(|&i| {
                (0..n)
                    .map(|cc| (u[i * n + cc] - target[cc]).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    .max(1e-300)
                    .ln()
            })
            .collect();
        let m = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / m;
        let my = ys.iter().sum::<f64>() / m;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        -num / den
    };
    // sample |x| in [0.5 L, 0.85 L]
    let lo = (0.75 * (np - 1) as f64) as usize;
    let hi = (0.925 * (np - 1) as f64) as usize;
    let right: Vec<usize> = (lo..=hi).collect();
    let left: Vec<usize> = right.iter().map(|&i| np - 1 - i).collect();
    fit_side(right, u_plus).min(fit_side(left, u_minus))
}
