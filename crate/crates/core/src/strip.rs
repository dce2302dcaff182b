//! Fields on the strip `R x T` and their Fourier-mode stacks: the weighted
//! M-norm, the synthesis/analysis pair, the dealiased nonlinearity and its
//! mode projections, the high-mode tail fixed point, and the y-translation /
//! reflection symmetry operators.

use crate::error::{Error, Result};
use crate::grid::{DiscreteField, Grid1D};
use crate::linalg::c;
use crate::model::{FluxModel, ShockProfile};
use crate::operator::{Coefficients, ModeOperator};
use crate::C64;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::io::{Read as IoRead, Write as IoWrite};
use std::sync::Arc;

/// The family `{w_k}` for `|k| <= k_max`, each mode a complex field on the
/// line.
#[derive(Clone)]
pub struct ModeStack {
    pub grid: Arc<Grid1D>,
    pub n: usize,
    pub k_max: i64,
    /// Modes stored k-ascending: index `(k + k_max)`.
    pub modes: Vec<DiscreteField>,
}

impl ModeStack {
    pub fn zeros(grid: Arc<Grid1D>, n: usize, k_max: i64) -> Self {
        let count = (2 * k_max + 1) as usize;
        ModeStack {
            n,
            k_max,
            modes: (0..count)
                .map(|_| DiscreteField::zeros(grid.clone(), n))
                .collect(),
            grid,
        }
    }

    #[inline]
    pub fn mode(&self, k: i64) -> &DiscreteField {
        &self.modes[(k + self.k_max) as usize]
    }

    #[inline]
    pub fn mode_mut(&mut self, k: i64) -> &mut DiscreteField {
        &mut self.modes[(k + self.k_max) as usize]
    }

    pub fn ks(&self) -> impl Iterator<Item = i64> {
        -self.k_max..=self.k_max
    }

    /// Weighted norm
    /// `sum_k (k^4 v 1)||w_k||^2 + (k^2 v 1)||w_k'||^2 + ||w_k''||^2`.
    pub fn m_norm(&self) -> f64 {
        let mut acc = 0.0;
        for k in self.ks() {
            let w = self.mode(k);
            let k2 = ((k * k) as f64).max(1.0);
            let k4 = ((k * k * k * k) as f64).max(1.0);
            acc += k4 * w.norm_l2().powi(2)
                + k2 * w.derivative().norm_l2().powi(2)
                + w.second_derivative().norm_l2().powi(2);
        }
        acc.sqrt()
    }

    /// Largest violation of the reality constraint `w_{-k} = conj(w_k)`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..=self.k_max {
            let a = self.mode(k);
            let b = self.mode(-k);
            for (x, y) in a.data.iter().zip(&b.data) {
                worst = worst.max((x.conj() - y).norm());
            }
        }
        worst
    }

    /// Overwrites `w_{-k}` with `conj(w_k)` for `k > 0` and drops the
    /// imaginary part of `w_0`.
    pub fn symmetrize_reality(&mut self) {
        for k in 1..=self.k_max {
            let conj = self.mode(k).conj();
            *self.mode_mut(-k) = conj;
        }
        for v in self.mode_mut(0).data.iter_mut() {
            *v = c(v.re, 0.0);
        }
    }

    pub fn add(&self, other: &ModeStack) -> ModeStack {
        let mut out = self.clone();
        for (a, b) in out.modes.iter_mut().zip(&other.modes) {
            *a = a.add(b);
        }
        out
    }

    pub fn sub(&self, other: &ModeStack) -> ModeStack {
        let mut out = self.clone();
        for (a, b) in out.modes.iter_mut().zip(&other.modes) {
            *a = a.sub(b);
        }
        out
    }

    pub fn scale(&self, a: C64) -> ModeStack {
        let mut out = self.clone();
        for m in out.modes.iter_mut() {
            *m = m.scale(a);
        }
        out
    }

    /// y-translation `tau_c`: `w_k -> e^{ikc} w_k`; an M-norm isometry.
    pub fn translate(&self, shift: f64) -> ModeStack {
        let mut out = self.clone();
        for k in self.ks() {
            let phase = c(0.0, k as f64 * shift).exp();
            *out.mode_mut(k) = self.mode(k).scale(phase);
        }
        out
    }

    /// Reflection `Gamma` with state matrix `R`: `w_k -> R w_{-k}`.
    pub fn reflect(&self, r: &DMatrix<f64>) -> ModeStack {
        assert_eq!(r.nrows(), self.n);
        let mut out = self.clone();
        for k in self.ks() {
            let src = self.mode(-k);
            let dst = out.mode_mut(k);
            for i in 0..self.grid.n_points {
                for row in 0..self.n {
                    let mut acc = c(0.0, 0.0);
                    for col in 0..self.n {
                        acc += r[(row, col)] * src.get(i, col);
                    }
                    dst.set(i, row, acc);
                }
            }
        }
        out
    }
}

/// Real 2D field sampled on the strip, `y_j = 2 pi j / ny`.
#[derive(Clone)]
pub struct StripField {
    pub grid: Arc<Grid1D>,
    pub n: usize,
    pub ny: usize,
    /// Layout `data[(ix * ny + iy) * n + comp]`.
    pub data: Vec<f64>,
}

impl StripField {
    pub fn zeros(grid: Arc<Grid1D>, n: usize, ny: usize) -> Self {
        let len = grid.n_points * ny * n;
        StripField {
            grid,
            n,
            ny,
            data: vec![0.0; len],
        }
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize, comp: usize) -> f64 {
        self.data[(ix * self.ny + iy) * self.n + comp]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, comp: usize, v: f64) {
        self.data[(ix * self.ny + iy) * self.n + comp] = v;
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        (0..self.ny)
            .map(|j| 2.0 * std::f64::consts::PI * j as f64 / self.ny as f64)
            .collect()
    }

    pub fn norm_sup(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Trapezoid-in-x, exact-in-y discrete `L^2(Omega)` norm.
    pub fn norm_l2(&self) -> f64 {
        let hx = self.grid.h;
        let hy = 2.0 * std::f64::consts::PI / self.ny as f64;
        let np = self.grid.n_points;
        let mut acc = 0.0;
        for ix in 0..np {
            let w = if ix == 0 || ix == np - 1 { 0.5 } else { 1.0 };
            for iy in 0..self.ny {
                for comp in 0..self.n {
                    acc += w * self.get(ix, iy, comp).powi(2);
                }
            }
        }
        (acc * hx * hy).sqrt()
    }

    /// Full `H^2(Omega)` norm with all derivatives `|alpha| <= 2`;
    /// x-derivatives by the same stencils as [`DiscreteField`], y-derivatives
    /// spectrally through the mode stack.
    pub fn norm_h2(&self) -> f64 {
        let w = analyze(self, ((self.ny as i64) - 1) / 2);
        let mut acc = 0.0;
        for k in w.ks() {
            let m = w.mode(k);
            let kf = k as f64;
            let d1 = m.derivative();
            let d2 = m.second_derivative();
            let l2 = m.norm_l2().powi(2);
            let l2d1 = d1.norm_l2().powi(2);
            let l2d2 = d2.norm_l2().powi(2);
            // u, ux, uy, uxx, uxy, uyy
            acc += (1.0 + kf * kf + kf.powi(4)) * l2 + (1.0 + kf * kf) * l2d1 + l2d2;
        }
        (acc * 2.0 * std::f64::consts::PI).sqrt()
    }
}

/// `Pi_k[u] = (1/2 pi) \int u e^{-iky} dy` per x-row, for all `|k| <= k_max`.
pub fn analyze(u: &StripField, k_max: i64) -> ModeStack {
    let mut w = ModeStack::zeros(u.grid.clone(), u.n, k_max);
    let ny = u.ny;
    let ys = u.y_nodes();
    for k in -k_max..=k_max {
        let phases: Vec<C64> = ys.iter().map(|&y| c(0.0, -(k as f64) * y).exp()).collect();
        let mode = w.mode_mut(k);
        for ix in 0..u.grid.n_points {
            for comp in 0..u.n {
                let mut acc = c(0.0, 0.0);
                for iy in 0..ny {
                    acc += phases[iy] * u.get(ix, iy, comp);
                }
                mode.set(ix, comp, acc / ny as f64);
            }
        }
    }
    w
}

/// `S^{-1}`: reassembles the 2D field `u = sum_k w_k e^{iky}` on an `ny`
/// y-grid; the imaginary residue of a reality-symmetric stack is dropped.
pub fn synthesize(w: &ModeStack, ny: usize) -> StripField {
    assert!(ny as i64 >= 2 * w.k_max + 1, "y-grid too coarse for k_max");
    let mut u = StripField::zeros(w.grid.clone(), w.n, ny);
    let ys = u.y_nodes();
    for k in w.ks() {
        let mode = w.mode(k);
        let phases: Vec<C64> = ys.iter().map(|&y| c(0.0, k as f64 * y).exp()).collect();
        for ix in 0..w.grid.n_points {
            for comp in 0..w.n {
                let v = mode.get(ix, comp);
                for iy in 0..ny {
                    let val = u.get(ix, iy, comp) + (v * phases[iy]).re;
                    u.set(ix, iy, comp, val);
                }
            }
        }
    }
    u
}

/// Default aliasing-safe y-resolution for a given truncation.
pub fn default_ny(k_max: i64) -> usize {
    (2 * k_max + 2) as usize
}

/// Fine y-resolution for dealiased nonlinearity evaluation.
pub fn dealiased_ny(k_max: i64) -> usize {
    (2 * (2 * k_max + 1) + 2) as usize & !1
}

/// Mode projections of the quadratic flux remainders
/// `Ri = fi(eps, ubar + v) - fi(eps, ubar) - Dfi(eps, ubar) v`,
/// evaluated pointwise on a dealiased y-grid. Returns `(R1_k, R2_k)`.
pub fn remainder_modes(
    v: &ModeStack,
    profile: &ShockProfile,
    model: &FluxModel,
    eps: f64,
) -> Result<(ModeStack, ModeStack)> {
    let k_max = v.k_max;
    let ny = dealiased_ny(k_max);
    let u = synthesize(v, ny);
    let np = u.grid.n_points;
    let n = u.n;
    // pointwise remainders on the fine grid
    let mut r1 = StripField::zeros(u.grid.clone(), n, ny);
    let mut r2 = StripField::zeros(u.grid.clone(), n, ny);
    for ix in 0..np {
        let ub = profile.value(ix);
        let f1b = (model.f1)(eps, ub);
        let f2b = (model.f2)(eps, ub);
        let df1b = (model.df1)(eps, ub);
        let df2b = (model.df2)(eps, ub);
        for iy in 0..ny {
            let mut uv: Vec<f64> = (0..n).map(|comp| ub[comp] + u.get(ix, iy, comp)).collect();
            for x in uv.iter_mut() {
                if x.abs() > model.box_bound {
                    return Err(Error::Model(format!(
                        "state {x} leaves the declared flux box (bound {})",
                        model.box_bound
                    )));
                }
            }
            let f1v = (model.f1)(eps, &uv);
            let f2v = (model.f2)(eps, &uv);
            for row in 0..n {
                let mut lin1 = 0.0;
                let mut lin2 = 0.0;
                for col in 0..n {
                    lin1 += df1b[(row, col)] * u.get(ix, iy, col);
                    lin2 += df2b[(row, col)] * u.get(ix, iy, col);
                }
                r1.set(ix, iy, row, f1v[row] - f1b[row] - lin1);
                r2.set(ix, iy, row, f2v[row] - f2b[row] - lin2);
            }
        }
    }
    Ok((analyze(&r1, k_max), analyze(&r2, k_max)))
}

/// Mode projections of the forcing `N = -[R1]_x - [R2]_y`, i.e.
/// `N_k = -d_x(R1_k) - ik R2_k`.
pub fn nonlinearity_modes(
    v: &ModeStack,
    profile: &ShockProfile,
    model: &FluxModel,
    eps: f64,
) -> Result<ModeStack> {
    let (m1, m2) = remainder_modes(v, profile, model, eps)?;
    Ok(nonlinearity_from_remainders(&m1, &m2))
}

/// Differentiates remainder stacks into the forcing stack.
pub fn nonlinearity_from_remainders(m1: &ModeStack, m2: &ModeStack) -> ModeStack {
    let k_max = m1.k_max;
    let n = m1.n;
    let mut out = ModeStack::zeros(m1.grid.clone(), n, k_max);
    for k in -k_max..=k_max {
        let d1 = m1.mode(k).derivative();
        let ik = c(0.0, k as f64);
        let dst = out.mode_mut(k);
        for i in 0..dst.data.len() {
            dst.data[i] = -d1.data[i] - ik * m2.mode(k).data[i];
        }
    }
    out
}

/// Everything the tail iteration needs besides its unknowns.
pub struct TailContext<'a> {
    pub profile: &'a ShockProfile,
    pub model: &'a FluxModel,
    pub k_star: i64,
    pub k_max: i64,
    pub d_bar: f64,
    pub eps: f64,
    /// `L_k^{d_bar}` for every tail mode `k` (all `|k| <= k_max` except `0`
    /// and `±k_star`), index `(k + k_max)`; unused slots may hold anything.
    pub ops: Vec<Arc<ModeOperator>>,
}

impl<'a> TailContext<'a> {
    pub fn new(
        profile: &'a ShockProfile,
        model: &'a FluxModel,
        k_star: i64,
        k_max: i64,
        d_bar: f64,
        eps: f64,
    ) -> Self {
        let coeffs = Coefficients::from_profile(profile, model);
        let ops: Vec<Arc<ModeOperator>> = (-k_max..=k_max)
            .map(|k| Arc::new(ModeOperator::assemble(&coeffs, k, d_bar, eps, None)))
            .collect();
        TailContext {
            profile,
            model,
            k_star,
            k_max,
            d_bar,
            eps,
            ops,
        }
    }

    pub fn op(&self, k: i64) -> &ModeOperator {
        &self.ops[(k + self.k_max) as usize]
    }

    pub fn is_tail_mode(&self, k: i64) -> bool {
        k != 0 && k.abs() != self.k_star.abs()
    }
}

/// Picard fixed point for the high modes:
/// `w_k <- (L_k^{d_bar})^{-1} [ N_k(u0 + u_{±k*} + w) + i (d_bar - d) k w_k ]`
/// over all tail modes, with the reality constraint re-enforced each sweep.
/// Returns the tail, the measured contraction ratio, and the sweep count.
pub fn tail_fixed_point(
    ctx: &TailContext,
    u0: &DiscreteField,
    w_kstar: &DiscreteField,
    w_mkstar: &DiscreteField,
    d: f64,
    tol_fix: f64,
    max_iter: usize,
) -> Result<(ModeStack, f64, usize)> {
    let mut w = ModeStack::zeros(ctx.profile.grid.clone(), ctx.profile.n, ctx.k_max);
    let mut prev_delta: Option<f64> = None;
    let mut theta: f64 = 0.0;
    for it in 1..=max_iter {
        // assemble the full stack: u0 and the critical pair ride along fixed
        let mut full = w.clone();
        *full.mode_mut(0) = u0.clone();
        *full.mode_mut(ctx.k_star) = w_kstar.clone();
        *full.mode_mut(-ctx.k_star) = w_mkstar.clone();
        let nl = nonlinearity_modes(&full, ctx.profile, ctx.model, ctx.eps)?;
        let results: Vec<(i64, DiscreteField)> = (1..=ctx.k_max)
            .filter(|&k| ctx.is_tail_mode(k))
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&k| {
                // L_k^d = L_k^{d_bar} + ik(d_bar - d), so the frame-change
                // term moves to the right with a minus sign
                let shift = c(0.0, (d - ctx.d_bar) * k as f64);
                let mut rhs = nl.mode(k).clone();
                if shift.norm() > 0.0 {
                    rhs = rhs.add(&w.mode(k).scale(shift));
                }
                let sol = ctx.op(k).resolvent_solve(c(0.0, 0.0), &rhs.data)?;
                let mut f = DiscreteField::zeros(ctx.profile.grid.clone(), ctx.profile.n);
                // (0 - L)^{-1} = -L^{-1}
                for (dst, s) in f.data.iter_mut().zip(&sol) {
                    *dst = -s;
                }
                Ok((k, f))
            })
            .collect::<Result<_>>()?;
        let mut next = ModeStack::zeros(ctx.profile.grid.clone(), ctx.profile.n, ctx.k_max);
        for (k, f) in results {
            *next.mode_mut(k) = f;
        }
        next.symmetrize_reality();
        let delta = next.sub(&w).m_norm();
        w = next;
        if let Some(pd) = prev_delta {
            if pd > 0.0 {
                let ratio = delta / pd;
                theta = theta.max(ratio);
                if ratio >= 1.0 {
                    return Err(Error::ContractionFailure {
                        ratio,
                        context: "tail fixed point: amplitude or |d - d_bar| too large".into(),
                    });
                }
            }
        }
        if delta <= tol_fix {
            return Ok((w, theta, it));
        }
        prev_delta = Some(delta);
    }
    Err(Error::ContractionFailure {
        ratio: theta.max(1.0),
        context: format!("tail fixed point did not converge in {max_iter} sweeps"),
    })
}

/// Writes a stack to the documented binary container: a JSON header line
/// `{n, N, K_max, L}` followed by complex rows per mode in k-ascending order
/// (little-endian f64 re/im pairs).
pub fn write_stack(w: &ModeStack, mut out: impl IoWrite) -> Result<()> {
    let header = serde_json::json!({
        "n": w.n,
        "N": w.grid.n_points,
        "K_max": w.k_max,
        "L": w.grid.l,
    });
    writeln!(out, "{header}")?;
    for k in w.ks() {
        for v in &w.mode(k).data {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a stack written by [`write_stack`].
pub fn read_stack(mut input: impl IoRead) -> Result<ModeStack> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        input.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let header: serde_json::Value = serde_json::from_slice(&header)
        .map_err(|e| Error::Config(format!("bad stack header: {e}")))?;
    let n = header["n"].as_u64().ok_or_else(|| Error::Config("missing n".into()))? as usize;
    let np = header["N"].as_u64().ok_or_else(|| Error::Config("missing N".into()))? as usize;
    let k_max = header["K_max"]
        .as_i64()
        .ok_or_else(|| Error::Config("missing K_max".into()))?;
    let l = header["L"].as_f64().ok_or_else(|| Error::Config("missing L".into()))?;
    let grid = Grid1D::new(l, np)?;
    let mut w = ModeStack::zeros(grid, n, k_max);
    let mut buf = [0u8; 16];
    for k in -k_max..=k_max {
        let mode = w.mode_mut(k);
        for i in 0..mode.data.len() {
            input.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[0..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..16].try_into().unwrap());
            mode.data[i] = c(re, im);
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::solve_profile;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid(np: usize, l: f64) -> Arc<Grid1D> {
        Grid1D::new(l, np).unwrap()
    }

    /// Random band-limited field built from narrow Gaussians so that every
    /// mode satisfies `||g''|| >= ||g||` (the regime where the norm sandwich
    /// constant 2 applies).
    fn random_stack(g: Arc<Grid1D>, k_max: i64, rng: &mut impl Rng) -> ModeStack {
        let mut w = ModeStack::zeros(g.clone(), 1, k_max);
        for k in 0..=k_max {
            let mut f = DiscreteField::zeros(g.clone(), 1);
            for _ in 0..3 {
                let a = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let x0: f64 = rng.gen_range(-3.0..3.0);
                let s: f64 = rng.gen_range(0.45..0.65);
                for i in 0..g.n_points {
                    let x = g.nodes[i];
                    let v = (-(x - x0) * (x - x0) / (2.0 * s * s)).exp();
                    f.data[i] += a * v;
                }
            }
            *w.mode_mut(k) = f;
        }
        w.symmetrize_reality();
        w
    }

    #[test]
    fn cosine_mode_split() {
        let g = grid(101, 10.0);
        let k_star = 3i64;
        let k_max = 5i64;
        let ny = default_ny(k_max);
        let mut u = StripField::zeros(g.clone(), 1, ny);
        let ys = u.y_nodes();
        for ix in 0..g.n_points {
            let gx = (-g.nodes[ix] * g.nodes[ix]).exp();
            for iy in 0..ny {
                u.set(ix, iy, 0, gx * (k_star as f64 * ys[iy]).cos());
            }
        }
        let w = analyze(&u, k_max);
        for k in w.ks() {
            for i in 0..g.n_points {
                let expect = if k.abs() == k_star {
                    0.5 * (-g.nodes[i] * g.nodes[i]).exp()
                } else {
                    0.0
                };
                assert!((w.mode(k).get(i, 0) - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = grid(101, 8.0);
        let w = random_stack(g, 4, &mut rng);
        let u = synthesize(&w, default_ny(4));
        let w2 = analyze(&u, 4);
        let defect = w2.sub(&w).m_norm();
        assert!(defect < 1e-12 * (1.0 + w.m_norm()), "round trip {defect:.3e}");
    }

    #[test]
    fn parseval_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid(201, 8.0);
        let w = random_stack(g, 5, &mut rng);
        let u = synthesize(&w, default_ny(5));
        // a = 1, b = 1: ||d_x d_y u||^2 = 2 pi sum_k k^2 ||d_x w_k||^2
        let mut rhs = 0.0;
        for k in w.ks() {
            rhs += (k * k) as f64 * w.mode(k).derivative().norm_l2().powi(2);
        }
        rhs *= 2.0 * std::f64::consts::PI;
        // left side: x-derivative per y-column, y-derivative spectrally
        let wd = analyze(&u, 5);
        let mut lhs = 0.0;
        for k in wd.ks() {
            let d1 = wd.mode(k).derivative();
            lhs += (k * k) as f64 * d1.norm_l2().powi(2);
        }
        lhs *= 2.0 * std::f64::consts::PI;
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
    }

    #[test]
    fn norm_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(201, 8.0);
        let two_pi = 2.0 * std::f64::consts::PI;
        for _ in 0..50 {
            let w = random_stack(g.clone(), 4, &mut rng);
            let u = synthesize(&w, default_ny(4));
            let m2 = w.m_norm().powi(2) * two_pi;
            let h2 = u.norm_h2().powi(2);
            assert!(m2 <= h2 * (1.0 + 1e-10), "lower: {m2} vs {h2}");
            assert!(h2 <= 2.0 * m2 * (1.0 + 1e-10), "upper: {h2} vs {m2}");
        }
    }

    #[test]
    fn translation_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid(101, 8.0);
        let w = random_stack(g, 4, &mut rng);
        // full revolution is the identity
        let wt = w.translate(2.0 * std::f64::consts::PI);
        assert!(wt.sub(&w).m_norm() < 1e-12);
        // isometry
        let wc = w.translate(0.7331);
        assert!((wc.m_norm() - w.m_norm()).abs() < 1e-12 * w.m_norm());
    }

    #[test]
    fn translation_commutes_with_synthesis() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = grid(101, 8.0);
        let k_max = 4i64;
        let w = random_stack(g.clone(), k_max, &mut rng);
        let ny = default_ny(k_max);
        let shift_steps = 3usize; // shift by an exact grid multiple in y
        let shift = 2.0 * std::f64::consts::PI * shift_steps as f64 / ny as f64;
        let path1 = synthesize(&w.translate(shift), ny);
        let u = synthesize(&w, ny);
        // translate the 2D field by rotating the y samples
        let mut path2 = StripField::zeros(g.clone(), 1, ny);
        for ix in 0..g.n_points {
            for iy in 0..ny {
                let src = (iy + shift_steps) % ny;
                path2.set(ix, iy, 0, u.get(ix, src, 0));
            }
        }
        let mut worst: f64 = 0.0;
        for (a, b) in path1.data.iter().zip(&path2.data) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-12, "commutation defect {worst:.3e}");
    }

    #[test]
    fn reflection_involution_and_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = grid(101, 8.0);
        let w = random_stack(g, 4, &mut rng);
        let r = DMatrix::identity(1, 1);
        let wr = w.reflect(&r);
        assert!((wr.m_norm() - w.m_norm()).abs() < 1e-12 * w.m_norm());
        let wrr = wr.reflect(&r);
        assert!(wrr.sub(&w).m_norm() < 1e-12);
    }

    fn burgers_setup(np: usize, l: f64) -> (FluxModel, ShockProfile) {
        let m = FluxModel::burgers(0.0, 0.0);
        let g = grid(np, l);
        let p = solve_profile(&m, 0.0, &[1.0], &[-1.0], 0.0, g).unwrap();
        (m, p)
    }

    #[test]
    fn nonlinearity_zero_and_quadratic() {
        let (m, p) = burgers_setup(201, 15.0);
        let g = p.grid.clone();
        let zero = ModeStack::zeros(g.clone(), 1, 3);
        let nl0 = nonlinearity_modes(&zero, &p, &m, 0.0).unwrap();
        assert!(nl0.m_norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w = random_stack(g, 3, &mut rng);
        let mut norms = Vec::new();
        for &t in &[1e-2, 5e-3, 2.5e-3] {
            let nl = nonlinearity_modes(&w.scale(c(t, 0.0)), &p, &m, 0.0).unwrap();
            norms.push(nl.m_norm() / (t * t));
        }
        for pair in norms.windows(2) {
            assert!(
                (pair[0] - pair[1]).abs() < 0.05 * pair[0],
                "quadratic scaling {norms:?}"
            );
        }
    }

    #[test]
    fn nonlinearity_lipschitz_shape() {
        let (m, p) = burgers_setup(201, 15.0);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let g = p.grid.clone();
        for _ in 0..5 {
            let v = random_stack(g.clone(), 3, &mut rng).scale(c(1e-2, 0.0));
            let w = random_stack(g.clone(), 3, &mut rng).scale(c(1e-2, 0.0));
            let nv = nonlinearity_modes(&v, &p, &m, 0.0).unwrap();
            let nw = nonlinearity_modes(&w, &p, &m, 0.0).unwrap();
            let lhs = nw.sub(&nv).m_norm();
            let rhs = (v.m_norm() + w.m_norm()) * w.sub(&v).m_norm();
            // C is order one for Burgers at these amplitudes
            assert!(lhs <= 10.0 * rhs, "Lipschitz shape: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_mode_y_average_of_r2_derivative() {
        // Pi_0 of a y-derivative vanishes identically: mode 0 of N must not
        // see the f2 remainder even when f2 is nontrivial
        let m = FluxModel::burgers(0.8, 0.0);
        let g = grid(201, 15.0);
        let p = solve_profile(&m, 0.0, &[1.0], &[-1.0], 0.0, g.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let w = random_stack(g, 3, &mut rng).scale(c(1e-2, 0.0));
        // mode 0 of -[R2]_y: compare the full N_0 against the f2-free model
        let m_nof2 = FluxModel::burgers(0.0, 0.0);
        let nl_full = nonlinearity_modes(&w, &p, &m, 0.0).unwrap();
        let nl_nof2 = nonlinearity_modes(&w, &p, &m_nof2, 0.0).unwrap();
        let diff0 = nl_full.mode(0).sub(nl_nof2.mode(0)).norm_l2();
        assert!(diff0 < 1e-12, "y-average leak {diff0:.3e}");
    }

    #[test]
    fn tail_zero_inputs() {
        let (m, p) = burgers_setup(101, 12.0);
        let ctx = TailContext::new(&p, &m, 1, 4, 0.0, 0.0);
        let zero = DiscreteField::zeros(p.grid.clone(), 1);
        let (w, _, iters) =
            tail_fixed_point(&ctx, &zero, &zero, &zero, 0.0, 1e-12, 5).unwrap();
        assert!(w.m_norm() < 1e-14);
        assert_eq!(iters, 1);
    }

    #[test]
    fn tail_contraction_and_quadratic_smallness() {
        let (m, p) = burgers_setup(201, 15.0);
        let ctx = TailContext::new(&p, &m, 1, 6, 0.0, 0.0);
        let zero = DiscreteField::zeros(p.grid.clone(), 1);
        let pair = |amp: f64| {
            DiscreteField::from_scalar_fn(p.grid.clone(), move |x| {
                c(amp * (-x * x / 2.0).exp(), 0.0)
            })
        };
        let run = |amp: f64| -> (f64, f64) {
            let wk = pair(amp);
            let (w, theta, _) =
                tail_fixed_point(&ctx, &zero, &wk, &wk.conj(), 0.0, 1e-12, 40).unwrap();
            (w.m_norm(), theta)
        };
        let (n1, theta) = run(1e-2);
        let (n2, _) = run(5e-3);
        assert!(theta <= 0.5, "contraction ratio {theta}");
        let factor = n1 / n2;
        assert!(factor > 3.5 && factor < 4.5, "quadratic factor {factor}");
    }

    #[test]
    fn tail_truncation_insensitive() {
        let (m, p) = burgers_setup(201, 15.0);
        let zero = DiscreteField::zeros(p.grid.clone(), 1);
        let wk = DiscreteField::from_scalar_fn(p.grid.clone(), |x| {
            c(1e-2 * (-x * x / 2.0).exp(), 0.0)
        });
        let norm_at = |k_max: i64| -> f64 {
            let ctx = TailContext::new(&p, &m, 1, k_max, 0.0, 0.0);
            let (w, _, _) =
                tail_fixed_point(&ctx, &zero, &wk, &wk.conj(), 0.0, 1e-12, 40).unwrap();
            w.m_norm()
        };
        let a = norm_at(6);
        let b = norm_at(12);
        assert!((a - b).abs() <= 0.01 * a.max(1e-300), "K_max drift {a} vs {b}");
    }

    #[test]
    fn tail_translation_equivariance() {
        let (m, p) = burgers_setup(201, 15.0);
        let ctx = TailContext::new(&p, &m, 1, 5, 0.0, 0.0);
        let zero = DiscreteField::zeros(p.grid.clone(), 1);
        let wk = DiscreteField::from_scalar_fn(p.grid.clone(), |x| {
            c(1e-2 * (-x * x / 2.0).exp(), 1e-3 * (-x * x).exp())
        });
        let tol_fix = 1e-12;
        let shift = 0.9;
        let (w, _, _) =
            tail_fixed_point(&ctx, &zero, &wk, &wk.conj(), 0.0, tol_fix, 40).unwrap();
        let phase = c(0.0, shift).exp();
        let wk_shift = wk.scale(phase);
        let (w_shift, _, _) = tail_fixed_point(
            &ctx,
            &zero,
            &wk_shift,
            &wk_shift.conj(),
            0.0,
            tol_fix,
            40,
        )
        .unwrap();
        let defect = w_shift.sub(&w.translate(shift)).m_norm();
        assert!(defect <= 10.0 * tol_fix.max(1e-10), "equivariance {defect:.3e}");
    }

    #[test]
    fn stack_serialization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = grid(51, 6.0);
        let w = random_stack(g, 3, &mut rng);
        let mut buf = Vec::new();
        write_stack(&w, &mut buf).unwrap();
        let w2 = read_stack(buf.as_slice()).unwrap();
        assert_eq!(w2.k_max, w.k_max);
        assert!(w2.sub(&w).m_norm() == 0.0);
    }
}
