//! Dunford-integral spectral calculus: eigenprojections, the bounded partial
//! inverse on the spectral complement, eigenpair extraction from contours,
//! and crossing-eigenvalue tracking over the model parameter.

use crate::error::{Error, Result};
use crate::linalg::c;
use crate::operator::ModeOperator;
use crate::C64;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

/// Anything that can apply itself and solve `(lambda I - L) u = f`; the
/// Dunford machinery below is written against this so it runs identically on
/// banded mode operators and on small dense manufactured matrices.
pub trait ResolventOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, u: &[C64]) -> Vec<C64>;
    fn resolvent(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>>;
    /// Solve with the conjugate-transposed operator, for left eigenvectors.
    fn resolvent_adjoint(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>>;
}

impl ResolventOp for ModeOperator {
    fn dim(&self) -> usize {
        ModeOperator::dim(self)
    }
    fn apply(&self, u: &[C64]) -> Vec<C64> {
        ModeOperator::apply(self, u)
    }
    fn resolvent(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        self.resolvent_solve(lambda, f)
    }
    fn resolvent_adjoint(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        self.resolvent_solve_adjoint(lambda, f)
    }
}

/// Dense complex operator for manufactured test cases.
#[derive(Clone, Debug)]
pub struct DenseOp {
    pub m: DMatrix<C64>,
}

impl DenseOp {
    pub fn new(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        DenseOp { m }
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = DMatrix::from_element(n, n, c(0.0, 0.0));
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        DenseOp { m }
    }

    /// `dim x dim` Jordan block for the given eigenvalue.
    pub fn jordan(lambda: C64, dim: usize) -> Self {
        let mut m = DMatrix::from_element(dim, dim, c(0.0, 0.0));
        for i in 0..dim {
            m[(i, i)] = lambda;
            if i + 1 < dim {
                m[(i, i + 1)] = c(1.0, 0.0);
            }
        }
        DenseOp { m }
    }
}

impl ResolventOp for DenseOp {
    fn dim(&self) -> usize {
        self.m.nrows()
    }
    fn apply(&self, u: &[C64]) -> Vec<C64> {
        let v = &self.m * nalgebra::DVector::from_column_slice(u);
        v.iter().cloned().collect()
    }
    fn resolvent(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        let n = self.dim();
        let mut a = -self.m.clone();
        for i in 0..n {
            a[(i, i)] += lambda;
        }
        let sol = a
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(f))
            .ok_or(Error::NearSpectrum {
                lambda,
                pivot_ratio: 0.0,
            })?;
        Ok(sol.iter().cloned().collect())
    }
    fn resolvent_adjoint(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        let n = self.dim();
        let mut a = -self.m.adjoint();
        for i in 0..n {
            a[(i, i)] += lambda.conj();
        }
        let sol = a
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(f))
            .ok_or(Error::NearSpectrum {
                lambda,
                pivot_ratio: 0.0,
            })?;
        Ok(sol.iter().cloned().collect())
    }
}

/// Circular integration contour with trapezoid quadrature nodes.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Contour {
    pub center_re: f64,
    pub center_im: f64,
    pub radius: f64,
    pub q: usize,
}

impl Contour {
    pub fn new(center: C64, radius: f64, q: usize) -> Result<Contour> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!("contour radius must be positive, got {radius}")));
        }
        if q < 4 || !q.is_power_of_two() {
            return Err(Error::Config(format!(
                "contour node count must be a power of two >= 4, got {q}"
            )));
        }
        Ok(Contour {
            center_re: center.re,
            center_im: center.im,
            radius,
            q,
        })
    }

    pub fn center(&self) -> C64 {
        c(self.center_re, self.center_im)
    }

    pub fn nodes(&self) -> Vec<C64> {
        (0..self.q)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / self.q as f64;
                self.center() + self.radius * c(th.cos(), th.sin())
            })
            .collect()
    }

    pub fn contains(&self, z: C64) -> bool {
        (z - self.center()).norm() < self.radius
    }
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += a * xx;
    }
}

pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
}

pub fn norm(u: &[C64]) -> f64 {
    u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Weighted contour sum `sum_j g(lambda_j) * (lambda_j - L)^{-1} v` realizing
/// `(1/2 pi i) \oint g(lambda) (lambda - L)^{-1} v dlambda` by the trapezoid
/// rule; node solves run in parallel.
fn contour_sum<O: ResolventOp + ?Sized>(
    op: &O,
    contour: &Contour,
    v: &[C64],
    g: impl Fn(C64) -> C64 + Sync,
) -> Result<Vec<C64>> {
    let nodes = contour.nodes();
    let terms: Vec<Result<(C64, Vec<C64>)>> = nodes
        .par_iter()
        .map(|&lam| {
            let u = op.resolvent(lam, v)?;
            // dlambda / (2 pi i) = (r/Q) e^{i theta}
            let e = (lam - contour.center()) / contour.radius;
            let w = (contour.radius / contour.q as f64) * e * g(lam);
            Ok((w, u))
        })
        .collect();
    let mut acc = vec![c(0.0, 0.0); op.dim()];
    for t in terms {
        let (w, u) = t?;
        axpy(&mut acc, w, &u);
    }
    Ok(acc)
}

/// Spectral projection `Pi v` onto the part of the spectrum enclosed by the
/// contour.
pub fn dunford_project<O: ResolventOp + ?Sized>(
    op: &O,
    contour: &Contour,
    v: &[C64],
) -> Result<Vec<C64>> {
    contour_sum(op, contour, v, |_| c(1.0, 0.0))
}

/// Adjoint projection `Pi^H v`, used to build left eigenvectors.
pub fn dunford_project_adjoint<O: ResolventOp + ?Sized>(
    op: &O,
    contour: &Contour,
    v: &[C64],
) -> Result<Vec<C64>> {
    let nodes = contour.nodes();
    let terms: Vec<Result<(C64, Vec<C64>)>> = nodes
        .par_iter()
        .map(|&lam| {
            let u = op.resolvent_adjoint(lam, v)?;
            let e = (lam - contour.center()) / contour.radius;
            let w = (contour.radius / contour.q as f64) * e.conj();
            Ok((w, u))
        })
        .collect();
    let mut acc = vec![c(0.0, 0.0); op.dim()];
    for t in terms {
        let (w, u) = t?;
        axpy(&mut acc, w, &u);
    }
    Ok(acc)
}

/// Bounded partial inverse `L^dagger f = -(1/2 pi i) \oint lambda^{-1}
/// (lambda - L)^{-1} f dlambda`; the contour must enclose `0`.
pub fn dunford_partial_inverse<O: ResolventOp + ?Sized>(
    op: &O,
    contour: &Contour,
    f: &[C64],
) -> Result<Vec<C64>> {
    if !contour.contains(c(0.0, 0.0)) {
        return Err(Error::Spectral(
            "partial-inverse contour must enclose the origin".into(),
        ));
    }
    contour_sum(op, contour, f, |lam| -1.0 / lam)
}

/// A reusable projector for one operator and contour, plus its partial
/// inverse; carries no mutable state beyond the operator's own caches.
pub struct SpectralProjector<'a, O: ResolventOp + ?Sized> {
    pub op: &'a O,
    pub contour: Contour,
}

impl<'a, O: ResolventOp + ?Sized> SpectralProjector<'a, O> {
    pub fn new(op: &'a O, contour: Contour) -> Self {
        SpectralProjector { op, contour }
    }

    pub fn project(&self, v: &[C64]) -> Result<Vec<C64>> {
        dunford_project(self.op, &self.contour, v)
    }

    /// Complementary projection `(I - Pi) v`.
    pub fn project_complement(&self, v: &[C64]) -> Result<Vec<C64>> {
        let p = self.project(v)?;
        Ok(v.iter().zip(&p).map(|(a, b)| a - b).collect())
    }

    pub fn partial_inverse(&self, f: &[C64]) -> Result<Vec<C64>> {
        dunford_partial_inverse(self.op, &self.contour, f)
    }
}

/// Deterministic pseudo-random probe vectors for rank estimation.
pub fn probe_vectors(dim: usize, count: usize, seed: u64) -> Vec<Vec<C64>> {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v: Vec<C64> = (0..dim)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let n = norm(&v);
            for x in v.iter_mut() {
                *x /= n;
            }
            v
        })
        .collect()
}

/// Result of eigenpair extraction from a contour.
pub struct Eigenpair {
    pub lambda: C64,
    pub v: Vec<C64>,
    pub multiplicity: usize,
    pub residual: f64,
}

/// Estimates the rank of the contour projection from random probes and, for
/// rank one, returns the eigenpair with a Rayleigh-quotient eigenvalue.
pub fn extract_eigenpair<O: ResolventOp + ?Sized>(
    op: &O,
    contour: &Contour,
    tol_eig: f64,
) -> Result<Eigenpair> {
    let dim = op.dim();
    let m = 6.min(dim);
    let probes = probe_vectors(dim, m, 0xabcd);
    let projected: Vec<Vec<C64>> = probes
        .iter()
        .map(|q| dunford_project(op, contour, q))
        .collect::<Result<_>>()?;
    // orthonormal basis of the projected span, dropping negligible columns
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for p in &projected {
        let mut w = p.clone();
        for b in &basis {
            let co = inner(&w, b);
            for (x, y) in w.iter_mut().zip(b) {
                *x -= co * y;
            }
        }
        let nw = norm(&w);
        if nw > 1e-7 {
            for x in w.iter_mut() {
                *x /= nw;
            }
            basis.push(w);
        }
    }
    if basis.is_empty() {
        return Ok(Eigenpair {
            lambda: c(0.0, 0.0),
            v: vec![c(0.0, 0.0); dim],
            multiplicity: 0,
            residual: 0.0,
        });
    }
    // Pi acts as the identity on its range: eigenvalues of the compressed
    // projector near 1 count the enclosed spectral multiplicity
    let r = basis.len();
    let mut gram = DMatrix::from_element(r, r, c(0.0, 0.0));
    for (j, b) in basis.iter().enumerate() {
        let pb = dunford_project(op, contour, b)?;
        for (i, bi) in basis.iter().enumerate() {
            gram[(i, j)] = inner(&pb, bi);
        }
    }
    let eigs = gram.eigenvalues().ok_or_else(|| {
        Error::Spectral("rank-estimation Gram matrix eigensolve failed".into())
    })?;
    let multiplicity = eigs.iter().filter(|e| e.re > 0.5).count();
    if multiplicity != 1 {
        return Ok(Eigenpair {
            lambda: c(0.0, 0.0),
            v: basis[0].clone(),
            multiplicity,
            residual: f64::NAN,
        });
    }
    // rank one: one more projection pass purifies the quadrature error
    let mut v = dunford_project(op, contour, &basis[0])?;
    let nv = norm(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let lv = op.apply(&v);
    let lambda = inner(&lv, &v) / inner(&v, &v);
    let mut res = 0.0f64;
    for (a, b) in lv.iter().zip(&v) {
        res += (a - lambda * b).norm_sqr();
    }
    let residual = res.sqrt() / norm(&v);
    if residual > tol_eig {
        return Err(Error::Spectral(format!(
            "extracted eigenpair residual {residual:.3e} exceeds {tol_eig:.3e}"
        )));
    }
    Ok(Eigenpair {
        lambda,
        v,
        multiplicity: 1,
        residual,
    })
}

/// Left eigenvector `h` at the same contour, normalized so `<v, h> = 1`.
pub fn extract_left_eigenvector<O: ResolventOp + ?Sized>(
    op: &O,
    contour: &Contour,
    v: &[C64],
) -> Result<Vec<C64>> {
    let probes = probe_vectors(op.dim(), 3, 0xdcba);
    for q in &probes {
        let mut h = dunford_project_adjoint(op, contour, q)?;
        let pairing = inner(v, &h);
        if pairing.norm() > 1e-8 * norm(&h) {
            let s = (1.0 / pairing).conj();
            for x in h.iter_mut() {
                *x *= s;
            }
            return Ok(h);
        }
    }
    Err(Error::Spectral(
        "left eigenvector pairing with the right eigenvector is degenerate".into(),
    ))
}

/// Frame-shift of a mode-k eigenvalue into the moving frame with speed `d`.
pub fn galilean_shift(lambda: C64, k: i64, d: f64) -> C64 {
    lambda - c(0.0, k as f64 * d)
}

/// One tracked eigenvalue sample.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CrossingSample {
    pub eps: f64,
    pub re: f64,
    pub im: f64,
}

/// Crossing data for the critical transverse mode.
#[derive(Clone, Debug, Serialize)]
pub struct CrossingReport {
    pub k_star: i64,
    pub eps_crit: f64,
    pub lambda_prime_re: f64,
    pub lambda_prime_im: f64,
    pub d_bar: f64,
    pub samples: Vec<CrossingSample>,
    #[serde(skip)]
    pub lambda_crit: C64,
    /// Eigenvector at the crossing, phase-aligned along the continuation.
    #[serde(skip)]
    pub v_crit: Vec<C64>,
}

/// Continuation of a simple eigenvalue of `eps -> L(eps)` over a parameter
/// grid, with bisection for the `Re lambda = 0` crossing.
///
/// `build` constructs the operator at a parameter value; `center0` seeds the
/// contour at the first grid point; afterwards the contour follows the
/// eigenvalue.
pub fn track_crossing<O, F>(
    build: F,
    k_star: i64,
    eps_grid: &[f64],
    center0: C64,
    radius: f64,
    q: usize,
    tol_eps: f64,
    tol_transversal: f64,
) -> Result<CrossingReport>
where
    O: ResolventOp,
    F: Fn(f64) -> Result<O>,
{
    if eps_grid.len() < 2 {
        return Err(Error::Config("crossing grid needs at least two samples".into()));
    }
    let tol_eig = 1e-6;
    let eig_at = |eps: f64, center: C64, v_prev: Option<&[C64]>| -> Result<(C64, Vec<C64>)> {
        let op = build(eps)?;
        let contour = Contour::new(center, radius, q)?;
        let pair = extract_eigenpair(&op, &contour, tol_eig)?;
        match pair.multiplicity {
            0 => Err(Error::TrackingLost(format!(
                "no eigenvalue inside the contour at eps = {eps}"
            ))),
            1 => {
                let mut v = pair.v;
                if let Some(prev) = v_prev {
                    // gauge: positive inner product with the previous sample
                    let ip = inner(&v, prev);
                    if ip.norm() > 0.0 {
                        let phase = ip.conj() / ip.norm();
                        for x in v.iter_mut() {
                            *x *= phase;
                        }
                    }
                }
                Ok((pair.lambda, v))
            }
            mth => Err(Error::Hypothesis(format!(
                "eigenvalue at eps = {eps} has multiplicity {mth}; simplicity required"
            ))),
        }
    };

    let mut samples = Vec::new();
    let mut lambdas = Vec::new();
    let mut center = center0;
    let mut v_prev: Option<Vec<C64>> = None;
    for &eps in eps_grid {
        let (lam, v) = eig_at(eps, center, v_prev.as_deref())?;
        samples.push(CrossingSample {
            eps,
            re: lam.re,
            im: lam.im,
        });
        lambdas.push(lam);
        center = lam;
        v_prev = Some(v);
    }

    // locate the sign change of Re lambda
    let mut bracket = None;
    for i in 0..samples.len() - 1 {
        if samples[i].re == 0.0 {
            bracket = Some((samples[i].eps, samples[i].eps));
            break;
        }
        if samples[i].re * samples[i + 1].re < 0.0 {
            bracket = Some((samples[i].eps, samples[i + 1].eps));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::TrackingLost("Re lambda does not change sign over the parameter grid".into())
    })?;
    let idx = samples.iter().position(|s| s.eps == lo).unwrap();
    let mut center = lambdas[idx];
    let mut v_bis = None;
    let mut re_lo = samples[idx].re;
    while hi - lo > tol_eps {
        let mid = 0.5 * (lo + hi);
        let (lam, v) = eig_at(mid, center, v_prev.as_deref())?;
        center = lam;
        v_bis = Some(v);
        if lam.re == 0.0 {
            lo = mid;
            hi = mid;
        } else if lam.re * re_lo > 0.0 {
            lo = mid;
            re_lo = lam.re;
        } else {
            hi = mid;
        }
    }
    let eps_crit = 0.5 * (lo + hi);
    let (lambda_crit, v_crit) = eig_at(eps_crit, center, v_bis.as_deref().or(v_prev.as_deref()))?;

    // transversality by central difference around the crossing
    let span = eps_grid[eps_grid.len() - 1] - eps_grid[0];
    let delta = (1e-4 * span.abs()).max(10.0 * tol_eps);
    let (lam_p, _) = eig_at(eps_crit + delta, lambda_crit, Some(&v_crit))?;
    let (lam_m, _) = eig_at(eps_crit - delta, lambda_crit, Some(&v_crit))?;
    let lambda_prime = (lam_p - lam_m) / (2.0 * delta);
    if lambda_prime.re.abs() < tol_transversal {
        return Err(Error::Hypothesis(format!(
            "transversality failure: Re lambda'({eps_crit}) = {:.3e}",
            lambda_prime.re
        )));
    }
    Ok(CrossingReport {
        k_star,
        eps_crit,
        lambda_prime_re: lambda_prime.re,
        lambda_prime_im: lambda_prime.im,
        d_bar: lambda_crit.im / k_star as f64,
        samples,
        lambda_crit,
        v_crit,
    })
}

/// Rank-one manufactured family with eigenvalue exactly `eps + i` on a fixed
/// random direction, the rest of the spectrum parked at `mu_rest`.
pub fn rank_one_family(dim: usize, mu_rest: C64, seed: u64) -> impl Fn(f64) -> Result<DenseOp> {
    let probes = probe_vectors(dim, 1, seed);
    let v = probes.into_iter().next().unwrap();
    move |eps: f64| {
        // L = mu_rest I + ((eps + i) - mu_rest) v v^H
        let mut m = DMatrix::from_element(dim, dim, c(0.0, 0.0));
        let lam = c(eps, 1.0);
        for i in 0..dim {
            m[(i, i)] = mu_rest;
            for j in 0..dim {
                m[(i, j)] += (lam - mu_rest) * v[i] * v[j].conj();
            }
        }
        Ok(DenseOp::new(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probes(dim: usize, count: usize) -> Vec<Vec<C64>> {
        probe_vectors(dim, count, 99)
    }

    #[test]
    fn project_diag_selects_inside_eigenvalue() {
        let op = DenseOp::diag(&[c(0.5, 0.0), c(-3.0, 0.0)]);
        let contour = Contour::new(c(0.0, 0.0), 1.0, 64).unwrap();
        let v = vec![c(1.0, 0.0), c(1.0, 0.0)];
        let p = dunford_project(&op, &contour, &v).unwrap();
        assert!((p[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(p[1].norm() < 1e-12);
    }

    #[test]
    fn project_jordan_block_is_identity() {
        let op = DenseOp::jordan(c(0.0, 0.0), 2);
        let contour = Contour::new(c(0.0, 0.0), 1.0, 64).unwrap();
        for v in probes(2, 5) {
            let p = dunford_project(&op, &contour, &v).unwrap();
            for i in 0..2 {
                assert!((p[i] - v[i]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn partial_inverse_diag() {
        // the contour encloses the origin (and the kernel eigenvalue) only;
        // on the complement L^dagger then acts as 1/mu
        let op = DenseOp::diag(&[c(0.0, 0.0), c(-2.0, 0.0)]);
        let contour = Contour::new(c(0.0, 0.0), 1.0, 64).unwrap();
        let f = vec![c(1.0, 0.0), c(1.0, 0.0)];
        let u = dunford_partial_inverse(&op, &contour, &f).unwrap();
        assert!(u[0].norm() < 1e-10);
        assert!((u[1] - c(-0.5, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn partial_inverse_jordan_vanishes() {
        let op = DenseOp::jordan(c(0.0, 0.0), 2);
        let contour = Contour::new(c(0.0, 0.0), 1.0, 64).unwrap();
        let f = vec![c(0.7, 0.1), c(-0.3, 0.5)];
        let u = dunford_partial_inverse(&op, &contour, &f).unwrap();
        assert!(norm(&u) < 1e-10);
    }

    #[test]
    fn partial_inverse_requires_origin() {
        let op = DenseOp::diag(&[c(5.0, 0.0)]);
        let contour = Contour::new(c(5.0, 0.0), 1.0, 32).unwrap();
        assert!(dunford_partial_inverse(&op, &contour, &[c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn projector_identities_on_dense_ops() {
        for op in [
            DenseOp::diag(&[c(0.2, 0.1), c(-4.0, 0.0), c(3.0, 2.0)]),
            DenseOp::jordan(c(0.0, 0.0), 3),
        ] {
            let contour = Contour::new(c(0.0, 0.0), 1.0, 64).unwrap();
            for v in probes(op.dim(), 20) {
                let p = dunford_project(&op, &contour, &v).unwrap();
                let pp = dunford_project(&op, &contour, &p).unwrap();
                let d: f64 = p.iter().zip(&pp).map(|(a, b)| (a - b).norm_sqr()).sum();
                assert!(d.sqrt() <= 1e-8 * norm(&v), "idempotence");
                // L L^dagger = L^dagger L = I - Pi
                let li = dunford_partial_inverse(&op, &contour, &v).unwrap();
                let lli = op.apply(&li);
                let lv = op.apply(&v);
                let ilv = dunford_partial_inverse(&op, &contour, &lv).unwrap();
                for i in 0..op.dim() {
                    let compl = v[i] - p[i];
                    assert!((lli[i] - compl).norm() < 1e-8, "L L+ = I - Pi");
                    assert!((ilv[i] - compl).norm() < 1e-8, "L+ L = I - Pi");
                }
            }
        }
    }

    #[test]
    fn contour_radius_independence() {
        let op = DenseOp::diag(&[c(0.3, 0.0), c(-2.5, 1.0), c(4.0, -1.0)]);
        let c1 = Contour::new(c(0.3, 0.0), 0.8, 64).unwrap();
        let c2 = Contour::new(c(0.3, 0.0), 1.5, 64).unwrap();
        for v in probes(3, 10) {
            let p1 = dunford_project(&op, &c1, &v).unwrap();
            let p2 = dunford_project(&op, &c2, &v).unwrap();
            let d: f64 = p1.iter().zip(&p2).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(d.sqrt() < 1e-8);
        }
    }

    #[test]
    fn quadrature_converges_exponentially() {
        // a pole close to the contour slows the trapezoid rule enough to see
        // the Q-doubling improvement without hitting roundoff immediately
        let op = DenseOp::diag(&[c(0.3, 0.0), c(1.45, 0.0), c(-3.0, 0.0)]);
        let v = vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        let exact = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let mut errs = Vec::new();
        for q in [16usize, 32, 64] {
            let contour = Contour::new(c(0.3, 0.0), 1.0, q).unwrap();
            let p = dunford_project(&op, &contour, &v).unwrap();
            let e: f64 = p.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum();
            errs.push(e.sqrt().max(1e-16));
        }
        // each doubling must square-root-like crush the error: ratio growing
        assert!(errs[0] / errs[1] > 10.0, "errs {errs:?}");
        assert!(errs[1] / errs[2] > 10.0 || errs[2] < 1e-13, "errs {errs:?}");
    }

    #[test]
    fn extract_simple_eigenpair() {
        let op = DenseOp::diag(&[c(0.3, 0.0), c(-5.0, 0.0)]);
        let contour = Contour::new(c(0.3, 0.0), 1.0, 32).unwrap();
        let pair = extract_eigenpair(&op, &contour, 1e-8).unwrap();
        assert_eq!(pair.multiplicity, 1);
        assert!((pair.lambda - c(0.3, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn extract_empty_contour() {
        let op = DenseOp::diag(&[c(3.0, 0.0), c(-5.0, 0.0)]);
        let contour = Contour::new(c(0.0, 0.0), 1.0, 32).unwrap();
        let pair = extract_eigenpair(&op, &contour, 1e-8).unwrap();
        assert_eq!(pair.multiplicity, 0);
    }

    #[test]
    fn extract_double_eigenvalue() {
        let op = DenseOp::diag(&[c(0.1, 0.0), c(-0.1, 0.0), c(6.0, 0.0)]);
        let contour = Contour::new(c(0.0, 0.0), 1.0, 32).unwrap();
        let pair = extract_eigenpair(&op, &contour, 1e-8).unwrap();
        assert_eq!(pair.multiplicity, 2);
    }

    #[test]
    fn galilean_shift_arithmetic() {
        assert_eq!(galilean_shift(c(2.0, 3.0), 1, 3.0), c(2.0, 0.0));
        assert_eq!(galilean_shift(c(2.0, 3.0), 0, 7.0), c(2.0, 3.0));
    }

    #[test]
    fn left_eigenvector_pairing() {
        let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
        m[(0, 0)] = c(0.5, 0.2);
        m[(0, 1)] = c(1.0, 0.0);
        m[(1, 1)] = c(-3.0, 0.0);
        let op = DenseOp::new(m);
        let contour = Contour::new(c(0.5, 0.2), 0.5, 32).unwrap();
        let pair = extract_eigenpair(&op, &contour, 1e-8).unwrap();
        let h = extract_left_eigenvector(&op, &contour, &pair.v).unwrap();
        assert!((inner(&pair.v, &h) - c(1.0, 0.0)).norm() < 1e-8);
        // h is a left eigenvector: L^H h = conj(lambda) h
        let mut lhh = vec![c(0.0, 0.0); 2];
        let a = op.m.adjoint();
        for i in 0..2 {
            for j in 0..2 {
                lhh[i] += a[(i, j)] * h[j];
            }
        }
        for i in 0..2 {
            assert!((lhh[i] - pair.lambda.conj() * h[i]).norm() < 1e-8);
        }
    }

    #[test]
    fn rank_one_crossing_exact() {
        let fam = rank_one_family(12, c(-4.0, 0.0), 3);
        let eps_grid: Vec<f64> = (0..9).map(|i| -0.2 + 0.05 * i as f64).collect();
        let rep = track_crossing(
            fam,
            2,
            &eps_grid,
            c(-0.2, 1.0),
            0.3,
            32,
            1e-10,
            1e-3,
        )
        .unwrap();
        assert!(rep.eps_crit.abs() < 1e-6, "eps_crit {}", rep.eps_crit);
        assert!((rep.lambda_prime_re - 1.0).abs() < 1e-6);
        assert!(rep.lambda_prime_im.abs() < 1e-6);
        assert!((rep.d_bar - 0.5).abs() < 1e-8); // Im lambda / k* = 1/2
    }

    #[test]
    fn tracking_lost_without_sign_change() {
        let fam = rank_one_family(8, c(-4.0, 0.0), 5);
        let eps_grid = [0.5, 0.6, 0.7];
        let err = track_crossing(fam, 1, &eps_grid, c(0.5, 1.0), 0.3, 32, 1e-8, 1e-3);
        assert!(matches!(err, Err(Error::TrackingLost(_))));
    }
}
