//! Solving the reduced bifurcation equation: the pitchfork branch in the
//! reflection-symmetric case, the two-parameter `(eps(s), d(s))` branch in
//! the translation-only case, the time-periodic reinterpretation when the
//! frame speed is nonzero, and full-solution synthesis with an independent
//! residual certification.

use crate::error::{Error, Result};
use crate::grid::DiscreteField;
use crate::linalg::c;
use crate::reduction::{Pipeline, ReducedEquation};
use crate::spectral::CrossingReport;
use crate::strip::{synthesize, ModeStack};
use crate::C64;
use nalgebra::{DMatrix, DVector};
use std::cell::RefCell;
use std::io::Write as IoWrite;

/// Abstract reduced data consumed by the branch solvers, so they can be
/// exercised on manufactured closed-form equations as well as on the full
/// pipeline.
pub trait ReducedModel {
    fn lambda(&self, eps: f64) -> Result<C64>;
    fn lambda_prime(&self) -> C64;
    fn f(&self, x: f64, eps: f64, d: f64) -> Result<C64>;
    fn k_star(&self) -> i64;
    fn d_bar(&self) -> f64;
    fn eps_crit(&self) -> f64;
}

impl ReducedModel for ReducedEquation {
    fn lambda(&self, eps: f64) -> Result<C64> {
        ReducedEquation::lambda(self, eps)
    }
    fn lambda_prime(&self) -> C64 {
        c(self.crossing.lambda_prime_re, self.crossing.lambda_prime_im)
    }
    fn f(&self, x: f64, eps: f64, d: f64) -> Result<C64> {
        self.f_reduced(x, eps, d)
    }
    fn k_star(&self) -> i64 {
        ReducedEquation::k_star(self)
    }
    fn d_bar(&self) -> f64 {
        self.d_bar
    }
    fn eps_crit(&self) -> f64 {
        self.crossing.eps_crit
    }
}

/// Closed-form reduced data for solver verification.
pub struct ClosedFormReduced {
    pub lambda: Box<dyn Fn(f64) -> C64>,
    pub lambda_prime: C64,
    pub f: Box<dyn Fn(f64, f64, f64) -> C64>,
    pub k_star: i64,
    pub d_bar: f64,
    pub eps_crit: f64,
}

impl ReducedModel for ClosedFormReduced {
    fn lambda(&self, eps: f64) -> Result<C64> {
        Ok((self.lambda)(eps))
    }
    fn lambda_prime(&self) -> C64 {
        self.lambda_prime
    }
    fn f(&self, x: f64, eps: f64, d: f64) -> Result<C64> {
        Ok((self.f)(x, eps, d))
    }
    fn k_star(&self) -> i64 {
        self.k_star
    }
    fn d_bar(&self) -> f64 {
        self.d_bar
    }
    fn eps_crit(&self) -> f64 {
        self.eps_crit
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum BranchType {
    O2Pitchfork,
    SO2Traveling,
    Hopf,
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct BranchSample {
    pub s: f64,
    pub eps: f64,
    /// Amplitude; equal to `s` under the amplitude parametrization.
    pub x: f64,
    pub d: f64,
    pub period: Option<f64>,
    /// Direction of travel in y when reinterpreted as time-periodic.
    pub direction: Option<i8>,
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct BifurcationBranch {
    pub branch_type: BranchType,
    pub samples: Vec<BranchSample>,
    /// Set when the continuation stopped early, with the reason.
    pub truncated: Option<String>,
}

const TOL_BRANCH: f64 = 1e-11;
const MAX_NEWTON: usize = 60;

fn trivial_sample(model: &dyn ReducedModel) -> BranchSample {
    BranchSample {
        s: 0.0,
        eps: model.eps_crit(),
        x: 0.0,
        d: model.d_bar(),
        period: None,
        direction: None,
        residual: None,
    }
}

/// Scalar Newton (chord slope `Re lambda'`) on the desingularized equation
/// `Re[lambda(eps) - f(s, eps, d)/s] = 0` at fixed `(s, d)`.
fn solve_eps(
    model: &dyn ReducedModel,
    s: f64,
    d: f64,
    eps_seed: f64,
    tol_transversal: f64,
) -> Result<f64> {
    let slope = model.lambda_prime().re;
    if slope.abs() < tol_transversal {
        return Err(Error::Hypothesis(format!(
            "transversality too weak for branch continuation: Re lambda' = {slope:.3e}"
        )));
    }
    let mut eps = eps_seed;
    for _ in 0..MAX_NEWTON {
        let g = model.lambda(eps)?.re - model.f(s, eps, d)?.re / s;
        let step = g / slope;
        eps -= step;
        if step.abs() <= TOL_BRANCH {
            return Ok(eps);
        }
    }
    Err(Error::NewtonDiverged(format!(
        "branch continuation stalled at s = {s}"
    )))
}

/// Pitchfork branch at fixed frame speed `d_bar`: solves
/// `lambda(eps) s = f(s, eps, d_bar)` for `eps(s)` at each amplitude.
pub fn branch_o2(
    model: &dyn ReducedModel,
    s_grid: &[f64],
    tol_transversal: f64,
) -> Result<BifurcationBranch> {
    let mut branch = BifurcationBranch {
        branch_type: BranchType::O2Pitchfork,
        samples: vec![trivial_sample(model)],
        truncated: None,
    };
    let d = model.d_bar();
    let mut eps_seed = model.eps_crit();
    for &s in s_grid {
        if s == 0.0 {
            continue;
        }
        match solve_eps(model, s, d, eps_seed, tol_transversal) {
            Ok(eps) => {
                eps_seed = eps;
                branch.samples.push(BranchSample {
                    s,
                    eps,
                    x: s,
                    d,
                    period: None,
                    direction: None,
                    residual: None,
                });
            }
            Err(Error::Hypothesis(m)) => return Err(Error::Hypothesis(m)),
            Err(e) => {
                branch.truncated = Some(format!("{e}"));
                break;
            }
        }
    }
    Ok(branch)
}

/// Two-parameter branch in the translation-only case: `eps(s)` from the real
/// part and the frame speed from the imaginary part,
/// `d(s) = (Im lambda(eps) - Im f/s) / k*`, iterated to joint consistency.
pub fn branch_so2(
    model: &dyn ReducedModel,
    s_grid: &[f64],
    tol_transversal: f64,
) -> Result<BifurcationBranch> {
    let mut branch = BifurcationBranch {
        branch_type: BranchType::SO2Traveling,
        samples: vec![trivial_sample(model)],
        truncated: None,
    };
    let kf = model.k_star() as f64;
    let mut eps_seed = model.eps_crit();
    let mut d_seed = model.d_bar();
    'outer: for &s in s_grid {
        if s == 0.0 {
            continue;
        }
        let mut eps = eps_seed;
        let mut d = d_seed;
        let mut done = false;
        for _ in 0..40 {
            eps = match solve_eps(model, s, d, eps, tol_transversal) {
                Ok(e) => e,
                Err(Error::Hypothesis(m)) => return Err(Error::Hypothesis(m)),
                Err(e) => {
                    branch.truncated = Some(format!("{e}"));
                    break 'outer;
                }
            };
            let d_new = (model.lambda(eps)?.im - model.f(s, eps, d)?.im / s) / kf;
            let delta = (d_new - d).abs();
            d = d_new;
            if delta <= TOL_BRANCH {
                done = true;
                break;
            }
        }
        if !done {
            branch.truncated = Some(format!("(eps, d) coupling did not settle at s = {s}"));
            break;
        }
        eps_seed = eps;
        d_seed = d;
        branch.samples.push(BranchSample {
            s,
            eps,
            x: s,
            d,
            period: None,
            direction: None,
            residual: None,
        });
    }
    Ok(branch)
}

/// Reinterprets a traveling branch with nonzero frame speed as a family of
/// time-periodic solutions in the steady frame: period `2 pi / |d(s)|` plus
/// a direction flag.
pub fn hopf_reinterpret(branch: &BifurcationBranch, d_bar: f64) -> Result<BifurcationBranch> {
    if d_bar == 0.0 {
        return Err(Error::Bifurcation(
            "frame speed d_bar is zero: the steady branch has no time-periodic reading".into(),
        ));
    }
    let mut out = branch.clone();
    out.branch_type = BranchType::Hopf;
    for sm in out.samples.iter_mut() {
        if sm.d == 0.0 {
            return Err(Error::Bifurcation(format!(
                "period undefined at s = {} (d = 0)",
                sm.s
            )));
        }
        sm.period = Some(2.0 * std::f64::consts::PI / sm.d.abs());
        sm.direction = Some(if sm.d > 0.0 { 1 } else { -1 });
    }
    Ok(out)
}

/// Rebuilds the full mode stack of a branch sample: the critical pair at
/// amplitude `s` plus all eliminated components.
pub fn synthesize_solution(
    red: &ReducedEquation,
    s: f64,
    eps: f64,
    d: f64,
) -> Result<ModeStack> {
    let prep = red.prepare(eps)?;
    let mut u_proj = DiscreteField::zeros(red.pipeline.grid.clone(), red.pipeline.model.n);
    for (dst, vi) in u_proj.data.iter_mut().zip(&prep.v) {
        *dst = s * vi;
    }
    let closure = red.close_complement(&prep, &u_proj, d)?;
    Ok(closure.full)
}

/// Independent full-2D residual of a candidate solution: plain centered
/// differences on the synthesized strip samples of the nonlinear steady
/// equation, with the profile's own discrete residual subtracted as a
/// baseline. No mode-wise shortcuts are taken for the differential part.
pub fn full_residual(
    red: &ReducedEquation,
    stack: &ModeStack,
    eps: f64,
    d: f64,
) -> Result<f64> {
    let pl = &red.pipeline;
    let n = pl.model.n;
    let prep = red.prepare(eps)?;
    let ny = (2 * (2 * stack.k_max + 2)) as usize;
    let u = synthesize(stack, ny);
    let np = pl.grid.n_points;
    let hx = pl.grid.h;
    let hy = 2.0 * std::f64::consts::PI / ny as f64;
    // pointwise fluxes of the total state and of the background profile
    let mut flux1 = vec![0.0f64; np * ny * n];
    let mut flux2 = vec![0.0f64; np * ny * n];
    let mut total = vec![0.0f64; np * ny * n];
    let mut bflux1 = vec![0.0f64; np * n];
    for ix in 0..np {
        let ub: Vec<f64> = (0..n).map(|comp| prep.profile.ubar[ix * n + comp]).collect();
        let f1b = (pl.model.f1)(eps, &ub);
        for comp in 0..n {
            bflux1[ix * n + comp] = f1b[comp] - prep.profile.c * ub[comp];
        }
        for iy in 0..ny {
            let tv: Vec<f64> = (0..n).map(|comp| ub[comp] + u.get(ix, iy, comp)).collect();
            let f1v = (pl.model.f1)(eps, &tv);
            let f2v = (pl.model.f2)(eps, &tv);
            for comp in 0..n {
                let idx = (ix * ny + iy) * n + comp;
                total[idx] = tv[comp];
                flux1[idx] = f1v[comp] - prep.profile.c * tv[comp];
                flux2[idx] = f2v[comp] - d * tv[comp];
            }
        }
    }
    // localized-potential term at the critical modes, synthesized pointwise
    let bump_term = |ix: usize, iy: usize, comp: usize| -> f64 {
        match &pl.bump {
            None => 0.0,
            Some(b) => {
                let x = pl.grid.nodes[ix];
                let vb = b.value(eps, x);
                let y = 2.0 * std::f64::consts::PI * iy as f64 / ny as f64;
                let phase = c(0.0, pl.k_star as f64 * y).exp();
                let w = stack.mode(pl.k_star).get(ix, comp);
                2.0 * (vb * w * phase).re
            }
        }
    };
    let at = |f: &[f64], ix: usize, iy: usize, comp: usize| f[(ix * ny + iy) * n + comp];
    let mut acc = 0.0;
    for ix in 2..np - 2 {
        for iy in 0..ny {
            let iyp = (iy + 1) % ny;
            let iym = (iy + ny - 1) % ny;
            for comp in 0..n {
                let dxf1 = (at(&flux1, ix + 1, iy, comp) - at(&flux1, ix - 1, iy, comp))
                    / (2.0 * hx);
                let dyf2 = (at(&flux2, ix, iyp, comp) - at(&flux2, ix, iym, comp)) / (2.0 * hy);
                let dxx = (at(&total, ix + 1, iy, comp) - 2.0 * at(&total, ix, iy, comp)
                    + at(&total, ix - 1, iy, comp))
                    / (hx * hx);
                let dyy = (at(&total, ix, iyp, comp) - 2.0 * at(&total, ix, iy, comp)
                    + at(&total, ix, iym, comp))
                    / (hy * hy);
                // baseline: the profile's own discrete steady residual
                let b_dx = (bflux1[(ix + 1) * n + comp] - bflux1[(ix - 1) * n + comp])
                    / (2.0 * hx);
                let b_dxx = (prep.profile.ubar[(ix + 1) * n + comp]
                    - 2.0 * prep.profile.ubar[ix * n + comp]
                    + prep.profile.ubar[(ix - 1) * n + comp])
                    / (hx * hx);
                let r = dxf1 + dyf2 - dxx - dyy + bump_term(ix, iy, comp) - (b_dx - b_dxx);
                acc += r * r;
            }
        }
    }
    Ok((acc * hx * hy).sqrt())
}

/// Residual certification of one branch sample: the coarse residual, the
/// residual of the re-solved sample on a refined discretization (`h/2`,
/// doubled mode truncation), their ratio, and the y-translation defect.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct CertificationReport {
    pub residual_coarse: f64,
    pub residual_fine: f64,
    pub factor: f64,
    pub translation_defect: f64,
}

pub fn synthesize_and_certify(
    red: &ReducedEquation,
    red_fine: &ReducedEquation,
    s: f64,
    eps: f64,
    d: f64,
) -> Result<CertificationReport> {
    let stack = synthesize_solution(red, s, eps, d)?;
    let r_c = full_residual(red, &stack, eps, d)?;
    let r_t = full_residual(red, &stack.translate(0.6366197723675814), eps, d)?;
    let stack_f = synthesize_solution(red_fine, s, eps, d)?;
    let r_f = full_residual(red_fine, &stack_f, eps, d)?;
    let factor = if r_f > 0.0 { r_c / r_f } else { f64::INFINITY };
    if factor < 3.0 {
        return Err(Error::Bifurcation(format!(
            "refinement does not certify the branch sample at s = {s}: factor {factor:.2}"
        )));
    }
    Ok(CertificationReport {
        residual_coarse: r_c,
        residual_fine: r_f,
        factor,
        translation_defect: (r_t - r_c).abs(),
    })
}

pub fn write_branch_csv(branch: &BifurcationBranch, mut out: impl IoWrite) -> Result<()> {
    writeln!(out, "s,eps,x,d,period,residual")?;
    for sm in &branch.samples {
        let period = sm
            .period
            .map(|p| format!("{p:.17e}"))
            .unwrap_or_default();
        let residual = sm
            .residual
            .map(|r| format!("{r:.17e}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
            sm.s, sm.eps, sm.x, sm.d, period, residual
        )?;
    }
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// JSON run manifest describing the configuration that produced a branch.
pub fn run_manifest(red: &ReducedEquation, branch: &BifurcationBranch) -> serde_json::Value {
    let pl = &red.pipeline;
    let config = serde_json::json!({
        "model_dim": pl.model.n,
        "grid": { "L": pl.grid.l, "N": pl.grid.n_points },
        "k_star": pl.k_star,
        "K_max": pl.k_max,
        "symmetry_mode": pl.symmetry_mode,
        "contour": { "radius": pl.contour_radius, "Q": pl.q },
        "tolerances": {
            "tol_fix": pl.tol_fix,
            "tol_eig": pl.tol_eig,
            "tol_red": pl.tol_red,
        },
        "eps_crit": red.crossing.eps_crit,
        "d_bar": red.d_bar,
        "branch_type": branch.branch_type,
        "n_samples": branch.samples.len(),
    });
    let hash = fnv1a(config.to_string().as_bytes());
    serde_json::json!({ "config": config, "config_hash": format!("{hash:016x}") })
}

/// Brute-force oracle for the reflection-symmetric branch: dense Newton on
/// the system truncated to the modes {0, ±k*, ±2k*} of a scalar quadratic
/// flux, continued to a prescribed L2 amplitude of the critical mode.
/// Returns `(eps, u1)` at the solution.
pub fn galerkin_o2_solve(
    pl: &Pipeline,
    crossing: &CrossingReport,
    amplitude_l2: f64,
    seed_dir: &DiscreteField,
) -> Result<(f64, DiscreteField)> {
    assert_eq!(pl.model.n, 1, "the Galerkin oracle is scalar-only");
    let np = pl.grid.n_points;
    let grid = pl.grid.clone();
    let eps0 = crossing.eps_crit;
    let profile = pl.profile(eps0)?;
    let zero_op = crate::zero_mode::assemble_bordered(&profile, &pl.model)?;
    let coeffs = crate::operator::Coefficients::from_profile(&profile, &pl.model);
    type Ops = (f64, crate::operator::ModeOperator, crate::operator::ModeOperator);
    let ops_cache: RefCell<Option<Ops>> = RefCell::new(None);
    let dim = 3 * np + 1;
    let field_of = |slice: &[f64]| {
        let mut f = DiscreteField::zeros(grid.clone(), 1);
        for (dst, &x) in f.data.iter_mut().zip(slice) {
            *dst = c(x, 0.0);
        }
        f
    };
    let residual = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (u0s, rest) = z.as_slice().split_at(np);
        let (u1s, rest2) = rest.split_at(np);
        let (u2s, eps_s) = rest2.split_at(np);
        let eps = eps_s[0];
        {
            let mut cache = ops_cache.borrow_mut();
            let stale = match &*cache {
                Some((e, _, _)) => *e != eps,
                None => true,
            };
            if stale {
                let l1 = crate::operator::ModeOperator::assemble(
                    &coeffs,
                    pl.k_star,
                    0.0,
                    eps,
                    pl.bump.as_ref(),
                );
                let l2 = crate::operator::ModeOperator::assemble(
                    &coeffs,
                    2 * pl.k_star,
                    0.0,
                    eps,
                    pl.bump.as_ref(),
                );
                *cache = Some((eps, l1, l2));
            }
        }
        let cache = ops_cache.borrow();
        let (_, l1, l2) = cache.as_ref().unwrap();
        let _u0 = field_of(u0s);
        let u1 = field_of(u1s);
        let u2 = field_of(u2s);
        let mut g = DVector::zeros(dim);
        // mode-0 block through the preconditioned integrated solve:
        // u0 - T[R1_0] with R1_0 = u0^2/2 + u1^2 + u2^2
        let r1_0 = DiscreteField::from_fn(grid.clone(), 1, |x, _| {
            let i = ((x + grid.l) / grid.h).round() as usize;
            c(
                0.5 * u0s[i] * u0s[i] + u1s[i] * u1s[i] + u2s[i] * u2s[i],
                0.0,
            )
        });
        let (t0, _) = zero_op.solve_linear(&r1_0)?;
        for i in 0..np {
            g[i] = u0s[i] - t0.data[i].re;
        }
        // mode-k* block: L1 u1 + d_x(R1_1), R1_1 = u0 u1 + u1 u2
        let r1_1 = DiscreteField::from_fn(grid.clone(), 1, |x, _| {
            let i = ((x + grid.l) / grid.h).round() as usize;
            c(u0s[i] * u1s[i] + u1s[i] * u2s[i], 0.0)
        });
        let n1 = r1_1.derivative();
        let lu1 = l1.apply(&u1.data);
        for i in 0..np {
            g[np + i] = if i == 0 || i == np - 1 {
                u1s[i]
            } else {
                (lu1[i] + n1.data[i]).re
            };
        }
        // mode-2k* block: L2 u2 + d_x(R1_2), R1_2 = u1^2/2 + u0 u2
        let r1_2 = DiscreteField::from_fn(grid.clone(), 1, |x, _| {
            let i = ((x + grid.l) / grid.h).round() as usize;
            c(0.5 * u1s[i] * u1s[i] + u0s[i] * u2s[i], 0.0)
        });
        let n2 = r1_2.derivative();
        let lu2 = l2.apply(&u2.data);
        for i in 0..np {
            g[2 * np + i] = if i == 0 || i == np - 1 {
                u2s[i]
            } else {
                (lu2[i] + n2.data[i]).re
            };
        }
        // amplitude constraint in L2
        g[3 * np] = u1.norm_l2().powi(2) - amplitude_l2 * amplitude_l2;
        Ok(g)
    };
    // seed along the critical direction
    let mut z = DVector::zeros(dim);
    let seed_norm = seed_dir.norm_l2();
    for i in 0..np {
        z[np + i] = amplitude_l2 * seed_dir.data[i].re / seed_norm;
    }
    z[3 * np] = eps0;
    for _ in 0..40 {
        let g = residual(&z)?;
        let gn = g.amax();
        if gn <= 1e-11 {
            let (_, rest) = z.as_slice().split_at(np);
            let (u1s, _) = rest.split_at(np);
            return Ok((z[3 * np], field_of(u1s)));
        }
        // forward-difference Jacobian
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let delta = 1e-7 * (1.0 + z[j].abs());
            let mut zp = z.clone();
            zp[j] += delta;
            let gp = residual(&zp)?;
            for i in 0..dim {
                jac[(i, j)] = (gp[i] - g[i]) / delta;
            }
        }
        let lu = jac.lu();
        let step = lu
            .solve(&g)
            .ok_or_else(|| Error::NewtonDiverged("singular Galerkin Jacobian".into()))?;
        z -= step;
    }
    Err(Error::NewtonDiverged(
        "Galerkin oracle did not converge".into(),
    ))
}
