//! Lyapunov–Schmidt reduction at the critical transverse mode: spectral
//! splitting of the ±k* amplitudes, the joint complement fixed point
//! (zero mode, high-mode tail, and the mode-k* spectral complement), the
//! reduced scalar equation, and its symmetry-based realness certification.

use crate::error::{Error, Result};
use crate::grid::{DiscreteField, Grid1D};
use crate::linalg::c;
use crate::model::{compute_speed, solve_profile, FluxModel, ShockProfile};
use crate::operator::{BumpPotential, Coefficients, ModeOperator};
use crate::spectral::{
    extract_eigenpair, extract_left_eigenvector, inner, track_crossing, Contour, CrossingReport,
    SpectralProjector,
};
use crate::strip::{nonlinearity_from_remainders, remainder_modes, ModeStack};
use crate::zero_mode::{assemble_bordered, IntegratedOperator};
use crate::C64;
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::io::Write as IoWrite;
use std::sync::{Arc, Mutex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SymmetryMode {
    O2,
    SO2,
}

/// Model, grid, and tolerance bundle shared by the reduction and bifurcation
/// stages.
#[derive(Clone)]
pub struct Pipeline {
    pub model: FluxModel,
    pub grid: Arc<Grid1D>,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub k_star: i64,
    pub k_max: i64,
    pub bump: Option<BumpPotential>,
    pub symmetry_mode: SymmetryMode,
    /// Reflection state matrix; identity when absent.
    pub r_matrix: Option<DMatrix<f64>>,
    /// Radius for eigenpair-extraction contours.
    pub contour_radius: f64,
    pub q: usize,
    pub tol_fix: f64,
    pub tol_eig: f64,
    pub tol_red: f64,
    pub max_picard: usize,
}

impl Pipeline {
    /// Scalar model with a reflection-symmetric crossing: no transverse flux,
    /// real localized potential switched on at the ±k* modes.
    pub fn synthetic_o2(grid: Arc<Grid1D>, k_star: i64, k_max: i64) -> Pipeline {
        Pipeline {
            model: FluxModel::burgers(0.0, 0.0),
            grid,
            u_minus: vec![1.0],
            u_plus: vec![-1.0],
            k_star,
            k_max,
            bump: Some(BumpPotential {
                k_star,
                eps0: 0.0,
                amp: -2.5,
                x0: 0.0,
                amp_im: 0.0,
            }),
            symmetry_mode: SymmetryMode::O2,
            r_matrix: None,
            contour_radius: 0.12,
            q: 32,
            tol_fix: 1e-11,
            tol_eig: 1e-7,
            tol_red: 1e-6,
            max_picard: 80,
        }
    }

    /// Scalar model with translation symmetry only: transverse flux and a
    /// complex potential strength make the crossing eigenvalue genuinely
    /// complex (nonzero frame speed d_bar).
    pub fn synthetic_so2(grid: Arc<Grid1D>, k_star: i64, k_max: i64) -> Pipeline {
        Pipeline {
            model: FluxModel::burgers(0.4, 0.3),
            grid,
            u_minus: vec![1.0],
            u_plus: vec![-1.0],
            k_star,
            k_max,
            bump: Some(BumpPotential {
                k_star,
                eps0: 0.0,
                amp: -2.5,
                x0: 0.0,
                amp_im: 0.2,
            }),
            symmetry_mode: SymmetryMode::SO2,
            r_matrix: None,
            contour_radius: 0.12,
            q: 32,
            tol_fix: 1e-11,
            tol_eig: 1e-7,
            tol_red: 1e-6,
            max_picard: 80,
        }
    }

    pub fn profile(&self, eps: f64) -> Result<ShockProfile> {
        let (speed, _) = compute_speed(&self.model, eps, &self.u_minus, &self.u_plus)?;
        solve_profile(
            &self.model,
            eps,
            &self.u_minus,
            &self.u_plus,
            speed,
            self.grid.clone(),
        )
    }

    /// Assembles `L_k^d` at parameter `eps`, with the synthetic potential
    /// attached at |k| = k*.
    pub fn mode_operator(&self, eps: f64, k: i64, d: f64) -> Result<ModeOperator> {
        let profile = self.profile(eps)?;
        let coeffs = Coefficients::from_profile(&profile, &self.model);
        Ok(ModeOperator::assemble(&coeffs, k, d, eps, self.bump.as_ref()))
    }

    /// Tracks the critical eigenvalue of `L_{k*}^0` over a parameter grid.
    pub fn track(
        &self,
        eps_grid: &[f64],
        center0: C64,
        tol_eps: f64,
        tol_transversal: f64,
    ) -> Result<CrossingReport> {
        track_crossing(
            |eps| self.mode_operator(eps, self.k_star, 0.0),
            self.k_star,
            eps_grid,
            center0,
            self.contour_radius,
            self.q,
            tol_eps,
            tol_transversal,
        )
    }

    /// Pairs the pipeline with a crossing report into the reduced equation.
    pub fn reduce(self, crossing: CrossingReport) -> ReducedEquation {
        // Under the reflection symmetry the crossing eigenvalue is real, so a
        // frame speed below the eigenvalue tolerance is exactly zero.
        let d_bar = if self.symmetry_mode == SymmetryMode::O2
            && crossing.d_bar.abs() <= self.tol_eig
        {
            0.0
        } else {
            crossing.d_bar
        };
        ReducedEquation {
            d_bar,
            symmetry_mode: self.symmetry_mode,
            pipeline: self,
            crossing,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

/// Everything frozen at one parameter value: the profile, the frame-d_bar
/// mode operators, the critical eigentriple of `L_{k*}^{d_bar}`, the
/// projection contour, and the bordered zero-mode solver.
pub struct PreparedEps {
    pub eps: f64,
    pub profile: ShockProfile,
    pub zero_op: IntegratedOperator,
    /// `L_k^{d_bar}` for k = 1..=k_max at index k-1.
    pub ops: Vec<Arc<ModeOperator>>,
    /// Eigenvalue of `L_{k*}^0`.
    pub lambda: C64,
    /// Same eigenvalue in the d_bar frame: `lambda - i k* d_bar`.
    pub lambda_shifted: C64,
    pub v: Vec<C64>,
    pub h: Vec<C64>,
    /// Encloses the origin and `lambda_shifted` only; shared by the
    /// projector and the partial inverse.
    pub proj_contour: Contour,
}

impl PreparedEps {
    pub fn op(&self, k: i64) -> &ModeOperator {
        &self.ops[(k - 1) as usize]
    }
}

/// Result of closing all non-critical components around a prescribed
/// critical-pair amplitude.
pub struct ComplementClosure {
    /// Full stack: zero mode, critical pair plus its spectral complement,
    /// and the tail.
    pub full: ModeStack,
    /// Mode projections of the forcing at the closed state.
    pub nl: ModeStack,
    /// First flux remainder stack (mode 0 drives the integrated solve).
    pub r1: ModeStack,
    /// Mode-k* spectral complement piece.
    pub comp: DiscreteField,
    pub theta: f64,
    pub iters: usize,
}

/// The scalar bifurcation equation `lambda(eps) x - i k* d x = f(x, eps, d)`
/// (our operator convention), with `f` evaluated through the full
/// elimination pipeline.
pub struct ReducedEquation {
    pub pipeline: Pipeline,
    pub crossing: CrossingReport,
    pub d_bar: f64,
    pub symmetry_mode: SymmetryMode,
    cache: Mutex<HashMap<u64, Arc<PreparedEps>>>,
}

impl ReducedEquation {
    pub fn k_star(&self) -> i64 {
        self.pipeline.k_star
    }

    /// Cubic Lagrange interpolation of the tracked eigenvalue, used only to
    /// center extraction contours.
    pub fn lambda_interp(&self, eps: f64) -> C64 {
        let s = &self.crossing.samples;
        if s.is_empty() {
            return self.crossing.lambda_crit;
        }
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| {
            (s[a].eps - eps)
                .abs()
                .partial_cmp(&(s[b].eps - eps).abs())
                .unwrap()
        });
        let take = idx.len().min(4);
        let pts = &idx[..take];
        let mut acc = c(0.0, 0.0);
        for (i, &pi) in pts.iter().enumerate() {
            let mut w = 1.0;
            for (j, &pj) in pts.iter().enumerate() {
                if i != j {
                    w *= (eps - s[pj].eps) / (s[pi].eps - s[pj].eps);
                }
            }
            acc += w * c(s[pi].re, s[pi].im);
        }
        acc
    }

    /// Builds (and caches) the frozen state at `eps`.
    pub fn prepare(&self, eps: f64) -> Result<Arc<PreparedEps>> {
        if let Some(p) = self.cache.lock().unwrap().get(&eps.to_bits()) {
            return Ok(p.clone());
        }
        let pl = &self.pipeline;
        let profile = pl.profile(eps)?;
        let coeffs = Coefficients::from_profile(&profile, &pl.model);
        let ops: Vec<Arc<ModeOperator>> = (1..=pl.k_max)
            .map(|k| {
                Arc::new(ModeOperator::assemble(
                    &coeffs,
                    k,
                    self.d_bar,
                    eps,
                    pl.bump.as_ref(),
                ))
            })
            .collect();
        let zero_op = assemble_bordered(&profile, &pl.model)?;
        let op_star = ops[(pl.k_star - 1) as usize].clone();
        let center = self.lambda_interp(eps) - c(0.0, pl.k_star as f64 * self.d_bar);
        let contour = Contour::new(center, pl.contour_radius, pl.q)?;
        let pair = extract_eigenpair(op_star.as_ref(), &contour, pl.tol_eig)?;
        if pair.multiplicity != 1 {
            return Err(Error::Hypothesis(format!(
                "critical eigenvalue multiplicity {} at eps {eps}",
                pair.multiplicity
            )));
        }
        let mut v = pair.v;
        // phase continuity against the crossing eigenvector
        if self.crossing.v_crit.len() == v.len() {
            let align = inner(&v, &self.crossing.v_crit);
            if align.norm() > 1e-12 {
                let ph = align.conj() / align.norm();
                for z in v.iter_mut() {
                    *z *= ph;
                }
            }
        }
        // physical normalization: unit L2 norm makes the amplitude parameter
        // comparable across grid resolutions
        {
            let mut vf = DiscreteField::zeros(pl.grid.clone(), pl.model.n);
            vf.data = v.clone();
            let nv = vf.norm_l2();
            if nv > 0.0 {
                for z in v.iter_mut() {
                    *z /= nv;
                }
            }
        }
        let h = extract_left_eigenvector(op_star.as_ref(), &contour, &v)?;
        let lam_shifted = pair.lambda;
        // the lambda^{-1}-weighted contour must enclose the origin together
        // with the critical eigenvalue, and nothing else
        let pc_center = 0.5 * lam_shifted;
        let pc_radius = pl.contour_radius + 0.6 * lam_shifted.norm();
        let proj_contour = Contour::new(pc_center, pc_radius, pl.q)?;
        let prep = Arc::new(PreparedEps {
            eps,
            profile,
            zero_op,
            ops,
            lambda: lam_shifted + c(0.0, pl.k_star as f64 * self.d_bar),
            lambda_shifted: lam_shifted,
            v,
            h,
            proj_contour,
        });
        self.cache
            .lock()
            .unwrap()
            .insert(eps.to_bits(), prep.clone());
        Ok(prep)
    }

    /// Exact discrete eigenvalue of `L_{k*}^0` at `eps`.
    pub fn lambda(&self, eps: f64) -> Result<C64> {
        Ok(self.prepare(eps)?.lambda)
    }

    /// Closes the zero mode, the tail, and the mode-k* spectral complement
    /// around the prescribed critical-pair content `u_proj` (the mode-k*
    /// field whose conjugate rides at -k*), by a joint Picard iteration.
    pub fn close_complement(
        &self,
        prep: &PreparedEps,
        u_proj: &DiscreteField,
        d: f64,
    ) -> Result<ComplementClosure> {
        let pl = &self.pipeline;
        let n = pl.model.n;
        let grid = pl.grid.clone();
        let k_star = pl.k_star;
        let dim = grid.n_points * n;
        assert_eq!(u_proj.data.len(), dim);
        let projector =
            SpectralProjector::new(prep.op(k_star), prep.proj_contour.clone());
        // frame-change term moved to the right-hand side:
        // L_k^d = L_k^{d_bar} + ik(d_bar - d)
        let shift = |k: i64| c(0.0, (d - self.d_bar) * k as f64);
        let mut u0 = DiscreteField::zeros(grid.clone(), n);
        let mut comp = DiscreteField::zeros(grid.clone(), n);
        let mut tail = ModeStack::zeros(grid.clone(), n, pl.k_max);
        let mut prev_delta: Option<f64> = None;
        let mut theta: f64 = 0.0;
        let assemble_full = |u0: &DiscreteField, comp: &DiscreteField, tail: &ModeStack| {
            let mut full = tail.clone();
            *full.mode_mut(0) = u0.clone();
            let star = u_proj.add(comp);
            *full.mode_mut(-k_star) = star.conj();
            *full.mode_mut(k_star) = star;
            full
        };
        for it in 1..=pl.max_picard {
            let full = assemble_full(&u0, &comp, &tail);
            let (r1, r2) = remainder_modes(&full, &prep.profile, &pl.model, prep.eps)?;
            let nl = nonlinearity_from_remainders(&r1, &r2);
            // zero mode through the integrated bordered solve
            let (mut u0_new, _) = prep.zero_op.solve_linear(r1.mode(0))?;
            for z in u0_new.data.iter_mut() {
                *z = c(z.re, 0.0);
            }
            // tail modes
            let mut tail_new = ModeStack::zeros(grid.clone(), n, pl.k_max);
            for k in 1..=pl.k_max {
                if k == 0 || k == k_star {
                    continue;
                }
                let rhs = nl.mode(k).add(&tail.mode(k).scale(shift(k)));
                let sol = prep.op(k).resolvent_solve(c(0.0, 0.0), &rhs.data)?;
                let wk = tail_new.mode_mut(k);
                for (dst, s) in wk.data.iter_mut().zip(&sol) {
                    *dst = -s; // L^{-1} = -(0 - L)^{-1}
                }
            }
            tail_new.symmetrize_reality();
            // mode-k* spectral complement via the partial inverse
            let rhs = nl.mode(k_star).add(&comp.scale(shift(k_star)));
            let mut comp_new_data = projector.partial_inverse(&rhs.data)?;
            // re-enforce the range constraint against drift
            let pc = inner(&comp_new_data, &prep.h);
            for (z, vi) in comp_new_data.iter_mut().zip(&prep.v) {
                *z -= pc * vi;
            }
            let mut comp_new = DiscreteField::zeros(grid.clone(), n);
            comp_new.data = comp_new_data;
            let delta = u0_new.sub(&u0).norm_l2()
                + tail_new.sub(&tail).m_norm()
                + comp_new.sub(&comp).norm_l2();
            u0 = u0_new;
            tail = tail_new;
            comp = comp_new;
            if let Some(pd) = prev_delta {
                if pd > 0.0 {
                    let ratio = delta / pd;
                    theta = theta.max(ratio);
                    if ratio >= 1.0 {
                        return Err(Error::ContractionFailure {
                            ratio,
                            context: "complement closure: amplitude outside the contraction radius"
                                .into(),
                        });
                    }
                }
            }
            if delta <= pl.tol_fix {
                let full = assemble_full(&u0, &comp, &tail);
                let (r1, r2) = remainder_modes(&full, &prep.profile, &pl.model, prep.eps)?;
                let nl = nonlinearity_from_remainders(&r1, &r2);
                return Ok(ComplementClosure {
                    full,
                    nl,
                    r1,
                    comp,
                    theta,
                    iters: it,
                });
            }
            prev_delta = Some(delta);
        }
        Err(Error::ContractionFailure {
            ratio: theta.max(1.0),
            context: format!(
                "complement closure did not converge in {} sweeps",
                pl.max_picard
            ),
        })
    }

    /// The complement fixed point alone: everything outside the critical
    /// spectral directions, plus the measured quadratic constant
    /// `C = ||v||_M / ||u_proj||^2`.
    pub fn split_complement(
        &self,
        eps: f64,
        u_proj: &DiscreteField,
        d: f64,
    ) -> Result<(ModeStack, f64)> {
        let prep = self.prepare(eps)?;
        let closure = self.close_complement(&prep, u_proj, d)?;
        let mut v = closure.full.clone();
        let star = u_proj.clone();
        *v.mode_mut(self.pipeline.k_star) = closure.full.mode(self.pipeline.k_star).sub(&star);
        *v.mode_mut(-self.pipeline.k_star) =
            closure.full.mode(-self.pipeline.k_star).sub(&star.conj());
        let denom = u_proj.norm_l2().powi(2);
        let cq = if denom > 0.0 { v.m_norm() / denom } else { 0.0 };
        Ok((v, cq))
    }

    /// Evaluates the reduced right-hand side `f(x, eps, d) = h(N_{k*})` at
    /// the fully eliminated state with `u_{±k*} = x v_{±k*}`. Returns
    /// `(f_plus, conj-check value from the -k* component)`.
    pub fn f_pair(&self, x: f64, eps: f64, d: f64) -> Result<(C64, C64)> {
        let prep = self.prepare(eps)?;
        self.f_pair_gauged(&prep, x, d, 0.0)
    }

    /// Same with the eigenpair rotated by `e^{i theta}` (gauge probe).
    pub fn f_pair_gauged(
        &self,
        prep: &PreparedEps,
        x: f64,
        d: f64,
        theta_gauge: f64,
    ) -> Result<(C64, C64)> {
        let phase = c(0.0, theta_gauge).exp();
        let mut u_proj = DiscreteField::zeros(self.pipeline.grid.clone(), self.pipeline.model.n);
        for (dst, vi) in u_proj.data.iter_mut().zip(&prep.v) {
            *dst = x * vi * phase;
        }
        let closure = self.close_complement(prep, &u_proj, d)?;
        let h_g: Vec<C64> = prep.h.iter().map(|z| z * phase).collect();
        let h_conj: Vec<C64> = h_g.iter().map(|z| z.conj()).collect();
        let f_plus = inner(&closure.nl.mode(self.pipeline.k_star).data, &h_g);
        let f_minus = inner(&closure.nl.mode(-self.pipeline.k_star).data, &h_conj);
        Ok((f_plus, f_minus))
    }

    /// The reduced right-hand side.
    pub fn f_reduced(&self, x: f64, eps: f64, d: f64) -> Result<C64> {
        Ok(self.f_pair(x, eps, d)?.0)
    }
}

/// One exported sample of the reduced equation.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ReducedSample {
    pub x: f64,
    pub eps: f64,
    pub d: f64,
    pub re_f: f64,
    pub im_f: f64,
}

pub fn write_samples_csv(samples: &[ReducedSample], mut out: impl IoWrite) -> Result<()> {
    writeln!(out, "x,eps,d,re_f,im_f")?;
    for s in samples {
        writeln!(
            out,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            s.x, s.eps, s.d, s.re_f, s.im_f
        )?;
    }
    Ok(())
}

/// Outcome of the O(2) realness certification.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RealnessReport {
    pub mode: SymmetryMode,
    pub downgraded: bool,
    pub max_im_lambda: f64,
    pub max_rel_im_f: f64,
    pub messages: Vec<String>,
}

/// Checks that the crossing eigenvalue and the reduced right-hand side are
/// real, as the reflection symmetry demands. Violations downgrade the run to
/// translation-only symmetry instead of failing.
pub fn certify_realness(
    red: &ReducedEquation,
    eps_samples: &[f64],
    x_samples: &[f64],
) -> Result<RealnessReport> {
    let pl = &red.pipeline;
    let n = pl.model.n;
    if let Some(r) = &pl.r_matrix {
        let defect = (r.transpose() * r - DMatrix::<f64>::identity(n, n)).abs().max();
        if defect > 1e-12 {
            return Err(Error::Config(format!(
                "reflection matrix is not orthogonal (defect {defect:.3e})"
            )));
        }
        // the profile must be reflection-invariant: R ubar = ubar
        let profile = pl.profile(red.crossing.eps_crit)?;
        let mut worst: f64 = 0.0;
        for i in 0..pl.grid.n_points {
            for row in 0..n {
                let mut acc = 0.0;
                for col in 0..n {
                    acc += r[(row, col)] * profile.ubar[i * n + col];
                }
                worst = worst.max((acc - profile.ubar[i * n + row]).abs());
            }
        }
        if worst > 1e-10 {
            return Err(Error::Config(format!(
                "profile is not reflection-invariant (defect {worst:.3e})"
            )));
        }
    }
    let mut report = RealnessReport {
        mode: SymmetryMode::O2,
        downgraded: false,
        max_im_lambda: 0.0,
        max_rel_im_f: 0.0,
        messages: Vec::new(),
    };
    for &eps in eps_samples {
        let lam = red.lambda(eps)?;
        report.max_im_lambda = report.max_im_lambda.max(lam.im.abs());
    }
    if report.max_im_lambda > red.pipeline.tol_eig {
        report.downgraded = true;
        report.messages.push(format!(
            "crossing eigenvalue has imaginary part {:.3e}; downgrading to translation-only symmetry",
            report.max_im_lambda
        ));
    }
    for &x in x_samples {
        let f = red.f_reduced(x, red.crossing.eps_crit, red.d_bar)?;
        if f.norm() > 0.0 {
            report.max_rel_im_f = report.max_rel_im_f.max(f.im.abs() / f.norm());
        }
    }
    if report.max_rel_im_f > red.pipeline.tol_red {
        report.downgraded = true;
        report.messages.push(format!(
            "reduced right-hand side has relative imaginary part {:.3e}",
            report.max_rel_im_f
        ));
    }
    if report.downgraded {
        report.mode = SymmetryMode::SO2;
    }
    Ok(report)
}
