//! End-to-end acceptance gate: one test (and one printed pass/fail line) per
//! workbench guarantee. Run with `--nocapture` to see the table even when
//! everything passes.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::{Arc, OnceLock};
use std::time::Instant;
use stripbif_core::bifurcation::{
    branch_o2, branch_so2, galerkin_o2_solve, hopf_reinterpret, synthesize_and_certify,
    synthesize_solution,
};
use stripbif_core::grid::{DiscreteField, Grid1D};
use stripbif_core::linalg::{c, loglog_slope};
use stripbif_core::model::{solve_profile, FluxModel, ShockProfile};
use stripbif_core::operator::{measure_inverse_norm_decay, Coefficients, ModeOperator};
use stripbif_core::reduction::{certify_realness, Pipeline, ReducedEquation};
use stripbif_core::spectral::{
    dunford_partial_inverse, dunford_project, inner, norm, probe_vectors, rank_one_family,
    track_crossing, Contour, DenseOp, ResolventOp,
};
use stripbif_core::strip::{
    analyze, default_ny, synthesize, tail_fixed_point, ModeStack, TailContext,
};
use stripbif_core::C64;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn report(idx: usize, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("criterion {idx:2} [{tag}] {name} — {detail}");
    assert!(ok, "criterion {idx} ({name}) failed: {detail}");
}

fn burgers() -> FluxModel {
    FluxModel::burgers(0.0, 0.0)
}

fn burgers_profile(l: f64, np: usize) -> ShockProfile {
    let g = Grid1D::new(l, np).unwrap();
    solve_profile(&burgers(), 0.0, &[1.0], &[-1.0], 0.0, g).unwrap()
}

fn grid201() -> Arc<Grid1D> {
    Grid1D::new(15.0, 201).unwrap()
}

fn eps_grid() -> Vec<f64> {
    (0..=24).map(|i| i as f64 * 0.05).collect()
}

fn o2_reduced() -> &'static ReducedEquation {
    static CELL: OnceLock<ReducedEquation> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut pl = Pipeline::synthetic_o2(grid201(), 1, 4);
        pl.r_matrix = Some(DMatrix::identity(1, 1));
        let rep = pl.track(&eps_grid(), c(1.0, 0.0), 1e-10, 1e-3).unwrap();
        pl.reduce(rep)
    })
}

fn so2_reduced() -> &'static ReducedEquation {
    static CELL: OnceLock<ReducedEquation> = OnceLock::new();
    CELL.get_or_init(|| {
        let pl = Pipeline::synthetic_so2(grid201(), 1, 4);
        let rep = pl.track(&eps_grid(), c(1.16, 0.30), 1e-10, 1e-3).unwrap();
        pl.reduce(rep)
    })
}

/// Random band-limited stacks built from narrow Gaussians, so every mode has
/// meaningful curvature content.
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
                f.data[i] += a * (-(x - x0) * (x - x0) / (2.0 * s * s)).exp();
            }
        }
        *w.mode_mut(k) = f;
    }
    w.symmetrize_reality();
    w
}

#[test]
fn criterion_01_profile_exactness() {
    let t = Instant::now();
    let run = |np: usize| -> (f64, f64) {
        let p = burgers_profile(30.0, np);
        let sup = p
            .grid
            .nodes
            .iter()
            .zip(&p.ubar)
            .map(|(x, u)| (u + (x / 2.0).tanh()).abs())
            .fold(0.0f64, f64::max);
        (sup, p.collocation_residual(&burgers()))
    };
    let (e2, _) = run(201);
    let (e4, _) = run(401);
    let (e8, r8) = run(801);
    let elapsed = t.elapsed().as_secs_f64();
    let ok = r8 <= 1e-8 && e2 / e4 >= 3.5 && e4 / e8 >= 3.5 && elapsed < 5.0;
    report(
        1,
        "profile exactness",
        ok,
        &format!(
            "residual {r8:.2e}, sup errors {e2:.2e}/{e4:.2e}/{e8:.2e} \
             (factors {:.2}, {:.2}), {elapsed:.2}s",
            e2 / e4,
            e4 / e8
        ),
    );
}

#[test]
fn criterion_02_kernel_certificate() {
    let ratio = |np: usize| -> f64 {
        let p = burgers_profile(25.0, np);
        let coeffs = Coefficients::from_profile(&p, &burgers());
        let op = ModeOperator::assemble(&coeffs, 0, 0.0, 0.0, None);
        let ux: Vec<C64> = p.ubar_x.iter().map(|&v| c(v, 0.0)).collect();
        let mut lu = op.apply(&ux);
        op.zero_boundary(&mut lu);
        norm(&lu) / norm(&ux)
    };
    let r4 = ratio(401);
    let r8 = ratio(801);
    let ok = r8 <= 1e-4 && r4 / r8 >= 3.0;
    report(
        2,
        "kernel certificate",
        ok,
        &format!("ratio {r8:.3e} at N=801, refinement factor {:.2}", r4 / r8),
    );
}

#[test]
fn criterion_03_inverse_norm_decay() {
    let t = Instant::now();
    let p = burgers_profile(20.0, 6401);
    let coeffs = Coefficients::from_profile(&p, &burgers());
    let rep = measure_inverse_norm_decay(&coeffs, 0.0, 0.0, &[8, 16, 32, 64]).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let ok = (-2.2..=-1.8).contains(&rep.slope_inv)
        && (-1.2..=-0.8).contains(&rep.slope_dx_inv)
        && elapsed < 60.0;
    report(
        3,
        "inverse-norm decay",
        ok,
        &format!(
            "slopes {:.3} / {:.3}, {elapsed:.1}s",
            rep.slope_inv, rep.slope_dx_inv
        ),
    );
}

#[test]
fn criterion_04_dunford_engine() {
    let mut worst: f64 = 0.0;
    // dense manufactured operators, including a Jordan block at the origin
    for op in [
        DenseOp::diag(&[c(0.2, 0.1), c(-4.0, 0.0), c(3.0, 2.0)]),
        DenseOp::jordan(c(0.0, 0.0), 3),
    ] {
        let contour = Contour::new(c(0.0, 0.0), 1.0, 64).unwrap();
        let wide = Contour::new(c(0.0, 0.0), 1.6, 64).unwrap();
        for v in probe_vectors(op.dim(), 20, 11) {
            let nv = norm(&v);
            let p = dunford_project(&op, &contour, &v).unwrap();
            let pp = dunford_project(&op, &contour, &p).unwrap();
            let pw = dunford_project(&op, &wide, &v).unwrap();
            let li = dunford_partial_inverse(&op, &contour, &v).unwrap();
            let lli = op.apply(&li);
            let ilv = dunford_partial_inverse(&op, &contour, &op.apply(&v)).unwrap();
            for i in 0..op.dim() {
                let compl = v[i] - p[i];
                worst = worst.max((pp[i] - p[i]).norm() / nv);
                worst = worst.max((pw[i] - p[i]).norm() / nv);
                worst = worst.max((lli[i] - compl).norm() / nv);
                worst = worst.max((ilv[i] - compl).norm() / nv);
            }
        }
    }
    // the assembled shock operator, contour around its near-kernel eigenvalue
    let p = burgers_profile(15.0, 201);
    let coeffs = Coefficients::from_profile(&p, &burgers());
    let op = ModeOperator::assemble(&coeffs, 0, 0.0, 0.0, None);
    let contour = Contour::new(c(0.0, 0.0), 0.12, 64).unwrap();
    let wide = Contour::new(c(0.0, 0.0), 0.18, 64).unwrap();
    for v in probe_vectors(op.dim(), 20, 13) {
        let mut v = v;
        op.zero_boundary(&mut v);
        let nv = norm(&v);
        let pr = dunford_project(&op, &contour, &v).unwrap();
        let pp = dunford_project(&op, &contour, &pr).unwrap();
        let pw = dunford_project(&op, &wide, &v).unwrap();
        let li = dunford_partial_inverse(&op, &contour, &v).unwrap();
        let mut lli = op.apply(&li);
        op.zero_boundary(&mut lli);
        let mut lv = op.apply(&v);
        op.zero_boundary(&mut lv);
        let ilv = dunford_partial_inverse(&op, &contour, &lv).unwrap();
        for i in 0..op.dim() {
            let compl = v[i] - pr[i];
            worst = worst.max((pp[i] - pr[i]).norm() / nv);
            worst = worst.max((pw[i] - pr[i]).norm() / nv);
            worst = worst.max((lli[i] - compl).norm() / nv);
            worst = worst.max((ilv[i] - compl).norm() / nv);
        }
    }
    report(
        4,
        "projector and partial-inverse identities",
        worst <= 1e-8,
        &format!("worst defect {worst:.3e}"),
    );
}

#[test]
fn criterion_05_synthesis_isometry() {
    let g = Grid1D::new(8.0, 201).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_parseval: f64 = 0.0;
    let mut worst_round: f64 = 0.0;
    let mut sandwich_ok = true;
    for _ in 0..50 {
        let w = random_stack(g.clone(), 4, &mut rng);
        let u = synthesize(&w, default_ny(4));
        // Parseval at exact quadrature: ||u||^2 = 2 pi sum_k ||w_k||^2
        let lhs = u.norm_l2().powi(2);
        let rhs: f64 =
            TWO_PI * w.ks().map(|k| w.mode(k).norm_l2().powi(2)).sum::<f64>();
        worst_parseval = worst_parseval.max((lhs - rhs).abs() / rhs.max(1e-30));
        // norm sandwich against the weighted mode norm
        let m2 = w.m_norm().powi(2) * TWO_PI;
        let h2 = u.norm_h2().powi(2);
        sandwich_ok &= m2 <= h2 * (1.0 + 1e-10) && h2 <= 2.0 * m2 * (1.0 + 1e-10);
        // analysis inverts synthesis
        let back = analyze(&u, 4);
        worst_round = worst_round.max(back.sub(&w).m_norm() / w.m_norm());
    }
    let ok = worst_parseval <= 1e-10 && sandwich_ok && worst_round <= 1e-12;
    report(
        5,
        "synthesis isometry",
        ok,
        &format!(
            "Parseval {worst_parseval:.2e}, round trip {worst_round:.2e}, sandwich {}",
            if sandwich_ok { "held" } else { "violated" }
        ),
    );
}

#[test]
fn criterion_06_tail_contraction() {
    let p = burgers_profile(15.0, 201);
    let m = burgers();
    let zero = DiscreteField::zeros(p.grid.clone(), 1);
    let pair = |amp: f64| {
        DiscreteField::from_scalar_fn(p.grid.clone(), move |x| {
            c(amp * (-x * x / 2.0).exp(), 0.0)
        })
    };
    let run = |amp: f64, k_max: i64| -> (f64, f64) {
        let ctx = TailContext::new(&p, &m, 1, k_max, 0.0, 0.0);
        let wk = pair(amp);
        let (w, theta, _) =
            tail_fixed_point(&ctx, &zero, &wk, &wk.conj(), 0.0, 1e-12, 40).unwrap();
        (w.m_norm(), theta)
    };
    let (n1, theta) = run(1e-2, 6);
    let (n2, _) = run(5e-3, 6);
    let (n1_wide, _) = run(1e-2, 12);
    let factor = n1 / n2;
    let drift = (n1 - n1_wide).abs() / n1;
    let ok = theta <= 0.5 && (3.5..=4.5).contains(&factor) && drift <= 0.01;
    report(
        6,
        "tail contraction",
        ok,
        &format!("theta {theta:.3}, quadratic factor {factor:.2}, truncation drift {drift:.2e}"),
    );
}

#[test]
fn criterion_07_equivariance() {
    let p = burgers_profile(15.0, 201);
    let m = burgers();
    let ctx = TailContext::new(&p, &m, 1, 5, 0.0, 0.0);
    let zero = DiscreteField::zeros(p.grid.clone(), 1);
    let wk = DiscreteField::from_scalar_fn(p.grid.clone(), |x| {
        c(1e-2 * (-x * x / 2.0).exp(), 1e-3 * (-x * x).exp())
    });
    let tol_fix = 1e-12;
    let (w, _, _) = tail_fixed_point(&ctx, &zero, &wk, &wk.conj(), 0.0, tol_fix, 40).unwrap();
    // translation: rotate the critical pair, expect the rotated fixed point
    let shift = 0.9;
    let wk_s = wk.scale(c(0.0, shift).exp());
    let (ws, _, _) =
        tail_fixed_point(&ctx, &zero, &wk_s, &wk_s.conj(), 0.0, tol_fix, 40).unwrap();
    let trans_defect = ws.sub(&w.translate(shift)).m_norm();
    // reflection: swapping the pair reflects the fixed point (scalar R = 1)
    let (wr, _, _) =
        tail_fixed_point(&ctx, &zero, &wk.conj(), &wk, 0.0, tol_fix, 40).unwrap();
    let r = DMatrix::identity(1, 1);
    let refl_defect = wr.sub(&w.reflect(&r)).m_norm();
    // synthesis commutes with translation when the shift lands on the y-grid
    let g = Grid1D::new(8.0, 101).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let stack = random_stack(g, 3, &mut rng);
    let ny = default_ny(3);
    let steps = 3usize;
    let c_shift = TWO_PI * steps as f64 / ny as f64;
    let u = synthesize(&stack, ny);
    let ut = synthesize(&stack.translate(c_shift), ny);
    let mut commute_defect: f64 = 0.0;
    for ix in 0..u.grid.n_points {
        for iy in 0..ny {
            let rot = u.get(ix, (iy + steps) % ny, 0);
            commute_defect = commute_defect.max((ut.get(ix, iy, 0) - rot).abs());
        }
    }
    let tol = 10.0 * tol_fix.max(1e-10);
    let ok = trans_defect <= tol && refl_defect <= tol && commute_defect <= 1e-12;
    report(
        7,
        "equivariance",
        ok,
        &format!(
            "translation {trans_defect:.2e}, reflection {refl_defect:.2e}, \
             synthesis-shift {commute_defect:.2e}"
        ),
    );
}

#[test]
fn criterion_08_galilean_shift() {
    let red = o2_reduced();
    let pl = &red.pipeline;
    let eps = red.crossing.eps_crit;
    let d = 0.37;
    let op0 = pl.mode_operator(eps, 1, 0.0).unwrap();
    let contour = Contour::new(red.crossing.lambda_crit, 0.12, 32).unwrap();
    let pair0 =
        stripbif_core::spectral::extract_eigenpair(&op0, &contour, 1e-6).unwrap();
    let opd = pl.mode_operator(eps, 1, d).unwrap();
    let shifted = pair0.lambda - c(0.0, d);
    let cd = Contour::new(shifted, 0.12, 32).unwrap();
    let paird = stripbif_core::spectral::extract_eigenpair(&opd, &cd, 1e-6).unwrap();
    let shift_defect = (paird.lambda - shifted).norm();
    let opm = pl.mode_operator(eps, -1, 0.0).unwrap();
    let cm = Contour::new(pair0.lambda.conj(), 0.12, 32).unwrap();
    let pairm = stripbif_core::spectral::extract_eigenpair(&opm, &cm, 1e-6).unwrap();
    let conj_defect = (pairm.lambda - pair0.lambda.conj()).norm();
    let ok = shift_defect <= 1e-10 && conj_defect <= 1e-10;
    report(
        8,
        "Galilean shift and conjugate pairing",
        ok,
        &format!("shift {shift_defect:.2e}, pairing {conj_defect:.2e}"),
    );
}

#[test]
fn criterion_09_crossing_detection() {
    // manufactured rank-one family with eigenvalue exactly eps + i
    let fam = rank_one_family(12, c(-4.0, 0.0), 3);
    let grid: Vec<f64> = (0..9).map(|i| -0.2 + 0.05 * i as f64).collect();
    let rep = track_crossing(fam, 2, &grid, c(-0.2, 1.0), 0.3, 32, 1e-10, 1e-3).unwrap();
    let eps_err = rep.eps_crit.abs();
    let slope_err = (rep.lambda_prime_re - 1.0).abs() + rep.lambda_prime_im.abs();
    // synthetic model: tracked eigenvalue vs a dense eigensolve at the crossing
    let red = o2_reduced();
    let op = red
        .pipeline
        .mode_operator(red.crossing.eps_crit, 1, 0.0)
        .unwrap();
    let eigs = op.dense_interior().eigenvalues().unwrap();
    let oracle_err = eigs
        .iter()
        .map(|z| (z - red.crossing.lambda_crit).norm())
        .fold(f64::INFINITY, f64::min);
    let ok = eps_err <= 1e-6 && slope_err <= 1e-6 && oracle_err <= 1e-7;
    report(
        9,
        "crossing detection",
        ok,
        &format!(
            "rank-one eps error {eps_err:.2e}, slope error {slope_err:.2e}, \
             dense-oracle gap {oracle_err:.2e}"
        ),
    );
}

#[test]
fn criterion_10_realness_certification() {
    let red = o2_reduced();
    let eps = red.crossing.eps_crit;
    let rep = certify_realness(red, &[eps], &[0.02, 0.05]).unwrap();
    let f_plus = red.f_reduced(0.04, eps, 0.0).unwrap();
    let f_minus = red.f_reduced(-0.04, eps, 0.0).unwrap();
    let odd_defect = (f_plus + f_minus).norm() / f_plus.norm().max(1e-30);
    let ok = !rep.downgraded
        && rep.max_im_lambda <= 1e-8
        && rep.max_rel_im_f <= 1e-6
        && odd_defect <= 1e-8;
    report(
        10,
        "realness certification",
        ok,
        &format!(
            "|Im lambda| {:.2e}, rel Im f {:.2e}, oddness {odd_defect:.2e}",
            rep.max_im_lambda, rep.max_rel_im_f
        ),
    );
}

#[test]
fn criterion_11_branch_correctness() {
    let t = Instant::now();
    // O2 pitchfork against the independent Galerkin continuation
    let red = o2_reduced();
    let s = 0.05;
    let b = branch_o2(red, &[s], 1e-3).unwrap();
    assert!(b.truncated.is_none(), "{:?}", b.truncated);
    let sample = b.samples[1];
    let stack = synthesize_solution(red, s, sample.eps, sample.d).unwrap();
    let amp = stack.mode(red.k_star()).norm_l2();
    let prep = red.prepare(sample.eps).unwrap();
    let mut seed = DiscreteField::zeros(grid201(), 1);
    let s2: C64 = prep.v.iter().map(|z| z * z).sum();
    let phase = c(0.0, -0.5 * s2.arg()).exp();
    for (dst, vi) in seed.data.iter_mut().zip(&prep.v) {
        *dst = c((vi * phase).re, 0.0);
    }
    let (eps_oracle, _) = galerkin_o2_solve(&red.pipeline, &red.crossing, amp, &seed).unwrap();
    let galerkin_gap = (eps_oracle - sample.eps).abs();
    // SO2 frame speed grows quadratically in amplitude
    let so2 = so2_reduced();
    let bs = branch_so2(so2, &[0.02, 0.03, 0.04, 0.06], 1e-3).unwrap();
    assert!(bs.truncated.is_none(), "{:?}", bs.truncated);
    let xs: Vec<f64> = bs.samples[1..].iter().map(|sm| sm.s).collect();
    let ys: Vec<f64> = bs.samples[1..]
        .iter()
        .map(|sm| (sm.d - so2.d_bar).abs())
        .collect();
    let exponent = loglog_slope(&xs, &ys);
    // independent full-2D residual drops under joint refinement
    let b3 = branch_o2(red, &[0.03], 1e-3).unwrap();
    let sm3 = b3.samples[1];
    let fine_pl = Pipeline::synthetic_o2(Grid1D::new(15.0, 401).unwrap(), 1, 8);
    let red_fine = fine_pl.reduce(red.crossing.clone());
    let cert = synthesize_and_certify(red, &red_fine, 0.03, sm3.eps, sm3.d).unwrap();
    // the synthesized solution is nontrivial and carries the prescribed amplitude
    let stack3 = synthesize_solution(red, 0.03, sm3.eps, sm3.d).unwrap();
    let align = inner(&stack3.mode(red.k_star()).data, &prep.h);
    let elapsed = t.elapsed().as_secs_f64();
    let ok = galerkin_gap <= 1e-4
        && (1.8..=2.2).contains(&exponent)
        && cert.factor >= 3.0
        && (align.re - 0.03).abs() < 0.1 * 0.03
        && elapsed < 600.0;
    report(
        11,
        "branch correctness",
        ok,
        &format!(
            "Galerkin gap {galerkin_gap:.2e}, frame-speed exponent {exponent:.2}, \
             refinement factor {:.2}, {elapsed:.0}s",
            cert.factor
        ),
    );
}

#[test]
fn criterion_12_hopf_reinterpretation() {
    let so2 = so2_reduced();
    let b = branch_so2(so2, &[0.02, 0.04], 1e-3).unwrap();
    let hopf = hopf_reinterpret(&b, so2.d_bar).unwrap();
    let mut worst: f64 = 0.0;
    for (orig, h) in b.samples.iter().zip(&hopf.samples) {
        let expect = TWO_PI / orig.d.abs();
        worst = worst.max((h.period.unwrap() - expect).abs());
    }
    // a reflection-symmetric (steady) branch must be rejected
    let red = o2_reduced();
    let bo = branch_o2(red, &[0.02], 1e-3).unwrap();
    let rejected = hopf_reinterpret(&bo, red.d_bar).is_err();
    let ok = worst == 0.0 && rejected;
    report(
        12,
        "Hopf reinterpretation",
        ok,
        &format!(
            "period defect {worst:.1e}, steady branch {}",
            if rejected { "rejected" } else { "accepted" }
        ),
    );
}
