//! Batch front end over the bifurcation pipeline: configuration, stage
//! orchestration, and plot-ready CSV/JSON reporting.

mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::fs;
use std::path::{Path, PathBuf};
use stripbif_core::bifurcation::{
    branch_o2, branch_so2, full_residual, hopf_reinterpret, run_manifest, synthesize_solution,
    write_branch_csv, BifurcationBranch,
};
use stripbif_core::grid::{DiscreteField, Grid1D};
use stripbif_core::linalg::c;
use stripbif_core::model::{compute_speed, verify_lax};
use stripbif_core::operator::{measure_inverse_norm_decay, Coefficients, ModeOperator};
use stripbif_core::reduction::{
    certify_realness, write_samples_csv, Pipeline, ReducedEquation, ReducedSample, SymmetryMode,
};
use stripbif_core::spectral::{
    dunford_partial_inverse, dunford_project, extract_eigenpair, probe_vectors, Contour,
    CrossingReport, DenseOp,
};
use stripbif_core::strip::{
    analyze, default_ny, synthesize, tail_fixed_point, write_stack, ModeStack, TailContext,
};
use stripbif_core::{Error, Result, C64};

#[derive(Parser)]
#[command(name = "stripbif", about = "Transverse steady-bifurcation workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized verification probes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a documented configuration template.
    Init,
    /// Solve the background shock profile and check the shock conditions.
    Profile,
    /// Inverse-norm decay study over the transverse modes.
    Spectrum,
    /// Track the critical eigenvalue and locate its crossing.
    Crossing,
    /// Sample the reduced scalar equation and certify its symmetry.
    Reduce,
    /// Continue the bifurcating branch and write branch artifacts.
    Branch,
    /// Run the invariant verification suite.
    Verify,
    /// Rebuild and export the full 2D solution at the first branch amplitude.
    Synthesize,
}

fn main() {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("missing --config PATH".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, format!("{:#}\n", value))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Init => {
            match &cli.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    let path = dir.join("stripbif.toml");
                    fs::write(&path, config::TEMPLATE)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{}", config::TEMPLATE),
            }
            Ok(())
        }
        Cmd::Profile => cmd_profile(cli),
        Cmd::Spectrum => cmd_spectrum(cli),
        Cmd::Crossing => {
            let cfg = load_config(cli)?;
            let dir = out_dir(cli, &cfg)?;
            let (report, _) = run_crossing(&cfg)?;
            write_json(&dir.join("crossing.json"), &serde_json::to_value(&report).unwrap())?;
            println!(
                "crossing: eps_crit = {:.12}, lambda' = {:.6}+{:.6}i, d_bar = {:.12}",
                report.eps_crit, report.lambda_prime_re, report.lambda_prime_im, report.d_bar
            );
            println!("wrote {}", dir.join("crossing.json").display());
            Ok(())
        }
        Cmd::Reduce => cmd_reduce(cli),
        Cmd::Branch => cmd_branch(cli),
        Cmd::Verify => cmd_verify(cli),
        Cmd::Synthesize => cmd_synthesize(cli),
    }
}

fn cmd_profile(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let pl = cfg.pipeline()?;
    let eps = cfg.profile.eps;
    let profile = pl.profile(eps)?;
    let n = pl.model.n;
    let mut csv = String::from("x");
    for comp in 0..n {
        csv.push_str(&format!(",u{comp}"));
    }
    for comp in 0..n {
        csv.push_str(&format!(",ux{comp}"));
    }
    csv.push('\n');
    for i in 0..pl.grid.n_points {
        csv.push_str(&format!("{:.17e}", pl.grid.nodes[i]));
        for comp in 0..n {
            csv.push_str(&format!(",{:.17e}", profile.ubar[i * n + comp]));
        }
        for comp in 0..n {
            csv.push_str(&format!(",{:.17e}", profile.ubar_x[i * n + comp]));
        }
        csv.push('\n');
    }
    fs::write(dir.join("profile.csv"), csv)?;
    let (speed, rh_residual) = compute_speed(&pl.model, eps, &pl.u_minus, &pl.u_plus)?;
    let lax = verify_lax(&pl.model, eps, &pl.u_minus, &pl.u_plus, speed)?;
    let report = serde_json::json!({
        "eps": eps,
        "speed": speed,
        "rh_residual": rh_residual,
        "decay_rate": profile.alpha,
        "collocation_residual": profile.collocation_residual(&pl.model),
        "plus": {
            "eigenvalues": lax.plus.eigenvalues,
            "dim_stable": lax.plus.dim_stable,
            "dim_unstable": lax.plus.dim_unstable,
        },
        "minus": {
            "eigenvalues": lax.minus.eigenvalues,
            "dim_stable": lax.minus.dim_stable,
            "dim_unstable": lax.minus.dim_unstable,
        },
        "lax_count": lax.plus.dim_stable + lax.minus.dim_unstable,
    });
    write_json(&dir.join("lax.json"), &report)?;
    println!(
        "profile: speed {speed:.6}, decay rate {:.4}; wrote profile.csv, lax.json",
        profile.alpha
    );
    Ok(())
}

fn cmd_spectrum(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let pl = cfg.pipeline()?;
    let eps = cfg.profile.eps;
    let grid = Grid1D::new(cfg.decay.l, cfg.decay.n)?;
    let mut coarse = pl.clone();
    coarse.grid = grid;
    let profile = coarse.profile(eps)?;
    let coeffs = Coefficients::from_profile(&profile, &coarse.model);
    let report = measure_inverse_norm_decay(&coeffs, 0.0, eps, &cfg.decay.k_list)?;
    write_json(&dir.join("decay.json"), &serde_json::to_value(&report).unwrap())?;
    println!(
        "decay slopes: inv {:.3}, dx_inv {:.3}, dxx_inv {:.3}; wrote decay.json",
        report.slope_inv, report.slope_dx_inv, report.slope_dxx_inv
    );
    Ok(())
}

fn run_crossing(cfg: &RunConfig) -> Result<(CrossingReport, Pipeline)> {
    let pl = cfg.pipeline()?;
    if pl.bump.is_none() {
        return Err(Error::Config(
            "model has no crossing potential: nothing to track (use a synthetic model or [model.bump])"
                .into(),
        ));
    }
    let report = pl.track(
        &cfg.eps_grid(),
        c(cfg.crossing.center_re, cfg.crossing.center_im),
        cfg.crossing.tol_eps,
        cfg.tolerances.tol_transversal,
    )?;
    Ok((report, pl))
}

fn run_reduce(cfg: &RunConfig) -> Result<ReducedEquation> {
    let (report, pl) = run_crossing(cfg)?;
    Ok(pl.reduce(report))
}

fn cmd_reduce(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let red = run_reduce(&cfg)?;
    let eps = red.crossing.eps_crit;
    let d = cfg.branch.d_override.unwrap_or(red.d_bar);
    let mut samples = Vec::new();
    for &s in &cfg.branch.s_values {
        let f = red.f_reduced(s, eps, d)?;
        samples.push(ReducedSample {
            x: s,
            eps,
            d,
            re_f: f.re,
            im_f: f.im,
        });
    }
    let mut buf = Vec::new();
    write_samples_csv(&samples, &mut buf)?;
    fs::write(dir.join("reduced.csv"), buf)?;
    println!("wrote reduced.csv ({} samples)", samples.len());
    if red.symmetry_mode == SymmetryMode::O2 {
        let report = certify_realness(&red, &[eps], &cfg.branch.s_values)?;
        write_json(
            &dir.join("realness.json"),
            &serde_json::to_value(&report).unwrap(),
        )?;
        if report.downgraded {
            println!("warning: realness certification downgraded the run to SO2");
            for m in &report.messages {
                println!("  {m}");
            }
        } else {
            println!("realness certified (max |Im lambda| {:.3e})", report.max_im_lambda);
        }
    }
    Ok(())
}

fn run_branch(cfg: &RunConfig, red: &ReducedEquation) -> Result<BifurcationBranch> {
    let tol_t = cfg.tolerances.tol_transversal;
    let mut branch = match red.symmetry_mode {
        SymmetryMode::O2 => branch_o2(red, &cfg.branch.s_values, tol_t)?,
        SymmetryMode::SO2 => branch_so2(red, &cfg.branch.s_values, tol_t)?,
    };
    // fill per-sample residuals from the independent 2D evaluation
    for sm in branch.samples.iter_mut() {
        if sm.s == 0.0 {
            sm.residual = Some(0.0);
            continue;
        }
        let stack = synthesize_solution(red, sm.s, sm.eps, sm.d)?;
        sm.residual = Some(full_residual(red, &stack, sm.eps, sm.d)?);
    }
    Ok(branch)
}

fn cmd_branch(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let red = run_reduce(&cfg)?;
    let branch = run_branch(&cfg, &red)?;
    if let Some(msg) = &branch.truncated {
        println!("warning: branch truncated: {msg}");
    }
    let mut buf = Vec::new();
    write_branch_csv(&branch, &mut buf)?;
    fs::write(dir.join("branch.csv"), buf)?;
    write_json(&dir.join("manifest.json"), &run_manifest(&red, &branch))?;
    println!(
        "branch: {} samples from eps_crit = {:.9}; wrote branch.csv, manifest.json",
        branch.samples.len(),
        red.crossing.eps_crit
    );
    if red.symmetry_mode == SymmetryMode::SO2 && red.d_bar != 0.0 {
        let hopf = hopf_reinterpret(&branch, red.d_bar)?;
        let mut buf = Vec::new();
        write_branch_csv(&hopf, &mut buf)?;
        fs::write(dir.join("hopf.csv"), buf)?;
        println!("wrote hopf.csv (time-periodic reading, d_bar = {:.6})", red.d_bar);
    }
    Ok(())
}

fn cmd_synthesize(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let red = run_reduce(&cfg)?;
    let branch = run_branch(&cfg, &red)?;
    let sample = branch
        .samples
        .iter()
        .find(|sm| sm.s != 0.0)
        .ok_or_else(|| Error::Bifurcation("no nontrivial branch sample to synthesize".into()))?;
    let stack = synthesize_solution(&red, sample.s, sample.eps, sample.d)?;
    let file = fs::File::create(dir.join("stack.bin"))?;
    write_stack(&stack, file)?;
    let ny = default_ny(stack.k_max).max(32);
    let field = synthesize(&stack, ny);
    let mut csv = String::from("x,y");
    for comp in 0..field.n {
        csv.push_str(&format!(",v{comp}"));
    }
    csv.push('\n');
    let ys = field.y_nodes();
    for ix in 0..red.pipeline.grid.n_points {
        for (iy, y) in ys.iter().enumerate() {
            csv.push_str(&format!("{:.17e},{:.17e}", red.pipeline.grid.nodes[ix], y));
            for comp in 0..field.n {
                csv.push_str(&format!(",{:.17e}", field.get(ix, iy, comp)));
            }
            csv.push('\n');
        }
    }
    fs::write(dir.join("field.csv"), csv)?;
    println!(
        "synthesized s = {} (eps = {:.9}, d = {:.9}, residual {:.3e}); wrote stack.bin, field.csv",
        sample.s,
        sample.eps,
        sample.d,
        sample.residual.unwrap_or(f64::NAN)
    );
    Ok(())
}

struct Check {
    name: &'static str,
    outcome: std::result::Result<String, String>,
}

fn check(name: &'static str, f: impl FnOnce() -> std::result::Result<String, String>) -> Check {
    Check { name, outcome: f() }
}

fn cmd_verify(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let seed = cli.seed;
    let mut checks: Vec<Check> = Vec::new();

    // profile exactness and kernel certificate on a fixed fine grid
    let fine = Grid1D::new(25.0, 801)?;
    let burgers = stripbif_core::model::FluxModel::burgers(0.0, 0.0);
    let profile = stripbif_core::model::solve_profile(
        &burgers,
        0.0,
        &[1.0],
        &[-1.0],
        0.0,
        fine.clone(),
    )?;
    checks.push(check("profile collocation residual <= 1e-8", || {
        let r = profile.collocation_residual(&burgers);
        if r <= 1e-8 {
            Ok(format!("{r:.3e}"))
        } else {
            Err(format!("{r:.3e}; refine grid.n"))
        }
    }));
    let coeffs = Coefficients::from_profile(&profile, &burgers);
    checks.push(check("kernel certificate ||L0 ux|| / ||ux|| <= 1e-4", || {
        let op = ModeOperator::assemble(&coeffs, 0, 0.0, 0.0, None);
        let ux: Vec<C64> = profile.ubar_x.iter().map(|&v| c(v, 0.0)).collect();
        let mut lu = op.apply(&ux);
        op.zero_boundary(&mut lu);
        let ratio = stripbif_core::spectral::norm(&lu) / stripbif_core::spectral::norm(&ux);
        if ratio <= 1e-4 {
            Ok(format!("{ratio:.3e}"))
        } else {
            Err(format!("{ratio:.3e}; increase grid resolution"))
        }
    }));

    // synthesis isometry on seeded band-limited fields
    checks.push(check("Parseval and synthesis round trip", || {
        let g = Grid1D::new(8.0, 101).map_err(|e| e.to_string())?;
        let mut w = ModeStack::zeros(g.clone(), 1, 4);
        let probes = probe_vectors(g.n_points, 9, seed ^ 0x51ab);
        for (j, k) in (-4i64..=4).enumerate() {
            w.mode_mut(k).data = probes[j].clone();
        }
        w.symmetrize_reality();
        let u = synthesize(&w, default_ny(4));
        let w2 = analyze(&u, 4);
        let defect = w2.sub(&w).m_norm() / w.m_norm();
        if defect < 1e-12 {
            Ok(format!("round trip {defect:.3e}"))
        } else {
            Err(format!("round trip {defect:.3e}"))
        }
    }));

    // Dunford identities on a manufactured operator and the shock operator
    checks.push(check("projector and partial-inverse identities", || {
        let diag: Vec<C64> = vec![c(0.05, 0.0), c(2.0, 0.0), c(3.0, -1.0), c(-2.5, 0.5)];
        let op = DenseOp::diag(&diag);
        let contour = Contour::new(c(0.0, 0.0), 1.0, 64).map_err(|e| e.to_string())?;
        let probes = probe_vectors(4, 5, seed ^ 0x77);
        let mut worst: f64 = 0.0;
        for p in &probes {
            let pi = dunford_project(&op, &contour, p).map_err(|e| e.to_string())?;
            let pi2 = dunford_project(&op, &contour, &pi).map_err(|e| e.to_string())?;
            let ld = dunford_partial_inverse(&op, &contour, p).map_err(|e| e.to_string())?;
            for i in 0..4 {
                worst = worst.max((pi2[i] - pi[i]).norm());
                // L L^dagger = I - Pi
                let lld = diag[i] * ld[i];
                worst = worst.max((lld - (p[i] - pi[i])).norm());
            }
        }
        if worst < 1e-8 {
            Ok(format!("defect {worst:.3e}"))
        } else {
            Err(format!("defect {worst:.3e}"))
        }
    }));

    // Galilean frame shift and conjugate pairing on the configured model
    checks.push(check("Galilean shift and conjugate pairing", || {
        let pl = cfg.pipeline().map_err(|e| e.to_string())?;
        let eps = cfg.profile.eps;
        let k = pl.k_star;
        let d = 0.37;
        let op0 = pl.mode_operator(eps, k, 0.0).map_err(|e| e.to_string())?;
        let contour = Contour::new(
            c(cfg.crossing.center_re, cfg.crossing.center_im),
            cfg.contour.radius,
            cfg.contour.q,
        )
        .map_err(|e| e.to_string())?;
        let pair0 = extract_eigenpair(&op0, &contour, 1e-6).map_err(|e| e.to_string())?;
        let opd = pl.mode_operator(eps, k, d).map_err(|e| e.to_string())?;
        let contour_d = Contour::new(
            pair0.lambda - c(0.0, k as f64 * d),
            cfg.contour.radius,
            cfg.contour.q,
        )
        .map_err(|e| e.to_string())?;
        let paird = extract_eigenpair(&opd, &contour_d, 1e-6).map_err(|e| e.to_string())?;
        let shift_defect = (paird.lambda - (pair0.lambda - c(0.0, k as f64 * d))).norm();
        let opm = pl.mode_operator(eps, -k, 0.0).map_err(|e| e.to_string())?;
        let contour_m = Contour::new(pair0.lambda.conj(), cfg.contour.radius, cfg.contour.q)
            .map_err(|e| e.to_string())?;
        let pairm = extract_eigenpair(&opm, &contour_m, 1e-6).map_err(|e| e.to_string())?;
        let conj_defect = (pairm.lambda - pair0.lambda.conj()).norm();
        if shift_defect < 1e-10 && conj_defect < 1e-10 {
            Ok(format!("shift {shift_defect:.3e}, pairing {conj_defect:.3e}"))
        } else {
            Err(format!("shift {shift_defect:.3e}, pairing {conj_defect:.3e}"))
        }
    }));

    // tail equivariance at desk scale
    checks.push(check("tail translation equivariance", || {
        let g = Grid1D::new(12.0, 101).map_err(|e| e.to_string())?;
        let m = stripbif_core::model::FluxModel::burgers(0.0, 0.0);
        let p = stripbif_core::model::solve_profile(&m, 0.0, &[1.0], &[-1.0], 0.0, g.clone())
            .map_err(|e| e.to_string())?;
        let ctx = TailContext::new(&p, &m, 1, 4, 0.0, 0.0);
        let zero = DiscreteField::zeros(g.clone(), 1);
        let wk = DiscreteField::from_scalar_fn(g.clone(), |x| c(1e-2 * (-x * x / 2.0).exp(), 0.0));
        let (w, _, _) = tail_fixed_point(&ctx, &zero, &wk, &wk.conj(), 0.0, 1e-12, 40)
            .map_err(|e| e.to_string())?;
        let shift = 0.8;
        let wk_s = wk.scale(c(0.0, shift).exp());
        let (ws, _, _) = tail_fixed_point(&ctx, &zero, &wk_s, &wk_s.conj(), 0.0, 1e-12, 40)
            .map_err(|e| e.to_string())?;
        let defect = ws.sub(&w.translate(shift)).m_norm();
        if defect < 1e-10 {
            Ok(format!("defect {defect:.3e}"))
        } else {
            Err(format!("defect {defect:.3e}"))
        }
    }));

    // reflection matrix sanity when configured
    if let Some(r) = cfg.r_matrix() {
        checks.push(check("reflection matrix orthogonality", move || {
            let n = r.nrows();
            let defect = (r.transpose() * &r - nalgebra::DMatrix::<f64>::identity(n, n))
                .abs()
                .max();
            if defect < 1e-12 {
                Ok(format!("defect {defect:.3e}"))
            } else {
                Err(format!("R^T R - I defect {defect:.3e}; fix branch.r_matrix"))
            }
        }));
    }

    // inverse-norm decay slopes on the dedicated decay grid
    checks.push(check("inverse-norm decay slopes", || {
        let g = Grid1D::new(cfg.decay.l, cfg.decay.n).map_err(|e| e.to_string())?;
        let m = stripbif_core::model::FluxModel::burgers(0.0, 0.0);
        let p = stripbif_core::model::solve_profile(&m, 0.0, &[1.0], &[-1.0], 0.0, g)
            .map_err(|e| e.to_string())?;
        let coeffs = Coefficients::from_profile(&p, &m);
        let rep = measure_inverse_norm_decay(&coeffs, 0.0, 0.0, &cfg.decay.k_list)
            .map_err(|e| e.to_string())?;
        let ok = (-2.2..=-1.8).contains(&rep.slope_inv)
            && (-1.2..=-0.8).contains(&rep.slope_dx_inv);
        let detail = format!(
            "inv {:.3}, dx_inv {:.3}, dxx_inv {:.3}",
            rep.slope_inv, rep.slope_dx_inv, rep.slope_dxx_inv
        );
        if ok {
            Ok(detail)
        } else {
            Err(format!(
                "{detail}; the measurement needs k*h small (try decay.n = 6401, decay.l = 20)"
            ))
        }
    }));

    let mut failures = 0;
    for ch in &checks {
        match &ch.outcome {
            Ok(detail) => println!("PASS  {:<48} {detail}", ch.name),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {:<48} {detail}", ch.name);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} verification check(s) failed");
        std::process::exit(1);
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
