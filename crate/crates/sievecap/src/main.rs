//! Command line front end: configuration parsing, subcommand dispatch and
//! artifact persistence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sievecap::analytic;
use sievecap::ansatz::{
    ansatz_energy_assembled, ansatz_energy_closed, cavity_potential, AnsatzMode, AnsatzSpec,
};
use sievecap::experiments::{
    field_svg, manifest_json, run_critical_sweep, run_separation, separation_csv, sweep_csv,
    write_text, SeparationConfig, SweepConfig,
};
use sievecap::geometry::{
    anchors_circle, anchors_greedy, build_perforation, circle_count_for_eps, CavityShape,
    CavitySpec, PerforatedDomain, RotationRule,
};
use sievecap::mesh::{mesh_perforated_ball, BoundaryTag, Curve, Hole, MeshOptions, SizeField, SizeSource};
use sievecap::solver::{
    capacity_on_meshes, solve_dirichlet, BoundaryValues, SolveOptions,
};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "sievecap", about = "p-capacity laboratory for domains perforated along a sphere", version)]
struct Cli {
    /// Worker threads (default: all cores; RAYON_NUM_THREADS also works).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analytic self-test battery and print a PASS/FAIL table.
    Verify,
    /// Generate an anchor set and write it as CSV.
    Anchors(AnchorsArgs),
    /// Build a perforated-ball mesh and report statistics.
    Mesh(CaseArgs),
    /// Estimate a capacity by refinement and extrapolation.
    Capacity(CapacityArgs),
    /// Solve one equilibrium problem and dump field, report and mesh.
    Solve(CaseArgs),
    /// Compare closed-form and assembled ansatz energies over an A grid.
    Ansatz(CaseArgs),
    /// Run the critical-window sweep from a config file.
    Sweep(ConfigArgs),
    /// Run the separation study from a config file.
    Separation(ConfigArgs),
}

#[derive(Args)]
struct AnchorsArgs {
    /// Equally spaced points on the circle.
    #[arg(long, conflicts_with_all = ["dim", "eps"])]
    circle: Option<usize>,
    #[arg(long, default_value_t = 2)]
    dim: u32,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long, default_value = "ball")]
    shape: String,
    /// Inner radius (ball) or half-width (square).
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long, default_value_t = 2.0)]
    outer: f64,
    #[arg(long, default_value_t = 1.5)]
    p: f64,
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long)]
    h_in: Option<f64>,
    #[arg(long)]
    h_far: Option<f64>,
}

#[derive(Args)]
struct CaseArgs {
    /// JSON run configuration; flags below override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    outer: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    h_far: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also render the solved field as SVG.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
}

/// One solvable case: a perforated ball with ball cavities at scale
/// `alpha = tau eps^(1/gamma)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
struct CaseConfig {
    p: f64,
    r_outer: f64,
    eps: f64,
    tau: f64,
    shape: CavityShape,
    rotation: RotationRule,
    h_far: f64,
    h_near_factor: f64,
    a_grid: usize,
}

impl Default for CaseConfig {
    fn default() -> Self {
        CaseConfig {
            p: 1.2,
            r_outer: 2.0,
            eps: 0.1,
            tau: 0.1,
            shape: CavityShape::Ball,
            rotation: RotationRule::Identity,
            h_far: 0.25,
            h_near_factor: 0.5,
            a_grid: 21,
        }
    }
}

/// Top-level run configuration; unknown keys are rejected and the schema
/// version must match exactly.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    schema_version: u32,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    case: Option<CaseConfig>,
    #[serde(default)]
    sweep: Option<SweepConfig>,
    #[serde(default)]
    separation: Option<SeparationConfig>,
    #[serde(default)]
    mesh_options: Option<MeshOptions>,
    #[serde(default)]
    solver_options: Option<SolveOptions>,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    out_dir: Option<String>,
}

fn default_seed() -> u64 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            kind: None,
            case: None,
            sweep: None,
            separation: None,
            mesh_options: None,
            solver_options: None,
            seed: 1,
            out_dir: None,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<sievecap::Error> for CliError {
    fn from(e: sievecap::Error) -> Self {
        match e {
            sievecap::Error::Config(msg) | sievecap::Error::Domain(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{} line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version {} != supported {SCHEMA_VERSION}",
            config.schema_version
        )));
    }
    validate_config(&config)?;
    Ok(config)
}

fn validate_config(config: &RunConfig) -> CliResult<()> {
    let check_params = |p: f64, r_outer: f64, eps: f64| -> CliResult<()> {
        if !(p > 1.0 && p < 2.0) {
            return Err(CliError::Config(format!(
                "p = {p} must be in (1, d) with d = 2"
            )));
        }
        if r_outer <= 1.0 {
            return Err(CliError::Config(format!("r_outer = {r_outer} must exceed 1")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(CliError::Config(format!("eps = {eps} must be in (0, 1)")));
        }
        Ok(())
    };
    if let Some(case) = &config.case {
        check_params(case.p, case.r_outer, case.eps)?;
        if case.tau <= 0.0 {
            return Err(CliError::Config(format!("tau = {} must be > 0", case.tau)));
        }
    }
    if let Some(sweep) = &config.sweep {
        for &eps in &sweep.eps_values {
            check_params(sweep.p, sweep.r_outer, eps)?;
        }
        for &tau in &sweep.tau_values {
            if tau <= 0.0 {
                return Err(CliError::Config(format!("tau = {tau} must be > 0")));
            }
        }
    }
    if let Some(sep) = &config.separation {
        check_params(sep.p, 1.0 + sep.delta_values.iter().cloned().fold(0.1, f64::max), sep.eps)?;
    }
    Ok(())
}

fn run_dir(base: Option<&str>, fallback: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
    PathBuf::from(base.unwrap_or(fallback)).join(format!("run-{stamp}"))
}

fn build_case(
    case: &CaseConfig,
    mesh_opts: &MeshOptions,
) -> CliResult<(PerforatedDomain, sievecap::mesh::Mesh)> {
    let gamma =
        analytic::gamma_exponent(2, case.p).map_err(|e| CliError::Config(e.to_string()))?;
    let n = circle_count_for_eps(case.eps);
    let anchors = anchors_circle(n);
    let alpha = case.tau * anchors.eps.powf(1.0 / gamma);
    let cavity = CavitySpec {
        shape: case.shape.clone(),
        rotation: case.rotation,
    };
    let domain = build_perforation(&anchors, alpha, &cavity, case.r_outer, case.p)?;
    if domain.alpha_warning {
        eprintln!(
            "warning: alpha = {alpha:.4} exceeds 1/80; cavities remain disjoint but leave the \
             small-scale convention"
        );
    }
    let mesh = mesh_perforated_ball(&domain, case.h_far, case.h_near_factor, mesh_opts)?;
    Ok((domain, mesh))
}

fn equilibrium_bc(mesh: &sievecap::mesh::Mesh) -> BoundaryValues {
    let mut bc = BoundaryValues::new();
    bc.insert(BoundaryTag::Outer, 0.0);
    for e in &mesh.boundary_edges {
        if let BoundaryTag::Cavity(_) = e.tag {
            bc.insert(e.tag, 1.0);
        }
    }
    bc
}

fn merge_case(args: &CaseArgs) -> CliResult<(RunConfig, CaseConfig)> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    let mut case = config.case.clone().unwrap_or_default();
    if let Some(p) = args.p {
        case.p = p;
    }
    if let Some(outer) = args.outer {
        case.r_outer = outer;
    }
    if let Some(eps) = args.eps {
        case.eps = eps;
    }
    if let Some(tau) = args.tau {
        case.tau = tau;
    }
    if let Some(h_far) = args.h_far {
        case.h_far = h_far;
    }
    config.case = Some(case.clone());
    validate_config(&config)?;
    Ok((config, case))
}

fn cmd_verify() -> CliResult<()> {
    let checks = sievecap_verify_battery();
    let mut failed = 0usize;
    println!("{:<44} {:>6}  detail", "check", "status");
    println!("{}", "-".repeat(78));
    for (name, result) in checks {
        match result {
            Ok(detail) => println!("{name:<44} {:>6}  {detail}", "PASS"),
            Err(detail) => {
                failed += 1;
                println!("{name:<44} {:>6}  {detail}", "FAIL");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} verify checks failed")));
    }
    Ok(())
}

type Check = (&'static str, Result<String, String>);

fn check<F: FnOnce() -> Result<String, String>>(name: &'static str, f: F) -> Check {
    (name, f())
}

fn sievecap_verify_battery() -> Vec<Check> {
    use analytic::*;
    use std::f64::consts::PI;
    let mut checks = Vec::new();

    checks.push(check("gamma exponent values", || {
        let g = gamma_exponent(3, 2.0).map_err(|e| e.to_string())?;
        if (g - 1.0).abs() > 1e-15 {
            return Err(format!("gamma(3,2) = {g}"));
        }
        let g = gamma_exponent(2, 1.2).map_err(|e| e.to_string())?;
        if (g - 4.0).abs() > 1e-12 {
            return Err(format!("gamma(2,1.2) = {g}"));
        }
        if gamma_exponent(3, 3.5).is_ok() {
            return Err("accepted p >= d".into());
        }
        Ok("gamma(3,2)=1, gamma(2,1.2)=4, domain errors raised".into())
    }));

    checks.push(check("sphere areas up to d=6", || {
        let expected = [
            (2u32, 2.0 * PI),
            (3, 4.0 * PI),
            (4, 2.0 * PI * PI),
            (5, 8.0 * PI * PI / 3.0),
            (6, PI * PI * PI),
        ];
        for (d, want) in expected {
            let got = sphere_area(d);
            if (got - want).abs() > 1e-12 * want {
                return Err(format!("omega(S^{}) = {got}, want {want}", d - 1));
            }
        }
        Ok("recurrence matches closed forms".into())
    }));

    checks.push(check("ball capacity identities", || {
        let c = ball_capacity(3, 2.0, 1.0, f64::INFINITY).map_err(|e| e.to_string())?;
        if (c.value - 4.0 * PI).abs() > 1e-12 {
            return Err(format!("cap(B(0,1)) d=3 p=2: {}", c.value));
        }
        let c = ball_capacity(2, 1.5, 0.5, 2.0).map_err(|e| e.to_string())?;
        let want = 2.0 * PI / 1.5f64.sqrt();
        if (c.value - want).abs() > 1e-12 {
            return Err(format!("annulus capacity {} vs {want}", c.value));
        }
        Ok(format!("4*pi and 2*pi/sqrt(1.5) = {want:.6} reproduced"))
    }));

    checks.push(check("annulus capacity vs quadrature", || {
        let (d, p, r, r_out) = (2u32, 1.2f64, 0.5f64, 2.0f64);
        let gamma = gamma_exponent(d, p).unwrap();
        let denom = r.powf(-gamma) - r_out.powf(-gamma);
        let integrand =
            |t: f64| (gamma * t.powf(-gamma - 1.0) / denom).powf(p) * t.powf(d as f64 - 1.0);
        let quad = sphere_area(d) * simpson(integrand, r, r_out, 8192);
        let closed = ball_capacity(d, p, r, r_out).unwrap().value;
        if (quad - closed).abs() > 1e-7 * closed {
            return Err(format!("quadrature {quad} vs closed {closed}"));
        }
        Ok(format!("closed form = {closed:.9} matches quadrature"))
    }));

    checks.push(check("a_star monotone with correct endpoints", || {
        let (sigma, cap_k, cap_b) = (6.28, 8.29, 8.40);
        let mut prev = -1.0;
        for k in 0..200 {
            let tau = 1e-3 * (1.1f64).powi(k);
            let a = a_star(Tau::Finite(tau), sigma, cap_k, cap_b, 2, 1.2);
            if a < prev - 1e-14 {
                return Err(format!("not monotone at tau = {tau}"));
            }
            prev = a;
        }
        let a0 = a_star(Tau::Finite(0.0), sigma, cap_k, cap_b, 2, 1.2);
        let a_inf = a_star(Tau::Infinite, sigma, cap_k, cap_b, 2, 1.2);
        if a0 != 0.0 || a_inf != 1.0 {
            return Err(format!("endpoints {a0}, {a_inf}"));
        }
        Ok("nondecreasing on a 200-point tau grid, 0 and 1 at the ends".into())
    }));

    checks.push(check("phi_tau convex with minimum at a_star", || {
        let (sigma, cap_k, cap_b, d, p) = (6.2, 8.3, 8.4, 2u32, 1.5);
        for &tau in &[0.05, 0.2, 1.0] {
            let phis: Vec<f64> = (0..=100)
                .map(|k| phi_tau(k as f64 / 100.0, tau, sigma, cap_k, cap_b, d, p))
                .collect();
            for k in 1..phis.len() - 1 {
                if phis[k + 1] - 2.0 * phis[k] + phis[k - 1] <= 0.0 {
                    return Err(format!("not convex at tau = {tau}"));
                }
            }
            let mut best = f64::INFINITY;
            let n = 1_000_000;
            for i in 0..=n {
                best = best.min(phi_tau(i as f64 / n as f64, tau, sigma, cap_k, cap_b, d, p));
            }
            let closed = limit_capacity(Tau::Finite(tau), sigma, cap_k, cap_b, d, p);
            if (best - closed).abs() > 1e-9 {
                return Err(format!("grid min {best} vs closed {closed} at tau = {tau}"));
            }
            if closed > cap_b * (1.0 + 1e-12) {
                return Err("minimum above the ball capacity".into());
            }
        }
        Ok("second differences positive; 1e-6 grid search agrees to 1e-9".into())
    }));

    checks.push(check("relative capacity bracket", || {
        for &(d, p, r_out) in &[(2u32, 1.5, 2.0), (2, 1.2, 4.0), (3, 2.0, 2.0)] {
            let gamma = gamma_exponent(d, p).unwrap();
            let whole = ball_capacity(d, p, 1.0, f64::INFINITY).unwrap().value;
            let rel = ball_capacity(d, p, 1.0, r_out).unwrap().value;
            let (lo, hi) = capacity_bracket(whole, r_out, gamma, p).unwrap();
            if rel < lo || rel > hi {
                return Err(format!("d={d} p={p}: {rel} outside [{lo}, {hi}]"));
            }
        }
        let (lo, hi) = capacity_bracket(3.0, f64::INFINITY, 1.0, 1.5).unwrap();
        if lo != hi {
            return Err("bracket does not collapse at R = infinity".into());
        }
        Ok("exact relative values inside the bracket; collapse at infinity".into())
    }));

    checks.push(check("relative capacity decreasing in R", || {
        let mut prev = f64::INFINITY;
        for &r_out in &[1.5, 2.0, 4.0, 16.0, 256.0] {
            let v = ball_capacity(2, 1.5, 1.0, r_out).unwrap().value;
            if v >= prev {
                return Err(format!("not decreasing at R = {r_out}"));
            }
            prev = v;
        }
        let whole = ball_capacity(2, 1.5, 1.0, f64::INFINITY).unwrap().value;
        if prev < whole {
            return Err("dropped below the whole-space value".into());
        }
        Ok("monotone from above toward the whole-space value".into())
    }));

    checks.push(check("radial profile solves the radial ODE", || {
        let (d, p, r, r_out) = (3u32, 1.7f64, 0.5f64, 3.0f64);
        let gamma = gamma_exponent(d, p).unwrap();
        let h = |t: f64| radial_profile_annulus(t, r, r_out, gamma).unwrap();
        let flux = |t: f64, step: f64| {
            let dh = (h(t + step) - h(t - step)) / (2.0 * step);
            t.powf(d as f64 - 1.0) * dh.abs().powf(p - 2.0) * dh
        };
        let scale = flux(1.0, 1e-5).abs();
        let res = |step: f64| {
            let mut worst: f64 = 0.0;
            for k in 1..20 {
                let t = r + (r_out - r) * k as f64 / 20.0;
                worst = worst
                    .max(((flux(t + step, step) - flux(t - step, step)) / (2.0 * step)).abs());
            }
            worst / scale
        };
        let (r1, r2) = (res(1e-3), res(5e-4));
        if r1 > 1e-4 || (r2 > r1 / 3.0 && r2 > 1e-10) {
            return Err(format!("residuals {r1}, {r2}"));
        }
        Ok(format!("flux derivative residual {r1:.2e} -> {r2:.2e} (O(step^2))"))
    }));

    checks.push(check("profile boundary values and monotonicity", || {
        let gamma = 1.0;
        if (radial_profile_annulus(0.5, 0.5, 2.0, gamma).unwrap() - 1.0).abs() > 1e-15
            || radial_profile_annulus(2.0, 0.5, 2.0, gamma).unwrap().abs() > 1e-15
        {
            return Err("annulus endpoints wrong".into());
        }
        let mut prev = f64::INFINITY;
        for k in 0..=50 {
            let t = 0.5 + 1.5 * k as f64 / 50.0;
            let v = radial_profile_annulus(t, 0.5, 2.0, gamma).unwrap();
            if v > prev {
                return Err("profile not decreasing".into());
            }
            prev = v;
        }
        let u1 = radial_profile_u(2.0, 1.0, 1.0);
        let u2 = radial_profile_u(2.6, 1.0, 1.3);
        if (u1 - 0.5).abs() > 1e-14 || (u2 - 0.5).abs() > 1e-14 {
            return Err("scaling identity broken".into());
        }
        Ok("endpoints 1 and 0, decreasing, scaling identity".into())
    }));

    checks.push(check("shrinkage factor J", || {
        let j = shrinkage_factor_j(0.01, 1.0, 1.5).unwrap();
        if (j - (0.9f64.powf(-1.5) - 1.0)).abs() > 1e-14 {
            return Err(format!("J(0.01) = {j}"));
        }
        if shrinkage_factor_j(0.02, 1.0, 1.5).unwrap() <= j {
            return Err("not increasing".into());
        }
        if shrinkage_factor_j(1e-9, 1.0, 1.5).unwrap() > 1e-7 {
            return Err("does not vanish".into());
        }
        Ok(format!("J(0.01) = {j:.6}, increasing, -> 0"))
    }));

    checks.push(check("cone energy identities", || {
        let full = cone_energy_closed(1.0, 1.0, 1.0, 1.0, 1.5, 2);
        let cap = ball_capacity(2, 1.5, 1.0, f64::INFINITY).unwrap().value;
        if (full - cap).abs() > 1e-12 {
            return Err(format!("full-sphere cone {full} vs capacity {cap}"));
        }
        let trunc = cone_energy_truncated(1.0, 0.5, 2.0, 1.0, 1.0, 1.5, 2).unwrap();
        let annulus = ball_capacity(2, 1.5, 0.5, 2.0).unwrap().value;
        if (trunc - annulus).abs() > 1e-12 {
            return Err(format!("truncated cone {trunc} vs annulus {annulus}"));
        }
        Ok("full cone = ball capacity; truncated cone = annulus capacity".into())
    }));

    checks.push(check("capacity scaling relation", || {
        let base = ball_capacity(3, 2.0, 1.0, f64::INFINITY).unwrap().value;
        let scaled = capacity_scaling(base, 2.0, 3, 2.0);
        let direct = ball_capacity(3, 2.0, 2.0, f64::INFINITY).unwrap().value;
        if (scaled - direct).abs() > 1e-12 * direct {
            return Err(format!("{scaled} vs {direct}"));
        }
        Ok("a^(d-p) scaling matches direct evaluation".into())
    }));

    checks.push(check("limit capacity below both natural bounds", || {
        let (sigma, cap_k, cap_b, d, p) = (6.28, 8.29, 8.40, 2u32, 1.2);
        for &tau in &[0.01, 0.05, 0.1, 0.5, 2.0] {
            let lim = limit_capacity(Tau::Finite(tau), sigma, cap_k, cap_b, d, p);
            let sub = sigma * tau.powf(d as f64 - p) * cap_k;
            if lim > cap_b * (1.0 + 1e-12) || lim > sub * (1.0 + 1e-12) {
                return Err(format!("tau = {tau}: {lim} above min({cap_b}, {sub})"));
            }
        }
        Ok("below the ball capacity and the subadditive cloud bound".into())
    }));

    checks
}

fn cmd_anchors(args: &AnchorsArgs) -> CliResult<()> {
    let anchors = match args.circle {
        Some(n) => {
            if n < 2 {
                return Err(CliError::Config("need at least 2 circle anchors".into()));
            }
            anchors_circle(n)
        }
        None => anchors_greedy(args.dim, args.eps, args.seed)?,
    };
    anchors.check_invariants()?;
    let csv = anchors.to_csv();
    match &args.out {
        Some(path) => {
            write_text(path, &csv)?;
            println!(
                "wrote {} anchors (eps = {}, sigma = {}) to {}",
                anchors.len(),
                anchors.eps,
                sievecap::geometry::sigma_estimate(&anchors),
                path.display()
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_mesh(args: &CaseArgs) -> CliResult<()> {
    let (config, case) = merge_case(args)?;
    let mesh_opts = config.mesh_options.unwrap_or_default();
    let (domain, mesh) = build_case(&case, &mesh_opts)?;
    println!(
        "mesh: {} vertices, {} cells, {} boundary edges, min angle {:.2} deg, {} cavities",
        mesh.vertices.len(),
        mesh.cells.len(),
        mesh.boundary_edges.len(),
        mesh.min_angle_deg(),
        domain.instances.len()
    );
    if let Some(dir) = args.out_dir.as_ref().or(config.out_dir.as_ref().map(PathBuf::from).as_ref())
    {
        let dir = run_dir(dir.to_str(), "out");
        mesh.write_ascii(&dir.join("mesh.txt")).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_text(&dir.join("perforation.json"), &domain.to_json())?;
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn cmd_capacity(args: &CapacityArgs) -> CliResult<()> {
    if args.d != 2 {
        return Err(CliError::Config(
            "full-domain capacity solves support d = 2 (use the analytic module for other d)"
                .into(),
        ));
    }
    if !(args.p > 1.0 && args.p < 2.0) {
        return Err(CliError::Config(format!(
            "p = {} must lie in (1, 2) for d = 2",
            args.p
        )));
    }
    let h_in = args.h_in.unwrap_or(args.r / 12.0);
    let h_far = args.h_far.unwrap_or(args.outer / 10.0);
    let mesh_opts = MeshOptions::default();
    let solve_opts = SolveOptions::default();
    let base = match args.shape.as_str() {
        "ball" => sievecap::mesh::mesh_annulus(args.r, args.outer, h_in, h_far, &mesh_opts)?,
        "square" => {
            let half = args.r;
            let pts: Vec<[f64; 2]> = CavityShape::Square { half_width: 1.0 }
                .boundary_polygon(32)
                .into_iter()
                .map(|q| [half * q[0], half * q[1]])
                .collect();
            let holes = [Hole {
                curve: Curve::Polygon { points: pts },
                tag_index: 0,
            }];
            let size = SizeField {
                h_far,
                slope: 0.5,
                sources: vec![SizeSource {
                    center: [0.0, 0.0],
                    radius: half * std::f64::consts::SQRT_2,
                    h: h_in,
                }],
            };
            sievecap::mesh::triangulate(args.outer, &holes, size, &mesh_opts)?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown shape {other}; use ball or square"
            )))
        }
    };
    let (estimate, _, _) = capacity_on_meshes(&base, args.p, args.levels, &solve_opts)?;
    for (k, (cells, energy)) in estimate.levels.iter().enumerate() {
        println!("level {k}: {cells} cells, energy {energy:.9}");
    }
    println!(
        "capacity = {:.9} +/- {:.2e} (fitted order {:.2})",
        estimate.extrapolated, estimate.error_estimate, estimate.fitted_order
    );
    if args.shape == "ball" {
        let exact = analytic::ball_capacity(2, args.p, args.r, args.outer)
            .map_err(|e| CliError::Config(e.to_string()))?
            .value;
        println!(
            "closed form  = {exact:.9} (relative deviation {:.2e})",
            (estimate.extrapolated - exact).abs() / exact
        );
    }
    Ok(())
}

fn cmd_solve(args: &CaseArgs) -> CliResult<()> {
    let (config, case) = merge_case(args)?;
    let mesh_opts = config.mesh_options.unwrap_or_default();
    let solve_opts = config.solver_options.clone().unwrap_or_default();
    let (domain, mesh) = build_case(&case, &mesh_opts)?;
    let bc = equilibrium_bc(&mesh);
    let report = solve_dirichlet(&mesh, &bc, case.p, &solve_opts)?;
    println!(
        "energy {:.9} ({} iterations, converged = {}, flux balance {:.2e})",
        report.energy, report.iterations, report.converged, report.flux_balance
    );
    let dir = run_dir(
        args.out_dir
            .as_ref()
            .map(|p| p.to_str().unwrap())
            .or(config.out_dir.as_deref()),
        "out",
    );
    mesh.write_ascii(&dir.join("mesh.txt")).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&dir.join("field.txt"), &report.field.to_ascii())?;
    let report_json = serde_json::json!({
        "energy": report.energy,
        "energy_regularized": report.energy_regularized,
        "iterations": report.iterations,
        "linear_iterations": report.linear_iterations,
        "final_residual": report.final_residual,
        "flux_balance": report.flux_balance,
        "converged": report.converged,
        "mu_schedule": report.mu_schedule,
    });
    write_text(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(&report_json).unwrap(),
    )?;
    write_text(&dir.join("perforation.json"), &domain.to_json())?;
    let config_value = serde_json::to_value(&config).unwrap();
    write_text(&dir.join("manifest.json"), &manifest_json(&config_value, config.seed))?;
    if args.svg {
        write_text(
            &dir.join("field.svg"),
            &field_svg(&mesh, &report.field, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
        )?;
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_ansatz(args: &CaseArgs) -> CliResult<()> {
    let (config, case) = merge_case(args)?;
    let mesh_opts = config.mesh_options.unwrap_or_default();
    let solve_opts = config.solver_options.clone().unwrap_or_default();
    let (domain, mesh) = build_case(&case, &mesh_opts)?;
    let potential = cavity_potential(&domain, &mesh_opts, &solve_opts)?;
    println!("A,closed,assembled,bulk_part,cavity_part,cross_term");
    let grid = case.a_grid.max(2);
    for k in 0..grid {
        let a = k as f64 / (grid - 1) as f64;
        let spec = AnsatzSpec::new(a, &domain, AnsatzMode::Ball)?;
        let closed = ansatz_energy_closed(&spec, &potential)?;
        let assembled = ansatz_energy_assembled(&spec, &mesh, &potential)?;
        println!(
            "{a:?},{closed:?},{:?},{:?},{:?},{:?}",
            assembled.total, assembled.bulk_part, assembled.cavity_part, assembled.cross_term
        );
    }
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("config has no `sweep` section".into()))?;
    let mesh_opts = config.mesh_options.unwrap_or_default();
    let solve_opts = config.solver_options.clone().unwrap_or_default();
    let keep = args.svg;
    let results = run_critical_sweep(&sweep, &mesh_opts, &solve_opts, keep);
    let rows: Vec<_> = results.iter().map(|r| r.row.clone()).collect();
    let dir = run_dir(
        args.out_dir
            .as_ref()
            .map(|p| p.to_str().unwrap())
            .or(config.out_dir.as_deref()),
        "out",
    );
    write_text(&dir.join("sweep.csv"), &sweep_csv(&rows))?;
    let config_value = serde_json::to_value(&config).unwrap();
    write_text(&dir.join("manifest.json"), &manifest_json(&config_value, config.seed))?;
    if args.svg {
        for result in &results {
            if let Some(state) = &result.state {
                let name = format!(
                    "field-eps{}-tau{}.svg",
                    result.row.eps_requested, result.row.tau
                );
                write_text(
                    &dir.join(name),
                    &field_svg(
                        &state.mesh,
                        &state.report.field,
                        &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
                    ),
                )?;
            }
        }
    }
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} rows ({failures} failures) written to {}",
        rows.len(),
        dir.display()
    );
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} sweep rows failed")));
    }
    Ok(())
}

fn cmd_separation(args: &ConfigArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    let sep = config
        .separation
        .clone()
        .ok_or_else(|| CliError::Config("config has no `separation` section".into()))?;
    let mesh_opts = config.mesh_options.unwrap_or_default();
    let solve_opts = config.solver_options.clone().unwrap_or_default();
    let rows = run_separation(&sep, &mesh_opts, &solve_opts);
    let dir = run_dir(
        args.out_dir
            .as_ref()
            .map(|p| p.to_str().unwrap())
            .or(config.out_dir.as_deref()),
        "out",
    );
    write_text(&dir.join("separation.csv"), &separation_csv(&rows))?;
    let config_value = serde_json::to_value(&config).unwrap();
    write_text(&dir.join("manifest.json"), &manifest_json(&config_value, config.seed))?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} rows ({failures} failures) written to {}",
        rows.len(),
        dir.display()
    );
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} separation rows failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not set thread pool size: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Verify => cmd_verify(),
        Command::Anchors(args) => cmd_anchors(args),
        Command::Mesh(args) => cmd_mesh(args),
        Command::Capacity(args) => cmd_capacity(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Ansatz(args) => cmd_ansatz(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Separation(args) => cmd_separation(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
