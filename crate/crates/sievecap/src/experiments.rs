//! Theorem-level experiment harnesses: the critical-window sweep, the
//! separation study near the cavities, cone energy lower bounds, and the
//! CSV/manifest/SVG exporters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    a_star, ball_capacity, cap_measure, cone_energy_truncated, equilibrium_profile_ball,
    gamma_exponent, limit_capacity, sphere_area, Tau,
};
use crate::ansatz::{build_ansatz, cavity_potential, AnsatzMode, AnsatzSpec, CavityPotential};
use crate::geometry::{
    anchors_circle, build_perforation, circle_count_for_eps, sigma_estimate, CavityShape,
    CavitySpec, PerforatedDomain, RotationRule,
};
use crate::mesh::{mesh_perforated_ball, BoundaryTag, Mesh, MeshOptions};
use crate::solver::{
    cell_geometry, lp_gradient_distance, solve_dirichlet, Field, FieldSampler, SolveOptions,
    SolveReport,
};
use crate::{Error, Result};

/// Geometric ceiling for the cavity scale: bounding balls of radius
/// `alpha eps` must stay disjoint for eps-separated anchors.
pub const ALPHA_GEOMETRY_MAX: f64 = 0.45;

// ---------------------------------------------------------------------------
// critical-window sweep
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub p: f64,
    pub r_outer: f64,
    pub eps_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub shape: CavityShape,
    pub rotation: RotationRule,
    pub h_far: f64,
    pub h_near_factor: f64,
    /// Probe shells sit at 1 - delta, 1 + delta and (1 + R)/2.
    pub probe_delta: f64,
    pub seed: u64,
}

impl SweepConfig {
    pub fn window_default(p: f64) -> Self {
        SweepConfig {
            p,
            r_outer: 2.0,
            eps_values: vec![0.1, 0.05, 0.025],
            tau_values: vec![window_center_tau(2, p, 2.0)],
            shape: CavityShape::Ball,
            rotation: RotationRule::Identity,
            h_far: 0.25,
            h_near_factor: 0.5,
            probe_delta: 0.2,
            seed: 1,
        }
    }
}

/// Window center: the tau where the cavity-cloud bound crosses the ball
/// bound, `sigma tau^(d-p) cap(K) = cap(B(0,1), B(0,R))`, with the limiting
/// circle density `sigma = 2 pi` and `K` the unit ball.
pub fn window_center_tau(d: u32, p: f64, r_outer: f64) -> f64 {
    let cap_k = ball_capacity(d, p, 1.0, f64::INFINITY).unwrap().value;
    let cap_rel = ball_capacity(d, p, 1.0, r_outer).unwrap().value;
    let sigma = sphere_area(d);
    (cap_rel / (sigma * cap_k)).powf(1.0 / (d as f64 - p))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps_requested: f64,
    pub eps: f64,
    pub n_anchors: usize,
    pub tau: f64,
    pub alpha: f64,
    pub alpha_capped: bool,
    pub a_r_analytic: f64,
    /// False when alpha > 1/10: the cavity outgrows the eps/10 support and
    /// the ansatz comparison is undefined.
    pub ansatz_valid: bool,
    pub cap_numeric: f64,
    pub cap_limit_analytic: f64,
    pub sup_err_bulk: f64,
    pub sup_err_global: f64,
    pub grad_lp_err: f64,
    pub iterations: usize,
    pub converged: bool,
    pub flux_balance: f64,
    pub cells: usize,
    pub error: Option<String>,
}

/// Heavy per-point state kept for downstream diagnostics (cones, plots).
pub struct SweepState {
    pub domain: PerforatedDomain,
    pub mesh: Mesh,
    pub report: SolveReport,
    pub ansatz_field: Option<Field>,
}

pub struct SweepResult {
    pub row: SweepRow,
    pub state: Option<SweepState>,
}

fn failed_row(eps: f64, tau: f64, err: &Error) -> SweepRow {
    SweepRow {
        eps_requested: eps,
        eps: f64::NAN,
        n_anchors: 0,
        tau,
        alpha: f64::NAN,
        alpha_capped: false,
        a_r_analytic: f64::NAN,
        ansatz_valid: false,
        cap_numeric: f64::NAN,
        cap_limit_analytic: f64::NAN,
        sup_err_bulk: f64::NAN,
        sup_err_global: f64::NAN,
        grad_lp_err: f64::NAN,
        iterations: 0,
        converged: false,
        flux_balance: f64::NAN,
        cells: 0,
        error: Some(err.to_string()),
    }
}

fn sweep_point(
    config: &SweepConfig,
    eps_req: f64,
    tau: f64,
    mesh_opts: &MeshOptions,
    solve_opts: &SolveOptions,
    keep_state: bool,
) -> Result<SweepResult> {
    let d = 2u32;
    let p = config.p;
    let gamma = gamma_exponent(d, p)?;
    let n = circle_count_for_eps(eps_req);
    let anchors = anchors_circle(n);
    let eps = anchors.eps;
    let alpha_raw = tau * eps.powf(1.0 / gamma);
    let alpha_cap = ALPHA_GEOMETRY_MAX / config.shape.outradius();
    let alpha = alpha_raw.min(alpha_cap);
    let alpha_capped = alpha < alpha_raw;
    let cavity = CavitySpec {
        shape: config.shape.clone(),
        rotation: config.rotation,
    };
    let domain = build_perforation(&anchors, alpha, &cavity, config.r_outer, p)?;
    let mesh = mesh_perforated_ball(&domain, config.h_far, config.h_near_factor, mesh_opts)?;
    let mut bc = crate::solver::BoundaryValues::new();
    bc.insert(BoundaryTag::Outer, 0.0);
    for e in &mesh.boundary_edges {
        if let BoundaryTag::Cavity(_) = e.tag {
            bc.insert(e.tag, 1.0);
        }
    }
    let report = solve_dirichlet(&mesh, &bc, p, solve_opts)?;

    let potential = cavity_potential(&domain, mesh_opts, solve_opts)?;
    let sigma = sigma_estimate(&anchors);
    let cap_k = match &config.shape {
        CavityShape::Ball => ball_capacity(d, p, 1.0, f64::INFINITY)?.value,
        _ => match &potential {
            CavityPotential::Solved { cap_ref, .. } => *cap_ref,
            CavityPotential::BallClosedForm => unreachable!(),
        },
    };
    let cap_rel = ball_capacity(d, p, 1.0, config.r_outer)?.value;
    let a_r = a_star(Tau::Finite(tau), sigma, cap_k, cap_rel, d, p);
    let cap_limit = limit_capacity(Tau::Finite(tau), sigma, cap_k, cap_rel, d, p);

    let ansatz_valid = alpha * config.shape.outradius() < 0.1;
    let ansatz_field = if ansatz_valid {
        let spec = AnsatzSpec::new(a_r, &domain, AnsatzMode::Ball)?;
        Some(build_ansatz(&spec, &mesh, &potential)?)
    } else {
        None
    };

    // probe shells exclude the neighborhood of the unit sphere where the
    // convergence is not uniform
    let sampler = FieldSampler::new(&mesh);
    let delta = config.probe_delta;
    let mut sup_err_bulk = 0.0f64;
    for shell in [1.0 - delta, 1.0 + delta, (1.0 + config.r_outer) / 2.0] {
        let target = a_r * equilibrium_profile_ball(shell, 0.0, config.r_outer, gamma)?;
        for v in sampler.sample_circle(&report.field, [0.0, 0.0], shell, 720) {
            sup_err_bulk = sup_err_bulk.max((v - target).abs());
        }
    }
    let support = eps / 10.0;
    let (sup_err_global, grad_lp_err) = if let Some(ansatz_field) = &ansatz_field {
        let mut sup = 0.0f64;
        for (v, &pos) in mesh.vertices.iter().enumerate() {
            let near = domain.instances.iter().any(|inst| {
                (pos[0] - inst.center[0]).powi(2) + (pos[1] - inst.center[1]).powi(2)
                    < support * support
            });
            if !near {
                sup = sup.max((report.field.values[v] - ansatz_field.values[v]).abs());
            }
        }
        let geom = cell_geometry(&mesh);
        let lp = lp_gradient_distance(&mesh, &geom, &report.field, ansatz_field, p)?;
        (sup, lp)
    } else {
        (f64::NAN, f64::NAN)
    };

    let row = SweepRow {
        eps_requested: eps_req,
        eps,
        n_anchors: n,
        tau,
        alpha,
        alpha_capped,
        a_r_analytic: a_r,
        ansatz_valid,
        cap_numeric: report.energy,
        cap_limit_analytic: cap_limit,
        sup_err_bulk,
        sup_err_global,
        grad_lp_err,
        iterations: report.iterations,
        converged: report.converged,
        flux_balance: report.flux_balance,
        cells: mesh.cells.len(),
        error: None,
    };
    let state = if keep_state {
        Some(SweepState {
            domain,
            mesh,
            report,
            ansatz_field,
        })
    } else {
        None
    };
    Ok(SweepResult { row, state })
}

/// Run the critical-window sweep over the (eps, tau) grid. Failures are
/// recorded per row and do not abort the sweep. Results are sorted by
/// (eps, tau) regardless of scheduling.
pub fn run_critical_sweep(
    config: &SweepConfig,
    mesh_opts: &MeshOptions,
    solve_opts: &SolveOptions,
    keep_state: bool,
) -> Vec<SweepResult> {
    let mut points = Vec::new();
    for &eps in &config.eps_values {
        for &tau in &config.tau_values {
            points.push((eps, tau));
        }
    }
    let mut results: Vec<SweepResult> = points
        .par_iter()
        .map(|&(eps, tau)| {
            sweep_point(config, eps, tau, mesh_opts, solve_opts, keep_state).unwrap_or_else(
                |err| SweepResult {
                    row: failed_row(eps, tau, &err),
                    state: None,
                },
            )
        })
        .collect();
    results.sort_by(|a, b| {
        (a.row.eps_requested, a.row.tau)
            .partial_cmp(&(b.row.eps_requested, b.row.tau))
            .unwrap()
    });
    results
}

// ---------------------------------------------------------------------------
// separation study
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeparationConfig {
    pub p: f64,
    pub eps: f64,
    pub tau1: f64,
    pub delta_values: Vec<f64>,
    pub h_far: f64,
    pub h_near_factor: f64,
    pub seed: u64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            p: 1.5,
            eps: 0.1,
            tau1: 0.125,
            delta_values: vec![0.05, 0.1, 0.2],
            h_far: 0.08,
            h_near_factor: 0.5,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationRow {
    pub delta: f64,
    pub eps: f64,
    pub tau1: f64,
    pub alpha: f64,
    pub n_anchors: usize,
    /// sup of w over the spheres of radius eps/20 around anchors.
    pub d_sup: f64,
    /// sup over the spheres of radius eps/10.
    pub f_sup: f64,
    /// sup over the sphere of radius 1 + eps/5.
    pub g_sup: f64,
    /// sup over the domain minus the eps/10 balls.
    pub sup_omega_tenth: f64,
    pub converged: bool,
    pub cells: usize,
    pub error: Option<String>,
}

fn separation_point(
    config: &SeparationConfig,
    delta: f64,
    mesh_opts: &MeshOptions,
    solve_opts: &SolveOptions,
) -> Result<SeparationRow> {
    let p = config.p;
    let gamma = gamma_exponent(2, p)?;
    let n = circle_count_for_eps(config.eps);
    let anchors = anchors_circle(n);
    let eps = anchors.eps;
    let alpha = (config.tau1 * eps.powf(1.0 / gamma)).min(1.0 / 80.0);
    let cavity = CavitySpec {
        shape: CavityShape::Ball,
        rotation: RotationRule::Identity,
    };
    let domain = build_perforation(&anchors, alpha, &cavity, 1.0 + delta, p)?;
    let mesh = mesh_perforated_ball(
        &domain,
        config.h_far.min(delta / 2.0),
        config.h_near_factor,
        mesh_opts,
    )?;
    let mut bc = crate::solver::BoundaryValues::new();
    bc.insert(BoundaryTag::Outer, 0.0);
    for e in &mesh.boundary_edges {
        if let BoundaryTag::Cavity(_) = e.tag {
            bc.insert(e.tag, 1.0);
        }
    }
    let report = solve_dirichlet(&mesh, &bc, p, solve_opts)?;
    let sampler = FieldSampler::new(&mesh);
    let sup_on_anchor_circles = |radius: f64| -> f64 {
        let mut sup = 0.0f64;
        for inst in &domain.instances {
            for v in sampler.sample_circle(&report.field, inst.center, radius, 64) {
                sup = sup.max(v);
            }
        }
        sup
    };
    let d_sup = sup_on_anchor_circles(eps / 20.0);
    let f_sup = sup_on_anchor_circles(eps / 10.0);
    let mut g_sup = 0.0f64;
    for v in sampler.sample_circle(&report.field, [0.0, 0.0], 1.0 + eps / 5.0, 1440) {
        g_sup = g_sup.max(v);
    }
    let support = eps / 10.0;
    let mut sup_omega = 0.0f64;
    for (v, &pos) in mesh.vertices.iter().enumerate() {
        let near = domain.instances.iter().any(|inst| {
            (pos[0] - inst.center[0]).powi(2) + (pos[1] - inst.center[1]).powi(2)
                < support * support
        });
        if !near {
            sup_omega = sup_omega.max(report.field.values[v]);
        }
    }
    Ok(SeparationRow {
        delta,
        eps,
        tau1: config.tau1,
        alpha,
        n_anchors: n,
        d_sup,
        f_sup,
        g_sup,
        sup_omega_tenth: sup_omega,
        converged: report.converged,
        cells: mesh.cells.len(),
        error: None,
    })
}

/// Solve the separation problem (0 on `|x| = 1 + delta`, 1 on the cavity
/// spheres) for each delta and measure the nested-boundary sups.
pub fn run_separation(
    config: &SeparationConfig,
    mesh_opts: &MeshOptions,
    solve_opts: &SolveOptions,
) -> Vec<SeparationRow> {
    let mut rows: Vec<SeparationRow> = config
        .delta_values
        .par_iter()
        .map(|&delta| {
            separation_point(config, delta, mesh_opts, solve_opts).unwrap_or_else(|err| {
                SeparationRow {
                    delta,
                    eps: f64::NAN,
                    tau1: config.tau1,
                    alpha: f64::NAN,
                    n_anchors: 0,
                    d_sup: f64::NAN,
                    f_sup: f64::NAN,
                    g_sup: f64::NAN,
                    sup_omega_tenth: f64::NAN,
                    converged: false,
                    cells: 0,
                    error: Some(err.to_string()),
                }
            })
        })
        .collect();
    rows.sort_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap());
    rows
}

/// Least-squares fit of `y = c x` through the origin plus the R^2 of the
/// fit; used for the `F ~ c delta` scaling check.
pub fn fit_through_origin(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let c = sxy / sxx;
    let mean_y: f64 = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - c * x).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (c, r2)
}

// ---------------------------------------------------------------------------
// cone energy diagnostics
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeSpec {
    /// Direction (radians) of the cap center on the unit circle.
    pub angle: f64,
    /// Euclidean radius of the spherical cap; >= 2 means the full sphere.
    pub delta: f64,
    pub r0: f64,
    pub r1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeMargin {
    pub spec: ConeSpec,
    /// Measured inf of the field on the inner cap.
    pub a_tilde: f64,
    pub bound: f64,
    pub energy: f64,
    /// (energy - bound) / bound.
    pub margin_rel: f64,
}

/// Energy over the cells that can intersect the truncated cone; the
/// selection covers the exact cone, so the sharp lower bound applies to the
/// sum.
fn covering_cone_energy(mesh: &Mesh, field: &Field, p: f64, spec: &ConeSpec) -> f64 {
    let geom = cell_geometry(mesh);
    let half_angle = if spec.delta >= 2.0 {
        std::f64::consts::PI
    } else {
        2.0 * (spec.delta / 2.0).asin()
    };
    let mut energy = 0.0;
    for (c, cell) in mesh.cells.iter().enumerate() {
        let pts = cell.map(|v| mesh.vertices[v]);
        let mut r_min = f64::INFINITY;
        let mut r_max = 0.0f64;
        let mut diam = 0.0f64;
        for i in 0..3 {
            let r = (pts[i][0].powi(2) + pts[i][1].powi(2)).sqrt();
            r_min = r_min.min(r);
            r_max = r_max.max(r);
            let j = (i + 1) % 3;
            let e = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            diam = diam.max(e);
        }
        if r_max + diam < spec.r0 || r_min - diam > spec.r1 {
            continue;
        }
        if half_angle < std::f64::consts::PI {
            let mut any_angular = false;
            for pt in &pts {
                let theta = pt[1].atan2(pt[0]);
                let mut dtheta = theta - spec.angle;
                while dtheta > std::f64::consts::PI {
                    dtheta -= 2.0 * std::f64::consts::PI;
                }
                while dtheta < -std::f64::consts::PI {
                    dtheta += 2.0 * std::f64::consts::PI;
                }
                let r = (pt[0].powi(2) + pt[1].powi(2)).sqrt().max(1e-12);
                if dtheta.abs() <= half_angle + diam / r {
                    any_angular = true;
                    break;
                }
            }
            if !any_angular {
                continue;
            }
        }
        let gu = crate::solver::cell_gradient(&geom, cell, c, &field.values);
        energy += geom.areas[c] * (gu[0] * gu[0] + gu[1] * gu[1]).sqrt().powf(p);
    }
    energy
}

/// Compare cone energies of a solved field against the sharp radial lower
/// bound with the measured inner-cap infimum.
pub fn run_cone_diagnostic(
    mesh: &Mesh,
    field: &Field,
    p: f64,
    cones: &[ConeSpec],
) -> Result<Vec<ConeMargin>> {
    let d = 2u32;
    let gamma = gamma_exponent(d, p)?;
    let sampler = FieldSampler::new(mesh);
    let mut out = Vec::with_capacity(cones.len());
    for spec in cones {
        let half_angle = if spec.delta >= 2.0 {
            std::f64::consts::PI
        } else {
            2.0 * (spec.delta / 2.0).asin()
        };
        // measured inf over the inner cap
        let mut a_tilde = f64::INFINITY;
        let samples = 256;
        for k in 0..samples {
            let t =
                spec.angle - half_angle + (2.0 * half_angle) * (k as f64 + 0.5) / samples as f64;
            if let Some(v) = sampler.sample(field, [spec.r0 * t.cos(), spec.r0 * t.sin()]) {
                a_tilde = a_tilde.min(v);
            }
        }
        if !a_tilde.is_finite() {
            return Err(Error::Solve("cone cap has no sample points".into()));
        }
        a_tilde = a_tilde.max(0.0);
        let mu_q = cap_measure(d, spec.delta);
        let bound = cone_energy_truncated(a_tilde, spec.r0, spec.r1, mu_q, gamma, p, d)?;
        let energy = covering_cone_energy(mesh, field, p, spec);
        let margin_rel = if bound > 0.0 {
            (energy - bound) / bound
        } else {
            0.0
        };
        out.push(ConeMargin {
            spec: spec.clone(),
            a_tilde,
            bound,
            energy,
            margin_rel,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:?}")
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "eps_requested,eps,n_anchors,tau,alpha,alpha_capped,a_r_analytic,ansatz_valid,cap_numeric,\
         cap_limit_analytic,sup_err_bulk,sup_err_global,grad_lp_err,iterations,converged,\
         flux_balance,cells,error\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.eps_requested),
            fmt_f64(r.eps),
            r.n_anchors,
            fmt_f64(r.tau),
            fmt_f64(r.alpha),
            r.alpha_capped,
            fmt_f64(r.a_r_analytic),
            r.ansatz_valid,
            fmt_f64(r.cap_numeric),
            fmt_f64(r.cap_limit_analytic),
            fmt_f64(r.sup_err_bulk),
            fmt_f64(r.sup_err_global),
            fmt_f64(r.grad_lp_err),
            r.iterations,
            r.converged,
            fmt_f64(r.flux_balance),
            r.cells,
            r.error.as_deref().unwrap_or(""),
        ));
    }
    out
}

pub fn separation_csv(rows: &[SeparationRow]) -> String {
    let mut out = String::from(
        "delta,eps,tau1,alpha,n_anchors,d_sup,f_sup,g_sup,sup_omega_tenth,converged,cells,error\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.delta),
            fmt_f64(r.eps),
            fmt_f64(r.tau1),
            fmt_f64(r.alpha),
            r.n_anchors,
            fmt_f64(r.d_sup),
            fmt_f64(r.f_sup),
            fmt_f64(r.g_sup),
            fmt_f64(r.sup_omega_tenth),
            r.converged,
            r.cells,
            r.error.as_deref().unwrap_or(""),
        ));
    }
    out
}

pub fn cone_csv(margins: &[ConeMargin]) -> String {
    let mut out = String::from("angle,delta,r0,r1,a_tilde,bound,energy,margin_rel\n");
    for m in margins {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(m.spec.angle),
            fmt_f64(m.spec.delta),
            fmt_f64(m.spec.r0),
            fmt_f64(m.spec.r1),
            fmt_f64(m.a_tilde),
            fmt_f64(m.bound),
            fmt_f64(m.energy),
            fmt_f64(m.margin_rel),
        ));
    }
    out
}

/// Run manifest: configuration echo, seed, config hash, crate version.
pub fn manifest_json(config: &serde_json::Value, seed: u64) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let hash = fnv1a(canonical.as_bytes());
    let manifest = serde_json::json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config_hash": format!("{hash:016x}"),
        "config": config,
    });
    serde_json::to_string_pretty(&manifest).expect("manifest serializes")
}

pub fn write_text(path: &std::path::Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Minimal SVG rendering of a field: per-cell fill by value plus level-set
/// polylines at the given iso-values.
pub fn field_svg(mesh: &Mesh, field: &Field, levels: &[f64]) -> String {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for v in &mesh.vertices {
        min[0] = min[0].min(v[0]);
        min[1] = min[1].min(v[1]);
        max[0] = max[0].max(v[0]);
        max[1] = max[1].max(v[1]);
    }
    let size = 900.0;
    let span = (max[0] - min[0]).max(max[1] - min[1]);
    let sx = |x: f64| (x - min[0]) / span * size;
    let sy = |y: f64| (max[1] - y) / span * size;
    let mut out =
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {size} {size}\">\n");
    for cell in &mesh.cells {
        let v = (field.values[cell[0]] + field.values[cell[1]] + field.values[cell[2]]) / 3.0;
        let t = v.clamp(0.0, 1.0);
        let r = (255.0 * t) as u8;
        let b = (255.0 * (1.0 - t)) as u8;
        let g = (96.0 + 64.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8;
        out.push_str(&format!(
            "<polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"rgb({r},{g},{b})\"/>\n",
            sx(mesh.vertices[cell[0]][0]),
            sy(mesh.vertices[cell[0]][1]),
            sx(mesh.vertices[cell[1]][0]),
            sy(mesh.vertices[cell[1]][1]),
            sx(mesh.vertices[cell[2]][0]),
            sy(mesh.vertices[cell[2]][1]),
        ));
    }
    // level sets: one segment per cell crossed by the iso-value
    for &level in levels {
        out.push_str("<g stroke=\"black\" stroke-width=\"0.6\">\n");
        for cell in &mesh.cells {
            let vals = cell.map(|v| field.values[v]);
            let mut crossings: Vec<[f64; 2]> = Vec::new();
            for i in 0..3 {
                let (a, b) = (vals[i], vals[(i + 1) % 3]);
                if (a - level) * (b - level) < 0.0 {
                    let t = (level - a) / (b - a);
                    let pa = mesh.vertices[cell[i]];
                    let pb = mesh.vertices[cell[(i + 1) % 3]];
                    crossings.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
                }
            }
            if crossings.len() == 2 {
                out.push_str(&format!(
                    "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>\n",
                    sx(crossings[0][0]),
                    sy(crossings[0][1]),
                    sx(crossings[1][0]),
                    sy(crossings[1][1]),
                ));
            }
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_annulus;

    fn quick_mesh_opts() -> MeshOptions {
        MeshOptions::default()
    }

    fn quick_solve_opts() -> SolveOptions {
        SolveOptions::default()
    }

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            p: 1.5,
            r_outer: 2.0,
            eps_values: vec![0.45],
            tau_values: vec![0.2],
            shape: CavityShape::Ball,
            rotation: RotationRule::Identity,
            h_far: 0.3,
            h_near_factor: 0.5,
            probe_delta: 0.2,
            seed: 1,
        }
    }

    #[test]
    fn tiny_sweep_row_invariants() {
        let results = run_critical_sweep(&tiny_config(), &quick_mesh_opts(), &quick_solve_opts(), false);
        assert_eq!(results.len(), 1);
        let row = &results[0].row;
        assert!(row.error.is_none(), "row failed: {:?}", row.error);
        assert!(row.converged);
        let cap_upper = ball_capacity(2, 1.5, 1.0 + row.eps, 2.0).unwrap().value;
        assert!(row.cap_numeric > 0.0 && row.cap_numeric <= cap_upper * 1.01);
        assert!(row.sup_err_bulk >= 0.0 && row.sup_err_global >= 0.0);
        assert!(row.grad_lp_err >= 0.0);
        assert!(row.a_r_analytic > 0.0 && row.a_r_analytic < 1.0);
    }

    #[test]
    fn sweep_csv_deterministic_and_header_only() {
        assert!(sweep_csv(&[]).ends_with("error\n"));
        let a = run_critical_sweep(&tiny_config(), &quick_mesh_opts(), &quick_solve_opts(), false);
        let b = run_critical_sweep(&tiny_config(), &quick_mesh_opts(), &quick_solve_opts(), false);
        let csv_a = sweep_csv(&a.iter().map(|r| r.row.clone()).collect::<Vec<_>>());
        let csv_b = sweep_csv(&b.iter().map(|r| r.row.clone()).collect::<Vec<_>>());
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn separation_ordering_small() {
        let config = SeparationConfig {
            eps: 0.3,
            delta_values: vec![0.2],
            h_far: 0.1,
            ..SeparationConfig::default()
        };
        let rows = run_separation(&config, &quick_mesh_opts(), &quick_solve_opts());
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(r.g_sup <= r.f_sup + 1e-9, "G {} F {}", r.g_sup, r.f_sup);
        assert!(r.f_sup <= r.d_sup + 1e-9, "F {} D {}", r.f_sup, r.d_sup);
        assert!(r.d_sup <= 1.0 + 1e-9);
        assert!(r.sup_omega_tenth <= r.f_sup + 1e-6);
    }

    #[test]
    fn cone_margin_on_radial_control() {
        // full-sphere cone spanning the whole annulus reproduces the
        // capacity: energy equals bound at the continuum level
        let p = 1.5;
        let mesh = mesh_annulus(0.5, 2.0, 0.01, 0.06, &quick_mesh_opts()).unwrap();
        let mut bc = crate::solver::BoundaryValues::new();
        bc.insert(BoundaryTag::Cavity(0), 1.0);
        bc.insert(BoundaryTag::Outer, 0.0);
        let report = solve_dirichlet(&mesh, &bc, p, &quick_solve_opts()).unwrap();
        let cones = vec![ConeSpec {
            angle: 0.0,
            delta: 2.0,
            r0: 0.5,
            r1: 2.0,
        }];
        let margins = run_cone_diagnostic(&mesh, &report.field, p, &cones).unwrap();
        let m = &margins[0];
        assert!((1.0 - 1e-3..=1.0).contains(&m.a_tilde));
        assert!(
            m.margin_rel.abs() < 0.005,
            "radial control margin {}",
            m.margin_rel
        );
        // zero inf gives a zero bound and a nonnegative margin
        let zero = run_cone_diagnostic(
            &mesh,
            &Field::constant(&mesh, 0.0),
            p,
            &[ConeSpec {
                angle: 1.0,
                delta: 0.5,
                r0: 1.0,
                r1: 2.0,
            }],
        )
        .unwrap();
        assert_eq!(zero[0].bound, 0.0);
        assert!(zero[0].energy >= 0.0);
    }

    #[test]
    fn fit_through_origin_recovers_slope() {
        let xs = [0.05, 0.1, 0.2];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        let (c, r2) = fit_through_origin(&xs, &ys);
        assert!((c - 3.0).abs() < 1e-12);
        assert!(r2 > 0.999999);
    }

    #[test]
    fn manifest_and_svg_smoke() {
        let config = serde_json::json!({"p": 1.5, "kind": "sweep"});
        let m1 = manifest_json(&config, 7);
        let m2 = manifest_json(&config, 7);
        assert_eq!(m1, m2);
        assert!(m1.contains("config_hash"));

        let mesh = mesh_annulus(0.5, 2.0, 0.1, 0.4, &quick_mesh_opts()).unwrap();
        let field = Field::from_fn(&mesh, |x| {
            1.0 - ((x[0] * x[0] + x[1] * x[1]).sqrt() - 0.5) / 1.5
        });
        let svg = field_svg(&mesh, &field, &[0.25, 0.5, 0.75]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<line"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
