use sievecap::analytic::*;
use sievecap::experiments::*;
use sievecap::geometry::CavityShape;
use sievecap::geometry::RotationRule;
use sievecap::mesh::MeshOptions;
use sievecap::solver::SolveOptions;
use std::time::Instant;

fn main() {
    let p = 1.2;
    let tau_c = window_center_tau(2, p, 2.0);
    println!("window center tau = {tau_c:.6}");
    let config = SweepConfig {
        p,
        r_outer: 2.0,
        eps_values: vec![0.1, 0.05, 0.025],
        tau_values: vec![tau_c],
        shape: CavityShape::Ball,
        rotation: RotationRule::Identity,
        h_far: 0.25,
        h_near_factor: 0.5,
        probe_delta: 0.2,
        seed: 1,
    };
    let t0 = Instant::now();
    let results = run_critical_sweep(&config, &MeshOptions::default(), &SolveOptions::default(), false);
    for r in results.iter().map(|r| &r.row) {
        println!(
            "eps={:.3} N={} cells={} alpha={:.4} A_R={:.4} cap_num={:.5} cap_lim={:.5} |diff|={:.3e} sup_bulk={:.4e} sup_glob={:.4e} gradlp={:.3e} iters={} conv={} t={:?}",
            r.eps, r.n_anchors, r.cells, r.alpha, r.a_r_analytic, r.cap_numeric, r.cap_limit_analytic,
            (r.cap_numeric - r.cap_limit_analytic).abs(), r.sup_err_bulk, r.sup_err_global, r.grad_lp_err,
            r.iterations, r.converged, t0.elapsed()
        );
    }
    // A9 endpoints at eps = 0.1
    for &scale in &[0.01f64, 100.0] {
        let tau = tau_c * scale;
        let config9 = SweepConfig {
            tau_values: vec![tau],
            eps_values: vec![0.1],
            ..config.clone()
        };
        let t1 = Instant::now();
        let res = run_critical_sweep(&config9, &MeshOptions::default(), &SolveOptions::default(), false);
        let r = &res[0].row;
        let eps_actual = if r.eps.is_nan() { 0.1 } else { r.eps };
        let cap_rel_1eps = ball_capacity(2, p, 1.0 + eps_actual, 2.0).unwrap().value;
        let cap_rel = ball_capacity(2, p, 1.0, 2.0).unwrap().value;
        println!(
            "A9 tau={:.4} (x{scale}) alpha={:.5} capped={} cells={} cap_num={:.5} vs cap_rel={:.5} ratio={:.4} vs cap(1+eps)={:.5} ratio={:.4} err={:?} t={:?}",
            tau, r.alpha, r.alpha_capped, r.cells, r.cap_numeric, cap_rel, r.cap_numeric / cap_rel,
            cap_rel_1eps, r.cap_numeric / cap_rel_1eps, r.error, t1.elapsed()
        );
    }
}
