use sievecap::analytic::*;
use sievecap::ansatz::*;
use sievecap::experiments::window_center_tau;
use sievecap::geometry::*;
use sievecap::mesh::*;
use sievecap::solver::*;
use std::time::Instant;

fn main() {
    let p = 1.2f64;
    let gamma = 4.0;
    let tau = window_center_tau(2, p, 2.0);
    let r_outer = 2.0;
    let cap_rel = ball_capacity(2, p, 1.0, r_outer).unwrap().value;
    let cap_k = ball_capacity(2, p, 1.0, f64::INFINITY).unwrap().value;
    for &(eps_req, hnf, segs, slope) in &[
        (0.1f64, 0.25f64, 64usize, 0.3f64),
        (0.05, 0.25, 64, 0.3),
        (0.025, 0.25, 64, 0.3),
    ] {
        let t0 = Instant::now();
        let anchors = anchors_greedy(2, eps_req, 1).unwrap();
        let eps = eps_req;
        let alpha = tau * eps.powf(1.0 / gamma);
        let cavity = CavitySpec { shape: CavityShape::Ball, rotation: RotationRule::Identity };
        let domain = build_perforation(&anchors, alpha, &cavity, r_outer, p).unwrap();
        let mut mo = MeshOptions::default();
        mo.cavity_segments = segs;
        mo.grading_slope = slope;
        let mesh = mesh_perforated_ball(&domain, 0.2, hnf, &mo).unwrap();
        let mut bc = BoundaryValues::new();
        bc.insert(BoundaryTag::Outer, 0.0);
        for e in &mesh.boundary_edges {
            if let BoundaryTag::Cavity(_) = e.tag { bc.insert(e.tag, 1.0); }
        }
        let report = solve_dirichlet(&mesh, &bc, p, &SolveOptions::default()).unwrap();
        let sampler = FieldSampler::new(&mesh);
        let sigma = sigma_estimate(&anchors);
        let a_r = a_star(Tau::Finite(tau), sigma, cap_k, cap_rel, 2, p);
        let cap_limit = limit_capacity(Tau::Finite(tau), sigma, cap_k, cap_rel, 2, p);
        let mut sup_bulk = 0.0f64;
        for shell in [0.8f64, 1.2, 1.5] {
            let target = a_r * equilibrium_profile_ball(shell, 0.0, r_outer, gamma).unwrap();
            for v in sampler.sample_circle(&report.field, [0.0, 0.0], shell, 720) {
                sup_bulk = sup_bulk.max((v - target).abs());
            }
        }
        // ansatz metrics
        let pot = CavityPotential::BallClosedForm;
        let spec = AnsatzSpec::new(a_r, &domain, AnsatzMode::Ball).unwrap();
        let w_field = build_ansatz(&spec, &mesh, &pot).unwrap();
        let support = eps / 10.0;
        let mut sup_global = 0.0f64;
        for (v, &pos) in mesh.vertices.iter().enumerate() {
            let near = domain.instances.iter().any(|inst| {
                (pos[0]-inst.center[0]).powi(2)+(pos[1]-inst.center[1]).powi(2) < support*support });
            if !near { sup_global = sup_global.max((report.field.values[v]-w_field.values[v]).abs()); }
        }
        let geom = cell_geometry(&mesh);
        let lp = lp_gradient_distance(&mesh, &geom, &report.field, &w_field, p).unwrap();
        println!(
            "eps={eps:.4} N={} sigma={sigma:.4} cells={} A_R={a_r:.4} cap_num={:.5} cap_lim={:.5} |diff|={:.4e} sup_bulk={:.4e} sup_glob={:.4e} lp={:.3e} conv={} t={:.1?}",
            anchors.len(), mesh.cells.len(), report.energy, cap_limit,
            (report.energy-cap_limit).abs(), sup_bulk, sup_global, lp, report.converged, t0.elapsed()
        );
    }
}
