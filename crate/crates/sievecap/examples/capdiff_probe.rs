use sievecap::analytic::*;
use sievecap::experiments::window_center_tau;
use sievecap::geometry::*;
use sievecap::mesh::*;
use sievecap::solver::*;

fn main() {
    let p = 1.2f64;
    let gamma = 4.0;
    let tau = window_center_tau(2, p, 2.0);
    let r_outer = 2.0;
    let cap_rel = ball_capacity(2, p, 1.0, r_outer).unwrap().value;
    let cap_k = ball_capacity(2, p, 1.0, f64::INFINITY).unwrap().value;
    for &eps_req in &[0.1f64, 0.05, 0.025] {
        for &(hnf, segs, slope) in &[(0.35f64, 48usize, 0.5f64), (0.25, 64, 0.3), (0.18, 80, 0.22)] {
            let n = circle_count_for_eps(eps_req);
            let anchors = anchors_circle(n);
            let eps = anchors.eps;
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
            let sigma = sigma_estimate(&anchors);
            let cap_limit = limit_capacity(Tau::Finite(tau), sigma, cap_k, cap_rel, 2, p);
            // discrete kappa overshoot for reference
            let kappa_closed = ball_capacity(2, p, domain.cavity_scale(), eps / 10.0).unwrap().value;
            let pot = sievecap::ansatz::CavityPotential::BallClosedForm;
            let s0 = sievecap::ansatz::AnsatzSpec::new(0.0, &domain, sievecap::ansatz::AnsatzMode::Ball).unwrap();
            let e0 = sievecap::ansatz::ansatz_energy_assembled(&s0, &mesh, &pot).unwrap();
            let dk = e0.cavity_part / (n as f64 * kappa_closed) - 1.0;
            println!(
                "eps={eps:.4} hnf={hnf} slope={slope} cells={} dkappa={:.4}% cap_num={:.6} cap_lim={:.6} diff={:.5}",
                mesh.cells.len(), dk * 100.0, report.energy, cap_limit, (report.energy - cap_limit).abs()
            );
        }
    }
}
