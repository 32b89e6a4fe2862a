use sievecap::analytic::*;
use sievecap::ansatz::*;
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
    for &(eps_req, hf, hnf, segs, slope) in &[
        (0.1f64, 0.2f64, 0.25f64, 64usize, 0.3f64),
        (0.05, 0.2, 0.25, 64, 0.3),
        (0.025, 0.2, 0.25, 64, 0.3),
        (0.1, 0.2, 0.2, 64, 0.25),
        (0.025, 0.2, 0.2, 64, 0.25),
    ] {
        let n = circle_count_for_eps(eps_req);
        let anchors = anchors_circle(n);
        let eps = anchors.eps;
        let alpha = tau * eps.powf(1.0 / gamma);
        let cavity = CavitySpec { shape: CavityShape::Ball, rotation: RotationRule::Identity };
        let domain = build_perforation(&anchors, alpha, &cavity, r_outer, p).unwrap();
        let mut mo = MeshOptions::default();
        mo.cavity_segments = segs;
        mo.grading_slope = slope;
        let mesh = mesh_perforated_ball(&domain, hf, hnf, &mo).unwrap();
        let mut bc = BoundaryValues::new();
        bc.insert(BoundaryTag::Outer, 0.0);
        for e in &mesh.boundary_edges {
            if let BoundaryTag::Cavity(_) = e.tag { bc.insert(e.tag, 1.0); }
        }
        let report = solve_dirichlet(&mesh, &bc, p, &SolveOptions::default()).unwrap();
        let sampler = FieldSampler::new(&mesh);
        let sigma = sigma_estimate(&anchors);
        let a_r = a_star(Tau::Finite(tau), sigma, cap_k, cap_rel, 2, p);
        // analytic finite-eps argmin
        let pot = CavityPotential::BallClosedForm;
        let (bulk_part, cav_part) = ansatz_energy_parts(&domain, AnsatzMode::Ball, &pot).unwrap();
        let a_fin = a_star_from_parts(cav_part, bulk_part, p);
        // discrete argmin from assembled parts at A = 0 and A = 1
        let s0 = AnsatzSpec::new(0.0, &domain, AnsatzMode::Ball).unwrap();
        let s1 = AnsatzSpec::new(1.0, &domain, AnsatzMode::Ball).unwrap();
        let e0 = ansatz_energy_assembled(&s0, &mesh, &pot).unwrap();
        let e1 = ansatz_energy_assembled(&s1, &mesh, &pot).unwrap();
        let a_disc = a_star_from_parts(e0.cavity_part, e1.bulk_part, p);
        // per-shell diagnostics
        print!("eps={eps:.4} N={n} cells={} segs={segs} hnf={hnf} | A_R={a_r:.4} A_fin={a_fin:.4} A_disc={a_disc:.4}", mesh.cells.len());
        for shell in [0.8f64, 1.2, 1.5] {
            let target = a_r * equilibrium_profile_ball(shell, 0.0, r_outer, gamma).unwrap();
            let vals = sampler.sample_circle(&report.field, [0.0, 0.0], shell, 720);
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let sup = vals.iter().map(|v| (v - target).abs()).fold(0.0f64, f64::max);
            let w0 = equilibrium_profile_ball(shell, 0.0, r_outer, gamma).unwrap();
            print!(" | t={shell}: sup={sup:.4} mean_amp={:.4}", mean / w0);
        }
        println!(" | kappa_disc/kappa_closed={:.4}, bulk_disc/bulk_closed={:.4}",
            e0.cavity_part / cav_part, e1.bulk_part / bulk_part);
    }
}
