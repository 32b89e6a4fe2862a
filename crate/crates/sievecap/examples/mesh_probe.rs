use sievecap::geometry::*;
use sievecap::mesh::*;
use std::time::Instant;

fn main() {
    for &eps in &[0.1f64, 0.05, 0.025] {
        let n = circle_count_for_eps(eps);
        let anchors = anchors_circle(n);
        let tau = 0.102175f64;
        let gamma = 4.0;
        let alpha = tau * eps.powf(1.0 / gamma);
        let spec = CavitySpec { shape: CavityShape::Ball, rotation: RotationRule::Identity };
        let dom = build_perforation(&anchors, alpha, &spec, 2.0, 1.2).unwrap();
        let t0 = Instant::now();
        let mesh = mesh_perforated_ball(&dom, 0.25, 0.5, &MeshOptions::default()).unwrap();
        println!(
            "eps={eps} N={n} alpha*eps={:.2e} verts={} cells={} minangle={:.1} time={:.2?}",
            alpha * eps, mesh.vertices.len(), mesh.cells.len(), mesh.min_angle_deg(), t0.elapsed()
        );
    }
    // A9 extremes
    for &(eps, alpha) in &[(0.1f64, 5.745e-4f64), (0.1, 0.45)] {
        let n = circle_count_for_eps(eps);
        let anchors = anchors_circle(n);
        let spec = CavitySpec { shape: CavityShape::Ball, rotation: RotationRule::Identity };
        let dom = build_perforation(&anchors, alpha, &spec, 2.0, 1.2).unwrap();
        let t0 = Instant::now();
        let mesh = mesh_perforated_ball(&dom, 0.25, 0.5, &MeshOptions::default()).unwrap();
        println!(
            "eps={eps} alpha={alpha} verts={} cells={} minangle={:.1} time={:.2?}",
            mesh.vertices.len(), mesh.cells.len(), mesh.min_angle_deg(), t0.elapsed()
        );
    }
}
