//! Anchor sets on the unit sphere and the cavity cloud they carry.
//!
//! Anchors are eps-separated unit vectors; each anchor holds a scaled copy of
//! a reference cavity shape. The realized cloud is what gets meshed and what
//! the equilibrium potential is pinned to.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::cap_measure;
use crate::{Error, Result};

/// An eps-separated set of unit vectors on S^(d-1), d in {2,3}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnchorSet {
    pub dim: u32,
    /// Declared separation; actual pairwise distances are at least this.
    pub eps: f64,
    pub points: Vec<[f64; 3]>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Check unit norms (1e-12) and pairwise separation against `eps`.
    pub fn check_invariants(&self) -> Result<()> {
        for (i, pt) in self.points.iter().enumerate() {
            let n = norm(pt);
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::Geometry(format!(
                    "anchor {i} has norm {n}, expected 1"
                )));
            }
        }
        if self.points.len() >= 2 {
            let min = min_separation(self)?;
            if min < self.eps * (1.0 - 1e-12) {
                return Err(Error::Geometry(format!(
                    "min separation {min} below declared eps {}",
                    self.eps
                )));
            }
        }
        Ok(())
    }

    /// CSV serialization: `index,x1,..,xd` per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let cols: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        out.push_str(&format!("index,{}\n", cols.join(",")));
        for (i, pt) in self.points.iter().enumerate() {
            let coords: Vec<String> = (0..self.dim as usize).map(|k| format!("{:?}", pt[k])).collect();
            out.push_str(&format!("{i},{}\n", coords.join(",")));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        file.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn norm(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm(&d)
}

/// N equally spaced anchors on the unit circle; separation `2 sin(pi/N)`.
pub fn anchors_circle(n: usize) -> AnchorSet {
    assert!(n >= 2, "need at least two anchors");
    let points = (0..n)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n as f64;
            [theta.cos(), theta.sin(), 0.0]
        })
        .collect();
    AnchorSet {
        dim: 2,
        eps: 2.0 * (PI / n as f64).sin(),
        points,
    }
}

/// Largest anchor count whose equal spacing still separates by `eps`,
/// i.e. the maximal N with `2 sin(pi/N) >= eps`.
pub fn circle_count_for_eps(eps: f64) -> usize {
    assert!(eps > 0.0 && eps < 2.0);
    (PI / (eps / 2.0).asin()).floor() as usize
}

fn unit_candidate(dim: u32, rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let y: f64 = rng.gen_range(-1.0..1.0);
        let z: f64 = if dim == 3 { rng.gen_range(-1.0..1.0) } else { 0.0 };
        let n = (x * x + y * y + z * z).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return [x / n, y / n, z / n];
        }
    }
}

/// Dense deterministic test grid on the sphere at roughly the given spacing.
/// d=2: equal angles; d=3: icosahedral refinement.
pub fn sphere_test_grid(dim: u32, spacing: f64) -> Vec<[f64; 3]> {
    match dim {
        2 => {
            let n = ((2.0 * PI / spacing).ceil() as usize).max(8);
            (0..n)
                .map(|k| {
                    let theta = 2.0 * PI * k as f64 / n as f64;
                    [theta.cos(), theta.sin(), 0.0]
                })
                .collect()
        }
        3 => icosphere_vertices(spacing),
        _ => panic!("test grid supports d in {{2,3}}"),
    }
}

/// Vertices of an icosahedron refined until edge length drops below
/// `spacing`, projected to the sphere.
fn icosphere_vertices(spacing: f64) -> Vec<[f64; 3]> {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0], [1.0, phi, 0.0], [-1.0, -phi, 0.0], [1.0, -phi, 0.0],
        [0.0, -1.0, phi], [0.0, 1.0, phi], [0.0, -1.0, -phi], [0.0, 1.0, -phi],
        [phi, 0.0, -1.0], [phi, 0.0, 1.0], [-phi, 0.0, -1.0], [-phi, 0.0, 1.0],
    ];
    for v in verts.iter_mut() {
        let n = norm(v);
        *v = [v[0] / n, v[1] / n, v[2] / n];
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let mut edge_len = dist(&verts[0], &verts[11]);
    while edge_len > spacing && verts.len() < 2_000_000 {
        let mut midpoint_cache: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>, cache: &mut std::collections::HashMap<(usize, usize), usize>| {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    let m = [
                        (verts[a][0] + verts[b][0]) / 2.0,
                        (verts[a][1] + verts[b][1]) / 2.0,
                        (verts[a][2] + verts[b][2]) / 2.0,
                    ];
                    let n = norm(&m);
                    verts.push([m[0] / n, m[1] / n, m[2] / n]);
                    verts.len() - 1
                })
            };
            let ab = mid(f[0], f[1], &mut verts, &mut midpoint_cache);
            let bc = mid(f[1], f[2], &mut verts, &mut midpoint_cache);
            let ca = mid(f[2], f[0], &mut verts, &mut midpoint_cache);
            new_faces.push([f[0], ab, ca]);
            new_faces.push([f[1], bc, ab]);
            new_faces.push([f[2], ca, bc]);
            new_faces.push([ab, bc, ca]);
        }
        faces = new_faces;
        edge_len /= 2.0;
    }
    verts
}

/// Maximal eps-separated anchor set by greedy insertion from a seeded
/// stream, topped up from a deterministic grid of spacing eps/4 so that no
/// grid candidate can be added afterwards.
pub fn anchors_greedy(dim: u32, eps: f64, seed: u64) -> Result<AnchorSet> {
    if !(dim == 2 || dim == 3) {
        return Err(Error::Geometry(format!("greedy anchors support d in {{2,3}}, got {dim}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Geometry(format!("eps = {eps} must be in (0,1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted: Vec<[f64; 3]> = Vec::new();
    let accepts = |accepted: &[[f64; 3]], c: &[f64; 3]| accepted.iter().all(|a| dist(a, c) >= eps);

    // stream phase: stop after a long run of rejections
    let area = if dim == 2 { 2.0 * PI } else { 4.0 * PI };
    let budget = (40.0 * area / eps.powi(dim as i32 - 1)).ceil() as usize;
    let mut misses = 0usize;
    for _ in 0..budget {
        let c = unit_candidate(dim, &mut rng);
        if accepts(&accepted, &c) {
            accepted.push(c);
            misses = 0;
        } else {
            misses += 1;
            if misses > 5000 {
                break;
            }
        }
    }
    // top-up phase: make the set maximal against the test grid
    for c in sphere_test_grid(dim, eps / 4.0) {
        if accepts(&accepted, &c) {
            accepted.push(c);
        }
    }
    Ok(AnchorSet {
        dim,
        eps,
        points: accepted,
    })
}

/// Exact minimum pairwise distance.
pub fn min_separation(anchors: &AnchorSet) -> Result<f64> {
    if anchors.len() < 2 {
        return Err(Error::Geometry("min separation needs at least 2 anchors".into()));
    }
    let mut min = f64::INFINITY;
    for i in 0..anchors.points.len() {
        for j in (i + 1)..anchors.points.len() {
            min = min.min(dist(&anchors.points[i], &anchors.points[j]));
        }
    }
    Ok(min)
}

/// Density estimate `eps^(d-1) |S|` using the declared separation.
pub fn sigma_estimate(anchors: &AnchorSet) -> f64 {
    assert!(!anchors.is_empty());
    anchors.eps.powi(anchors.dim as i32 - 1) * anchors.len() as f64
}

/// Equidistribution check: max over sampled caps of
/// `|fraction of anchors in cap - mu(cap)|`, caps of radius 0.1/0.2/0.4
/// centered at seeded points.
pub fn equidistribution_discrepancy(anchors: &AnchorSet, n_test_caps: usize, seed: u64) -> f64 {
    assert!(n_test_caps >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = anchors.len() as f64;
    let mut worst: f64 = 0.0;
    for _ in 0..n_test_caps {
        let center = unit_candidate(anchors.dim, &mut rng);
        for &delta in &[0.1, 0.2, 0.4] {
            let inside = anchors
                .points
                .iter()
                .filter(|p| dist(p, &center) < delta)
                .count() as f64;
            let mu = cap_measure(anchors.dim, delta);
            worst = worst.max((inside / n - mu).abs());
        }
    }
    worst
}

/// Reference cavity shape, normalized to sit inside the closed unit ball.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CavityShape {
    /// The closed unit ball itself.
    Ball,
    /// Axis-aligned square of the given half-width (at most 1/sqrt(2)).
    Square { half_width: f64 },
    /// Simple polygon with vertices inside the closed unit ball (d=2 only).
    Polygon { vertices: Vec<[f64; 2]> },
}

impl CavityShape {
    /// Radius of the smallest origin-centered ball containing the shape.
    pub fn outradius(&self) -> f64 {
        match self {
            CavityShape::Ball => 1.0,
            CavityShape::Square { half_width } => half_width * std::f64::consts::SQRT_2,
            CavityShape::Polygon { vertices } => vertices
                .iter()
                .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
                .fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.outradius();
        if r <= 0.0 {
            return Err(Error::Geometry("cavity shape has no extent".into()));
        }
        if r > 1.0 + 1e-12 {
            return Err(Error::Geometry(format!(
                "cavity shape must fit in the closed unit ball (outradius {r})"
            )));
        }
        if let CavityShape::Polygon { vertices } = self {
            if vertices.len() < 3 {
                return Err(Error::Geometry("polygon cavity needs >= 3 vertices".into()));
            }
        }
        Ok(())
    }

    /// Boundary polyline of the shape in its reference frame, with at least
    /// `min_segments` segments (balls) or 8 per side (squares).
    pub fn boundary_polygon(&self, min_segments: usize) -> Vec<[f64; 2]> {
        match self {
            CavityShape::Ball => {
                let n = min_segments.max(32);
                (0..n)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / n as f64;
                        [t.cos(), t.sin()]
                    })
                    .collect()
            }
            CavityShape::Square { half_width } => {
                let per_side = (min_segments / 4).max(8);
                let h = *half_width;
                let mut pts = Vec::with_capacity(4 * per_side);
                let corners = [[h, h], [-h, h], [-h, -h], [h, -h]];
                for side in 0..4 {
                    let a = corners[side];
                    let b = corners[(side + 1) % 4];
                    for k in 0..per_side {
                        let t = k as f64 / per_side as f64;
                        pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    }
                }
                pts
            }
            CavityShape::Polygon { vertices } => vertices.clone(),
        }
    }
}

/// Per-anchor rotation rule for cavity copies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum RotationRule {
    Identity,
    /// Rotate so the reference x-axis points along the outward radial
    /// direction of the anchor.
    RadialAlign,
    /// Angle drawn from a hash of (seed, anchor index); reproducible.
    SeededRandom { seed: u64 },
}

/// Cavity specification: reference shape plus rotation rule.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CavitySpec {
    pub shape: CavityShape,
    pub rotation: RotationRule,
}

/// One realized cavity: `anchor + alpha eps R_theta(shape)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CavityInstance {
    pub anchor_index: usize,
    pub center: [f64; 2],
    /// Length scale `alpha * eps`.
    pub scale: f64,
    pub rotation_angle: f64,
}

impl CavityInstance {
    /// Signed distance to the cavity boundary (negative inside), for the
    /// given reference shape.
    pub fn signed_distance(&self, shape: &CavityShape, x: [f64; 2]) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        // rotate into the reference frame
        let (s, c) = self.rotation_angle.sin_cos();
        let u = (c * dx + s * dy) / self.scale;
        let v = (-s * dx + c * dy) / self.scale;
        let local = match shape {
            CavityShape::Ball => (u * u + v * v).sqrt() - 1.0,
            CavityShape::Square { half_width } => {
                let qx = u.abs() - half_width;
                let qy = v.abs() - half_width;
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                outside + qx.max(qy).min(0.0)
            }
            CavityShape::Polygon { vertices } => polygon_signed_distance(vertices, [u, v]),
        };
        local * self.scale
    }
}

fn polygon_signed_distance(vertices: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = vertices.len();
    let mut dist2 = f64::INFINITY;
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = [p[0] - a[0], p[1] - a[1]];
        let t = ((w[0] * e[0] + w[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
        let d = [w[0] - t * e[0], w[1] - t * e[1]];
        dist2 = dist2.min(d[0] * d[0] + d[1] * d[1]);
        // even-odd ray crossing
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if x_cross > p[0] {
                inside = !inside;
            }
        }
    }
    let d = dist2.sqrt();
    if inside {
        -d
    } else {
        d
    }
}

/// The full perforated domain: anchors, cavity cloud and scales.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerforatedDomain {
    pub anchors: AnchorSet,
    pub cavity: CavitySpec,
    pub alpha: f64,
    pub eps: f64,
    pub r_outer: f64,
    pub d: u32,
    pub p: f64,
    pub instances: Vec<CavityInstance>,
    /// Set when `alpha` exceeds the 1/80 convention of the construction.
    pub alpha_warning: bool,
}

impl PerforatedDomain {
    pub fn cavity_scale(&self) -> f64 {
        self.alpha * self.eps
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("perforation serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("perforation JSON: {e}")))
    }
}

fn rotation_angle(rule: RotationRule, anchor: &[f64; 3], index: usize) -> f64 {
    match rule {
        RotationRule::Identity => 0.0,
        RotationRule::RadialAlign => anchor[1].atan2(anchor[0]),
        RotationRule::SeededRandom { seed } => {
            // splitmix64 of (seed, index), mapped to [0, 2pi)
            let mut z = seed ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 * PI
        }
    }
}

/// Realize the cavity cloud `union of (s + alpha eps K_s)` over the anchors.
///
/// Errors when cavity bounding balls overlap or scales degenerate; exceeding
/// `alpha = 1/80` only sets a warning flag, since disjointness is what the
/// geometry actually needs.
pub fn build_perforation(
    anchors: &AnchorSet,
    alpha: f64,
    cavity: &CavitySpec,
    r_outer: f64,
    p: f64,
) -> Result<PerforatedDomain> {
    cavity.shape.validate()?;
    if anchors.dim != 2 {
        return Err(Error::Geometry(
            "perforation realization is two-dimensional; use d = 2 anchors".into(),
        ));
    }
    anchors.check_invariants()?;
    let eps = anchors.eps;
    let scale = alpha * eps;
    if !(alpha > 0.0) || scale < 1e-300 {
        return Err(Error::Geometry(format!(
            "cavity scale alpha*eps = {scale} must be positive"
        )));
    }
    if r_outer <= 1.0 + scale {
        return Err(Error::Geometry(format!(
            "outer radius {r_outer} must exceed 1 + alpha*eps = {}",
            1.0 + scale
        )));
    }
    let out_r = cavity.shape.outradius() * scale;
    let instances: Vec<CavityInstance> = anchors
        .points
        .iter()
        .enumerate()
        .map(|(i, s)| CavityInstance {
            anchor_index: i,
            center: [s[0], s[1]],
            scale,
            rotation_angle: rotation_angle(cavity.rotation, s, i),
        })
        .collect();
    // disjointness of bounding balls
    for i in 0..instances.len() {
        for j in (i + 1)..instances.len() {
            let gap = dist(
                &[instances[i].center[0], instances[i].center[1], 0.0],
                &[instances[j].center[0], instances[j].center[1], 0.0],
            );
            if gap < 2.0 * out_r {
                return Err(Error::Geometry(format!(
                    "cavities {i} and {j} overlap: centers {gap} apart, bounding radius {out_r}"
                )));
            }
        }
    }
    Ok(PerforatedDomain {
        anchors: anchors.clone(),
        cavity: cavity.clone(),
        alpha,
        eps,
        r_outer,
        d: 2,
        p,
        instances,
        alpha_warning: alpha > 1.0 / 80.0,
    })
}
