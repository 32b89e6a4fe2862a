//! Graded conforming triangulations of a disk with circular or polygonal
//! holes.
//!
//! The generator is a constrained Bowyer-Watson triangulation (exact
//! predicates via the `robust` crate) driven by Ruppert-style refinement:
//! encroached boundary segments are split, skinny or oversized interior
//! triangles get their circumcenter inserted, and a 1-Lipschitz-slope size
//! field provides the grading from cavity scale up to the far field. Circle
//! boundaries are refined by arc midpoints so boundary vertices stay on the
//! true circle.
//!
//! [`refine`] is a separate nested bisection (red/green/blue with straight
//! midpoints) so that refinement enlarges the P1 trial space: per-level
//! capacity energies then decrease monotonically.

use std::collections::HashMap;

use robust::{incircle, orient2d, Coord};
use serde::{Deserialize, Serialize};

use crate::geometry::{CavityShape, PerforatedDomain};
use crate::{Error, Result};

pub const QUALITY_FLOOR_DEG: f64 = 18.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Outer,
    Cavity(usize),
}

impl std::fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryTag::Outer => write!(f, "OUTER"),
            BoundaryTag::Cavity(k) => write!(f, "CAVITY({k})"),
        }
    }
}

impl BoundaryTag {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "OUTER" {
            Ok(BoundaryTag::Outer)
        } else if let Some(inner) = s.strip_prefix("CAVITY(").and_then(|r| r.strip_suffix(')')) {
            inner
                .parse::<usize>()
                .map(BoundaryTag::Cavity)
                .map_err(|e| Error::Mesh(format!("bad boundary tag {s}: {e}")))
        } else {
            Err(Error::Mesh(format!("unknown boundary tag {s}")))
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub tag: BoundaryTag,
}

/// Boundary geometry, used for arc-midpoint projection while meshing and
/// retained for point classification afterwards.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Curve {
    Circle { center: [f64; 2], radius: f64 },
    Polygon { points: Vec<[f64; 2]> },
}

impl Curve {
    fn split_point(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        match self {
            Curve::Circle { center, radius } => {
                let dx = mid[0] - center[0];
                let dy = mid[1] - center[1];
                let n = (dx * dx + dy * dy).sqrt();
                if n < 1e-14 * radius {
                    // antipodal chord; cannot happen for rings of >= 8 points
                    mid
                } else {
                    [center[0] + radius * dx / n, center[1] + radius * dy / n]
                }
            }
            Curve::Polygon { .. } => mid,
        }
    }
}

/// Target edge length: minimum over graded sources, capped by `h_far`.
/// Each source prescribes `h` on a disk and grows linearly with `slope`
/// beyond it, so adjacent target lengths never differ by more than the
/// ratio `1 + slope`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SizeField {
    pub h_far: f64,
    pub slope: f64,
    pub sources: Vec<SizeSource>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SizeSource {
    pub center: [f64; 2],
    pub radius: f64,
    pub h: f64,
}

impl SizeField {
    pub fn uniform(h_far: f64) -> Self {
        SizeField {
            h_far,
            slope: 0.5,
            sources: Vec::new(),
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let mut h = self.h_far;
        for s in &self.sources {
            let dist = ((x[0] - s.center[0]).powi(2) + (x[1] - s.center[1]).powi(2)).sqrt();
            h = h.min(s.h + self.slope * (dist - s.radius).max(0.0));
        }
        h
    }
}

/// A hole to carve out of the disk.
#[derive(Clone, Debug)]
pub struct Hole {
    pub curve: Curve,
    /// Index reported in the `Cavity(..)` boundary tag.
    pub tag_index: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub cells: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Size field the mesh was generated with.
    pub grading: SizeField,
    /// Boundary geometry per tag, for point classification.
    pub curves: Vec<(BoundaryTag, Curve)>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct MeshOptions {
    pub min_angle_deg: f64,
    pub max_vertices: usize,
    /// Minimum segments for a ball cavity ring.
    pub cavity_segments: usize,
    /// Minimum segments for the outer circle.
    pub outer_segments: usize,
    /// Size-field growth slope; adjacent target lengths differ by at most
    /// the ratio 1 + slope, capped at 0.5.
    pub grading_slope: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions {
            min_angle_deg: 21.0,
            max_vertices: 1_500_000,
            cavity_segments: 32,
            outer_segments: 64,
            grading_slope: 0.5,
        }
    }
}

// ---------------------------------------------------------------------------
// constrained Delaunay structure
// ---------------------------------------------------------------------------

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
enum VLabel {
    Super,
    /// On boundary curve (0 = outer, k+1 = hole k).
    Ring(u32),
    Interior,
}

#[derive(Clone, Copy)]
struct Tri {
    v: [u32; 3],
    /// Neighbor across the edge opposite vertex i.
    nbr: [u32; 3],
    /// Constraint curve id per edge (NONE if unconstrained).
    cons: [u32; 3],
    alive: bool,
}

struct Dt {
    pts: Vec<[f64; 2]>,
    labels: Vec<VLabel>,
    tris: Vec<Tri>,
    free: Vec<u32>,
    vert_tri: Vec<u32>,
    hint: u32,
    // scratch for cavity search
    stamp: Vec<u32>,
    generation: u32,
}

fn coord(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

impl Dt {
    fn new(half_extent: f64) -> Self {
        let m = half_extent;
        let pts = vec![[-m, -m], [m, -m], [m, m], [-m, m]];
        let labels = vec![VLabel::Super; 4];
        let tris = vec![
            Tri {
                v: [0, 1, 2],
                nbr: [NONE, 1, NONE],
                cons: [NONE; 3],
                alive: true,
            },
            Tri {
                v: [0, 2, 3],
                nbr: [NONE, NONE, 0],
                cons: [NONE; 3],
                alive: true,
            },
        ];
        Dt {
            pts,
            labels,
            tris,
            free: Vec::new(),
            vert_tri: vec![0, 0, 0, 1],
            hint: 0,
            stamp: vec![0, 0],
            generation: 0,
        }
    }

    fn p(&self, v: u32) -> [f64; 2] {
        self.pts[v as usize]
    }

    fn orient(&self, a: u32, b: u32, p: [f64; 2]) -> f64 {
        orient2d(coord(self.p(a)), coord(self.p(b)), coord(p))
    }

    /// Walk from the hint to the triangle containing `p`.
    fn locate(&self, p: [f64; 2]) -> Result<u32> {
        let mut t = if (self.hint as usize) < self.tris.len() && self.tris[self.hint as usize].alive
        {
            self.hint
        } else {
            self.any_alive()
        };
        for _ in 0..self.tris.len() + 16 {
            let tri = &self.tris[t as usize];
            let mut moved = false;
            for i in 0..3 {
                let a = tri.v[(i + 1) % 3];
                let b = tri.v[(i + 2) % 3];
                if self.orient(a, b, p) < 0.0 {
                    if tri.nbr[i] == NONE {
                        return Err(Error::Mesh("point located outside triangulation".into()));
                    }
                    t = tri.nbr[i];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return Ok(t);
            }
        }
        Err(Error::Mesh("point location did not terminate".into()))
    }

    fn any_alive(&self) -> u32 {
        self.tris
            .iter()
            .position(|t| t.alive)
            .expect("triangulation nonempty") as u32
    }

    fn in_circle(&self, t: u32, p: [f64; 2]) -> f64 {
        let tri = &self.tris[t as usize];
        incircle(
            coord(self.p(tri.v[0])),
            coord(self.p(tri.v[1])),
            coord(self.p(tri.v[2])),
            coord(p),
        )
    }

    fn edge_index(&self, t: u32, a: u32, b: u32) -> Option<usize> {
        let tri = &self.tris[t as usize];
        (0..3).find(|&i| {
            let x = tri.v[(i + 1) % 3];
            let y = tri.v[(i + 2) % 3];
            (x == a && y == b) || (x == b && y == a)
        })
    }

    /// Grow the Bowyer-Watson cavity of `p` from the seed triangles; returns
    /// (cavity triangles, boundary fan records). Constrained edges stop the
    /// growth. Boundary records are (a, b, outer neighbor, constraint id)
    /// with (a, b) directed counterclockwise in the dropped triangle.
    fn cavity(&mut self, p: [f64; 2], seeds: &[u32]) -> (Vec<u32>, Vec<(u32, u32, u32, u32)>) {
        self.generation += 1;
        let gen = self.generation;
        if self.stamp.len() < self.tris.len() {
            self.stamp.resize(self.tris.len(), 0);
        }
        let mut cav = Vec::new();
        let mut stack: Vec<u32> = Vec::new();
        for &s in seeds {
            if self.stamp[s as usize] != gen {
                self.stamp[s as usize] = gen;
                stack.push(s);
                cav.push(s);
            }
        }
        let mut boundary = Vec::new();
        while let Some(t) = stack.pop() {
            for i in 0..3 {
                let tri = self.tris[t as usize];
                let n = tri.nbr[i];
                let a = tri.v[(i + 1) % 3];
                let b = tri.v[(i + 2) % 3];
                let grow = n != NONE
                    && tri.cons[i] == NONE
                    && self.stamp[n as usize] != gen
                    && self.in_circle(n, p) > 0.0;
                if grow {
                    self.stamp[n as usize] = gen;
                    stack.push(n);
                    cav.push(n);
                } else if n == NONE || (self.stamp[n as usize] != gen) {
                    boundary.push((a, b, n, tri.cons[i]));
                }
            }
        }
        (cav, boundary)
    }

    fn alloc(&mut self, t: Tri) -> u32 {
        if let Some(id) = self.free.pop() {
            self.tris[id as usize] = t;
            id
        } else {
            self.tris.push(t);
            if self.stamp.len() < self.tris.len() {
                self.stamp.push(0);
            }
            (self.tris.len() - 1) as u32
        }
    }

    /// Retriangulate a cavity around the new vertex; returns new triangles.
    fn fill_cavity(
        &mut self,
        vnew: u32,
        cav: Vec<u32>,
        boundary: Vec<(u32, u32, u32, u32)>,
    ) -> Vec<u32> {
        for &t in &cav {
            self.tris[t as usize].alive = false;
            self.free.push(t);
        }
        let mut created = Vec::with_capacity(boundary.len());
        let mut by_first: HashMap<u32, (u32, usize)> = HashMap::new(); // a -> (tri, pos)
        for (k, &(a, b, outer, cons)) in boundary.iter().enumerate() {
            let t = self.alloc(Tri {
                v: [vnew, a, b],
                nbr: [outer, NONE, NONE],
                cons: [cons, NONE, NONE],
                alive: true,
            });
            if outer != NONE {
                let o = &mut self.tris[outer as usize];
                for i in 0..3 {
                    let x = o.v[(i + 1) % 3];
                    let y = o.v[(i + 2) % 3];
                    if (x == b && y == a) || (x == a && y == b) {
                        o.nbr[i] = t;
                    }
                }
            }
            created.push(t);
            by_first.insert(a, (t, k));
            self.vert_tri[a as usize] = t;
            self.vert_tri[b as usize] = t;
        }
        // link fan sides: triangle with edge (vnew, a) pairs the one ending at a
        for &(a, b, _, _) in &boundary {
            let (t, _) = by_first[&a];
            // edge (b, vnew) of t (opposite vertex a, index 1) pairs with the
            // triangle whose first edge vertex is b
            if let Some(&(t2, _)) = by_first.get(&b) {
                self.tris[t as usize].nbr[1] = t2;
                self.tris[t2 as usize].nbr[2] = t;
            }
        }
        self.vert_tri[vnew as usize] = created[0];
        self.hint = created[0];
        created
    }

    /// Insert a point whose cavity is seeded at the containing triangle.
    /// Returns the new triangles, or None if the point duplicates an
    /// existing vertex.
    fn insert(&mut self, p: [f64; 2], label: VLabel, seeds: &[u32]) -> Option<Vec<u32>> {
        let seeds = seeds.to_vec();
        // duplicate guard against the seed triangles' vertices
        for &s in &seeds {
            for &v in &self.tris[s as usize].v {
                let q = self.p(v);
                if (q[0] - p[0]).abs() < 1e-15 && (q[1] - p[1]).abs() < 1e-15 {
                    return None;
                }
            }
        }
        let (cav, boundary) = self.cavity(p, &seeds);
        let vnew = self.pts.len() as u32;
        self.pts.push(p);
        self.labels.push(label);
        self.vert_tri.push(0);
        Some(self.fill_cavity(vnew, cav, boundary))
    }

    /// Constraint ids on the boundary of the would-be cavity of `p`.
    fn cavity_constraints(&mut self, p: [f64; 2], seed: u32) -> Vec<(u32, u32, u32)> {
        let (_, boundary) = self.cavity(p, &[seed]);
        boundary
            .into_iter()
            .filter(|&(_, _, _, c)| c != NONE)
            .map(|(a, b, _, c)| (a, b, c))
            .collect()
    }

    fn set_constraint(&mut self, tri_ids: &[u32], a: u32, b: u32, cons: u32) {
        for &t in tri_ids {
            if !self.tris[t as usize].alive {
                continue;
            }
            if let Some(i) = self.edge_index(t, a, b) {
                self.tris[t as usize].cons[i] = cons;
            }
        }
    }

    /// Find one alive triangle containing the directed or undirected edge.
    fn find_edge(&self, a: u32, b: u32) -> Option<(u32, usize)> {
        // rotate around vertex a
        let start = self.vert_tri[a as usize];
        if (start as usize) >= self.tris.len() || !self.tris[start as usize].alive {
            // fallback: scan
            for (id, t) in self.tris.iter().enumerate() {
                if t.alive {
                    if let Some(i) = self.edge_index(id as u32, a, b) {
                        return Some((id as u32, i));
                    }
                }
            }
            return None;
        }
        let mut t = start;
        let mut iterations = 0;
        loop {
            if let Some(i) = self.edge_index(t, a, b) {
                return Some((t, i));
            }
            // rotate: move to the neighbor across the edge following a
            let tri = &self.tris[t as usize];
            let ia = (0..3).find(|&i| tri.v[i] == a)?;
            let next = tri.nbr[(ia + 1) % 3];
            if next == NONE {
                break;
            }
            t = next;
            iterations += 1;
            if t == start || iterations > 1024 {
                break;
            }
        }
        // hit a boundary while rotating; scan as a fallback
        for (id, t) in self.tris.iter().enumerate() {
            if t.alive {
                if let Some(i) = self.edge_index(id as u32, a, b) {
                    return Some((id as u32, i));
                }
            }
        }
        None
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// `p` strictly inside the diametral circle of (a, b).
fn encroaches(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    (a[0] - p[0]) * (b[0] - p[0]) + (a[1] - p[1]) * (b[1] - p[1]) < 0.0
}

fn circumcenter(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<[f64; 2]> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-300 {
        return None;
    }
    let a2 = a[0] * a[0] + a[1] * a[1];
    let b2 = b[0] * b[0] + b[1] * b[1];
    let c2 = c[0] * c[0] + c[1] * c[1];
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    let cc = [ux, uy];
    if cc[0].is_finite() && cc[1].is_finite() {
        Some(cc)
    } else {
        None
    }
}

fn tri_min_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let la = dist2(b, c).sqrt();
    let lb = dist2(a, c).sqrt();
    let lc = dist2(a, b).sqrt();
    let angle = |opp: f64, s1: f64, s2: f64| {
        ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2))
            .clamp(-1.0, 1.0)
            .acos()
    };
    angle(la, lb, lc)
        .min(angle(lb, la, lc))
        .min(angle(lc, la, lb))
}

// ---------------------------------------------------------------------------
// generator
// ---------------------------------------------------------------------------

struct Builder {
    dt: Dt,
    curves: Vec<Curve>, // 0 = outer circle, then holes
    holes: Vec<Hole>,
    size: SizeField,
    quality_b: f64, // circumradius / shortest-edge bound
    max_vertices: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Class {
    Outside,
    InHole,
    Domain,
}

impl Builder {
    fn classify(&self, t: u32) -> Class {
        let tri = &self.dt.tris[t as usize];
        let mut ring: Option<u32> = None;
        let mut all_ring = true;
        for &v in &tri.v {
            match self.dt.labels[v as usize] {
                VLabel::Super => return Class::Outside,
                VLabel::Ring(c) => match ring {
                    None => ring = Some(c),
                    Some(r) if r == c => {}
                    _ => all_ring = false,
                },
                VLabel::Interior => all_ring = false,
            }
        }
        if all_ring {
            if let Some(c) = ring {
                if c == 0 {
                    return Class::Domain; // disk is convex
                }
                let hole = &self.holes[c as usize - 1];
                return match &hole.curve {
                    Curve::Circle { .. } => Class::InHole,
                    Curve::Polygon { points } => {
                        let cm = self.centroid(t);
                        if point_in_polygon(points, cm) {
                            Class::InHole
                        } else {
                            Class::Domain
                        }
                    }
                };
            }
        }
        Class::Domain
    }

    fn centroid(&self, t: u32) -> [f64; 2] {
        let tri = &self.dt.tris[t as usize];
        let (a, b, c) = (
            self.dt.p(tri.v[0]),
            self.dt.p(tri.v[1]),
            self.dt.p(tri.v[2]),
        );
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Split the constrained edge (a, b) with curve projection; returns the
    /// new triangles.
    fn split_segment(&mut self, a: u32, b: u32, cons: u32) -> Result<Vec<u32>> {
        let (t, i) = self
            .dt
            .find_edge(a, b)
            .ok_or_else(|| Error::Mesh("constrained edge vanished".into()))?;
        let pa = self.dt.p(a);
        let pb = self.dt.p(b);
        let m = self.curves[cons as usize].split_point(pa, pb);
        let n = self.dt.tris[t as usize].nbr[i];
        // clear the constraint on both sides so the cavity can absorb it
        self.dt.tris[t as usize].cons[i] = NONE;
        let mut seeds = vec![t];
        if n != NONE {
            if let Some(j) = self.dt.edge_index(n, a, b) {
                self.dt.tris[n as usize].cons[j] = NONE;
            }
            seeds.push(n);
        }
        let label = VLabel::Ring(cons);
        let created = match self.dt.insert(m, label, &seeds) {
            Some(c) => c,
            None => return Err(Error::Mesh("segment split produced duplicate point".into())),
        };
        let vm = (self.dt.pts.len() - 1) as u32;
        self.dt.set_constraint(&created, a, vm, cons);
        self.dt.set_constraint(&created, vm, b, cons);
        // the halves must exist in the fan
        if self.dt.find_edge(a, vm).is_none() || self.dt.find_edge(vm, b).is_none() {
            return Err(Error::Mesh("segment split lost a half-edge".into()));
        }
        Ok(created)
    }

    /// Split any constrained edge of the triangle whose diametral circle
    /// contains the opposite apex; returns true if a split happened.
    fn fix_apex_encroachment(&mut self, t: u32, out: &mut Vec<u32>) -> Result<bool> {
        let tri = self.dt.tris[t as usize];
        for i in 0..3 {
            if tri.cons[i] == NONE {
                continue;
            }
            let a = tri.v[(i + 1) % 3];
            let b = tri.v[(i + 2) % 3];
            let apex = tri.v[i];
            if encroaches(self.dt.p(a), self.dt.p(b), self.dt.p(apex)) {
                let created = self.split_segment(a, b, tri.cons[i])?;
                out.extend(created);
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn is_bad(&self, t: u32) -> bool {
        if !self.dt.tris[t as usize].alive || self.classify(t) != Class::Domain {
            return false;
        }
        let tri = &self.dt.tris[t as usize];
        let (a, b, c) = (
            self.dt.p(tri.v[0]),
            self.dt.p(tri.v[1]),
            self.dt.p(tri.v[2]),
        );
        let shortest = dist2(a, b).min(dist2(b, c)).min(dist2(a, c)).sqrt();
        let longest = dist2(a, b).max(dist2(b, c)).max(dist2(a, c)).sqrt();
        let cc = match circumcenter(a, b, c) {
            Some(cc) => cc,
            None => return true,
        };
        let cr = dist2(cc, a).sqrt();
        if cr / shortest > self.quality_b {
            return true;
        }
        let h = self.size.eval(self.centroid(t));
        longest > h
    }

    /// Insert the circumcenter of a bad triangle, or split a constrained
    /// edge that blocks or is encroached by it. New triangles are appended.
    fn treat_bad(&mut self, t: u32, out: &mut Vec<u32>) -> Result<()> {
        if self.fix_apex_encroachment(t, out)? {
            return Ok(());
        }
        let tri = self.dt.tris[t as usize];
        let (a, b, c) = (
            self.dt.p(tri.v[0]),
            self.dt.p(tri.v[1]),
            self.dt.p(tri.v[2]),
        );
        let cc = match circumcenter(a, b, c) {
            Some(cc) => cc,
            None => {
                // degenerate: split the longest edge in place
                let m = self.centroid(t);
                if let Some(created) = self.dt.insert(m, VLabel::Interior, &[t]) {
                    out.extend(created);
                }
                return Ok(());
            }
        };
        // walk from t toward the circumcenter; a crossed constrained edge
        // gets split instead (the circumcenter would escape the domain)
        match self.walk_to(t, self.centroid(t), cc)? {
            WalkOutcome::Blocked(a, b, cons) => {
                let created = self.split_segment(a, b, cons)?;
                out.extend(created);
                return Ok(());
            }
            WalkOutcome::Reached(seed) => {
                // Ruppert: if the circumcenter encroaches a constrained edge
                // visible from its cavity, split that edge instead
                let blocked = self.dt.cavity_constraints(cc, seed);
                for (ea, eb, cons) in blocked {
                    if encroaches(self.dt.p(ea), self.dt.p(eb), cc) {
                        let created = self.split_segment(ea, eb, cons)?;
                        out.extend(created);
                        return Ok(());
                    }
                }
                if let Some(created) = self.dt.insert(cc, VLabel::Interior, &[seed]) {
                    out.extend(created);
                }
            }
        }
        Ok(())
    }

    fn walk_to(&self, start: u32, from: [f64; 2], to: [f64; 2]) -> Result<WalkOutcome> {
        let mut t = start;
        let mut prev = NONE;
        for _ in 0..self.dt.tris.len() + 16 {
            let tri = &self.dt.tris[t as usize];
            // inside test
            let mut crossed = None;
            for i in 0..3 {
                if tri.nbr[i] == prev && prev != NONE {
                    continue;
                }
                let a = tri.v[(i + 1) % 3];
                let b = tri.v[(i + 2) % 3];
                let pa = self.dt.p(a);
                let pb = self.dt.p(b);
                // does segment from->to properly exit through edge (a,b)?
                let o_to = orient2d(coord(pa), coord(pb), coord(to));
                if o_to < 0.0 {
                    let o_from = orient2d(coord(pa), coord(pb), coord(from));
                    let o1 = orient2d(coord(from), coord(to), coord(pa));
                    let o2 = orient2d(coord(from), coord(to), coord(pb));
                    if o_from >= 0.0 && ((o1 >= 0.0 && o2 <= 0.0) || (o1 <= 0.0 && o2 >= 0.0)) {
                        crossed = Some(i);
                        break;
                    }
                }
            }
            match crossed {
                None => return Ok(WalkOutcome::Reached(t)),
                Some(i) => {
                    let tri = &self.dt.tris[t as usize];
                    if tri.cons[i] != NONE {
                        let a = tri.v[(i + 1) % 3];
                        let b = tri.v[(i + 2) % 3];
                        return Ok(WalkOutcome::Blocked(a, b, tri.cons[i]));
                    }
                    if tri.nbr[i] == NONE {
                        return Ok(WalkOutcome::Reached(t));
                    }
                    prev = t;
                    t = tri.nbr[i];
                }
            }
        }
        Err(Error::Mesh("circumcenter walk did not terminate".into()))
    }
}

enum WalkOutcome {
    Reached(u32),
    Blocked(u32, u32, u32),
}

fn point_in_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if x > p[0] {
                inside = !inside;
            }
        }
    }
    inside
}

/// Triangulate the disk of the given radius minus the holes, graded by the
/// size field.
pub fn triangulate(
    outer_radius: f64,
    holes: &[Hole],
    size: SizeField,
    opts: &MeshOptions,
) -> Result<Mesh> {
    let mut dt = Dt::new(4.0 * outer_radius);

    // ring polylines: outer circle first, then hole boundaries
    let mut rings: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut curves: Vec<Curve> = Vec::new();
    {
        let h_at_outer = size.eval([outer_radius, 0.0]).min(size.h_far);
        let n = ((2.0 * std::f64::consts::PI * outer_radius / h_at_outer).ceil() as usize)
            .max(opts.outer_segments);
        let ring = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [outer_radius * t.cos(), outer_radius * t.sin()]
            })
            .collect();
        rings.push(ring);
        curves.push(Curve::Circle {
            center: [0.0, 0.0],
            radius: outer_radius,
        });
    }
    for hole in holes {
        match &hole.curve {
            Curve::Circle { center, radius } => {
                let n = opts.cavity_segments.max(32);
                let ring = (0..n)
                    .map(|k| {
                        let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                    })
                    .collect();
                rings.push(ring);
            }
            Curve::Polygon { points } => rings.push(points.clone()),
        }
        curves.push(hole.curve.clone());
    }

    // insert ring vertices
    let mut ring_vert_ids: Vec<Vec<u32>> = Vec::new();
    for (ci, ring) in rings.iter().enumerate() {
        let mut ids = Vec::with_capacity(ring.len());
        for &p in ring {
            let seed = dt.locate(p)?;
            match dt.insert(p, VLabel::Ring(ci as u32), &[seed]) {
                Some(_) => ids.push((dt.pts.len() - 1) as u32),
                None => return Err(Error::Mesh("duplicate boundary vertex".into())),
            }
        }
        ring_vert_ids.push(ids);
    }

    // constrain consecutive ring edges (with midpoint recovery if needed)
    for (ci, ids) in ring_vert_ids.iter().enumerate() {
        for k in 0..ids.len() {
            let a = ids[k];
            let b = ids[(k + 1) % ids.len()];
            constrain_edge(&mut dt, &curves, a, b, ci as u32, 0)?;
        }
    }

    let mut builder = Builder {
        dt,
        curves,
        holes: holes.to_vec(),
        size,
        quality_b: 1.0 / (2.0 * opts.min_angle_deg.to_radians().sin()),
        max_vertices: opts.max_vertices,
    };

    // initial apex-encroachment pass over all constrained edges
    let mut queue: Vec<u32> = (0..builder.dt.tris.len() as u32)
        .filter(|&t| builder.dt.tris[t as usize].alive)
        .collect();
    let mut scratch = Vec::new();
    while let Some(t) = queue.pop() {
        if !builder.dt.tris[t as usize].alive {
            continue;
        }
        if builder.classify(t) == Class::Outside {
            continue;
        }
        scratch.clear();
        if builder.fix_apex_encroachment(t, &mut scratch)? {
            queue.extend_from_slice(&scratch);
        }
        if builder.dt.pts.len() > builder.max_vertices {
            return Err(Error::Mesh("vertex budget exhausted in boundary pass".into()));
        }
    }

    // main refinement loop, with a final full rescan to catch stragglers
    loop {
        let mut queue: Vec<u32> = (0..builder.dt.tris.len() as u32)
            .filter(|&t| builder.is_bad(t))
            .collect();
        if queue.is_empty() {
            break;
        }
        while let Some(t) = queue.pop() {
            if !builder.is_bad(t) {
                continue;
            }
            if builder.dt.pts.len() > builder.max_vertices {
                return Err(Error::Mesh(format!(
                    "vertex budget {} exhausted; worst cell min angle {:.2} deg",
                    builder.max_vertices,
                    worst_angle(&builder).to_degrees()
                )));
            }
            scratch.clear();
            builder.treat_bad(t, &mut scratch)?;
            queue.extend_from_slice(&scratch);
        }
    }

    extract(builder, holes, opts)
}

fn constrain_edge(
    dt: &mut Dt,
    curves: &[Curve],
    a: u32,
    b: u32,
    cons: u32,
    depth: usize,
) -> Result<()> {
    if depth > 24 {
        return Err(Error::Mesh("boundary recovery recursion too deep".into()));
    }
    if let Some((t, i)) = dt.find_edge(a, b) {
        dt.tris[t as usize].cons[i] = cons;
        let n = dt.tris[t as usize].nbr[i];
        if n != NONE {
            if let Some(j) = dt.edge_index(n, a, b) {
                dt.tris[n as usize].cons[j] = cons;
            }
        }
        return Ok(());
    }
    // missing edge: insert the split point and recover both halves
    let m = curves[cons as usize].split_point(dt.p(a), dt.p(b));
    let seed = dt.locate(m)?;
    dt.insert(m, VLabel::Ring(cons), &[seed])
        .ok_or_else(|| Error::Mesh("boundary recovery hit duplicate point".into()))?;
    let vm = (dt.pts.len() - 1) as u32;
    constrain_edge(dt, curves, a, vm, cons, depth + 1)?;
    constrain_edge(dt, curves, vm, b, cons, depth + 1)
}

fn worst_angle(builder: &Builder) -> f64 {
    let mut worst = f64::INFINITY;
    for t in 0..builder.dt.tris.len() as u32 {
        if builder.dt.tris[t as usize].alive && builder.classify(t) == Class::Domain {
            let tri = &builder.dt.tris[t as usize];
            let ang = tri_min_angle(
                builder.dt.p(tri.v[0]),
                builder.dt.p(tri.v[1]),
                builder.dt.p(tri.v[2]),
            );
            worst = worst.min(ang);
        }
    }
    worst
}

fn extract(builder: Builder, holes: &[Hole], _opts: &MeshOptions) -> Result<Mesh> {
    let dt = &builder.dt;
    let mut vert_map: Vec<usize> = vec![usize::MAX; dt.pts.len()];
    let mut vertices = Vec::new();
    let mut cells = Vec::new();
    let mut boundary_edges = Vec::new();
    let tag_of = |cons: u32| -> BoundaryTag {
        if cons == 0 {
            BoundaryTag::Outer
        } else {
            BoundaryTag::Cavity(holes[cons as usize - 1].tag_index)
        }
    };
    let mut seen_edges: HashMap<(usize, usize), ()> = HashMap::new();
    for t in 0..dt.tris.len() as u32 {
        if !dt.tris[t as usize].alive || builder.classify(t) != Class::Domain {
            continue;
        }
        let tri = &dt.tris[t as usize];
        let mut ids = [0usize; 3];
        for (k, &v) in tri.v.iter().enumerate() {
            if vert_map[v as usize] == usize::MAX {
                vert_map[v as usize] = vertices.len();
                vertices.push(dt.p(v));
            }
            ids[k] = vert_map[v as usize];
        }
        // enforce counterclockwise orientation
        let (a, b, c) = (vertices[ids[0]], vertices[ids[1]], vertices[ids[2]]);
        if orient2d(coord(a), coord(b), coord(c)) <= 0.0 {
            ids.swap(1, 2);
        }
        cells.push(ids);
        for i in 0..3 {
            if tri.cons[i] != NONE {
                let va = vert_map[tri.v[(i + 1) % 3] as usize];
                let vb = vert_map[tri.v[(i + 2) % 3] as usize];
                let key = (va.min(vb), va.max(vb));
                if seen_edges.insert(key, ()).is_none() {
                    boundary_edges.push(BoundaryEdge {
                        v: [va, vb],
                        tag: tag_of(tri.cons[i]),
                    });
                }
            }
        }
    }
    let mut curves = vec![(BoundaryTag::Outer, builder.curves[0].clone())];
    for (k, h) in holes.iter().enumerate() {
        curves.push((BoundaryTag::Cavity(h.tag_index), builder.curves[k + 1].clone()));
    }
    let mesh = Mesh {
        vertices,
        cells,
        boundary_edges,
        grading: builder.size.clone(),
        curves,
    };
    mesh.check_invariants()?;
    Ok(mesh)
}

// ---------------------------------------------------------------------------
// public mesh API
// ---------------------------------------------------------------------------

/// Graded mesh of the perforated ball `B(0,R) \ Gamma`.
///
/// Target edge length is `h_near_factor * alpha * eps` at cavity boundaries,
/// growing with slope 1/2 up to `h_far`.
pub fn mesh_perforated_ball(
    domain: &PerforatedDomain,
    h_far: f64,
    h_near_factor: f64,
    opts: &MeshOptions,
) -> Result<Mesh> {
    if !(h_far < domain.r_outer / 4.0) {
        return Err(Error::Mesh(format!(
            "h_far = {h_far} must be below R/4 = {}",
            domain.r_outer / 4.0
        )));
    }
    if !(h_near_factor > 0.0 && h_near_factor <= 1.0) {
        return Err(Error::Mesh(format!(
            "h_near_factor = {h_near_factor} must be in (0,1]"
        )));
    }
    let scale = domain.cavity_scale();
    let gap = (domain.eps - 2.0 * scale * domain.cavity.shape.outradius()).max(scale * 0.2);
    let h_near = (h_near_factor * scale).min(0.45 * gap);
    let mut holes = Vec::new();
    let mut sources = Vec::new();
    for inst in &domain.instances {
        let curve = match &domain.cavity.shape {
            CavityShape::Ball => Curve::Circle {
                center: inst.center,
                radius: scale,
            },
            shape => {
                let (sin_t, cos_t) = inst.rotation_angle.sin_cos();
                let pts = shape
                    .boundary_polygon(opts.cavity_segments)
                    .into_iter()
                    .map(|p| {
                        [
                            inst.center[0] + scale * (cos_t * p[0] - sin_t * p[1]),
                            inst.center[1] + scale * (sin_t * p[0] + cos_t * p[1]),
                        ]
                    })
                    .collect();
                Curve::Polygon { points: pts }
            }
        };
        holes.push(Hole {
            curve,
            tag_index: inst.anchor_index,
        });
        sources.push(SizeSource {
            center: inst.center,
            radius: scale * domain.cavity.shape.outradius(),
            h: h_near,
        });
    }
    let size = SizeField {
        h_far,
        slope: opts.grading_slope.clamp(0.05, 0.5),
        sources,
    };
    let mut cavity_opts = *opts;
    // keep ball-cavity boundary segments compatible with the local target
    if let CavityShape::Ball = domain.cavity.shape {
        let circumference = 2.0 * std::f64::consts::PI * scale;
        cavity_opts.cavity_segments = opts
            .cavity_segments
            .max((circumference / h_near).ceil() as usize)
            .max(32);
    }
    triangulate(domain.r_outer, &holes, size, &cavity_opts)
}

/// Mesh of the full disk of radius `r_outer` (no cavities).
pub fn mesh_disk(r_outer: f64, h_far: f64, opts: &MeshOptions) -> Result<Mesh> {
    triangulate(r_outer, &[], SizeField::uniform(h_far), opts)
}

/// Mesh of the annulus `r_in < |x| < r_out`; the inner circle is tagged
/// `Cavity(0)` and graded to `h_in`.
pub fn mesh_annulus(
    r_in: f64,
    r_out: f64,
    h_in: f64,
    h_far: f64,
    opts: &MeshOptions,
) -> Result<Mesh> {
    if !(r_in > 0.0 && r_in < r_out) {
        return Err(Error::Mesh(format!(
            "annulus requires 0 < r_in < r_out, got {r_in}, {r_out}"
        )));
    }
    let n_seg = ((2.0 * std::f64::consts::PI * r_in / h_in).ceil() as usize).max(32);
    let mut o = *opts;
    o.cavity_segments = n_seg;
    let holes = [Hole {
        curve: Curve::Circle {
            center: [0.0, 0.0],
            radius: r_in,
        },
        tag_index: 0,
    }];
    let size = SizeField {
        h_far,
        slope: 0.5,
        sources: vec![SizeSource {
            center: [0.0, 0.0],
            radius: r_in,
            h: h_in,
        }],
    };
    triangulate(r_out, &holes, size, &o)
}

impl Mesh {
    pub fn cell_area(&self, c: usize) -> f64 {
        let [a, b, d] = self.cells[c];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[d]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        let [a, b, d] = self.cells[c];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[d]);
        [
            (pa[0] + pb[0] + pc[0]) / 3.0,
            (pa[1] + pb[1] + pc[1]) / 3.0,
        ]
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for c in &self.cells {
            let ang = tri_min_angle(
                self.vertices[c[0]],
                self.vertices[c[1]],
                self.vertices[c[2]],
            );
            worst = worst.min(ang);
        }
        worst.to_degrees()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_area(c)).sum()
    }

    /// Vertex indices lying on edges with the given tag.
    pub fn boundary_vertices(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.v)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Conformity, orientation, boundary-distance and quality checks.
    pub fn check_invariants(&self) -> Result<()> {
        // positive areas
        for c in 0..self.cells.len() {
            if self.cell_area(c) <= 0.0 {
                return Err(Error::Mesh(format!(
                    "cell {c} has nonpositive area {}",
                    self.cell_area(c)
                )));
            }
        }
        // conforming: every edge shared by at most 2 cells; edges with one
        // cell must be tagged boundary edges
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for cell in &self.cells {
            for i in 0..3 {
                let a = cell[i];
                let b = cell[(i + 1) % 3];
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for e in &self.boundary_edges {
            tagged.insert((e.v[0].min(e.v[1]), e.v[0].max(e.v[1])), e.tag);
        }
        for (edge, count) in &edge_count {
            if *count > 2 {
                return Err(Error::Mesh(format!("edge {edge:?} shared by {count} cells")));
            }
            if *count == 1 && !tagged.contains_key(edge) {
                return Err(Error::Mesh(format!("untagged boundary edge {edge:?}")));
            }
        }
        for edge in tagged.keys() {
            if edge_count.get(edge) != Some(&1) {
                return Err(Error::Mesh(format!(
                    "tagged edge {edge:?} is not a boundary edge of exactly one cell"
                )));
            }
        }
        // boundary vertices near their curves
        for (tag, curve) in &self.curves {
            if let Curve::Circle { center, radius } = curve {
                let tol = match tag {
                    BoundaryTag::Outer => 1e-8 * radius,
                    BoundaryTag::Cavity(_) => 1e-6 * radius,
                };
                for v in self.boundary_vertices(*tag) {
                    let p = self.vertices[v];
                    let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                    if (r - radius).abs() > tol {
                        return Err(Error::Mesh(format!(
                            "boundary vertex {v} off its circle by {}",
                            (r - radius).abs()
                        )));
                    }
                }
            }
        }
        // quality floor
        let worst = self.min_angle_deg();
        if worst < QUALITY_FLOOR_DEG {
            return Err(Error::Mesh(format!(
                "worst cell angle {worst:.2} deg below the {QUALITY_FLOOR_DEG} deg floor"
            )));
        }
        Ok(())
    }

    /// ASCII serialization: header `d n_vertices n_cells n_boundary_edges`,
    /// then vertex, cell and tagged boundary-edge lines.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "2 {} {} {}\n",
            self.vertices.len(),
            self.cells.len(),
            self.boundary_edges.len()
        ));
        for v in &self.vertices {
            out.push_str(&format!("{:?} {:?}\n", v[0], v[1]));
        }
        for c in &self.cells {
            out.push_str(&format!("{} {} {}\n", c[0], c[1], c[2]));
        }
        for e in &self.boundary_edges {
            out.push_str(&format!("{} {} {}\n", e.v[0], e.v[1], e.tag));
        }
        out
    }

    pub fn from_ascii(s: &str) -> Result<Mesh> {
        let mut lines = s.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Mesh("empty mesh file".into()))?;
        let parts: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| Error::Mesh(format!("bad header: {e}"))))
            .collect::<Result<_>>()?;
        if parts.len() != 4 || parts[0] != 2 {
            return Err(Error::Mesh("mesh header must be `2 nv nc nbe`".into()));
        }
        let (nv, nc, nbe) = (parts[1], parts[2], parts[3]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| Error::Mesh("truncated vertices".into()))?;
            let xy: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| Error::Mesh(format!("bad vertex: {e}"))))
                .collect::<Result<_>>()?;
            if xy.len() != 2 {
                return Err(Error::Mesh("vertex line needs 2 coordinates".into()));
            }
            vertices.push([xy[0], xy[1]]);
        }
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let line = lines.next().ok_or_else(|| Error::Mesh("truncated cells".into()))?;
            let abc: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| Error::Mesh(format!("bad cell: {e}"))))
                .collect::<Result<_>>()?;
            if abc.len() != 3 {
                return Err(Error::Mesh("cell line needs 3 indices".into()));
            }
            cells.push([abc[0], abc[1], abc[2]]);
        }
        let mut boundary_edges = Vec::with_capacity(nbe);
        for _ in 0..nbe {
            let line = lines.next().ok_or_else(|| Error::Mesh("truncated boundary".into()))?;
            let mut it = line.split_whitespace();
            let a: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Mesh("bad boundary line".into()))?;
            let b: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Mesh("bad boundary line".into()))?;
            let tag = BoundaryTag::parse(
                it.next()
                    .ok_or_else(|| Error::Mesh("boundary line missing tag".into()))?,
            )?;
            boundary_edges.push(BoundaryEdge { v: [a, b], tag });
        }
        Ok(Mesh {
            vertices,
            cells,
            boundary_edges,
            grading: SizeField::uniform(1.0),
            curves: Vec::new(),
        })
    }

    pub fn write_ascii(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_ascii()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

// ---------------------------------------------------------------------------
// nested bisection refinement
// ---------------------------------------------------------------------------

/// Conforming nested refinement: the longest edge of every marked cell is
/// split, closure propagates longest-edge splits, and each cell is then
/// subdivided red/blue/green by its split edges. Children partition their
/// parents (straight midpoints), so the refined P1 space contains the coarse
/// one. Children of partially split cells that would fall below the quality
/// floor get promoted to full (red) splits.
pub fn refine(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    if marked.is_empty() {
        return Err(Error::Mesh("refine requires a nonempty marked set".into()));
    }
    for &c in marked {
        if c >= mesh.cells.len() {
            return Err(Error::Mesh(format!("marked cell {c} out of range")));
        }
    }
    let edge_key = |a: usize, b: usize| (a.min(b), a.max(b));
    let longest_edge = |cell: &[usize; 3]| -> (usize, usize) {
        let mut best = (cell[0], cell[1]);
        let mut best_len = -1.0f64;
        for i in 0..3 {
            let a = cell[i];
            let b = cell[(i + 1) % 3];
            let l = dist2(mesh.vertices[a], mesh.vertices[b]);
            if l > best_len || (l == best_len && edge_key(a, b) < edge_key(best.0, best.1)) {
                best = (a, b);
                best_len = l;
            }
        }
        best
    };

    let mut split: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    for &c in marked {
        let (a, b) = longest_edge(&mesh.cells[c]);
        split.insert(edge_key(a, b));
    }
    // closure: any cell touching a split edge must split its longest edge;
    // promote cells whose partial split would violate the quality floor
    loop {
        let mut changed = false;
        for cell in &mesh.cells {
            let has_split = (0..3).any(|i| split.contains(&edge_key(cell[i], cell[(i + 1) % 3])));
            if !has_split {
                continue;
            }
            let le = edge_key(longest_edge(cell).0, longest_edge(cell).1);
            if split.insert(le) {
                changed = true;
            }
            let n_split = (0..3)
                .filter(|&i| split.contains(&edge_key(cell[i], cell[(i + 1) % 3])))
                .count();
            if n_split < 3 && !partial_split_ok(mesh, cell, &split) {
                for i in 0..3 {
                    if split.insert(edge_key(cell[i], cell[(i + 1) % 3])) {
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut sorted_edges: Vec<(usize, usize)> = split.iter().copied().collect();
    sorted_edges.sort_unstable();
    // straight midpoints keep the refinement nested
    let boundary_tag: HashMap<(usize, usize), BoundaryTag> = mesh
        .boundary_edges
        .iter()
        .map(|e| (edge_key(e.v[0], e.v[1]), e.tag))
        .collect();
    for &(a, b) in &sorted_edges {
        let m = [
            (mesh.vertices[a][0] + mesh.vertices[b][0]) / 2.0,
            (mesh.vertices[a][1] + mesh.vertices[b][1]) / 2.0,
        ];
        midpoint.insert((a, b), vertices.len());
        vertices.push(m);
    }

    let mut cells = Vec::with_capacity(mesh.cells.len() * 2);
    for cell in &mesh.cells {
        let mids: Vec<Option<usize>> = (0..3)
            .map(|i| midpoint.get(&edge_key(cell[i], cell[(i + 1) % 3])).copied())
            .collect();
        let n_split = mids.iter().flatten().count();
        match n_split {
            0 => cells.push(*cell),
            3 => {
                // red: connect the three midpoints
                let (m01, m12, m20) = (mids[0].unwrap(), mids[1].unwrap(), mids[2].unwrap());
                cells.push([cell[0], m01, m20]);
                cells.push([cell[1], m12, m01]);
                cells.push([cell[2], m20, m12]);
                cells.push([m01, m12, m20]);
            }
            _ => {
                // green/blue: fan from the longest-edge midpoint
                let (la, lb) = longest_edge(cell);
                let lkey = edge_key(la, lb);
                let lm = midpoint[&lkey];
                let apex = *cell.iter().find(|&&v| v != la && v != lb).unwrap();
                // child helper splitting triangle (x, y, apex_m) further if
                // its (x,y)-adjacent edge was split
                let mut emit = |a: usize, b: usize, c: usize| {
                    // triangle (a,b,c) where (a,b) may carry one more midpoint
                    if let Some(&m) = midpoint.get(&edge_key(a, b)) {
                        cells.push([a, m, c]);
                        cells.push([m, b, c]);
                    } else {
                        cells.push([a, b, c]);
                    }
                };
                emit(la, lm, apex);
                // careful: the two sub-edges of the longest edge are new and
                // never in `split`; the remaining original edges are
                // (la, apex) and (apex, lb)
                emit(lm, lb, apex);
            }
        }
    }
    // fix orientation
    for c in cells.iter_mut() {
        let (a, b, d) = (vertices[c[0]], vertices[c[1]], vertices[c[2]]);
        let area = 0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]));
        if area < 0.0 {
            c.swap(1, 2);
        }
    }

    let mut boundary_edges = Vec::new();
    for e in &mesh.boundary_edges {
        let key = edge_key(e.v[0], e.v[1]);
        if let Some(&m) = midpoint.get(&key) {
            boundary_edges.push(BoundaryEdge {
                v: [e.v[0], m],
                tag: e.tag,
            });
            boundary_edges.push(BoundaryEdge {
                v: [m, e.v[1]],
                tag: e.tag,
            });
        } else {
            boundary_edges.push(*e);
        }
    }
    let _ = boundary_tag;
    // straight midpoints freeze the boundary polygon of the base mesh, so
    // the curve records no longer describe the refined boundary
    let refined = Mesh {
        vertices,
        cells,
        boundary_edges,
        grading: mesh.grading.clone(),
        curves: Vec::new(),
    };
    refined.check_invariants()?;
    Ok(refined)
}

/// Would the green/blue subdivision of this cell stay above the quality
/// floor?
fn partial_split_ok(mesh: &Mesh, cell: &[usize; 3], split: &std::collections::HashSet<(usize, usize)>) -> bool {
    let edge_key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut le = (cell[0], cell[1]);
    let mut le_len = -1.0;
    for i in 0..3 {
        let a = cell[i];
        let b = cell[(i + 1) % 3];
        let l = dist2(mesh.vertices[a], mesh.vertices[b]);
        if l > le_len || (l == le_len && edge_key(a, b) < edge_key(le.0, le.1)) {
            le = (a, b);
            le_len = l;
        }
    }
    let apex = *cell.iter().find(|&&v| v != le.0 && v != le.1).unwrap();
    let pm = [
        (mesh.vertices[le.0][0] + mesh.vertices[le.1][0]) / 2.0,
        (mesh.vertices[le.0][1] + mesh.vertices[le.1][1]) / 2.0,
    ];
    let floor = (QUALITY_FLOOR_DEG).to_radians();
    let check = |a: [f64; 2], b: [f64; 2], c: [f64; 2], extra: Option<(usize, usize)>| -> bool {
        if let Some((x, y)) = extra {
            if split.contains(&edge_key(x, y)) {
                let m = [
                    (mesh.vertices[x][0] + mesh.vertices[y][0]) / 2.0,
                    (mesh.vertices[x][1] + mesh.vertices[y][1]) / 2.0,
                ];
                return tri_min_angle(a, m, c) >= floor && tri_min_angle(m, b, c) >= floor;
            }
        }
        tri_min_angle(a, b, c) >= floor
    };
    let pa = mesh.vertices[le.0];
    let pb = mesh.vertices[le.1];
    let pc = mesh.vertices[apex];
    check(pa, pm, pc, Some((le.0, apex)).map(|_| (le.0, apex)))
        && check(pm, pb, pc, Some((apex, le.1)).map(|_| (apex, le.1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{anchors_circle, build_perforation, CavitySpec, RotationRule};

    fn small_opts() -> MeshOptions {
        MeshOptions {
            max_vertices: 400_000,
            ..MeshOptions::default()
        }
    }

    #[test]
    fn disk_mesh_basics() {
        let mesh = mesh_disk(2.0, 0.4, &small_opts()).unwrap();
        mesh.check_invariants().unwrap();
        assert!(mesh.boundary_edges.iter().all(|e| e.tag == BoundaryTag::Outer));
        // area close to the disk, slightly below (inscribed polygon)
        let area = mesh.total_area();
        let disk = std::f64::consts::PI * 4.0;
        assert!(area < disk && area > 0.98 * disk, "area {area} vs {disk}");
        assert!(mesh.min_angle_deg() >= QUALITY_FLOOR_DEG);
    }

    #[test]
    fn far_field_count_scales_quadratically() {
        let count = |h: f64| {
            let mesh = mesh_disk(2.0, h, &small_opts()).unwrap();
            mesh.cells.len() as f64
        };
        let ratio = count(0.15) / count(0.3);
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn annulus_mesh_and_interpolant_energy() {
        let mesh = mesh_annulus(0.5, 2.0, 0.05, 0.25, &small_opts()).unwrap();
        mesh.check_invariants().unwrap();
        let tags: std::collections::HashSet<_> =
            mesh.boundary_edges.iter().map(|e| e.tag).collect();
        assert!(tags.contains(&BoundaryTag::Outer));
        assert!(tags.contains(&BoundaryTag::Cavity(0)));
        // inner vertices on |x| = 0.5
        for v in mesh.boundary_vertices(BoundaryTag::Cavity(0)) {
            let r = (mesh.vertices[v][0].powi(2) + mesh.vertices[v][1].powi(2)).sqrt();
            assert!((r - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn perforated_mesh_tags_and_quality() {
        let anchors = anchors_circle(12);
        let spec = CavitySpec {
            shape: crate::geometry::CavityShape::Ball,
            rotation: RotationRule::Identity,
        };
        let domain = build_perforation(&anchors, 0.02, &spec, 2.0, 1.5).unwrap();
        let mesh = mesh_perforated_ball(&domain, 0.3, 0.5, &small_opts()).unwrap();
        mesh.check_invariants().unwrap();
        // twelve distinct cavity tags, each a closed polyline
        for k in 0..12 {
            let edges: Vec<_> = mesh
                .boundary_edges
                .iter()
                .filter(|e| e.tag == BoundaryTag::Cavity(k))
                .collect();
            assert!(edges.len() >= 16, "cavity {k} has {} edges", edges.len());
            let mut deg: HashMap<usize, usize> = HashMap::new();
            for e in &edges {
                *deg.entry(e.v[0]).or_insert(0) += 1;
                *deg.entry(e.v[1]).or_insert(0) += 1;
            }
            assert!(deg.values().all(|&d| d == 2), "cavity {k} not a closed loop");
        }
        // no-cavity domain still works through the same path
        let disk = mesh_disk(2.0, 0.3, &small_opts()).unwrap();
        assert!(disk.boundary_edges.iter().all(|e| e.tag == BoundaryTag::Outer));
    }

    #[test]
    fn square_cavities_mesh() {
        let anchors = anchors_circle(8);
        let spec = CavitySpec {
            shape: crate::geometry::CavityShape::Square { half_width: 0.7 },
            rotation: RotationRule::RadialAlign,
        };
        let domain = build_perforation(&anchors, 0.02, &spec, 2.0, 1.5).unwrap();
        let mesh = mesh_perforated_ball(&domain, 0.3, 0.5, &small_opts()).unwrap();
        mesh.check_invariants().unwrap();
        let tags: std::collections::HashSet<_> =
            mesh.boundary_edges.iter().map(|e| e.tag).collect();
        assert_eq!(tags.len(), 9); // outer + 8 cavities
    }

    #[test]
    fn ascii_roundtrip_identity() {
        let mesh = mesh_annulus(0.5, 2.0, 0.1, 0.4, &small_opts()).unwrap();
        let text = mesh.to_ascii();
        let parsed = Mesh::from_ascii(&text).unwrap();
        assert_eq!(parsed.vertices, mesh.vertices);
        assert_eq!(parsed.cells, mesh.cells);
        assert_eq!(parsed.boundary_edges.len(), mesh.boundary_edges.len());
        // serialization is reproducible
        let again = mesh_annulus(0.5, 2.0, 0.1, 0.4, &small_opts()).unwrap();
        assert_eq!(again.to_ascii(), text);
    }

    #[test]
    fn refine_all_splits_everything() {
        let mesh = mesh_disk(2.0, 0.5, &small_opts()).unwrap();
        let all: Vec<usize> = (0..mesh.cells.len()).collect();
        let fine = refine(&mesh, &all).unwrap();
        fine.check_invariants().unwrap();
        let ratio = fine.cells.len() as f64 / mesh.cells.len() as f64;
        assert!((2.0..=4.0 + 1e-9).contains(&ratio), "ratio {ratio}");
        assert!((fine.total_area() - mesh.total_area()).abs() < 1e-12);
        assert!(refine(&mesh, &[]).is_err());
    }

    #[test]
    fn refine_partial_keeps_invariants() {
        let mesh = mesh_annulus(0.5, 2.0, 0.08, 0.3, &small_opts()).unwrap();
        // mark cells near the inner circle
        let marked: Vec<usize> = (0..mesh.cells.len())
            .filter(|&c| {
                let cm = mesh.cell_centroid(c);
                (cm[0] * cm[0] + cm[1] * cm[1]).sqrt() < 0.8
            })
            .collect();
        assert!(!marked.is_empty());
        let fine = refine(&mesh, &marked).unwrap();
        fine.check_invariants().unwrap();
        assert!(fine.cells.len() > mesh.cells.len());
    }

    #[test]
    fn grading_respects_size_field() {
        let anchors = anchors_circle(12);
        let spec = CavitySpec {
            shape: crate::geometry::CavityShape::Ball,
            rotation: RotationRule::Identity,
        };
        let domain = build_perforation(&anchors, 0.02, &spec, 2.0, 1.5).unwrap();
        let mesh = mesh_perforated_ball(&domain, 0.3, 0.5, &small_opts()).unwrap();
        // every cell's longest edge within a modest factor of the local target
        let mut worst_ratio = 0.0f64;
        for (c, cell) in mesh.cells.iter().enumerate() {
            let h = mesh.grading.eval(mesh.cell_centroid(c));
            for i in 0..3 {
                let l = dist2(
                    mesh.vertices[cell[i]],
                    mesh.vertices[cell[(i + 1) % 3]],
                )
                .sqrt();
                worst_ratio = worst_ratio.max(l / h);
            }
        }
        assert!(worst_ratio <= 1.6, "edge/target ratio {worst_ratio}");
    }
}
