//! Explicit trial fields for the perforated-ball problem.
//!
//! The ansatz combines a bulk radial equilibrium profile, weighted by an
//! interpolation constant `A`, with local cavity potentials supported in the
//! disjoint balls `B(s, eps/10)` and weighted by `1 - A`. Its energy splits
//! exactly into the two parts because the gradients have disjoint supports,
//! which makes the closed-form energy decomposition testable cell by cell.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    ball_capacity, equilibrium_profile_ball, radial_profile_annulus, radial_profile_u,
    shrinkage_factor_j,
};
use crate::geometry::{CavityShape, PerforatedDomain};
use crate::mesh::{BoundaryTag, Mesh, MeshOptions};
use crate::solver::{
    assemble_energy, capacity_on_meshes, cell_geometry, cell_gradient, Field, FieldSampler,
    SolveOptions, SolveReport,
};
use crate::{Error, Result};

/// Bulk profile choice: the whole-space potential `U_{1+eps}` or the
/// relative one `W_{eps,R}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzMode {
    WholeSpace,
    Ball,
}

#[derive(Clone, Debug)]
pub struct AnsatzSpec<'a> {
    /// Interpolation constant in [0, 1].
    pub a: f64,
    pub domain: &'a PerforatedDomain,
    pub mode: AnsatzMode,
}

impl<'a> AnsatzSpec<'a> {
    pub fn new(a: f64, domain: &'a PerforatedDomain, mode: AnsatzMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Domain(format!("ansatz constant A = {a} not in [0,1]")));
        }
        Ok(AnsatzSpec { a, domain, mode })
    }

    /// Support radius of the cavity potentials: eps/10, fixed.
    pub fn support_radius(&self) -> f64 {
        self.domain.eps / 10.0
    }
}

/// Local cavity potential `V^s`, evaluated in reference coordinates where
/// the cavity is `K` and the potential vanishes at radius `1/(10 alpha)`.
pub enum CavityPotential {
    /// Ball cavities have the closed-form annulus profile.
    BallClosedForm,
    /// Other shapes are solved once on a reference mesh and reused across
    /// anchors via rotation.
    Solved {
        mesh: Mesh,
        field: Field,
        /// `cap_p(K, B(0, 1/(10 alpha)))` of the unit-scale shape.
        cap_ref: f64,
        rho: f64,
    },
}

impl CavityPotential {
    /// Capacity of one realized cavity relative to its eps/10 ball:
    /// `kappa_s = cap_p(alpha eps K, B(s, eps/10))`.
    pub fn kappa(&self, domain: &PerforatedDomain) -> Result<f64> {
        let scale = domain.cavity_scale();
        let d = domain.d;
        let p = domain.p;
        match self {
            CavityPotential::BallClosedForm => {
                Ok(ball_capacity(d, p, scale, domain.eps / 10.0)?.value)
            }
            CavityPotential::Solved { cap_ref, .. } => Ok(scale.powf(d as f64 - p) * cap_ref),
        }
    }
}

/// Build (or reuse) the reference potential for the domain's cavity shape.
/// Ball cavities evaluate in closed form; other shapes get one capacity
/// solve on `B(0, 1/(10 alpha)) \ K` at unit scale.
pub fn cavity_potential(
    domain: &PerforatedDomain,
    mesh_opts: &MeshOptions,
    solve_opts: &SolveOptions,
) -> Result<CavityPotential> {
    match &domain.cavity.shape {
        CavityShape::Ball => Ok(CavityPotential::BallClosedForm),
        shape => {
            let rho = 1.0 / (10.0 * domain.alpha);
            if rho <= shape.outradius() * 1.5 {
                return Err(Error::Domain(format!(
                    "reference radius 1/(10 alpha) = {rho} too close to the cavity"
                )));
            }
            let hole = crate::mesh::Hole {
                curve: crate::mesh::Curve::Polygon {
                    points: shape.boundary_polygon(mesh_opts.cavity_segments.max(48)),
                },
                tag_index: 0,
            };
            let size = crate::mesh::SizeField {
                h_far: rho / 6.0,
                slope: 0.5,
                sources: vec![crate::mesh::SizeSource {
                    center: [0.0, 0.0],
                    radius: shape.outradius(),
                    h: 0.05 * shape.outradius(),
                }],
            };
            let base = crate::mesh::triangulate(rho, &[hole], size, mesh_opts)?;
            let (est, report, fine_mesh) = capacity_on_meshes(&base, domain.p, 2, solve_opts)?;
            Ok(CavityPotential::Solved {
                mesh: fine_mesh,
                field: report.field,
                cap_ref: est.extrapolated,
                rho,
            })
        }
    }
}

/// Evaluate the ansatz at one point.
fn ansatz_value(
    spec: &AnsatzSpec,
    potential: &CavityPotential,
    sampler: Option<&FieldSampler>,
    x: [f64; 2],
) -> Result<f64> {
    let domain = spec.domain;
    let gamma = (domain.d as f64 - domain.p) / (domain.p - 1.0);
    let t = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let bulk = match spec.mode {
        AnsatzMode::Ball => equilibrium_profile_ball(t, domain.eps, domain.r_outer, gamma)?,
        AnsatzMode::WholeSpace => radial_profile_u(t, gamma, 1.0 + domain.eps),
    };
    let mut value = spec.a * bulk;
    let support = spec.support_radius();
    // cavity potentials only matter near the unit sphere
    if (t - 1.0).abs() <= support * 1.0000001 {
        for inst in &domain.instances {
            let dx = x[0] - inst.center[0];
            let dy = x[1] - inst.center[1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist >= support {
                continue;
            }
            let scale = domain.cavity_scale();
            let local = match potential {
                CavityPotential::BallClosedForm => {
                    if dist <= scale {
                        1.0
                    } else {
                        radial_profile_annulus(dist, scale, support, gamma)?
                    }
                }
                CavityPotential::Solved { field, rho, .. } => {
                    let (s, c) = inst.rotation_angle.sin_cos();
                    let y = [(c * dx + s * dy) / scale, (-s * dx + c * dy) / scale];
                    let r_local = (y[0] * y[0] + y[1] * y[1]).sqrt();
                    if r_local >= *rho {
                        0.0
                    } else if inst.signed_distance(&domain.cavity.shape, x) <= 0.0 {
                        1.0
                    } else {
                        // points swallowed by the reference hole polygon read 1
                        sampler
                            .expect("sampler required for solved potentials")
                            .sample(field, y)
                            .unwrap_or(1.0)
                    }
                }
            };
            value += (1.0 - spec.a) * local;
            break;
        }
    }
    Ok(value)
}

/// Vertex-wise interpolation of the ansatz onto the mesh. Values are exact
/// on the tagged boundaries: 1 on cavities and, in ball mode, 0 on the
/// outer circle.
pub fn build_ansatz(spec: &AnsatzSpec, mesh: &Mesh, potential: &CavityPotential) -> Result<Field> {
    // the mesh must resolve the eps/10 support shells
    let support = spec.support_radius();
    for inst in &spec.domain.instances {
        let mut inside = 0usize;
        for v in &mesh.vertices {
            let d2 = (v[0] - inst.center[0]).powi(2) + (v[1] - inst.center[1]).powi(2);
            if d2 < support * support {
                inside += 1;
            }
        }
        if inside < 16 {
            return Err(Error::Mesh(format!(
                "mesh does not resolve the eps/10 shell of anchor {} ({inside} vertices)",
                inst.anchor_index
            )));
        }
    }
    build_ansatz_unchecked(spec, mesh, potential)
}

fn build_ansatz_unchecked(
    spec: &AnsatzSpec,
    mesh: &Mesh,
    potential: &CavityPotential,
) -> Result<Field> {
    let sampler_storage;
    let sampler = match potential {
        CavityPotential::Solved { mesh: ref_mesh, .. } => {
            sampler_storage = FieldSampler::new(ref_mesh);
            Some(&sampler_storage)
        }
        CavityPotential::BallClosedForm => None,
    };
    let mut values = Vec::with_capacity(mesh.vertices.len());
    for &v in &mesh.vertices {
        values.push(ansatz_value(spec, potential, sampler, v)?);
    }
    let mut field = Field { values };
    for e in &mesh.boundary_edges {
        let exact = match e.tag {
            // component fields without cavities leave cavity tags alone
            BoundaryTag::Cavity(_) if !spec.domain.instances.is_empty() => 1.0,
            BoundaryTag::Cavity(_) => continue,
            BoundaryTag::Outer => match spec.mode {
                AnsatzMode::Ball => 0.0,
                AnsatzMode::WholeSpace => continue,
            },
        };
        for &v in &e.v {
            field.values[v] = exact;
        }
    }
    Ok(field)
}

/// Closed-form energy decomposition of the ansatz:
/// bulk term plus `(1-A)^p sum_s kappa_s`.
pub fn ansatz_energy_closed(spec: &AnsatzSpec, potential: &CavityPotential) -> Result<f64> {
    let (bulk_cap, cavity_total) = ansatz_energy_parts(spec.domain, spec.mode, potential)?;
    let p = spec.domain.p;
    Ok(spec.a.powf(p) * bulk_cap + (1.0 - spec.a).powf(p) * cavity_total)
}

/// The two closed-form energy parts (bulk capacity, total cavity term).
pub fn ansatz_energy_parts(
    domain: &PerforatedDomain,
    mode: AnsatzMode,
    potential: &CavityPotential,
) -> Result<(f64, f64)> {
    let (d, p) = (domain.d, domain.p);
    let bulk_cap = match mode {
        AnsatzMode::Ball => ball_capacity(d, p, 1.0 + domain.eps, domain.r_outer)?.value,
        AnsatzMode::WholeSpace => {
            (1.0 + domain.eps).powf(d as f64 - p) * ball_capacity(d, p, 1.0, f64::INFINITY)?.value
        }
    };
    let kappa = potential.kappa(domain)?;
    Ok((bulk_cap, domain.instances.len() as f64 * kappa))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssembledAnsatzEnergy {
    pub total: f64,
    pub bulk_part: f64,
    pub cavity_part: f64,
    /// Sum over cells of |grad bulk| * |grad cavity|; exactly zero when the
    /// supports are separated by the mesh.
    pub cross_term: f64,
}

/// Assemble the interpolated ansatz energy and its support decomposition.
pub fn ansatz_energy_assembled(
    spec: &AnsatzSpec,
    mesh: &Mesh,
    potential: &CavityPotential,
) -> Result<AssembledAnsatzEnergy> {
    let domain = spec.domain;
    let full = build_ansatz(spec, mesh, potential)?;
    // component fields: the bulk profile alone and the cavity remainder
    let no_cavities = PerforatedDomain {
        instances: Vec::new(),
        ..domain.clone()
    };
    let bulk_only = AnsatzSpec {
        a: spec.a,
        domain: &no_cavities,
        mode: spec.mode,
    };
    let bulk_field = build_ansatz_unchecked(&bulk_only, mesh, potential)?;
    let cavity_field = Field {
        values: full
            .values
            .iter()
            .zip(&bulk_field.values)
            .map(|(f, b)| f - b)
            .collect(),
    };
    let geom = cell_geometry(mesh);
    let (total, _) = assemble_energy(mesh, &geom, &full, domain.p, 0.0)?;
    let (bulk_part, _) = assemble_energy(mesh, &geom, &bulk_field, domain.p, 0.0)?;
    let (cavity_part, _) = assemble_energy(mesh, &geom, &cavity_field, domain.p, 0.0)?;
    let mut cross = 0.0;
    for (c, cell) in mesh.cells.iter().enumerate() {
        // equal nodal values have an exactly zero P1 gradient; computing it
        // through the basis functions would leave cancellation noise
        let flat = |f: &Field| {
            f.values[cell[0]] == f.values[cell[1]] && f.values[cell[1]] == f.values[cell[2]]
        };
        if flat(&bulk_field) || flat(&cavity_field) {
            continue;
        }
        let gb = cell_gradient(&geom, cell, c, &bulk_field.values);
        let gc = cell_gradient(&geom, cell, c, &cavity_field.values);
        cross += geom.areas[c]
            * (gb[0] * gb[0] + gb[1] * gb[1]).sqrt()
            * (gc[0] * gc[0] + gc[1] * gc[1]).sqrt();
    }
    Ok(AssembledAnsatzEnergy {
        total,
        bulk_part,
        cavity_part,
        cross_term: cross,
    })
}

/// Admissibility gaps `E(w_A) - E(u)` over a grid of A values; the solved
/// energy never exceeds any ansatz energy.
pub fn admissibility_gap(
    report: &SolveReport,
    a_grid: &[f64],
    domain: &PerforatedDomain,
    mode: AnsatzMode,
    mesh: &Mesh,
    potential: &CavityPotential,
) -> Result<Vec<(f64, f64)>> {
    let mut gaps = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        let spec = AnsatzSpec::new(a, domain, mode)?;
        let assembled = ansatz_energy_assembled(&spec, mesh, potential)?;
        gaps.push((a, assembled.total - report.energy));
    }
    Ok(gaps)
}

/// Lemma bracket for the cavity capacity: `kappa_s` lies within relative
/// width `J(alpha)` above the whole-space value `cap_p(alpha eps K)`.
pub fn kappa_bracket_check(domain: &PerforatedDomain, kappa: f64) -> Result<()> {
    let (d, p) = (domain.d, domain.p);
    let gamma = (d as f64 - p) / (p - 1.0);
    let whole = match &domain.cavity.shape {
        CavityShape::Ball => ball_capacity(d, p, domain.cavity_scale(), f64::INFINITY)?.value,
        _ => return Ok(()), // no closed form for other shapes
    };
    let j = shrinkage_factor_j(domain.alpha, gamma, p)?;
    if kappa < whole * (1.0 - 1e-12) || kappa > whole * (1.0 + j) * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "kappa {kappa} outside the bracket [{whole}, {}]",
            whole * (1.0 + j)
        )));
    }
    Ok(())
}
