//! Quantitative certification of junction and asymptotic structure:
//! dihedral angles along triple curves, tangent frames and solid angles at
//! quadruple points, expander residual, planar-end decay, Hausdorff
//! convergence of rescaled shells to the cone trace, and junction
//! persistence across truncation radii.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::complex::{
    connected_components, extract_junctions, validate, JunctionError, JunctionGraph, PhaseLabel,
    SurfaceComplex, Topology,
};
use crate::cone::{sample_trace, ConeSpec};
use crate::curvature::expander_residual;
use crate::ends::{end_decay, fit_planar_end, EndPlane};
use crate::energy::weighted_area;
use crate::models::{euclid_to_ball, hyperbolic_radius_to_ball, parallelism_threshold_120};

/// Tetrahedral angle at a regular quadruple point, degrees.
pub fn tetrahedral_angle_deg() -> f64 {
    (-1.0f64 / 3.0).acos().to_degrees()
}

/// Solid-angle lower bound at a regular quadruple point, steradians.
pub fn solid_angle_lower_bound() -> f64 {
    2.0 * std::f64::consts::PI * (1.0 - 1.0 / 3.0f64.sqrt())
}

/// Gaussian density reference constants (reported, never measured).
pub const DENSITY_SHEET: f64 = 1.0;
pub const DENSITY_TRIPLE: f64 = 1.5;
pub fn density_quadruple() -> f64 {
    3.0 * (-1.0f64 / 3.0).acos() / std::f64::consts::PI
}

#[derive(Debug, Clone, Copy)]
pub struct ToleranceProfile {
    /// Triple-curve dihedral tolerance, degrees.
    pub triple_deg: f64,
    /// Quadruple tangent-angle tolerance, degrees.
    pub quad_deg: f64,
    /// Normal / tangent balance tolerance.
    pub balance: f64,
    /// Residual tolerance factor: `tol = residual_factor * h`.
    pub residual_factor: f64,
    /// Hausdorff tolerance factor: `tol = hausdorff_factor * h / r`.
    pub hausdorff_factor: f64,
    /// Persistence tolerance fraction of the first radius.
    pub persist_frac: f64,
    /// Slack below the solid-angle bound, steradians.
    pub solid_sr: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            triple_deg: 0.5,
            quad_deg: 1.0,
            balance: 0.02,
            residual_factor: 5.0,
            hausdorff_factor: 2.0,
            persist_frac: 0.05,
            solid_sr: 0.05,
        }
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("complex fails validation with {violations} violations; report refused")]
    InvalidComplex { violations: usize },
    #[error(transparent)]
    Junction(#[from] JunctionError),
    #[error("open link at vertex {vertex} for phase {phase}")]
    OpenLink { vertex: usize, phase: u32 },
    #[error("shell [{r0}, {r1}] contains no mesh points")]
    EmptyShell { r0: f64, r1: f64 },
    #[error("persistence needs at least two states")]
    NeedTwoStates,
}

// ---------------------------------------------------------------------------
// Triple-curve dihedral angles and normal balance.

#[derive(Debug, Clone)]
pub struct CurveAngleSample {
    /// Arclength along the curve at the sampled vertex.
    pub arclength: f64,
    /// The three dihedral angles between consecutive sheets, degrees.
    pub angles_deg: [f64; 3],
    /// Norm of the cyclically oriented sheet-normal sum.
    pub balance: f64,
}

#[derive(Debug, Clone)]
pub struct CurveAngleStats {
    pub curve: usize,
    pub samples: Vec<CurveAngleSample>,
}

#[derive(Debug, Clone)]
pub struct TripleAngleStats {
    pub per_curve: Vec<CurveAngleStats>,
    pub max_deviation_deg: f64,
    pub max_balance: f64,
    pub sample_count: usize,
}

/// Sheet directions and oriented normals around a junction vertex, one per
/// phase pair of the triple, averaged over the 1-ring.
fn sheet_frames_at(
    complex: &SurfaceComplex,
    topo: &Topology,
    v: usize,
    tangent: &Vector3<f64>,
) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    use std::collections::BTreeMap;
    let p = complex.vertices[v];
    let mut by_pair: BTreeMap<(u32, u32), (Vector3<f64>, Vector3<f64>)> = BTreeMap::new();
    for &f in &topo.vertex_faces[v] {
        let rec = &complex.faces[f];
        let area = complex.face_area(f);
        let entry = by_pair
            .entry((rec.phases.a.0, rec.phases.b.0))
            .or_insert((Vector3::zeros(), Vector3::zeros()));
        entry.0 += area * (complex.face_centroid(f) - p);
        entry.1 += area * complex.face_normal(f);
    }
    by_pair
        .into_values()
        .filter_map(|(dir, normal)| {
            let d = dir - tangent * dir.dot(tangent);
            let n = normal.norm();
            if d.norm() < 1e-300 || n < 1e-300 {
                None
            } else {
                Some((d.normalize(), normal / n))
            }
        })
        .collect()
}

/// Measure the three dihedral angles and the oriented normal balance in the
/// plane orthogonal to the local curve tangent, at every junction vertex.
pub fn check_triple_angles(
    complex: &SurfaceComplex,
    topo: &Topology,
    junctions: &JunctionGraph,
) -> TripleAngleStats {
    let mut per_curve = Vec::new();
    let mut max_dev: f64 = 0.0;
    let mut max_balance: f64 = 0.0;
    let mut count = 0;

    for (ci, curve) in junctions.triple_curves.iter().enumerate() {
        let n = curve.vertices.len();
        let mut samples = Vec::new();
        let mut arclength = 0.0;
        for i in 0..n {
            if i > 0 {
                arclength += (complex.vertices[curve.vertices[i]]
                    - complex.vertices[curve.vertices[i - 1]])
                    .norm();
            }
            let (prev, next) = if curve.closed {
                (curve.vertices[(i + n - 1) % n], curve.vertices[(i + 1) % n])
            } else {
                if i == 0 || i == n - 1 {
                    continue;
                }
                (curve.vertices[i - 1], curve.vertices[i + 1])
            };
            let v = curve.vertices[i];
            let tangent = (complex.vertices[next] - complex.vertices[prev]).normalize();
            let frames = sheet_frames_at(complex, topo, v, &tangent);
            if frames.len() != 3 {
                continue;
            }
            let e1 = crate::ends::orthonormal_to(&tangent);
            let e2 = tangent.cross(&e1);
            let mut entries: Vec<(f64, Vector3<f64>, Vector3<f64>)> = frames
                .iter()
                .map(|&(d, nrm)| (d.dot(&e2).atan2(d.dot(&e1)), d, nrm))
                .collect();
            entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut angles = [0.0f64; 3];
            for k in 0..3 {
                let next_angle = if k == 2 {
                    entries[0].0 + 2.0 * std::f64::consts::PI
                } else {
                    entries[k + 1].0
                };
                angles[k] = (next_angle - entries[k].0).to_degrees();
            }
            // Orient each sheet normal counterclockwise around the tangent.
            let mut balance = Vector3::zeros();
            for &(_, d, nrm) in &entries {
                let ccw = tangent.cross(&d);
                balance += if nrm.dot(&ccw) >= 0.0 { nrm } else { -nrm };
            }
            let sample = CurveAngleSample {
                arclength,
                angles_deg: angles,
                balance: balance.norm(),
            };
            for a in angles {
                max_dev = max_dev.max((a - 120.0).abs());
            }
            max_balance = max_balance.max(sample.balance);
            count += 1;
            samples.push(sample);
        }
        per_curve.push(CurveAngleStats { curve: ci, samples });
    }

    TripleAngleStats {
        per_curve,
        max_deviation_deg: max_dev,
        max_balance,
        sample_count: count,
    }
}

// ---------------------------------------------------------------------------
// Quadruple points: tangent frames.

#[derive(Debug, Clone)]
pub struct QuadPointStats {
    pub vertex: usize,
    pub tangents: Vec<Vector3<f64>>,
    /// The six pairwise angles, degrees.
    pub pairwise_deg: Vec<f64>,
    pub balance: f64,
}

#[derive(Debug, Clone)]
pub struct QuadStats {
    pub per_point: Vec<QuadPointStats>,
    pub max_angle_deviation_deg: f64,
    pub max_balance: f64,
}

/// Least-squares tangent of a curve germ: principal direction of the first
/// `j_fit` segments, oriented away from the junction.
fn germ_tangent_fit(
    complex: &SurfaceComplex,
    curve: &crate::complex::TripleCurve,
    from_start: bool,
    j_fit: usize,
) -> Option<Vector3<f64>> {
    let verts = &curve.vertices;
    if verts.len() < 2 {
        return None;
    }
    let q = if from_start {
        complex.vertices[verts[0]]
    } else {
        complex.vertices[*verts.last().unwrap()]
    };
    let take = j_fit.min(verts.len() - 1);
    let mut pts = Vec::with_capacity(take);
    for k in 1..=take {
        let idx = if from_start {
            verts[k]
        } else {
            verts[verts.len() - 1 - k]
        };
        pts.push(complex.vertices[idx] - q);
    }
    let mut m = Matrix3::zeros();
    let mut mean = Vector3::zeros();
    for d in &pts {
        m += d * d.transpose();
        mean += d;
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut best = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut dir: Vector3<f64> = eig.eigenvectors.column(best).into();
    if dir.dot(&mean) < 0.0 {
        dir = -dir;
    }
    Some(dir.normalize())
}

/// Default tangent-fit length (segments).
pub const J_FIT: usize = 4;

/// Pairwise tangent angles and the tangent balance at every quadruple point.
pub fn check_quadruple(complex: &SurfaceComplex, junctions: &JunctionGraph) -> QuadStats {
    let target = tetrahedral_angle_deg();
    let mut per_point = Vec::new();
    let mut max_dev: f64 = 0.0;
    let mut max_balance: f64 = 0.0;

    for q in &junctions.quadruple_points {
        let mut tangents = Vec::with_capacity(4);
        let mut seen: Vec<usize> = Vec::new();
        for &ci in &q.curves {
            let curve = &junctions.triple_curves[ci];
            let occurrences = seen.iter().filter(|&&c| c == ci).count();
            seen.push(ci);
            let starts_here = !curve.closed && curve.vertices.first() == Some(&q.vertex);
            let ends_here = !curve.closed && curve.vertices.last() == Some(&q.vertex);
            let from_start = if starts_here && ends_here {
                occurrences == 0
            } else {
                starts_here
            };
            if let Some(t) = germ_tangent_fit(complex, curve, from_start, J_FIT) {
                tangents.push(t);
            }
        }
        let mut pairwise = Vec::with_capacity(6);
        for i in 0..tangents.len() {
            for j in i + 1..tangents.len() {
                let ang = tangents[i]
                    .dot(&tangents[j])
                    .clamp(-1.0, 1.0)
                    .acos()
                    .to_degrees();
                max_dev = max_dev.max((ang - target).abs());
                pairwise.push(ang);
            }
        }
        let balance = tangents.iter().sum::<Vector3<f64>>().norm();
        max_balance = max_balance.max(balance);
        per_point.push(QuadPointStats {
            vertex: q.vertex,
            tangents,
            pairwise_deg: pairwise,
            balance,
        });
    }

    QuadStats {
        per_point,
        max_angle_deviation_deg: max_dev,
        max_balance,
    }
}

// ---------------------------------------------------------------------------
// Solid angles.

/// Signed solid angle of the spherical triangle with unit corners `a, b, c`
/// (two-argument arctangent form).
pub fn signed_tetra_solid_angle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let det = a.dot(&b.cross(c));
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * det.atan2(denom)
}

/// Solid angle subtended at vertex `v` by the region of `phase`: the link of
/// the phase's boundary fan is chained into a closed spherical polygon and
/// its area is summed from signed triangle contributions.
pub fn solid_angle_of_phase(
    complex: &SurfaceComplex,
    topo: &Topology,
    v: usize,
    phase: PhaseLabel,
) -> Result<f64, VerifyError> {
    use std::collections::BTreeMap;
    let fan: Vec<usize> = topo.vertex_faces[v]
        .iter()
        .copied()
        .filter(|&f| complex.faces[f].phases.contains(phase))
        .collect();
    if fan.is_empty() {
        return Err(VerifyError::OpenLink {
            vertex: v,
            phase: phase.0,
        });
    }
    // Adjacency between link vertices through fan faces.
    let mut adjacency: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &f in &fan {
        let others: Vec<usize> = complex.faces[f]
            .vertices
            .iter()
            .copied()
            .filter(|&x| x != v)
            .collect();
        adjacency.entry(others[0]).or_default().push(others[1]);
        adjacency.entry(others[1]).or_default().push(others[0]);
    }
    for (vert, neighbors) in &adjacency {
        if neighbors.len() != 2 {
            let _ = vert;
            return Err(VerifyError::OpenLink {
                vertex: v,
                phase: phase.0,
            });
        }
    }
    // Walk the closed polygon.
    let start = *adjacency.keys().next().unwrap();
    let mut polygon = vec![start];
    let mut prev = start;
    let mut cur = adjacency[&start][0];
    while cur != start {
        polygon.push(cur);
        let nbrs = &adjacency[&cur];
        let next = if nbrs[0] == prev { nbrs[1] } else { nbrs[0] };
        prev = cur;
        cur = next;
    }
    if polygon.len() != adjacency.len() {
        return Err(VerifyError::OpenLink {
            vertex: v,
            phase: phase.0,
        });
    }

    let p = complex.vertices[v];
    let dirs: Vec<Vector3<f64>> = polygon
        .iter()
        .map(|&w| (complex.vertices[w] - p).normalize())
        .collect();
    let mut center: Vector3<f64> = dirs.iter().sum();
    if center.norm() < 1e-9 {
        center = dirs[0] + dirs[1];
    }
    let center = center.normalize();
    let mut total = 0.0;
    for i in 0..dirs.len() {
        let j = (i + 1) % dirs.len();
        total += signed_tetra_solid_angle(&center, &dirs[i], &dirs[j]);
    }
    Ok(total.abs())
}

#[derive(Debug, Clone)]
pub struct SolidAngleStats {
    /// `(quadruple vertex, phase, steradians)` triples.
    pub values: Vec<(usize, u32, f64)>,
    pub min_value: f64,
}

/// Solid angle of every phase at every quadruple point, against the
/// inscribed-cone bound.
pub fn check_solid_angles(
    complex: &SurfaceComplex,
    topo: &Topology,
    junctions: &JunctionGraph,
) -> Result<SolidAngleStats, VerifyError> {
    let mut values = Vec::new();
    let mut min_value = f64::INFINITY;
    for q in &junctions.quadruple_points {
        for &phase in &q.phases {
            let omega = solid_angle_of_phase(complex, topo, q.vertex, phase)?;
            min_value = min_value.min(omega);
            values.push((q.vertex, phase.0, omega));
        }
    }
    if values.is_empty() {
        min_value = f64::NAN;
    }
    Ok(SolidAngleStats { values, min_value })
}

// ---------------------------------------------------------------------------
// Hausdorff asymptotics.

/// Symmetric Hausdorff distance between finite point sets.
pub fn hausdorff_distance(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    fn one_sided(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> f64 {
        from.par_iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p - q).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    }
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    one_sided(a, b).max(one_sided(b, a)).sqrt()
}

/// Dense point sample of the mesh: vertices, edge midpoints and centroids of
/// every face.
pub fn mesh_point_sample(complex: &SurfaceComplex) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(complex.face_count() * 7);
    for f in 0..complex.face_count() {
        let [a, b, c] = complex.face_positions(f);
        out.push(a);
        out.push(b);
        out.push(c);
        out.push((a + b) * 0.5);
        out.push((b + c) * 0.5);
        out.push((c + a) * 0.5);
        out.push((a + b + c) / 3.0);
    }
    out
}

/// For each shell `[r, r+w]`, the Hausdorff distance between the 1/r-rescaled
/// mesh sample in the shell and the unit-sphere cone trace.
pub fn check_hausdorff_asymptotics(
    complex: &SurfaceComplex,
    spec: &ConeSpec,
    shells: &[(f64, f64)],
) -> Result<Vec<(f64, f64)>, VerifyError> {
    let trace = sample_trace(spec, 0.005);
    let sample = mesh_point_sample(complex);
    let mut out = Vec::with_capacity(shells.len());
    for &(r0, r1) in shells {
        let shell: Vec<Vector3<f64>> = sample
            .iter()
            .filter(|p| {
                let n = p.norm();
                n >= r0 && n <= r1
            })
            .map(|p| p / r0)
            .collect();
        if shell.is_empty() {
            return Err(VerifyError::EmptyShell { r0, r1 });
        }
        out.push((r0, hausdorff_distance(&shell, &trace)));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Junction persistence across radii.

#[derive(Debug, Clone)]
pub struct PersistenceRecord {
    /// Chart radius (radial compactification) of the junction core per state.
    pub chart_radii: Vec<f64>,
    /// Hausdorff distance between consecutive junction cores.
    pub core_hausdorff: Vec<f64>,
    pub curve_counts: Vec<usize>,
    pub quad_counts: Vec<usize>,
    /// Largest chart-radius variation across consecutive states.
    pub max_radius_variation: f64,
    /// Angle-of-parallelism threshold distance mapped through the chart.
    pub delta1_chart: f64,
    /// Radius of the fixed comparison ball (the first truncation radius).
    pub core_ball: f64,
}

impl PersistenceRecord {
    pub fn counts_stable(&self) -> bool {
        self.curve_counts.windows(2).all(|w| w[0] == w[1])
            && self.quad_counts.windows(2).all(|w| w[0] == w[1])
    }
}

/// Track the junction core (triple-curve and quadruple-point vertices inside
/// the fixed ball of the first radius) across a radius schedule.
pub fn check_persistence(states: &[&SurfaceComplex]) -> Result<PersistenceRecord, VerifyError> {
    if states.len() < 2 {
        return Err(VerifyError::NeedTwoStates);
    }
    let core_ball = states[0].truncation_radius;
    let mut chart_radii = Vec::with_capacity(states.len());
    let mut cores: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(states.len());
    let mut curve_counts = Vec::new();
    let mut quad_counts = Vec::new();

    for complex in states {
        let topo = Topology::build(complex);
        let jg = extract_junctions(complex, &topo)?;
        curve_counts.push(jg.triple_curves.len());
        quad_counts.push(jg.quadruple_points.len());
        let core: Vec<Vector3<f64>> = jg
            .junction_vertices()
            .into_iter()
            .map(|v| complex.vertices[v])
            .filter(|p| p.norm() <= core_ball * (1.0 + 1e-9))
            .collect();
        let radius = core
            .iter()
            .map(|p| euclid_to_ball(p).u.norm())
            .fold(0.0f64, f64::max);
        chart_radii.push(radius);
        cores.push(core);
    }

    let mut core_hausdorff = Vec::with_capacity(states.len() - 1);
    for w in cores.windows(2) {
        let d = if w[0].is_empty() && w[1].is_empty() {
            0.0
        } else {
            hausdorff_distance(&w[0], &w[1])
        };
        core_hausdorff.push(d);
    }
    let max_radius_variation = chart_radii
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0f64, f64::max);

    Ok(PersistenceRecord {
        chart_radii,
        core_hausdorff,
        curve_counts,
        quad_counts,
        max_radius_variation,
        delta1_chart: hyperbolic_radius_to_ball(parallelism_threshold_120()),
        core_ball,
    })
}

// ---------------------------------------------------------------------------
// Full report.

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub tolerances: ToleranceProfile,
    pub k_ring: usize,
    /// Effective resolution; median edge length when absent.
    pub h_eff: Option<f64>,
    /// Shells for the Hausdorff check; an interior default when absent.
    pub shells: Option<Vec<(f64, f64)>>,
    /// Annulus for planar-end fits; an interior default when absent.
    pub end_annulus: Option<(f64, f64)>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tolerances: ToleranceProfile::default(),
            k_ring: 2,
            h_eff: None,
            shells: None,
            end_annulus: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    /// `(name, passed)` in a fixed, deterministic order.
    pub checks: Vec<(String, bool)>,
    /// `(name, value)` in a fixed, deterministic order.
    pub metrics: Vec<(String, f64)>,
    pub triple: TripleAngleStats,
    pub quads: QuadStats,
    pub solid: SolidAngleStats,
    pub hausdorff: Vec<(f64, f64)>,
    /// Per-arc decay profiles `(arc, [(r, sup|u|)])` for fitted ends.
    pub ends: Vec<(usize, Vec<(f64, f64)>)>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|&(_, ok)| ok)
    }
}

/// Run every check against a validated complex and aggregate pass/fail
/// results against the tolerance profile.
pub fn full_report(
    complex: &SurfaceComplex,
    spec: &ConeSpec,
    config: &VerifyConfig,
) -> Result<VerificationReport, VerifyError> {
    let outcome = validate(complex);
    if !outcome.is_ok() {
        return Err(VerifyError::InvalidComplex {
            violations: outcome.violations.len(),
        });
    }
    let topo = Topology::build(complex);
    let junctions = extract_junctions(complex, &topo)?;
    let tol = &config.tolerances;
    let radius = complex.truncation_radius;
    let h_eff = config.h_eff.unwrap_or_else(|| complex.median_edge_length());

    let components = connected_components(complex).len();
    let triple = check_triple_angles(complex, &topo, &junctions);
    let quads = check_quadruple(complex, &junctions);
    let solid = check_solid_angles(complex, &topo, &junctions)?;
    let residual = expander_residual(complex, &topo, config.k_ring);

    let shells = config.shells.clone().unwrap_or_else(|| {
        [0.5, 0.6, 0.7, 0.8]
            .iter()
            .map(|f| (f * radius, f * radius + h_eff))
            .collect()
    });
    let hausdorff = check_hausdorff_asymptotics(complex, spec, &shells)?;

    let (end_r0, end_r1) = config
        .end_annulus
        .unwrap_or((0.55 * radius, 0.9 * radius));
    let mut ends = Vec::new();
    for arc in 0..spec.arcs.len() {
        let plane = end_plane_of_arc(spec, arc, 0.2);
        if let Ok(sample) = fit_planar_end(
            complex,
            &plane,
            end_r0,
            end_r1,
            ((end_r1 - end_r0) / 10.0).max(h_eff),
            0.5 * end_r0,
        ) {
            ends.push((arc, end_decay(&sample, 4)));
        }
    }

    // Pass/fail aggregation; junction-free meshes pass junction checks
    // vacuously.
    let tol_residual = tol.residual_factor * h_eff;
    let triple_ok = triple.sample_count == 0 || triple.max_deviation_deg <= tol.triple_deg;
    let balance_ok = triple.sample_count == 0 || triple.max_balance <= tol.balance;
    let quad_ok =
        quads.per_point.is_empty() || quads.max_angle_deviation_deg <= tol.quad_deg;
    let quad_balance_ok = quads.per_point.is_empty() || quads.max_balance <= tol.balance * 1.5;
    let solid_ok = solid.values.is_empty()
        || solid.min_value >= solid_angle_lower_bound() - tol.solid_sr;
    let residual_ok = residual.unmasked_count == 0 || residual.max_abs <= tol_residual;
    let hausdorff_ok = hausdorff
        .last()
        .map(|&(r, d)| d <= tol.hausdorff_factor * h_eff / r)
        .unwrap_or(true);
    let ends_ok = ends.iter().all(|(_, profile)| {
        profile.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12)
    });
    let connected_ok = components == 1;

    let checks = vec![
        ("connected".to_string(), connected_ok),
        ("triple_angle".to_string(), triple_ok),
        ("balance".to_string(), balance_ok),
        ("quad_angle".to_string(), quad_ok),
        ("quad_balance".to_string(), quad_balance_ok),
        ("solid_angle".to_string(), solid_ok),
        ("residual".to_string(), residual_ok),
        ("hausdorff".to_string(), hausdorff_ok),
        ("end_decay".to_string(), ends_ok),
    ];

    let energy = weighted_area(complex).map_err(|_| VerifyError::InvalidComplex {
        violations: 1,
    })?;

    let mut metrics = vec![
        ("components".to_string(), components as f64),
        ("triple_curves".to_string(), junctions.triple_curves.len() as f64),
        (
            "quadruple_points".to_string(),
            junctions.quadruple_points.len() as f64,
        ),
        ("h_eff".to_string(), h_eff),
        ("energy_total".to_string(), energy.total),
        ("energy_logscale".to_string(), energy.log_scale),
        ("triple_max_dev_deg".to_string(), triple.max_deviation_deg),
        ("triple_max_balance".to_string(), triple.max_balance),
        (
            "quad_max_dev_deg".to_string(),
            quads.max_angle_deviation_deg,
        ),
        ("quad_max_balance".to_string(), quads.max_balance),
        ("solid_angle_min_sr".to_string(), solid.min_value),
        (
            "solid_angle_bound_sr".to_string(),
            solid_angle_lower_bound(),
        ),
        ("residual_max".to_string(), residual.max_abs),
        ("residual_rms".to_string(), residual.rms),
        ("residual_tol".to_string(), tol_residual),
        ("density_sheet".to_string(), DENSITY_SHEET),
        ("density_triple".to_string(), DENSITY_TRIPLE),
        ("density_quadruple".to_string(), density_quadruple()),
    ];
    for (i, &(r, d)) in hausdorff.iter().enumerate() {
        metrics.push((format!("hausdorff_shell{i}_r"), r));
        metrics.push((format!("hausdorff_shell{i}_d"), d));
    }
    for (arc, profile) in &ends {
        for (k, &(r, sup)) in profile.iter().enumerate() {
            metrics.push((format!("end{arc}_band{k}_r"), r));
            metrics.push((format!("end{arc}_band{k}_sup"), sup));
        }
    }

    Ok(VerificationReport {
        checks,
        metrics,
        triple,
        quads,
        solid,
        hausdorff,
        ends,
    })
}

/// The asymptotic plane of one cone arc, with an angular margin keeping the
/// fit away from the junction rays.
pub fn end_plane_of_arc(spec: &ConeSpec, arc: usize, margin: f64) -> EndPlane {
    let (e1, e2, theta) = spec.arc_frame(arc);
    let normal = e1.cross(&e2);
    let rec = &spec.arcs[arc];
    let (pair, _) = crate::complex::PhasePair::new(rec.left, rec.right);
    let m = margin.min(theta / 3.0);
    EndPlane {
        normal,
        e1,
        e2,
        sector: Some((m, theta - m)),
        phases: Some(pair),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone;
    use crate::models::rotation_about;
    use crate::templates::{instantiate, TemplateKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn y_mesh(radius: f64, h: f64) -> SurfaceComplex {
        instantiate(TemplateKind::YSheet, &cone::y_cone(), radius, h, false).unwrap()
    }

    #[test]
    fn exact_y_measures_120_degrees() {
        let mesh = y_mesh(1.0, 0.2);
        let topo = Topology::build(&mesh);
        let jg = extract_junctions(&mesh, &topo).unwrap();
        let stats = check_triple_angles(&mesh, &topo, &jg);
        assert!(stats.sample_count > 0);
        assert!(stats.max_deviation_deg < 1e-10, "dev {}", stats.max_deviation_deg);
        assert!(stats.max_balance < 1e-12, "balance {}", stats.max_balance);
    }

    #[test]
    fn skew_y_reports_30_degree_deviation() {
        // Three half planes at azimuths 0, 90, 225: consecutive angles
        // 90/135/135.
        let spec = cone::y_cone_longitudes(&[0.0, 0.5 * std::f64::consts::PI, 1.25 * std::f64::consts::PI]);
        let mesh = instantiate(TemplateKind::ConeVerbatim, &spec, 1.0, 0.2, true).unwrap();
        let topo = Topology::build(&mesh);
        let jg = extract_junctions(&mesh, &topo).unwrap();
        let stats = check_triple_angles(&mesh, &topo, &jg);
        assert!((stats.max_deviation_deg - 30.0).abs() < 1e-9);
        assert!(stats.max_balance > 0.1);
    }

    #[test]
    fn tetra_frame_measures_tetrahedral_angles() {
        let mesh = instantiate(TemplateKind::TetraCone, &cone::tetra_cone(), 1.0, 0.15, false)
            .unwrap();
        let topo = Topology::build(&mesh);
        let jg = extract_junctions(&mesh, &topo).unwrap();
        assert_eq!(jg.quadruple_points.len(), 1);
        let stats = check_quadruple(&mesh, &jg);
        assert_eq!(stats.per_point[0].tangents.len(), 4);
        assert_eq!(stats.per_point[0].pairwise_deg.len(), 6);
        assert!(stats.max_angle_deviation_deg < 1e-9, "dev {}", stats.max_angle_deviation_deg);
        assert!(stats.max_balance < 1e-10);
    }

    #[test]
    fn perturbed_tetra_tangent_breaks_balance() {
        let mut mesh =
            instantiate(TemplateKind::TetraCone, &cone::tetra_cone(), 1.0, 0.15, false).unwrap();
        // Rotate everything near one ray by 10 degrees about an orthogonal
        // axis through the origin.
        let ray = nalgebra::Vector3::new(1.0, 1.0, 1.0).normalize();
        let axis = crate::ends::orthonormal_to(&ray);
        let rot = rotation_about(&axis, 10.0f64.to_radians());
        for v in mesh.vertices.iter_mut() {
            if v.norm() > 1e-12 && v.normalize().dot(&ray) > 0.95 {
                *v = rot * *v;
            }
        }
        let topo = Topology::build(&mesh);
        let jg = extract_junctions(&mesh, &topo).unwrap();
        let stats = check_quadruple(&mesh, &jg);
        assert!(stats.max_balance > 0.1, "balance {}", stats.max_balance);
    }

    #[test]
    fn tetra_solid_angles_partition_the_sphere() {
        let mesh = instantiate(TemplateKind::TetraCone, &cone::tetra_cone(), 1.0, 0.15, false)
            .unwrap();
        let topo = Topology::build(&mesh);
        let jg = extract_junctions(&mesh, &topo).unwrap();
        let stats = check_solid_angles(&mesh, &topo, &jg).unwrap();
        assert_eq!(stats.values.len(), 4);
        let mut total = 0.0;
        for &(_, _, omega) in &stats.values {
            // Symmetry partition of 4 pi into four equal pieces.
            assert!((omega - std::f64::consts::PI).abs() < 1e-9, "omega {omega}");
            assert!(omega >= solid_angle_lower_bound());
            total += omega;
        }
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn half_space_solid_angle_is_2pi() {
        let disk = crate::testmesh::flat_disk(1.0, 0.3);
        let topo = Topology::build(&disk);
        // Any interior manifold vertex: each side subtends a half space.
        let v = 0;
        let upper = solid_angle_of_phase(&disk, &topo, v, PhaseLabel(1)).unwrap();
        assert!((upper - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn squeezed_cone_falls_below_the_bound() {
        // Cone over a circle with half-apex angle 40 degrees: solid angle
        // 2 pi (1 - cos 40) < bound.
        use crate::complex::{BoundaryMark, FaceRecord, PhasePair};
        let half_apex = 40.0f64.to_radians();
        let m = 40;
        let mut vertices = vec![Vector3::zeros()];
        let mut faces = Vec::new();
        for j in 0..m {
            let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            vertices.push(Vector3::new(
                half_apex.sin() * t.cos(),
                half_apex.sin() * t.sin(),
                half_apex.cos(),
            ));
        }
        for j in 0..m {
            faces.push(FaceRecord {
                vertices: [0, 1 + j, 1 + (j + 1) % m],
                phases: PhasePair::new(PhaseLabel(1), PhaseLabel(2)).0,
            });
        }
        let marks = vec![BoundaryMark::Interior; vertices.len()];
        let cone_mesh = SurfaceComplex::new(vertices, faces, 2, marks, 1.0);
        let topo = Topology::build(&cone_mesh);
        let omega = solid_angle_of_phase(&cone_mesh, &topo, 0, PhaseLabel(1)).unwrap();
        // The inscribed 40-gon undershoots the smooth cap by O(m^-2).
        let expect = 2.0 * std::f64::consts::PI * (1.0 - half_apex.cos());
        assert!((omega - expect).abs() < 0.01, "omega {omega} vs {expect}");
        assert!(omega < solid_angle_lower_bound());
    }

    #[test]
    fn hausdorff_distance_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<Vector3<f64>> = (0..50)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        assert_eq!(hausdorff_distance(&a, &a), 0.0);
        let b: Vec<Vector3<f64>> = a.iter().map(|p| p + Vector3::new(0.3, 0.0, 0.0)).collect();
        let d1 = hausdorff_distance(&a, &b);
        let d2 = hausdorff_distance(&b, &a);
        assert_eq!(d1, d2);
        assert!(d1 <= 0.3 + 1e-12);
    }

    #[test]
    fn exact_cone_shells_are_within_sampling_resolution() {
        let spec = cone::y_cone();
        let mesh = y_mesh(2.0, 0.15);
        let shells = vec![(1.0, 1.15), (1.4, 1.55)];
        let result = check_hausdorff_asymptotics(&mesh, &spec, &shells).unwrap();
        for (r, d) in result {
            // Radial shell width over r plus sampling slack.
            assert!(d <= 0.15 / r + 0.02, "shell {r}: {d}");
        }
    }

    #[test]
    fn offset_plane_shell_distance_decays() {
        let spec = cone::single_circle();
        let mut disk = crate::testmesh::flat_disk(4.0, 0.2);
        let d = 0.3;
        for v in disk.vertices.iter_mut() {
            v.z += d;
        }
        let shells = vec![(1.5, 1.7), (2.5, 2.7), (3.4, 3.6)];
        let result = check_hausdorff_asymptotics(&disk, &spec, &shells).unwrap();
        for w in result.windows(2) {
            assert!(w[1].1 < w[0].1, "not decreasing: {result:?}");
        }
        // Roughly d / r.
        assert!((result[0].1 - d / 1.5).abs() < 0.12);
    }

    #[test]
    fn angle_checks_are_rotation_invariant() {
        let mesh = y_mesh(1.0, 0.2);
        let topo = Topology::build(&mesh);
        let jg = extract_junctions(&mesh, &topo).unwrap();
        let base = check_triple_angles(&mesh, &topo, &jg);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let rot = rotation_about(&axis, rng.gen_range(0.0..std::f64::consts::TAU));
        let mut rotated = mesh.clone();
        for v in rotated.vertices.iter_mut() {
            *v = rot * *v;
        }
        let topo2 = Topology::build(&rotated);
        let jg2 = extract_junctions(&rotated, &topo2).unwrap();
        let after = check_triple_angles(&rotated, &topo2, &jg2);
        assert!((base.max_deviation_deg - after.max_deviation_deg).abs() < 1e-9);
    }

    #[test]
    fn persistence_of_identical_states_is_stable() {
        let m1 = y_mesh(1.0, 0.2);
        let m2 = {
            let mut m = y_mesh(1.0, 0.2);
            m.truncation_radius = 1.0;
            m
        };
        let record = check_persistence(&[&m1, &m2]).unwrap();
        assert!(record.counts_stable());
        assert!(record.max_radius_variation < 1e-12);
        assert!((record.delta1_chart - 0.2679491924311227).abs() < 1e-12);
    }

    #[test]
    fn flat_sheet_report_is_vacuous_and_passes() {
        let spec = cone::single_circle();
        let mesh = instantiate(TemplateKind::FlatSheet, &spec, 2.0, 0.2, false).unwrap();
        let report = full_report(&mesh, &spec, &VerifyConfig::default()).unwrap();
        assert!(report.all_passed(), "checks: {:?}", report.checks);
        assert_eq!(report.triple.sample_count, 0);
        assert!(report.quads.per_point.is_empty());
    }

    #[test]
    fn report_is_refused_for_invalid_mesh() {
        let spec = cone::cross_cone();
        let mesh = instantiate(TemplateKind::ConeVerbatim, &spec, 1.0, 0.25, true).unwrap();
        assert!(matches!(
            full_report(&mesh, &spec, &VerifyConfig::default()),
            Err(VerifyError::InvalidComplex { .. })
        ));
    }

    #[test]
    fn solid_angles_sum_to_4pi_on_triple_curves() {
        let mesh = y_mesh(1.0, 0.2);
        let topo = Topology::build(&mesh);
        let jg = extract_junctions(&mesh, &topo).unwrap();
        // An interior triple-curve vertex is surrounded by three phases.
        let curve = &jg.triple_curves[0];
        let v = curve.vertices[curve.vertices.len() / 2];
        let mut total = 0.0;
        for phase in [1, 2, 3] {
            total += solid_angle_of_phase(&mesh, &topo, v, PhaseLabel(phase)).unwrap();
        }
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-8);
    }
}
