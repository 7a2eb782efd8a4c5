//! Initial-topology templates: meshes spanning the boundary trace of a cone
//! at a chosen truncation radius.
//!
//! Distinct templates over the same cone encode distinct junction
//! combinatorics; the two rotated variants of the cross resolution give the
//! two local minimizers of the crossing cone.

use nalgebra::Vector3;
use thiserror::Error;

use crate::complex::{BoundaryMark, FaceRecord, PhaseLabel, PhasePair, SurfaceComplex};
use crate::cone::{boundary_chains, validate_cone, ConeSpec};
use crate::energy::{vertex_weighted_area_at_offset, vertex_weighted_area_gradient_at_offset};
use crate::lbfgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    FlatSheet,
    YSheet,
    TetraCone,
    CrossResolvedA,
    CrossResolvedB,
    ConeVerbatim,
}

impl TemplateKind {
    pub fn name(&self) -> &'static str {
        match self {
            TemplateKind::FlatSheet => "flat-sheet",
            TemplateKind::YSheet => "y-sheet",
            TemplateKind::TetraCone => "tetra-cone",
            TemplateKind::CrossResolvedA => "cross-resolved-a",
            TemplateKind::CrossResolvedB => "cross-resolved-b",
            TemplateKind::ConeVerbatim => "cone-verbatim",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::all().into_iter().find(|k| k.name() == name)
    }

    pub fn all() -> Vec<Self> {
        vec![
            TemplateKind::FlatSheet,
            TemplateKind::YSheet,
            TemplateKind::TetraCone,
            TemplateKind::CrossResolvedA,
            TemplateKind::CrossResolvedB,
            TemplateKind::ConeVerbatim,
        ]
    }
}

/// Named template with its generator, as exposed through the library API.
#[derive(Debug, Clone, Copy)]
pub struct TopologyTemplate {
    pub kind: TemplateKind,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{template}` does not fit this cone: {reason}")]
    Mismatch { template: String, reason: String },
    #[error("cone spec fails validation ({violations} violations); pass --allow-nonregular to build anyway")]
    ConeInvalid { violations: usize },
    #[error("bad template parameters: {0}")]
    BadParameters(String),
}

/// Build the initial complex of `kind` spanning the trace of `spec` at
/// truncation radius `radius` with target edge length `h`.
pub fn instantiate(
    kind: TemplateKind,
    spec: &ConeSpec,
    radius: f64,
    h: f64,
    allow_nonregular: bool,
) -> Result<SurfaceComplex, TemplateError> {
    if !(radius > 0.0) || !(h > 0.0) || h > radius {
        return Err(TemplateError::BadParameters(format!(
            "need 0 < h <= radius, got radius {radius}, h {h}"
        )));
    }
    let report = validate_cone(spec);
    if !report.is_ok() && !allow_nonregular {
        return Err(TemplateError::ConeInvalid {
            violations: report.violations.len(),
        });
    }
    match kind {
        TemplateKind::FlatSheet => flat_sheet(spec, radius, h),
        TemplateKind::YSheet => {
            check_y(spec)?;
            Ok(verbatim(spec, radius, h))
        }
        TemplateKind::TetraCone => {
            check_tetra(spec)?;
            Ok(verbatim(spec, radius, h))
        }
        TemplateKind::CrossResolvedA => cross_resolved(spec, radius, h, false),
        TemplateKind::CrossResolvedB => cross_resolved(spec, radius, h, true),
        TemplateKind::ConeVerbatim => Ok(verbatim(spec, radius, h)),
    }
}

// ---------------------------------------------------------------------------
// Shared building blocks.

struct Builder {
    vertices: Vec<Vector3<f64>>,
    marks: Vec<BoundaryMark>,
    faces: Vec<FaceRecord>,
}

impl Builder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            marks: Vec::new(),
            faces: Vec::new(),
        }
    }

    fn vertex(&mut self, p: Vector3<f64>, mark: BoundaryMark) -> usize {
        self.vertices.push(p);
        self.marks.push(mark);
        self.vertices.len() - 1
    }

    /// Append a sheet: orient all triangles so the representative normal
    /// points along `desired`, then record them with `pair`.
    fn sheet(&mut self, mut tris: Vec<[usize; 3]>, pair: PhasePair, desired: Vector3<f64>) {
        tris.retain(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
        let mut best = (0.0f64, Vector3::zeros());
        for t in &tris {
            let n = (self.vertices[t[1]] - self.vertices[t[0]])
                .cross(&(self.vertices[t[2]] - self.vertices[t[0]]));
            let a = n.norm();
            if a > best.0 {
                best = (a, n);
            }
        }
        if best.1.dot(&desired) < 0.0 {
            for t in tris.iter_mut() {
                t.swap(1, 2);
            }
        }
        for t in tris {
            self.faces.push(FaceRecord {
                vertices: t,
                phases: pair,
            });
        }
    }

    fn finish(self, phase_count: u32, radius: f64) -> SurfaceComplex {
        SurfaceComplex::new(self.vertices, self.faces, phase_count, self.marks, radius)
    }
}

/// Zip two ordered vertex rows into a triangle strip, shortest diagonal
/// first; exact ties break on vertex-index parity.
fn stitch_pair(vertices: &[Vector3<f64>], a: &[usize], b: &[usize], out: &mut Vec<[usize; 3]>) {
    let mut i = 0;
    let mut j = 0;
    while i + 1 < a.len() || j + 1 < b.len() {
        let advance_a = if i + 1 >= a.len() {
            false
        } else if j + 1 >= b.len() {
            true
        } else {
            let da = (vertices[a[i + 1]] - vertices[b[j]]).norm();
            let db = (vertices[b[j + 1]] - vertices[a[i]]).norm();
            if (da - db).abs() <= 1e-12 * (da + db) {
                (a[i] + b[j]) % 2 == 0
            } else {
                da < db
            }
        };
        if advance_a {
            out.push([a[i], b[j], a[i + 1]]);
            i += 1;
        } else {
            out.push([a[i], b[j], b[j + 1]]);
            j += 1;
        }
    }
}

fn stitch_rows(vertices: &[Vector3<f64>], rows: &[Vec<usize>]) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for w in rows.windows(2) {
        stitch_pair(vertices, &w[0], &w[1], &mut out);
    }
    out
}

/// Phase pair and desired normal direction for a planar cone sector: the
/// oriented normal points from the smaller label into the larger one.
fn sector_orientation(spec: &ConeSpec, arc: usize) -> (PhasePair, Vector3<f64>) {
    let left = spec.arcs[arc].left;
    let right = spec.arcs[arc].right;
    let (pair, _) = PhasePair::new(left, right);
    let left_normal = spec.arc_left_normal(arc);
    let desired = if pair.b == left {
        left_normal
    } else {
        -left_normal
    };
    (pair, desired)
}

// ---------------------------------------------------------------------------
// cone-verbatim (also backs y-sheet and tetra-cone).

/// Mesh the cone itself: one planar sector per arc, sharing ray chains along
/// node directions and a single apex vertex at the origin.
fn verbatim(spec: &ConeSpec, radius: f64, h: f64) -> SurfaceComplex {
    let n = ((radius / h).ceil() as usize).max(1);
    let mut b = Builder::new();
    let origin = b.vertex(Vector3::zeros(), BoundaryMark::Interior);

    // Ray chains: ray[node][k-1] = vertex at radius k/n along the node dir.
    let mut rays: Vec<Vec<usize>> = Vec::with_capacity(spec.nodes.len());
    for node in &spec.nodes {
        let dir = node.dir.normalize();
        let chain = (1..=n)
            .map(|k| {
                let mark = if k == n {
                    BoundaryMark::Sphere
                } else {
                    BoundaryMark::Interior
                };
                b.vertex(dir * (radius * k as f64 / n as f64), mark)
            })
            .collect();
        rays.push(chain);
    }

    for arc in 0..spec.arcs.len() {
        let (_, _, theta) = spec.arc_frame(arc);
        let [na, nb] = spec.arcs[arc].nodes;
        let mut rows: Vec<Vec<usize>> = vec![vec![origin]];
        for k in 1..=n {
            let rho = radius * k as f64 / n as f64;
            let m = ((theta * rho / h).ceil() as usize).max(1);
            let mark = if k == n {
                BoundaryMark::Sphere
            } else {
                BoundaryMark::Interior
            };
            let mut row = Vec::with_capacity(m + 1);
            for j in 0..=m {
                if j == 0 {
                    row.push(rays[na][k - 1]);
                } else if j == m {
                    row.push(rays[nb][k - 1]);
                } else {
                    row.push(b.vertex(rho * spec.arc_point(arc, theta * j as f64 / m as f64), mark));
                }
            }
            rows.push(row);
        }
        let tris = stitch_rows(&b.vertices, &rows);
        let (pair, desired) = sector_orientation(spec, arc);
        b.sheet(tris, pair, desired);
    }

    b.finish(spec.region_count, radius)
}

// ---------------------------------------------------------------------------
// flat-sheet: equilibrated polar disk for a single-plane cone.

fn check_flat(spec: &ConeSpec) -> Result<(Vector3<f64>, Vector3<f64>), TemplateError> {
    let mismatch = |reason: &str| TemplateError::Mismatch {
        template: "flat-sheet".into(),
        reason: reason.into(),
    };
    if !spec.triple_nodes().is_empty() {
        return Err(mismatch("cone has triple points"));
    }
    if spec.region_count != 2 {
        return Err(mismatch("cone does not have exactly two regions"));
    }
    let chains = boundary_chains(spec);
    if chains.len() != 1 || !chains[0].closed {
        return Err(mismatch("trace is not a single closed circle"));
    }
    let normal = spec.arc_left_normal(0).normalize();
    for arc in 1..spec.arcs.len() {
        let other = spec.arc_left_normal(arc).normalize();
        if normal.cross(&other).norm() > 1e-9 {
            return Err(mismatch("arcs are not coplanar"));
        }
    }
    let ex = spec.nodes[0].dir.normalize();
    Ok((normal, ex))
}

struct PolarDisk {
    ex: Vector3<f64>,
    ey: Vector3<f64>,
    radius: f64,
    rings: usize,
    m: usize,
    pair: PhasePair,
    flip: bool,
}

impl PolarDisk {
    /// Build the disk for interior radii `r`, two entries per interior ring
    /// (even- and odd-indexed vertices form distinct symmetry classes under
    /// the union-jack diagonals and equilibrate at slightly different radii).
    /// The outer ring is pinned at `radius`. Union-jack diagonals keep every
    /// radial vertex plane a mirror symmetry, so the tangential gradient
    /// vanishes exactly.
    fn build(&self, interior: &[f64]) -> SurfaceComplex {
        let mut b = Builder::new();
        let center = b.vertex(Vector3::zeros(), BoundaryMark::Interior);
        let mut ring_ids: Vec<Vec<usize>> = Vec::with_capacity(self.rings);
        for k in 1..=self.rings {
            let mark = if k == self.rings {
                BoundaryMark::Sphere
            } else {
                BoundaryMark::Interior
            };
            let mut ring = Vec::with_capacity(self.m);
            for j in 0..self.m {
                let rk = if k == self.rings {
                    self.radius
                } else {
                    interior[2 * (k - 1) + j % 2]
                };
                let t = 2.0 * std::f64::consts::PI * j as f64 / self.m as f64;
                ring.push(b.vertex(rk * (t.cos() * self.ex + t.sin() * self.ey), mark));
            }
            ring_ids.push(ring);
        }

        let mut tris = Vec::new();
        for j in 0..self.m {
            tris.push([center, ring_ids[0][j], ring_ids[0][(j + 1) % self.m]]);
        }
        for k in 0..self.rings - 1 {
            let inner = &ring_ids[k];
            let outer = &ring_ids[k + 1];
            for j in 0..self.m {
                let jn = (j + 1) % self.m;
                let (a, bb, c, d) = (inner[j], inner[jn], outer[j], outer[jn]);
                if j % 2 == 0 {
                    tris.push([a, bb, d]);
                    tris.push([a, d, c]);
                } else {
                    tris.push([a, bb, c]);
                    tris.push([bb, d, c]);
                }
            }
        }
        if self.flip {
            for t in tris.iter_mut() {
                t.swap(1, 2);
            }
        }
        let mut builder = b;
        for t in tris {
            builder.faces.push(FaceRecord {
                vertices: t,
                phases: self.pair,
            });
        }
        builder.finish(2, self.radius)
    }

    /// Radial equilibrium of the per-class ring radii under the solver's
    /// vertex-rule functional. With the union-jack mirror symmetries the full
    /// gradient field reduces to two radial derivatives per interior ring,
    /// so the built disk starts at a discrete critical point.
    fn equilibrate(&self) -> Vec<f64> {
        let n = self.rings;
        if n < 2 {
            return Vec::new();
        }
        let mut init = Vec::with_capacity(2 * (n - 1));
        for k in 1..n {
            let r = self.radius * k as f64 / n as f64;
            init.push(r);
            init.push(r);
        }
        let s0 = self.radius * self.radius / 4.0;
        let objective = |r: &[f64]| -> (f64, Vec<f64>) {
            let bad = (f64::INFINITY, vec![0.0; r.len()]);
            let mut prev = (0.0, 0.0);
            for pair in r.chunks(2) {
                if !(pair[0] > prev.0 && pair[1] > prev.1) {
                    return bad;
                }
                prev = (pair[0], pair[1]);
            }
            if prev.0 >= self.radius || prev.1 >= self.radius {
                return bad;
            }
            let mesh = self.build(r);
            let energy = match vertex_weighted_area_at_offset(&mesh, s0) {
                Ok(e) => e,
                Err(_) => return bad,
            };
            let grad = match vertex_weighted_area_gradient_at_offset(&mesh, s0) {
                Ok(g) => g,
                Err(_) => return bad,
            };
            // Ring k occupies vertices 1 + (k-1) m .. 1 + k m; classes by
            // vertex parity within the ring.
            let mut dr = vec![0.0; r.len()];
            for k in 0..n - 1 {
                let start = 1 + k * self.m;
                for j in 0..self.m {
                    let v = start + j;
                    let radial = mesh.vertices[v].normalize();
                    dr[2 * k + j % 2] += grad[v].dot(&radial);
                }
            }
            (energy, dr)
        };
        lbfgs::minimize(
            init,
            objective,
            lbfgs::MinimizeOptions {
                max_iters: 1000,
                grad_inf_tol: 1e-12,
                ..Default::default()
            },
        )
    }
}

fn flat_sheet(spec: &ConeSpec, radius: f64, h: f64) -> Result<SurfaceComplex, TemplateError> {
    let (normal, ex) = check_flat(spec)?;
    let ey = normal.cross(&ex);
    let rings = ((radius / h).ceil() as usize).max(2);
    let m = 2 * (((std::f64::consts::PI * radius) / h).ceil() as usize).max(3);

    let left = spec.arcs[0].left;
    let right = spec.arcs[0].right;
    let (pair, _) = PhasePair::new(left, right);
    // CCW triangles in the (ex, ey) frame have normal +arc_left_normal,
    // which points into the left region; the stored normal must point into
    // pair.b.
    let flip = pair.b != left;

    let disk = PolarDisk {
        ex,
        ey,
        radius,
        rings,
        m,
        pair,
        flip,
    };
    let interior = disk.equilibrate();
    Ok(disk.build(&interior))
}

// ---------------------------------------------------------------------------
// y-sheet and tetra-cone compatibility (both mesh the cone verbatim).

fn check_y(spec: &ConeSpec) -> Result<(), TemplateError> {
    let mismatch = |reason: &str| TemplateError::Mismatch {
        template: "y-sheet".into(),
        reason: reason.into(),
    };
    let triples = spec.triple_nodes();
    if triples.len() != 2 {
        return Err(mismatch("need exactly two triple nodes"));
    }
    let a = spec.nodes[triples[0]].dir.normalize();
    let b = spec.nodes[triples[1]].dir.normalize();
    if (a + b).norm() > 1e-9 {
        return Err(mismatch("triple nodes are not antipodal"));
    }
    if spec.region_count != 3 {
        return Err(mismatch("cone does not have three regions"));
    }
    let chains = boundary_chains(spec);
    if chains.len() != 3 {
        return Err(mismatch("trace is not three half circles"));
    }
    for chain in &chains {
        if chain.closed || (chain.total_angle() - std::f64::consts::PI).abs() > 1e-9 {
            return Err(mismatch("a trace chain is not a half circle"));
        }
    }
    Ok(())
}

fn check_tetra(spec: &ConeSpec) -> Result<(), TemplateError> {
    let mismatch = |reason: &str| TemplateError::Mismatch {
        template: "tetra-cone".into(),
        reason: reason.into(),
    };
    let triples = spec.triple_nodes();
    if triples.len() != 4 || spec.nodes.len() != 4 {
        return Err(mismatch("need exactly four triple nodes"));
    }
    if spec.arcs.len() != 6 || spec.region_count != 4 {
        return Err(mismatch("need six arcs and four regions"));
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let dot = spec.nodes[triples[i]]
                .dir
                .normalize()
                .dot(&spec.nodes[triples[j]].dir.normalize());
            if (dot + 1.0 / 3.0).abs() > 1e-6 {
                return Err(mismatch("nodes are not a regular tetrahedron"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cross-resolved: lens resolution of a two-plane crossing.

/// Connector half-width of the initial strip, as a fraction of the radius.
/// Any positive width works; the optimizer finds the true lens shape.
pub const CROSS_STRIP_WIDTH: f64 = 0.3;

fn cross_resolved(
    spec: &ConeSpec,
    radius: f64,
    h: f64,
    rotated: bool,
) -> Result<SurfaceComplex, TemplateError> {
    let template = if rotated {
        "cross-resolved-b"
    } else {
        "cross-resolved-a"
    };
    let mismatch = |reason: &str| TemplateError::Mismatch {
        template: template.into(),
        reason: reason.into(),
    };

    let hubs = spec.triple_nodes();
    if hubs.len() != 2 {
        return Err(mismatch("need exactly two crossing nodes"));
    }
    let north = spec.nodes[hubs[0]].dir.normalize();
    let south = spec.nodes[hubs[1]].dir.normalize();
    if (north + south).norm() > 1e-9 {
        return Err(mismatch("crossing nodes are not antipodal"));
    }
    if spec.region_count != 4 {
        return Err(mismatch("cone does not have four regions"));
    }
    let mut chains = boundary_chains(spec);
    if chains.len() != 4 {
        return Err(mismatch("trace is not four half circles"));
    }
    for chain in &chains {
        if chain.closed || (chain.total_angle() - std::f64::consts::PI).abs() > 1e-9 {
            return Err(mismatch("a trace chain is not a half circle"));
        }
    }

    // Equatorial direction of each chain, sorted by azimuth about the axis.
    let ex = crate::ends::orthonormal_to(&north);
    let ey = north.cross(&ex);
    let mid_dir = |chain: &crate::cone::BoundaryChain| -> Vector3<f64> {
        let p = chain.point(spec, chain.total_angle() / 2.0);
        (p - north * p.dot(&north)).normalize()
    };
    chains.sort_by(|a, b| {
        let ang = |c: &crate::cone::BoundaryChain| {
            let d = mid_dir(c);
            d.dot(&ey).atan2(d.dot(&ex))
        };
        ang(a).partial_cmp(&ang(b)).unwrap()
    });
    let dirs: Vec<Vector3<f64>> = chains.iter().map(mid_dir).collect();

    // Region label between consecutive chains, probed just off the bisector.
    let region_between = |k: usize| -> PhaseLabel {
        let kn = (k + 1) % 4;
        let probe = (dirs[k] + dirs[kn]).normalize();
        let (arc0, _) = chains[k].arcs[0];
        let lnorm = spec.arc_left_normal(arc0);
        if lnorm.dot(&probe) > 0.0 {
            spec.arcs[arc0].left
        } else {
            spec.arcs[arc0].right
        }
    };
    let regions: Vec<PhaseLabel> = (0..4).map(region_between).collect();
    let probes: Vec<(PhaseLabel, Vector3<f64>)> = (0..4)
        .map(|k| (regions[k], (dirs[k] + dirs[(k + 1) % 4]).normalize()))
        .collect();
    let probe_of = |label: PhaseLabel| -> Vector3<f64> {
        probes
            .iter()
            .find(|(l, _)| *l == label)
            .map(|&(_, d)| d)
            .expect("labels cover the four quadrant regions")
    };

    // Variant A joins chains 0,1 over the connector bisector; variant B is
    // the 90-degree rotation.
    let shift = if rotated { 1 } else { 0 };
    let group1 = [shift % 4, (shift + 1) % 4];
    let group2 = [(shift + 2) % 4, (shift + 3) % 4];
    let connector = (dirs[group1[0]] + dirs[group1[1]]).normalize();
    let strip_pair_labels = (
        regions[group1[1]],                // between chains group1[1], group2[0]
        regions[(group2[1]) % 4],          // between chains group2[1], group1[0]
    );

    let n_theta = (((std::f64::consts::PI * radius) / h).ceil() as usize).max(4);

    // Lens half-width profile: the design fraction of the radius at the
    // equator, tapered like the expander end decay toward the poles. A
    // constant fraction would leave a fat strip in the far field that the
    // fixed-topology solver must collapse by orders of magnitude.
    let half_width = |t: f64| {
        let z = radius * t.cos();
        CROSS_STRIP_WIDTH * t.sin() * (-z * z / 4.0).exp()
    };

    let mut b = Builder::new();
    let pole_n = b.vertex(north * radius, BoundaryMark::Sphere);
    let pole_s = b.vertex(-north * radius, BoundaryMark::Sphere);
    let theta_at = |i: usize| std::f64::consts::PI * i as f64 / n_theta as f64;

    // The two triple curves, bulging along +/-connector.
    let curve = |sign: f64, b: &mut Builder| -> Vec<usize> {
        let mut chain = Vec::with_capacity(n_theta + 1);
        chain.push(pole_n);
        for i in 1..n_theta {
            let t = theta_at(i);
            let p = radius * (t.cos() * north + half_width(t) * sign * connector);
            chain.push(b.vertex(p, BoundaryMark::Interior));
        }
        chain.push(pole_s);
        chain
    };
    let curve1 = curve(1.0, &mut b);
    let curve2 = curve(-1.0, &mut b);

    // Four outer sheets: rim half circle to one of the curves.
    for (&k, (curve_chain, sign)) in group1
        .iter()
        .chain(group2.iter())
        .zip([(&curve1, 1.0), (&curve1, 1.0), (&curve2, -1.0), (&curve2, -1.0)])
    {
        let d = dirs[k];
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n_theta + 1);
        for i in 0..=n_theta {
            if i == 0 {
                rows.push(vec![pole_n]);
                continue;
            }
            if i == n_theta {
                rows.push(vec![pole_s]);
                continue;
            }
            let t = theta_at(i);
            let rim = radius * (t.cos() * north + t.sin() * d);
            let target = radius * (t.cos() * north + half_width(t) * sign * connector);
            let width = (rim - target).norm().max(1e-12);
            let m = ((width / h).ceil() as usize).max(1);
            let mut row = Vec::with_capacity(m + 1);
            for j in 0..=m {
                if j == m {
                    row.push(curve_chain[i]);
                } else {
                    let s = j as f64 / m as f64;
                    let p = (1.0 - s) * rim + s * target;
                    let mark = if j == 0 {
                        BoundaryMark::Sphere
                    } else {
                        BoundaryMark::Interior
                    };
                    row.push(b.vertex(p, mark));
                }
            }
            rows.push(row);
        }
        let tris = stitch_rows(&b.vertices, &rows);
        let left = regions[(k + 3) % 4];
        let right = regions[k];
        let (pair, _) = PhasePair::new(left, right);
        let desired = probe_of(pair.b) - probe_of(pair.a);
        b.sheet(tris, pair, desired);
    }

    // Connector strip between the two curves.
    {
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n_theta + 1);
        for i in 0..=n_theta {
            if i == 0 {
                rows.push(vec![pole_n]);
                continue;
            }
            if i == n_theta {
                rows.push(vec![pole_s]);
                continue;
            }
            let t = theta_at(i);
            let hw = half_width(t);
            let width = (2.0 * hw * radius).max(1e-12);
            let m = ((width / h).ceil() as usize).max(1);
            let mut row = Vec::with_capacity(m + 1);
            for j in 0..=m {
                if j == 0 {
                    row.push(curve2[i]);
                } else if j == m {
                    row.push(curve1[i]);
                } else {
                    let u = -1.0 + 2.0 * j as f64 / m as f64;
                    let p = radius * (t.cos() * north + u * hw * connector);
                    row.push(b.vertex(p, BoundaryMark::Interior));
                }
            }
            rows.push(row);
        }
        let tris = stitch_rows(&b.vertices, &rows);
        let (pair, _) = PhasePair::new(strip_pair_labels.0, strip_pair_labels.1);
        let desired = probe_of(pair.b) - probe_of(pair.a);
        b.sheet(tris, pair, desired);
    }

    Ok(b.finish(spec.region_count, radius))
}
