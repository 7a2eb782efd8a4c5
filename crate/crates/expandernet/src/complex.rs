//! Phase-labeled non-manifold triangle complexes.
//!
//! A [`SurfaceComplex`] stores the interfaces of a multiphase partition as a
//! single triangle soup in which every face knows the ordered pair of phases
//! it separates. Edges may be incident to one face (free rim on the
//! truncation sphere), two faces (manifold interior of a sheet) or three
//! faces (triple-junction curve). Four or more incident faces are rejected:
//! non-regular crossings exist only as asymptotic cone data, never as mesh
//! edges.
//!
//! Junction topology (triple curves, quadruple points) is never stored; it is
//! derived from face incidence by [`extract_junctions`] so there is a single
//! source of truth.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use thiserror::Error;

/// Phase region label. `0` is the exterior/unassigned region, `1..=K` are the
/// phase regions of a complex with `phase_count` K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseLabel(pub u32);

/// Ordered pair of distinct phases `(a, b)` with `a < b`. The face normal
/// (right-hand rule on the vertex cycle) points from region `a` into region
/// `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhasePair {
    pub a: PhaseLabel,
    pub b: PhaseLabel,
}

impl PhasePair {
    /// Build a pair from two labels, swapping so that `a < b`. Returns the
    /// pair and `true` if the arguments were already in canonical order.
    pub fn new(x: PhaseLabel, y: PhaseLabel) -> (Self, bool) {
        if x.0 <= y.0 {
            (Self { a: x, b: y }, true)
        } else {
            (Self { a: y, b: x }, false)
        }
    }

    pub fn contains(&self, p: PhaseLabel) -> bool {
        self.a == p || self.b == p
    }

    pub fn other(&self, p: PhaseLabel) -> Option<PhaseLabel> {
        if p == self.a {
            Some(self.b)
        } else if p == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

/// One oriented triangle separating two phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceRecord {
    /// Vertex indices; the cycle orientation defines the normal via the
    /// right-hand rule, pointing from `phases.a` toward `phases.b`.
    pub vertices: [usize; 3],
    pub phases: PhasePair,
}

/// Per-vertex boundary classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMark {
    Interior,
    /// Vertex lies on the truncation sphere `|x| = R`.
    Sphere,
}

/// A labeled non-manifold triangle complex truncated at radius `R`.
#[derive(Debug, Clone)]
pub struct SurfaceComplex {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<FaceRecord>,
    pub phase_count: u32,
    pub marks: Vec<BoundaryMark>,
    pub truncation_radius: f64,
}

/// Relative tolerance factors shared across the crate.
pub const EPS_AREA_FACTOR: f64 = 1e-12;
pub const EPS_BDRY_FACTOR: f64 = 1e-9;

impl SurfaceComplex {
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        faces: Vec<FaceRecord>,
        phase_count: u32,
        marks: Vec<BoundaryMark>,
        truncation_radius: f64,
    ) -> Self {
        Self {
            vertices,
            faces,
            phase_count,
            marks,
            truncation_radius,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Diagonal of the axis-aligned bounding box (zero for empty meshes).
    pub fn bbox_diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (hi - lo).norm()
    }

    /// Degenerate-face area threshold, relative to the bounding box scale.
    pub fn eps_area(&self) -> f64 {
        let d = self.bbox_diagonal();
        EPS_AREA_FACTOR * d * d
    }

    /// Sphere-boundary distance tolerance, relative to the truncation radius.
    pub fn eps_bdry(&self) -> f64 {
        EPS_BDRY_FACTOR * self.truncation_radius
    }

    pub fn face_positions(&self, f: usize) -> [Vector3<f64>; 3] {
        let [i, j, k] = self.faces[f].vertices;
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [p0, p1, p2] = self.face_positions(f);
        0.5 * (p1 - p0).cross(&(p2 - p0)).norm()
    }

    /// Unit normal of face `f`, oriented from `phases.a` toward `phases.b`.
    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [p0, p1, p2] = self.face_positions(f);
        let n = (p1 - p0).cross(&(p2 - p0));
        let len = n.norm();
        if len == 0.0 {
            Vector3::zeros()
        } else {
            n / len
        }
    }

    pub fn face_centroid(&self, f: usize) -> Vector3<f64> {
        let [p0, p1, p2] = self.face_positions(f);
        (p0 + p1 + p2) / 3.0
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.marks[v] == BoundaryMark::Sphere
    }

    /// Longest edge over the whole complex.
    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for face in &self.faces {
            let [i, j, k] = face.vertices;
            m = m.max((self.vertices[i] - self.vertices[j]).norm());
            m = m.max((self.vertices[j] - self.vertices[k]).norm());
            m = m.max((self.vertices[k] - self.vertices[i]).norm());
        }
        m
    }

    /// Median edge length, used as the effective resolution of a mesh whose
    /// generation parameters are unknown (e.g. loaded from a file).
    pub fn median_edge_length(&self) -> f64 {
        let topo = Topology::build(self);
        let mut lens: Vec<f64> = topo
            .edges
            .iter()
            .map(|&(u, v)| (self.vertices[u] - self.vertices[v]).norm())
            .collect();
        if lens.is_empty() {
            return 0.0;
        }
        lens.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lens[lens.len() / 2]
    }
}

/// Edge/vertex incidence tables derived from the face list. Connectivity is
/// immutable while vertex positions move, so solvers build this once.
#[derive(Debug, Clone)]
pub struct Topology {
    /// Unique undirected edges `(u, v)` with `u < v`, in lexicographic order.
    pub edges: Vec<(usize, usize)>,
    /// Faces incident to each edge, in ascending face order (1 to 3 entries
    /// for a valid complex, possibly more for an invalid one).
    pub edge_faces: Vec<Vec<usize>>,
    /// Edge index lookup by `(min, max)` vertex pair.
    pub edge_index: BTreeMap<(usize, usize), usize>,
    /// Faces incident to each vertex, ascending.
    pub vertex_faces: Vec<Vec<usize>>,
    /// Edges incident to each vertex, ascending.
    pub vertex_edges: Vec<Vec<usize>>,
}

impl Topology {
    pub fn build(complex: &SurfaceComplex) -> Self {
        let nv = complex.vertices.len();
        let mut edge_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut edge_faces: Vec<Vec<usize>> = Vec::new();
        let mut vertex_faces: Vec<Vec<usize>> = vec![Vec::new(); nv];

        for (fi, face) in complex.faces.iter().enumerate() {
            let [a, b, c] = face.vertices;
            for &v in &[a, b, c] {
                if v < nv {
                    vertex_faces[v].push(fi);
                }
            }
            for &(u, v) in &[(a, b), (b, c), (c, a)] {
                if u >= nv || v >= nv || u == v {
                    continue;
                }
                let key = (u.min(v), u.max(v));
                let idx = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_faces.push(Vec::new());
                    edges.len() - 1
                });
                edge_faces[idx].push(fi);
            }
        }

        // Re-sort edges lexicographically so indices are reproducible
        // regardless of face order.
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&i| edges[i]);
        let mut remap = vec![0usize; edges.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let mut new_edges = vec![(0usize, 0usize); edges.len()];
        let mut new_edge_faces = vec![Vec::new(); edges.len()];
        for old in 0..edges.len() {
            new_edges[remap[old]] = edges[old];
            new_edge_faces[remap[old]] = std::mem::take(&mut edge_faces[old]);
        }
        let mut edge_index = BTreeMap::new();
        for (i, &e) in new_edges.iter().enumerate() {
            edge_index.insert(e, i);
        }
        let mut vertex_edges: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for (i, &(u, v)) in new_edges.iter().enumerate() {
            vertex_edges[u].push(i);
            vertex_edges[v].push(i);
        }

        Self {
            edges: new_edges,
            edge_faces: new_edge_faces,
            edge_index,
            vertex_faces,
            vertex_edges,
        }
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        self.edge_index.get(&(u.min(v), u.max(v))).copied()
    }

    /// Vertices adjacent to `v` through any edge, ascending.
    pub fn vertex_neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.vertex_edges[v]
            .iter()
            .map(|&e| {
                let (a, b) = self.edges[e];
                if a == v {
                    b
                } else {
                    a
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// One violated invariant, with the offending element.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    VertexIndexOutOfRange { face: usize },
    RepeatedVertexInFace { face: usize },
    PhaseOutOfRange { face: usize },
    EqualPhases { face: usize },
    UnorderedPhasePair { face: usize },
    DegenerateFace { face: usize, area: f64 },
    /// Edge incident to 4 or more faces.
    EdgeOverIncident { edge: (usize, usize), count: usize },
    /// Rim edge whose endpoints are not both marked sphere-boundary.
    RimEdgeInteriorVertex { edge: (usize, usize) },
    /// Interior 2-face edge whose faces carry different phase pairs.
    MismatchedPhasePair { edge: (usize, usize) },
    /// Triple edge whose three faces do not realize the three pairs of one
    /// phase triple.
    BadTriplePhases { edge: (usize, usize) },
    /// Sphere-marked vertex off the truncation sphere.
    VertexOffSphere { vertex: usize, distance: f64 },
    MarksLengthMismatch,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::VertexIndexOutOfRange { face } => {
                write!(f, "face {face}: vertex index out of range")
            }
            Violation::RepeatedVertexInFace { face } => {
                write!(f, "face {face}: repeated vertex")
            }
            Violation::PhaseOutOfRange { face } => {
                write!(f, "face {face}: phase label exceeds phase count")
            }
            Violation::EqualPhases { face } => {
                write!(f, "face {face}: both phases equal")
            }
            Violation::UnorderedPhasePair { face } => {
                write!(f, "face {face}: phase pair not in (a < b) order")
            }
            Violation::DegenerateFace { face, area } => {
                write!(f, "face {face}: degenerate (area {area:e})")
            }
            Violation::EdgeOverIncident { edge, count } => {
                write!(f, "edge {edge:?}: {count} incident faces (max 3)")
            }
            Violation::RimEdgeInteriorVertex { edge } => {
                write!(f, "edge {edge:?}: rim edge with interior endpoint")
            }
            Violation::MismatchedPhasePair { edge } => {
                write!(f, "edge {edge:?}: interior 2-face edge with mismatched phase_pair")
            }
            Violation::BadTriplePhases { edge } => {
                write!(f, "edge {edge:?}: triple edge pairs do not form a phase triple")
            }
            Violation::VertexOffSphere { vertex, distance } => {
                write!(f, "vertex {vertex}: marked boundary but {distance:e} off the sphere")
            }
            Violation::MarksLengthMismatch => write!(f, "marks length differs from vertex count"),
        }
    }
}

/// Result of [`validate`]: violations are data, not errors.
#[derive(Debug, Clone, Default)]
pub struct ValidationOutcome {
    pub violations: Vec<Violation>,
}

impl ValidationOutcome {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every structural invariant of a complex and report all violations.
pub fn validate(complex: &SurfaceComplex) -> ValidationOutcome {
    let mut out = ValidationOutcome::default();
    let nv = complex.vertices.len();

    if complex.marks.len() != nv {
        out.violations.push(Violation::MarksLengthMismatch);
        return out;
    }

    let eps_area = complex.eps_area();
    for (fi, face) in complex.faces.iter().enumerate() {
        let [a, b, c] = face.vertices;
        if a >= nv || b >= nv || c >= nv {
            out.violations.push(Violation::VertexIndexOutOfRange { face: fi });
            continue;
        }
        if a == b || b == c || a == c {
            out.violations.push(Violation::RepeatedVertexInFace { face: fi });
            continue;
        }
        if face.phases.a.0 > complex.phase_count || face.phases.b.0 > complex.phase_count {
            out.violations.push(Violation::PhaseOutOfRange { face: fi });
        }
        if face.phases.a == face.phases.b {
            out.violations.push(Violation::EqualPhases { face: fi });
        } else if face.phases.a.0 > face.phases.b.0 {
            out.violations.push(Violation::UnorderedPhasePair { face: fi });
        }
        let area = complex.face_area(fi);
        if area < eps_area {
            out.violations.push(Violation::DegenerateFace { face: fi, area });
        }
    }

    let topo = Topology::build(complex);
    for (ei, faces) in topo.edge_faces.iter().enumerate() {
        let edge = topo.edges[ei];
        match faces.len() {
            1 => {
                let (u, v) = edge;
                if !complex.is_boundary_vertex(u) || !complex.is_boundary_vertex(v) {
                    out.violations.push(Violation::RimEdgeInteriorVertex { edge });
                }
            }
            2 => {
                if complex.faces[faces[0]].phases != complex.faces[faces[1]].phases {
                    out.violations.push(Violation::MismatchedPhasePair { edge });
                }
            }
            3 => {
                if triple_phases(complex, faces).is_none() {
                    out.violations.push(Violation::BadTriplePhases { edge });
                }
            }
            n => {
                out.violations.push(Violation::EdgeOverIncident { edge, count: n });
            }
        }
    }

    let eps_bdry = complex.eps_bdry();
    for v in 0..nv {
        if complex.is_boundary_vertex(v) {
            let d = (complex.vertices[v].norm() - complex.truncation_radius).abs();
            if d > eps_bdry {
                out.violations.push(Violation::VertexOffSphere { vertex: v, distance: d });
            }
        }
    }

    out
}

/// If the three faces realize exactly the three unordered pairs of a phase
/// triple `{i, j, k}`, return the triple sorted ascending.
pub fn triple_phases(complex: &SurfaceComplex, faces: &[usize]) -> Option<[PhaseLabel; 3]> {
    debug_assert_eq!(faces.len(), 3);
    let mut labels: Vec<PhaseLabel> = Vec::with_capacity(6);
    for &f in faces {
        labels.push(complex.faces[f].phases.a);
        labels.push(complex.faces[f].phases.b);
    }
    labels.sort();
    labels.dedup();
    if labels.len() != 3 {
        return None;
    }
    let triple = [labels[0], labels[1], labels[2]];
    let want: Vec<PhasePair> = vec![
        PhasePair::new(triple[0], triple[1]).0,
        PhasePair::new(triple[0], triple[2]).0,
        PhasePair::new(triple[1], triple[2]).0,
    ];
    let mut got: Vec<PhasePair> = faces.iter().map(|&f| complex.faces[f].phases).collect();
    got.sort();
    if got == want {
        Some(triple)
    } else {
        None
    }
}

/// Where a triple curve terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveEndpoint {
    /// Index into `JunctionGraph::quadruple_points`.
    Quadruple(usize),
    /// Sphere-boundary vertex id.
    Sphere(usize),
}

/// One triple curve: a chain of vertices along edges shared by three sheets.
#[derive(Debug, Clone)]
pub struct TripleCurve {
    /// Sorted phase triple `{i, j, k}`.
    pub phases: [PhaseLabel; 3],
    /// Vertex chain; for closed curves the first vertex is not repeated.
    pub vertices: Vec<usize>,
    pub closed: bool,
    /// Endpoints for open curves (start, end).
    pub endpoints: Option<(CurveEndpoint, CurveEndpoint)>,
}

impl TripleCurve {
    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.vertices.len()
        } else {
            self.vertices.len().saturating_sub(1)
        }
    }
}

/// One quadruple point: an interior vertex where four triple-curve germs meet.
#[derive(Debug, Clone)]
pub struct QuadruplePoint {
    pub vertex: usize,
    /// Sorted phase quadruple `{i, j, k, l}`.
    pub phases: [PhaseLabel; 4],
    /// Incident triple-curve ids, one per germ (a curve looping back appears
    /// twice).
    pub curves: [usize; 4],
}

/// Junction structure derived from face incidence.
#[derive(Debug, Clone, Default)]
pub struct JunctionGraph {
    pub triple_curves: Vec<TripleCurve>,
    pub quadruple_points: Vec<QuadruplePoint>,
}

impl JunctionGraph {
    pub fn is_empty(&self) -> bool {
        self.triple_curves.is_empty() && self.quadruple_points.is_empty()
    }

    /// All vertices lying on any triple curve or quadruple point.
    pub fn junction_vertices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for c in &self.triple_curves {
            out.extend_from_slice(&c.vertices);
        }
        for q in &self.quadruple_points {
            out.push(q.vertex);
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Error)]
pub enum JunctionError {
    #[error("vertex {vertex}: {germs} triple-curve germs (interior vertices allow 0, 2 or 4)")]
    JunctionDegree { vertex: usize, germs: usize },
    #[error("vertex {vertex}: two passing germs with different phase triples")]
    MixedTriplesAtVertex { vertex: usize },
    #[error("vertex {vertex}: 4 germs do not realize the four triples of a phase quadruple")]
    BadQuadruplePhases { vertex: usize },
    #[error("vertex {vertex}: quadruple point with {sheets} incident sheets (expected 6)")]
    BadQuadrupleSheets { vertex: usize, sheets: usize },
}

/// Extract the junction graph of a validated complex.
///
/// Sphere-boundary vertices always terminate curves. Interior vertices must
/// join 0, 2 (curve passes through) or 4 (quadruple point) triple-curve
/// germs; anything else signals an inadmissible topology.
pub fn extract_junctions(
    complex: &SurfaceComplex,
    topo: &Topology,
) -> Result<JunctionGraph, JunctionError> {
    let nv = complex.vertices.len();

    // Triple edges and their phase triples.
    let mut triple_edge: Vec<Option<[PhaseLabel; 3]>> = vec![None; topo.edges.len()];
    let mut vertex_germs: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (ei, faces) in topo.edge_faces.iter().enumerate() {
        if faces.len() == 3 {
            let triple = triple_phases(complex, faces).expect("validated complex");
            triple_edge[ei] = Some(triple);
            let (u, v) = topo.edges[ei];
            vertex_germs[u].push(ei);
            vertex_germs[v].push(ei);
        }
    }

    // Classify vertices.
    let mut is_breakpoint = vec![false; nv];
    let mut quad_vertices: Vec<usize> = Vec::new();
    for v in 0..nv {
        let germs = &vertex_germs[v];
        if germs.is_empty() {
            continue;
        }
        if complex.is_boundary_vertex(v) {
            is_breakpoint[v] = true;
            continue;
        }
        match germs.len() {
            2 => {
                if triple_edge[germs[0]] != triple_edge[germs[1]] {
                    return Err(JunctionError::MixedTriplesAtVertex { vertex: v });
                }
            }
            4 => {
                let mut triples: Vec<[PhaseLabel; 3]> =
                    germs.iter().map(|&e| triple_edge[e].unwrap()).collect();
                triples.sort();
                let mut labels: Vec<PhaseLabel> = triples.concat();
                labels.sort();
                labels.dedup();
                if labels.len() != 4 {
                    return Err(JunctionError::BadQuadruplePhases { vertex: v });
                }
                let mut want: Vec<[PhaseLabel; 3]> = (0..4)
                    .map(|skip| {
                        let mut t: Vec<PhaseLabel> = labels
                            .iter()
                            .enumerate()
                            .filter(|&(i, _)| i != skip)
                            .map(|(_, &l)| l)
                            .collect();
                        t.sort();
                        [t[0], t[1], t[2]]
                    })
                    .collect();
                want.sort();
                if triples != want {
                    return Err(JunctionError::BadQuadruplePhases { vertex: v });
                }
                // Six incident sheets: the C(4,2) phase pairs.
                let mut pairs: Vec<PhasePair> = topo.vertex_faces[v]
                    .iter()
                    .map(|&f| complex.faces[f].phases)
                    .collect();
                pairs.sort();
                pairs.dedup();
                if pairs.len() != 6 {
                    return Err(JunctionError::BadQuadrupleSheets {
                        vertex: v,
                        sheets: pairs.len(),
                    });
                }
                is_breakpoint[v] = true;
                quad_vertices.push(v);
            }
            n => {
                return Err(JunctionError::JunctionDegree { vertex: v, germs: n });
            }
        }
    }

    // Walk curves from breakpoints, then sweep up closed loops.
    let mut visited = vec![false; topo.edges.len()];
    let mut curves: Vec<TripleCurve> = Vec::new();
    let mut germ_curve: BTreeMap<(usize, usize), usize> = BTreeMap::new(); // (vertex, edge) -> curve id

    let other_end = |e: usize, v: usize| -> usize {
        let (a, b) = topo.edges[e];
        if a == v {
            b
        } else {
            a
        }
    };

    let walk = |start_v: usize,
                    start_e: usize,
                    visited: &mut Vec<bool>,
                    curves: &mut Vec<TripleCurve>,
                    germ_curve: &mut BTreeMap<(usize, usize), usize>| {
        let triple = triple_edge[start_e].unwrap();
        let mut chain = vec![start_v];
        let mut cur_v = start_v;
        let mut cur_e = start_e;
        loop {
            visited[cur_e] = true;
            let next_v = other_end(cur_e, cur_v);
            chain.push(next_v);
            if is_breakpoint[next_v] || next_v == start_v {
                let closed = next_v == start_v && !is_breakpoint[start_v];
                let id = curves.len();
                germ_curve.insert((start_v, start_e), id);
                germ_curve.insert((next_v, cur_e), id);
                if closed {
                    chain.pop();
                }
                curves.push(TripleCurve {
                    phases: triple,
                    vertices: chain,
                    closed,
                    endpoints: None,
                });
                return;
            }
            let germs = &vertex_germs[next_v];
            let next_e = if germs[0] == cur_e { germs[1] } else { germs[0] };
            cur_v = next_v;
            cur_e = next_e;
        }
    };

    for v in 0..nv {
        if !is_breakpoint[v] {
            continue;
        }
        for &e in &vertex_germs[v].clone() {
            if !visited[e] {
                walk(v, e, &mut visited, &mut curves, &mut germ_curve);
            }
        }
    }
    for ei in 0..topo.edges.len() {
        if triple_edge[ei].is_some() && !visited[ei] {
            let (u, _) = topo.edges[ei];
            walk(u, ei, &mut visited, &mut curves, &mut germ_curve);
        }
    }

    // Quadruple points with their incident curves.
    let mut quads: Vec<QuadruplePoint> = Vec::new();
    let mut quad_index: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in &quad_vertices {
        let mut labels: Vec<PhaseLabel> = vertex_germs[v]
            .iter()
            .flat_map(|&e| triple_edge[e].unwrap())
            .collect();
        labels.sort();
        labels.dedup();
        let mut curve_ids = [0usize; 4];
        for (i, &e) in vertex_germs[v].iter().enumerate() {
            curve_ids[i] = germ_curve[&(v, e)];
        }
        quad_index.insert(v, quads.len());
        quads.push(QuadruplePoint {
            vertex: v,
            phases: [labels[0], labels[1], labels[2], labels[3]],
            curves: curve_ids,
        });
    }

    // Endpoint map for open curves.
    for curve in curves.iter_mut() {
        if curve.closed {
            continue;
        }
        let classify = |v: usize| -> CurveEndpoint {
            if let Some(&q) = quad_index.get(&v) {
                CurveEndpoint::Quadruple(q)
            } else {
                CurveEndpoint::Sphere(v)
            }
        };
        let first = *curve.vertices.first().unwrap();
        let last = *curve.vertices.last().unwrap();
        curve.endpoints = Some((classify(first), classify(last)));
    }

    Ok(JunctionGraph {
        triple_curves: curves,
        quadruple_points: quads,
    })
}

/// Partition faces by edge-adjacency reachability; junction edges connect all
/// their incident faces. Components are sorted by smallest face id.
pub fn connected_components(complex: &SurfaceComplex) -> Vec<Vec<usize>> {
    let topo = Topology::build(complex);
    let nf = complex.faces.len();
    let mut parent: Vec<usize> = (0..nf).collect();

    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }

    for faces in &topo.edge_faces {
        for w in faces.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in 0..nf {
        let r = find(&mut parent, f);
        groups.entry(r).or_default().push(f);
    }
    groups.into_values().collect()
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("refinement would exceed the face cap of {cap} faces")]
    Overflow { cap: usize },
    #[error("refinement requires a valid complex: {0}")]
    Invalid(String),
}

/// Split edges longer than `1.5 * h` (longest first) until none remain.
///
/// Splitting an edge bisects every incident face, so rim, manifold and triple
/// edges all stay in their incidence class; rim midpoints are re-projected
/// onto the truncation sphere.
pub fn refine(
    complex: &SurfaceComplex,
    h: f64,
    max_faces: usize,
) -> Result<SurfaceComplex, RefineError> {
    let outcome = validate(complex);
    if !outcome.is_ok() {
        return Err(RefineError::Invalid(format!(
            "{} violations",
            outcome.violations.len()
        )));
    }

    let mut mesh = complex.clone();
    let threshold = 1.5 * h;

    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Item(f64, usize, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0
                .partial_cmp(&other.0)
                .unwrap()
                .then(self.1.cmp(&other.1))
                .then(self.2.cmp(&other.2))
        }
    }

    loop {
        let topo = Topology::build(&mesh);
        let mut heap: BinaryHeap<Item> = BinaryHeap::new();
        for &(u, v) in &topo.edges {
            let len = (mesh.vertices[u] - mesh.vertices[v]).norm();
            if len > threshold {
                heap.push(Item(len, u, v));
            }
        }
        if heap.is_empty() {
            return Ok(mesh);
        }
        // Split an independent set of long edges per pass. Any edge sharing a
        // vertex with a split edge may have stale incidence data and waits
        // for the next pass.
        let mut blocked = vec![false; mesh.vertices.len()];
        while let Some(Item(_, u, v)) = heap.pop() {
            if blocked[u] || blocked[v] {
                continue;
            }
            let ei = match topo.edge_id(u, v) {
                Some(e) => e,
                None => continue,
            };
            let incident = topo.edge_faces[ei].clone();
            if mesh.faces.len() + incident.len() > max_faces {
                return Err(RefineError::Overflow { cap: max_faces });
            }
            let mut mid = (mesh.vertices[u] + mesh.vertices[v]) * 0.5;
            let rim = incident.len() == 1;
            let mark = if rim {
                mid *= mesh.truncation_radius / mid.norm();
                BoundaryMark::Sphere
            } else {
                BoundaryMark::Interior
            };
            let w = mesh.vertices.len();
            mesh.vertices.push(mid);
            mesh.marks.push(mark);
            for &fi in &incident {
                let face = mesh.faces[fi];
                let [a, b, c] = face.vertices;
                let replace = |x: usize| if x == u { w } else { x };
                // First half keeps v -> w, second half keeps u -> w.
                let half1 = [
                    if a == v { w } else { a },
                    if b == v { w } else { b },
                    if c == v { w } else { c },
                ];
                let half2 = [replace(a), replace(b), replace(c)];
                mesh.faces[fi] = FaceRecord {
                    vertices: half1,
                    phases: face.phases,
                };
                mesh.faces.push(FaceRecord {
                    vertices: half2,
                    phases: face.phases,
                });
            }
            blocked[u] = true;
            blocked[v] = true;
        }
    }
}
