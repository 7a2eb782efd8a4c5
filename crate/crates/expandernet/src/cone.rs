//! Asymptotic cones as geodesic networks on the unit sphere.
//!
//! A [`ConeSpec`] prescribes the boundary datum at infinity: great-circle
//! arcs with left/right region labels, meeting at nodes. Triple nodes must
//! carry exactly three arcs at 120 degrees; helper nodes (tagged `h`) are
//! degree-2 smooth continuations used to encode full circles, since an arc's
//! endpoints must not be antipodal (two antipodal points do not determine a
//! great circle).
//!
//! Regions are extracted combinatorially: the darts around each node are
//! sorted counterclockwise (seen from outside the sphere) and face orbits of
//! the embedding are traversed. This yields exact arc counts and label
//! consistency checks with no sampling resolution.

use nalgebra::Vector3;

use crate::complex::PhaseLabel;

/// Default node-angle tolerance, degrees.
pub const DEFAULT_TOL_CONE_DEG: f64 = 0.1;
const UNIT_NORM_TOL: f64 = 1e-12;
const ANTIPODAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeNode {
    pub dir: Vector3<f64>,
    pub helper: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeArc {
    /// Endpoint node ids `[a, b]`; the arc is the minor great-circle arc
    /// from `a` to `b`.
    pub nodes: [usize; 2],
    /// Region on the left when walking `a -> b` seen from outside.
    pub left: PhaseLabel,
    pub right: PhaseLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    pub nodes: Vec<ConeNode>,
    pub arcs: Vec<ConeArc>,
    pub region_count: u32,
}

impl ConeSpec {
    /// Orthonormal frame of an arc: `(e1, e2, theta)` with the arc running
    /// `t in [0, theta]` along `cos(t) e1 + sin(t) e2`.
    pub fn arc_frame(&self, arc: usize) -> (Vector3<f64>, Vector3<f64>, f64) {
        let a = self.nodes[self.arcs[arc].nodes[0]].dir;
        let b = self.nodes[self.arcs[arc].nodes[1]].dir;
        let e1 = a.normalize();
        let mut e2 = b - e1 * b.dot(&e1);
        let n = e2.norm();
        if n < 1e-300 {
            // Degenerate (coincident endpoints); reported by validation.
            e2 = crate::ends::orthonormal_to(&e1);
        } else {
            e2 /= n;
        }
        let theta = b.normalize().dot(&e1).clamp(-1.0, 1.0).acos();
        (e1, e2, theta)
    }

    pub fn arc_point(&self, arc: usize, t: f64) -> Vector3<f64> {
        let (e1, e2, _) = self.arc_frame(arc);
        t.cos() * e1 + t.sin() * e2
    }

    pub fn arc_tangent(&self, arc: usize, t: f64) -> Vector3<f64> {
        let (e1, e2, _) = self.arc_frame(arc);
        -t.sin() * e1 + t.cos() * e2
    }

    /// Unit normal of the arc's great-circle plane, pointing to the left of
    /// the walk `a -> b`... the left region lies on the side this normal
    /// points into.
    pub fn arc_left_normal(&self, arc: usize) -> Vector3<f64> {
        let (e1, e2, theta) = self.arc_frame(arc);
        let mid = theta / 2.0;
        let p = mid.cos() * e1 + mid.sin() * e2;
        let t = -mid.sin() * e1 + mid.cos() * e2;
        p.cross(&t)
    }

    /// Outgoing unit tangent of an arc germ at one of its endpoint nodes.
    pub fn germ_tangent(&self, arc: usize, node: usize) -> Vector3<f64> {
        let (e1, e2, theta) = self.arc_frame(arc);
        if self.arcs[arc].nodes[0] == node {
            e2
        } else {
            debug_assert_eq!(self.arcs[arc].nodes[1], node);
            -(-theta.sin() * e1 + theta.cos() * e2)
        }
    }

    /// Non-helper node ids.
    pub fn triple_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].helper)
            .collect()
    }

    pub fn arcs_at_node(&self, node: usize) -> Vec<usize> {
        (0..self.arcs.len())
            .filter(|&a| self.arcs[a].nodes.contains(&node))
            .collect()
    }
}

/// One polyline of the boundary trace, matching one arc of the spec.
#[derive(Debug, Clone)]
pub struct TracePolyline {
    pub arc: usize,
    pub points: Vec<Vector3<f64>>,
}

/// Sample the trace `gamma^R` of the cone on the sphere of radius `R`:
/// each arc at angular spacing <= `h`, endpoints shared exactly between
/// adjacent arcs, scaled by `R` pointwise.
pub fn boundary_trace(spec: &ConeSpec, radius: f64, h: f64) -> Vec<TracePolyline> {
    let mut out = Vec::with_capacity(spec.arcs.len());
    for arc in 0..spec.arcs.len() {
        let (_, _, theta) = spec.arc_frame(arc);
        let n = ((theta / h).ceil() as usize).max(1);
        let mut points = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let p = if j == 0 {
                spec.nodes[spec.arcs[arc].nodes[0]].dir.normalize()
            } else if j == n {
                spec.nodes[spec.arcs[arc].nodes[1]].dir.normalize()
            } else {
                spec.arc_point(arc, theta * j as f64 / n as f64)
            };
            points.push(p * radius);
        }
        out.push(TracePolyline { arc, points });
    }
    out
}

/// Dense point sample of the unit-sphere trace, for Hausdorff comparisons.
pub fn sample_trace(spec: &ConeSpec, spacing: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for poly in boundary_trace(spec, 1.0, spacing) {
        out.extend(poly.points);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConeViolation {
    NodeNotUnit { node: usize, norm: f64 },
    IsolatedNode { node: usize },
    DegenerateArc { arc: usize },
    AntipodalArc { arc: usize },
    SelfLabeledArc { arc: usize },
    LabelOutOfRange { arc: usize },
    /// Non-helper node with other than 3 incident arcs.
    NodeArity { node: usize, arcs: usize },
    /// Helper node without exactly 2 smoothly continuing arcs.
    BrokenHelper { node: usize, arcs: usize, angle_deg: f64 },
    NodeAngle { node: usize, angles_deg: [f64; 3], max_dev_deg: f64 },
    ArcsCross { arc_a: usize, arc_b: usize },
    Disconnected { components: usize },
    RegionArcCount { region_label: u32, arcs: usize },
    RegionLabelInconsistent { labels: Vec<u32> },
    RegionCountMismatch { regions: usize, declared: u32 },
    RegionLabelReuse { label: u32 },
}

impl std::fmt::Display for ConeViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use ConeViolation::*;
        match self {
            NodeNotUnit { node, norm } => write!(f, "node {node}: |u| = {norm} is not 1"),
            IsolatedNode { node } => write!(f, "node {node}: no incident arcs"),
            DegenerateArc { arc } => write!(f, "arc {arc}: endpoints coincide"),
            AntipodalArc { arc } => write!(
                f,
                "arc {arc}: endpoints are antipodal (insert a helper node; the great circle is undetermined)"
            ),
            SelfLabeledArc { arc } => write!(f, "arc {arc}: same region on both sides"),
            LabelOutOfRange { arc } => write!(f, "arc {arc}: region label out of range"),
            NodeArity { node, arcs } => write!(f, "node {node} with {arcs} incident arcs"),
            BrokenHelper { node, arcs, angle_deg } => write!(
                f,
                "helper node {node}: {arcs} arcs meeting at {angle_deg:.3} degrees (want 2 at 180)"
            ),
            NodeAngle { node, angles_deg, max_dev_deg } => write!(
                f,
                "node {node}: angles {:.3}/{:.3}/{:.3} deviate {max_dev_deg:.3} degrees from 120",
                angles_deg[0], angles_deg[1], angles_deg[2]
            ),
            ArcsCross { arc_a, arc_b } => write!(f, "arcs {arc_a} and {arc_b} cross away from a shared node"),
            Disconnected { components } => write!(f, "network has {components} components"),
            RegionArcCount { region_label, arcs } => write!(
                f,
                "region {region_label} bounded by {arcs} arcs (want 2 to 5)"
            ),
            RegionLabelInconsistent { labels } => {
                write!(f, "region sees inconsistent labels {labels:?}")
            }
            RegionCountMismatch { regions, declared } => {
                write!(f, "{regions} regions traced but k = {declared}")
            }
            RegionLabelReuse { label } => write!(f, "label {label} used by two distinct regions"),
        }
    }
}

/// One region of the sphere traced as a face orbit of the network.
#[derive(Debug, Clone)]
pub struct ConeRegion {
    /// Arc ids in traversal order (with multiplicity).
    pub arcs: Vec<usize>,
    /// The consistent label, if the orbit saw only one.
    pub label: Option<u32>,
}

/// Full validation result; `is_ok()` when no violations.
#[derive(Debug, Clone, Default)]
pub struct ConeReport {
    pub violations: Vec<ConeViolation>,
    /// Angles (degrees) of the three germs at every triple node.
    pub node_angles: Vec<(usize, [f64; 3])>,
    pub regions: Vec<ConeRegion>,
    pub notes: Vec<String>,
}

impl ConeReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn tangent_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let e1 = crate::ends::orthonormal_to(n);
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Directed half-arcs, sorted counterclockwise around each node as seen from
/// outside the sphere. Dart `2a` walks arc `a` forward, `2a + 1` backward.
struct RotationSystem {
    /// Outgoing darts per node, CCW-sorted.
    order: Vec<Vec<usize>>,
    /// Position of each dart within its tail node's order.
    position: Vec<usize>,
}

impl RotationSystem {
    fn build(spec: &ConeSpec) -> Self {
        let nd = spec.arcs.len() * 2;
        let tail = |d: usize| {
            let arc = d / 2;
            spec.arcs[arc].nodes[d % 2]
        };
        let mut order: Vec<Vec<usize>> = vec![Vec::new(); spec.nodes.len()];
        for d in 0..nd {
            order[tail(d)].push(d);
        }
        for (node, darts) in order.iter_mut().enumerate() {
            let n = spec.nodes[node].dir.normalize();
            let (e1, e2) = tangent_frame(&n);
            darts.sort_by(|&p, &q| {
                let angle = |d: usize| {
                    let t = spec.germ_tangent(d / 2, node);
                    t.dot(&e2).atan2(t.dot(&e1))
                };
                angle(p)
                    .partial_cmp(&angle(q))
                    .unwrap()
                    .then(p.cmp(&q))
            });
        }
        let mut position = vec![0usize; nd];
        for darts in &order {
            for (i, &d) in darts.iter().enumerate() {
                position[d] = i;
            }
        }
        Self { order, position }
    }

    /// Next dart of the face lying to the left of `d`.
    fn face_next(&self, spec: &ConeSpec, d: usize) -> usize {
        let arc = d / 2;
        let head = spec.arcs[arc].nodes[1 - d % 2];
        let rev = d ^ 1;
        let darts = &self.order[head];
        let pos = self.position[rev];
        darts[(pos + darts.len() - 1) % darts.len()]
    }
}

/// Trace all regions of the network as face orbits.
pub fn extract_regions(spec: &ConeSpec) -> Vec<ConeRegion> {
    if spec.arcs.is_empty() {
        return Vec::new();
    }
    let rot = RotationSystem::build(spec);
    let nd = spec.arcs.len() * 2;
    let mut seen = vec![false; nd];
    let mut out = Vec::new();
    for start in 0..nd {
        if seen[start] {
            continue;
        }
        let mut arcs = Vec::new();
        let mut labels = Vec::new();
        let mut d = start;
        loop {
            seen[d] = true;
            let arc = d / 2;
            arcs.push(arc);
            labels.push(if d % 2 == 0 {
                spec.arcs[arc].left.0
            } else {
                spec.arcs[arc].right.0
            });
            d = rot.face_next(spec, d);
            if d == start {
                break;
            }
        }
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        out.push(ConeRegion {
            arcs,
            label: if distinct.len() == 1 {
                Some(distinct[0])
            } else {
                None
            },
        });
    }
    out
}

fn angle_between_unit(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

fn point_in_arc(spec: &ConeSpec, arc: usize, p: &Vector3<f64>, tol: f64) -> bool {
    let a = spec.nodes[spec.arcs[arc].nodes[0]].dir.normalize();
    let b = spec.nodes[spec.arcs[arc].nodes[1]].dir.normalize();
    let theta = angle_between_unit(&a, &b);
    angle_between_unit(&a, p) + angle_between_unit(p, &b) <= theta + tol
}

fn arcs_cross(spec: &ConeSpec, i: usize, j: usize) -> bool {
    let (ai, bi) = (spec.arcs[i].nodes[0], spec.arcs[i].nodes[1]);
    let (aj, bj) = (spec.arcs[j].nodes[0], spec.arcs[j].nodes[1]);
    let node_tol = 1e-9;
    let shares = |p: &Vector3<f64>| {
        [ai, bi, aj, bj]
            .iter()
            .any(|&n| (spec.nodes[n].dir.normalize() - p).norm() < node_tol)
    };
    let pa = spec.nodes[ai].dir.normalize();
    let pb = spec.nodes[bi].dir.normalize();
    let qa = spec.nodes[aj].dir.normalize();
    let qb = spec.nodes[bj].dir.normalize();
    let m1 = pa.cross(&pb);
    let m2 = qa.cross(&qb);
    let d = m1.cross(&m2);
    if d.norm() < 1e-12 {
        // Same great circle: interior overlap iff some interior point of one
        // lies inside the other.
        let (_, _, theta_i) = spec.arc_frame(i);
        for frac in [0.25, 0.5, 0.75] {
            let p = spec.arc_point(i, theta_i * frac);
            if point_in_arc(spec, j, &p, 1e-9) && !shares(&p) {
                return true;
            }
        }
        return false;
    }
    let d = d.normalize();
    for cand in [d, -d] {
        if point_in_arc(spec, i, &cand, 1e-9)
            && point_in_arc(spec, j, &cand, 1e-9)
            && !shares(&cand)
        {
            return true;
        }
    }
    false
}

/// Validate a cone against the admissibility rules with the default angle
/// tolerance.
pub fn validate_cone(spec: &ConeSpec) -> ConeReport {
    validate_cone_with(spec, DEFAULT_TOL_CONE_DEG)
}

/// Validate with an explicit node-angle tolerance in degrees.
pub fn validate_cone_with(spec: &ConeSpec, tol_deg: f64) -> ConeReport {
    let mut report = ConeReport::default();

    for (i, node) in spec.nodes.iter().enumerate() {
        let norm = node.dir.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            report
                .violations
                .push(ConeViolation::NodeNotUnit { node: i, norm });
        }
    }

    for (i, arc) in spec.arcs.iter().enumerate() {
        let a = spec.nodes[arc.nodes[0]].dir.normalize();
        let b = spec.nodes[arc.nodes[1]].dir.normalize();
        if arc.nodes[0] == arc.nodes[1] || (a - b).norm() < ANTIPODAL_TOL {
            report.violations.push(ConeViolation::DegenerateArc { arc: i });
            continue;
        }
        if (a + b).norm() < ANTIPODAL_TOL {
            report.violations.push(ConeViolation::AntipodalArc { arc: i });
        }
        if arc.left == arc.right {
            report.violations.push(ConeViolation::SelfLabeledArc { arc: i });
        }
        for lab in [arc.left, arc.right] {
            if lab.0 == 0 || lab.0 > spec.region_count {
                report.violations.push(ConeViolation::LabelOutOfRange { arc: i });
                break;
            }
        }
    }
    if !report.violations.is_empty() {
        // Geometry below assumes well-formed arcs.
        return report;
    }

    // Node structure.
    let mut triple_count = 0;
    for node in 0..spec.nodes.len() {
        let arcs = spec.arcs_at_node(node);
        if arcs.is_empty() {
            report.violations.push(ConeViolation::IsolatedNode { node });
            continue;
        }
        let tangents: Vec<Vector3<f64>> = arcs
            .iter()
            .map(|&a| spec.germ_tangent(a, node))
            .collect();
        if spec.nodes[node].helper {
            if arcs.len() != 2 {
                report.violations.push(ConeViolation::BrokenHelper {
                    node,
                    arcs: arcs.len(),
                    angle_deg: f64::NAN,
                });
            } else {
                let ang = angle_between_unit(&tangents[0], &tangents[1]).to_degrees();
                if (ang - 180.0).abs() > tol_deg {
                    report.violations.push(ConeViolation::BrokenHelper {
                        node,
                        arcs: 2,
                        angle_deg: ang,
                    });
                }
            }
            continue;
        }
        triple_count += 1;
        if arcs.len() != 3 {
            report.violations.push(ConeViolation::NodeArity {
                node,
                arcs: arcs.len(),
            });
            continue;
        }
        // Consecutive angular gaps in the tangent plane.
        let n = spec.nodes[node].dir.normalize();
        let (e1, e2) = tangent_frame(&n);
        let mut angles: Vec<f64> = tangents
            .iter()
            .map(|t| t.dot(&e2).atan2(t.dot(&e1)))
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut gaps = [0.0f64; 3];
        for k in 0..3 {
            let next = if k == 2 {
                angles[0] + 2.0 * std::f64::consts::PI
            } else {
                angles[k + 1]
            };
            gaps[k] = (next - angles[k]).to_degrees();
        }
        let max_dev = gaps
            .iter()
            .map(|g| (g - 120.0).abs())
            .fold(0.0f64, f64::max);
        report.node_angles.push((node, gaps));
        if max_dev > tol_deg {
            report.violations.push(ConeViolation::NodeAngle {
                node,
                angles_deg: gaps,
                max_dev_deg: max_dev,
            });
        }
    }
    if triple_count == 0 {
        report.notes.push("no triple points".to_string());
    }

    // Arcs intersect only at shared nodes.
    for i in 0..spec.arcs.len() {
        for j in i + 1..spec.arcs.len() {
            if arcs_cross(spec, i, j) {
                report
                    .violations
                    .push(ConeViolation::ArcsCross { arc_a: i, arc_b: j });
            }
        }
    }

    // Connectivity over nodes.
    let mut parent: Vec<usize> = (0..spec.nodes.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for arc in &spec.arcs {
        let (a, b) = (
            find(&mut parent, arc.nodes[0]),
            find(&mut parent, arc.nodes[1]),
        );
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut roots: Vec<usize> = (0..spec.nodes.len())
        .map(|n| find(&mut parent, n))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    if roots.len() > 1 {
        report.violations.push(ConeViolation::Disconnected {
            components: roots.len(),
        });
    }

    // Regions: only meaningful when node arities are already admissible.
    let arity_ok = !report.violations.iter().any(|v| {
        matches!(
            v,
            ConeViolation::NodeArity { .. } | ConeViolation::BrokenHelper { .. }
        )
    });
    if arity_ok {
        let regions = extract_regions(spec);
        let mut used_labels: Vec<u32> = Vec::new();
        for region in &regions {
            match region.label {
                Some(label) => {
                    if used_labels.contains(&label) {
                        report
                            .violations
                            .push(ConeViolation::RegionLabelReuse { label });
                    }
                    used_labels.push(label);
                    if region.arcs.len() < 2 || region.arcs.len() > 5 {
                        report.violations.push(ConeViolation::RegionArcCount {
                            region_label: label,
                            arcs: region.arcs.len(),
                        });
                    }
                }
                None => {
                    let mut labels: Vec<u32> = Vec::new();
                    for (&arc, _) in region.arcs.iter().zip(region.arcs.iter()) {
                        labels.push(spec.arcs[arc].left.0);
                        labels.push(spec.arcs[arc].right.0);
                    }
                    labels.sort_unstable();
                    labels.dedup();
                    report
                        .violations
                        .push(ConeViolation::RegionLabelInconsistent { labels });
                }
            }
        }
        if regions.len() != spec.region_count as usize {
            report.violations.push(ConeViolation::RegionCountMismatch {
                regions: regions.len(),
                declared: spec.region_count,
            });
        }
        report.regions = regions;
    }

    report
}

/// Maximal smooth runs of arcs, merged across helper nodes and broken at all
/// other nodes. Boundary vertices slide along one chain during optimization.
#[derive(Debug, Clone)]
pub struct BoundaryChain {
    /// `(arc id, reversed)` in walk order.
    pub arcs: Vec<(usize, bool)>,
    /// Cumulative angle at the start of each arc, plus the total at the end.
    pub offsets: Vec<f64>,
    pub closed: bool,
}

impl BoundaryChain {
    pub fn total_angle(&self) -> f64 {
        *self.offsets.last().unwrap()
    }

    /// Position on the unit sphere at chain parameter `t` (clamped for open
    /// chains, wrapped for closed ones).
    pub fn point(&self, spec: &ConeSpec, t: f64) -> Vector3<f64> {
        let (arc, rev, local) = self.locate(t);
        let (_, _, theta) = spec.arc_frame(arc);
        let s = if rev { theta - local } else { local };
        spec.arc_point(arc, s)
    }

    pub fn tangent(&self, spec: &ConeSpec, t: f64) -> Vector3<f64> {
        let (arc, rev, local) = self.locate(t);
        let (_, _, theta) = spec.arc_frame(arc);
        let s = if rev { theta - local } else { local };
        let tan = spec.arc_tangent(arc, s);
        if rev {
            -tan
        } else {
            tan
        }
    }

    pub fn clamp(&self, t: f64) -> f64 {
        if self.closed {
            t.rem_euclid(self.total_angle())
        } else {
            t.clamp(0.0, self.total_angle())
        }
    }

    fn locate(&self, t: f64) -> (usize, bool, f64) {
        let t = self.clamp(t);
        for (k, &(arc, rev)) in self.arcs.iter().enumerate() {
            if t <= self.offsets[k + 1] || k == self.arcs.len() - 1 {
                return (arc, rev, t - self.offsets[k]);
            }
        }
        unreachable!()
    }

    /// Closest chain parameter to an arbitrary direction, by per-arc
    /// projection.
    pub fn project(&self, spec: &ConeSpec, dir: &Vector3<f64>) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (k, &(arc, rev)) in self.arcs.iter().enumerate() {
            let (e1, e2, theta) = spec.arc_frame(arc);
            let mut local = dir.dot(&e2).atan2(dir.dot(&e1));
            if local < 0.0 {
                local += 2.0 * std::f64::consts::PI;
            }
            let local = local.clamp(0.0, theta);
            let p = local.cos() * e1 + local.sin() * e2;
            let d = (dir.normalize() - p).norm();
            if d < best.0 {
                let along = if rev { theta - local } else { local };
                best = (d, self.offsets[k] + along);
            }
        }
        best.1
    }
}

/// Build the boundary chains of a spec.
pub fn boundary_chains(spec: &ConeSpec) -> Vec<BoundaryChain> {
    let mut arc_used = vec![false; spec.arcs.len()];
    let mut chains = Vec::new();

    let next_through_helper = |node: usize, from_arc: usize| -> Option<usize> {
        if !spec.nodes[node].helper {
            return None;
        }
        spec.arcs_at_node(node)
            .into_iter()
            .find(|&a| a != from_arc)
    };

    // Open chains start at non-helper nodes.
    for start_arc in 0..spec.arcs.len() {
        if arc_used[start_arc] {
            continue;
        }
        let tail = spec.arcs[start_arc].nodes[0];
        let head = spec.arcs[start_arc].nodes[1];
        for (first_node, _other) in [(tail, head), (head, tail)] {
            if spec.nodes[first_node].helper || arc_used[start_arc] {
                continue;
            }
            let mut arcs = Vec::new();
            let mut node = first_node;
            let mut arc = start_arc;
            loop {
                let rev = spec.arcs[arc].nodes[1] == node;
                arcs.push((arc, rev));
                arc_used[arc] = true;
                let next_node = if rev {
                    spec.arcs[arc].nodes[0]
                } else {
                    spec.arcs[arc].nodes[1]
                };
                match next_through_helper(next_node, arc) {
                    Some(a) if !arc_used[a] => {
                        node = next_node;
                        arc = a;
                    }
                    _ => break,
                }
            }
            chains.push(finish_chain(spec, arcs, false));
        }
    }

    // Remaining arcs belong to closed helper loops (full circles).
    for start_arc in 0..spec.arcs.len() {
        if arc_used[start_arc] {
            continue;
        }
        let mut arcs = Vec::new();
        let mut node = spec.arcs[start_arc].nodes[0];
        let mut arc = start_arc;
        loop {
            let rev = spec.arcs[arc].nodes[1] == node;
            arcs.push((arc, rev));
            arc_used[arc] = true;
            let next_node = if rev {
                spec.arcs[arc].nodes[0]
            } else {
                spec.arcs[arc].nodes[1]
            };
            match next_through_helper(next_node, arc) {
                Some(a) if !arc_used[a] => {
                    node = next_node;
                    arc = a;
                }
                _ => break,
            }
        }
        chains.push(finish_chain(spec, arcs, true));
    }

    chains
}

fn finish_chain(spec: &ConeSpec, arcs: Vec<(usize, bool)>, closed: bool) -> BoundaryChain {
    let mut offsets = vec![0.0];
    for &(arc, _) in &arcs {
        let (_, _, theta) = spec.arc_frame(arc);
        offsets.push(offsets.last().unwrap() + theta);
    }
    BoundaryChain {
        arcs,
        offsets,
        closed,
    }
}

// ---------------------------------------------------------------------------
// Built-in cone constructions.

fn classify_sides(
    nodes: &[ConeNode],
    pairs: &[[usize; 2]],
    region_count: u32,
    classify: impl Fn(&Vector3<f64>) -> u32,
) -> ConeSpec {
    let mut spec = ConeSpec {
        nodes: nodes.to_vec(),
        arcs: pairs
            .iter()
            .map(|&nodes| ConeArc {
                nodes,
                left: PhaseLabel(0),
                right: PhaseLabel(0),
            })
            .collect(),
        region_count,
    };
    for i in 0..spec.arcs.len() {
        let (_, _, theta) = spec.arc_frame(i);
        let mid = spec.arc_point(i, theta / 2.0);
        let left_dir = spec.arc_left_normal(i);
        let eps = 1e-3;
        let left_probe = (mid + eps * left_dir).normalize();
        let right_probe = (mid - eps * left_dir).normalize();
        spec.arcs[i].left = PhaseLabel(classify(&left_probe));
        spec.arcs[i].right = PhaseLabel(classify(&right_probe));
    }
    spec
}

/// One plane (the equator): two regions, no triple points. Encoded with
/// three helper nodes since arc endpoints must not be antipodal.
pub fn single_circle() -> ConeSpec {
    let mut nodes = Vec::new();
    for k in 0..3 {
        let lon = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        nodes.push(ConeNode {
            dir: Vector3::new(lon.cos(), lon.sin(), 0.0),
            helper: true,
        });
    }
    classify_sides(
        &nodes,
        &[[0, 1], [1, 2], [2, 0]],
        2,
        |d| if d.z >= 0.0 { 1 } else { 2 },
    )
}

/// Three half-planes meeting along the z-axis at 120 degrees: two triple
/// nodes at the poles, three regions.
pub fn y_cone() -> ConeSpec {
    let mut nodes = vec![
        ConeNode {
            dir: Vector3::new(0.0, 0.0, 1.0),
            helper: false,
        },
        ConeNode {
            dir: Vector3::new(0.0, 0.0, -1.0),
            helper: false,
        },
    ];
    for k in 0..3 {
        let lon = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        nodes.push(ConeNode {
            dir: Vector3::new(lon.cos(), lon.sin(), 0.0),
            helper: true,
        });
    }
    let pairs = [[0, 2], [2, 1], [0, 3], [3, 1], [0, 4], [4, 1]];
    classify_sides(&nodes, &pairs, 3, |d| {
        let lon = d.y.atan2(d.x).rem_euclid(2.0 * std::f64::consts::PI);
        1 + (lon / (2.0 * std::f64::consts::PI / 3.0)).floor().min(2.0) as u32
    })
}

/// Half-planes through the z-axis at the given equatorial longitudes
/// (radians, ascending). Regular only when the longitudes are equally
/// spaced by 120 degrees; skew variants are test rigs for the angle checks.
pub fn y_cone_longitudes(longitudes: &[f64]) -> ConeSpec {
    assert!(longitudes.len() >= 2);
    let mut nodes = vec![
        ConeNode {
            dir: Vector3::new(0.0, 0.0, 1.0),
            helper: false,
        },
        ConeNode {
            dir: Vector3::new(0.0, 0.0, -1.0),
            helper: false,
        },
    ];
    let mut pairs = Vec::new();
    for &lon in longitudes {
        let id = nodes.len();
        nodes.push(ConeNode {
            dir: Vector3::new(lon.cos(), lon.sin(), 0.0),
            helper: true,
        });
        pairs.push([0, id]);
        pairs.push([id, 1]);
    }
    let lons: Vec<f64> = longitudes
        .iter()
        .map(|l| l.rem_euclid(2.0 * std::f64::consts::PI))
        .collect();
    let k = longitudes.len() as u32;
    classify_sides(&nodes, &pairs, k, move |d| {
        let lon = d.y.atan2(d.x).rem_euclid(2.0 * std::f64::consts::PI);
        // Region s+1 spans [lons[s], lons[s+1]).
        let mut region = lons.len() - 1;
        for s in 0..lons.len() - 1 {
            if lon >= lons[s] && lon < lons[s + 1] {
                region = s;
                break;
            }
        }
        region as u32 + 1
    })
}

/// The cone over the tetrahedral spherical network: 4 nodes at the vertices
/// of a regular tetrahedron, 6 arcs, 4 regions, all node angles exactly 120.
pub fn tetra_cone() -> ConeSpec {
    let s = 1.0 / 3.0f64.sqrt();
    let dirs = [
        Vector3::new(s, s, s),
        Vector3::new(s, -s, -s),
        Vector3::new(-s, s, -s),
        Vector3::new(-s, -s, s),
    ];
    let nodes: Vec<ConeNode> = dirs
        .iter()
        .map(|&dir| ConeNode { dir, helper: false })
        .collect();
    let pairs = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
    classify_sides(&nodes, &pairs, 4, move |d| {
        let mut best = 0;
        for j in 1..4 {
            if d.dot(&dirs[j]) < d.dot(&dirs[best]) {
                best = j;
            }
        }
        best as u32 + 1
    })
}

/// Two orthogonal planes crossing along the z-axis: a non-regular cone (the
/// poles carry four arcs each). Loadable only with the non-regular override.
pub fn cross_cone() -> ConeSpec {
    let nodes = vec![
        ConeNode {
            dir: Vector3::new(0.0, 0.0, 1.0),
            helper: false,
        },
        ConeNode {
            dir: Vector3::new(0.0, 0.0, -1.0),
            helper: false,
        },
        ConeNode {
            dir: Vector3::new(1.0, 0.0, 0.0),
            helper: true,
        },
        ConeNode {
            dir: Vector3::new(-1.0, 0.0, 0.0),
            helper: true,
        },
        ConeNode {
            dir: Vector3::new(0.0, 1.0, 0.0),
            helper: true,
        },
        ConeNode {
            dir: Vector3::new(0.0, -1.0, 0.0),
            helper: true,
        },
    ];
    let pairs = [
        [0, 2],
        [2, 1],
        [1, 3],
        [3, 0],
        [0, 4],
        [4, 1],
        [1, 5],
        [5, 0],
    ];
    classify_sides(&nodes, &pairs, 4, |d| {
        let lon = d.y.atan2(d.x).rem_euclid(2.0 * std::f64::consts::PI);
        1 + (lon / std::f64::consts::FRAC_PI_2).floor().min(3.0) as u32
    })
}
