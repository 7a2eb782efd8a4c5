//! Constrained minimization of the weighted area over vertex positions.
//!
//! Sphere-boundary vertices slide along their boundary chain of the cone
//! trace (one angular degree of freedom, so they stay on `gamma^R` exactly);
//! vertices at trace nodes are pinned. Interior vertices move, but their
//! descent directions are filtered to the shape-relevant subspace: manifold
//! vertices along the local sheet normal, triple-curve vertices in the plane
//! orthogonal to the curve tangent, quadruple points freely. Purely
//! tangential vertex motion is a reparametrization of the same surface whose
//! only discrete effect is quadrature error, and following it degenerates
//! the mesh; projecting it out leaves flat configurations exactly critical.
//!
//! Descent uses optional two-loop L-BFGS acceleration with Armijo
//! backtracking; every accepted step strictly decreases the energy.
//! Energies and gradients are accumulated at the fixed exponent offset
//! `R^2/4`, so iterates along one run share a single scale and radii beyond
//! `|x| ~ 60` cannot overflow.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::complex::{
    connected_components, extract_junctions, validate, SurfaceComplex, Topology,
};
use crate::cone::{boundary_chains, BoundaryChain, ConeSpec};
use crate::energy::{
    vertex_weighted_area_at_offset, vertex_weighted_area_gradient_at_offset, EnergyError,
};
use crate::lbfgs::{dot, LbfgsMemory};
use crate::quality::{quality_pass, QualityOutcome};

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Stop when the projected-gradient RMS (at the run's exponent offset)
    /// drops to this level.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Backtracking shrink factor.
    pub shrink: f64,
    /// Iterations between quality passes; 0 disables them.
    pub remesh_every: usize,
    /// Iterations between tangential relaxation sweeps (shape-preserving
    /// smoothing that lets the mesh follow large junction displacements);
    /// 0 disables them.
    pub relax_every: usize,
    /// Increasing truncation radii for continuation runs.
    pub radius_schedule: Vec<f64>,
    pub seed: u64,
    /// Amplitude of the seeded initial perturbation of free vertices
    /// (absolute length units); 0 disables it.
    pub perturb: f64,
    pub use_lbfgs: bool,
    pub lbfgs_memory: usize,
    /// Print one log line per iteration.
    pub verbose: bool,
    /// Face cap for refinement/quality splits.
    pub max_faces: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            c1: 1e-4,
            shrink: 0.5,
            remesh_every: 0,
            relax_every: 25,
            radius_schedule: Vec::new(),
            seed: 0,
            perturb: 0.0,
            use_lbfgs: true,
            lbfgs_memory: 8,
            verbose: false,
            max_faces: 400_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projected-gradient RMS reached `grad_tol`.
    Converged,
    MaxIters,
    /// No decrease at the minimum step; the last valid state is kept.
    LineSearchFailure,
}

/// Per-vertex constraint during optimization.
#[derive(Debug, Clone, Copy)]
pub enum VertexConstraint {
    Free,
    /// Slides along `chains[chain]` at parameter `t`.
    Slide { chain: usize, t: f64 },
    Pinned,
}

/// Shape-relevant motion subspace of an unconstrained vertex.
#[derive(Debug, Clone, Copy)]
pub enum MotionClass {
    /// Manifold sheet interior: along the star normal.
    Normal,
    /// Interior of a triple curve: orthogonal to the chord through the two
    /// chain neighbors.
    Transverse { prev: usize, next: usize },
    /// Quadruple points and unclassified stars: all directions.
    Full,
}

#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub per_vertex: Vec<VertexConstraint>,
    pub chains: Vec<BoundaryChain>,
}

impl ConstraintSet {
    /// Assign every sphere-boundary vertex to its boundary chain; vertices at
    /// trace nodes (chain endpoints) are pinned.
    pub fn build(complex: &SurfaceComplex, spec: &ConeSpec) -> Result<Self, SolveError> {
        let radius = complex.truncation_radius;
        let chains = boundary_chains(spec);
        let mut per_vertex = vec![VertexConstraint::Free; complex.vertices.len()];
        for v in 0..complex.vertices.len() {
            if !complex.is_boundary_vertex(v) {
                continue;
            }
            let dir = complex.vertices[v] / radius;
            let mut best: Option<(f64, usize, f64)> = None;
            for (ci, chain) in chains.iter().enumerate() {
                let t = chain.project(spec, &dir);
                let d = (chain.point(spec, t) * radius - complex.vertices[v]).norm();
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, ci, t));
                }
            }
            let (dist, chain, t) = best.ok_or(SolveError::BoundaryOffTrace {
                vertex: v,
                distance: f64::INFINITY,
            })?;
            if dist > 1e-6 * radius {
                return Err(SolveError::BoundaryOffTrace { vertex: v, distance: dist });
            }
            let total = chains[chain].total_angle();
            let pin_tol = 1e-9;
            per_vertex[v] = if !chains[chain].closed && (t < pin_tol || t > total - pin_tol) {
                VertexConstraint::Pinned
            } else {
                VertexConstraint::Slide { chain, t }
            };
        }
        Ok(Self { per_vertex, chains })
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut free = 0;
        let mut slide = 0;
        let mut pinned = 0;
        for c in &self.per_vertex {
            match c {
                VertexConstraint::Free => free += 1,
                VertexConstraint::Slide { .. } => slide += 1,
                VertexConstraint::Pinned => pinned += 1,
            }
        }
        (free, slide, pinned)
    }
}

/// One solver log record, printed as
/// `iter <n> energy <E> logscale <s0> gradrms <g> step <a>`.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub log_scale: f64,
    pub grad_rms: f64,
    pub step: f64,
}

impl std::fmt::Display for IterRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "iter {} energy {} logscale {} gradrms {} step {}",
            self.iter, self.energy, self.log_scale, self.grad_rms, self.step
        )
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub complex: SurfaceComplex,
    pub constraints: ConstraintSet,
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    pub iterations: usize,
    /// Exponent offset of the run (`R^2 / 4`).
    pub log_scale: f64,
    /// Final solver energy at `log_scale`.
    pub energy: f64,
    pub grad_rms: f64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("input complex fails validation with {violations} violations")]
    InvalidInput { violations: usize },
    #[error("boundary vertex {vertex} lies {distance:e} away from the cone trace")]
    BoundaryOffTrace { vertex: usize, distance: f64 },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("topology broken during optimization: {0}")]
    TopologyBroken(String),
    #[error("bad solver configuration: {0}")]
    BadConfig(String),
}

struct Reduced<'a> {
    spec: &'a ConeSpec,
    constraints: ConstraintSet,
    motion: Vec<MotionClass>,
    radius: f64,
    /// Offset of each vertex's coordinates in the reduced vector (usize::MAX
    /// for pinned).
    offsets: Vec<usize>,
    len: usize,
}

/// Classify free vertices by the junction structure: curve interiors move
/// transversally, quadruple points freely, everything else along the normal.
fn motion_classes(complex: &SurfaceComplex, constraints: &ConstraintSet) -> Vec<MotionClass> {
    let mut classes = vec![MotionClass::Normal; complex.vertices.len()];
    let topo = Topology::build(complex);
    if let Ok(junctions) = extract_junctions(complex, &topo) {
        for curve in &junctions.triple_curves {
            let n = curve.vertices.len();
            for i in 0..n {
                let (prev, next) = if curve.closed {
                    (curve.vertices[(i + n - 1) % n], curve.vertices[(i + 1) % n])
                } else {
                    if i == 0 || i == n - 1 {
                        continue;
                    }
                    (curve.vertices[i - 1], curve.vertices[i + 1])
                };
                classes[curve.vertices[i]] = MotionClass::Transverse { prev, next };
            }
        }
        for q in &junctions.quadruple_points {
            classes[q.vertex] = MotionClass::Full;
        }
    }
    // Vertices with non-manifold stars not on any curve keep full freedom;
    // manifold interiors follow their star normal.
    for v in 0..complex.vertices.len() {
        if !matches!(constraints.per_vertex[v], VertexConstraint::Free) {
            continue;
        }
        if matches!(classes[v], MotionClass::Normal)
            && !crate::curvature::is_interior_manifold(complex, &topo, v)
        {
            classes[v] = MotionClass::Full;
        }
    }
    classes
}

impl<'a> Reduced<'a> {
    fn new(complex: &SurfaceComplex, spec: &'a ConeSpec, constraints: ConstraintSet) -> Self {
        let mut offsets = vec![usize::MAX; complex.vertices.len()];
        let mut len = 0;
        for (v, c) in constraints.per_vertex.iter().enumerate() {
            // Slide vertices carry no descent coordinate: motion along the
            // trace is parametrization gauge (the boundary is a fixed set),
            // and its discrete gradient — the inscribed-polygon area
            // deficit — points monotonically toward bunching all rim
            // vertices together. Their chain assignment still anchors them
            // exactly on gamma^R.
            if matches!(c, VertexConstraint::Free) {
                offsets[v] = len;
                len += 3;
            }
        }
        let motion = motion_classes(complex, &constraints);
        Self {
            spec,
            constraints,
            motion,
            radius: complex.truncation_radius,
            offsets,
            len,
        }
    }

    /// Project the ambient vector at a free vertex onto its motion subspace,
    /// using the current geometry of `complex`.
    fn project_at(
        &self,
        complex: &SurfaceComplex,
        star_normal: &[Vector3<f64>],
        v: usize,
        g: Vector3<f64>,
    ) -> Vector3<f64> {
        match self.motion[v] {
            MotionClass::Full => g,
            MotionClass::Normal => {
                let n = star_normal[v];
                if n.norm_squared() < 1e-24 {
                    g
                } else {
                    let n = n.normalize();
                    n * g.dot(&n)
                }
            }
            MotionClass::Transverse { prev, next } => {
                let t = complex.vertices[next] - complex.vertices[prev];
                if t.norm_squared() < 1e-300 {
                    g
                } else {
                    let t = t.normalize();
                    g - t * g.dot(&t)
                }
            }
        }
    }

    fn pack(&self, complex: &SurfaceComplex) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for (v, c) in self.constraints.per_vertex.iter().enumerate() {
            if matches!(c, VertexConstraint::Free) {
                let o = self.offsets[v];
                x[o] = complex.vertices[v].x;
                x[o + 1] = complex.vertices[v].y;
                x[o + 2] = complex.vertices[v].z;
            }
        }
        x
    }

    /// Write free-vertex positions; slide vertices are re-anchored to their
    /// assigned point of the trace.
    fn unpack(&self, x: &mut [f64], complex: &mut SurfaceComplex) {
        for (v, c) in self.constraints.per_vertex.iter().enumerate() {
            match c {
                VertexConstraint::Free => {
                    let o = self.offsets[v];
                    complex.vertices[v] = Vector3::new(x[o], x[o + 1], x[o + 2]);
                }
                VertexConstraint::Slide { chain, t } => {
                    let ch = &self.constraints.chains[*chain];
                    complex.vertices[v] = ch.point(self.spec, *t) * self.radius;
                }
                VertexConstraint::Pinned => {}
            }
        }
    }

    /// Reduced-coordinate projected gradient: free vertices filtered to
    /// their motion subspace, slides chain-ruled onto the arc tangent.
    fn reduce_gradient(
        &self,
        complex: &SurfaceComplex,
        star_normal: &[Vector3<f64>],
        x: &[f64],
        ambient: &[Vector3<f64>],
    ) -> Vec<f64> {
        let _ = x;
        let mut g = vec![0.0; self.len];
        for (v, c) in self.constraints.per_vertex.iter().enumerate() {
            if matches!(c, VertexConstraint::Free) {
                let o = self.offsets[v];
                let p = self.project_at(complex, star_normal, v, ambient[v]);
                g[o] = p.x;
                g[o + 1] = p.y;
                g[o + 2] = p.z;
            }
        }
        g
    }

    /// Re-apply the motion filter to a reduced direction in place.
    fn project_direction(
        &self,
        complex: &SurfaceComplex,
        star_normal: &[Vector3<f64>],
        d: &mut [f64],
    ) {
        for (v, c) in self.constraints.per_vertex.iter().enumerate() {
            if matches!(c, VertexConstraint::Free) {
                let o = self.offsets[v];
                let raw = Vector3::new(d[o], d[o + 1], d[o + 2]);
                let p = self.project_at(complex, star_normal, v, raw);
                d[o] = p.x;
                d[o + 1] = p.y;
                d[o + 2] = p.z;
            }
        }
    }

    /// RMS of the projected gradient over all 3n vertex components: free
    /// components filtered to their motion subspace, slide components
    /// projected on the chain tangent, pinned components zero.
    fn projected_rms(
        &self,
        complex: &SurfaceComplex,
        star_normal: &[Vector3<f64>],
        x: &[f64],
        ambient: &[Vector3<f64>],
    ) -> f64 {
        let _ = x;
        let mut sq = 0.0;
        for (v, c) in self.constraints.per_vertex.iter().enumerate() {
            if matches!(c, VertexConstraint::Free) {
                sq += self
                    .project_at(complex, star_normal, v, ambient[v])
                    .norm_squared();
            }
        }
        (sq / (3.0 * self.constraints.per_vertex.len() as f64)).sqrt()
    }

}

impl<'a> Reduced<'a> {
    /// Inverse-mass diagonal for the reduced coordinates: each free vertex
    /// weighs its star area times the local weight, equilibrating the scale
    /// spread between coarse cells and pinched junction fans.
    fn inverse_mass(&self, complex: &SurfaceComplex, s0: f64) -> Vec<f64> {
        let mut area = vec![0.0f64; complex.vertices.len()];
        for f in 0..complex.face_count() {
            let a = complex.face_area(f) / 3.0;
            for &v in &complex.faces[f].vertices {
                area[v] += a;
            }
        }
        let mean_mass = {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (v, c) in self.constraints.per_vertex.iter().enumerate() {
                if matches!(c, VertexConstraint::Free) {
                    sum += area[v] * (complex.vertices[v].norm_squared() / 4.0 - s0).exp();
                    count += 1;
                }
            }
            if count == 0 {
                1.0
            } else {
                sum / count as f64
            }
        };
        let floor = 1e-2 * mean_mass.max(1e-300);
        let mut out = vec![1.0; self.len];
        for (v, c) in self.constraints.per_vertex.iter().enumerate() {
            if matches!(c, VertexConstraint::Free) {
                let mass =
                    (area[v] * (complex.vertices[v].norm_squared() / 4.0 - s0).exp()).max(floor);
                let o = self.offsets[v];
                out[o] = 1.0 / mass;
                out[o + 1] = 1.0 / mass;
                out[o + 2] = 1.0 / mass;
            }
        }
        out
    }
}

/// Area-weighted oriented star normals (unnormalized).
fn star_normals(complex: &SurfaceComplex) -> Vec<Vector3<f64>> {
    let mut normals = vec![Vector3::zeros(); complex.vertices.len()];
    for f in 0..complex.face_count() {
        let p = complex.face_positions(f);
        let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        for &v in &complex.faces[f].vertices {
            normals[v] += n;
        }
    }
    normals
}

/// True when some face of `trial` flipped its orientation against `base`.
/// Near-degenerate faces are ignored; they carry no reliable normal.
fn has_inverted_faces(base: &SurfaceComplex, trial: &SurfaceComplex) -> bool {
    let floor = 100.0 * base.eps_area();
    for f in 0..base.face_count() {
        let pb = base.face_positions(f);
        let pt = trial.face_positions(f);
        let nb = (pb[1] - pb[0]).cross(&(pb[2] - pb[0]));
        let nt = (pt[1] - pt[0]).cross(&(pt[2] - pt[0]));
        if nb.norm() > floor && nt.norm() > floor && nb.dot(&nt) < 0.0 {
            return true;
        }
    }
    false
}

/// One tangential relaxation sweep: every free vertex moves toward the
/// (projected) centroid of its neighbors within its own tangent space, so
/// the surface shape is preserved to second order while the parametrization
/// follows junction displacement. The sweep is accepted only when it does
/// not raise the energy or fold a face, halving the step on failure.
fn tangential_relaxation(
    complex: &SurfaceComplex,
    topo: &Topology,
    motion: &[MotionClass],
    constraints: &ConstraintSet,
    s0: f64,
    energy: f64,
) -> Option<SurfaceComplex> {
    let normals = star_normals(complex);
    let mut displacement = vec![Vector3::zeros(); complex.vertices.len()];
    for (v, class) in motion.iter().enumerate() {
        if !matches!(constraints.per_vertex[v], VertexConstraint::Free) {
            continue;
        }
        match class {
            MotionClass::Normal => {
                let neighbors = topo.vertex_neighbors(v);
                if neighbors.is_empty() {
                    continue;
                }
                let mut centroid = Vector3::zeros();
                for &w in &neighbors {
                    centroid += complex.vertices[w];
                }
                centroid /= neighbors.len() as f64;
                let n = normals[v];
                if n.norm_squared() < 1e-24 {
                    continue;
                }
                let n = n.normalize();
                let d = centroid - complex.vertices[v];
                displacement[v] = d - n * d.dot(&n);
            }
            MotionClass::Transverse { prev, next } => {
                // Redistribute along the curve only.
                let mid = (complex.vertices[*prev] + complex.vertices[*next]) * 0.5;
                let t = complex.vertices[*next] - complex.vertices[*prev];
                if t.norm_squared() < 1e-300 {
                    continue;
                }
                let t = t.normalize();
                let d = mid - complex.vertices[v];
                displacement[v] = t * d.dot(&t);
            }
            MotionClass::Full => {}
        }
    }

    let mut lambda = 0.5;
    for _ in 0..4 {
        let mut trial = complex.clone();
        for v in 0..trial.vertices.len() {
            trial.vertices[v] += lambda * displacement[v];
        }
        if !has_inverted_faces(complex, &trial) {
            if let Ok(e) = vertex_weighted_area_at_offset(&trial, s0) {
                if e <= energy {
                    return Some(trial);
                }
            }
        }
        lambda *= 0.5;
    }
    None
}

/// Minimize the weighted area of `complex` spanning the trace of `spec`.
pub fn minimize(
    complex: &SurfaceComplex,
    spec: &ConeSpec,
    config: &SolveConfig,
) -> Result<OptimizerState, SolveError> {
    let outcome = validate(complex);
    if !outcome.is_ok() {
        return Err(SolveError::InvalidInput {
            violations: outcome.violations.len(),
        });
    }
    if !(config.grad_tol > 0.0) || !(config.c1 > 0.0 && config.c1 < 1.0) {
        return Err(SolveError::BadConfig("grad_tol > 0 and c1 in (0,1) required".into()));
    }
    let components_before = connected_components(complex).len();

    let mut work = complex.clone();
    let s0 = work.truncation_radius * work.truncation_radius / 4.0;

    if config.perturb > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let constraints = ConstraintSet::build(&work, spec)?;
        for (v, c) in constraints.per_vertex.iter().enumerate() {
            if matches!(c, VertexConstraint::Free) {
                let d = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                work.vertices[v] += config.perturb * d;
            }
        }
    }

    let mut records = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;
    let mut last_step = 0.0;

    // The reduced system is rebuilt whenever a quality pass changes the mesh.
    'outer: loop {
        let constraints = ConstraintSet::build(&work, spec)?;
        let reduced = Reduced::new(&work, spec, constraints);
        let topo = Topology::build(&work);
        let mut x = reduced.pack(&work);
        reduced.unpack(&mut x, &mut work);

        let mut energy = vertex_weighted_area_at_offset(&work, s0)?;
        let mut ambient = vertex_weighted_area_gradient_at_offset(&work, s0)?;
        let mut normals = star_normals(&work);
        let mut g = reduced.reduce_gradient(&work, &normals, &x, &ambient);
        let mut memory = LbfgsMemory::new(config.lbfgs_memory.max(1));

        loop {
            let rms = reduced.projected_rms(&work, &normals, &x, &ambient);
            let record = IterRecord {
                iter: iterations,
                energy,
                log_scale: s0,
                grad_rms: rms,
                step: last_step,
            };
            if config.verbose {
                println!("{record}");
            }
            records.push(record);

            if rms <= config.grad_tol {
                termination = Termination::Converged;
                break 'outer;
            }
            if iterations >= config.max_iters {
                break 'outer;
            }

            // Quality pass between iterations.
            if config.remesh_every > 0
                && iterations > 0
                && iterations % config.remesh_every == 0
            {
                match quality_pass(&work, s0, 20.0, config.max_faces) {
                    QualityOutcome::Improved(new_mesh) => {
                        work = new_mesh;
                        iterations += 1;
                        continue 'outer;
                    }
                    QualityOutcome::Unchanged => {}
                }
            }

            // Tangential relaxation between iterations (same connectivity,
            // new positions): lets the parametrization follow the junctions.
            if config.relax_every > 0 && iterations > 0 && iterations % config.relax_every == 0
            {
                if let Some(relaxed) = tangential_relaxation(
                    &work,
                    &topo,
                    &reduced.motion,
                    &reduced.constraints,
                    s0,
                    energy,
                ) {
                    work = relaxed;
                    x = reduced.pack(&work);
                    energy = vertex_weighted_area_at_offset(&work, s0)?;
                    ambient = vertex_weighted_area_gradient_at_offset(&work, s0)?;
                    normals = star_normals(&work);
                    g = reduced.reduce_gradient(&work, &normals, &x, &ambient);
                    memory.clear();
                }
            }

            let mut direction = if config.use_lbfgs {
                let h0 = reduced.inverse_mass(&work, s0);
                let mut d = memory.direction_scaled(&g, Some(&h0));
                reduced.project_direction(&work, &normals, &mut d);
                d
            } else {
                g.iter().map(|v| -v).collect()
            };
            let mut slope = dot(&g, &direction);
            if !(slope < 0.0) {
                direction = g.iter().map(|v| -v).collect();
                slope = dot(&g, &direction);
                memory.clear();
                if !(slope < 0.0) {
                    termination = Termination::Converged;
                    break 'outer;
                }
            }

            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let mut xt = x.clone();
                for (xi, di) in xt.iter_mut().zip(direction.iter()) {
                    *xi += alpha * di;
                }
                let mut trial = work.clone();
                reduced.unpack(&mut xt, &mut trial);
                let et = if has_inverted_faces(&work, &trial) {
                    f64::INFINITY
                } else {
                    match vertex_weighted_area_at_offset(&trial, s0) {
                        Ok(e) => e,
                        Err(_) => f64::INFINITY,
                    }
                };
                if et.is_finite() && et <= energy + config.c1 * alpha * slope {
                    let gt_ambient = vertex_weighted_area_gradient_at_offset(&trial, s0)?;
                    let gt_normals = star_normals(&trial);
                    let gt = reduced.reduce_gradient(&trial, &gt_normals, &xt, &gt_ambient);
                    let s: Vec<f64> = xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = gt.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
                    memory.push(s, y);
                    x = xt;
                    work = trial;
                    energy = et;
                    ambient = gt_ambient;
                    normals = gt_normals;
                    g = gt;
                    last_step = alpha;
                    accepted = true;
                    break;
                }
                alpha *= config.shrink;
            }
            iterations += 1;
            if !accepted {
                termination = Termination::LineSearchFailure;
                let rms = reduced.projected_rms(&work, &normals, &x, &ambient);
                records.push(IterRecord {
                    iter: iterations,
                    energy,
                    log_scale: s0,
                    grad_rms: rms,
                    step: 0.0,
                });
                break 'outer;
            }
        }
    }

    // Final integrity checks.
    let outcome = validate(&work);
    if !outcome.is_ok() {
        return Err(SolveError::TopologyBroken(format!(
            "final mesh has {} violations",
            outcome.violations.len()
        )));
    }
    if connected_components(&work).len() != components_before {
        return Err(SolveError::TopologyBroken(
            "connected component count changed".into(),
        ));
    }

    let constraints = ConstraintSet::build(&work, spec)?;
    let reduced = Reduced::new(&work, spec, constraints.clone());
    let x = reduced.pack(&work);
    let energy = vertex_weighted_area_at_offset(&work, s0)?;
    let ambient = vertex_weighted_area_gradient_at_offset(&work, s0)?;
    let normals = star_normals(&work);
    let grad_rms = reduced.projected_rms(&work, &normals, &x, &ambient);

    Ok(OptimizerState {
        complex: work,
        constraints,
        records,
        termination,
        iterations,
        log_scale: s0,
        energy,
        grad_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone;
    use crate::curvature::{expander_residual, junction_mask};
    use crate::templates::{instantiate, TemplateKind};
    use crate::verify::check_triple_angles;
    use crate::complex::{extract_junctions, Topology};

#[test]
fn probe_cross_convergence() {
    use crate::io::read_meshnet;
    let text = std::fs::read_to_string("/tmp/cli_smoke/crossA_min3.mesh").unwrap();
    let mut work = read_meshnet(&text).unwrap();
    let spec = crate::cone::cross_cone();
    let s0 = 4.0;
    let constraints = ConstraintSet::build(&work, &spec).unwrap();
    let reduced = Reduced::new(&work, &spec, constraints);
    let mut x = reduced.pack(&work);
    reduced.unpack(&mut x, &mut work);
    let ambient = vertex_weighted_area_gradient_at_offset(&work, s0).unwrap();
    let normals = star_normals(&work);
    let g = reduced.reduce_gradient(&work, &normals, &x, &ambient);
    let h0 = reduced.inverse_mass(&work, s0);
    let memory = LbfgsMemory::new(8);
    let mut d = memory.direction_scaled(&g, Some(&h0));
    reduced.project_direction(&work, &normals, &mut d);
    let e0 = vertex_weighted_area_at_offset(&work, s0).unwrap();
    for alpha in [1.0, 0.25, 0.0625, 0.015625, 0.004] {
        let mut xt = x.clone();
        for (xi, di) in xt.iter_mut().zip(d.iter()) { *xi += alpha * di; }
        let mut trial = work.clone();
        reduced.unpack(&mut xt, &mut trial);
        let inv = has_inverted_faces(&work, &trial);
        let et = vertex_weighted_area_at_offset(&trial, s0);
        let slope: f64 = g.iter().zip(d.iter()).map(|(a,b)| a*b).sum();
        match et {
            Ok(e) => println!("alpha {alpha}: inverted {inv} dE {:+.3e} armijo_rhs {:+.3e}", e - e0, 1e-4*alpha*slope),
            Err(err) => println!("alpha {alpha}: inverted {inv} energy error {err}"),
        }
    }
    // where is the biggest displacement?
    let mut worst = (0.0, 0);
    for (v, c) in reduced.constraints.per_vertex.iter().enumerate() {
        if matches!(c, VertexConstraint::Free) {
            let o = reduced.offsets[v];
            let disp = (d[o]*d[o] + d[o+1]*d[o+1] + d[o+2]*d[o+2]).sqrt();
            if disp > worst.0 { worst = (disp, v); }
        }
    }
    println!("max |d_v| = {:.4} at vertex {} pos {:?}", worst.0, worst.1, work.vertices[worst.1]);
    panic!("probe");
}

    #[test]
    fn flat_sheet_is_already_stationary() {
        let spec = cone::single_circle();
        let mesh = instantiate(TemplateKind::FlatSheet, &spec, 2.0, 0.25, false).unwrap();
        let config = SolveConfig::default();
        let state = minimize(&mesh, &spec, &config).unwrap();
        assert_eq!(state.termination, Termination::Converged);
        assert!(state.iterations <= 5, "took {} iterations", state.iterations);
        assert!(state.grad_rms <= 1e-8);
        // Final is essentially the initial mesh.
        let drift: f64 = state
            .complex
            .vertices
            .iter()
            .zip(mesh.vertices.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
        // The stationary plane is an exact discrete expander.
        let topo = Topology::build(&state.complex);
        let field = expander_residual(&state.complex, &topo, 2);
        assert!(field.max_abs <= 1e-10, "max residual {}", field.max_abs);
    }

    #[test]
    fn energy_history_is_non_increasing() {
        let spec = cone::y_cone();
        let mesh = instantiate(TemplateKind::YSheet, &spec, 1.5, 0.25, false).unwrap();
        let config = SolveConfig {
            max_iters: 60,
            grad_tol: 1e-12,
            ..Default::default()
        };
        let state = minimize(&mesh, &spec, &config).unwrap();
        for w in state.records.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-15);
        }
    }

    #[test]
    fn boundary_vertices_stay_on_trace() {
        let spec = cone::y_cone();
        let radius = 1.5;
        let mesh = instantiate(TemplateKind::YSheet, &spec, radius, 0.25, false).unwrap();
        let config = SolveConfig {
            max_iters: 40,
            ..Default::default()
        };
        let state = minimize(&mesh, &spec, &config).unwrap();
        let chains = boundary_chains(&spec);
        for v in 0..state.complex.vertex_count() {
            if !state.complex.is_boundary_vertex(v) {
                continue;
            }
            let p = state.complex.vertices[v];
            assert!((p.norm() - radius).abs() <= state.complex.eps_bdry());
            let dir = p / radius;
            let best = chains
                .iter()
                .map(|c| (c.point(&spec, c.project(&spec, &dir)) * radius - p).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= state.complex.eps_bdry(), "vertex {v} off by {best}");
        }
    }

    #[test]
    fn y_network_keeps_exact_angles() {
        // The symmetric Y is already at 120 degrees and stays there while
        // the solver relaxes the layout.
        let spec = cone::y_cone();
        let mesh = instantiate(TemplateKind::YSheet, &spec, 1.5, 0.2, false).unwrap();
        let config = SolveConfig {
            max_iters: 80,
            ..Default::default()
        };
        let state = minimize(&mesh, &spec, &config).unwrap();
        let topo = Topology::build(&state.complex);
        let jg = extract_junctions(&state.complex, &topo).unwrap();
        assert_eq!(jg.triple_curves.len(), 1);
        let stats = check_triple_angles(&state.complex, &topo, &jg);
        assert!(stats.max_deviation_deg < 0.5, "deviation {}", stats.max_deviation_deg);
        assert!(stats.max_balance < 0.02);
    }

    #[test]
    fn identical_seeds_give_bit_identical_iterates() {
        let spec = cone::y_cone();
        let mesh = instantiate(TemplateKind::YSheet, &spec, 1.0, 0.3, false).unwrap();
        let config = SolveConfig {
            max_iters: 25,
            perturb: 0.01,
            seed: 42,
            ..Default::default()
        };
        let a = minimize(&mesh, &spec, &config).unwrap();
        let b = minimize(&mesh, &spec, &config).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.energy.to_bits(), rb.energy.to_bits());
            assert_eq!(ra.grad_rms.to_bits(), rb.grad_rms.to_bits());
        }
        for (va, vb) in a.complex.vertices.iter().zip(b.complex.vertices.iter()) {
            assert_eq!(va.x.to_bits(), vb.x.to_bits());
        }
    }

    #[test]
    fn invalid_input_is_rejected() {
        let spec = cone::cross_cone();
        let mesh = instantiate(TemplateKind::ConeVerbatim, &spec, 1.0, 0.3, true).unwrap();
        assert!(matches!(
            minimize(&mesh, &spec, &SolveConfig::default()),
            Err(SolveError::InvalidInput { .. })
        ));
    }

    #[test]
    fn mask_and_residual_report_present_after_solve() {
        let spec = cone::y_cone();
        let mesh = instantiate(TemplateKind::YSheet, &spec, 1.5, 0.25, false).unwrap();
        let state = minimize(
            &mesh,
            &spec,
            &SolveConfig {
                max_iters: 30,
                ..Default::default()
            },
        )
        .unwrap();
        let topo = Topology::build(&state.complex);
        let mask = junction_mask(&state.complex, &topo, 2);
        assert!(mask.iter().any(|&m| m));
        assert!(mask.iter().any(|&m| !m));
    }
}
