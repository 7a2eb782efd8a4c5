//! Discrete mean curvature and the self-expander residual.
//!
//! Mean curvature is the sum of principal curvatures (`H = k1 + k2`), signed
//! so that a unit sphere with outward phase orientation measures `H = +2`.
//! Discretely, `H n = (sum_j (cot a_ij + cot b_ij)(x_i - x_j)) / (2 A_mixed)`
//! projected on the area-averaged oriented normal, with the Meyer mixed
//! Voronoi area.
//!
//! The residual `r(v) = H(v) - <x(v), n(v)>/2` vanishes pointwise on any
//! plane through the origin (both terms are zero, not a cancellation).

use nalgebra::Vector3;
use thiserror::Error;

use crate::complex::{SurfaceComplex, Topology};

#[derive(Debug, Error)]
pub enum CurvatureError {
    #[error("vertex {vertex} is not interior-manifold (boundary, junction or mixed-pair star)")]
    NotManifoldVertex { vertex: usize },
    #[error("vertex {vertex} has an empty star")]
    EmptyStar { vertex: usize },
}

fn cot_angle(apex: Vector3<f64>, p: Vector3<f64>, q: Vector3<f64>) -> f64 {
    let u = p - apex;
    let v = q - apex;
    let cross = u.cross(&v).norm();
    if cross < 1e-300 {
        0.0
    } else {
        u.dot(&v) / cross
    }
}

/// Meyer mixed Voronoi area of the star of `v`.
pub fn mixed_area(complex: &SurfaceComplex, topo: &Topology, v: usize) -> f64 {
    let mut area = 0.0;
    for &f in &topo.vertex_faces[v] {
        let verts = complex.faces[f].vertices;
        let idx = verts.iter().position(|&x| x == v).unwrap();
        let p = complex.vertices[verts[idx]];
        let q = complex.vertices[verts[(idx + 1) % 3]];
        let r = complex.vertices[verts[(idx + 2) % 3]];
        let tri_area = 0.5 * (q - p).cross(&(r - p)).norm();

        let cos_p = (q - p).normalize().dot(&(r - p).normalize());
        let cos_q = (p - q).normalize().dot(&(r - q).normalize());
        let cos_r = (p - r).normalize().dot(&(q - r).normalize());
        if cos_p < 0.0 {
            area += tri_area / 2.0;
        } else if cos_q < 0.0 || cos_r < 0.0 {
            area += tri_area / 4.0;
        } else {
            // Non-obtuse: Voronoi contribution.
            let cot_q = cot_angle(q, p, r);
            let cot_r = cot_angle(r, p, q);
            area += 0.125 * ((r - p).norm_squared() * cot_q + (q - p).norm_squared() * cot_r);
        }
    }
    area
}

/// True when every edge of the star carries exactly two faces of one common
/// phase pair and the vertex is not boundary-marked.
pub fn is_interior_manifold(complex: &SurfaceComplex, topo: &Topology, v: usize) -> bool {
    if complex.is_boundary_vertex(v) {
        return false;
    }
    if topo.vertex_faces[v].is_empty() {
        return false;
    }
    let pair = complex.faces[topo.vertex_faces[v][0]].phases;
    if topo.vertex_faces[v]
        .iter()
        .any(|&f| complex.faces[f].phases != pair)
    {
        return false;
    }
    topo.vertex_edges[v]
        .iter()
        .all(|&e| topo.edge_faces[e].len() == 2)
}

/// Signed mean curvature (sum convention) at an interior-manifold vertex.
pub fn mean_curvature(
    complex: &SurfaceComplex,
    topo: &Topology,
    v: usize,
) -> Result<f64, CurvatureError> {
    if topo.vertex_faces[v].is_empty() {
        return Err(CurvatureError::EmptyStar { vertex: v });
    }
    if !is_interior_manifold(complex, topo, v) {
        return Err(CurvatureError::NotManifoldVertex { vertex: v });
    }

    let xv = complex.vertices[v];
    let mut lap = Vector3::zeros();
    for &e in &topo.vertex_edges[v] {
        let (a, b) = topo.edges[e];
        let j = if a == v { b } else { a };
        let xj = complex.vertices[j];
        let mut cot_sum = 0.0;
        for &f in &topo.edge_faces[e] {
            let verts = complex.faces[f].vertices;
            let opp = verts
                .iter()
                .copied()
                .find(|&x| x != v && x != j)
                .expect("triangle has a third vertex");
            cot_sum += cot_angle(complex.vertices[opp], xv, xj);
        }
        lap += cot_sum * (xv - xj);
    }

    // Area-weighted oriented normal over the star.
    let mut normal = Vector3::zeros();
    for &f in &topo.vertex_faces[v] {
        let p = complex.face_positions(f);
        normal += (p[1] - p[0]).cross(&(p[2] - p[0]));
    }
    let nn = normal.norm();
    if nn == 0.0 {
        return Err(CurvatureError::EmptyStar { vertex: v });
    }
    normal /= nn;

    let a_mixed = mixed_area(complex, topo, v);
    Ok(lap.dot(&normal) / (2.0 * a_mixed))
}

/// Per-vertex expander residual with a junction/boundary exclusion mask.
#[derive(Debug, Clone)]
pub struct ExpanderResidualField {
    /// `Some(r)` on unmasked vertices, `None` on masked ones.
    pub per_vertex: Vec<Option<f64>>,
    pub masked: Vec<bool>,
    pub max_abs: f64,
    pub rms: f64,
    pub unmasked_count: usize,
}

/// Vertices within `k_ring` breadth-first rings of any boundary-marked or
/// non-manifold vertex.
pub fn junction_mask(complex: &SurfaceComplex, topo: &Topology, k_ring: usize) -> Vec<bool> {
    let nv = complex.vertices.len();
    let mut masked = vec![false; nv];
    for v in 0..nv {
        if complex.is_boundary_vertex(v) || !is_interior_manifold(complex, topo, v) {
            masked[v] = true;
        }
    }
    let mut frontier: Vec<usize> = (0..nv).filter(|&v| masked[v]).collect();
    for _ in 0..k_ring {
        let mut next = Vec::new();
        for &v in &frontier {
            for w in topo.vertex_neighbors(v) {
                if !masked[w] {
                    masked[w] = true;
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    masked
}

/// Evaluate `r(v) = H(v) - <x(v), n(v)>/2` on all unmasked vertices.
pub fn expander_residual(
    complex: &SurfaceComplex,
    topo: &Topology,
    k_ring: usize,
) -> ExpanderResidualField {
    let masked = junction_mask(complex, topo, k_ring);
    let nv = complex.vertices.len();
    let mut per_vertex: Vec<Option<f64>> = vec![None; nv];
    let mut max_abs: f64 = 0.0;
    let mut sq = Vec::new();
    for v in 0..nv {
        if masked[v] {
            continue;
        }
        let h = match mean_curvature(complex, topo, v) {
            Ok(h) => h,
            Err(_) => continue,
        };
        let mut normal = Vector3::zeros();
        for &f in &topo.vertex_faces[v] {
            let p = complex.face_positions(f);
            normal += (p[1] - p[0]).cross(&(p[2] - p[0]));
        }
        normal = normal.normalize();
        let r = h - 0.5 * complex.vertices[v].dot(&normal);
        per_vertex[v] = Some(r);
        max_abs = max_abs.max(r.abs());
        sq.push(r * r);
    }
    let unmasked_count = sq.len();
    let rms = if sq.is_empty() {
        0.0
    } else {
        (crate::energy::tree_sum(&sq) / sq.len() as f64).sqrt()
    };
    ExpanderResidualField {
        per_vertex,
        masked,
        max_abs,
        rms,
        unmasked_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmesh;

    #[test]
    fn flat_mesh_has_zero_mean_curvature() {
        let disk = testmesh::flat_disk(1.0, 0.2);
        let topo = Topology::build(&disk);
        for v in 0..disk.vertex_count() {
            if is_interior_manifold(&disk, &topo, v) {
                let h = mean_curvature(&disk, &topo, v).unwrap();
                assert!(h.abs() < 1e-10, "vertex {v}: H = {h}");
            }
        }
    }

    #[test]
    fn sphere_mean_curvature_is_plus_two() {
        // Outward-oriented unit sphere pins the sign and the sum-of-principal
        // curvatures magnitude: H = +2 up to O(h).
        let sphere = testmesh::icosphere(1.0, 3);
        let topo = Topology::build(&sphere);
        let mut worst: f64 = 0.0;
        for v in 0..sphere.vertex_count() {
            let h = mean_curvature(&sphere, &topo, v).unwrap();
            worst = worst.max((h - 2.0).abs());
        }
        assert!(worst < 0.05, "max deviation {worst}");
    }

    #[test]
    fn cylinder_mean_curvature_is_plus_one() {
        let cyl = testmesh::cylinder(1.0, 1.0, 40, 80);
        let topo = Topology::build(&cyl);
        let mut samples = 0;
        let mut worst: f64 = 0.0;
        for v in 0..cyl.vertex_count() {
            if is_interior_manifold(&cyl, &topo, v) {
                let h = mean_curvature(&cyl, &topo, v).unwrap();
                worst = worst.max((h - 1.0).abs());
                samples += 1;
            }
        }
        assert!(samples > 0);
        assert!(worst < 0.05, "max deviation {worst}");
    }

    #[test]
    fn junction_vertex_is_rejected() {
        let y = testmesh::y_half_disks(1.0, 0.26);
        let topo = Topology::build(&y);
        // Origin is on the triple spine.
        assert!(matches!(
            mean_curvature(&y, &topo, 0),
            Err(CurvatureError::NotManifoldVertex { .. })
        ));
    }

    #[test]
    fn residual_of_centered_plane_is_machine_zero() {
        let disk = testmesh::flat_disk(2.0, 0.2);
        let topo = Topology::build(&disk);
        let field = expander_residual(&disk, &topo, 1);
        assert!(field.unmasked_count > 0);
        assert!(field.max_abs < 1e-13, "max |r| = {}", field.max_abs);
    }

    #[test]
    fn residual_of_offset_plane_is_minus_half_d() {
        let d = 0.6;
        let mut disk = testmesh::flat_disk(2.0, 0.2);
        for v in disk.vertices.iter_mut() {
            v.z += d;
        }
        let topo = Topology::build(&disk);
        let field = expander_residual(&disk, &topo, 1);
        assert!(field.unmasked_count > 0);
        for r in field.per_vertex.iter().flatten() {
            assert!((r + d / 2.0).abs() < 1e-10, "r = {r}");
        }
    }

    #[test]
    fn mask_covers_declared_rings() {
        let y = testmesh::y_half_disks(1.0, 0.13);
        let topo = Topology::build(&y);
        let m0 = junction_mask(&y, &topo, 0);
        let m2 = junction_mask(&y, &topo, 2);
        let c0 = m0.iter().filter(|&&b| b).count();
        let c2 = m2.iter().filter(|&&b| b).count();
        assert!(c2 > c0);
        // Ring-2 mask is exactly the 2-ring neighborhood of the seeds.
        let mut expect = m0.clone();
        for _ in 0..2 {
            let snapshot = expect.clone();
            for v in 0..expect.len() {
                if snapshot[v] {
                    for w in topo.vertex_neighbors(v) {
                        expect[w] = true;
                    }
                }
            }
        }
        assert_eq!(expect, m2);
    }
}
