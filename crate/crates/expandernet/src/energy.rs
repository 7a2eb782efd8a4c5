//! Weighted area functional and its analytic first variation.
//!
//! The energy of a complex is `sum_f area(f) * exp(|c_f|^2 / 4)` with `c_f`
//! the face centroid (one-point quadrature). Totals are accumulated in
//! shifted-exponent form: the reported `total` carries a common factor
//! `exp(log_scale)` so that radii past `|x| ~ 60` do not overflow doubles.
//!
//! All reductions run over a fixed-shape pairwise tree, so totals are
//! bit-identical for any worker count.

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::complex::SurfaceComplex;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("face {face} is degenerate (area {area:e} < {eps:e})")]
    DegenerateFace { face: usize, area: f64, eps: f64 },
}

/// Weighted area in shifted-exponent form: true energy = `total * exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct WeightedEnergy {
    pub total: f64,
    pub log_scale: f64,
    pub per_face: Vec<f64>,
}

impl WeightedEnergy {
    /// Natural log of the true energy.
    pub fn log_value(&self) -> f64 {
        self.log_scale + self.total.ln()
    }
}

const PAR_THRESHOLD: usize = 2048;
const SEQ_LEAF: usize = 64;

/// Sum `xs` over a pairwise tree whose shape depends only on the length.
pub fn tree_sum(xs: &[f64]) -> f64 {
    fn seq(xs: &[f64]) -> f64 {
        if xs.len() <= SEQ_LEAF {
            let mut acc = 0.0;
            for &x in xs {
                acc += x;
            }
            acc
        } else {
            let mid = xs.len() / 2;
            seq(&xs[..mid]) + seq(&xs[mid..])
        }
    }
    fn par(xs: &[f64]) -> f64 {
        if xs.len() <= PAR_THRESHOLD {
            seq(xs)
        } else {
            let mid = xs.len() / 2;
            let (a, b) = rayon::join(|| par(&xs[..mid]), || par(&xs[mid..]));
            a + b
        }
    }
    par(xs)
}

fn face_geometry(p: &[Vector3<f64>; 3]) -> (f64, Vector3<f64>) {
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    (0.5 * n.norm(), (p[0] + p[1] + p[2]) / 3.0)
}

fn per_face_values(
    complex: &SurfaceComplex,
    s0: f64,
    check_degenerate: bool,
) -> Result<Vec<f64>, EnergyError> {
    let eps = complex.eps_area();
    let compute = |f: usize| -> Result<f64, EnergyError> {
        let p = complex.face_positions(f);
        let (area, c) = face_geometry(&p);
        if check_degenerate && area < eps {
            return Err(EnergyError::DegenerateFace { face: f, area, eps });
        }
        Ok(area * (c.norm_squared() / 4.0 - s0).exp())
    };
    if complex.faces.len() >= PAR_THRESHOLD {
        (0..complex.faces.len())
            .into_par_iter()
            .map(compute)
            .collect()
    } else {
        (0..complex.faces.len()).map(compute).collect()
    }
}

/// Largest centroid exponent `max_f |c_f|^2 / 4`, the canonical shift.
pub fn max_centroid_exponent(complex: &SurfaceComplex) -> f64 {
    complex
        .faces
        .iter()
        .enumerate()
        .map(|(f, _)| complex.face_centroid(f).norm_squared() / 4.0)
        .fold(0.0, f64::max)
}

/// Weighted area with the canonical shift `log_scale = max_f |c_f|^2/4`.
pub fn weighted_area(complex: &SurfaceComplex) -> Result<WeightedEnergy, EnergyError> {
    let s0 = max_centroid_exponent(complex);
    let per_face = per_face_values(complex, s0, true)?;
    let total = tree_sum(&per_face);
    Ok(WeightedEnergy {
        total,
        log_scale: s0,
        per_face,
    })
}

/// Weighted area accumulated at a caller-chosen exponent offset. Used by the
/// solver so that energies along a line search share one scale.
pub fn weighted_area_at_offset(complex: &SurfaceComplex, s0: f64) -> Result<f64, EnergyError> {
    let per_face = per_face_values(complex, s0, true)?;
    Ok(tree_sum(&per_face))
}

/// Plain Euclidean area (weight forced to 1); test hook for the scaling law.
pub fn euclidean_area(complex: &SurfaceComplex) -> f64 {
    let vals: Vec<f64> = (0..complex.faces.len())
        .map(|f| complex.face_area(f))
        .collect();
    tree_sum(&vals)
}

/// Analytic gradient of the shifted energy with respect to vertex positions;
/// the true gradient is `exp(s0)` times the returned field.
///
/// Differentiates `area(f) * exp(|c_f|^2/4 - s0)` exactly: both the area
/// factor (half the normal times the opposite edge) and the centroid-borne
/// weight (`c_f / 6` per vertex).
pub fn weighted_area_gradient_at_offset(
    complex: &SurfaceComplex,
    s0: f64,
) -> Result<Vec<Vector3<f64>>, EnergyError> {
    let eps = complex.eps_area();
    let compute = |f: usize| -> Result<[Vector3<f64>; 3], EnergyError> {
        let p = complex.face_positions(f);
        let nvec = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let norm = nvec.norm();
        let area = 0.5 * norm;
        if area < eps {
            return Err(EnergyError::DegenerateFace { face: f, area, eps });
        }
        let nhat = nvec / norm;
        let c = (p[0] + p[1] + p[2]) / 3.0;
        let w = (c.norm_squared() / 4.0 - s0).exp();
        let weight_term = (area * w / 6.0) * c;
        let mut out = [Vector3::zeros(); 3];
        for i in 0..3 {
            let opposite = p[(i + 2) % 3] - p[(i + 1) % 3];
            out[i] = w * 0.5 * nhat.cross(&opposite) + weight_term;
        }
        Ok(out)
    };

    let per_face: Vec<[Vector3<f64>; 3]> = if complex.faces.len() >= PAR_THRESHOLD {
        (0..complex.faces.len())
            .into_par_iter()
            .map(compute)
            .collect::<Result<_, _>>()?
    } else {
        (0..complex.faces.len())
            .map(compute)
            .collect::<Result<_, _>>()?
    };

    // Scatter in face order: deterministic regardless of worker count.
    let mut grad = vec![Vector3::zeros(); complex.vertices.len()];
    for (f, contrib) in per_face.iter().enumerate() {
        let verts = complex.faces[f].vertices;
        for i in 0..3 {
            grad[verts[i]] += contrib[i];
        }
    }
    Ok(grad)
}

/// Gradient with the canonical shift; returns `(field, log_scale)`.
pub fn weighted_area_gradient(
    complex: &SurfaceComplex,
) -> Result<(Vec<Vector3<f64>>, f64), EnergyError> {
    let s0 = max_centroid_exponent(complex);
    let grad = weighted_area_gradient_at_offset(complex, s0)?;
    Ok((grad, s0))
}

/// Weighted area with the weight sampled at the vertices,
/// `sum_f area(f) * (w(p0) + w(p1) + w(p2)) / 3`, in shifted form.
///
/// The solver minimizes this variant rather than the centroid rule: since
/// the weight is convex, vertex sampling over-estimates the continuum energy
/// per face, so tangential vertex motion is a well-posed r-adaptation with
/// an interior minimum. The centroid rule under-estimates, which rewards
/// degenerate layouts and leaves the tangential gradient bounded away from
/// zero. Both quadratures agree with the continuum energy to O(h^2).
pub fn vertex_weighted_area_at_offset(
    complex: &SurfaceComplex,
    s0: f64,
) -> Result<f64, EnergyError> {
    let eps = complex.eps_area();
    let compute = |f: usize| -> Result<f64, EnergyError> {
        let p = complex.face_positions(f);
        let (area, _) = face_geometry(&p);
        if area < eps {
            return Err(EnergyError::DegenerateFace { face: f, area, eps });
        }
        let w = ((p[0].norm_squared() / 4.0 - s0).exp()
            + (p[1].norm_squared() / 4.0 - s0).exp()
            + (p[2].norm_squared() / 4.0 - s0).exp())
            / 3.0;
        Ok(area * w)
    };
    let per_face: Vec<f64> = if complex.faces.len() >= PAR_THRESHOLD {
        (0..complex.faces.len())
            .into_par_iter()
            .map(compute)
            .collect::<Result<_, _>>()?
    } else {
        (0..complex.faces.len())
            .map(compute)
            .collect::<Result<_, _>>()?
    };
    Ok(tree_sum(&per_face))
}

/// Exact analytic gradient of [`vertex_weighted_area_at_offset`].
pub fn vertex_weighted_area_gradient_at_offset(
    complex: &SurfaceComplex,
    s0: f64,
) -> Result<Vec<Vector3<f64>>, EnergyError> {
    let eps = complex.eps_area();
    let compute = |f: usize| -> Result<[Vector3<f64>; 3], EnergyError> {
        let p = complex.face_positions(f);
        let nvec = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let norm = nvec.norm();
        let area = 0.5 * norm;
        if area < eps {
            return Err(EnergyError::DegenerateFace { face: f, area, eps });
        }
        let nhat = nvec / norm;
        let w = [
            (p[0].norm_squared() / 4.0 - s0).exp(),
            (p[1].norm_squared() / 4.0 - s0).exp(),
            (p[2].norm_squared() / 4.0 - s0).exp(),
        ];
        let wbar = (w[0] + w[1] + w[2]) / 3.0;
        let mut out = [Vector3::zeros(); 3];
        for i in 0..3 {
            let opposite = p[(i + 2) % 3] - p[(i + 1) % 3];
            out[i] = wbar * 0.5 * nhat.cross(&opposite) + (area * w[i] / 6.0) * p[i];
        }
        Ok(out)
    };
    let per_face: Vec<[Vector3<f64>; 3]> = if complex.faces.len() >= PAR_THRESHOLD {
        (0..complex.faces.len())
            .into_par_iter()
            .map(compute)
            .collect::<Result<_, _>>()?
    } else {
        (0..complex.faces.len())
            .map(compute)
            .collect::<Result<_, _>>()?
    };
    let mut grad = vec![Vector3::zeros(); complex.vertices.len()];
    for (f, contrib) in per_face.iter().enumerate() {
        let verts = complex.faces[f].vertices;
        for i in 0..3 {
            grad[verts[i]] += contrib[i];
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{BoundaryMark, FaceRecord, PhaseLabel, PhasePair, SurfaceComplex};
    use crate::testmesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_triangle() -> SurfaceComplex {
        let vertices = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let faces = vec![FaceRecord {
            vertices: [0, 1, 2],
            phases: PhasePair::new(PhaseLabel(1), PhaseLabel(2)).0,
        }];
        let marks = vec![BoundaryMark::Interior; 3];
        SurfaceComplex::new(vertices, faces, 2, marks, 1.0)
    }

    #[test]
    fn single_triangle_energy() {
        // Centroid (1/3, 1/3, 0): |c|^2 = 2/9, exponent 1/18, so at the
        // canonical shift the shifted total is exactly the area.
        let e = weighted_area(&single_triangle()).unwrap();
        assert!((e.log_scale - 1.0 / 18.0).abs() < 1e-15);
        assert!((e.total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shrinking_toward_origin_recovers_euclidean_area() {
        let mut mesh = testmesh::flat_disk(1.0, 0.2);
        let lambda = 1e-6;
        for v in mesh.vertices.iter_mut() {
            *v *= lambda;
        }
        let e = weighted_area(&mesh).unwrap();
        let raw = e.total * e.log_scale.exp();
        let euclid = euclidean_area(&mesh);
        assert!((raw - euclid).abs() / euclid < 1e-9);
    }

    #[test]
    fn unit_disk_matches_radial_integral() {
        // Oracle: closed-form radial integral of the weight over the unit
        // disk, 4*pi*(e^{1/4} - 1).
        let oracle = 4.0 * std::f64::consts::PI * ((0.25f64).exp() - 1.0);
        let mesh = testmesh::flat_disk(1.0, 0.02);
        let e = weighted_area(&mesh).unwrap();
        let raw = e.total * e.log_scale.exp();
        let rel = (raw - oracle).abs() / oracle;
        assert!(rel < 0.01, "relative error {rel}");
    }

    #[test]
    fn scaling_law_on_euclidean_part() {
        let mesh = testmesh::flat_disk(1.0, 0.2);
        let mut scaled = mesh.clone();
        for v in scaled.vertices.iter_mut() {
            *v *= 3.0;
        }
        let a = euclidean_area(&mesh);
        let b = euclidean_area(&scaled);
        assert!((b / a - 9.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mesh = testmesh::flat_disk(1.0, 0.05);
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let e1 = pool1.install(|| weighted_area(&mesh).unwrap());
        let e4 = pool4.install(|| weighted_area(&mesh).unwrap());
        assert_eq!(e1.total.to_bits(), e4.total.to_bits());
        let g1 = pool1.install(|| weighted_area_gradient(&mesh).unwrap().0);
        let g4 = pool4.install(|| weighted_area_gradient(&mesh).unwrap().0);
        for (a, b) in g1.iter().zip(g4.iter()) {
            for i in 0..3 {
                assert_eq!(a[i].to_bits(), b[i].to_bits());
            }
        }
    }

    #[test]
    fn equilateral_gradient_is_radial_and_symmetric() {
        // Equilateral triangle centered at the origin.
        let d = 1.0;
        let vertices: Vec<Vector3<f64>> = (0..3)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                Vector3::new(d * t.cos(), d * t.sin(), 0.0)
            })
            .collect();
        let faces = vec![FaceRecord {
            vertices: [0, 1, 2],
            phases: PhasePair::new(PhaseLabel(1), PhaseLabel(2)).0,
        }];
        let mesh = SurfaceComplex::new(
            vertices.clone(),
            faces,
            2,
            vec![BoundaryMark::Interior; 3],
            1.0,
        );
        let (g, _) = weighted_area_gradient(&mesh).unwrap();
        let mags: Vec<f64> = g.iter().map(|v| v.norm()).collect();
        for i in 0..3 {
            let radial = vertices[i].normalize();
            let along = g[i].dot(&radial);
            assert!((g[i] - along * radial).norm() < 1e-14 * mags[i].max(1.0));
            assert!((mags[i] - mags[0]).abs() < 1e-14);
        }
    }

    /// Central finite differences of the raw energy; the independent oracle
    /// for the analytic gradient.
    fn fd_gradient(mesh: &SurfaceComplex, step: f64) -> Vec<Vector3<f64>> {
        let mut out = vec![Vector3::zeros(); mesh.vertices.len()];
        let mut work = mesh.clone();
        for v in 0..mesh.vertices.len() {
            for i in 0..3 {
                let orig = mesh.vertices[v][i];
                work.vertices[v][i] = orig + step;
                let ep = weighted_area_at_offset(&work, 0.0).unwrap();
                work.vertices[v][i] = orig - step;
                let em = weighted_area_at_offset(&work, 0.0).unwrap();
                work.vertices[v][i] = orig;
                out[v][i] = (ep - em) / (2.0 * step);
            }
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mesh = single_triangle();
        let g = weighted_area_gradient_at_offset(&mesh, 0.0).unwrap();
        let fd = fd_gradient(&mesh, 1e-6);
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in g.iter().zip(fd.iter()) {
            num += (a - b).norm_squared();
            den += b.norm_squared();
        }
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut mesh = testmesh::grid_patch(6, 5, 1.0, 0.8);
            let offset = Vector3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            );
            for v in mesh.vertices.iter_mut() {
                *v += offset
                    + Vector3::new(
                        rng.gen_range(-0.03..0.03),
                        rng.gen_range(-0.03..0.03),
                        rng.gen_range(-0.03..0.03),
                    );
            }
            let g = weighted_area_gradient_at_offset(&mesh, 0.0).unwrap();
            let fd = fd_gradient(&mesh, 1e-6 * mesh.bbox_diagonal());
            let mut num = 0.0;
            let mut den = 0.0;
            for (a, b) in g.iter().zip(fd.iter()) {
                num += (a - b).norm_squared();
                den += b.norm_squared();
            }
            let rel = (num / den).sqrt();
            assert!(rel < 1e-6, "relative Frobenius error {rel}");
        }
    }

    #[test]
    fn interior_gradient_of_centered_plane_is_in_plane() {
        // A flat region through the origin is stationary in the continuum:
        // the out-of-plane gradient component vanishes identically for any
        // in-plane layout.
        let mesh = testmesh::flat_disk(2.0, 0.2);
        let (g, _) = weighted_area_gradient(&mesh).unwrap();
        for (v, grad) in g.iter().enumerate() {
            if !mesh.is_boundary_vertex(v) {
                assert!(grad.z.abs() < 1e-12, "vertex {v}: z-component {}", grad.z);
            }
        }
    }

    #[test]
    fn degenerate_face_is_an_error() {
        let mut mesh = single_triangle();
        mesh.vertices[2] = Vector3::new(0.5, 0.0, 0.0);
        assert!(matches!(
            weighted_area(&mesh),
            Err(EnergyError::DegenerateFace { .. })
        ));
    }

    #[test]
    fn vertex_rule_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut mesh = testmesh::grid_patch(5, 4, 1.0, 0.9);
        for v in mesh.vertices.iter_mut() {
            *v += Vector3::new(
                rng.gen_range(-0.04..0.04),
                rng.gen_range(-0.04..0.04),
                rng.gen_range(-0.04..0.04),
            ) + Vector3::new(0.5, -0.3, 0.2);
        }
        let g = vertex_weighted_area_gradient_at_offset(&mesh, 0.0).unwrap();
        let step = 1e-6;
        let mut work = mesh.clone();
        let mut num = 0.0;
        let mut den = 0.0;
        for v in 0..mesh.vertex_count() {
            for i in 0..3 {
                let orig = mesh.vertices[v][i];
                work.vertices[v][i] = orig + step;
                let ep = vertex_weighted_area_at_offset(&work, 0.0).unwrap();
                work.vertices[v][i] = orig - step;
                let em = vertex_weighted_area_at_offset(&work, 0.0).unwrap();
                work.vertices[v][i] = orig;
                let fd = (ep - em) / (2.0 * step);
                num += (g[v][i] - fd) * (g[v][i] - fd);
                den += fd * fd;
            }
        }
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn vertex_rule_overestimates_centroid_rule_on_flat_disk() {
        // Convexity of the weight: vertex sampling >= centroid sampling per
        // face, which is what makes the solver's tangential problem
        // well-posed.
        let mesh = testmesh::flat_disk(1.5, 0.2);
        let ev = vertex_weighted_area_at_offset(&mesh, 0.0).unwrap();
        let ec = weighted_area_at_offset(&mesh, 0.0).unwrap();
        assert!(ev > ec);
        let oracle = 4.0 * std::f64::consts::PI * ((1.5f64 * 1.5 / 4.0).exp() - 1.0);
        assert!((ev - oracle).abs() / oracle < 0.02);
        assert!((ec - oracle).abs() / oracle < 0.02);
    }

    #[test]
    fn tree_sum_matches_sequential_sum_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = tree_sum(&xs);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let s3 = pool.install(|| tree_sum(&xs));
        assert_eq!(s.to_bits(), s3.to_bits());
    }
}
