//! Graphical planar ends and the Jacobi operator `L u = Δu + x·∇u/2 - u/2`.
//!
//! Far from the junction set, each sheet of an expander is a graph over its
//! asymptotic plane. [`fit_planar_end`] samples the height function by
//! casting rays normal to the plane; [`jacobi_apply`] evaluates the
//! linearized expander operator on such height grids with second-order
//! centered differences.

use nalgebra::Vector3;
use thiserror::Error;

use crate::complex::{PhasePair, SurfaceComplex};

#[derive(Debug, Error)]
pub enum EndsError {
    #[error("grid must be at least 3 x 3 nodes, got {nx} x {ny}")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("not graphical: ray at in-plane ({x:.4}, {y:.4}) hits the mesh {hits} times")]
    NotGraphical { x: f64, y: f64, hits: usize },
    #[error("annulus [{r0}, {r1}] is empty or inverted")]
    BadAnnulus { r0: f64, r1: f64 },
}

/// Uniform rectangular grid with a validity mask. Node `(i, j)` sits at
/// in-plane coordinates `(x0 + i h, y0 + j h)`.
#[derive(Debug, Clone)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Grid2 {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.index(i, j);
        if self.valid[k] {
            Some(self.values[k])
        } else {
            None
        }
    }
}

/// The plane of one asymptotic end: orthonormal in-plane frame plus normal,
/// an optional angular sector in that frame and an optional sheet filter.
#[derive(Debug, Clone)]
pub struct EndPlane {
    pub normal: Vector3<f64>,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    /// Angular domain `[a0, a1]` in the `(e1, e2)` frame; `None` = full plane.
    pub sector: Option<(f64, f64)>,
    /// Restrict ray casting to faces separating this phase pair.
    pub phases: Option<PhasePair>,
}

impl EndPlane {
    /// Full plane with the given unit normal; the in-plane frame is any
    /// orthonormal completion.
    pub fn full(normal: Vector3<f64>) -> Self {
        let n = normal.normalize();
        let e1 = orthonormal_to(&n);
        let e2 = n.cross(&e1);
        Self {
            normal: n,
            e1,
            e2,
            sector: None,
            phases: None,
        }
    }

    fn in_sector(&self, x: f64, y: f64) -> bool {
        match self.sector {
            None => true,
            Some((a0, a1)) => {
                let mut t = y.atan2(x);
                if t < a0 {
                    t += 2.0 * std::f64::consts::PI;
                }
                t >= a0 && t <= a1
            }
        }
    }
}

/// Any unit vector orthogonal to `n`.
pub fn orthonormal_to(n: &Vector3<f64>) -> Vector3<f64> {
    let trial = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    (trial - n * trial.dot(n)).normalize()
}

/// Height samples of a mesh end over its asymptotic plane on an annulus.
#[derive(Debug, Clone)]
pub struct PlanarEndSample {
    pub plane: EndPlane,
    pub grid: Grid2,
    pub r0: f64,
    pub r1: f64,
    pub sup_u: f64,
    pub sup_grad_u: f64,
}

/// Signed distances `s` at which the line `p + s n` crosses the triangle,
/// within `|s| <= slab`.
fn line_triangle_hits(
    orig: Vector3<f64>,
    dir: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
    slab: f64,
    out: &mut Vec<f64>,
) {
    let edge1 = b - a;
    let edge2 = c - a;
    let pvec = dir.cross(&edge2);
    let det = edge1.dot(&pvec);
    if det.abs() < 1e-14 {
        return;
    }
    let inv = 1.0 / det;
    let tvec = orig - a;
    let u = tvec.dot(&pvec) * inv;
    if !(-1e-9..=1.0 + 1e-9).contains(&u) {
        return;
    }
    let qvec = tvec.cross(&edge1);
    let v = dir.dot(&qvec) * inv;
    if v < -1e-9 || u + v > 1.0 + 1e-9 {
        return;
    }
    let s = edge2.dot(&qvec) * inv;
    if s.abs() <= slab {
        out.push(s);
    }
}

/// Sample the height function of a graphical end by normal ray casting.
///
/// Every in-plane grid node inside the annulus (and sector) must see exactly
/// one mesh crossing within `|s| <= slab`; otherwise the end is not graphical
/// there and an error is raised.
pub fn fit_planar_end(
    complex: &SurfaceComplex,
    plane: &EndPlane,
    r0: f64,
    r1: f64,
    grid_h: f64,
    slab: f64,
) -> Result<PlanarEndSample, EndsError> {
    if !(r0 >= 0.0 && r1 > r0) {
        return Err(EndsError::BadAnnulus { r0, r1 });
    }
    let n = ((2.0 * r1 / grid_h).ceil() as usize).max(2) + 1;
    let mut grid = Grid2 {
        nx: n,
        ny: n,
        x0: -r1,
        y0: -r1,
        h: 2.0 * r1 / (n - 1) as f64,
        values: vec![0.0; n * n],
        valid: vec![false; n * n],
    };
    if grid.nx < 3 || grid.ny < 3 {
        return Err(EndsError::GridTooSmall {
            nx: grid.nx,
            ny: grid.ny,
        });
    }

    let faces: Vec<usize> = (0..complex.faces.len())
        .filter(|&f| match plane.phases {
            Some(p) => complex.faces[f].phases == p,
            None => true,
        })
        .collect();

    let mut hits = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.coords(i, j);
            let rad = (x * x + y * y).sqrt();
            if rad < r0 || rad > r1 || !plane.in_sector(x, y) {
                continue;
            }
            let orig = x * plane.e1 + y * plane.e2;
            hits.clear();
            for &f in &faces {
                let [a, b, c] = complex.face_positions(f);
                line_triangle_hits(orig, plane.normal, a, b, c, slab, &mut hits);
            }
            hits.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Rays through shared edges report once per face; merge.
            let tol = 1e-9 * (1.0 + slab);
            hits.dedup_by(|a, b| (*a - *b).abs() < tol);
            if hits.len() != 1 {
                return Err(EndsError::NotGraphical {
                    x,
                    y,
                    hits: hits.len(),
                });
            }
            let k = grid.index(i, j);
            grid.values[k] = hits[0];
            grid.valid[k] = true;
        }
    }

    let mut sup_u: f64 = 0.0;
    let mut sup_grad: f64 = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if let Some(u) = grid.get(i, j) {
                sup_u = sup_u.max(u.abs());
                if i > 0 && i + 1 < grid.nx && j > 0 && j + 1 < grid.ny {
                    if let (Some(ue), Some(uw), Some(un), Some(us)) = (
                        grid.get(i + 1, j),
                        grid.get(i - 1, j),
                        grid.get(i, j + 1),
                        grid.get(i, j - 1),
                    ) {
                        let gx = (ue - uw) / (2.0 * grid.h);
                        let gy = (un - us) / (2.0 * grid.h);
                        sup_grad = sup_grad.max((gx * gx + gy * gy).sqrt());
                    }
                }
            }
        }
    }

    Ok(PlanarEndSample {
        plane: plane.clone(),
        grid,
        r0,
        r1,
        sup_u,
        sup_grad_u: sup_grad,
    })
}

/// Evaluate `L u = Δu + x·∇u/2 - u/2` with centered differences. The result
/// is valid only on nodes whose full 5-point stencil is valid (one ghost
/// ring is consumed).
pub fn jacobi_apply(grid: &Grid2) -> Result<Grid2, EndsError> {
    if grid.nx < 3 || grid.ny < 3 {
        return Err(EndsError::GridTooSmall {
            nx: grid.nx,
            ny: grid.ny,
        });
    }
    let mut out = Grid2 {
        nx: grid.nx,
        ny: grid.ny,
        x0: grid.x0,
        y0: grid.y0,
        h: grid.h,
        values: vec![0.0; grid.nx * grid.ny],
        valid: vec![false; grid.nx * grid.ny],
    };
    let h = grid.h;
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            let c = grid.get(i, j);
            let e = grid.get(i + 1, j);
            let w = grid.get(i - 1, j);
            let nn = grid.get(i, j + 1);
            let ss = grid.get(i, j - 1);
            if let (Some(u), Some(ue), Some(uw), Some(un), Some(us)) = (c, e, w, nn, ss) {
                let (x, y) = grid.coords(i, j);
                let lap = (ue + uw + un + us - 4.0 * u) / (h * h);
                let ux = (ue - uw) / (2.0 * h);
                let uy = (un - us) / (2.0 * h);
                let k = out.index(i, j);
                out.values[k] = lap + 0.5 * (x * ux + y * uy) - 0.5 * u;
                out.valid[k] = true;
            }
        }
    }
    Ok(out)
}

/// Per-band decay profile: `(inner radius, sup |u|)` over `bands` equal
/// radial bands of the annulus. Empty bands are skipped.
pub fn end_decay(sample: &PlanarEndSample, bands: usize) -> Vec<(f64, f64)> {
    let mut sups = vec![(0.0f64, false); bands];
    let width = (sample.r1 - sample.r0) / bands as f64;
    for j in 0..sample.grid.ny {
        for i in 0..sample.grid.nx {
            if let Some(u) = sample.grid.get(i, j) {
                let (x, y) = sample.grid.coords(i, j);
                let r = (x * x + y * y).sqrt();
                let band = (((r - sample.r0) / width).floor() as usize).min(bands - 1);
                sups[band].0 = sups[band].0.max(u.abs());
                sups[band].1 = true;
            }
        }
    }
    sups.iter()
        .enumerate()
        .filter(|(_, &(_, seen))| seen)
        .map(|(b, &(s, _))| (sample.r0 + b as f64 * width, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmesh;

    fn full_grid(n: usize, half: f64, f: impl Fn(f64, f64) -> f64) -> Grid2 {
        let h = 2.0 * half / (n - 1) as f64;
        let mut grid = Grid2 {
            nx: n,
            ny: n,
            x0: -half,
            y0: -half,
            h,
            values: vec![0.0; n * n],
            valid: vec![true; n * n],
        };
        for j in 0..n {
            for i in 0..n {
                let (x, y) = grid.coords(i, j);
                let k = grid.index(i, j);
                grid.values[k] = f(x, y);
            }
        }
        grid
    }

    #[test]
    fn jacobi_annihilates_linear_functions() {
        // Linear tilts are expander-preserving: L(x1) = 0 + x1/2 - x1/2.
        let grid = full_grid(21, 1.0, |x, _| x);
        let lu = jacobi_apply(&grid).unwrap();
        for j in 1..20 {
            for i in 1..20 {
                assert!(lu.get(i, j).unwrap().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jacobi_of_constant_is_minus_half() {
        let grid = full_grid(15, 2.0, |_, _| 1.0);
        let lu = jacobi_apply(&grid).unwrap();
        for j in 1..14 {
            for i in 1..14 {
                assert!((lu.get(i, j).unwrap() + 0.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jacobi_of_radius_squared() {
        let grid = full_grid(17, 1.5, |x, y| x * x + y * y);
        let lu = jacobi_apply(&grid).unwrap();
        for j in 1..16 {
            for i in 1..16 {
                let (x, y) = grid.coords(i, j);
                let expect = 4.0 + (x * x + y * y) / 2.0;
                assert!((lu.get(i, j).unwrap() - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn grid_too_small_is_an_error() {
        let grid = full_grid(3, 1.0, |_, _| 0.0);
        let mut tiny = grid.clone();
        tiny.nx = 2;
        tiny.ny = 2;
        tiny.values.truncate(4);
        tiny.valid.truncate(4);
        assert!(matches!(
            jacobi_apply(&tiny),
            Err(EndsError::GridTooSmall { .. })
        ));
    }

    #[test]
    fn flat_sheet_over_its_own_plane_is_zero() {
        let disk = testmesh::flat_disk(2.0, 0.2);
        let plane = EndPlane::full(Vector3::z());
        let sample = fit_planar_end(&disk, &plane, 0.5, 1.5, 0.1, 1.0).unwrap();
        assert!(sample.sup_u < 1e-12);
    }

    #[test]
    fn tilted_plane_heights_are_linear() {
        let alpha: f64 = 0.1;
        let mut disk = testmesh::flat_disk(2.0, 0.1);
        for v in disk.vertices.iter_mut() {
            let (x, z) = (v.x, v.z);
            v.x = x * alpha.cos() + z * alpha.sin();
            v.z = -x * alpha.sin() + z * alpha.cos();
        }
        let plane = EndPlane {
            normal: Vector3::z(),
            e1: Vector3::x(),
            e2: Vector3::y(),
            sector: None,
            phases: None,
        };
        let r1 = 1.5;
        let sample = fit_planar_end(&disk, &plane, 0.5, r1, 0.05, 1.0).unwrap();
        let expect = r1 * alpha.tan();
        assert!(
            (sample.sup_u - expect).abs() < 0.1 * expect,
            "sup u = {}, expected about {}",
            sample.sup_u,
            expect
        );
        // Gradient magnitude is tan(alpha) everywhere.
        assert!((sample.sup_grad_u - alpha.tan()).abs() < 1e-6);
    }

    #[test]
    fn non_graphical_double_cover_is_detected() {
        // Two stacked disks: every ray hits twice.
        let disk = testmesh::two_disjoint_disks(2.0, 0.2);
        let plane = EndPlane::full(Vector3::z());
        let result = fit_planar_end(&disk, &plane, 0.2, 0.8, 0.1, 10.0);
        assert!(matches!(result, Err(EndsError::NotGraphical { .. })));
    }

    #[test]
    fn decay_profile_of_tilted_plane_is_increasing() {
        let alpha: f64 = 0.05;
        let mut disk = testmesh::flat_disk(2.0, 0.1);
        for v in disk.vertices.iter_mut() {
            let (x, z) = (v.x, v.z);
            v.x = x * alpha.cos() + z * alpha.sin();
            v.z = -x * alpha.sin() + z * alpha.cos();
        }
        let plane = EndPlane::full(Vector3::z());
        let sample = fit_planar_end(&disk, &plane, 0.4, 1.6, 0.05, 1.0).unwrap();
        let profile = end_decay(&sample, 4);
        assert_eq!(profile.len(), 4);
        for w in profile.windows(2) {
            assert!(w[1].1 >= w[0].1, "tilted plane sup|u| must grow with r");
        }
    }
}
