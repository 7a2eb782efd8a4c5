//! Hand-rolled meshes for unit tests, built independently of the template
//! generators so the two constructions cross-check each other.

use nalgebra::Vector3;

use crate::complex::{BoundaryMark, FaceRecord, PhaseLabel, PhasePair, SurfaceComplex};

fn pair(a: u32, b: u32) -> PhasePair {
    PhasePair::new(PhaseLabel(a), PhaseLabel(b)).0
}

/// Flat disk of radius `r` in the z = 0 plane, phases (1, 2), rim on the
/// sphere of radius `r`.
pub fn flat_disk(r: f64, h: f64) -> SurfaceComplex {
    flat_disk_at_height(r, h, 0.0, r)
}

/// Planar disk at height `z0` whose rim lies on the sphere of radius
/// `sphere_r` (requires `sphere_r > |z0|`).
pub fn flat_disk_at_height(disk_r: f64, h: f64, z0: f64, sphere_r: f64) -> SurfaceComplex {
    let n = ((disk_r / h).ceil() as usize).max(1);
    let m = (((2.0 * std::f64::consts::PI * disk_r) / h).ceil() as usize).max(6);

    let mut vertices = vec![Vector3::new(0.0, 0.0, z0)];
    let mut marks = vec![BoundaryMark::Interior];
    let mut ring_start = vec![0usize; n + 1];
    for k in 1..=n {
        ring_start[k] = vertices.len();
        let rk = disk_r * k as f64 / n as f64;
        for j in 0..m {
            let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            vertices.push(Vector3::new(rk * t.cos(), rk * t.sin(), z0));
            marks.push(if k == n {
                BoundaryMark::Sphere
            } else {
                BoundaryMark::Interior
            });
        }
    }

    let mut faces = Vec::new();
    for j in 0..m {
        let a = ring_start[1] + j;
        let b = ring_start[1] + (j + 1) % m;
        faces.push(FaceRecord {
            vertices: [0, a, b],
            phases: pair(1, 2),
        });
    }
    for k in 1..n {
        for j in 0..m {
            let a = ring_start[k] + j;
            let b = ring_start[k] + (j + 1) % m;
            let c = ring_start[k + 1] + j;
            let d = ring_start[k + 1] + (j + 1) % m;
            faces.push(FaceRecord {
                vertices: [a, c, d],
                phases: pair(1, 2),
            });
            faces.push(FaceRecord {
                vertices: [a, d, b],
                phases: pair(1, 2),
            });
        }
    }

    SurfaceComplex::new(vertices, faces, 2, marks, sphere_r)
}

/// Three flat half-disks at 120 degrees sharing the z-axis diameter; phases
/// (1,2), (2,3), (1,3).
pub fn y_half_disks(r: f64, h: f64) -> SurfaceComplex {
    let n = ((r / h).ceil() as usize).max(1);
    let m = (((std::f64::consts::PI * r) / h).ceil() as usize).max(4);

    let mut vertices = vec![Vector3::zeros()];
    let mut marks = vec![BoundaryMark::Interior];

    // Shared axis vertices: plus[k] at +r_k z, minus[k] at -r_k z, k = 1..=n.
    let mut plus = vec![0usize; n + 1];
    let mut minus = vec![0usize; n + 1];
    for k in 1..=n {
        let rk = r * k as f64 / n as f64;
        plus[k] = vertices.len();
        vertices.push(Vector3::new(0.0, 0.0, rk));
        marks.push(if k == n {
            BoundaryMark::Sphere
        } else {
            BoundaryMark::Interior
        });
        minus[k] = vertices.len();
        vertices.push(Vector3::new(0.0, 0.0, -rk));
        marks.push(if k == n {
            BoundaryMark::Sphere
        } else {
            BoundaryMark::Interior
        });
    }

    let dirs = [0.0f64, 2.0 * std::f64::consts::PI / 3.0, 4.0 * std::f64::consts::PI / 3.0];
    let pairs = [pair(1, 2), pair(2, 3), pair(1, 3)];

    let mut faces = Vec::new();
    for (s, &lon) in dirs.iter().enumerate() {
        let d = Vector3::new(lon.cos(), lon.sin(), 0.0);
        // ring k has points theta_j = j*pi/m, j = 0..=m; j = 0 is +z axis,
        // j = m is -z axis.
        let mut rings: Vec<Vec<usize>> = vec![vec![0]];
        for k in 1..=n {
            let rk = r * k as f64 / n as f64;
            let mut ring = Vec::with_capacity(m + 1);
            for j in 0..=m {
                if j == 0 {
                    ring.push(plus[k]);
                } else if j == m {
                    ring.push(minus[k]);
                } else {
                    let th = std::f64::consts::PI * j as f64 / m as f64;
                    ring.push(vertices.len());
                    vertices.push(rk * (th.cos() * Vector3::z() + th.sin() * d));
                    marks.push(if k == n {
                        BoundaryMark::Sphere
                    } else {
                        BoundaryMark::Interior
                    });
                }
            }
            rings.push(ring);
        }
        for j in 0..m {
            faces.push(FaceRecord {
                vertices: [0, rings[1][j], rings[1][j + 1]],
                phases: pairs[s],
            });
        }
        for k in 1..n {
            for j in 0..m {
                let a = rings[k][j];
                let b = rings[k][j + 1];
                let c = rings[k + 1][j];
                let d2 = rings[k + 1][j + 1];
                faces.push(FaceRecord {
                    vertices: [a, c, d2],
                    phases: pairs[s],
                });
                faces.push(FaceRecord {
                    vertices: [a, d2, b],
                    phases: pairs[s],
                });
            }
        }
    }

    SurfaceComplex::new(vertices, faces, 3, marks, r)
}

/// Two parallel disks with rims on the common sphere of radius `r`.
pub fn two_disjoint_disks(r: f64, h: f64) -> SurfaceComplex {
    let z = 0.8 * r;
    let rho = (r * r - z * z).sqrt();
    let top = flat_disk_at_height(rho, h, z, r);
    let bottom = flat_disk_at_height(rho, h, -z, r);

    let mut vertices = top.vertices.clone();
    let mut marks = top.marks.clone();
    let mut faces = top.faces.clone();
    let offset = vertices.len();
    vertices.extend(bottom.vertices.iter().copied());
    marks.extend(bottom.marks.iter().copied());
    for f in &bottom.faces {
        faces.push(FaceRecord {
            vertices: [
                f.vertices[0] + offset,
                f.vertices[1] + offset,
                f.vertices[2] + offset,
            ],
            phases: f.phases,
        });
    }
    SurfaceComplex::new(vertices, faces, 2, marks, r)
}

/// Icosphere of radius `radius` with outward orientation (phases 1 -> 2).
pub fn icosphere(radius: f64, subdivisions: usize) -> SurfaceComplex {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let scale = 1.0 / (1.0 + phi * phi).sqrt();
    let mut vertices: Vec<Vector3<f64>> = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v * scale)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for i in 0..3 {
                let a = f[i];
                let b = f[(i + 1) % 3];
                let key = (a.min(b), a.max(b));
                mids[i] = *midpoints.entry(key).or_insert_with(|| {
                    let mid = ((vertices[a] + vertices[b]) * 0.5).normalize();
                    vertices.push(mid);
                    vertices.len() - 1
                });
            }
            new_faces.push([f[0], mids[0], mids[2]]);
            new_faces.push([f[1], mids[1], mids[0]]);
            new_faces.push([f[2], mids[2], mids[1]]);
            new_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = new_faces;
    }

    let vertices: Vec<Vector3<f64>> = vertices.into_iter().map(|v| v * radius).collect();
    let marks = vec![BoundaryMark::Interior; vertices.len()];
    let records = faces
        .into_iter()
        .map(|v| FaceRecord {
            vertices: v,
            phases: pair(1, 2),
        })
        .collect();
    SurfaceComplex::new(vertices, records, 2, marks, radius)
}

/// Open cylinder of radius `rho` and half-height `hz` about the z-axis,
/// outward oriented; end rims lie on the sphere of radius sqrt(rho^2+hz^2).
pub fn cylinder(rho: f64, hz: f64, nz: usize, m: usize) -> SurfaceComplex {
    let mut vertices = Vec::new();
    let mut marks = Vec::new();
    for k in 0..=nz {
        let z = -hz + 2.0 * hz * k as f64 / nz as f64;
        for j in 0..m {
            let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            vertices.push(Vector3::new(rho * t.cos(), rho * t.sin(), z));
            marks.push(if k == 0 || k == nz {
                BoundaryMark::Sphere
            } else {
                BoundaryMark::Interior
            });
        }
    }
    let mut faces = Vec::new();
    for k in 0..nz {
        for j in 0..m {
            let a = k * m + j;
            let b = k * m + (j + 1) % m;
            let c = (k + 1) * m + j;
            let d = (k + 1) * m + (j + 1) % m;
            // Outward normals.
            faces.push(FaceRecord {
                vertices: [a, b, d],
                phases: pair(1, 2),
            });
            faces.push(FaceRecord {
                vertices: [a, d, c],
                phases: pair(1, 2),
            });
        }
    }
    let r = (rho * rho + hz * hz).sqrt();
    SurfaceComplex::new(vertices, faces, 2, marks, r)
}

/// Rectangular grid patch of `nx` x `ny` vertices in the z = 0 plane spanning
/// `[0, lx] x [0, ly]`, all vertices interior-marked. Only for kernel tests
/// that bypass full validation.
pub fn grid_patch(nx: usize, ny: usize, lx: f64, ly: f64) -> SurfaceComplex {
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push(Vector3::new(
                lx * i as f64 / (nx - 1) as f64,
                ly * j as f64 / (ny - 1) as f64,
                0.0,
            ));
        }
    }
    let mut faces = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let b = j * nx + i + 1;
            let c = (j + 1) * nx + i;
            let d = (j + 1) * nx + i + 1;
            faces.push(FaceRecord {
                vertices: [a, b, d],
                phases: pair(1, 2),
            });
            faces.push(FaceRecord {
                vertices: [a, d, c],
                phases: pair(1, 2),
            });
        }
    }
    let marks = vec![BoundaryMark::Interior; vertices.len()];
    SurfaceComplex::new(vertices, faces, 2, marks, 1.0)
}
