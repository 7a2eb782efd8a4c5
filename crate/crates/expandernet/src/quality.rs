//! Mesh quality maintenance between solver iterations: edge flips and splits
//! on manifold sheet interiors, bounding the triangle aspect ratio.
//!
//! Junction and boundary topology is never touched (only 2-incidence edges
//! whose faces share one phase pair are eligible), and a pass that would
//! raise the energy by more than 1e-9 relative, or break an invariant, is
//! rejected wholesale.

use crate::complex::{validate, FaceRecord, SurfaceComplex, Topology};
use crate::energy::vertex_weighted_area_at_offset;

/// Aspect measure: longest edge over its altitude, `longest^2 / (2 area)`;
/// an equilateral triangle measures about 1.155.
pub fn face_aspect(complex: &SurfaceComplex, f: usize) -> f64 {
    let p = complex.face_positions(f);
    let e = [
        (p[1] - p[0]).norm(),
        (p[2] - p[1]).norm(),
        (p[0] - p[2]).norm(),
    ];
    let longest = e[0].max(e[1]).max(e[2]);
    let area = complex.face_area(f);
    if area <= 0.0 {
        f64::INFINITY
    } else {
        longest * longest / (2.0 * area)
    }
}

pub fn max_aspect(complex: &SurfaceComplex) -> f64 {
    (0..complex.face_count())
        .map(|f| face_aspect(complex, f))
        .fold(0.0, f64::max)
}

#[derive(Debug)]
pub enum QualityOutcome {
    /// Nothing to do, or the candidate pass was rejected (energy increase or
    /// broken invariant) and rolled back.
    Unchanged,
    Improved(SurfaceComplex),
}

fn tri_area(complex: &SurfaceComplex, t: &[usize; 3]) -> f64 {
    let a = complex.vertices[t[0]];
    let b = complex.vertices[t[1]];
    let c = complex.vertices[t[2]];
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn tri_normal(complex: &SurfaceComplex, t: &[usize; 3]) -> nalgebra::Vector3<f64> {
    let a = complex.vertices[t[0]];
    let b = complex.vertices[t[1]];
    let c = complex.vertices[t[2]];
    (b - a).cross(&(c - a))
}

fn aspect_of(complex: &SurfaceComplex, t: &[usize; 3]) -> f64 {
    let a = complex.vertices[t[0]];
    let b = complex.vertices[t[1]];
    let c = complex.vertices[t[2]];
    let e = [(b - a).norm(), (c - b).norm(), (a - c).norm()];
    let longest = e[0].max(e[1]).max(e[2]);
    let area = tri_area(complex, t);
    if area <= 0.0 {
        f64::INFINITY
    } else {
        longest * longest / (2.0 * area)
    }
}

/// One quality pass. Flips diagonal of manifold quads when it strictly
/// improves the worse aspect, then splits the longest manifold edge of any
/// face above `aspect_threshold`.
pub fn quality_pass(
    complex: &SurfaceComplex,
    s0: f64,
    aspect_threshold: f64,
    max_faces: usize,
) -> QualityOutcome {
    let energy_before = match vertex_weighted_area_at_offset(complex, s0) {
        Ok(e) => e,
        Err(_) => return QualityOutcome::Unchanged,
    };
    let violations_before = validate(complex).violations.len();

    let mut work = complex.clone();
    let mut changed = false;

    for _ in 0..5 {
        let mut pass_changed = false;
        let topo = Topology::build(&work);
        let mut face_dirty = vec![false; work.faces.len()];

        // Flips.
        for ei in 0..topo.edges.len() {
            let faces = &topo.edge_faces[ei];
            if faces.len() != 2 {
                continue;
            }
            let (f1, f2) = (faces[0], faces[1]);
            if face_dirty[f1] || face_dirty[f2] {
                continue;
            }
            if work.faces[f1].phases != work.faces[f2].phases {
                continue;
            }
            let (u, v) = topo.edges[ei];
            let a = match work.faces[f1].vertices.iter().find(|&&x| x != u && x != v) {
                Some(&a) => a,
                None => continue,
            };
            let b = match work.faces[f2].vertices.iter().find(|&&x| x != u && x != v) {
                Some(&b) => b,
                None => continue,
            };
            if a == b || topo.edge_id(a, b).is_some() {
                continue;
            }
            let old_worst = face_aspect(&work, f1).max(face_aspect(&work, f2));
            // New triangles around the diagonal (a, b), windings taken from
            // f1's traversal of (u, v).
            let f1v = work.faces[f1].vertices;
            let (u1, v1) = if (f1v[0] == u && f1v[1] == v)
                || (f1v[1] == u && f1v[2] == v)
                || (f1v[2] == u && f1v[0] == v)
            {
                (u, v)
            } else {
                (v, u)
            };
            let t1 = [a, u1, b];
            let t2 = [b, v1, a];
            let eps = work.eps_area();
            if tri_area(&work, &t1) < eps || tri_area(&work, &t2) < eps {
                continue;
            }
            let new_worst = aspect_of(&work, &t1).max(aspect_of(&work, &t2));
            if new_worst >= 0.95 * old_worst {
                continue;
            }
            let old_normal = tri_normal(&work, &work.faces[f1].vertices)
                + tri_normal(&work, &work.faces[f2].vertices);
            if tri_normal(&work, &t1).dot(&old_normal) <= 0.0
                || tri_normal(&work, &t2).dot(&old_normal) <= 0.0
            {
                continue;
            }
            let phases = work.faces[f1].phases;
            work.faces[f1] = FaceRecord {
                vertices: t1,
                phases,
            };
            work.faces[f2] = FaceRecord {
                vertices: t2,
                phases,
            };
            face_dirty[f1] = true;
            face_dirty[f2] = true;
            pass_changed = true;
        }

        // Splits of the longest manifold edge of over-threshold faces.
        let topo = Topology::build(&work);
        let mut blocked = vec![false; work.vertices.len()];
        let bad_faces: Vec<usize> = (0..work.faces.len())
            .filter(|&f| face_aspect(&work, f) > aspect_threshold)
            .collect();
        for f in bad_faces {
            let verts = work.faces[f].vertices;
            let mut edges: Vec<(f64, usize, usize)> = [
                (verts[0], verts[1]),
                (verts[1], verts[2]),
                (verts[2], verts[0]),
            ]
            .iter()
            .map(|&(p, q)| ((work.vertices[p] - work.vertices[q]).norm(), p, q))
            .collect();
            edges.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
            for &(_, p, q) in &edges {
                if blocked[p] || blocked[q] {
                    continue;
                }
                let ei = match topo.edge_id(p, q) {
                    Some(e) => e,
                    None => continue,
                };
                let incident = topo.edge_faces[ei].clone();
                if incident.len() != 2 {
                    continue;
                }
                if work.faces[incident[0]].phases != work.faces[incident[1]].phases {
                    continue;
                }
                if work.faces.len() + 2 > max_faces {
                    break;
                }
                let mid = (work.vertices[p] + work.vertices[q]) * 0.5;
                let w = work.vertices.len();
                work.vertices.push(mid);
                work.marks.push(crate::complex::BoundaryMark::Interior);
                blocked.push(false);
                // Reject the split when any child would be worse than its
                // parent (needle configurations degrade under bisection).
                let mut improves = true;
                for &fi in &incident {
                    let parent = aspect_of(&work, &work.faces[fi].vertices);
                    let half1 = work.faces[fi].vertices.map(|x| if x == q { w } else { x });
                    let half2 = work.faces[fi].vertices.map(|x| if x == p { w } else { x });
                    if aspect_of(&work, &half1).max(aspect_of(&work, &half2)) > parent {
                        improves = false;
                        break;
                    }
                }
                if !improves {
                    work.vertices.pop();
                    work.marks.pop();
                    blocked.pop();
                    continue;
                }
                for &fi in &incident {
                    let face = work.faces[fi];
                    let half1 = face.vertices.map(|x| if x == q { w } else { x });
                    let half2 = face.vertices.map(|x| if x == p { w } else { x });
                    work.faces[fi] = FaceRecord {
                        vertices: half1,
                        phases: face.phases,
                    };
                    work.faces.push(FaceRecord {
                        vertices: half2,
                        phases: face.phases,
                    });
                }
                blocked[p] = true;
                blocked[q] = true;
                pass_changed = true;
                break;
            }
        }

        if !pass_changed {
            break;
        }
        changed = true;
    }

    if !changed {
        return QualityOutcome::Unchanged;
    }
    // Local edits must not introduce new invariant violations (a valid input
    // stays valid; a test rig with pre-existing rim artifacts keeps them).
    if validate(&work).violations.len() > violations_before {
        return QualityOutcome::Unchanged;
    }
    let energy_after = match vertex_weighted_area_at_offset(&work, s0) {
        Ok(e) => e,
        Err(_) => return QualityOutcome::Unchanged,
    };
    if energy_after > energy_before * (1.0 + 1e-9) {
        return QualityOutcome::Unchanged;
    }
    QualityOutcome::Improved(work)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{extract_junctions, Topology};
    use crate::testmesh;

    #[test]
    fn well_shaped_mesh_is_a_noop() {
        // Polar disks carry mild anisotropy near the center but stay well
        // under the sliver threshold.
        let disk = testmesh::flat_disk(1.0, 0.2);
        let before = max_aspect(&disk);
        assert!(before < 12.0);
        match quality_pass(&disk, 0.25, 20.0, 100_000) {
            QualityOutcome::Unchanged => {}
            QualityOutcome::Improved(new) => {
                // Flips may still polish; aspect must not regress.
                assert!(max_aspect(&new) <= before + 1e-12);
            }
        }
    }

    #[test]
    fn sliver_heavy_mesh_improves_below_threshold() {
        // Flatten a few interior vertices almost onto the opposite edge of
        // one of their faces: the resulting caps are repaired by diagonal
        // flips of the long base edges.
        let mut disk = testmesh::flat_disk(1.0, 0.15);
        let mut flattened = 0;
        for f in 0..disk.face_count() {
            if flattened >= 3 {
                break;
            }
            let [v, a, b] = disk.faces[f].vertices;
            if disk.is_boundary_vertex(v)
                || disk.is_boundary_vertex(a)
                || disk.is_boundary_vertex(b)
                || v < 40
            {
                continue;
            }
            let mid = (disk.vertices[a] + disk.vertices[b]) * 0.5;
            disk.vertices[v] = mid + 0.02 * (disk.vertices[v] - mid);
            flattened += 1;
        }
        assert!(flattened > 0);
        let before = max_aspect(&disk);
        assert!(before > 20.0, "setup produced aspect {before}");
        let mut mesh = disk;
        for _ in 0..8 {
            match quality_pass(&mesh, 0.0, 20.0, 200_000) {
                QualityOutcome::Improved(m) => mesh = m,
                QualityOutcome::Unchanged => break,
            }
        }
        let after = max_aspect(&mesh);
        assert!(after < before, "no improvement: {before} -> {after}");
        assert!(after < 20.0, "still {after} after passes");
    }

    #[test]
    fn y_junction_chain_is_untouched() {
        let y = testmesh::y_half_disks(1.0, 0.2);
        let topo = Topology::build(&y);
        let before = extract_junctions(&y, &topo).unwrap();
        let new = match quality_pass(&y, 0.25, 20.0, 100_000) {
            QualityOutcome::Improved(m) => m,
            QualityOutcome::Unchanged => y.clone(),
        };
        let topo2 = Topology::build(&new);
        let after = extract_junctions(&new, &topo2).unwrap();
        assert_eq!(before.triple_curves.len(), after.triple_curves.len());
        assert_eq!(
            before.triple_curves[0].vertices,
            after.triple_curves[0].vertices
        );
    }
}
