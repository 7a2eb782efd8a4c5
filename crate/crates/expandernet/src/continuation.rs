//! Continuation in the truncation radius: solve on a ball, extend the mesh
//! outward along the cone, and re-solve warm-started — the discrete analogue
//! of exhausting space with a diverging radius sequence.


use thiserror::Error;

use crate::complex::{validate, BoundaryMark, FaceRecord, SurfaceComplex, Topology};
use crate::cone::ConeSpec;
use crate::solver::{minimize, OptimizerState, SolveConfig, SolveError};
use crate::templates::{instantiate, TemplateError, TemplateKind};

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("radius schedule must be strictly increasing and non-empty")]
    BadSchedule,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("mesh extension failed: {0}")]
    Extension(String),
}

/// Solve at every radius of `config.radius_schedule`, extending the previous
/// solution outward along the cone between radii.
pub fn continue_in_radius(
    spec: &ConeSpec,
    template: TemplateKind,
    h: f64,
    config: &SolveConfig,
    allow_nonregular: bool,
) -> Result<Vec<OptimizerState>, ContinuationError> {
    let schedule = &config.radius_schedule;
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ContinuationError::BadSchedule);
    }

    let mut states = Vec::with_capacity(schedule.len());
    let first = instantiate(template, spec, schedule[0], h, allow_nonregular)?;
    states.push(minimize(&first, spec, config)?);

    for &radius in &schedule[1..] {
        let previous = &states.last().unwrap().complex;
        let extended = extend_to_radius(previous, spec, radius, h)
            .map_err(ContinuationError::Extension)?;
        states.push(minimize(&extended, spec, config)?);
    }
    Ok(states)
}

/// Append a conical annulus between the current truncation sphere and
/// `new_radius`: every boundary chain is extruded radially along the cone,
/// chains meeting at a trace node share the extruded ray (so triple curves
/// continue along the cone's junction rays), and the old boundary becomes
/// interior.
pub fn extend_to_radius(
    complex: &SurfaceComplex,
    _spec: &ConeSpec,
    new_radius: f64,
    h: f64,
) -> Result<SurfaceComplex, String> {
    let old_radius = complex.truncation_radius;
    if new_radius <= old_radius {
        return Err(format!(
            "new radius {new_radius} must exceed the current radius {old_radius}"
        ));
    }
    if !validate(complex).is_ok() {
        return Err("input complex fails validation".into());
    }

    let topo = Topology::build(complex);

    // Rim chains: walk boundary (1-incidence) edges, breaking at vertices
    // whose boundary degree differs from 2.
    let mut boundary_edges: Vec<usize> = Vec::new();
    let mut degree = vec![0usize; complex.vertices.len()];
    for (ei, faces) in topo.edge_faces.iter().enumerate() {
        if faces.len() == 1 {
            boundary_edges.push(ei);
            let (u, v) = topo.edges[ei];
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    if boundary_edges.is_empty() {
        return Err("complex has no boundary to extend".into());
    }

    let mut edge_used = vec![false; topo.edges.len()];
    let mut chains: Vec<(Vec<usize>, bool)> = Vec::new(); // (vertices, closed)

    let next_edge = |vertex: usize, from: usize, edge_used: &[bool]| -> Option<usize> {
        topo.vertex_edges[vertex]
            .iter()
            .copied()
            .find(|&e| e != from && !edge_used[e] && topo.edge_faces[e].len() == 1)
    };

    // Open chains from break vertices.
    for v in 0..complex.vertices.len() {
        if degree[v] == 0 || degree[v] == 2 {
            continue;
        }
        loop {
            let start = topo.vertex_edges[v]
                .iter()
                .copied()
                .find(|&e| !edge_used[e] && topo.edge_faces[e].len() == 1);
            let mut e = match start {
                Some(e) => e,
                None => break,
            };
            let mut chain = vec![v];
            let mut cur = v;
            loop {
                edge_used[e] = true;
                let (a, b) = topo.edges[e];
                let nxt = if a == cur { b } else { a };
                chain.push(nxt);
                if degree[nxt] != 2 {
                    break;
                }
                match next_edge(nxt, e, &edge_used) {
                    Some(ne) => {
                        cur = nxt;
                        e = ne;
                    }
                    None => break,
                }
            }
            chains.push((chain, false));
        }
    }
    // Closed loops.
    for &ei in &boundary_edges {
        if edge_used[ei] {
            continue;
        }
        let (start, _) = topo.edges[ei];
        let mut chain = vec![start];
        let mut cur = start;
        let mut e = ei;
        loop {
            edge_used[e] = true;
            let (a, b) = topo.edges[e];
            let nxt = if a == cur { b } else { a };
            if nxt == start {
                break;
            }
            chain.push(nxt);
            match next_edge(nxt, e, &edge_used) {
                Some(ne) => {
                    cur = nxt;
                    e = ne;
                }
                None => break,
            }
        }
        chains.push((chain, true));
    }

    let mut out = complex.clone();
    for mark in out.marks.iter_mut() {
        if *mark == BoundaryMark::Sphere {
            *mark = BoundaryMark::Interior;
        }
    }
    out.truncation_radius = new_radius;

    let layers = (((new_radius - old_radius) / h).ceil() as usize).max(1);
    let rho = |l: usize| old_radius + (new_radius - old_radius) * l as f64 / layers as f64;

    // Shared radial extrusions of chain-break vertices.
    let mut rays: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    let mut ray_of = |w: usize, out: &mut SurfaceComplex| -> Vec<usize> {
        if let Some(r) = rays.get(&w) {
            return r.clone();
        }
        let dir = complex.vertices[w].normalize();
        let chain: Vec<usize> = (1..=layers)
            .map(|l| {
                let mark = if l == layers {
                    BoundaryMark::Sphere
                } else {
                    BoundaryMark::Interior
                };
                out.vertices.push(dir * rho(l));
                out.marks.push(mark);
                out.vertices.len() - 1
            })
            .collect();
        rays.insert(w, chain.clone());
        chain
    };

    for (chain, closed) in chains {
        // Orient the chain so its edges run forward in their incident faces:
        // the appended strip then traverses them backward, giving consistent
        // sheet orientation.
        let mut chain = chain;
        let pair = {
            let e = topo
                .edge_id(chain[0], chain[1])
                .ok_or("chain edge missing")?;
            let f = topo.edge_faces[e][0];
            complex.faces[f].phases
        };
        {
            let e = topo.edge_id(chain[0], chain[1]).unwrap();
            let f = topo.edge_faces[e][0];
            let fv = complex.faces[f].vertices;
            let forward = (fv[0] == chain[0] && fv[1] == chain[1])
                || (fv[1] == chain[0] && fv[2] == chain[1])
                || (fv[2] == chain[0] && fv[0] == chain[1]);
            if !forward {
                chain.reverse();
            }
        }
        for w in chain.windows(2) {
            let e = topo.edge_id(w[0], w[1]).ok_or("chain edge missing")?;
            let f = topo.edge_faces[e][0];
            if complex.faces[f].phases != pair {
                return Err("rim chain crosses sheets with different phase pairs".into());
            }
        }

        // Build the extruded rows.
        let m = chain.len();
        let mut rows: Vec<Vec<usize>> = vec![chain.clone()];
        for l in 1..=layers {
            let mut row = Vec::with_capacity(m);
            for (i, &w) in chain.iter().enumerate() {
                let is_break = !closed && (i == 0 || i == m - 1);
                if is_break {
                    let ray = ray_of(w, &mut out);
                    row.push(ray[l - 1]);
                } else {
                    let dir = complex.vertices[w].normalize();
                    let mark = if l == layers {
                        BoundaryMark::Sphere
                    } else {
                        BoundaryMark::Interior
                    };
                    out.vertices.push(dir * rho(l));
                    out.marks.push(mark);
                    row.push(out.vertices.len() - 1);
                }
            }
            rows.push(row);
        }

        for l in 0..layers {
            let inner = &rows[l];
            let outer = &rows[l + 1];
            let quads = if closed { m } else { m - 1 };
            for i in 0..quads {
                let inext = (i + 1) % m;
                let (a, b) = (inner[i], inner[inext]);
                let (c, d) = (outer[i], outer[inext]);
                // Traverse the inner edge backward (b -> a).
                out.faces.push(FaceRecord {
                    vertices: [b, a, c],
                    phases: pair,
                });
                out.faces.push(FaceRecord {
                    vertices: [b, c, d],
                    phases: pair,
                });
            }
        }
    }

    let outcome = validate(&out);
    if !outcome.is_ok() {
        return Err(format!(
            "extended mesh fails validation ({} violations, e.g. {})",
            outcome.violations.len(),
            outcome.violations[0]
        ));
    }
    Ok(out)
}
