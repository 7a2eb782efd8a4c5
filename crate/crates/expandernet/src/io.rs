//! Line-based text formats: labeled meshes (`meshnet 1`), cone specs
//! (`conespec 1`), verification reports (`report 1`), CSV plot exports and
//! run manifests. Floats are written with the shortest round-trip decimal,
//! so canonical files survive a read/write cycle byte-for-byte.

use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

use crate::complex::{BoundaryMark, FaceRecord, PhaseLabel, PhasePair, SurfaceComplex};
use crate::cone::{ConeArc, ConeNode, ConeSpec};
use crate::verify::VerificationReport;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required `{0}` record")]
    Missing(&'static str),
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Line {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, tok: &str) -> Result<f64, ParseError> {
    tok.parse()
        .map_err(|_| err(line, format!("bad number `{tok}`")))
}

fn parse_usize(line: usize, tok: &str) -> Result<usize, ParseError> {
    tok.parse()
        .map_err(|_| err(line, format!("bad integer `{tok}`")))
}

// ---------------------------------------------------------------------------
// meshnet

/// Parse a labeled mesh file.
///
/// Format: `meshnet 1` header, `k <K>`, `r <R>`, `v <x> <y> <z> <i|b>` and
/// `f <v1> <v2> <v3> <pa> <pb>` with 1-based vertex indices and `pa < pb`.
/// Unknown lines are errors with their line number.
pub fn read_meshnet(text: &str) -> Result<SurfaceComplex, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "meshnet 1" => {}
        Some((i, l)) => return Err(err(i + 1, format!("expected `meshnet 1`, got `{l}`"))),
        None => return Err(ParseError::Missing("meshnet 1")),
    }
    let mut phase_count: Option<u32> = None;
    let mut radius: Option<f64> = None;
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut marks: Vec<BoundaryMark> = Vec::new();
    let mut faces: Vec<FaceRecord> = Vec::new();

    for (i, raw) in lines {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "k" if toks.len() == 2 => {
                phase_count = Some(parse_usize(line, toks[1])? as u32);
            }
            "r" if toks.len() == 2 => {
                let r = parse_f64(line, toks[1])?;
                if !(r > 0.0) {
                    return Err(err(line, "truncation radius must be positive"));
                }
                radius = Some(r);
            }
            "v" if toks.len() == 5 => {
                vertices.push(Vector3::new(
                    parse_f64(line, toks[1])?,
                    parse_f64(line, toks[2])?,
                    parse_f64(line, toks[3])?,
                ));
                marks.push(match toks[4] {
                    "i" => BoundaryMark::Interior,
                    "b" => BoundaryMark::Sphere,
                    other => return Err(err(line, format!("bad vertex flag `{other}`"))),
                });
            }
            "f" if toks.len() == 6 => {
                let v1 = parse_usize(line, toks[1])?;
                let v2 = parse_usize(line, toks[2])?;
                let v3 = parse_usize(line, toks[3])?;
                if v1 == 0 || v2 == 0 || v3 == 0 {
                    return Err(err(line, "vertex indices are 1-based"));
                }
                let pa = parse_usize(line, toks[4])? as u32;
                let pb = parse_usize(line, toks[5])? as u32;
                if pa >= pb {
                    return Err(err(line, "phase pair must satisfy pa < pb"));
                }
                faces.push(FaceRecord {
                    vertices: [v1 - 1, v2 - 1, v3 - 1],
                    phases: PhasePair::new(PhaseLabel(pa), PhaseLabel(pb)).0,
                });
            }
            other => return Err(err(line, format!("unknown record `{other}`"))),
        }
    }

    let phase_count = phase_count.ok_or(ParseError::Missing("k"))?;
    let radius = radius.ok_or(ParseError::Missing("r"))?;
    Ok(SurfaceComplex::new(
        vertices,
        faces,
        phase_count,
        marks,
        radius,
    ))
}

/// Write a mesh in canonical order: header, `k`, `r`, vertices, faces.
pub fn write_meshnet(complex: &SurfaceComplex) -> String {
    let mut out = String::new();
    out.push_str("meshnet 1\n");
    let _ = writeln!(out, "k {}", complex.phase_count);
    let _ = writeln!(out, "r {}", complex.truncation_radius);
    for (v, mark) in complex.vertices.iter().zip(complex.marks.iter()) {
        let flag = match mark {
            BoundaryMark::Interior => "i",
            BoundaryMark::Sphere => "b",
        };
        let _ = writeln!(out, "v {} {} {} {}", v.x, v.y, v.z, flag);
    }
    for f in &complex.faces {
        let _ = writeln!(
            out,
            "f {} {} {} {} {}",
            f.vertices[0] + 1,
            f.vertices[1] + 1,
            f.vertices[2] + 1,
            f.phases.a.0,
            f.phases.b.0
        );
    }
    out
}

// ---------------------------------------------------------------------------
// conespec

/// Parse a cone spec.
///
/// Format: `conespec 1`, `k <K>`, `n <ux> <uy> <uz> [h]` (helper tag), and
/// `a <node_a> <node_b> <left> <right>` with 1-based node indices.
pub fn read_conespec(text: &str) -> Result<ConeSpec, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "conespec 1" => {}
        Some((i, l)) => return Err(err(i + 1, format!("expected `conespec 1`, got `{l}`"))),
        None => return Err(ParseError::Missing("conespec 1")),
    }
    let mut region_count: Option<u32> = None;
    let mut nodes: Vec<ConeNode> = Vec::new();
    let mut arcs: Vec<ConeArc> = Vec::new();

    for (i, raw) in lines {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "k" if toks.len() == 2 => {
                region_count = Some(parse_usize(line, toks[1])? as u32);
            }
            "n" if toks.len() == 4 || toks.len() == 5 => {
                let helper = match toks.get(4) {
                    None => false,
                    Some(&"h") => true,
                    Some(other) => return Err(err(line, format!("bad node tag `{other}`"))),
                };
                nodes.push(ConeNode {
                    dir: Vector3::new(
                        parse_f64(line, toks[1])?,
                        parse_f64(line, toks[2])?,
                        parse_f64(line, toks[3])?,
                    ),
                    helper,
                });
            }
            "a" if toks.len() == 5 => {
                let na = parse_usize(line, toks[1])?;
                let nb = parse_usize(line, toks[2])?;
                if na == 0 || nb == 0 {
                    return Err(err(
                        line,
                        "node indices are 1-based; free arc endpoints are not allowed",
                    ));
                }
                arcs.push(ConeArc {
                    nodes: [na - 1, nb - 1],
                    left: PhaseLabel(parse_usize(line, toks[3])? as u32),
                    right: PhaseLabel(parse_usize(line, toks[4])? as u32),
                });
            }
            other => return Err(err(line, format!("unknown record `{other}`"))),
        }
    }

    let region_count = region_count.ok_or(ParseError::Missing("k"))?;
    for (idx, arc) in arcs.iter().enumerate() {
        if arc.nodes[0] >= nodes.len() || arc.nodes[1] >= nodes.len() {
            return Err(err(0, format!("arc {} references a missing node", idx + 1)));
        }
    }
    Ok(ConeSpec {
        nodes,
        arcs,
        region_count,
    })
}

pub fn write_conespec(spec: &ConeSpec) -> String {
    let mut out = String::new();
    out.push_str("conespec 1\n");
    let _ = writeln!(out, "k {}", spec.region_count);
    for n in &spec.nodes {
        if n.helper {
            let _ = writeln!(out, "n {} {} {} h", n.dir.x, n.dir.y, n.dir.z);
        } else {
            let _ = writeln!(out, "n {} {} {}", n.dir.x, n.dir.y, n.dir.z);
        }
    }
    for a in &spec.arcs {
        let _ = writeln!(
            out,
            "a {} {} {} {}",
            a.nodes[0] + 1,
            a.nodes[1] + 1,
            a.left.0,
            a.right.0
        );
    }
    out
}

// ---------------------------------------------------------------------------
// report

pub fn write_report(report: &VerificationReport) -> String {
    let mut out = String::new();
    out.push_str("report 1\n");
    for (name, ok) in &report.checks {
        let _ = writeln!(out, "check {} {}", name, if *ok { "pass" } else { "fail" });
    }
    for (name, value) in &report.metrics {
        let _ = writeln!(out, "metric {} {}", name, value);
    }
    out
}

/// Checks and metrics of a report file, in file order.
pub type ReportData = (Vec<(String, bool)>, Vec<(String, f64)>);

pub fn read_report(text: &str) -> Result<ReportData, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "report 1" => {}
        Some((i, l)) => return Err(err(i + 1, format!("expected `report 1`, got `{l}`"))),
        None => return Err(ParseError::Missing("report 1")),
    }
    let mut checks = Vec::new();
    let mut metrics = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "check" if toks.len() == 3 => {
                let ok = match toks[2] {
                    "pass" => true,
                    "fail" => false,
                    other => return Err(err(line, format!("bad verdict `{other}`"))),
                };
                checks.push((toks[1].to_string(), ok));
            }
            "metric" if toks.len() == 3 => {
                metrics.push((toks[1].to_string(), parse_f64(line, toks[2])?));
            }
            other => return Err(err(line, format!("unknown record `{other}`"))),
        }
    }
    Ok((checks, metrics))
}

// ---------------------------------------------------------------------------
// point lists (for the model-map subcommand)

pub fn read_points(text: &str) -> Result<Vec<Vector3<f64>>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(err(i + 1, "expected `<x> <y> <z>`"));
        }
        out.push(Vector3::new(
            parse_f64(i + 1, toks[0])?,
            parse_f64(i + 1, toks[1])?,
            parse_f64(i + 1, toks[2])?,
        ));
    }
    Ok(out)
}

pub fn write_points(points: &[Vector3<f64>]) -> String {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

// ---------------------------------------------------------------------------
// manifests

/// Reproducibility record written next to every output: the resolved command
/// with all defaults materialized, the seed, and content digests of inputs
/// and outputs. Timing is informational and excluded from the determinism
/// contract.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub args: Vec<(String, String)>,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<(String, String, String)>,
    pub outputs: Vec<(String, String, String)>,
    pub timing_ms: u128,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) {
        self.args.push((key.to_string(), value.to_string()));
    }

    pub fn input(&mut self, role: &str, path: &str, contents: &[u8]) {
        self.inputs
            .push((role.to_string(), path.to_string(), sha256_hex(contents)));
    }

    pub fn output(&mut self, role: &str, path: &str, contents: &[u8]) {
        self.outputs
            .push((role.to_string(), path.to_string(), sha256_hex(contents)));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("manifest 1\n");
        let _ = writeln!(out, "version {}", self.version);
        let _ = writeln!(out, "command {}", self.command);
        for (k, v) in &self.args {
            let _ = writeln!(out, "arg {} {}", k, v);
        }
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "threads {}", self.threads);
        for (role, path, digest) in &self.inputs {
            let _ = writeln!(out, "input {} {} sha256 {}", role, path, digest);
        }
        for (role, path, digest) in &self.outputs {
            let _ = writeln!(out, "output {} {} sha256 {}", role, path, digest);
        }
        let _ = writeln!(out, "timing_ms {}", self.timing_ms);
        out
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(data);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}
