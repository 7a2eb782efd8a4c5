//! Command-line interface: run orchestration, file I/O and plot-data export.
//!
//! Exit codes: 0 = success and all requested checks pass, 1 = checks failed,
//! 2 = input/usage error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use crate::complex::{extract_junctions, validate, SurfaceComplex, Topology};
use crate::cone::{validate_cone, ConeSpec};
use crate::continuation::continue_in_radius;
use crate::curvature::expander_residual;
use crate::ends::end_decay;
use crate::io::{
    read_conespec, read_meshnet, read_points, write_meshnet, write_points,
    write_report, RunManifest,
};
use crate::models;
use crate::solver::{minimize, SolveConfig};
use crate::templates::{instantiate, TemplateKind};
use crate::verify::{check_persistence, check_triple_angles, end_plane_of_arc, full_report, VerifyConfig};

#[derive(Parser)]
#[command(
    name = "expandernet",
    version,
    about = "Self-expanding multiphase surface networks: build, minimize and verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a cone spec and print its node angles.
    ValidateCone {
        spec: PathBuf,
    },
    /// Build an initial mesh from a template.
    Init {
        #[arg(long)]
        cone: PathBuf,
        #[arg(long)]
        template: String,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        edge: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = false)]
        allow_nonregular: bool,
    },
    /// Minimize the weighted area of a mesh spanning a cone trace.
    Minimize {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        cone: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long, default_value_t = 0)]
        remesh_every: usize,
        #[arg(long, default_value_t = false)]
        quiet: bool,
    },
    /// Solve over an increasing radius schedule with warm starts.
    Continue {
        #[arg(long)]
        cone: PathBuf,
        #[arg(long)]
        template: String,
        /// Comma-separated increasing radii, e.g. `2,4,8`.
        #[arg(long)]
        radii: String,
        #[arg(long)]
        edge: f64,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = false)]
        allow_nonregular: bool,
        #[arg(long, default_value_t = false)]
        quiet: bool,
    },
    /// Run the verification suite and write a report.
    Verify {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        cone: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Convert point lists between the euclid, ball and hyperboloid models.
    Map {
        #[arg(long, value_enum)]
        from: Model,
        #[arg(long, value_enum)]
        to: Model,
        points: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export plot data as CSV.
    Export {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum)]
        what: ExportKind,
        #[arg(long)]
        out: PathBuf,
        /// Required for `--what ends`.
        #[arg(long)]
        cone: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Euclid,
    Ball,
    Hyperboloid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Residual,
    Angles,
    Ends,
}

/// Run the CLI against an argument vector (argv[0] included).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are success, usage errors are input
            // errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            2
        }
    }
}

fn threads() -> usize {
    rayon::current_num_threads()
}

fn read_file(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn load_cone(path: &Path) -> Result<(ConeSpec, String), String> {
    let text = read_file(path)?;
    let spec = read_conespec(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((spec, text))
}

fn load_mesh(path: &Path) -> Result<(SurfaceComplex, String), String> {
    let text = read_file(path)?;
    let mesh = read_meshnet(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((mesh, text))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    out.with_file_name(name)
}

fn dispatch(command: Command) -> Result<i32, String> {
    match command {
        Command::ValidateCone { spec } => {
            let (cone, _) = load_cone(&spec)?;
            let report = validate_cone(&cone);
            for (node, angles) in &report.node_angles {
                println!(
                    "node {} angles {:.3} {:.3} {:.3}",
                    node + 1,
                    angles[0],
                    angles[1],
                    angles[2]
                );
            }
            for note in &report.notes {
                println!("note: {note}");
            }
            if report.is_ok() {
                println!("ok: {} regions traced", report.regions.len());
                Ok(0)
            } else {
                for violation in &report.violations {
                    println!("violation: {violation}");
                }
                Ok(1)
            }
        }

        Command::Init {
            cone,
            template,
            radius,
            edge,
            out,
            allow_nonregular,
        } => {
            let start = Instant::now();
            let kind = TemplateKind::from_name(&template).ok_or_else(|| {
                let names: Vec<&str> = TemplateKind::all().iter().map(|k| k.name()).collect();
                format!(
                    "unknown template `{template}`; available: {}",
                    names.join(", ")
                )
            })?;
            let (spec, cone_text) = load_cone(&cone)?;
            let mesh = instantiate(kind, &spec, radius, edge, allow_nonregular)
                .map_err(|e| e.to_string())?;
            let outcome = validate(&mesh);
            if !outcome.is_ok() {
                eprintln!(
                    "warning: template mesh fails validation with {} violations (non-regular cone)",
                    outcome.violations.len()
                );
            }
            let text = write_meshnet(&mesh);
            write_file(&out, &text)?;

            let mut manifest = RunManifest::new("init");
            manifest.arg("template", kind.name());
            manifest.arg("radius", radius);
            manifest.arg("edge", edge);
            manifest.arg("allow_nonregular", allow_nonregular);
            manifest.threads = threads();
            manifest.input("cone", &cone.display().to_string(), cone_text.as_bytes());
            manifest.output("mesh", &out.display().to_string(), text.as_bytes());
            manifest.timing_ms = start.elapsed().as_millis();
            write_file(&manifest_path(&out), &manifest.render())?;
            println!(
                "init: {} vertices, {} faces -> {}",
                mesh.vertex_count(),
                mesh.face_count(),
                out.display()
            );
            Ok(0)
        }

        Command::Minimize {
            mesh,
            cone,
            out,
            tol,
            max_iters,
            seed,
            perturb,
            remesh_every,
            quiet,
        } => {
            let start = Instant::now();
            let (complex, mesh_text) = load_mesh(&mesh)?;
            let (spec, cone_text) = load_cone(&cone)?;
            let config = SolveConfig {
                max_iters,
                grad_tol: tol,
                seed,
                perturb,
                remesh_every,
                verbose: !quiet,
                ..Default::default()
            };
            let state = minimize(&complex, &spec, &config).map_err(|e| e.to_string())?;
            let text = write_meshnet(&state.complex);
            write_file(&out, &text)?;

            let mut manifest = RunManifest::new("minimize");
            manifest.arg("tol", tol);
            manifest.arg("max_iters", max_iters);
            manifest.arg("perturb", perturb);
            manifest.arg("remesh_every", remesh_every);
            manifest.seed = seed;
            manifest.threads = threads();
            manifest.input("mesh", &mesh.display().to_string(), mesh_text.as_bytes());
            manifest.input("cone", &cone.display().to_string(), cone_text.as_bytes());
            manifest.output("mesh", &out.display().to_string(), text.as_bytes());
            manifest.timing_ms = start.elapsed().as_millis();
            write_file(&manifest_path(&out), &manifest.render())?;

            println!(
                "minimize: {:?} after {} iterations, gradrms {}, energy {} (logscale {})",
                state.termination, state.iterations, state.grad_rms, state.energy, state.log_scale
            );
            Ok(0)
        }

        Command::Continue {
            cone,
            template,
            radii,
            edge,
            outdir,
            tol,
            max_iters,
            seed,
            allow_nonregular,
            quiet,
        } => {
            let start = Instant::now();
            let kind = TemplateKind::from_name(&template).ok_or_else(|| {
                let names: Vec<&str> = TemplateKind::all().iter().map(|k| k.name()).collect();
                format!(
                    "unknown template `{template}`; available: {}",
                    names.join(", ")
                )
            })?;
            let schedule: Result<Vec<f64>, _> =
                radii.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let schedule = schedule.map_err(|_| format!("bad radius list `{radii}`"))?;
            let (spec, cone_text) = load_cone(&cone)?;
            let config = SolveConfig {
                max_iters,
                grad_tol: tol,
                seed,
                radius_schedule: schedule.clone(),
                verbose: !quiet,
                ..Default::default()
            };
            let states = continue_in_radius(&spec, kind, edge, &config, allow_nonregular)
                .map_err(|e| e.to_string())?;

            std::fs::create_dir_all(&outdir)
                .map_err(|e| format!("cannot create {}: {e}", outdir.display()))?;
            let mut manifest = RunManifest::new("continue");
            manifest.arg("template", kind.name());
            manifest.arg("radii", &radii);
            manifest.arg("edge", edge);
            manifest.arg("tol", tol);
            manifest.arg("max_iters", max_iters);
            manifest.arg("allow_nonregular", allow_nonregular);
            manifest.seed = seed;
            manifest.threads = threads();
            manifest.input("cone", &cone.display().to_string(), cone_text.as_bytes());

            let mut all_pass = true;
            for (i, state) in states.iter().enumerate() {
                let mesh_path = outdir.join(format!("mesh_{}.mesh", i + 1));
                let text = write_meshnet(&state.complex);
                write_file(&mesh_path, &text)?;
                manifest.output("mesh", &mesh_path.display().to_string(), text.as_bytes());

                let report = full_report(&state.complex, &spec, &VerifyConfig::default())
                    .map_err(|e| e.to_string())?;
                all_pass &= report.all_passed();
                let report_path = outdir.join(format!("report_{}.report", i + 1));
                let report_text = write_report(&report);
                write_file(&report_path, &report_text)?;
                manifest.output(
                    "report",
                    &report_path.display().to_string(),
                    report_text.as_bytes(),
                );
            }

            // Persistence record across the schedule.
            let complexes: Vec<&SurfaceComplex> = states.iter().map(|s| &s.complex).collect();
            let persistence = check_persistence(&complexes).map_err(|e| e.to_string())?;
            let mut ptext = String::from("report 1\n");
            let tol_persist = 0.05 * schedule[0];
            let _ = writeln!(
                ptext,
                "check persistence {}",
                if persistence.max_radius_variation <= tol_persist
                    && persistence.counts_stable()
                {
                    "pass"
                } else {
                    "fail"
                }
            );
            for (i, r) in persistence.chart_radii.iter().enumerate() {
                let _ = writeln!(ptext, "metric chart_radius_{i} {r}");
            }
            for (i, d) in persistence.core_hausdorff.iter().enumerate() {
                let _ = writeln!(ptext, "metric core_hausdorff_{i} {d}");
            }
            let _ = writeln!(ptext, "metric delta1_chart {}", persistence.delta1_chart);
            let _ = writeln!(
                ptext,
                "metric max_radius_variation {}",
                persistence.max_radius_variation
            );
            let ppath = outdir.join("persistence.report");
            write_file(&ppath, &ptext)?;
            manifest.output("persistence", &ppath.display().to_string(), ptext.as_bytes());

            manifest.timing_ms = start.elapsed().as_millis();
            write_file(&outdir.join("manifest"), &manifest.render())?;
            println!(
                "continue: {} radii solved; persistence chart radii {:?}",
                states.len(),
                persistence.chart_radii
            );
            Ok(if all_pass { 0 } else { 1 })
        }

        Command::Verify { mesh, cone, report } => {
            let start = Instant::now();
            let (complex, mesh_text) = load_mesh(&mesh)?;
            let (spec, cone_text) = load_cone(&cone)?;
            let result =
                full_report(&complex, &spec, &VerifyConfig::default()).map_err(|e| e.to_string())?;
            let text = write_report(&result);
            write_file(&report, &text)?;

            let mut manifest = RunManifest::new("verify");
            manifest.threads = threads();
            manifest.input("mesh", &mesh.display().to_string(), mesh_text.as_bytes());
            manifest.input("cone", &cone.display().to_string(), cone_text.as_bytes());
            manifest.output("report", &report.display().to_string(), text.as_bytes());
            manifest.timing_ms = start.elapsed().as_millis();
            write_file(&manifest_path(&report), &manifest.render())?;

            for (name, ok) in &result.checks {
                println!("check {} {}", name, if *ok { "pass" } else { "fail" });
            }
            Ok(if result.all_passed() { 0 } else { 1 })
        }

        Command::Map {
            from,
            to,
            points,
            out,
        } => {
            let text = read_file(&points)?;
            let input = read_points(&text).map_err(|e| e.to_string())?;
            let mut converted = Vec::with_capacity(input.len());
            for p in &input {
                converted.push(convert_point(*p, from, to)?);
            }
            let rendered = write_points(&converted);
            match out {
                Some(path) => write_file(&path, &rendered)?,
                None => print!("{rendered}"),
            }
            Ok(0)
        }

        Command::Export {
            mesh,
            what,
            out,
            cone,
        } => {
            let start = Instant::now();
            let (complex, mesh_text) = load_mesh(&mesh)?;
            let csv = match what {
                ExportKind::Residual => export_residual(&complex),
                ExportKind::Angles => export_angles(&complex)?,
                ExportKind::Ends => {
                    let cone = cone.ok_or("--what ends requires --cone")?;
                    let (spec, _) = load_cone(&cone)?;
                    export_ends(&complex, &spec)
                }
            };
            write_file(&out, &csv)?;
            let mut manifest = RunManifest::new("export");
            manifest.arg(
                "what",
                match what {
                    ExportKind::Residual => "residual",
                    ExportKind::Angles => "angles",
                    ExportKind::Ends => "ends",
                },
            );
            manifest.threads = threads();
            manifest.input("mesh", &mesh.display().to_string(), mesh_text.as_bytes());
            manifest.output("csv", &out.display().to_string(), csv.as_bytes());
            manifest.timing_ms = start.elapsed().as_millis();
            write_file(&manifest_path(&out), &manifest.render())?;
            Ok(0)
        }
    }
}

fn convert_point(p: Vector3<f64>, from: Model, to: Model) -> Result<Vector3<f64>, String> {
    // Normalize through the ball model.
    let ball = match from {
        Model::Euclid => models::euclid_to_ball(&p),
        Model::Ball => models::BallPoint::new(p).map_err(|e| e.to_string())?,
        Model::Hyperboloid => {
            // Spatial part given; the time coordinate is determined by the
            // hyperboloid constraint.
            let w = (1.0 + p.norm_squared()).sqrt();
            let x = nalgebra::Vector4::new(p.x, p.y, p.z, w);
            models::to_ball(&models::HyperboloidPoint::new(x).map_err(|e| e.to_string())?)
        }
    };
    match to {
        Model::Euclid => models::ball_to_euclid(&ball).map_err(|e| e.to_string()),
        Model::Ball => Ok(ball.u),
        Model::Hyperboloid => {
            let h = models::to_hyperboloid(&ball).map_err(|e| e.to_string())?;
            Ok(Vector3::new(h.x.x, h.x.y, h.x.z))
        }
    }
}

fn export_residual(complex: &SurfaceComplex) -> String {
    let topo = Topology::build(complex);
    let field = expander_residual(complex, &topo, 2);
    let mut out = String::from("x,y,z,residual\n");
    for (v, r) in field.per_vertex.iter().enumerate() {
        if let Some(r) = r {
            let p = complex.vertices[v];
            let _ = writeln!(out, "{},{},{},{}", p.x, p.y, p.z, r);
        }
    }
    out
}

fn export_angles(complex: &SurfaceComplex) -> Result<String, String> {
    let topo = Topology::build(complex);
    let junctions = extract_junctions(complex, &topo).map_err(|e| e.to_string())?;
    let stats = check_triple_angles(complex, &topo, &junctions);
    let mut out = String::from("curve,arclength,angle_deg\n");
    for curve in &stats.per_curve {
        for sample in &curve.samples {
            for angle in sample.angles_deg {
                let _ = writeln!(out, "{},{},{}", curve.curve, sample.arclength, angle);
            }
        }
    }
    Ok(out)
}

fn export_ends(complex: &SurfaceComplex, spec: &ConeSpec) -> String {
    let radius = complex.truncation_radius;
    let h_eff = complex.median_edge_length();
    let (r0, r1) = (0.55 * radius, 0.9 * radius);
    let mut out = String::from("arc,r,sup_u\n");
    for arc in 0..spec.arcs.len() {
        let plane = end_plane_of_arc(spec, arc, 0.2);
        if let Ok(sample) = crate::ends::fit_planar_end(
            complex,
            &plane,
            r0,
            r1,
            ((r1 - r0) / 10.0).max(h_eff),
            0.5 * r0,
        ) {
            for (r, sup) in end_decay(&sample, 4) {
                let _ = writeln!(out, "{},{},{}", arc, r, sup);
            }
        }
    }
    out
}
