use std::process::ExitCode;

fn main() -> ExitCode {
    // EXPANDERNET_THREADS caps the worker count; results are identical for
    // any value because all reductions run over fixed-shape trees.
    if let Ok(value) = std::env::var("EXPANDERNET_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let code = expandernet::cli::run(std::env::args());
    ExitCode::from(code as u8)
}
