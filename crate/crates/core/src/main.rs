use std::process::ExitCode;

fn main() -> ExitCode {
    if let Some(n) = std::env::var("INTERP_FORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let code = interp_forge::cli::run(std::env::args_os());
    ExitCode::from(code as u8)
}
