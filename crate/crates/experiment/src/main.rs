use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out_override = std::env::var("SGL_OUT").ok().filter(|s| !s.is_empty());
    ExitCode::from(sgl_experiment::cli::main_with(std::env::args_os(), out_override))
}
