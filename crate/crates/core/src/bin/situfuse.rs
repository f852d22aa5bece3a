use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(situfuse::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr()))
}
