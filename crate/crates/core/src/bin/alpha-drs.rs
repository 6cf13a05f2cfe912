use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(alpha_drs::cli::run(std::env::args_os()) as u8)
}
