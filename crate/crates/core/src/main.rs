use std::process::ExitCode;

fn main() -> ExitCode {
    openlogo::cli::main_with_args(std::env::args_os())
}
