use std::process::ExitCode;

fn main() -> ExitCode {
    featcon::cli::main_with_args(std::env::args_os())
}
