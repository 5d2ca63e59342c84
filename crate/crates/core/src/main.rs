use std::process::ExitCode;

fn main() -> ExitCode {
    aqmlab::cli::main_with_args(std::env::args_os())
}
