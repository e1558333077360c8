use std::process::ExitCode;

fn main() -> ExitCode {
    ifo_lab::cli::main_with_args(std::env::args_os())
}
