use std::process::ExitCode;

fn main() -> ExitCode {
    mvpa_cli::app::main_with_args(std::env::args_os())
}
