use std::process::ExitCode;

fn main() -> ExitCode {
    cavityband::cli::main_entry()
}
