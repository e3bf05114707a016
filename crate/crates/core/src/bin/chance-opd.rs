use std::process::ExitCode;

fn main() -> ExitCode {
    chance_opd::cli::main_entry()
}
