use std::process::ExitCode;

fn main() -> ExitCode {
    feesim_cli::run()
}
