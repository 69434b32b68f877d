use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let code = std::panic::catch_unwind(|| hierpde::cli::run(&argv))
        .unwrap_or(hierpde::cli::EXIT_INTERNAL);
    ExitCode::from(code as u8)
}
