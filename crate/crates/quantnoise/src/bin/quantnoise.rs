use std::process::ExitCode;

fn main() -> ExitCode {
    match quantnoise::cli::run_from(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("quantnoise: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
