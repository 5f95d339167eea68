use std::process::ExitCode;

fn main() -> ExitCode {
    match btot_cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.msg.is_empty() {
                eprintln!("{}", e.msg);
            }
            ExitCode::from(e.code)
        }
    }
}
