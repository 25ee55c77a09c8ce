use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = frg_flow_cli::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let code = frg_flow_cli::dispatch(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
