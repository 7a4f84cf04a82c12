use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let (text, code) = limstruct_cli::run_args(std::env::args_os());
    let mut out = if code == limstruct_cli::EXIT_PARSE && !text.trim_start().starts_with('{') {
        Box::new(std::io::stderr()) as Box<dyn Write>
    } else {
        Box::new(std::io::stdout())
    };
    let _ = out.write_all(text.as_bytes());
    ExitCode::from(code as u8)
}
