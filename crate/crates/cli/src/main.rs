use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let run = chargenet_cli::execute(std::env::args_os());
    // Reports are plain text; nothing is colored, so NO_COLOR needs no handling.
    print!("{}", run.stdout);
    eprint!("{}", run.stderr);
    let _ = std::io::stdout().flush();
    ExitCode::from(run.exit_code)
}
