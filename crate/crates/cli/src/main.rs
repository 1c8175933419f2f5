use clap::Parser;
use gazereview_cli::{error_line, exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Err(e) = run(cli, &mut out) {
        eprintln!("{}", error_line(&e));
        std::process::exit(exit_code(&e));
    }
}
