use std::process::ExitCode;

use clap::Parser;

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("RF4D_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("RF4D_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("RF4D_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = rf4d_cli::Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match rf4d_cli::run(cli) {
        Ok(m) => {
            println!("{}", m.out.join(rf4d_cli::MANIFEST_FILE).display());
            if !m.summary.is_null() {
                println!("{}", m.summary);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(rf4d_cli::exit_code(&e))
        }
    }
}
