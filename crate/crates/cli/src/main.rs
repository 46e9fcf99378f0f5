use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = cavimag_cli::Cli::parse();
    match cavimag_cli::run(&cli) {
        Ok(outcome) => {
            for path in &outcome.written {
                println!("{}", path.display());
            }
            if !outcome.converged {
                eprintln!("cavimag: fit did not converge; results were written with converged = false");
            }
            std::process::ExitCode::from(outcome.exit_code() as u8)
        }
        Err(failure) => {
            eprintln!("cavimag: {failure}");
            std::process::ExitCode::from(failure.code as u8)
        }
    }
}
