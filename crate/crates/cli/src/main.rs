use clap::Parser;
use pg_limits_cli::{run, Cli, CliError};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            let err = CliError::Validation(first.to_string());
            eprintln!("{}", err.to_json_line());
            std::process::exit(err.exit_code());
        }
    };
    let mut stdout = std::io::stdout().lock();
    if let Err(err) = run(cli, &mut stdout) {
        eprintln!("{}", err.to_json_line());
        std::process::exit(err.exit_code());
    }
}
