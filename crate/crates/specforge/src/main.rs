use clap::Parser;
use specforge::cli::{run, Cli};
use specforge::error::exit;
use specforge::pipeline::Host;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    if let Err(e) = run(cli, &Host::current()) {
        eprintln!("specforge: {e}");
        std::process::exit(e.exit_code());
    }
}
