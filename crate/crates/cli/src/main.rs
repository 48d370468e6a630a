use clap::Parser;

use janus_cli::commands::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("janus: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
