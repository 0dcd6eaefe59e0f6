use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = complab::Cli::parse();
    match complab::run(&cli) {
        Ok(dir) => println!("{}", dir.display()),
        Err(e) => {
            eprintln!("complab {}: {e}", cli.command.name());
            std::process::exit(e.exit_code());
        }
    }
}
