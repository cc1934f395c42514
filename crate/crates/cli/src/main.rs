use clap::Parser;
use lidar_energy_cli::{exit, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(m) => {
            eprintln!(
                "{} finished, outputs in {}",
                m.command,
                m.output_dir.display()
            );
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit::code_for(&e));
        }
    }
}
