//! `aafib` command line: load or generate POMDP problems, solve them with
//! FIB / AA-FIB / the simulation-based variant / QMDP, evaluate policies,
//! and sweep solver parameters into summary tables.

mod args;
mod bench;
mod commands;
mod config;
mod policy_file;
mod problem;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    let result = match cli.command {
        args::Command::Solve(a) => commands::solve(a),
        args::Command::Eval(a) => commands::eval(a),
        args::Command::Bench(a) => bench::bench(a),
        args::Command::Gen(a) => commands::generate(a),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
