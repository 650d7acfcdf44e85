//! `halfwave`: solvers and verification campaigns for normalized standing
//! waves of the energy-critical half-wave equation.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::CommonArgs;

#[derive(Debug, Parser)]
#[command(name = "halfwave", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form constants for (N, q, mu, a) with the numerical ||Q||_2
    Constants(CommonArgs),
    /// Limit soliton Q of sqrt(-Delta) Q + Q = |Q|^{q-2} Q
    QProfile(CommonArgs),
    /// Minimize the fractional Sobolev quotient on a disk
    Sobolev(CommonArgs),
    /// Local minimizer u_a of the energy on the trust region
    Ground(CommonArgs),
    /// Mountain-pass state v_a on the t- branch
    Excited(CommonArgs),
    /// Norms of the cutoff bubble and their log-log slopes
    BubbleScan(CommonArgs),
    /// Energy maximum along the explicit mountain-pass path
    MpBound(CommonArgs),
    /// Ground states along a = f a_* with scaled observables
    SweepA(CommonArgs),
    /// Ground and excited states along decreasing mu
    SweepMu(CommonArgs),
    /// Continuity, subadditivity and scaling of m(a)
    MStructure(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Constants(a) => commands::constants(a),
        Command::QProfile(a) => commands::q_profile(a),
        Command::Sobolev(a) => commands::sobolev(a),
        Command::Ground(a) => commands::ground(a),
        Command::Excited(a) => commands::excited(a),
        Command::BubbleScan(a) => commands::bubble_scan(a),
        Command::MpBound(a) => commands::mp_bound(a),
        Command::SweepA(a) => commands::sweep_a(a),
        Command::SweepMu(a) => commands::sweep_mu(a),
        Command::MStructure(a) => commands::m_structure(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
