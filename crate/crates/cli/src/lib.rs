//! `retarget`: data generation, training, lookup retargeting, evaluation
//! and the 2-D synthetic benchmark.

mod commands;
mod io;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "retarget", version, about = "Feasible motion retargeting through a shared latent space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample paired tuples and unpaired robot and skeleton data.
    GenData(commands::GenDataArgs),
    /// Script smooth motions: training "mocap" pairs and held-out sequences.
    GenMotions(commands::GenMotionsArgs),
    /// Train the shared latent space.
    Train(commands::TrainArgs),
    /// Encode feasible configurations into a lookup database.
    BuildDb(commands::BuildDbArgs),
    /// Retarget skeleton sequences by nearest-neighbour lookup.
    Retarget(commands::RetargetArgs),
    /// Compare retargeted trajectories with reference trajectories.
    Eval(commands::EvalArgs),
    /// Run the 2-D synthetic comparison with and without NT-Xent.
    Synth(commands::SynthArgs),
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args` (program name first), runs the command and reports
/// failures on stderr as one JSON object.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::GenMotions(a) => commands::gen_motions(a),
        Command::Train(a) => commands::train(a),
        Command::BuildDb(a) => commands::build_db(a),
        Command::Retarget(a) => commands::retarget(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<retarget_core::Error>())
                .map_or("error", |c| c.kind());
            eprintln!("{}", error_json(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
