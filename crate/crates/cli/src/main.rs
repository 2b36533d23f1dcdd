mod commands;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use run::CliError;

#[derive(Parser)]
#[command(name = "deco", version, about = "Depth colorization for RGB-D object recognition")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct GlobalArgs {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; relative paths live under $DECO_OUTPUT_ROOT when set.
    #[arg(long, short, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Progress on stderr; repeat for more.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Writes every `[synth.NAME]` dataset of the config to data/NAME.
    GenData,
    /// Trains the backbone from scratch on the RGB images of `data.rgb`.
    Pretrain,
    /// Writes the five mappings of each depth PNG, plus a side-by-side grid.
    Colorize(commands::ColorizeArgs),
    /// Phase 1: trains the colorizer on `data.reference` through the frozen trunk.
    TrainDeco(commands::BackboneArg),
    /// Phase 2: trains a new final layer on `data.testbed` for one mapping.
    Transfer(commands::MappingArgs),
    /// Trains all backbone layers on `data.testbed` with a fixed mapping.
    Finetune(commands::MappingArgs),
    /// Phase 1 + phase 2 over the `[ablation]` blocks x filters grid.
    Ablate(commands::BackboneArg),
    /// Late fusion of RGB and depth logits on `data.testbed`.
    Fuse(commands::MappingArgs),
    /// Test-split report for a trained backbone and a mapping.
    Evaluate(commands::EvaluateArgs),
    /// Per-class recall chart (SVG) and table from a report directory.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            return fail(&CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    let result = run::Context::new(&cli.global).and_then(|ctx| match &cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::Pretrain => commands::pretrain(&ctx),
        Command::Colorize(a) => commands::colorize(&ctx, a),
        Command::TrainDeco(a) => commands::train_deco(&ctx, a),
        Command::Transfer(a) => commands::transfer(&ctx, a),
        Command::Finetune(a) => commands::finetune(&ctx, a),
        Command::Ablate(a) => commands::ablate(&ctx, a),
        Command::Fuse(a) => commands::fuse(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    eprintln!("deco: error[{}]: {msg}", e.kind());
    ExitCode::from(e.code())
}
