//! `seq2lpc` command-line tool.
//!
//! Every command writes one JSON object per line on standard output and a
//! short human summary on standard error. Exit codes: 0 success, 1 usage
//! error, 2 data error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seq2lpc::attention::PrevAlignment;
use seq2lpc::bench::BenchStage;

#[derive(Debug, Parser)]
#[command(name = "seq2lpc", version, about = "LPCNet feature extraction and a controllable seq2seq acoustic model")]
pub struct Cli {
    /// Worker threads for frame-parallel work.
    #[arg(long, global = true, env = "SEQ2LPC_THREADS", default_value_t = 1,
          value_parser = clap::value_parser!(u16).range(1..=64))]
    pub threads: u16,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract LPCNet features (and optionally mel frames) from a WAV file.
    Extract(ExtractArgs),
    /// Estimate per-frame LP filters from an LPCF or MELF file.
    Lpc(LpcArgs),
    /// Train the toy-profile model on the synthetic corpus.
    TrainToy(TrainArgs),
    /// Synthesize acoustic features from a symbol sequence.
    Synth(SynthArgs),
    /// Measure the real-time factor of a pipeline stage.
    BenchRtf(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Also write 80-channel log mel frames here.
    #[arg(long)]
    pub mel: Option<PathBuf>,
    /// Store the quantizer level instead of the log-pitch value.
    #[arg(long)]
    pub pitch_index: bool,
}

#[derive(Debug, Args)]
pub struct LpcArgs {
    /// LPCF or MELF file; the kind is read from its magic.
    pub input: PathBuf,
    pub output: PathBuf,
    #[arg(long, default_value_t = seq2lpc::lp::DEFAULT_ORDER)]
    pub order: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Training configuration (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seed for parameter initialization and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub corpus_seed: u64,
    #[arg(long, value_parser = parse_prev)]
    pub prev_alignment: Option<PrevAlignment>,
    /// Print progress every N steps (0 disables).
    #[arg(long, default_value_t = 100)]
    pub progress: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Symbol table, one symbol per line.
    #[arg(long)]
    pub symbols: PathBuf,
    /// Transcript file of space-separated symbols.
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    pub input: Option<PathBuf>,
    /// Inline transcript.
    #[arg(long)]
    pub text: Option<String>,
    /// Prosody offsets `a,b` (log-duration, log-pitch-span).
    #[arg(long, value_parser = parse_pair, default_value = "0,0", allow_hyphen_values = true)]
    pub prosody: (f64, f64),
    /// Output LPCF file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mel: Option<PathBuf>,
    /// Write the T x N alignment grid as text.
    #[arg(long)]
    pub dump_alignment: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub max_frames: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_parser = parse_stage, default_value = "extract")]
    pub stage: BenchStage,
    /// WAV input for the extract stage.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Trained weights for the model stages.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Symbol table for `--text`.
    #[arg(long, requires = "text")]
    pub symbols: Option<PathBuf>,
    /// Transcript for the model stages; defaults to every non-silent symbol.
    #[arg(long, requires = "symbols")]
    pub text: Option<String>,
    #[arg(long, default_value_t = seq2lpc::bench::DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_frames: usize,
}

fn parse_prev(s: &str) -> Result<PrevAlignment, String> {
    s.parse().map_err(|e: seq2lpc::Error| e.to_string())
}

fn parse_stage(s: &str) -> Result<BenchStage, String> {
    s.parse().map_err(|e: seq2lpc::Error| e.to_string())
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("`{v}` is not a finite number"))
    };
    Ok((num(a)?, num(b)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
