use std::ops::Range;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hrnv_core::freq::Band;
use hrnv_core::io::{InputDescriptor, InputKind, RriUnit};
use hrnv_core::{
    AnalysisSettings, DetectorConfig, DfaConfig, EntropyConfig, FreqConfig, PlanMode, PlanSpec, PreprocessConfig,
    PsdMethod, RepairAction, SnapMode,
};

#[derive(Debug, Parser)]
#[command(name = "hrnv", version, about = "Heart rate n-variability analysis")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyse one input file.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        source: InputArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Analyse many files (or every file in the given directories) into one table.
    Batch {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        source: InputArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Accept ECG inputs and analyse them with automatic detection only.
        #[arg(long)]
        unattended_ecg: bool,
    },
    /// Detect R peaks in an ECG and write a peaks file.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        source: InputArgs,
        #[command(flatten)]
        detection: DetectionArgs,
        /// Output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two report tables (relative error per metric) or two peaks
    /// files (l1 distance). The second file is the reference.
    Compare {
        first: PathBuf,
        reference: PathBuf,
        /// Relative error above which a metric counts as disagreeing.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the review server, optionally preloading files.
    Serve {
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        source: InputArgs,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Ecg,
    Rri,
    Peaks,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    S,
    Ms,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input type.
    #[arg(long = "type", value_enum, default_value = "rri")]
    pub kind: KindArg,
    /// Sampling rate in Hz (required for ECG).
    #[arg(long)]
    pub fs: Option<f64>,
    /// Unit of RRI values.
    #[arg(long, value_enum, default_value = "s")]
    pub unit: UnitArg,
    /// File-name prefix stripped to form the record ID.
    #[arg(long, default_value = "")]
    pub prefix: String,
    /// File-name postfix stripped to form the record ID.
    #[arg(long, default_value = "")]
    pub postfix: String,
}

impl InputArgs {
    pub fn kind(&self) -> InputKind {
        match self.kind {
            KindArg::Ecg => InputKind::Ecg,
            KindArg::Rri => InputKind::Rri,
            KindArg::Peaks => InputKind::Peaks,
        }
    }

    pub fn descriptor(&self, path: PathBuf) -> InputDescriptor {
        InputDescriptor {
            fs: self.fs,
            rri_unit: match self.unit {
                UnitArg::S => RriUnit::Seconds,
                UnitArg::Ms => RriUnit::Milliseconds,
            },
            prefix: self.prefix.clone(),
            postfix: self.postfix.clone(),
            ..InputDescriptor::new(path, self.kind())
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SnapArg {
    None,
    LocalMax,
    LocalMin,
    Auto,
}

#[derive(Debug, Clone, Args)]
pub struct DetectionArgs {
    /// ECG sample range START:END to analyse.
    #[arg(long, value_parser = parse_range)]
    pub segment: Option<Range<usize>>,
    /// Remove baseline drift before detection.
    #[arg(long)]
    pub baseline_remove: bool,
    /// Move detected peaks to the local extremum.
    #[arg(long, value_enum, default_value = "none")]
    pub snap: SnapArg,
    /// Half-width of the snap search window in ms.
    #[arg(long, default_value_t = 50.0)]
    pub snap_window_ms: f64,
}

impl DetectionArgs {
    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            snap_mode: match self.snap {
                SnapArg::None => SnapMode::None,
                SnapArg::LocalMax => SnapMode::LocalMax,
                SnapArg::LocalMin => SnapMode::LocalMin,
                SnapArg::Auto => SnapMode::Auto,
            },
            snap_window_ms: self.snap_window_ms,
            ..DetectorConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActionArg {
    Remove,
    Spline,
    Pchip,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Single,
    MEqualsN,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PsdArg {
    Lomb,
    Welch,
    Fft,
    Burg,
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    #[command(flatten)]
    pub detection: DetectionArgs,
    /// Relative deviation from the local median that marks a non-sinus interval.
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    /// What to do with non-sinus intervals.
    #[arg(long, value_enum, default_value = "remove")]
    pub action: ActionArg,
    /// Analysis plan: one (n, m), m = n, or every 1 ≤ m ≤ n' ≤ n.
    #[arg(long, value_enum, default_value = "single")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Stride; defaults to n in single mode.
    #[arg(long)]
    pub m: Option<usize>,
    /// Power spectral density estimator.
    #[arg(long, value_enum, default_value = "lomb")]
    pub psd: PsdArg,
    /// VLF band LO:HI in Hz.
    #[arg(long, value_parser = parse_band, default_value = "0:0.04")]
    pub vlf: Band,
    /// LF band LO:HI in Hz.
    #[arg(long, value_parser = parse_band, default_value = "0.04:0.15")]
    pub lf: Band,
    /// HF band LO:HI in Hz.
    #[arg(long, value_parser = parse_band, default_value = "0.15:0.4")]
    pub hf: Band,
    /// Entropy embedding dimension.
    #[arg(long, default_value_t = 2)]
    pub entropy_m: usize,
    /// Entropy tolerance as a fraction of SDRR.
    #[arg(long, default_value_t = 0.15)]
    pub entropy_r: f64,
}

impl AnalysisArgs {
    pub fn settings(&self) -> AnalysisSettings {
        AnalysisSettings {
            segment: self.detection.segment.clone(),
            baseline_remove: self.detection.baseline_remove,
            detector: self.detection.detector(),
            preprocess: PreprocessConfig {
                threshold: self.threshold,
                action: match self.action {
                    ActionArg::Remove => RepairAction::Remove,
                    ActionArg::Spline => RepairAction::Spline,
                    ActionArg::Pchip => RepairAction::Pchip,
                    ActionArg::Linear => RepairAction::Linear,
                },
            },
            plan: PlanSpec {
                mode: match self.mode {
                    ModeArg::Single => PlanMode::Single,
                    ModeArg::MEqualsN => PlanMode::MEqualsN,
                    ModeArg::All => PlanMode::All,
                },
                n: self.n,
                m: self.m,
            },
            freq: FreqConfig {
                method: match self.psd {
                    PsdArg::Lomb => PsdMethod::Lomb,
                    PsdArg::Welch => PsdMethod::Welch,
                    PsdArg::Fft => PsdMethod::Fft,
                    PsdArg::Burg => PsdMethod::Burg,
                },
                vlf: self.vlf,
                lf: self.lf,
                hf: self.hf,
                ..FreqConfig::default()
            },
            entropy: EntropyConfig {
                embedding: self.entropy_m,
                tolerance_factor: self.entropy_r,
            },
            dfa: DfaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Report CSV path (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 1 if any record fails.
    #[arg(long)]
    pub strict: bool,
}

fn split_pair(s: &str) -> Result<(&str, &str), String> {
    s.split_once(':').ok_or_else(|| format!("expected A:B, got '{s}'"))
}

pub fn parse_range(s: &str) -> Result<Range<usize>, String> {
    let (a, b) = split_pair(s)?;
    let a: usize = a.trim().parse().map_err(|_| format!("'{a}' is not a sample index"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("'{b}' is not a sample index"))?;
    if a >= b {
        return Err(format!("segment start {a} must be below end {b}"));
    }
    Ok(a..b)
}

pub fn parse_band(s: &str) -> Result<Band, String> {
    let (a, b) = split_pair(s)?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("'{a}' is not a frequency"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("'{b}' is not a frequency"))?;
    Ok(Band { lo, hi })
}
