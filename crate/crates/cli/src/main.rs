mod args;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use hrnv_core::io::{format_peaks, format_table, read_peaks, read_report, read_signal, InputKind, ReportRow, SignalData, TableRow};
use hrnv_core::pipeline::{analyze_batch, compare_annotations, compare_rows, prepare_ecg, MetricComparison};
use hrnv_core::qrs::detect_r_peaks;
use hrnv_core::{AnalysisRequest, AnalysisSettings, BatchOptions, InputSource};

use args::{AnalysisArgs, Cli, Command, InputArgs, OutputArgs};

/// Exit status for record-level failures in strict mode and hard errors.
const EXIT_FAILURE: u8 = 1;

fn usage_error(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, message).exit()
}

fn check_input(source: &InputArgs) {
    if source.kind() == InputKind::Ecg && source.fs.is_none() {
        usage_error(ErrorKind::MissingRequiredArgument, "--fs is required when --type ecg");
    }
}

fn check_settings(analysis: &AnalysisArgs, source: &InputArgs) -> AnalysisSettings {
    let settings = analysis.settings();
    if let Err(e) = settings.validate() {
        usage_error(ErrorKind::ValueValidation, e);
    }
    if let (Some(fs), false) = (source.fs, source.kind() == InputKind::Ecg) {
        log::warn!("--fs {fs} is ignored for {:?} inputs", source.kind());
    }
    settings
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

/// Expands directories into their regular, non-hidden files in name order.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && !f.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn run_table(
    inputs: Vec<PathBuf>,
    source: &InputArgs,
    settings: AnalysisSettings,
    output: &OutputArgs,
    opts: BatchOptions,
) -> Result<ExitCode> {
    let requests: Vec<AnalysisRequest> = inputs
        .into_iter()
        .map(|p| AnalysisRequest::new(InputSource::File(source.descriptor(p)), settings.clone()))
        .collect();
    let rows = match analyze_batch(&requests, opts) {
        Ok(rows) => rows,
        Err(e) => usage_error(ErrorKind::ArgumentConflict, e),
    };
    let failures = rows.iter().filter(|r| matches!(r, TableRow::Error { .. })).count();
    for row in &rows {
        if let TableRow::Error { .. } = row {
            eprintln!("error: {row}");
        }
    }
    write_output(output.out.as_deref(), &format_table(&rows)?)?;
    log::info!("{} rows, {failures} failed records", rows.len());
    Ok(if output.strict && failures > 0 {
        ExitCode::from(EXIT_FAILURE)
    } else {
        ExitCode::SUCCESS
    })
}

fn run_detect(input: PathBuf, source: &InputArgs, detection: &args::DetectionArgs, out: Option<&Path>) -> Result<ExitCode> {
    if source.kind() != InputKind::Ecg {
        usage_error(ErrorKind::InvalidValue, "detect needs --type ecg");
    }
    check_input(source);
    let SignalData::Ecg(record) = read_signal(&source.descriptor(input))? else {
        bail!("input is not an ECG");
    };
    let settings = AnalysisSettings {
        segment: detection.segment.clone(),
        baseline_remove: detection.baseline_remove,
        detector: detection.detector(),
        ..AnalysisSettings::default()
    };
    let prepared = prepare_ecg(&record, &settings)?;
    let peaks = detect_r_peaks(&prepared, &settings.detector)?;
    log::info!("{}: {} peaks", peaks.record_id, peaks.len());
    write_output(out, &format_peaks(&peaks))?;
    Ok(ExitCode::SUCCESS)
}

fn looks_like_peaks(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.trim_start().starts_with('#'))
}

fn row_key(r: &ReportRow) -> (String, Option<usize>, Option<usize>) {
    (r.record_id.clone(), r.n, r.m)
}

fn run_compare(first: &Path, reference: &Path, tolerance: f64, out: Option<&Path>) -> Result<ExitCode> {
    if looks_like_peaks(first)? && looks_like_peaks(reference)? {
        let a = read_peaks(first)?;
        let b = read_peaks(reference)?;
        let d = compare_annotations(&a, &b)?;
        write_output(out, &format!("record_id,peaks,d_l1\n{},{},{d}\n", a.record_id, a.len()))?;
        return Ok(ExitCode::SUCCESS);
    }
    let h = read_report(first)?;
    let p = read_report(reference)?;
    let mut text = String::from("record_id,n,m,metric,status,epsilon\n");
    let mut disagreements = 0;
    for row in h.iter().filter(|r| r.error.is_none()) {
        let Some(other) = p.iter().find(|o| row_key(o) == row_key(row)) else {
            eprintln!("warning: no reference row for {} (n={:?}, m={:?})", row.record_id, row.n, row.m);
            continue;
        };
        for (metric, cmp) in compare_rows(row, other)? {
            let (status, eps) = match cmp {
                MetricComparison::RelativeError { value } => {
                    (if value <= tolerance { "ok" } else { "differs" }, format!("{value:e}"))
                }
                MetricComparison::BothNotComputable => ("both_na", String::new()),
                MetricComparison::StatusMismatch { .. } => ("status_mismatch", String::new()),
            };
            disagreements += !cmp.agrees(tolerance) as usize;
            let n = row.n.unwrap_or_default();
            let m = row.m.unwrap_or_default();
            text.push_str(&format!("{},{n},{m},{metric},{status},{eps}\n", row.record_id));
        }
    }
    write_output(out, &text)?;
    eprintln!("{disagreements} metrics disagree at tolerance {tolerance:e}");
    Ok(ExitCode::SUCCESS)
}

fn run_serve(inputs: Vec<PathBuf>, source: &InputArgs, host: &str, port: u16) -> Result<ExitCode> {
    if !inputs.is_empty() {
        check_input(source);
    }
    let addr = format!("{host}:{port}")
        .parse()
        .unwrap_or_else(|_| usage_error(ErrorKind::InvalidValue, format!("'{host}:{port}' is not a socket address")));
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(async {
        let state = hrnv_server::AppState::new();
        for p in expand_inputs(&inputs)? {
            let data = read_signal(&source.descriptor(p.clone())).with_context(|| format!("loading {}", p.display()))?;
            let id = state.insert(data).await;
            log::info!("loaded {id}");
        }
        hrnv_server::serve(addr, state).await.context("serving")
    })?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze {
            input,
            source,
            analysis,
            output,
        } => {
            check_input(&source);
            let settings = check_settings(&analysis, &source);
            let opts = BatchOptions {
                unattended_ecg: true,
                jobs: 1,
            };
            run_table(vec![input], &source, settings, &output, opts)
        }
        Command::Batch {
            inputs,
            source,
            analysis,
            output,
            jobs,
            unattended_ecg,
        } => {
            check_input(&source);
            let settings = check_settings(&analysis, &source);
            let files = expand_inputs(&inputs)?;
            run_table(files, &source, settings, &output, BatchOptions { unattended_ecg, jobs })
        }
        Command::Detect {
            input,
            source,
            detection,
            out,
        } => run_detect(input, &source, &detection, out.as_deref()),
        Command::Compare {
            first,
            reference,
            tolerance,
            out,
        } => run_compare(&first, &reference, tolerance, out.as_deref()),
        Command::Serve {
            inputs,
            source,
            host,
            port,
        } => run_serve(inputs, &source, &host, port),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
