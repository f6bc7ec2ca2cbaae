use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use attend_core::analysis::{self, analyze, write_analysis};
use attend_core::config::RunConfig;
use attend_core::io::{
    self, parse_dataset, read_attendance, read_attendees, read_grades, read_locations, read_messages, read_truth,
    write_accuracy, write_attendance, write_dataset, write_pipeline_bins, write_text, write_truth, ParseOptions,
};
use attend_core::manifest::{digest_files, read_manifest, write_manifest, RunManifest};
use attend_core::pipeline::{evaluate_accuracy, run_pipeline};
use attend_core::score::{score_against_truth, PipelineView, RecoveryMetrics};
use attend_core::sim::{generate, GroundTruthLog};

const REJECTED: &str = "rejected.csv";
const VERIFY_REPORT: &str = "verify_report.json";

#[derive(Parser)]
#[command(name = "attend", version, about = "Class location and attendance from proximity and location records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the simulator (overrides the config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Attendance radius in meters
    #[arg(long = "radius-m")]
    radius_m: Option<f64>,
    /// Time bin width in seconds
    #[arg(long = "bin-width-s")]
    bin_width_s: Option<i64>,
    /// Fail on the first invalid input row instead of skipping it
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: PathBuf,
    },
    /// Estimate class locations and attendance from a dataset
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Dataset directory
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Attendance, grade and peer analyses
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (grades and messages)
        #[arg(long)]
        input: PathBuf,
        /// Pipeline output directory
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score pipeline outputs against simulator ground truth
    Verify {
        #[command(flatten)]
        common: Common,
        /// Simulated dataset directory (with truth files)
        #[arg(long)]
        input: PathBuf,
        /// Pipeline output directory
        #[arg(long)]
        pipeline: PathBuf,
        /// Where to write the report; defaults to the pipeline directory's sibling `verify`
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// simulate, pipeline, analyze and verify into subdirectories of --output
    All {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Verification(Vec<String>),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn load_config(common: &Common) -> Outcome<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| usage(anyhow!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    if let Some(r) = common.radius_m {
        config.pipeline.radius_m = r;
    }
    if let Some(w) = common.bin_width_s {
        config.pipeline.bin_width_s = w;
        config.sim.bin_width_s = w;
    }
    Ok(config)
}

fn parse_options(config: &RunConfig, strict: bool) -> ParseOptions {
    ParseOptions {
        strict,
        weeks: config.sim.weeks,
        window: None,
    }
}

fn simulate(config: &RunConfig, output: &Path) -> Outcome<String> {
    let sim_config = config.sim_config().map_err(usage)?;
    let sim = generate(&sim_config).map_err(|e| usage(anyhow!(e)))?;
    write_dataset(output, &sim.dataset).context("writing dataset")?;
    write_truth(output, &sim.truth.tables).context("writing truth")?;

    let mut manifest = RunManifest::new("simulate", json!({ "sim": sim_config }));
    manifest.seed = Some(sim_config.seed);
    manifest.run_id = Some(sim.truth.run_id.clone());
    let mut outputs: Vec<&str> = io::DATASET_FILES.to_vec();
    outputs.extend([io::TRUTH, io::TRUE_LOCATIONS]);
    manifest.outputs = digest_files(output, &outputs, "").context("hashing outputs")?;
    write_manifest(output, &manifest).context("writing manifest")?;
    eprintln!(
        "simulated {} fixes, {} scans, {} courses into {} (run {})",
        sim.dataset.fixes.len(),
        sim.dataset.scans.len(),
        sim.dataset.rosters.len(),
        output.display(),
        sim.truth.run_id
    );
    Ok(sim.truth.run_id)
}

fn upstream_run_id(dir: &Path, field: fn(&RunManifest) -> Option<String>) -> Outcome<Option<String>> {
    Ok(read_manifest(dir).context("reading upstream manifest")?.and_then(|m| field(&m)))
}

fn pipeline(config: &RunConfig, strict: bool, input: &Path, output: &Path) -> Outcome {
    let options = parse_options(config, strict);
    let (dataset, report) =
        parse_dataset(input, &options).with_context(|| format!("parsing dataset in {}", input.display()))?;
    let out = run_pipeline(&dataset, &config.pipeline).context("running pipeline")?;

    write_attendance(output, &out.matrix).context("writing attendance")?;
    write_pipeline_bins(output, &out).context("writing locations")?;
    let accuracy = evaluate_accuracy(&out.estimates).ok();
    write_accuracy(output, accuracy.as_ref()).context("writing accuracy")?;
    let mut rejected = String::from("file,line,message\n");
    for d in &report.rejected {
        let message = d.message.replace('"', "'");
        rejected.push_str(&format!("{},{},\"{}\"\n", d.file, d.line, message));
    }
    write_text(output, REJECTED, &rejected).context("writing rejection report")?;

    let mut manifest = RunManifest::new(
        "pipeline",
        json!({ "pipeline": config.pipeline, "strict": strict, "weeks": options.weeks }),
    );
    manifest.source_run_id = upstream_run_id(input, |m| m.run_id.clone())?;
    manifest.inputs = digest_files(input, &io::DATASET_FILES, "input/").context("hashing inputs")?;
    manifest.outputs = digest_files(
        output,
        &[io::ATTENDANCE, io::LOCATIONS, io::ATTENDEES, io::ACCURACY, REJECTED],
        "",
    )
    .context("hashing outputs")?;
    write_manifest(output, &manifest).context("writing manifest")?;
    eprintln!(
        "placed {}/{} bins, {} attendance rows, {} rows rejected",
        out.accepted().count(),
        out.estimates.len(),
        out.matrix.len(),
        report.rejected.len()
    );
    Ok(())
}

/// Bins per block the pipeline ran with, preferring its manifest.
fn bins_per_block(config: &RunConfig, pipeline_dir: &Path) -> Outcome<u32> {
    let from_manifest = read_manifest(pipeline_dir)
        .context("reading pipeline manifest")?
        .and_then(|m| {
            let p = m.config.get("pipeline")?;
            Some((p.get("block_duration_s")?.as_i64()?, p.get("bin_width_s")?.as_i64()?))
        });
    let (duration, width) =
        from_manifest.unwrap_or((config.pipeline.block_duration_s, config.pipeline.bin_width_s));
    if width <= 0 || duration % width != 0 {
        return Err(Failure::Data(anyhow!("bin width {width} does not divide block duration {duration}")));
    }
    Ok((duration / width) as u32)
}

fn analyze_cmd(config: &RunConfig, strict: bool, input: &Path, pipeline_dir: &Path, output: &Path) -> Outcome {
    let options = parse_options(config, strict);
    let (grades, _) = read_grades(input, &options).context("reading grades")?;
    let (messages, _) = read_messages(input, &options).context("reading messages")?;
    let matrix = read_attendance(pipeline_dir, bins_per_block(config, pipeline_dir)?).context("reading attendance")?;
    let a = analyze(&matrix, &grades, &messages, &config.analysis);
    write_analysis(output, &a).context("writing analysis")?;

    let mut manifest = RunManifest::new("analyze", json!({ "analysis": config.analysis }));
    manifest.source_run_id = upstream_run_id(pipeline_dir, |m| m.source_run_id.clone())?;
    manifest.inputs = digest_files(input, &[io::GRADES, io::MESSAGES], "input/").context("hashing inputs")?;
    manifest
        .inputs
        .extend(digest_files(pipeline_dir, &[io::ATTENDANCE], "pipeline/").context("hashing inputs")?);
    manifest.outputs = digest_files(output, &analysis::OUTPUTS, "").context("hashing outputs")?;
    write_manifest(output, &manifest).context("writing manifest")?;
    for note in &a.notes {
        eprintln!("note: {note}");
    }
    if let Some(rho) = a.attendance_grade_spearman {
        eprintln!("attendance-grade spearman {rho:.3} over {} observations", a.observations);
    }
    Ok(())
}

fn threshold_failures(config: &RunConfig, m: &RecoveryMetrics) -> Vec<String> {
    let t = &config.verify;
    let loc = m.location.as_ref();
    let checks = [
        ("within_50", loc.map(|l| l.within_50), t.min_within_50),
        ("within_100", loc.map(|l| l.within_100), t.min_within_100),
        ("within_200", loc.map(|l| l.within_200), t.min_within_200),
        ("precision", Some(m.precision), t.min_precision),
        ("recall", Some(m.recall), t.min_recall),
        ("term_spearman", m.term_spearman, t.min_term_spearman),
    ];
    checks
        .into_iter()
        .filter_map(|(name, value, min)| match value {
            Some(v) if v >= min => None,
            Some(v) => Some(format!("{name} = {v} below threshold {min}")),
            None => Some(format!("{name} undefined (threshold {min})")),
        })
        .collect()
}

fn verify(config: &RunConfig, input: &Path, pipeline_dir: &Path, output: &Path) -> Outcome {
    for f in [io::TRUTH, io::TRUE_LOCATIONS] {
        if !input.join(f).is_file() {
            return Err(Failure::Data(anyhow!("missing truth file {}", input.join(f).display())));
        }
    }
    let run_id = upstream_run_id(input, |m| m.run_id.clone())?
        .ok_or_else(|| anyhow!("{} has no simulation manifest with a run id", input.display()))?;
    let source = upstream_run_id(pipeline_dir, |m| m.source_run_id.clone())?.unwrap_or_default();
    let truth = GroundTruthLog {
        run_id,
        tables: read_truth(input).context("reading truth")?,
    };
    let locations = read_locations(pipeline_dir).context("reading locations")?;
    let attendees = read_attendees(pipeline_dir).context("reading attendees")?;
    let matrix = read_attendance(pipeline_dir, bins_per_block(config, pipeline_dir)?).context("reading attendance")?;
    let view = PipelineView {
        source_run_id: &source,
        locations: &locations,
        attendees: &attendees,
        matrix: &matrix,
    };
    let metrics = score_against_truth(view, &truth).map_err(|e| Failure::Data(anyhow!(e)))?;
    let failures = threshold_failures(config, &metrics);

    let report = json!({
        "run_id": truth.run_id,
        "within_50": metrics.location.as_ref().map(|l| l.within_50),
        "within_100": metrics.location.as_ref().map(|l| l.within_100),
        "within_200": metrics.location.as_ref().map(|l| l.within_200),
        "located_bins": metrics.location.as_ref().map_or(0, |l| l.distances.len()),
        "max_error_m": metrics.location.as_ref().map(|l| l.max_error()),
        "precision": metrics.precision,
        "recall": metrics.recall,
        "predicted": metrics.predicted,
        "truly_present": metrics.truly_present,
        "term_spearman": metrics.term_spearman,
        "students_compared": metrics.students_compared,
        "thresholds": config.verify,
        "failures": failures,
        "passed": failures.is_empty(),
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_text(output, VERIFY_REPORT, &text).context("writing report")?;
    let mut manifest = RunManifest::new("verify", json!({ "verify": config.verify }));
    manifest.source_run_id = Some(truth.run_id.clone());
    manifest.inputs = digest_files(input, &[io::TRUTH, io::TRUE_LOCATIONS], "input/").context("hashing inputs")?;
    manifest.inputs.extend(
        digest_files(pipeline_dir, &[io::ATTENDANCE, io::LOCATIONS, io::ATTENDEES], "pipeline/")
            .context("hashing inputs")?,
    );
    manifest.outputs = digest_files(output, &[VERIFY_REPORT], "").context("hashing outputs")?;
    write_manifest(output, &manifest).context("writing manifest")?;

    if let Some(l) = &metrics.location {
        eprintln!(
            "within 50 m {:.3}, 100 m {:.3}, 200 m {:.3}",
            l.within_50, l.within_100, l.within_200
        );
    }
    eprintln!(
        "precision {:.3}, recall {:.3}, term spearman {}",
        metrics.precision,
        metrics.recall,
        metrics.term_spearman.map_or("undefined".into(), |r| format!("{r:.3}"))
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failures))
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate { common, output } => {
            simulate(&load_config(&common)?, &output)?;
        }
        Command::Pipeline { common, input, output } => {
            pipeline(&load_config(&common)?, common.strict, &input, &output)?;
        }
        Command::Analyze {
            common,
            input,
            pipeline,
            output,
        } => analyze_cmd(&load_config(&common)?, common.strict, &input, &pipeline, &output)?,
        Command::Verify {
            common,
            input,
            pipeline,
            output,
        } => {
            let output = output.unwrap_or_else(|| pipeline.with_file_name("verify"));
            verify(&load_config(&common)?, &input, &pipeline, &output)?;
        }
        Command::All { common, output } => {
            let config = load_config(&common)?;
            let (data, pipe) = (output.join("dataset"), output.join("pipeline"));
            simulate(&config, &data)?;
            pipeline(&config, common.strict, &data, &pipe)?;
            analyze_cmd(&config, common.strict, &data, &pipe, &output.join("analysis"))?;
            verify(&config, &data, &pipe, &output.join("verify"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(failures)) => {
            for f in failures {
                eprintln!("verification failed: {f}");
            }
            ExitCode::from(3)
        }
    }
}

