use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use trusteq_core::report::{
    align_attributions, explain_instance, read_attributions, render_ksweep_svg, write_outputs,
    AuditConfig, AuditError, InstanceDrilldown, RunOptions,
};
use trusteq_core::{run_audit, AlignmentReport};

mod selftest;

#[derive(Debug, Parser)]
#[command(
    name = "trusteq",
    version,
    about = "Audit whether a compressed text classifier can stand in for a larger one"
)]
struct Cli {
    /// Audit configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, global = true, env = "TRUSTEQ_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "trusteq-out")]
    out: PathBuf,
    /// Worker threads for per-instance work.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict, attribute, align and calibrate; write every report.
    Audit,
    /// Show the top-K words of one instance for every model and method.
    Explain {
        #[arg(long)]
        instance: String,
    },
    /// Calibration metrics only, no attributions.
    Calibrate,
    /// Alignment only, from a saved attributions file.
    Align {
        /// Defaults to `<out>/attributions.jsonl`.
        #[arg(long)]
        attributions: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn load_config(cli: &Cli) -> Result<AuditConfig, AuditError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| AuditError::Config("--config is required for this command".into()))?;
    let mut cfg = AuditConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_options(cli: &Cli, explain: bool) -> RunOptions {
    RunOptions {
        jobs: cli.jobs as usize,
        explain,
    }
}

fn print_alignment(reports: &[AlignmentReport]) {
    for a in reports {
        let sweep: Vec<String> = a.sweep.iter().map(|(k, v)| format!("{k}:{v:.3}")).collect();
        println!(
            "{} vs {} [{}] mean Jaccard@{} = {:.3}  ({})",
            a.model_a,
            a.model_b,
            a.method.display_name(),
            a.k,
            a.mean_jaccard,
            sweep.join(" ")
        );
    }
}

fn audit(cli: &Cli, explain: bool) -> Result<(), AuditError> {
    let cfg = load_config(cli)?;
    let report = run_audit(&cfg, &run_options(cli, explain))?;
    let files = write_outputs(&cli.out, &report)?;
    for c in &report.calibration {
        println!(
            "{}: accuracy {:.3}  ECE {:.3}  MCE {:.3}  Brier {:.3}",
            c.model, c.accuracy, c.ece, c.mce, c.brier
        );
    }
    print_alignment(&report.alignment);
    info!("wrote {}", files.report_json.display());
    println!("report written to {}", cli.out.display());
    Ok(())
}

fn print_drilldown(d: &InstanceDrilldown) {
    println!("instance {} (label {})", d.instance_id, d.label);
    println!("  a: {}", d.text_a);
    if let Some(b) = &d.text_b {
        println!("  b: {b}");
    }
    for e in &d.entries {
        let words: Vec<String> = e
            .top
            .iter()
            .map(|w| format!("{} {:+.4}", w.word, w.score))
            .collect();
        println!(
            "{} {} (class {}): {}",
            e.model,
            e.method.display_name(),
            e.explained_class,
            words.join(", ")
        );
    }
}

fn align(cli: &Cli, attributions: Option<&Path>) -> Result<(), AuditError> {
    let cfg = load_config(cli)?;
    let default = cli.out.join("attributions.jsonl");
    let attrs = read_attributions(attributions.unwrap_or(&default))?;
    let reports = align_attributions(&cfg, &attrs)?;
    print_alignment(&reports);

    let figs = cli.out.join("figs");
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e: std::io::Error| AuditError::Io {
            path: path.clone(),
            message: e.to_string(),
        }
    };
    fs::create_dir_all(&figs).map_err(io(&figs))?;
    let json_path = cli.out.join("alignment.json");
    let mut json = serde_json::to_string_pretty(&reports).expect("alignment reports serialize");
    json.push('\n');
    fs::write(&json_path, json).map_err(io(&json_path))?;

    let mut by_method: BTreeMap<&str, Vec<(String, &AlignmentReport)>> = BTreeMap::new();
    for a in &reports {
        by_method
            .entry(a.method.tag())
            .or_default()
            .push((format!("{} vs {}", a.model_a, a.model_b), a));
    }
    for (tag, series) in by_method {
        let path = figs.join(format!("ksweep_{tag}.svg"));
        fs::write(
            &path,
            render_ksweep_svg(&format!("{tag} alignment across K"), &series),
        )
        .map_err(io(&path))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Audit => audit(&cli, true),
        Command::Calibrate => audit(&cli, false),
        Command::Explain { instance } => load_config(&cli)
            .and_then(|cfg| explain_instance(&cfg, instance))
            .map(|d| print_drilldown(&d)),
        Command::Align { attributions } => align(&cli, attributions.as_deref()),
        Command::Selftest => {
            return if selftest::run(cli.seed.unwrap_or(0)) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
