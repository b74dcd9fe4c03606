//! `qcrb` — quantum estimation lower bounds from the command line.
//!
//! Exit codes: 0 success; 1 configuration or usage error; 2 a bound came
//! out violated or a report failed verification; 3 internal numeric failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use qcrb_cli::config::{validate, ScenarioConfig, TolOverrides};
use qcrb_cli::report::{to_csv, to_json, verify_report, ScenarioReport};
use qcrb_cli::runner::run_scenario;
use qcrb_cli::scenarios;
use qcrb_core::Tolerances;

#[derive(Parser)]
#[command(
    name = "qcrb",
    version,
    about = "Lower bounds for quantum parameter estimation: information matrices, \
             measurement error matrices, and attainment checks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a scenario and write its report artifacts.
    Run {
        /// Path to a scenario config (JSON).
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        /// Name of a shipped scenario (see `list`).
        #[arg(long)]
        scenario: Option<String>,
        /// Output directory for report artifacts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the Monte Carlo / fuzz seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Artifact format.
        #[arg(long, default_value = "json", value_parser = ["json", "csv", "both"])]
        format: String,
    },
    /// Check a scenario config and report every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List shipped scenarios, plus configs found in a directory.
    List {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Re-derive the internal consistency of a written report.
    VerifyReport { path: PathBuf },
}

fn main() {
    std::process::exit(real_main());
}

fn load_config(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let cfg = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("{} does not parse: {e}", path.display()))?;
    Ok(cfg)
}

/// `QCRB_TOL_OVERRIDE` may hold a JSON object of tolerance overrides (same
/// schema as the config `tolerances` section). It adjusts the defaults;
/// per-config `tolerances` still win over it.
fn base_tolerances() -> anyhow::Result<Tolerances> {
    let base = Tolerances::standard();
    match std::env::var("QCRB_TOL_OVERRIDE") {
        Ok(text) if !text.trim().is_empty() => {
            let ov: TolOverrides = serde_json::from_str(&text)
                .map_err(|e| anyhow::anyhow!("QCRB_TOL_OVERRIDE does not parse: {e}"))?;
            Ok(ov.apply(&base))
        }
        _ => Ok(base),
    }
}

fn report_has_violation(report: &ScenarioReport) -> bool {
    let point_violation = report.points.iter().any(|p| {
        p.bound_checks.iter().any(|c| c.verdict == "Violated")
            || p.audits
                .iter()
                .any(|a| a.verdict.as_deref() == Some("Violated"))
    });
    let fuzz_violation = report.fuzz.as_ref().is_some_and(|f| f.violations > 0);
    point_violation || fuzz_violation
}

fn report_has_numeric_failure(report: &ScenarioReport) -> bool {
    report
        .points
        .iter()
        .any(|p| !p.errors.is_empty() || p.audits.iter().any(|a| a.status == "error"))
}

fn run_cmd(
    config: Option<PathBuf>,
    scenario: Option<String>,
    out: PathBuf,
    seed: Option<u64>,
    format: String,
) -> i32 {
    let cfg = match (config, scenario) {
        (Some(path), None) => match load_config(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        },
        (None, Some(name)) => match scenarios::builtin(&name) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        },
        _ => {
            eprintln!("error: give exactly one of --config or --scenario");
            return 1;
        }
    };

    let mut cfg = cfg;
    if let Some(s) = seed {
        if let Some(mc) = cfg.mc.as_mut() {
            mc.seed = s;
        }
        if let Some(f) = cfg.fuzz.as_mut() {
            f.seed = s;
        }
    }

    let issues = validate(&cfg);
    if !issues.is_empty() {
        for i in &issues {
            eprintln!("error: {i}");
        }
        return 1;
    }

    let base_tol = match base_tolerances() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };

    let report = match run_scenario(&cfg, &base_tol) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: scenario failed: {e:#}");
            return 3;
        }
    };

    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return 1;
    }
    let mut written = Vec::new();
    if format == "json" || format == "both" {
        let path = out.join(format!("{}.report.json", cfg.name));
        if let Err(e) = std::fs::write(&path, to_json(&report)) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return 1;
        }
        written.push(path);
    }
    if format == "csv" || format == "both" {
        let path = out.join(format!("{}.csv", cfg.name));
        if let Err(e) = std::fs::write(&path, to_csv(&report)) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return 1;
        }
        written.push(path);
    }

    for pt in &report.points {
        for bc in &pt.bound_checks {
            println!(
                "point {}: {} {} (min_eig {:.3e}, ratio {:.4})",
                pt.index, bc.bound, bc.verdict, bc.min_eig, bc.ratio_trace
            );
        }
        for a in &pt.audits {
            match (&a.status[..], &a.verdict) {
                ("ok", Some(v)) => println!("point {}: audit {} -> {v}", pt.index, a.name),
                ("ok", None) => println!("point {}: audit {} -> ok", pt.index, a.name),
                _ => println!("point {}: audit {} failed: {}", pt.index, a.name, a.detail),
            }
        }
        for e in &pt.errors {
            println!("point {}: error: {e}", pt.index);
        }
    }
    if let Some(f) = &report.fuzz {
        println!(
            "fuzz: {} pairs, worst min_eig helstrom {:.3e}, right {:.3e}, {} violations",
            f.pairs, f.worst_min_eig_helstrom, f.worst_min_eig_right, f.violations
        );
    }
    for path in &written {
        println!("wrote {}", path.display());
    }

    if report_has_numeric_failure(&report) {
        eprintln!("error: numeric failures recorded in the report");
        return 3;
    }
    if report_has_violation(&report) {
        eprintln!("error: at least one bound came out violated");
        return 2;
    }
    0
}

fn real_main() -> i32 {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            config,
            scenario,
            out,
            seed,
            format,
        } => run_cmd(config, scenario, out, seed, format),
        Cmd::Validate { config } => match load_config(&config) {
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
            Ok(cfg) => {
                let issues = validate(&cfg);
                if issues.is_empty() {
                    println!("ok: {}", cfg.name);
                    0
                } else {
                    for i in &issues {
                        eprintln!("error: {i}");
                    }
                    1
                }
            }
        },
        Cmd::List { dir } => match scenarios::list(dir.as_deref()) {
            Ok(entries) => {
                for e in entries {
                    println!("{}\t{}\t[{}]", e.name, e.summary, e.source);
                }
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Cmd::VerifyReport { path } => {
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    return 1;
                }
            };
            let findings = verify_report(&text);
            if findings.is_empty() {
                println!("verified: {}", path.display());
                0
            } else {
                for f in &findings {
                    eprintln!("finding: {f}");
                }
                eprintln!("error: {} verification finding(s)", findings.len());
                2
            }
        }
    }
}
