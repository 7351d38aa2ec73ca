//! `adasplit`: plan DNN split points, simulate uplink interference and
//! replay fixed vs adaptive splitting.

mod plan;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adasplit_core::channel::{
    generate_trace, read_trace, write_trace, Load, Scenario, TraceConfig,
};
use adasplit_core::estimator::{
    estimate_trace, score, AllocRatioSource, BaselineEstimator, EstimatorConfig, EstimatorMode,
    ExternalEstimator, ThroughputEstimator,
};
use adasplit_core::harness::{
    clean_channel_split, compare, sweep_splitting_points, FallbackRule, HarnessConfig, Policy,
    TpSource,
};
use adasplit_core::numfmt::sig6;
use adasplit_core::presets::{preset, PRESETS};
use adasplit_core::privacy::{distance_correlation, SampleMatrix};
use adasplit_core::profiles::{load_profile, shape_findings, SplitProfile};
use adasplit_core::pso::build_lookup_table_for;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

const BUNDLED: &str = "bundled";

#[derive(Parser)]
#[command(
    name = "adasplit",
    version,
    about = "Adaptive DNN split planning over 5G uplinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProfileArg {
    /// Split profile file, or `bundled` for the shipped VGG16 profile.
    #[arg(long, default_value = BUNDLED)]
    profile: String,
}

impl ProfileArg {
    fn load(&self) -> Result<SplitProfile> {
        if self.profile == BUNDLED {
            Ok(SplitProfile::bundled_vgg16())
        } else {
            load_profile(&self.profile).with_context(|| format!("loading profile {}", self.profile))
        }
    }

    fn label(&self) -> String {
        if self.profile == BUNDLED {
            "bundled:vgg16".into()
        } else {
            self.profile.clone()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Distance correlation between two paired sample files.
    Dcor {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
    },
    /// Check a profile for consistency and expected trends.
    ValidateProfile {
        #[command(flatten)]
        profile: ProfileArg,
    },
    /// Build the throughput -> split lookup table.
    BuildLut {
        #[command(flatten)]
        profile: ProfileArg,
        /// Preset name or TOML file with `w1`, `w2`, `w3`.
        #[arg(long, default_value = "latency-focused")]
        weights: String,
        /// Preset name or TOML file with `tau_max_ms`, `rho_max`, `e_max_j`.
        #[arg(long, default_value = "latency-focused")]
        constraints: String,
        #[arg(long)]
        tp_max: Option<u32>,
        #[arg(long, default_value = "ue0")]
        ue_id: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a channel trace (`<prefix>.trace.csv` plus `<prefix>.iq`).
    Simulate {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value = "high")]
        load: Load,
        #[arg(long, default_value_t = 0.5)]
        alloc_ratio: f64,
        /// Attach an IQ grid every N steps; 0 disables IQ.
        #[arg(long, default_value_t = 10)]
        iq_every: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Estimate per-step throughput of a stored trace and score it.
    Estimate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "kpm_plus_iq")]
        mode: EstimatorMode,
        /// Shell command speaking the line-delimited JSON estimator protocol.
        #[arg(long)]
        ext: Option<String>,
        #[arg(long, default_value_t = 30)]
        window: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fixed vs adaptive splitting over generated scenarios.
    Compare {
        #[command(flatten)]
        profile: ProfileArg,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "none,jamming,ue_to_bs,bs_to_bs"
        )]
        scenarios: Vec<Scenario>,
        /// Preset supplying weights and constraints.
        #[arg(long, default_value = "latency-focused")]
        preset: String,
        /// Overrides the preset's weights (preset name or TOML file).
        #[arg(long)]
        weights: Option<String>,
        /// Overrides the preset's constraints (preset name or TOML file).
        #[arg(long)]
        constraints: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value = "high")]
        load: Load,
        /// `oracle` or `estimated`.
        #[arg(long, default_value = "estimated")]
        tp_source: String,
        #[arg(long, default_value = "full_local")]
        fallback: FallbackRule,
        /// Fixed split; defaults to the table's choice on a clean channel.
        #[arg(long)]
        fixed: Option<usize>,
        #[arg(long, default_value_t = 1)]
        tasks_per_step: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Objective curves F(l, TP) per preset.
    Sweep {
        #[command(flatten)]
        profile: ProfileArg,
        /// Comma-separated preset names, or `all`.
        #[arg(long, default_value = "all")]
        presets: String,
        #[arg(long, value_delimiter = ',', default_value = "15,30,60")]
        tps: Vec<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dcor { x, y } => cmd_dcor(&x, &y),
        Command::ValidateProfile { profile } => cmd_validate(&profile),
        Command::BuildLut {
            profile,
            weights,
            constraints,
            tp_max,
            ue_id,
            output,
        } => {
            let plan = plan::resolve(&weights, &constraints, tp_max)?;
            cmd_build_lut(&profile, &plan, &ue_id, output.as_deref())
        }
        Command::Simulate {
            scenario,
            seed,
            duration,
            load,
            alloc_ratio,
            iq_every,
            output,
        } => {
            let mut cfg = TraceConfig::new(scenario, duration, seed)
                .with_load(load)
                .with_iq_every((iq_every > 0).then_some(iq_every));
            cfg.alloc_ratio = alloc_ratio;
            let trace = generate_trace(&cfg)?;
            let files = write_trace(&trace, &output)?;
            println!("{}", files.csv.display());
            if let Some(iq) = files.iq {
                println!("{}", iq.display());
            }
            Ok(())
        }
        Command::Estimate {
            trace,
            mode,
            ext,
            window,
            output,
        } => cmd_estimate(&trace, mode, ext.as_deref(), window, output.as_deref()),
        Command::Compare {
            profile,
            scenarios,
            preset,
            weights,
            constraints,
            seed,
            duration,
            load,
            tp_source,
            fallback,
            fixed,
            tasks_per_step,
            output,
        } => {
            let opts = CompareOpts {
                scenarios,
                seed,
                duration,
                load,
                tp_source,
                fallback,
                fixed,
                tasks_per_step,
            };
            let plan = plan::resolve(
                weights.as_deref().unwrap_or(&preset),
                constraints.as_deref().unwrap_or(&preset),
                None,
            )?;
            cmd_compare(&profile, &plan, &opts, &output)
        }
        Command::Sweep {
            profile,
            presets,
            tps,
            output,
        } => cmd_sweep(&profile, &presets, &tps, &output),
    }
}

fn tool_line() -> (String, String) {
    (
        "tool".into(),
        format!("adasplit {}", env!("CARGO_PKG_VERSION")),
    )
}

fn header(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "# {k}={v}");
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_dcor(x: &Path, y: &Path) -> Result<()> {
    let xs = SampleMatrix::load(x)?;
    let ys = SampleMatrix::load(y)?;
    println!("{:.9}", distance_correlation(&xs, &ys)?);
    Ok(())
}

fn cmd_validate(arg: &ProfileArg) -> Result<()> {
    let profile = arg.load()?;
    println!(
        "profile {} ({} splits): structurally valid",
        profile.model_name,
        profile.len()
    );
    let mismatched = profile.energy_inconsistencies();
    if mismatched.is_empty() {
        println!("energy: consistent with TDP/threads x UE delay");
    } else {
        println!("energy: mismatched at splits {mismatched:?}");
    }
    let mut ok = mismatched.is_empty();
    for f in shape_findings(&profile) {
        println!(
            "{:?}: {} ({})",
            f.check,
            if f.passed { "ok" } else { "FAILED" },
            f.detail
        );
        ok &= f.passed;
    }
    if !ok {
        bail!("profile {} has findings", arg.label());
    }
    Ok(())
}

fn cmd_build_lut(
    arg: &ProfileArg,
    plan: &plan::Plan,
    ue_id: &str,
    output: Option<&Path>,
) -> Result<()> {
    let profile = arg.load()?;
    let table = build_lookup_table_for(
        ue_id,
        &profile,
        &plan.constraints,
        &plan.weights,
        plan.tp_max_mbps,
    )?;
    let mut prov = vec![tool_line(), ("profile".into(), arg.label())];
    prov.extend(plan.provenance().into_iter().filter(|(k, _)| k != "tp_max_mbps"));
    let gaps = table.gaps();
    prov.push(("gaps".into(), gaps.len().to_string()));
    let text = table.to_text(&prov);
    match output {
        Some(path) => {
            write_file(path, &text)?;
            println!(
                "{} entries, {} gaps -> {}",
                plan.tp_max_mbps as usize - gaps.len(),
                gaps.len(),
                path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_estimate(
    trace_path: &Path,
    mode: EstimatorMode,
    ext: Option<&str>,
    window: usize,
    output: Option<&Path>,
) -> Result<()> {
    let trace = read_trace(trace_path)?;
    let config = EstimatorConfig {
        window_len: window,
        mode,
        alloc_ratio: trace.config.alloc_ratio,
        capacity_share: trace.config.alloc_ratio,
        thermal_floor_dbm: trace.config.radio.thermal_floor_dbm,
        alloc_ratio_source: if trace.steps.iter().any(|s| s.iq.is_some()) {
            AllocRatioSource::FromGrid
        } else {
            AllocRatioSource::FromConfig
        },
        ..EstimatorConfig::default()
    };
    let estimator: Box<dyn ThroughputEstimator> = match ext {
        Some(cmd) => Box::new(ExternalEstimator::spawn(cmd)?),
        None => Box::new(BaselineEstimator::new(
            config.clone(),
            trace.config.model.clone(),
        )?),
    };
    let estimates = estimate_trace(estimator.as_ref(), &trace, &config, false)?;
    let mut pairs = Vec::new();
    let mut body = header(&[
        tool_line(),
        ("trace".into(), trace_path.display().to_string()),
        ("estimator".into(), estimator.name()),
        ("window".into(), window.to_string()),
    ]);
    body.push_str("t_s,tp_true_mbps,estimate_mbps\n");
    for (s, e) in trace.steps.iter().zip(&estimates) {
        if let Some(e) = e {
            pairs.push((*e, s.tp_true_mbps));
            let _ = writeln!(
                body,
                "{},{},{}",
                sig6(s.t_s),
                sig6(s.tp_true_mbps),
                sig6(*e)
            );
        }
    }
    let sc = score(&pairs)?;
    let summary = format!("r2={} rmse={} n={}", sig6(sc.r2), sig6(sc.rmse), sc.n);
    match output {
        Some(path) => {
            let _ = writeln!(body, "# {summary}");
            write_file(path, &body)?;
            println!("{summary}");
        }
        None => {
            print!("{body}");
            println!("# {summary}");
        }
    }
    Ok(())
}

struct CompareOpts {
    scenarios: Vec<Scenario>,
    seed: u64,
    duration: f64,
    load: Load,
    tp_source: String,
    fallback: FallbackRule,
    fixed: Option<usize>,
    tasks_per_step: u32,
}

fn cmd_compare(arg: &ProfileArg, plan: &plan::Plan, o: &CompareOpts, out_dir: &Path) -> Result<()> {
    let profile = arg.load()?;
    let table = build_lookup_table_for(
        "ue0",
        &profile,
        &plan.constraints,
        &plan.weights,
        plan.tp_max_mbps,
    )?;
    let traces = o
        .scenarios
        .iter()
        .map(|&sc| generate_trace(&TraceConfig::new(sc, o.duration, o.seed).with_load(o.load)))
        .collect::<adasplit_core::Result<Vec<_>>>()?;
    let clean_tp = traces.first().map(|t| t.clean_throughput()).unwrap_or(60.0);
    let fixed_l = match o.fixed {
        Some(l) => l,
        None => clean_channel_split(&table, clean_tp)?,
    };
    let policies = [
        Policy::Fixed(fixed_l),
        Policy::Adaptive {
            table,
            fallback: o.fallback,
        },
    ];

    let first = traces.first().context("no scenarios given")?;
    let est_config = EstimatorConfig {
        capacity_share: first.config.alloc_ratio,
        thermal_floor_dbm: first.config.radio.thermal_floor_dbm,
        ..EstimatorConfig::default()
    };
    let estimator = BaselineEstimator::new(est_config.clone(), first.config.model.clone())?;
    let source = match o.tp_source.as_str() {
        "oracle" => TpSource::Oracle,
        "estimated" => TpSource::Estimated {
            estimator: &estimator,
            config: &est_config,
        },
        other => bail!("unknown tp source '{other}' (expected oracle or estimated)"),
    };
    let cfg = HarnessConfig {
        tasks_per_step: o.tasks_per_step,
        tp_ref_mbps: plan.tp_max_mbps as f64,
        ..HarnessConfig::default()
    };
    let report = compare(
        &policies,
        &profile,
        &traces,
        &plan.constraints,
        &plan.weights,
        source,
        &cfg,
    )?;

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut prov = vec![tool_line(), ("profile".into(), arg.label())];
    prov.extend(plan.provenance());
    prov.extend([
        ("seed".into(), o.seed.to_string()),
        ("duration_s".into(), o.duration.to_string()),
        ("load".into(), o.load.to_string()),
        ("tp_source".into(), o.tp_source.clone()),
        ("fallback".into(), o.fallback.to_string()),
        ("tasks_per_step".into(), o.tasks_per_step.to_string()),
    ]);
    for run in &report.runs {
        let path = out_dir.join(format!("{}_{}.csv", run.scenario, run.policy));
        write_file(&path, &run.to_csv(&prov)?)?;
    }
    let summary = report.summary_csv(&prov)?;
    write_file(&out_dir.join("summary.csv"), &summary)?;
    for d in &report.deltas {
        println!(
            "{:<9} {} vs {}: E2E delay {:+.2}%, privacy {:+.2}%, energy {:+.2}%",
            d.scenario,
            d.other,
            d.baseline,
            -100.0 * d.d_e2e,
            -100.0 * d.privacy,
            -100.0 * d.energy
        );
    }
    Ok(())
}

fn cmd_sweep(arg: &ProfileArg, names: &str, tps: &[f64], out_dir: &Path) -> Result<()> {
    let profile = arg.load()?;
    let presets = if names == "all" {
        PRESETS.iter().collect::<Vec<_>>()
    } else {
        names
            .split(',')
            .map(|n| preset(n.trim()))
            .collect::<adasplit_core::Result<Vec<_>>>()?
    };
    let curves = sweep_splitting_points(&profile, &presets, tps)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let prov = vec![
        tool_line(),
        ("profile".into(), arg.label()),
        (
            "tps".into(),
            tps.iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
    ];
    let mut argmins = header(&prov);
    argmins.push_str("preset,tp_mbps,argmin\n");
    for p in &presets {
        let mut body = header(&prov);
        let _ = writeln!(body, "# preset={}", p.name);
        body.push_str("tp_mbps,split,f_value,d_e2e_ms,feasible,is_argmin\n");
        for curve in curves.iter().filter(|c| c.preset == p.name) {
            for cell in &curve.cells {
                let _ = writeln!(
                    body,
                    "{},{},{},{},{},{}",
                    sig6(curve.tp_mbps),
                    cell.index,
                    sig6(cell.f_value),
                    sig6(cell.d_e2e_ms),
                    u8::from(cell.feasible),
                    u8::from(curve.argmin == Some(cell.index))
                );
            }
            let argmin = curve
                .argmin
                .map(|l| l.to_string())
                .unwrap_or_else(|| "none".into());
            let _ = writeln!(argmins, "{},{},{}", p.name, sig6(curve.tp_mbps), argmin);
            println!(
                "{:<16} TP {:>6} Mbps -> l* = {}",
                p.name,
                sig6(curve.tp_mbps),
                argmin
            );
        }
        write_file(&out_dir.join(format!("sweep_{}.csv", p.name)), &body)?;
    }
    write_file(&out_dir.join("argmins.csv"), &argmins)
}
