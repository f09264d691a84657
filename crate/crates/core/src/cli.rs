//! Batch command-line front end. Each subcommand reads one JSON config and
//! writes `report.json` with the resolved config echoed, plus CSV data.
//! Timestamps and paths go to a separate `metadata.json`.
//!
//! Exit codes: 0 verified, 2 inconclusive, 3 upper sum diverges, 1 error.

use crate::bounds::{build_envelope_chain, weighted_sum_check, ChainOptions};
use crate::config::{BlockSourceKind, ExperimentConfig, Format};
use crate::convolution::{local_clt_error, ConvolutionPower, PowerOptions};
use crate::density::{DensityKind, DensitySpec};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, DEFAULT_MAX_POINTS};
use crate::renewal::{density_defect, heavy_tail_check, renewal_density, resolve_kbar, simulate_renewal_window};
use crate::riemann::{dri_verdict, upper_sum, ExactSource, GridSource, RiemannReport};
use crate::{Extended, VERSION};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Parser)]
#[command(name = "drikit", version = VERSION, about = "Convolution powers, d.R.i. diagnostics and renewal densities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Upper/lower Riemann sums over a mesh ladder and a d.R.i. verdict.
    DriCheck,
    /// k-fold convolution power on a grid.
    ConvPower,
    /// Regularizing envelope chain and weighted-sum check.
    EnvelopeChain,
    /// Renewal density series with certified remainder.
    Renewal,
    /// Heavy-tailed renewal constant for a Pareto input.
    HeavyTail,
    /// Local CLT sup-error of standardized convolution powers.
    LocalClt,
    /// Monte Carlo renewal window counts.
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::DriCheck => "dri-check",
            Command::ConvPower => "conv-power",
            Command::EnvelopeChain => "envelope-chain",
            Command::Renewal => "renewal",
            Command::HeavyTail => "heavy-tail",
            Command::LocalClt => "local-clt",
            Command::Simulate => "simulate",
        }
    }
}

/// Outcome of one command.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub summary: String,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.into_iter().map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    spec: &'a DensitySpec,
    dir: &'a Path,
}

impl Ctx<'_> {
    fn csv(&self) -> bool {
        self.cfg.output.wants(Format::Csv)
    }

    fn report<T: Serialize>(&self, command: Command, result: &T) -> Result<()> {
        if !self.cfg.output.wants(Format::Json) {
            return Ok(());
        }
        let doc = json!({
            "command": command.name(),
            "version": VERSION,
            "config": self.cfg,
            "result": result,
        });
        std::fs::write(self.dir.join("report.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }
}

/// Parses arguments and runs; help and version requests exit 0, usage errors 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(o) => {
            println!("{}", o.summary);
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Loads the config and dispatches the subcommand.
pub fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let (cfg, spec) = cfg.resolve()?;
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    std::fs::create_dir_all(&dir)?;
    let started = unix_now();
    let ctx = Ctx {
        cfg: &cfg,
        spec: &spec,
        dir: &dir,
    };
    let (exit_code, summary) = match cli.command {
        Command::DriCheck => dri_check(&ctx)?,
        Command::ConvPower => conv_power(&ctx)?,
        Command::EnvelopeChain => envelope_chain(&ctx)?,
        Command::Renewal => renewal(&ctx)?,
        Command::HeavyTail => heavy_tail(&ctx)?,
        Command::LocalClt => local_clt(&ctx)?,
        Command::Simulate => simulate(&ctx)?,
    };
    let meta = json!({
        "command": cli.command.name(),
        "version": VERSION,
        "config_path": path,
        "output_directory": dir,
        "threads": cli.threads,
        "started_unix": started,
        "finished_unix": unix_now(),
        "exit_code": exit_code,
    });
    std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(Outcome {
        exit_code,
        out_dir: dir,
        summary,
    })
}

fn grid_of(ctx: &Ctx) -> Result<GridFunction> {
    if let DensityKind::Tabulated { grid } = ctx.spec.kind() {
        return Ok(grid.clone());
    }
    let g = ctx.cfg.grid.expect("resolved");
    GridFunction::discretize(ctx.spec, g.window, g.spacing, DEFAULT_MAX_POINTS)
}

#[derive(Serialize)]
struct DriResult {
    density: String,
    source: BlockSourceKind,
    window: (f64, f64),
    upper_sum_mesh_1: Option<Extended>,
    report: RiemannReport,
}

fn dri_check(ctx: &Ctx) -> Result<(i32, String)> {
    let d = &ctx.cfg.dri;
    let (report, mesh1, window) = match d.source {
        BlockSourceKind::Grid => {
            let g = grid_of(ctx)?;
            let src = GridSource(&g);
            let m1 = upper_sum(&src, 1.0, 0.0).ok();
            (dri_verdict(&src, &d.ladder, d.tol)?, m1, (g.origin(), g.last_x()))
        }
        BlockSourceKind::Exact => {
            if matches!(ctx.spec.kind(), DensityKind::Tabulated { .. }) {
                return Err(Error::Config("exact block extrema need a catalog density".into()));
            }
            let w = ctx.cfg.grid.expect("resolved").window;
            let src = ExactSource::new(ctx.spec, w)?;
            let m1 = upper_sum(&src, 1.0, 0.0).ok();
            (dri_verdict(&src, &d.ladder, d.tol)?, m1, w)
        }
    };
    if ctx.csv() {
        let rows = report
            .mesh_ladder
            .iter()
            .zip(&report.upper_sums)
            .zip(&report.lower_sums)
            .zip(&report.tail_bounds)
            .map(|(((&delta, u), &l), t)| vec![delta, u.as_f64(), l, u.as_f64() - l, t.as_f64()]);
        write_csv(
            &ctx.dir.join("ladder.csv"),
            &["delta", "upper", "lower", "gap", "tail_bound"],
            rows,
        )?;
    }
    let code = report.verdict.exit_code();
    let mut summary = format!("{}: {:?}", ctx.spec.name(), report.verdict);
    for d in &report.diagnostics {
        summary.push_str(&format!("\n  {d}"));
    }
    ctx.report(
        Command::DriCheck,
        &DriResult {
            density: ctx.spec.name(),
            source: d.source,
            window,
            upper_sum_mesh_1: mesh1,
            report,
        },
    )?;
    Ok((code, summary))
}

fn conv_power(ctx: &Ctx) -> Result<(i32, String)> {
    let g = ctx.cfg.grid.expect("resolved");
    let k = ctx.cfg.conv_power.k;
    let opts = PowerOptions {
        max_points: DEFAULT_MAX_POINTS,
        truncate: ctx.cfg.conv_power.truncate,
    };
    let cp = ConvolutionPower::from_spec(ctx.spec, g.window, g.spacing, k, &opts)?;
    if ctx.csv() {
        cp.grid
            .write_csv(ctx.dir.join(format!("f_{k}.csv")), &format!("f_{k}"))?;
    }
    let result = json!({
        "density": ctx.spec.name(),
        "k": k,
        "window": (cp.grid.origin(), cp.grid.last_x()),
        "spacing": cp.grid.spacing(),
        "mass": cp.grid.total_mass(),
        "mass_drift": cp.mass_drift,
        "outside_mass": cp.outside_mass,
        "sup": cp.grid.max_value(),
        "tail_bound": cp.tail_bound,
    });
    ctx.report(Command::ConvPower, &result)?;
    Ok((
        0,
        format!(
            "f_{k}: mass {:.12}, sup {:.6}",
            cp.grid.total_mass(),
            cp.grid.max_value()
        ),
    ))
}

fn envelope_chain(ctx: &Ctx) -> Result<(i32, String)> {
    let n_max = ctx.cfg.chain.n_max;
    let chain = build_envelope_chain(ctx.spec, n_max, &ChainOptions::for_spec(ctx.spec, n_max))?;
    let eps = ctx
        .cfg
        .chain
        .eps
        .or(ctx.spec.epsilon())
        .ok_or_else(|| Error::Config("no moment order available; set chain.eps".into()))?;
    let weighted = match chain.n_star {
        Some(n) => Some(weighted_sum_check(ctx.spec, &chain, n, eps)?),
        None => None,
    };
    if ctx.csv() {
        chain.write_csv(ctx.dir)?;
    }
    let summary = chain.summary();
    let code = match &weighted {
        Some(w) if w.pass => 0,
        _ => 2,
    };
    let line = format!(
        "chain: l1 index {:?}, n* {:?}, weighted check {}",
        summary.l1_index,
        summary.n_star,
        match &weighted {
            Some(w) if w.pass => "passed",
            Some(_) => "failed",
            None => "not reached",
        }
    );
    ctx.report(
        Command::EnvelopeChain,
        &json!({ "chain": summary, "weighted_sum": weighted }),
    )?;
    Ok((code, line))
}

fn renewal(ctx: &Ctx) -> Result<(i32, String)> {
    let r = &ctx.cfg.renewal;
    let series = renewal_density(ctx.spec, r.n_terms, (0.0, r.x_max), r.spacing, r.remainder_tol)?;
    let defect = density_defect(&series, r.k)?;
    if ctx.csv() {
        let rows = series
            .grid
            .xs()
            .zip(series.grid.values())
            .zip(defect.grid.values())
            .map(|((x, &u), &d)| {
                let m = ctx.spec.truncated_mean(x).unwrap_or(f64::NAN);
                vec![x, u, m * d]
            })
            .collect::<Vec<_>>();
        write_csv(&ctx.dir.join("u.csv"), &["x", "u", "m_times_defect"], rows)?;
    }
    let line = format!(
        "u_N with N={} on [0, {}]: remainder <= {:.3e}, far-window deviation from 1/mu {:.3e}",
        series.n_terms, series.window.1, series.remainder_bound, defect.sup_deviation
    );
    ctx.report(
        Command::Renewal,
        &json!({
            "series": series.summary(),
            "defect": {
                "k": defect.k,
                "target": defect.target,
                "far_window": defect.far_window,
                "sup_deviation": defect.sup_deviation,
            }
        }),
    )?;
    Ok((0, line))
}

fn heavy_tail(ctx: &Ctx) -> Result<(i32, String)> {
    let c = &ctx.cfg.heavy_tail;
    let kbar = match c.kbar {
        Some(k) => k,
        None => resolve_kbar(ctx.spec)?,
    };
    let report = heavy_tail_check(ctx.spec, c.n_terms, &c.probes, kbar, c.spacing)?;
    if ctx.csv() {
        let rows = report.probes.iter().map(|p| {
            vec![
                p.x,
                p.truncated_mean,
                p.u,
                p.defect,
                p.scaled,
                p.band.0,
                p.band.1,
                p.ratio_to_target,
            ]
        });
        write_csv(
            &ctx.dir.join("probes.csv"),
            &[
                "x",
                "m",
                "u",
                "defect",
                "m_times_defect",
                "band_lo",
                "band_hi",
                "ratio_to_target",
            ],
            rows,
        )?;
    }
    let mut line = format!("target {:.5}, kbar {kbar}", report.target);
    for p in &report.probes {
        line.push_str(&format!(
            "\n  x={}: m*defect={:.5} ratio {:.4}",
            p.x, p.scaled, p.ratio_to_target
        ));
    }
    let code = if report.inconclusive { 2 } else { 0 };
    ctx.report(Command::HeavyTail, &report)?;
    Ok((code, line))
}

fn local_clt(ctx: &Ctx) -> Result<(i32, String)> {
    let c = &ctx.cfg.local_clt;
    let errors = local_clt_error(ctx.spec, &c.n_list, c.points_per_sd)?;
    if ctx.csv() {
        write_csv(
            &ctx.dir.join("errors.csv"),
            &["n", "sup_error"],
            errors.iter().map(|&(n, e)| vec![n as f64, e]),
        )?;
    }
    let line = errors
        .iter()
        .map(|(n, e)| format!("n={n}: {e:.3e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ctx.report(
        Command::LocalClt,
        &json!({ "errors": errors.iter().map(|&(n, e)| json!({"n": n, "sup_error": e})).collect::<Vec<_>>() }),
    )?;
    Ok((0, line))
}

fn simulate(ctx: &Ctx) -> Result<(i32, String)> {
    let c = &ctx.cfg.simulate;
    let estimates = c
        .windows
        .iter()
        .map(|&(x, d)| simulate_renewal_window(ctx.spec, x, d, c.paths, ctx.cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    if ctx.csv() {
        write_csv(
            &ctx.dir.join("estimates.csv"),
            &["x", "delta", "estimate", "std_error"],
            estimates.iter().map(|e| vec![e.x, e.delta, e.estimate, e.std_error]),
        )?;
    }
    let line = estimates
        .iter()
        .map(|e| {
            format!(
                "U([{}, {})) ~ {:.5} +- {:.5}",
                e.x,
                e.x + e.delta,
                e.estimate,
                e.std_error
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    ctx.report(Command::Simulate, &json!({ "estimates": estimates }))?;
    Ok((0, line))
}
