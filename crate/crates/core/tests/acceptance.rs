//! Acceptance suite: one PASS/FAIL line per criterion.

use drikit::bounds::{
    block_bound_check, bootstrap_check, build_envelope_chain, default_a_grid, seed_check, tail_moment_suite,
    weighted_sum_check, ChainOptions, QUAD_SLACK,
};
use drikit::cli::{run, Cli, Command};
use drikit::convolution::{boundedness_index, local_clt_error};
use drikit::density::DensitySpec;
use drikit::quad;
use drikit::renewal::{heavy_tail_check, renewal_density, resolve_kbar, simulate_renewal_window, REMAINDER_TOL};
use drikit::riemann::{mesh_inequality_check, upper_sum, ExactSource, StepFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn cli(command: Command, dir: &Path, config: &str) -> Result<(i32, serde_json::Value), String> {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).map_err(e)?;
    let out = dir.join("out");
    let o = run(&Cli {
        command,
        config: Some(cfg),
        out: Some(out.clone()),
        seed: None,
        threads: None,
    })
    .map_err(e)?;
    let report = std::fs::read_to_string(out.join("report.json")).map_err(e)?;
    Ok((o.exit_code, serde_json::from_str(&report).map_err(e)?))
}

fn exponential_renewal() -> Outcome {
    let t = Instant::now();
    let s = renewal_density(
        &DensitySpec::exponential(1.0).map_err(e)?,
        200,
        (0.0, 30.0),
        1.0 / 128.0,
        REMAINDER_TOL,
    )
    .map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    let dev = s
        .grid
        .xs()
        .zip(s.grid.values())
        .filter(|(x, _)| *x >= 2.0)
        .map(|(_, v)| (v - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        dev <= 1e-3 && s.remainder_bound <= 1e-4 && s.window.1 == 30.0 && secs <= 10.0,
        format!(
            "max|u-1| on [2,30] = {dev:.2e}, remainder {:.2e}, {secs:.2}s",
            s.remainder_bound
        ),
    )
}

fn uniform_renewal() -> Outcome {
    let t = Instant::now();
    let h = 1.0 / 256.0;
    let s = renewal_density(
        &DensitySpec::uniform(0.0, 1.0).map_err(e)?,
        100,
        (0.0, 30.0),
        h,
        REMAINDER_TOL,
    )
    .map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    // Interior grid points of [0, 1); the point 0 carries the jump of f.
    let near = s
        .grid
        .xs()
        .zip(s.grid.values())
        .filter(|(x, _)| *x > 0.0 && *x < 1.0)
        .map(|(x, v)| (v - x.exp()).abs())
        .fold(0.0, f64::max);
    let far = s
        .grid
        .xs()
        .zip(s.grid.values())
        .filter(|(x, _)| *x >= 20.0)
        .map(|(_, v)| (v / 2.0 - 1.0).abs())
        .fold(0.0, f64::max);
    let mid = (s.grid.eval(0.5) - 0.5f64.exp()).abs();
    check(
        near <= 1e-3 && mid <= 1e-3 && far <= 0.01 && secs <= 10.0,
        format!("max|u-e^x| on (0,1) = {near:.2e}, |u(0.5)-e^0.5| = {mid:.2e}, max rel dev from 2 on [20,30] = {far:.2e}, {secs:.2}s"),
    )
}

fn heavy_tail_constant() -> Outcome {
    let t = Instant::now();
    let spec = DensitySpec::pareto(0.6, 1.0).map_err(e)?;
    let kbar = resolve_kbar(&spec).map_err(e)?;
    let r = heavy_tail_check(&spec, 400, &[1000.0], kbar, 0.125).map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    // 1/(Γ(0.6) Γ(1.4)) to 18 digits from a multiprecision evaluation.
    let oracle = 0.756_826_728_640_656_9;
    let p = &r.probes[0];
    let ratio = p.scaled / oracle;
    check(
        (ratio - 1.0).abs() <= 0.15
            && (r.target - oracle).abs() <= 1e-12
            && p.band.1.is_finite()
            && p.band.0 <= p.band.1
            && !r.inconclusive
            && secs <= 60.0,
        format!(
            "kbar {kbar}, m*defect(1000) = {:.5} in band [{:.6}, {:.6}], target {:.6}, ratio {ratio:.4}, {secs:.1}s",
            p.scaled, p.band.0, p.band.1, r.target
        ),
    )
}

fn log_counterexample() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (code, report) = cli(
        Command::DriCheck,
        dir.path(),
        r#"{"schema": 1, "density": {"name": "log_counterexample"}}"#,
    )?;
    let verdict = report["result"]["report"]["verdict"].as_str().unwrap_or("").to_string();
    let grid_m1 = report["result"]["upper_sum_mesh_1"]["finite"]
        .as_f64()
        .unwrap_or(f64::INFINITY);
    let spec = DensitySpec::log_counterexample();
    let exact_m1 = upper_sum(&ExactSource::new(&spec, (0.0, 64.0)).map_err(e)?, 1.0, 0.0)
        .map_err(e)?
        .as_f64();
    // The displayed bound 2/e + ∫_3^∞ dx/(x log² x), the integral by quadrature in u = log x.
    let tail = quad::integrate_to_inf(|u| 1.0 / (u * u), 3f64.ln(), 1e-12).map_err(e)?;
    let bound = 2.0 / std::f64::consts::E + tail;
    let closed = 2.0 / std::f64::consts::E + 1.0 / 3f64.ln();
    check(
        code == 0
            && verdict == "DRI_verified"
            && grid_m1 <= bound
            && exact_m1 <= bound
            && (bound - closed).abs() < 1e-9,
        format!("exit {code}, verdict {verdict}, mesh-1 upper sum {exact_m1:.6} (grid {grid_m1:.6}) <= {bound:.6}"),
    )
}

fn mesh_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut violations = 0;
    for _ in 0..1000 {
        // Everything dyadic, so every sum is exact in binary.
        let n = rng.gen_range(1..=24);
        let mut breaks = vec![rng.gen_range(-128i32..=64) as f64 / 16.0];
        for _ in 0..n {
            let last = *breaks.last().unwrap();
            breaks.push(last + rng.gen_range(1..=32) as f64 / 16.0);
        }
        let values = (0..n).map(|_| rng.gen_range(0..=64) as f64 / 8.0).collect();
        let f = StepFunction::new(breaks, values).map_err(e)?;
        let delta = rng.gen_range(4..=64) as f64 / 16.0;
        let delta_p = rng.gen_range(4..=64) as f64 / 16.0;
        let x = rng.gen_range(-256..=256) as f64 / 64.0;
        let x_p = rng.gen_range(-256..=256) as f64 / 64.0;
        if !mesh_inequality_check(&f, delta, delta_p, x, x_p).map_err(e)?.pass {
            violations += 1;
        }
    }
    check(
        violations == 0,
        format!("1000 random step functions, {violations} violations"),
    )
}

fn tail_moment_bounds() -> Outcome {
    let catalog = [
        DensitySpec::exponential(1.0).map_err(e)?,
        DensitySpec::uniform(0.0, 1.0).map_err(e)?,
        DensitySpec::gamma(2.0, 1.0).map_err(e)?,
        DensitySpec::gamma(0.5, 1.0).map_err(e)?,
        DensitySpec::pareto(0.6, 1.0).map_err(e)?,
        DensitySpec::gaussian(0.0, 1.0).map_err(e)?,
        DensitySpec::sqrt_singular(),
    ];
    let mut violations = 0;
    let mut checks = 0;
    let mut names = Vec::new();
    for spec in &catalog {
        let r = tail_moment_suite(spec, 8, 100).map_err(e)?;
        violations += r.violations.len();
        checks += r.checks;
        names.push(format!("{}:{}", spec.name(), if r.pass { "ok" } else { "FAIL" }));
    }
    check(
        violations == 0,
        format!(
            "{checks} checks over {} densities, {violations} violations [{}]",
            catalog.len(),
            names.join(", ")
        ),
    )
}

fn block_bound() -> Outcome {
    let spec = DensitySpec::uniform(0.0, 1.0).map_err(e)?;
    let chain = build_envelope_chain(&spec, 3, &ChainOptions::for_spec(&spec, 3)).map_err(e)?;
    let a = default_a_grid();
    let seed_ok = seed_check(&chain, &a)
        .map_err(e)?
        .iter()
        .all(|(_, l, r)| *l <= r + QUAD_SLACK);
    let h1 = &chain.h_bars[0];
    let r1 = block_bound_check(1, h1, &chain.powers[0], &chain.powers[1], &a).map_err(e)?;
    let r2 = block_bound_check(2, h1, &chain.powers[1], &chain.powers[2], &a).map_err(e)?;
    check(
        seed_ok && r1.hypothesis_holds && r1.pass && r2.hypothesis_holds && r2.pass && a.len() == 41,
        format!(
            "seed {seed_ok}; l=1 hypothesis {} conclusion {:?}; l=2 hypothesis {} conclusion {:?}",
            r1.hypothesis_holds, r1.conclusion_holds, r2.hypothesis_holds, r2.conclusion_holds
        ),
    )
}

fn regularization_chain() -> Outcome {
    let spec = DensitySpec::pareto(0.6, 1.0).map_err(e)?;
    let chain = build_envelope_chain(&spec, 6, &ChainOptions::for_spec(&spec, 6)).map_err(e)?;
    let Some(j) = chain.l1_index else {
        return Err("no finite L1 norm by j = 6".into());
    };
    let Some(n) = chain.n_star else {
        return Err(format!("L1 finite at j = {j} but no finite weighted integral"));
    };
    let eps = spec.epsilon().unwrap();
    let w = weighted_sum_check(&spec, &chain, n, eps).map_err(e)?;
    let slopes: Vec<String> = chain
        .tail_exponents()
        .iter()
        .map(|s| s.map_or("-".into(), |v| format!("{v:.3}")))
        .collect();
    check(
        j <= 6 && chain.strictly_improving() && w.finite && w.pass && w.direct.as_f64() <= w.bound.as_f64(),
        format!(
            "slopes [{}], L1 finite at j={j}, k=2^{n}={}: direct {:.4} <= bound {:.4}",
            slopes.join(", "),
            w.k,
            w.direct.as_f64(),
            w.bound.as_f64()
        ),
    )
}

fn boundedness() -> Outcome {
    let spec = DensitySpec::sqrt_singular();
    let b = boundedness_index(&spec, 8).map_err(e)?;
    // sup f_2 = ∫_0^x f(y) f(x−y) dy for x ≤ 1, with y = x sin²θ.
    let x = 0.5;
    let oracle = quad::integrate(
        |t| {
            let (s, c) = t.sin_cos();
            let y = x * s * s;
            spec.eval(y) * spec.eval(x - y) * 2.0 * x * s * c
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        1e-12,
    )
    .map_err(e)?;
    let sup2 = b
        .sups
        .iter()
        .find(|(k, _)| *k == 2)
        .map(|(_, s)| s[2])
        .unwrap_or(f64::NAN);
    let fexp = b.fourier_exponent.unwrap_or(f64::NAN);
    check(
        b.k0 == 2
            && (oracle - std::f64::consts::FRAC_PI_4).abs() < 1e-9
            && (sup2 / oracle - 1.0).abs() < 0.01
            && (fexp + 0.5).abs() <= 0.1,
        format!(
            "k0 = {}, sampled sup f_2 = {sup2:.5} vs pi/4 = {oracle:.5}, Fourier exponent {fexp:.3}",
            b.k0
        ),
    )
}

fn local_clt() -> Outcome {
    let n = [2, 4, 8, 16];
    let u = local_clt_error(&DensitySpec::uniform(0.0, 1.0).map_err(e)?, &n, 256).map_err(e)?;
    let g = local_clt_error(&DensitySpec::gaussian(0.0, 1.0).map_err(e)?, &n, 256).map_err(e)?;
    let dec = u.windows(2).all(|w| w[1].1 < w[0].1);
    let e16 = u[3].1;
    let gmax = g.iter().map(|p| p.1).fold(0.0, f64::max);
    check(
        dec && e16 < 0.02 && gmax <= 1e-6,
        format!(
            "uniform errors [{}], gaussian max {gmax:.1e}",
            u.iter()
                .map(|(n, v)| format!("{n}:{v:.2e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn monte_carlo_vs_series() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (spec, n) in [
        (DensitySpec::exponential(1.0).map_err(e)?, 200),
        (DensitySpec::uniform(0.0, 1.0).map_err(e)?, 100),
    ] {
        let s = renewal_density(&spec, n, (0.0, 30.0), 1.0 / 128.0, REMAINDER_TOL).map_err(e)?;
        for (x, d) in [(10.0, 0.5), (20.0, 0.25)] {
            let (v, band) = s.window_integral(x, d);
            let w = simulate_renewal_window(&spec, x, d, 100_000, 7).map_err(e)?;
            let (lo, hi) = w.three_sigma();
            let inside = v + band >= lo && v <= hi;
            ok &= inside;
            details.push(format!(
                "{} ({x},{d}): series {v:.5} vs MC [{lo:.5},{hi:.5}]",
                spec.name()
            ));
        }
    }
    let config = r#"{"schema": 1, "density": {"name": "uniform"}, "seed": 11}"#;
    let a = tempfile::tempdir().map_err(e)?;
    let b = tempfile::tempdir().map_err(e)?;
    cli(Command::Simulate, a.path(), config)?;
    cli(Command::Simulate, b.path(), config)?;
    let ra = std::fs::read(a.path().join("out/report.json")).map_err(e)?;
    let rb = std::fs::read(b.path().join("out/report.json")).map_err(e)?;
    let same = ra == rb;
    details.push(format!("byte-identical reports: {same}"));
    check(ok && same, details.join("; "))
}

fn bootstrap() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for spec in [
        DensitySpec::uniform(0.0, 1.0).map_err(e)?,
        DensitySpec::exponential(1.0).map_err(e)?,
    ] {
        let r = bootstrap_check(&spec, 2, 1.0).map_err(e)?;
        ok &= r.pass && (r.factor - 6.0 * (1.0 + r.c)).abs() < 1e-12;
        details.push(format!(
            "{}: S_3 {:.4} <= {:.3} * S_2 {:.4}",
            spec.name(),
            r.sum_k_plus_1.as_f64(),
            r.factor,
            r.sum_k.as_f64()
        ));
    }
    check(ok, details.join("; "))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("exponential renewal oracle", exponential_renewal),
        ("uniform renewal oracle", uniform_renewal),
        ("heavy-tail renewal constant", heavy_tail_constant),
        ("log counterexample is d.R.i.", log_counterexample),
        ("mesh inequality property suite", mesh_inequality),
        ("tail and moment bound suite", tail_moment_bounds),
        ("block bound check", block_bound),
        ("regularization chain", regularization_chain),
        ("boundedness index", boundedness),
        ("local CLT probe", local_clt),
        ("Monte Carlo vs series", monte_carlo_vs_series),
        ("bootstrap inequality", bootstrap),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.2}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
