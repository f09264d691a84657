//! Renewal densities `u = Σ_{n≥1} f_n`, their defect limits, the
//! heavy-tailed renewal constant and a Monte Carlo renewal simulator.

use crate::bounds::{build_envelope_chain, ChainOptions};
use crate::convolution::convolve;
use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, DEFAULT_MAX_POINTS};
use crate::quad;
use crate::riemann::fit_slope;
use crate::special::{heavy_tail_constant, heavy_tail_constant_reflection};
use crate::Extended;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Default certified bound required on the series remainder.
pub const REMAINDER_TOL: f64 = 1e-4;

/// Number of leading partial sums kept for defect computations.
pub const KEEP_PARTIAL: usize = 32;

/// Per-path step cap for the simulator.
pub const STEP_CAP: u64 = 100_000_000;

/// Paths simulated per random stream.
const CHUNK: usize = 4096;

/// Repeated convolution with a fixed kernel on `[0, X]`, the kernel
/// transformed once.
struct KernelFft {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernel: Vec<Complex64>,
    len: usize,
    spacing: f64,
}

impl KernelFft {
    fn new(kernel: &[f64], spacing: f64) -> Self {
        let len = kernel.len();
        let n = (2 * len - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut k: Vec<Complex64> = kernel.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        k.resize(n, Complex64::new(0.0, 0.0));
        fwd.process(&mut k);
        Self {
            fwd,
            inv,
            kernel: k,
            len,
            spacing,
        }
    }

    /// `h · (v * kernel)` on the first `len` samples, negatives clamped.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.kernel.len();
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        self.fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        self.inv.process(&mut buf);
        let scale = self.spacing / n as f64;
        buf.iter().take(self.len).map(|c| (c.re * scale).max(0.0)).collect()
    }
}

/// `E e^{−λX} = ∫_0^∞ λ e^{−λt} P(X ≤ t) dt`, rounded up by the truncated tail.
pub fn laplace_transform(spec: &DensitySpec, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    const CUT: f64 = 40.0;
    let t_max = CUT / lambda;
    let lo = spec.support().0.max(0.0).min(t_max);
    let body = quad::integrate(|t| lambda * (-lambda * t).exp() * spec.cdf(t), lo, t_max, 1e-13)?;
    Ok((body + (-CUT).exp() + 1e-12).min(1.0))
}

/// Chernoff bound on `Σ_{m≥1} P(S_m ≤ x)`, the expected number of
/// renewals in `(0, x]`: `inf_λ e^{λx} φ(λ) / (1 − φ(λ))`.
pub fn expected_count_bound(spec: &DensitySpec, x: f64) -> Result<f64> {
    let eval = |s: f64| -> f64 {
        let lambda = s.exp();
        match laplace_transform(spec, lambda) {
            Ok(phi) if phi < 1.0 => (lambda * x).exp() * phi / (1.0 - phi),
            _ => f64::INFINITY,
        }
    };
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=60 {
        let s = -15.0 + 0.35 * i as f64;
        let v = eval(s);
        if v < best.1 {
            best = (s, v);
        }
    }
    let (_, refined) = quad::golden_min(eval, best.0 - 0.35, best.0 + 0.35, 60);
    Ok(best.1.min(refined))
}

/// `u_N = Σ_{n=1}^{N} f_n` on `[0, X]` with a certified remainder bound.
#[derive(Clone, Debug)]
pub struct RenewalSeries {
    pub density: String,
    pub n_terms: usize,
    /// `u_N` on the reported window.
    pub grid: GridFunction,
    /// Bound on `sup_{[0, X]} Σ_{n>N} f_n`.
    pub remainder_bound: f64,
    /// `sup_{[0, X]} f_N` from the grid.
    pub sup_last_term: f64,
    /// Bound on the expected number of renewals in `(0, X]`.
    pub count_bound: f64,
    pub window: (f64, f64),
    pub mu: Extended,
    pub warnings: Vec<String>,
    /// `Σ_{n≤k} f_n` for `k = 1, …, min(N, KEEP_PARTIAL)`.
    partial: Vec<GridFunction>,
    /// The individual terms `f_n` for the same range of `n`.
    terms: Vec<GridFunction>,
}

/// JSON-friendly summary of a [`RenewalSeries`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalSummary {
    pub density: String,
    pub n_terms: usize,
    pub window: (f64, f64),
    pub spacing: f64,
    pub remainder_bound: f64,
    pub sup_last_term: f64,
    pub count_bound: f64,
    pub remainder_method: String,
    pub mu: Extended,
    pub warnings: Vec<String>,
}

impl RenewalSeries {
    pub fn summary(&self) -> RenewalSummary {
        RenewalSummary {
            density: self.density.clone(),
            n_terms: self.n_terms,
            window: self.window,
            spacing: self.grid.spacing(),
            remainder_bound: self.remainder_bound,
            sup_last_term: self.sup_last_term,
            count_bound: self.count_bound,
            remainder_method: "sup f_N on the window times a Chernoff bound on the expected renewal count".into(),
            mu: self.mu,
            warnings: self.warnings.clone(),
        }
    }

    /// `Σ_{n≤k} f_n` for `k ≤ min(N, KEEP_PARTIAL)`; `k = 0` is zero.
    pub fn partial_sum(&self, k: usize) -> Result<GridFunction> {
        if k == 0 {
            return self.grid.map_values(|_| 0.0);
        }
        self.partial
            .get(k - 1)
            .cloned()
            .ok_or_else(|| Error::InvalidParameter(format!("partial sums kept up to {}", self.partial.len())))
    }

    /// The term `f_n` for `n ≤ min(N, KEEP_PARTIAL)`.
    pub fn term(&self, n: usize) -> Result<&GridFunction> {
        n.checked_sub(1)
            .and_then(|i| self.terms.get(i))
            .ok_or_else(|| Error::InvalidParameter(format!("terms kept for n = 1..{}", self.terms.len())))
    }

    /// `(∫_x^{x+δ} u_N + atom at 0 if inside, remainder · δ)`.
    pub fn window_integral(&self, x: f64, delta: f64) -> (f64, f64) {
        let atom = if x <= 0.0 && x + delta > 0.0 { 1.0 } else { 0.0 };
        (
            atom + self.grid.integrate(x, x + delta).as_f64(),
            self.remainder_bound * delta,
        )
    }
}

/// Accumulates `u_N` by repeated convolution with `f` on `[0, X]`.
///
/// The remainder `Σ_{n>N} f_n(x) = Σ_{m≥1} (f_N * f_m)(x)` is at most
/// `sup_{[0,x]} f_N · Σ_{m≥1} P(S_m ≤ x)`. If this exceeds `tol` the window
/// is shrunk until it does not, with a warning.
pub fn renewal_density(
    spec: &DensitySpec,
    n_terms: usize,
    window: (f64, f64),
    h: f64,
    tol: f64,
) -> Result<RenewalSeries> {
    if !spec.is_non_negative_support() {
        return Err(Error::NegativeSupport);
    }
    if n_terms == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if window.0 != 0.0 || !(window.1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "renewal window must be [0, X] with X > 0, got [{}, {}]",
            window.0, window.1
        )));
    }
    let base = GridFunction::discretize(spec, window, h, DEFAULT_MAX_POINTS)?;
    let kernel = KernelFft::new(base.values(), h);
    let mut term = base.values().to_vec();
    let mut total = term.clone();
    let mut partial = Vec::new();
    let mut terms = Vec::new();
    let keep = n_terms.min(KEEP_PARTIAL);
    let wrap = |v: Vec<f64>| GridFunction::new(0.0, h, v);
    for n in 1..=n_terms {
        if n > 1 {
            term = kernel.apply(&term);
            for (t, v) in total.iter_mut().zip(&term) {
                *t += v;
            }
        }
        if n <= keep {
            partial.push(wrap(total.clone())?);
            terms.push(wrap(term.clone())?);
        }
    }
    let mut warnings = Vec::new();
    // Remainder on [0, X'], shrinking X' until it is certified.
    let prefix_sup: Vec<f64> = term
        .iter()
        .scan(0.0f64, |m, &v| {
            *m = m.max(v);
            Some(*m)
        })
        .collect();
    let mut last = total.len() - 1;
    let mut rem;
    let mut count;
    loop {
        let x = last as f64 * h;
        count = expected_count_bound(spec, x)?;
        rem = prefix_sup[last] * count;
        if rem <= tol || last == 0 {
            break;
        }
        last = ((last as f64) * 0.9).floor() as usize;
    }
    if rem > tol {
        return Err(Error::InvalidParameter(format!(
            "remainder {rem:.3e} above {tol:.1e} on every window; increase N"
        )));
    }
    if last + 1 < total.len() {
        warnings.push(format!(
            "window truncated from {} to {} so that the remainder is certified below {tol:.1e}",
            window.1,
            last as f64 * h
        ));
        total.truncate(last + 1);
        for g in partial.iter_mut().chain(terms.iter_mut()) {
            *g = g.restrict(0.0, last as f64 * h)?;
        }
    }
    let x_max = last as f64 * h;
    Ok(RenewalSeries {
        density: spec.name(),
        n_terms,
        grid: wrap(total)?,
        remainder_bound: rem,
        sup_last_term: prefix_sup[last],
        count_bound: count,
        window: (0.0, x_max),
        mu: spec.mean(),
        warnings,
        partial,
        terms,
    })
}

/// `u − Σ_{n<k} f_n` and its distance from `1/μ` on the far window.
#[derive(Clone, Debug)]
pub struct DefectReport {
    pub k: usize,
    pub grid: GridFunction,
    /// `1/μ`, zero when the mean is infinite.
    pub target: f64,
    pub far_window: (f64, f64),
    pub sup_deviation: f64,
}

/// Pointwise defect `u_N − Σ_{n<k} f_n`; the far window is the last third.
pub fn density_defect(series: &RenewalSeries, k: usize) -> Result<DefectReport> {
    if k == 0 || k > series.n_terms {
        return Err(Error::InvalidParameter(format!("k must be in 1..={}", series.n_terms)));
    }
    let sub = series.partial_sum(k - 1)?;
    let values: Vec<f64> = series
        .grid
        .values()
        .iter()
        .zip(sub.values())
        .map(|(u, s)| u - s)
        .collect();
    let grid = GridFunction::new(0.0, series.grid.spacing(), values)?;
    let target = match series.mu {
        Extended::Finite(m) => 1.0 / m,
        Extended::Infinite => 0.0,
    };
    let far_window = (2.0 * series.window.1 / 3.0, series.window.1);
    let sup_deviation = grid
        .xs()
        .zip(grid.values())
        .filter(|(x, _)| *x >= far_window.0)
        .map(|(_, v)| (v - target).abs())
        .fold(0.0, f64::max);
    Ok(DefectReport {
        k,
        grid,
        target,
        far_window,
        sup_deviation,
    })
}

/// One probe point of the heavy-tailed limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyTailProbe {
    pub x: f64,
    pub truncated_mean: f64,
    pub u: f64,
    pub defect: f64,
    /// `m(x) · defect(x)`.
    pub scaled: f64,
    /// `[m·defect, m·(defect + remainder)]`.
    pub band: (f64, f64),
    pub ratio_to_target: f64,
}

/// Empirical check of `f_k(x) = O(1/x)` by a log–log fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub k: usize,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub fit_window: (f64, f64),
    pub holds: bool,
}

/// `m(x) (u(x) − Σ_{n<k̄} f_n(x))` against `1 / (Γ(α) Γ(2 − α))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyTailReport {
    pub alpha: f64,
    pub target: f64,
    pub target_reflection: f64,
    pub kbar: usize,
    pub n_terms: usize,
    pub remainder_bound: f64,
    pub probes: Vec<HeavyTailProbe>,
    /// A true limit is claimed only for `α > 1/2`; below that the probes
    /// are reported as values only.
    pub limit_claimed: bool,
    pub decay: DecayCheck,
    pub inconclusive: bool,
    pub notes: Vec<String>,
}

/// First `k = 2^n` at which the envelope chain certifies a finite weighted sum.
pub fn resolve_kbar(spec: &DensitySpec) -> Result<usize> {
    let n_max = 6;
    let chain = build_envelope_chain(spec, n_max, &ChainOptions::for_spec(spec, n_max))?;
    chain
        .n_star
        .map(|n| 1usize << n)
        .ok_or_else(|| Error::Unresolved(1 << n_max))
}

/// Heavy-tailed renewal density check for a Pareto-type input.
pub fn heavy_tail_check(
    spec: &DensitySpec,
    n_terms: usize,
    probes: &[f64],
    kbar: usize,
    h: f64,
) -> Result<HeavyTailReport> {
    let alpha = match spec.kind() {
        crate::density::DensityKind::Pareto { alpha, .. } => *alpha,
        _ => {
            return Err(Error::InvalidParameter(
                "heavy_tail_check needs a Pareto density".into(),
            ));
        }
    };
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let x_max = probes.iter().cloned().fold(0.0, f64::max);
    if !(x_max > 0.0) {
        return Err(Error::InvalidParameter(
            "at least one positive probe point is needed".into(),
        ));
    }
    let window = (0.0, (1.05 * x_max / h).ceil() * h);
    let series = renewal_density(spec, n_terms, window, h, f64::INFINITY)?;
    let target = heavy_tail_constant(alpha);
    let sub = series.partial_sum(kbar.saturating_sub(1).min(KEEP_PARTIAL))?;
    let mut notes = Vec::new();
    if kbar > KEEP_PARTIAL + 1 {
        notes.push(format!(
            "kbar {kbar} exceeds kept partial sums; using k = {}",
            KEEP_PARTIAL + 1
        ));
    }
    let mut out = Vec::new();
    let mut inconclusive = false;
    for &x in probes {
        let m = spec.truncated_mean(x)?;
        let u = series.grid.eval(x);
        let defect = u - sub.eval(x);
        let scaled = m * defect;
        let band = (scaled, m * (defect + series.remainder_bound));
        if m * series.remainder_bound > 0.05 * target {
            inconclusive = true;
        }
        out.push(HeavyTailProbe {
            x,
            truncated_mean: m,
            u,
            defect,
            scaled,
            band,
            ratio_to_target: scaled / target,
        });
    }
    if alpha <= 0.5 {
        notes.push("alpha <= 1/2: only a liminf is available; probe values carry no convergence claim".into());
    }
    let decay = decay_check(spec, kbar.min(KEEP_PARTIAL), &series)?;
    Ok(HeavyTailReport {
        alpha,
        target,
        target_reflection: heavy_tail_constant_reflection(alpha),
        kbar,
        n_terms,
        remainder_bound: series.remainder_bound,
        probes: out,
        limit_claimed: alpha > 0.5 && decay.holds,
        decay,
        inconclusive,
        notes,
    })
}

/// Fits `log f_k` against `log x` on the last half-decade of the window.
pub fn decay_check(_spec: &DensitySpec, k: usize, series: &RenewalSeries) -> Result<DecayCheck> {
    let f = series.term(k)?;
    let hi = series.window.1;
    let lo = hi / 10f64.sqrt();
    let pts: Vec<(f64, f64)> = f
        .xs()
        .zip(f.values())
        .filter(|(x, v)| *x >= lo && **v > 0.0)
        .map(|(x, v)| (x.ln(), v.ln()))
        .collect();
    let fit = fit_slope(&pts);
    let holds = matches!(fit, Some((s, r2)) if s <= -1.0 + 0.05 && r2 >= 0.9);
    Ok(DecayCheck {
        k,
        slope: fit.map(|f| f.0),
        r2: fit.map(|f| f.1),
        fit_window: (lo, hi),
        holds,
    })
}

/// `(g ⋆ U)(x) = g(x) + (g * u_N)(x)` with its far-field comparison.
#[derive(Clone, Debug)]
pub struct KeyRenewalReport {
    pub grid: GridFunction,
    /// Mean of the last third of the window.
    pub far_value: f64,
    /// `(1/μ) ∫ g`, `None` for an infinite mean.
    pub target: Option<f64>,
}

pub fn key_renewal_apply(series: &RenewalSeries, g: &GridFunction) -> Result<KeyRenewalReport> {
    let h = series.grid.spacing();
    if (g.spacing() - h).abs() > 1e-9 * h {
        return Err(Error::SpacingMismatch(g.spacing(), h));
    }
    if g.origin().abs() > 1e-9 * h {
        return Err(Error::InvalidParameter("g must be sampled from x = 0".into()));
    }
    let conv = convolve(g, &series.grid)?;
    let n = series.grid.len();
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let gi = g.values().get(i).copied().unwrap_or(0.0);
            gi + conv.values()[i]
        })
        .collect();
    let grid = GridFunction::new(0.0, h, values)?;
    let start = 2 * n / 3;
    let far_value = grid.values()[start..].iter().sum::<f64>() / (n - start) as f64;
    let target = series.mu.finite().map(|mu| g.total_mass() / mu);
    Ok(KeyRenewalReport {
        grid,
        far_value,
        target,
    })
}

/// Monte Carlo estimate of `U([x, x + δ))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub x: f64,
    pub delta: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub paths: u64,
    pub seed: u64,
    /// Paths stopped by the step cap before leaving the window.
    pub capped_paths: u64,
}

impl WindowEstimate {
    /// `[estimate − 3σ, estimate + 3σ]`.
    pub fn three_sigma(&self) -> (f64, f64) {
        (
            self.estimate - 3.0 * self.std_error,
            self.estimate + 3.0 * self.std_error,
        )
    }
}

/// Walks `paths` renewal sequences and counts visits to `[x, x + δ)`,
/// including `S_0 = 0`. Chunk `c` of paths uses stream `c` of a ChaCha8
/// generator seeded with `seed`, so results do not depend on the thread count.
pub fn simulate_renewal_window(
    spec: &DensitySpec,
    x: f64,
    delta: f64,
    paths: u64,
    seed: u64,
) -> Result<WindowEstimate> {
    if paths == 0 {
        return Err(Error::InvalidParameter("paths must be at least 1".into()));
    }
    if !(delta > 0.0) || x < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need x >= 0 and delta > 0, got x={x}, delta={delta}"
        )));
    }
    if !spec.is_non_negative_support() {
        return Err(Error::NegativeSupport);
    }
    let end = x + delta;
    let chunks = paths.div_ceil(CHUNK as u64);
    let per_chunk: Vec<(f64, f64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let n = (paths - c * CHUNK as u64).min(CHUNK as u64);
            let (mut s1, mut s2, mut capped) = (0.0, 0.0, 0u64);
            for _ in 0..n {
                let mut s = 0.0;
                let mut count = 0u64;
                let mut steps = 0u64;
                loop {
                    if s >= x && s < end {
                        count += 1;
                    }
                    if s >= end {
                        break;
                    }
                    if steps >= STEP_CAP {
                        capped += 1;
                        break;
                    }
                    s += spec.draw(&mut rng);
                    steps += 1;
                }
                let c = count as f64;
                s1 += c;
                s2 += c * c;
            }
            (s1, s2, capped)
        })
        .collect();
    let (s1, s2, capped) = per_chunk
        .iter()
        .fold((0.0, 0.0, 0u64), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let n = paths as f64;
    let mean = s1 / n;
    let var = if paths > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(WindowEstimate {
        x,
        delta,
        estimate: mean,
        std_error: (var / n).sqrt(),
        paths,
        seed,
        capped_paths: capped,
    })
}

/// Slope of `log m(x)` against `log x` over `[x_hi / 10, x_hi]`.
pub fn truncated_mean_slope(spec: &DensitySpec, x_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = (0..=50)
        .map(|i| {
            let x = x_hi * 10f64.powf(-1.0 + i as f64 / 50.0);
            Ok((x.ln(), spec.truncated_mean(x)?.ln()))
        })
        .collect::<Result<_>>()?;
    fit_slope(&pts)
        .map(|(s, _)| s)
        .ok_or_else(|| Error::Degenerate("truncated-mean fit".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp1() -> DensitySpec {
        DensitySpec::exponential(1.0).unwrap()
    }

    fn unif() -> DensitySpec {
        DensitySpec::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn laplace_closed_forms() {
        for l in [0.1, 1.0, 3.0] {
            assert_relative_eq!(laplace_transform(&exp1(), l).unwrap(), 1.0 / (1.0 + l), epsilon = 1e-10);
            let u = (1.0 - (-l).exp()) / l;
            assert_relative_eq!(laplace_transform(&unif(), l).unwrap(), u, epsilon = 1e-10);
        }
    }

    #[test]
    fn count_bound_dominates_poisson_mean() {
        // Poisson process: expected count in (0, x] is x.
        for x in [1.0, 10.0, 30.0] {
            let b = expected_count_bound(&exp1(), x).unwrap();
            assert!(b >= x && b < 3.0 * x + 5.0, "x={x}: {b}");
        }
    }

    #[test]
    fn exponential_renewal_is_flat() {
        let s = renewal_density(&exp1(), 200, (0.0, 30.0), 1.0 / 128.0, REMAINDER_TOL).unwrap();
        assert!(s.remainder_bound <= 1e-4);
        assert_eq!(s.window.1, 30.0);
        let dev = s
            .grid
            .xs()
            .zip(s.grid.values())
            .filter(|(x, _)| *x >= 2.0)
            .map(|(_, v)| (v - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-3, "{dev}");
        let d = density_defect(&s, 1).unwrap();
        assert!(d.sup_deviation <= 1e-3);
    }

    #[test]
    fn uniform_renewal_matches_exponential_then_two() {
        let h = 1.0 / 256.0;
        let s = renewal_density(&unif(), 100, (0.0, 30.0), h, REMAINDER_TOL).unwrap();
        for (x, v) in s.grid.xs().zip(s.grid.values()) {
            if x > h && x < 1.0 - h {
                assert!((v - x.exp()).abs() <= 1e-3, "x={x}: {v}");
            }
        }
        assert_relative_eq!(s.grid.eval(0.5), 0.5f64.exp(), epsilon = 1e-3);
        for (x, v) in s.grid.xs().zip(s.grid.values()) {
            if x >= 20.0 {
                assert!((v - 2.0).abs() <= 0.02, "x={x}: {v}");
            }
        }
        let d = density_defect(&s, 3).unwrap();
        assert!(d.sup_deviation <= 0.02);
    }

    #[test]
    fn partial_sums_increase_and_bracket() {
        let h = 1.0 / 64.0;
        let a = renewal_density(&unif(), 10, (0.0, 8.0), h, f64::INFINITY).unwrap();
        let b = renewal_density(&unif(), 20, (0.0, 8.0), h, f64::INFINITY).unwrap();
        for (va, vb) in a.grid.values().iter().zip(b.grid.values()) {
            assert!(va <= vb);
            assert!(vb <= &(va + a.remainder_bound));
        }
    }

    #[test]
    fn sqrt_singular_defect_is_finite() {
        let s = renewal_density(
            &DensitySpec::sqrt_singular(),
            120,
            (0.0, 24.0),
            1.0 / 256.0,
            REMAINDER_TOL,
        )
        .unwrap();
        let d = density_defect(&s, 2).unwrap();
        // 1/μ = 3.
        assert!(d.grid.values().iter().all(|v| v.is_finite()));
        assert!(d.sup_deviation < 0.05, "{}", d.sup_deviation);
    }

    #[test]
    fn key_renewal_examples() {
        let h = 1.0 / 128.0;
        let s = renewal_density(&exp1(), 200, (0.0, 30.0), h, REMAINDER_TOL).unwrap();
        let n = (1.0 / h) as usize + 1;
        let ind: Vec<f64> = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 } else { 1.0 }).collect();
        let g = GridFunction::new(0.0, h, ind).unwrap();
        let r = key_renewal_apply(&s, &g).unwrap();
        assert_relative_eq!(r.far_value, 1.0, epsilon = 2e-3);
        assert_relative_eq!(r.target.unwrap(), 1.0, epsilon = 1e-12);
        let zero = g.map_values(|_| 0.0).unwrap();
        assert!(key_renewal_apply(&s, &zero)
            .unwrap()
            .grid
            .values()
            .iter()
            .all(|v| *v == 0.0));

        let su = renewal_density(&unif(), 100, (0.0, 30.0), h, REMAINDER_TOL).unwrap();
        let f2 = su.term(2).unwrap().restrict(0.0, 2.0).unwrap();
        let r = key_renewal_apply(&su, &f2).unwrap();
        assert_relative_eq!(r.far_value, 2.0, epsilon = 0.02);
    }

    #[test]
    fn simulator_examples_and_determinism() {
        let e = simulate_renewal_window(&exp1(), 0.0, 1e-9, 1000, 7).unwrap();
        assert_relative_eq!(e.estimate, 1.0, epsilon = 1e-3);
        let w = simulate_renewal_window(&exp1(), 10.0, 0.5, 100_000, 42).unwrap();
        assert!((w.estimate - 0.5).abs() <= 3.0 * w.std_error, "{w:?}");
        let w2 = simulate_renewal_window(&exp1(), 10.0, 0.5, 100_000, 42).unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), serde_json::to_string(&w2).unwrap());
        let u = simulate_renewal_window(&unif(), 20.0, 0.25, 100_000, 42).unwrap();
        assert!((u.estimate - 0.5).abs() <= 3.0 * u.std_error, "{u:?}");
    }

    #[test]
    fn vanishing_terms_far_out() {
        let s = renewal_density(&exp1(), 8, (0.0, 60.0), 1.0 / 32.0, f64::INFINITY).unwrap();
        for n in 1..=8 {
            let f = s.term(n).unwrap();
            let far = f
                .xs()
                .zip(f.values())
                .filter(|(x, _)| *x >= 50.0)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max);
            assert!(far < 1e-6, "n={n}: {far}");
        }
    }

    #[test]
    fn truncated_mean_scaling() {
        for alpha in [0.3, 0.6, 0.9] {
            let slope = truncated_mean_slope(&DensitySpec::pareto(alpha, 1.0).unwrap(), 1e6).unwrap();
            assert!((slope - (1.0 - alpha)).abs() <= 0.05, "alpha={alpha}: {slope}");
        }
    }

    #[test]
    fn heavy_tail_targets() {
        assert_relative_eq!(heavy_tail_constant(1.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(heavy_tail_constant(0.5), 0.636_619_772_367_581_3, epsilon = 1e-12);
    }
}
