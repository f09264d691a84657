//! Executable form of the argument that bounded convolution powers with a
//! fractional moment are directly Riemann integrable.
//!
//! The central object is the restricted convolution operator
//!
//! ```text
//! (Φ_n h)(x) = 2 ∫_{|z| > (|x| − 3)/2} f_n(z) h(x − z) dz
//! ```
//!
//! iterated from a Feller-type seed: `h̄_1 = D g_1(|·|/2)` and
//! `h̄_{j+1} = Φ_{2^j}(h̄_j)`. The envelopes feed the weighted mesh-1 upper
//! sums `Σ_m sup_{[m, m+1)} (1 + |z|^ε) f_k(z)`.

use crate::convolution::{convolve, convolve_direct, moment_tail_envelope, ConvolutionPower, PowerOptions};
use crate::density::{DensitySpec, TailClass};
use crate::error::{Error, Result};
use crate::grid::{Decay, GridFunction, TailEnvelope, DEFAULT_MAX_POINTS};
use crate::quad;
use crate::riemann::fit_slope;
use crate::Extended;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Absolute slack for inequalities whose sides come from quadrature.
pub const QUAD_SLACK: f64 = 1e-6;

/// Relative safety deflation applied to the grid minimum defining `B`.
pub const B_DEFLATION: f64 = 0.01;

/// Fitted decay exponents must beat the integrability threshold by this much.
pub const FIT_MARGIN: f64 = 0.05;

/// Minimum `R²` for a log–log tail fit to be trusted.
pub const FIT_MIN_R2: f64 = 0.9;

/// Fraction of the half-window used for tail fits.
const FIT_OUTER: f64 = 0.3;

/// Values at or below this are treated as exact zeros in tail fits.
const TINY: f64 = 1e-300;

fn lattice_index(x: f64, s: f64) -> Result<i64> {
    let u = x / s;
    let r = u.round();
    if (u - r).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "grid origin {x} is not on the lattice of spacing {s}"
        )));
    }
    Ok(r as i64)
}

fn same_spacing(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    let (ha, hb) = (a.spacing(), b.spacing());
    if (ha - hb).abs() > 1e-9 * ha.max(hb) {
        return Err(Error::SpacingMismatch(ha, hb));
    }
    Ok(ha)
}

/// Value of a grid function on its own lattice, extended by its envelope.
fn lattice_value(h: &GridFunction, t: i64) -> f64 {
    if t >= 0 && (t as usize) < h.len() {
        return h.values()[t as usize];
    }
    let y = h.origin() + t as f64 * h.spacing();
    let (lo, hi) = h.support();
    if y < lo || y > hi {
        0.0
    } else {
        h.envelope.value(y)
    }
}

/// `s Σ_{j : |z_j| > (|x_i| − 3)/2} f_j h(x_i − z_j)^p` for every `x_i` of `h`.
fn restricted_sums(h: &GridFunction, f: &GridFunction, p: f64) -> Result<Vec<f64>> {
    let s = same_spacing(h, f)?;
    let q = lattice_index(f.origin(), s)?;
    let (n, m) = (h.len() as i64, f.len() as i64);
    let tmin = -(m - 1) - q;
    let tmax = n - 1 - q;
    let lo = tmin.min(0);
    let ext: Vec<f64> = (lo..=tmax.max(n - 1))
        .map(|t| {
            let v = lattice_value(h, t);
            if p == 1.0 {
                v
            } else {
                v.powf(p)
            }
        })
        .collect();
    let zs: Vec<f64> = f.xs().collect();
    let fv = f.values();
    let h0 = h.origin();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let x = h0 + i as f64 * s;
            let r = (x.abs() - 3.0) / 2.0;
            let mut acc = 0.0;
            for j in 0..m as usize {
                if zs[j].abs() > r && fv[j] != 0.0 {
                    let t = i - j as i64 - q;
                    acc += fv[j] * ext[(t - lo) as usize];
                }
            }
            acc * s
        })
        .collect())
}

/// `sup_{|y| ≥ d} h(y)`, using the samples and the envelope beyond them.
fn sup_beyond(h: &GridFunction, d: f64) -> f64 {
    let mut m = 0.0f64;
    for (x, v) in h.xs().zip(h.values()) {
        if x.abs() >= d {
            m = m.max(*v);
        }
    }
    let reach = h.origin().abs().min(h.last_x().abs()).max(d);
    m.max(h.envelope.value(reach))
}

/// Applies `Φ_n` to a non-negative `h` sampled on the lattice of `f_n`.
///
/// Mass of `f_n` outside its grid adds `2 · mass · sup h` over the
/// distances it can reach, so the output stays an upper bound of the
/// exact operator applied to the exact `f_n`.
pub fn phi_apply(n: usize, h: &GridFunction, f_n: &ConvolutionPower) -> Result<GridFunction> {
    if n != f_n.k {
        return Err(Error::InvalidParameter(format!(
            "phi_apply: n = {n} but the power has k = {}",
            f_n.k
        )));
    }
    if h.values().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "phi_apply needs a bounded non-negative h".into(),
        ));
    }
    let raw = restricted_sums(h, &f_n.grid, 1.0)?;
    let f = &f_n.grid;
    let s = f.spacing();
    let (slo, shi) = f.support();
    let right = f.last_x() + 0.5 * s;
    let left = f.origin() - 0.5 * s;
    let out = f_n.outside_mass;
    let values: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = 2.0 * r;
            if out > 0.0 {
                let x = h.x(i);
                let mut d = f64::INFINITY;
                if shi > right {
                    d = d.min(right - x);
                }
                if slo < left {
                    d = d.min(x - left);
                }
                if d.is_finite() {
                    v += 2.0 * out * sup_beyond(h, d.max(0.0));
                }
            }
            v
        })
        .collect();
    let sup_h = h.lp_norm(None).as_f64();
    let crude = TailEnvelope::flat(h.origin().abs().min(h.last_x().abs()), 2.0 * sup_h);
    Ok(GridFunction::new(h.origin(), h.spacing(), values)?.with_envelope(crude, (f64::NEG_INFINITY, f64::INFINITY)))
}

/// The unrestricted `2 (f_n * h)` on the samples of `h`, computed spectrally.
///
/// Dropping the indicator only enlarges the integrand, so on the part of
/// the window where `h` is fully sampled this dominates [`phi_apply`].
pub fn phi_spectral_upper(h: &GridFunction, f_n: &ConvolutionPower) -> Result<GridFunction> {
    let s = same_spacing(h, &f_n.grid)?;
    let q = lattice_index(f_n.grid.origin(), s)?;
    let full = convolve(&f_n.grid, h)?;
    let values = (0..h.len() as i64)
        .map(|i| {
            let t = i - q;
            if t >= 0 && (t as usize) < full.len() {
                2.0 * full.values()[t as usize].max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    GridFunction::new(h.origin(), s, values)
}

/// Outcome of the pointwise Jensen inequality for `Φ_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JensenCheck {
    pub p: f64,
    pub points: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` over points with a positive right-hand side.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Checks `|Φ_n h(x)|^p ≤ 2^p ∫_{|z|>(|x|−3)/2} f_n(z) |h(x−z)|^p dz` at
/// every sample of `h`.
pub fn jensen_check(h: &GridFunction, f_n: &ConvolutionPower, p: f64) -> Result<JensenCheck> {
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("Jensen needs p >= 1, got {p}")));
    }
    let abs_h = h.map_values(f64::abs)?;
    let one = restricted_sums(&abs_h, &f_n.grid, 1.0)?;
    let pth = restricted_sums(&abs_h, &f_n.grid, p)?;
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    for (a, b) in one.iter().zip(&pth) {
        let lhs = (2.0 * a).powf(p);
        let rhs = 2f64.powf(p) * b;
        if lhs > rhs * (1.0 + 1e-12) + 1e-300 {
            violations += 1;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
    }
    Ok(JensenCheck {
        p,
        points: one.len(),
        violations,
        max_ratio,
        pass: violations == 0,
    })
}

/// Windows and spacing used when materializing the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    /// `h̄_j` is sampled on `[−half_width, half_width]`.
    pub half_width: f64,
    pub spacing: f64,
    /// Convolution powers are kept on `[−power_reach, power_reach]`
    /// intersected with the support.
    pub power_reach: f64,
    pub max_points: usize,
}

impl ChainOptions {
    /// Windows scaled to the tail class of `spec`.
    pub fn for_spec(spec: &DensitySpec, n_max: usize) -> Self {
        let (lo, hi) = spec.support();
        let grow = 2f64.powi(n_max as i32);
        let (half_width, spacing, power_reach) = match spec.tail_class() {
            TailClass::Compact => {
                let r = lo.abs().max(hi.abs());
                let w = hi - lo;
                (grow * r + 4.0, snap_spacing(w / 64.0), 0.5 * grow * r + w)
            }
            TailClass::Exponential => (200.0, 0.125, 400.0),
            TailClass::PowerLaw { .. } | TailClass::LogPower => (4000.0, 1.0, 32000.0),
        };
        Self {
            half_width: (half_width / spacing).ceil() * spacing,
            spacing,
            power_reach,
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

// Largest power of two not exceeding `s`, so lattices nest exactly.
fn snap_spacing(s: f64) -> f64 {
    2f64.powf(s.log2().floor())
}

/// How the tail of a chain member decays beyond the fitted window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailFit {
    /// Vanishes on the outer part of the window.
    Compact,
    /// `log h̄ ≈ slope · log|x|` on the outer window, both sides.
    Power { slope: f64, r2: f64 },
    /// Fit rejected; only envelope bookkeeping continues.
    Unknown { r2: Option<f64> },
}

impl TailFit {
    /// Slope used for comparisons; compact tails count as `−∞`.
    pub fn slope(&self) -> Option<f64> {
        match self {
            TailFit::Compact => Some(f64::NEG_INFINITY),
            TailFit::Power { slope, .. } => Some(*slope),
            TailFit::Unknown { .. } => None,
        }
    }

    /// Whether `∫ (1 + |x|)^w h` converges according to the fit.
    pub fn integrable_with_weight(&self, w: f64) -> bool {
        match self.slope() {
            Some(s) => s < -(1.0 + w + FIT_MARGIN),
            None => false,
        }
    }
}

/// Least-squares fit of the outer tails of `g`; the shallower side wins.
pub fn fit_tail(g: &GridFunction) -> TailFit {
    let reach = g.origin().abs().min(g.last_x().abs());
    let inner = (1.0 - FIT_OUTER) * reach;
    let mut sides: Vec<Vec<(f64, f64)>> = vec![Vec::new(), Vec::new()];
    let mut any_positive = false;
    for (x, v) in g.xs().zip(g.values()) {
        if x.abs() < inner || x.abs() > reach || x == 0.0 {
            continue;
        }
        if *v > TINY {
            any_positive = true;
            sides[(x > 0.0) as usize].push((x.abs().ln(), v.ln()));
        }
    }
    if !any_positive {
        return TailFit::Compact;
    }
    let mut worst: Option<(f64, f64)> = None;
    for pts in sides.iter().filter(|p| !p.is_empty()) {
        if pts.len() < 8 {
            return TailFit::Unknown { r2: None };
        }
        match fit_slope(pts) {
            Some((slope, r2)) => {
                worst = Some(match worst {
                    None => (slope, r2),
                    Some((s0, r0)) => (s0.max(slope), r0.min(r2)),
                })
            }
            None => return TailFit::Unknown { r2: None },
        }
    }
    match worst {
        Some((slope, r2)) if r2 >= FIT_MIN_R2 => TailFit::Power { slope, r2 },
        Some((_, r2)) => TailFit::Unknown { r2: Some(r2) },
        None => TailFit::Unknown { r2: None },
    }
}

/// Envelope extending a fitted tail beyond the sampled window.
fn fitted_envelope(g: &GridFunction, fit: &TailFit) -> Option<TailEnvelope> {
    let reach = g.origin().abs().min(g.last_x().abs());
    match fit {
        TailFit::Compact => Some(TailEnvelope::zero(reach)),
        TailFit::Power { slope, .. } => {
            let edge = g.values()[0].max(*g.values().last().expect("non-empty grid"));
            let beta = -slope;
            Some(TailEnvelope::new(reach, edge * reach.powf(beta), beta, Decay::PowerLaw))
        }
        TailFit::Unknown { .. } => None,
    }
}

/// `t ↦ env(t / s)`.
fn stretch(env: &TailEnvelope, s: f64) -> TailEnvelope {
    let mut e = env.clone();
    e.cutoff *= s;
    match env.decay {
        Decay::Zero => {}
        Decay::PowerLaw => e.constant *= s.powf(env.exponent),
        Decay::Exponential => e.exponent /= s,
        Decay::LogPower => return TailEnvelope::flat(e.cutoff, env.cap.unwrap_or(f64::INFINITY)),
    }
    e
}

/// The constants and iterated envelopes `h̄_1, …, h̄_n`.
#[derive(Clone, Debug)]
pub struct EnvelopeChain {
    pub eps: Option<f64>,
    /// `∫ |x|^ε f`.
    pub c: Extended,
    pub d: f64,
    pub b: f64,
    /// `‖f‖_∞`.
    pub sup_f: f64,
    pub h_bars: Vec<GridFunction>,
    pub l1_norms: Vec<Extended>,
    pub tail_fits: Vec<TailFit>,
    /// `∫ (1 + |w|^ε) h̄_j`.
    pub weighted_integrals: Vec<Extended>,
    /// First `j` (1-based) with `‖h̄_j‖_1` finite.
    pub l1_index: Option<usize>,
    /// First `n` with `∫ (1 + |w|^ε) h̄_n` finite.
    pub n_star: Option<usize>,
    pub options: ChainOptions,
    pub diagnostics: Vec<String>,
    /// `f_{2^j}` for `j = 0, …, n_max − 1`.
    pub powers: Vec<ConvolutionPower>,
}

/// JSON-friendly summary of an [`EnvelopeChain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub eps: Option<f64>,
    #[serde(rename = "C")]
    pub c: Extended,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub sup_f: f64,
    pub l1_norms: Vec<Extended>,
    pub tail_exponents: Vec<Option<f64>>,
    pub tail_fits: Vec<TailFit>,
    pub weighted_integrals: Vec<Extended>,
    pub l1_index: Option<usize>,
    pub n_star: Option<usize>,
    pub strictly_improving: bool,
    pub options: ChainOptions,
    pub diagnostics: Vec<String>,
}

impl EnvelopeChain {
    /// Fitted slope per `h̄_j` (negative), `None` when unknown.
    pub fn tail_exponents(&self) -> Vec<Option<f64>> {
        self.tail_fits.iter().map(|f| f.slope()).collect()
    }

    /// Fitted slopes strictly decrease up to the first integrable member.
    pub fn strictly_improving(&self) -> bool {
        let Some(last) = self.l1_index else {
            return false;
        };
        let slopes = self.tail_exponents();
        (1..last).all(|j| match (slopes[j - 1], slopes[j]) {
            (Some(a), Some(b)) => b < a || (a == f64::NEG_INFINITY && b == a),
            _ => false,
        })
    }

    pub fn summary(&self) -> ChainSummary {
        ChainSummary {
            eps: self.eps,
            c: self.c,
            d: self.d,
            b: self.b,
            sup_f: self.sup_f,
            l1_norms: self.l1_norms.clone(),
            tail_exponents: self.tail_exponents(),
            tail_fits: self.tail_fits.clone(),
            weighted_integrals: self.weighted_integrals.clone(),
            l1_index: self.l1_index,
            n_star: self.n_star,
            strictly_improving: self.strictly_improving(),
            options: self.options.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Writes `h_bar_<j>.csv` for every member into `dir`.
    pub fn write_csv<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        for (j, g) in self.h_bars.iter().enumerate() {
            g.write_csv(dir.as_ref().join(format!("h_bar_{}.csv", j + 1)), "h_bar")?;
        }
        Ok(())
    }
}

/// `∫ (1 + |w|^ε) g`, including the envelope beyond the window.
fn weighted_integral(g: &GridFunction, eps: f64, fit: &TailFit) -> Extended {
    if !fit.integrable_with_weight(eps) {
        return Extended::Infinite;
    }
    match g.integrate(f64::NEG_INFINITY, f64::INFINITY) {
        Extended::Finite(m) => Extended::from_f64(m + g.abs_moment(eps)),
        Extended::Infinite => Extended::Infinite,
    }
}

fn l1_norm(g: &GridFunction, fit: &TailFit) -> Extended {
    if !fit.integrable_with_weight(0.0) {
        return Extended::Infinite;
    }
    g.integrate(f64::NEG_INFINITY, f64::INFINITY)
}

/// `B = min_{a ∈ [−2, 1]} ∫_{a−1}^{a+2} 2 ‖f‖_∞ g_1(|w|/2) dw` on a 0.01 grid,
/// before deflation.
pub fn seed_infimum(spec: &DensitySpec, sup_f: f64) -> Result<f64> {
    let g = |w: f64| 2.0 * sup_f * spec.tail(w.abs() / 2.0);
    let mut best = f64::INFINITY;
    for i in 0..=300 {
        let a = -2.0 + 0.01 * i as f64;
        let (l, r) = (a - 1.0, a + 2.0);
        // Split at the kink of |w|.
        let v = quad::integrate(g, l, 0.0, quad::ABS_TOL)? + quad::integrate(g, 0.0, r, quad::ABS_TOL)?;
        best = best.min(v);
    }
    Ok(best)
}

/// Powers `f_{2^j}`, `j < count`, on the lattice window, by exact direct
/// convolution (no spectral round-off floor in the far tails).
fn dyadic_powers(spec: &DensitySpec, opts: &ChainOptions, count: usize) -> Result<Vec<ConvolutionPower>> {
    let s = opts.spacing;
    let (slo, shi) = spec.support();
    let kmax = (1u64 << (count - 1)) as f64;
    let lo = (slo.min(kmax * slo).max(-opts.power_reach) / s).floor() * s;
    let hi = (shi.max(kmax * shi).min(opts.power_reach) / s).ceil() * s;
    let base = GridFunction::discretize(spec, (lo, hi), s, opts.max_points)?;
    let mut out = Vec::with_capacity(count);
    let first_out = base.outside_mass();
    out.push(ConvolutionPower {
        k: 1,
        mass_drift: (base.total_mass() + first_out - 1.0).abs(),
        outside_mass: first_out,
        grid: base,
        tail_bound: None,
    });
    // Heavy tails need long windows, where the spectral round-off floor is
    // far below the density; light tails need the exact direct sum.
    let spectral = matches!(spec.tail_class(), TailClass::PowerLaw { .. } | TailClass::LogPower);
    for j in 1..count {
        let prev = &out[j - 1].grid;
        let sq = if spectral {
            convolve(prev, prev)?.map_values(|v| v.max(0.0))?
        } else {
            convolve_direct(prev, prev)?
        };
        let support = (2.0 * prev.support().0, 2.0 * prev.support().1);
        let env = sq.envelope.clone();
        let kept = sq.restrict(lo, hi)?.with_envelope(env, support);
        let outside = (1.0 - kept.total_mass()).max(0.0);
        out.push(ConvolutionPower {
            k: 1 << j,
            mass_drift: (kept.total_mass() + outside - 1.0).abs(),
            outside_mass: outside,
            grid: kept,
            tail_bound: None,
        });
    }
    Ok(out)
}

/// Builds `h̄_1, …, h̄_{n_max}` with their tail fits.
pub fn build_envelope_chain(spec: &DensitySpec, n_max: usize, opts: &ChainOptions) -> Result<EnvelopeChain> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let sup_f = spec.sup_norm().ok_or_else(|| {
        Error::InvalidParameter(format!(
            "{} is unbounded; build the chain from a bounded convolution power",
            spec.name()
        ))
    })?;
    let eps = spec.epsilon();
    let c = match eps {
        Some(e) => spec.moment_eps(e)?,
        None => Extended::Infinite,
    };
    let raw_b = seed_infimum(spec, sup_f)?;
    let b = raw_b * (1.0 - B_DEFLATION);
    if !(b > 1e-12) {
        return Err(Error::Degenerate(format!("seed infimum B = {b:.3e} is not positive")));
    }
    let d = 2.0 * sup_f * (sup_f / b).max(1.0);
    let mut diagnostics = vec![format!("B grid minimum {raw_b:.6} deflated by {B_DEFLATION}")];

    let s = opts.spacing;
    let half = opts.half_width;
    let n = (2.0 * half / s).round() as usize + 1;
    if n > opts.max_points {
        return Err(Error::GridOverflow {
            requested: n,
            limit: opts.max_points,
        });
    }
    let seed_values: Vec<f64> = (0..n)
        .map(|i| {
            let x = -half + i as f64 * s;
            d * spec.tail(x.abs() / 2.0)
        })
        .collect();
    let seed_env = match spec.tail_mass_envelope() {
        Some(env) => stretch(&env, 2.0).scaled(d),
        None => TailEnvelope::flat(half, d),
    };
    let h1 = GridFunction::new(-half, s, seed_values)?.with_envelope(seed_env, (f64::NEG_INFINITY, f64::INFINITY));

    let powers = dyadic_powers(spec, opts, n_max)?;
    let mut h_bars = vec![h1];
    let mut tail_fits = vec![fit_tail(&h_bars[0])];
    for j in 1..n_max {
        let f = &powers[j];
        let mut next = phi_apply(f.k, &h_bars[j - 1], f)?;
        let fit = fit_tail(&next);
        match fitted_envelope(&next, &fit) {
            Some(env) => next.envelope = env,
            None => diagnostics.push(format!("h_bar_{}: tail fit rejected, crude envelope kept", j + 1)),
        }
        if f.outside_mass > 1e-3 {
            diagnostics.push(format!(
                "f_{} loses {:.3e} of mass beyond its window; added as a uniform correction",
                f.k, f.outside_mass
            ));
        }
        h_bars.push(next);
        tail_fits.push(fit);
    }
    for j in 1..tail_fits.len() {
        if let (Some(a), Some(b)) = (tail_fits[j - 1].slope(), tail_fits[j].slope()) {
            if b > a + FIT_MARGIN {
                diagnostics.push(format!(
                    "h_bar_{}: fitted slope {b:.3} shallower than {a:.3}; f_{} is not in its tail regime on this window",
                    j + 1,
                    1usize << j
                ));
            }
        }
    }
    let l1_norms: Vec<Extended> = h_bars.iter().zip(&tail_fits).map(|(g, fit)| l1_norm(g, fit)).collect();
    let weighted_integrals: Vec<Extended> = h_bars
        .iter()
        .zip(&tail_fits)
        .map(|(g, fit)| match eps {
            Some(e) => weighted_integral(g, e, fit),
            None => Extended::Infinite,
        })
        .collect();
    let l1_index = l1_norms.iter().position(|v| v.is_finite()).map(|i| i + 1);
    let n_star = weighted_integrals.iter().position(|v| v.is_finite()).map(|i| i + 1);
    if eps.is_none() {
        diagnostics.push("no finite fractional moment: exploration only, nothing asserted".into());
    }
    Ok(EnvelopeChain {
        eps,
        c,
        d,
        b,
        sup_f,
        h_bars,
        l1_norms,
        tail_fits,
        weighted_integrals,
        l1_index,
        n_star,
        options: opts.clone(),
        diagnostics,
        powers,
    })
}

/// `c_ε = sup_a sup_{[a−1,a+2]} (1 + |z|^ε) / inf_{[a−1,a+2]} (1 + |z|^ε)`,
/// by a dense scan followed by golden-section refinement.
pub fn c_eps(eps: f64) -> f64 {
    let w = |z: f64| 1.0 + z.abs().powf(eps);
    let ratio = |a: f64| {
        let (l, r) = (a - 1.0, a + 2.0);
        let sup = w(l).max(w(r));
        let inf = if l <= 0.0 && r >= 0.0 { w(0.0) } else { w(l).min(w(r)) };
        sup / inf
    };
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=10_000 {
        let a = -50.0 + 0.01 * i as f64;
        let v = ratio(a);
        if v > best.1 {
            best = (a, v);
        }
    }
    let (_, neg) = quad::golden_min(|a| -ratio(a), best.0 - 0.01, best.0 + 0.01, 80);
    best.1.max(-neg)
}

/// `Σ_m sup_{[m, m+1)} (1 + |z|^ε) g(z)` for non-negative `g`, with the
/// blocks beyond the window bounded through the envelope.
pub fn weighted_upper_sum(g: &GridFunction, eps: f64) -> Extended {
    let w = |z: f64| 1.0 + z.abs().powf(eps);
    let (slo, shi) = g.support();
    let s = g.spacing();
    let wlo = g.origin() - 0.5 * s;
    let whi = g.last_x() + 0.5 * s;
    let mut blocks: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for (x, v) in g.xs().zip(g.values()) {
        let m = x.floor() as i64;
        let e = blocks.entry(m).or_insert(0.0);
        *e = e.max(w(x) * v.max(0.0));
    }
    let mut total: f64 = blocks.values().sum();
    // Blocks at or past the window edges, explicitly up to `FAR` more.
    const FAR: i64 = 100_000;
    let env = &g.envelope;
    let side = |start: f64, end: f64, right: bool| -> Extended {
        if end <= start || env.constant == 0.0 || env.decay == Decay::Zero {
            return Extended::Finite(0.0);
        }
        let m0 = if right {
            start.floor() as i64
        } else {
            (-start).floor() as i64
        };
        let limit = end.abs().ceil().min(1e15) as i64;
        let mut acc = 0.0;
        let mut m = m0;
        let mut count = 0;
        while count < FAR && (m as f64) < end.abs() {
            // Block [m, m+1) on the right or (−m−1, −m] mirrored on the left.
            let near = (m as f64).max(start.abs());
            let far = (m + 1) as f64;
            acc += w(far) * env.value(near);
            m += 1;
            count += 1;
            if m > limit {
                break;
            }
        }
        if (m as f64) < end.abs() {
            let t = (m - 1) as f64;
            let two_e = 2f64.powf(eps);
            match (env.integral_beyond(t), env.weighted_integral_beyond(t, eps)) {
                (Extended::Finite(a), Extended::Finite(b)) => acc += (1.0 + two_e) * a + b,
                _ => return Extended::Infinite,
            }
        }
        Extended::Finite(acc)
    };
    if shi > whi {
        match side(whi, shi, true) {
            Extended::Finite(v) => total += v,
            Extended::Infinite => return Extended::Infinite,
        }
    }
    if slo < wlo {
        match side(-wlo, -slo, false) {
            Extended::Finite(v) => total += v,
            Extended::Infinite => return Extended::Infinite,
        }
    }
    Extended::Finite(total)
}

/// Outcome of the weighted mesh-1 sum check at `k = 2^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSumReport {
    pub k: usize,
    pub n: usize,
    pub eps: f64,
    pub c_eps: f64,
    /// Direct `Σ_m sup (1 + |z|^ε) f_k` from the grid plus the envelope.
    pub direct: Extended,
    /// `3 c_ε² ∫ (1 + |w|^ε) h̄_n`.
    pub chain_bound: Extended,
    /// `3 c_ε² · 2 ‖h̄_{n−1}‖_1 ∫ (1 + 6^ε + 4^ε |z|^ε) f_{k/2}`.
    pub final_step_bound: Extended,
    pub bound: Extended,
    pub finite: bool,
    pub pass: bool,
    pub diagnostics: Vec<String>,
}

/// Grid and spacing used for direct weighted sums.
pub fn analysis_window(spec: &DensitySpec, k_max: usize) -> ((f64, f64), f64) {
    let kf = k_max.max(1) as f64;
    let (slo, shi) = spec.support();
    match spec.tail_class() {
        TailClass::Compact => {
            let w = shi - slo;
            let h = snap_spacing(w / 256.0);
            let lo = (slo * kf).min(slo);
            let hi = (shi * kf).max(shi);
            (((lo / h).floor() * h, (hi / h).ceil() * h), h)
        }
        TailClass::Exponential => {
            let (lo, hi) = spec.suggested_window(1e-14);
            let h = snap_spacing((hi - lo) / 2048.0);
            let lo = if slo.is_finite() {
                slo
            } else {
                lo * kf.sqrt() + lo.min(0.0) * (kf - 1.0)
            };
            let hi = hi * kf;
            (((lo / h).floor() * h, (hi / h).ceil() * h), h)
        }
        TailClass::PowerLaw { .. } | TailClass::LogPower => {
            let lo = if slo.is_finite() { slo.max(-2000.0) } else { -2000.0 };
            let h = 0.125;
            (((lo / h).floor() * h, 2000.0), h)
        }
    }
}

fn direct_weighted(spec: &DensitySpec, k: usize, eps: f64) -> Result<Extended> {
    let (window, h) = analysis_window(spec, k);
    let opts = PowerOptions {
        truncate: Some(window),
        ..PowerOptions::default()
    };
    let cp = ConvolutionPower::from_spec(spec, window, h, k, &opts)?;
    Ok(weighted_upper_sum(&cp.grid, eps))
}

/// Compares the direct weighted sum of `f_{2^n}` with the chain bound.
pub fn weighted_sum_check(spec: &DensitySpec, chain: &EnvelopeChain, n: usize, eps: f64) -> Result<WeightedSumReport> {
    if n == 0 || n > chain.h_bars.len() {
        return Err(Error::InvalidParameter(format!(
            "chain holds h_bar_1..h_bar_{}; n = {n} requested",
            chain.h_bars.len()
        )));
    }
    let k = 1usize << n;
    let ce = c_eps(eps);
    let mut diagnostics = Vec::new();
    let direct = direct_weighted(spec, k, eps)?;
    let fit = &chain.tail_fits[n - 1];
    let chain_bound = match weighted_integral(&chain.h_bars[n - 1], eps, fit) {
        Extended::Finite(v) => Extended::Finite(3.0 * ce * ce * v),
        Extended::Infinite => {
            diagnostics.push(format!(
                "h_bar_{n}: (1 + |w|^eps)-weighted integral not finite ({fit:?})"
            ));
            Extended::Infinite
        }
    };
    let final_step_bound = if n >= 2 {
        let half = (k / 2) as f64;
        let moment = match chain.c {
            Extended::Finite(cm) if Some(eps) == chain.eps => Some(half.powf(1.0 + eps) * cm),
            _ => spec
                .moment_eps(eps)
                .ok()
                .and_then(|m| m.finite())
                .map(|cm| half.powf(1.0 + eps) * cm),
        };
        match (chain.l1_norms[n - 2], moment) {
            (Extended::Finite(l1), Some(m)) => {
                let inner = 1.0 + 6f64.powf(eps) + 4f64.powf(eps) * m;
                Extended::Finite(3.0 * ce * ce * 2.0 * l1 * inner)
            }
            _ => Extended::Infinite,
        }
    } else {
        Extended::Infinite
    };
    let bound = Extended::from_f64(chain_bound.as_f64().min(final_step_bound.as_f64()));
    let finite = direct.is_finite() && bound.is_finite();
    if !finite {
        diagnostics.push("envelope not integrable at this n: weighted sum not certified".into());
    }
    let pass = finite && direct.as_f64() <= bound.as_f64() + QUAD_SLACK;
    Ok(WeightedSumReport {
        k,
        n,
        eps,
        c_eps: ce,
        direct,
        chain_bound,
        final_step_bound,
        bound,
        finite,
        pass,
        diagnostics,
    })
}

/// Outcome of the bootstrap step `S^{g_{k+1}}_1(0) ≤ 3·2^ε (1 + C) S^{g_k}_1(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub k: usize,
    pub eps: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub factor: f64,
    pub sum_k: Extended,
    pub sum_k_plus_1: Extended,
    pub pass: bool,
}

/// Checks that a finite weighted sum at `k` propagates to `k + 1`.
pub fn bootstrap_check(spec: &DensitySpec, k: usize, eps: f64) -> Result<BootstrapReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let c = if eps == 0.0 {
        1.0
    } else {
        spec.moment_eps(eps)?
            .finite()
            .ok_or_else(|| Error::InvalidParameter(format!("{} has no finite moment of order {eps}", spec.name())))?
    };
    let factor = 3.0 * 2f64.powf(eps) * (1.0 + c);
    let sum_k = direct_weighted(spec, k, eps)?;
    let sum_k_plus_1 = direct_weighted(spec, k + 1, eps)?;
    let pass = match (sum_k, sum_k_plus_1) {
        (Extended::Finite(a), Extended::Finite(b)) => b <= factor * a + QUAD_SLACK,
        _ => false,
    };
    Ok(BootstrapReport {
        k,
        eps,
        c,
        factor,
        sum_k,
        sum_k_plus_1,
        pass,
    })
}

/// Pointwise comparison of `f_{2k}` with `2 ‖f_k‖_∞ g_k(|x|/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FellerReport {
    pub k: usize,
    pub sup_fk: f64,
    pub points: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` on the grid where `rhs > 0`.
    pub max_ratio: f64,
    /// Far points compared through the envelopes.
    pub far_points: usize,
    pub far_violations: usize,
    /// Far points where no lower bound on `g_k` is available.
    pub far_inconclusive: usize,
    pub pass: bool,
    /// `(x, f_{2k}(x), 2 sup f_k g_k(|x|/2))` on the grid.
    #[serde(skip)]
    pub sides: Vec<(f64, f64, f64)>,
}

/// Feller's seed inequality `f_{2k}(x) ≤ 2 ‖f_k‖_∞ g_k(|x|/2)`.
pub fn feller_bound_check(spec: &DensitySpec, k: usize, window: (f64, f64), h: f64) -> Result<FellerReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k == 1 && spec.sup_norm().is_none() {
        return Err(Error::InvalidParameter(format!(
            "{} is unbounded at k = 1",
            spec.name()
        )));
    }
    let opts = PowerOptions {
        truncate: Some(window),
        ..PowerOptions::default()
    };
    let fk = ConvolutionPower::from_spec(spec, window, h, k, &opts)?;
    let f2k = ConvolutionPower::from_spec(spec, window, h, 2 * k, &opts)?;
    let sup_fk = if k == 1 {
        spec.sup_norm().expect("checked above")
    } else {
        fk.grid.max_value()
    };
    let mut sides = Vec::with_capacity(f2k.grid.len());
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    for (x, v) in f2k.grid.xs().zip(f2k.grid.values()) {
        // A sample of the discrete power averages f_{2k} over [x − h, x + h].
        let t = (x.abs() - h).max(0.0) / 2.0;
        let g = if k == 1 { spec.tail(t) } else { fk.tail(t) };
        let rhs = 2.0 * sup_fk * g;
        if *v > rhs * (1.0 + 1e-9) + 1e-12 {
            violations += 1;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(v / rhs);
        }
        sides.push((x, *v, rhs));
    }
    // Beyond the window: the envelope of f_{2k} against a lower bound on g_k.
    let env = &f2k.grid.envelope;
    let (slo, shi) = spec.support();
    let (mut far_points, mut far_violations, mut far_inconclusive) = (0, 0, 0);
    let reach = window.0.abs().max(window.1.abs());
    for m in 1..=20 {
        let t = reach * (1.0 + 0.25 * m as f64);
        for x in [t, -t] {
            if x < 2.0 * k as f64 * slo || x > 2.0 * k as f64 * shi {
                continue;
            }
            if x > window.0 && x < window.1 {
                continue;
            }
            far_points += 1;
            let lhs = env.value(x);
            let lower_g = if k == 1 || spec.is_non_negative_support() {
                spec.tail(x.abs() / 2.0)
            } else {
                0.0
            };
            let rhs = 2.0 * sup_fk * lower_g;
            if lhs <= rhs * (1.0 + 1e-9) + 1e-15 {
                continue;
            }
            if lower_g == 0.0 {
                far_inconclusive += 1;
            } else {
                far_violations += 1;
            }
        }
    }
    Ok(FellerReport {
        k,
        sup_fk,
        points: sides.len(),
        violations,
        max_ratio,
        far_points,
        far_violations,
        far_inconclusive,
        pass: violations == 0 && far_violations == 0,
        sides,
    })
}

/// Sup of `f_l` per block against `∫_{a−1}^{a+2} h` and the conclusion for
/// `f_{2l}` against `Φ_l h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockBoundReport {
    pub l: usize,
    pub a_grid: Vec<f64>,
    pub hypothesis: Vec<(f64, f64)>,
    pub hypothesis_violations: Vec<f64>,
    pub hypothesis_holds: bool,
    /// Empty when the hypothesis fails.
    pub conclusion: Vec<(f64, f64)>,
    pub conclusion_violations: Vec<f64>,
    /// `None` when the bound was not asserted.
    pub conclusion_holds: Option<bool>,
    pub pass: bool,
}

/// `a ∈ {−5, −4.75, …, 5}`.
pub fn default_a_grid() -> Vec<f64> {
    (0..=40).map(|i| -5.0 + 0.25 * i as f64).collect()
}

/// The block bound checked on a finite set of block positions.
///
/// The hypothesis is checked first; if it fails the report says so and the
/// conclusion is not asserted.
pub fn block_bound_check(
    l: usize,
    h: &GridFunction,
    f_l: &ConvolutionPower,
    f_2l: &ConvolutionPower,
    a_grid: &[f64],
) -> Result<BlockBoundReport> {
    if f_l.k != l || f_2l.k != 2 * l {
        return Err(Error::InvalidParameter(format!(
            "block_bound_check: expected powers {l} and {}, got {} and {}",
            2 * l,
            f_l.k,
            f_2l.k
        )));
    }
    let mut hypothesis = Vec::with_capacity(a_grid.len());
    let mut hypothesis_violations = Vec::new();
    for &a in a_grid {
        let lhs = f_l.grid.block_extrema(a, a + 1.0)?.0;
        let rhs = h.integrate(a - 1.0, a + 2.0).as_f64();
        if lhs > rhs + QUAD_SLACK {
            hypothesis_violations.push(a);
        }
        hypothesis.push((lhs, rhs));
    }
    let hypothesis_holds = hypothesis_violations.is_empty();
    let mut conclusion = Vec::new();
    let mut conclusion_violations = Vec::new();
    let mut conclusion_holds = None;
    if hypothesis_holds {
        let phi = phi_apply(l, h, f_l)?;
        for &a in a_grid {
            let lhs = f_2l.grid.block_extrema(a, a + 1.0)?.0;
            let rhs = phi.integrate(a - 1.0, a + 2.0).as_f64();
            if lhs > rhs + QUAD_SLACK {
                conclusion_violations.push(a);
            }
            conclusion.push((lhs, rhs));
        }
        conclusion_holds = Some(conclusion_violations.is_empty());
    }
    Ok(BlockBoundReport {
        l,
        a_grid: a_grid.to_vec(),
        hypothesis,
        hypothesis_violations,
        hypothesis_holds,
        conclusion,
        conclusion_violations,
        conclusion_holds,
        pass: conclusion_holds == Some(true),
    })
}

/// Seed validity: `sup_{[a,a+1)} f_2 ≤ D ∫_{a−1}^{a+2} g_1(|w|/2) dw` on `a_grid`.
pub fn seed_check(chain: &EnvelopeChain, a_grid: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let f2 = chain
        .powers
        .get(1)
        .ok_or_else(|| Error::InvalidParameter("chain needs n_max >= 2 for the seed check".into()))?;
    let h1 = &chain.h_bars[0];
    a_grid
        .iter()
        .map(|&a| {
            let lhs = f2.grid.block_extrema(a, a + 1.0)?.0;
            Ok((a, lhs, h1.integrate(a - 1.0, a + 2.0).as_f64()))
        })
        .collect()
}

/// `∫ g_k(|w|/3 − 1)^p dw = 6 g_k(0) + 6 ∫_0^∞ g_k(t)^p dt` with
/// `g_k(t) ≤ min{1, k^{1+ε} C / t^ε}`; finite exactly when `p ε > 1`.
pub fn integrability_gate(k: usize, eps: f64, c: f64, p: f64) -> Extended {
    let env = moment_tail_envelope(k, eps, c);
    match env.power_integral_beyond(0.0, p) {
        Extended::Finite(v) => Extended::Finite(6.0 + 6.0 * v),
        Extended::Infinite => Extended::Infinite,
    }
}

/// One density's run of the moment-growth and tail bounds for `k ≤ k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailMomentReport {
    pub density: String,
    pub eps: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub checks: usize,
    pub violations: Vec<String>,
    /// Per `k`: measured `∫|x|^ε f_k` and the bound `k^{1+ε} C`.
    pub moments: Vec<(usize, f64, f64)>,
    pub pass: bool,
}

/// `∫|x|^ε f_k ≤ k^ε (k C)` and `g_k(t) ≤ min{1, k^{1+ε} C / t^ε}` on
/// `t_points` geometric points inside the grid window, for every `k ≤ k_max`.
pub fn tail_moment_suite(spec: &DensitySpec, k_max: usize, t_points: usize) -> Result<TailMomentReport> {
    const SLACK: f64 = 1e-8;
    let eps = spec
        .epsilon()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no finite fractional moment", spec.name())))?;
    let c = spec
        .moment_eps(eps)?
        .finite()
        .ok_or_else(|| Error::InvalidParameter(format!("{}: moment of order {eps} is infinite", spec.name())))?;
    let (window, h) = analysis_window(spec, k_max);
    let opts = PowerOptions {
        truncate: Some(window),
        ..PowerOptions::default()
    };
    let base = GridFunction::discretize(spec, window, h, opts.max_points)?;
    let mass_tail = spec.tail_mass_envelope();
    let reach = window.0.abs().max(window.1.abs());
    let mut checks = 0;
    let mut violations = Vec::new();
    let mut moments = Vec::new();
    let mut current: Option<GridFunction> = None;
    for k in 1..=k_max {
        let grid = match current.take() {
            None => base.clone(),
            Some(prev) => {
                let mut g = crate::convolution::convolve_opts(&prev, &base, &opts)?;
                g = g.map_values(|v| v.max(0.0))?;
                g
            }
        };
        let outside = (1.0 - grid.total_mass()).max(0.0);
        let cp = ConvolutionPower {
            k,
            grid: grid.clone(),
            tail_bound: Some(moment_tail_envelope(k, eps, c)),
            mass_drift: (grid.total_mass() - 1.0).abs(),
            outside_mass: outside,
        };
        let kf = k as f64;
        let bound = kf.powf(1.0 + eps) * c;
        let measured = if k == 1 {
            spec.moment_by_quadrature(eps)?.as_f64()
        } else {
            match &mass_tail {
                Some(mt) => cp.moment_upper(eps, mt).as_f64(),
                None => f64::INFINITY,
            }
        };
        checks += 1;
        if measured > bound + SLACK {
            violations.push(format!("k={k}: moment {measured:.6e} > {bound:.6e}"));
        }
        moments.push((k, measured, bound));
        for i in 0..t_points {
            let t = reach * 1e-3f64.powf(1.0 - i as f64 / (t_points.max(2) - 1) as f64);
            let g = if k == 1 { spec.tail(t) } else { cp.tail(t) };
            let b = (bound / t.powf(eps)).min(1.0);
            checks += 1;
            if g > b + SLACK {
                violations.push(format!("k={k}, t={t:.4e}: g_k {g:.6e} > {b:.6e}"));
            }
        }
        current = Some(grid);
    }
    Ok(TailMomentReport {
        density: spec.name(),
        eps,
        c,
        checks,
        pass: violations.is_empty(),
        violations,
        moments,
    })
}
