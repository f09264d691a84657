//! Convolution powers on uniform grids.
//!
//! Linear convolution goes through a zero-padded complex FFT; an `O(N²)`
//! direct sum is kept as an independent oracle. On a half-line support,
//! the values of `f_i * f_j` on `[0, Z]` depend only on `f_i`, `f_j` on
//! `[0, Z]`, so truncating every power to a fixed window loses nothing
//! inside it.

use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::grid::{Decay, GridFunction, TailEnvelope, DEFAULT_MAX_POINTS};
use crate::riemann::fit_slope;
use crate::special::std_normal_pdf;
use crate::Extended;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative tolerance when comparing grid spacings.
const SPACING_RTOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PowerOptions {
    pub max_points: usize,
    /// Keep only samples inside this window after every product.
    pub truncate: Option<(f64, f64)>,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_points: DEFAULT_MAX_POINTS,
            truncate: None,
        }
    }
}

fn check_spacing(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    let (ha, hb) = (a.spacing(), b.spacing());
    if (ha - hb).abs() > SPACING_RTOL * ha.max(hb) {
        return Err(Error::SpacingMismatch(ha, hb));
    }
    Ok(ha)
}

fn fft_convolve(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let full = a.len() + b.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.iter().take(out_len.min(full)).map(|c| c.re * scale).collect()
}

/// Envelope of `a * b` from the split `|y| ≥ |x|/2` or `|x − y| ≥ |x|/2`.
fn combine_envelopes(a: &GridFunction, b: &GridFunction) -> TailEnvelope {
    let (ea, eb) = (&a.envelope, &b.envelope);
    let l1 = |g: &GridFunction| g.spacing() * g.values().iter().map(|v| v.abs()).sum::<f64>() + g.outside_mass();
    let (ma, mb) = (l1(a), l1(b));
    let za = ea.decay == Decay::Zero || ea.constant == 0.0;
    let zb = eb.decay == Decay::Zero || eb.constant == 0.0;
    let cutoff = 2.0 * ea.cutoff.max(eb.cutoff).max(1.0);
    let cap = match (ea.cap, eb.cap) {
        (Some(x), Some(y)) => Some(x * mb + y * ma),
        _ => None,
    };
    let mut env = if za && zb {
        return TailEnvelope::zero(ea.cutoff + eb.cutoff);
    } else {
        // Bring both onto one family: the heavier of the two.
        let as_power = |e: &TailEnvelope, target: f64| -> Option<(f64, f64)> {
            match e.decay {
                _ if e.decay == Decay::Zero || e.constant == 0.0 => Some((0.0, target)),
                Decay::PowerLaw => Some((e.constant, e.exponent)),
                Decay::Exponential => {
                    // sup_t t^p e^{−λt} = (p/(λ e))^p
                    let p = target;
                    Some((e.constant * (p / (e.exponent * std::f64::consts::E)).powf(p), p))
                }
                _ => None,
            }
        };
        let both_exp = [ea, eb]
            .iter()
            .all(|e| e.decay == Decay::Exponential || e.decay == Decay::Zero || e.constant == 0.0);
        if both_exp {
            let rate = [ea, eb]
                .iter()
                .filter(|e| e.decay == Decay::Exponential && e.constant > 0.0)
                .map(|e| e.exponent)
                .fold(f64::INFINITY, f64::min);
            let part = |zero: bool, e: &TailEnvelope, m: f64| if zero { 0.0 } else { e.constant * m };
            let c = part(za, ea, mb) + part(zb, eb, ma);
            TailEnvelope::new(cutoff, c, 0.5 * rate, Decay::Exponential)
        } else {
            let target = [ea, eb]
                .iter()
                .filter(|e| e.decay == Decay::PowerLaw && e.constant > 0.0)
                .map(|e| e.exponent)
                .fold(f64::INFINITY, f64::min);
            match (as_power(ea, target), as_power(eb, target)) {
                (Some((ca, pa)), Some((cb, pb))) if target.is_finite() => {
                    let p = pa.min(pb);
                    let c = ca * mb * 2f64.powf(pa) + cb * ma * 2f64.powf(pb);
                    TailEnvelope::new(cutoff, c, p, Decay::PowerLaw)
                }
                _ => TailEnvelope::flat(cutoff, f64::INFINITY),
            }
        }
    };
    env.cap = cap;
    env
}

/// Linear convolution `a * b` via the FFT, scaled by the spacing.
pub fn convolve(a: &GridFunction, b: &GridFunction) -> Result<GridFunction> {
    convolve_opts(a, b, &PowerOptions::default())
}

pub fn convolve_opts(a: &GridFunction, b: &GridFunction, opts: &PowerOptions) -> Result<GridFunction> {
    let h = check_spacing(a, b)?;
    let full = a.len() + b.len() - 1;
    let origin = a.origin() + b.origin();
    // Only the samples that survive truncation are computed.
    let keep = match opts.truncate {
        Some((_, hi)) => (((hi - origin) / h + 1e-9).floor() as usize + 1).min(full),
        None => full,
    };
    let padded = full.next_power_of_two();
    if padded > opts.max_points.saturating_mul(2) || keep > opts.max_points {
        return Err(Error::GridOverflow {
            requested: full,
            limit: opts.max_points,
        });
    }
    let (va, vb) = (a.values(), b.values());
    // Truncation at hi also bounds the inputs that can reach the kept range.
    let va = &va[..va.len().min(keep)];
    let vb = &vb[..vb.len().min(keep)];
    let mut values = fft_convolve(va, vb, keep);
    let non_neg = a.is_non_negative() && b.is_non_negative();
    for v in values.iter_mut() {
        *v *= h;
        if non_neg && *v < 0.0 {
            *v = 0.0;
        }
    }
    let (sa, sb) = (a.support(), b.support());
    let env = combine_envelopes(a, b);
    let g = GridFunction::new(origin, h, values)?.with_envelope(env, (sa.0 + sb.0, sa.1 + sb.1));
    match opts.truncate {
        Some((lo, hi)) => g.restrict(lo, hi),
        None => Ok(g),
    }
}

/// Direct `O(N·M)` convolution, the oracle for [`convolve`].
pub fn convolve_direct(a: &GridFunction, b: &GridFunction) -> Result<GridFunction> {
    let h = check_spacing(a, b)?;
    let (va, vb) = (a.values(), b.values());
    let n = va.len() + vb.len() - 1;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let lo = k.saturating_sub(vb.len() - 1);
            let hi = k.min(va.len() - 1);
            h * (lo..=hi).map(|i| va[i] * vb[k - i]).sum::<f64>()
        })
        .collect();
    let (sa, sb) = (a.support(), b.support());
    Ok(GridFunction::new(a.origin() + b.origin(), h, values)?
        .with_envelope(combine_envelopes(a, b), (sa.0 + sb.0, sa.1 + sb.1)))
}

/// `k`-fold convolution power by binary exponentiation.
pub fn convolve_power(base: &GridFunction, k: usize, opts: &PowerOptions) -> Result<GridFunction> {
    if k == 0 {
        return Err(Error::InvalidParameter("convolution power needs k >= 1".into()));
    }
    let mut result: Option<GridFunction> = None;
    let mut sq = base.clone();
    let mut e = k;
    loop {
        if e & 1 == 1 {
            result = Some(match result {
                None => sq.clone(),
                Some(r) => convolve_opts(&r, &sq, opts)?,
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        sq = convolve_opts(&sq, &sq, opts)?;
    }
    let r = result.expect("k >= 1 sets the result");
    let s = base.support();
    let kf = k as f64;
    Ok(r.with_envelope(base.envelope.convolution_power(k), (kf * s.0, kf * s.1)))
}

/// A convolution power together with its moment-based tail bound.
#[derive(Clone, Debug)]
pub struct ConvolutionPower {
    pub k: usize,
    pub grid: GridFunction,
    /// `min{1, k^{1+ε} C / t^ε}` on the mass tail `g_k(t)`.
    pub tail_bound: Option<TailEnvelope>,
    pub mass_drift: f64,
    /// Certified bound on the mass of `f_k` outside the grid window.
    pub outside_mass: f64,
}

impl ConvolutionPower {
    /// Discretizes `spec` and raises it to the `k`-th power.
    pub fn from_spec(spec: &DensitySpec, window: (f64, f64), h: f64, k: usize, opts: &PowerOptions) -> Result<Self> {
        let base = GridFunction::discretize(spec, window, h, opts.max_points)?;
        let grid = convolve_power(&base, k, opts)?;
        let tail_bound = match spec.epsilon() {
            Some(eps) => spec.moment_eps(eps)?.finite().map(|c| moment_tail_envelope(k, eps, c)),
            None => None,
        };
        let mass = grid.total_mass();
        Ok(Self {
            k,
            mass_drift: (mass - 1.0).abs(),
            outside_mass: (1.0 - mass).max(0.0),
            grid,
            tail_bound,
        })
    }

    /// `g_k(t) = ∫_{|x|≥t} f_k`: grid cells plus the mass outside the window.
    pub fn tail(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let g = &self.grid;
        let inside = (g.total_mass() - g.cumulative(t)) + g.cumulative(-t);
        (inside.max(0.0) + self.outside_mass).min(1.0)
    }

    /// Upper estimate of `∫|x|^ε f_k`: grid part plus a certified bound on
    /// the part beyond the window, from `P(|S_k| > x) ≤ k P(|X| > x/k)`.
    pub fn moment_upper(&self, eps: f64, mass_tail: &TailEnvelope) -> Extended {
        let (lo, hi) = (self.grid.origin(), self.grid.last_x());
        let inner: f64 = self
            .grid
            .xs()
            .zip(self.grid.values())
            .map(|(x, v)| x.abs().powf(eps) * v)
            .sum::<f64>()
            * self.grid.spacing();
        let z = if lo >= 0.0 { hi } else { lo.abs().min(hi.abs()) };
        let z = z + 0.5 * self.grid.spacing();
        // ∫_Z^∞ x^ε dG = Z^ε G(Z) + ε ∫_Z^∞ x^{ε−1} G(x) dx, G(x) ≤ k·g_1(x/k).
        let g = union_tail(mass_tail, self.k);
        match g.weighted_integral_beyond(z, eps - 1.0) {
            Extended::Finite(w) => Extended::Finite(inner + z.powf(eps) * self.outside_mass + eps * w),
            Extended::Infinite => Extended::Infinite,
        }
    }
}

/// `t ↦ k · g(t/k)` for a mass-tail envelope `g`.
pub fn union_tail(g: &TailEnvelope, k: usize) -> TailEnvelope {
    let kf = k as f64;
    let mut env = match g.decay {
        Decay::Zero => TailEnvelope::zero(g.cutoff * kf),
        Decay::PowerLaw => TailEnvelope::new(
            g.cutoff * kf,
            g.constant * kf.powf(1.0 + g.exponent),
            g.exponent,
            Decay::PowerLaw,
        ),
        Decay::Exponential => TailEnvelope::new(g.cutoff * kf, g.constant * kf, g.exponent / kf, Decay::Exponential),
        Decay::LogPower => TailEnvelope::flat(g.cutoff * kf, kf),
    };
    env.cap = g.cap.map(|c| c * kf);
    env
}

/// The mass-tail bound `min{1, k^{1+ε} C / t^ε}`.
pub fn moment_tail_envelope(k: usize, eps: f64, c: f64) -> TailEnvelope {
    let kf = k as f64;
    TailEnvelope::new(0.0, kf.powf(1.0 + eps) * c, eps, Decay::PowerLaw).with_cap(1.0)
}

/// Result of the boundedness search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessIndex {
    pub k0: usize,
    pub method: String,
    /// `sup f_k` at spacings `h, h/2, h/4` for each tested `k`.
    pub sups: Vec<(usize, [f64; 3])>,
    /// Fitted decay exponent of `|f̂|`.
    pub fourier_exponent: Option<f64>,
    /// Smallest `k` with `k·a > 1` for `|f̂| ~ θ^{−a}`: bounded by the Fourier route.
    pub fourier_k: Option<usize>,
}

fn refinement_window(spec: &DensitySpec) -> (f64, f64) {
    let (lo, hi) = spec.suggested_window(1e-8);
    let width = (hi - lo).min(1e3);
    (lo, lo + width)
}

/// Smallest `k ≤ k_max` whose sampled sup is stable under two halvings of `h`.
pub fn boundedness_index(spec: &DensitySpec, k_max: usize) -> Result<BoundednessIndex> {
    let window = refinement_window(spec);
    let h0 = (window.1 - window.0) / 4096.0;
    let mut sups = Vec::new();
    let mut k0 = None;
    for k in 1..=k_max {
        let mut s = [0.0; 3];
        for (j, slot) in s.iter_mut().enumerate() {
            let h = h0 / f64::from(1u32 << j);
            let base = GridFunction::discretize(spec, window, h, DEFAULT_MAX_POINTS)?;
            let opts = PowerOptions {
                truncate: if spec.is_non_negative_support() && spec.support().1.is_infinite() {
                    Some(window)
                } else {
                    None
                },
                ..PowerOptions::default()
            };
            *slot = convolve_power(&base, k, &opts)?.max_value();
        }
        let stable = |a: f64, b: f64| (b - a).abs() < 0.05 * b.abs().max(a.abs());
        sups.push((k, s));
        if stable(s[0], s[1]) && stable(s[1], s[2]) {
            k0 = Some(k);
            break;
        }
    }
    let k0 = k0.ok_or(Error::Unresolved(k_max))?;
    let base = GridFunction::discretize(spec, window, h0 / 4.0, DEFAULT_MAX_POINTS)?;
    let fourier = fourier_norms(&base, &[])?;
    let fourier_k = fourier
        .decay_exponent
        .filter(|e| *e < 0.0)
        .map(|e| (1.0 / -e).floor() as usize + 1);
    Ok(BoundednessIndex {
        k0,
        method: "grid_refinement".into(),
        sups,
        fourier_exponent: fourier.decay_exponent,
        fourier_k,
    })
}

/// Fourier-side diagnostics of a grid density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierReport {
    /// `sup |f̂|` over the resolved band.
    pub sup_abs: f64,
    /// Slope of `log |f̂|` against `log θ` over the top resolved decade.
    pub decay_exponent: Option<f64>,
    pub fit_r2: Option<f64>,
    pub norms: Vec<(f64, Extended)>,
    /// `∫|f̂|²` on the discrete spectrum.
    pub plancherel_lhs: f64,
    /// `2π ∫|f|²` with the same discretization.
    pub plancherel_rhs: f64,
    pub plancherel_rel_err: f64,
}

/// Estimates `f̂(θ) = ∫ e^{iθx} f(x) dx`, its decay rate and `L^p` norms.
pub fn fourier_norms(g: &GridFunction, p_list: &[f64]) -> Result<FourierReport> {
    let h = g.spacing();
    let n = (4 * g.len()).next_power_of_two();
    let mut buf: Vec<Complex64> = g.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    // The inverse transform carries e^{+iθx}, matching the convention.
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let dtheta = 2.0 * PI / (n as f64 * h);
    let raw: Vec<f64> = buf.iter().map(|c| c.norm() * h).collect();

    let plancherel_lhs: f64 = raw.iter().map(|a| a * a).sum::<f64>() * dtheta;
    let plancherel_rhs = 2.0 * PI * h * g.values().iter().map(|v| v * v).sum::<f64>();
    let plancherel_rel_err = (plancherel_lhs - plancherel_rhs).abs() / plancherel_rhs.max(f64::MIN_POSITIVE);

    // Undo the cell averaging inside a quarter of the Nyquist band.
    let jmax = n / 8;
    let amp: Vec<f64> = (0..=jmax)
        .map(|j| {
            let th = j as f64 * dtheta;
            let x = 0.5 * th * h;
            let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
            raw[j] / sinc
        })
        .collect();
    let sup_abs = amp.iter().cloned().fold(0.0, f64::max);

    // Log-binned maxima over the top decade below the band edge.
    let th_max = jmax as f64 * dtheta;
    let th_min = th_max / 10.0;
    let bins = 24;
    let mut pts = Vec::new();
    for b in 0..bins {
        let lo = th_min * 10f64.powf(b as f64 / bins as f64);
        let hi = th_min * 10f64.powf((b + 1) as f64 / bins as f64);
        let (jl, jh) = (
            (lo / dtheta).ceil() as usize,
            ((hi / dtheta).floor() as usize).min(jmax),
        );
        if jh < jl {
            continue;
        }
        let m = amp[jl..=jh].iter().cloned().fold(0.0, f64::max);
        if m > 0.0 {
            pts.push(((lo * hi).sqrt().ln(), m.ln()));
        }
    }
    let fit = fit_slope(&pts);
    let (decay_exponent, fit_r2) = match fit {
        Some((s, r2)) if r2 >= 0.9 => (Some(s), Some(r2)),
        Some((_, r2)) => (None, Some(r2)),
        None => (None, None),
    };
    // Intercept of the fit for the analytic tail beyond the band.
    let intercept = decay_exponent.map(|s| {
        let k = pts.len() as f64;
        pts.iter().map(|p| p.1 - s * p.0).sum::<f64>() / k
    });
    let norms = p_list
        .iter()
        .map(|&p| {
            let band: f64 = amp
                .iter()
                .enumerate()
                .map(|(j, a)| if j == 0 { 1.0 } else { 2.0 } * a.powf(p))
                .sum::<f64>()
                * dtheta;
            let tail = match (decay_exponent, intercept) {
                (Some(s), Some(c)) if p * s < -1.0 => {
                    2.0 * c.exp().powf(p) * th_max.powf(p * s + 1.0) / (-(p * s) - 1.0)
                }
                (Some(_), Some(_)) => return (p, Extended::Infinite),
                _ => 0.0,
            };
            (p, Extended::Finite((band + tail).powf(1.0 / p)))
        })
        .collect();
    Ok(FourierReport {
        sup_abs,
        decay_exponent,
        fit_r2,
        norms,
        plancherel_lhs,
        plancherel_rhs,
        plancherel_rel_err,
    })
}

/// Modulus-of-continuity and boundary diagnostics for `f_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub k: usize,
    /// `max |v_{i+1} − v_i|` at spacings `h, h/2, h/4`.
    pub moduli: [f64; 3],
    pub ratios: [f64; 2],
    pub boundary_values: (f64, f64),
    pub continuous: bool,
    pub vanishing: bool,
    pub pass: bool,
}

/// Checks that `f_k` is continuous (modulus shrinks under refinement) and
/// small at the edges of a window covering its support.
pub fn continuity_vanishing_check(
    spec: &DensitySpec,
    k: usize,
    window: (f64, f64),
    h: f64,
) -> Result<ContinuityReport> {
    let mut moduli = [0.0; 3];
    let mut edges = (0.0, 0.0);
    let mut peak = 0.0;
    for (j, slot) in moduli.iter_mut().enumerate() {
        let hj = h / f64::from(1u32 << j);
        let base = GridFunction::discretize(spec, window, hj, DEFAULT_MAX_POINTS)?;
        let kf = k as f64;
        let opts = PowerOptions {
            truncate: Some((kf * window.0.min(0.0) + window.0.max(0.0), kf * window.1)),
            ..PowerOptions::default()
        };
        let fk = convolve_power(&base, k, &opts)?;
        let v = fk.values();
        // Include the jump from zero just outside the support hull.
        let mut m = v[0].abs().max(v[v.len() - 1].abs());
        for w in v.windows(2) {
            m = m.max((w[1] - w[0]).abs());
        }
        *slot = m;
        edges = (v[0], v[v.len() - 1]);
        peak = fk.max_value();
    }
    let ratios = [moduli[1] / moduli[0], moduli[2] / moduli[1]];
    let continuous = ratios.iter().all(|r| *r <= 0.8);
    // Edges sitting on the support hull are covered by the modulus, which
    // includes the jump from zero; open edges must carry a small value.
    let (slo, shi) = spec.support();
    let kf = k as f64;
    let small = |v: f64| v.abs() <= 1e-3 * peak.max(1e-300);
    let on_hull = |edge: f64, hull: f64| hull.is_finite() && (edge - kf * hull).abs() <= h;
    let lo_edge = window.0.min(kf * window.0);
    let hi_edge = kf * window.1;
    let vanishing = (on_hull(lo_edge, slo) || small(edges.0)) && (on_hull(hi_edge, shi) || small(edges.1));
    Ok(ContinuityReport {
        k,
        moduli,
        ratios,
        boundary_values: edges,
        continuous,
        vanishing,
        pass: continuous && vanishing,
    })
}

/// `sup_i |σ√n f_n(x_i) − φ(z_i)|` over grid points with `|z_i| ≤ 8`.
///
/// The discretization alone contributes about `h² |φ''| / (24 σ²)` at every `n`.
pub fn local_clt_error(spec: &DensitySpec, n_list: &[usize], points_per_sd: usize) -> Result<Vec<(usize, f64)>> {
    let mu = spec
        .mean()
        .finite()
        .ok_or_else(|| Error::InvalidParameter("local CLT needs a finite mean".into()))?;
    let sigma = spec
        .variance()
        .finite()
        .ok_or_else(|| Error::InvalidParameter("local CLT needs a finite variance".into()))?
        .sqrt();
    let h = sigma / points_per_sd as f64;
    let (slo, shi) = spec.support();
    let window = (slo.max(mu - 12.0 * sigma), shi.min(mu + 12.0 * sigma));
    // Snap the window to the grid so that every power lives on one lattice.
    let window = ((window.0 / h).floor() * h, (window.1 / h).ceil() * h);
    let base = GridFunction::discretize(spec, window, h, DEFAULT_MAX_POINTS)?;
    n_list
        .par_iter()
        .map(|&n| {
            let fnn = convolve_power(&base, n, &PowerOptions::default())?;
            let scale = sigma * (n as f64).sqrt();
            let err = fnn
                .xs()
                .zip(fnn.values())
                .filter_map(|(x, v)| {
                    let z = (x - n as f64 * mu) / scale;
                    (z.abs() <= 8.0).then(|| (scale * v - std_normal_pdf(z)).abs())
                })
                .fold(0.0, f64::max);
            Ok((n, err))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform_grid(h: f64) -> GridFunction {
        let spec = DensitySpec::uniform(0.0, 1.0).unwrap();
        GridFunction::discretize(&spec, (0.0, 1.0), h, DEFAULT_MAX_POINTS).unwrap()
    }

    #[test]
    fn uniform_square_is_triangle() {
        let u = uniform_grid(1.0 / 8192.0);
        let t = convolve(&u, &u).unwrap();
        assert_abs_diff_eq!(t.eval(1.0), 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(t.eval(0.5), 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(t.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exponential_square_is_gamma() {
        let spec = DensitySpec::exponential(1.0).unwrap();
        let e = GridFunction::discretize(&spec, (0.0, 40.0), 1.0 / 256.0, DEFAULT_MAX_POINTS).unwrap();
        let g = convolve(&e, &e).unwrap();
        assert_abs_diff_eq!(g.eval(1.0), (-1f64).exp(), epsilon = 1e-4);
    }

    #[test]
    fn power_three_of_exponential() {
        let spec = DensitySpec::exponential(1.0).unwrap();
        let cp = ConvolutionPower::from_spec(&spec, (0.0, 40.0), 1.0 / 256.0, 3, &PowerOptions::default()).unwrap();
        assert_abs_diff_eq!(cp.grid.eval(2.0), 2.0 * (-2f64).exp(), epsilon = 1e-4);
        let one = ConvolutionPower::from_spec(&spec, (0.0, 40.0), 1.0 / 256.0, 1, &PowerOptions::default()).unwrap();
        let base = GridFunction::discretize(&spec, (0.0, 40.0), 1.0 / 256.0, DEFAULT_MAX_POINTS).unwrap();
        assert_eq!(one.grid.values(), base.values());
    }

    #[test]
    fn narrow_kernel_shifts() {
        let u = uniform_grid(0.01);
        let mut dirac = vec![0.0; 11];
        dirac[0] = 100.0;
        let d = GridFunction::new(0.5, 0.01, dirac).unwrap();
        let s = convolve(&u, &d).unwrap();
        assert_abs_diff_eq!(s.total_mass(), u.total_mass(), epsilon = 1e-6);
        assert_abs_diff_eq!(s.eval(1.0), u.eval(0.5), epsilon = 1e-9);
    }

    #[test]
    fn spectral_matches_direct_and_commutes() {
        let spec = DensitySpec::gamma(2.5, 1.5).unwrap();
        let a = GridFunction::discretize(&spec, (0.0, 10.0), 10.0 / 511.0, DEFAULT_MAX_POINTS).unwrap();
        let u = DensitySpec::uniform(0.0, 3.0).unwrap();
        let b = GridFunction::discretize(&u, (0.0, 4.0), 10.0 / 511.0, DEFAULT_MAX_POINTS).unwrap();
        let fast = convolve(&a, &b).unwrap();
        let slow = convolve_direct(&a, &b).unwrap();
        let swapped = convolve(&b, &a).unwrap();
        for ((x, y), z) in fast.values().iter().zip(slow.values()).zip(swapped.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            assert_abs_diff_eq!(x, z, epsilon = 1e-12);
        }
    }

    #[test]
    fn spacing_mismatch_rejected() {
        let a = uniform_grid(0.01);
        let b = uniform_grid(0.02);
        assert!(matches!(convolve(&a, &b), Err(Error::SpacingMismatch(..))));
    }

    #[test]
    fn overflow_rejected() {
        let a = uniform_grid(0.001);
        let opts = PowerOptions {
            max_points: 1000,
            truncate: None,
        };
        assert!(matches!(convolve_opts(&a, &a, &opts), Err(Error::GridOverflow { .. })));
    }

    #[test]
    fn sqrt_singular_square_is_bounded() {
        let spec = DensitySpec::sqrt_singular();
        let cp = ConvolutionPower::from_spec(&spec, (0.0, 1.0), 1.0 / 4096.0, 2, &PowerOptions::default()).unwrap();
        let sup = cp.grid.max_value();
        assert!(sup <= PI / 4.0 + 5e-3, "sup {sup}");
        assert!(sup >= PI / 4.0 - 5e-2);
    }

    #[test]
    fn fourier_uniform() {
        let u = uniform_grid(1.0 / 2048.0);
        let r = fourier_norms(&u, &[2.0]).unwrap();
        assert_abs_diff_eq!(r.sup_abs, 1.0, epsilon = 1e-6);
        let e = r.decay_exponent.unwrap();
        assert!((e + 1.0).abs() < 0.1, "exponent {e}");
        assert!(r.plancherel_rel_err < 1e-6);
        // ∫|f̂|² = 2π‖f‖₂² = 2π
        assert_abs_diff_eq!(r.norms[0].1.as_f64().powi(2), 2.0 * PI, epsilon = 0.05);
    }

    #[test]
    fn fourier_sqrt_singular() {
        let spec = DensitySpec::sqrt_singular();
        let g = GridFunction::discretize(&spec, (0.0, 1.0), 1.0 / 8192.0, DEFAULT_MAX_POINTS).unwrap();
        let r = fourier_norms(&g, &[1.5, 3.0]).unwrap();
        let e = r.decay_exponent.unwrap();
        assert!((e + 0.5).abs() < 0.1, "exponent {e}");
        assert_eq!(r.norms[0].1, Extended::Infinite);
        assert!(r.norms[1].1.is_finite());
    }

    #[test]
    fn boundedness_examples() {
        assert_eq!(
            boundedness_index(&DensitySpec::uniform(0.0, 1.0).unwrap(), 8)
                .unwrap()
                .k0,
            1
        );
        assert_eq!(
            boundedness_index(&DensitySpec::gaussian(0.0, 1.0).unwrap(), 8)
                .unwrap()
                .k0,
            1
        );
        let s = boundedness_index(&DensitySpec::sqrt_singular(), 8).unwrap();
        assert_eq!(s.k0, 2);
        assert!(s.fourier_k.unwrap() >= s.k0);
    }

    #[test]
    fn continuity_examples() {
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        assert!(continuity_vanishing_check(&u, 2, (0.0, 1.0), 1.0 / 256.0).unwrap().pass);
        let e = DensitySpec::exponential(1.0).unwrap();
        assert!(continuity_vanishing_check(&e, 2, (0.0, 40.0), 1.0 / 64.0).unwrap().pass);
        let s = DensitySpec::sqrt_singular();
        assert!(continuity_vanishing_check(&s, 3, (0.0, 1.0), 1.0 / 256.0).unwrap().pass);
        // A single uniform has jumps and must fail.
        assert!(
            !continuity_vanishing_check(&u, 1, (0.0, 1.0), 1.0 / 256.0)
                .unwrap()
                .continuous
        );
    }

    #[test]
    fn local_clt_examples() {
        let g = DensitySpec::gaussian(0.0, 1.0).unwrap();
        for (_, e) in local_clt_error(&g, &[1, 2, 4, 8], 256).unwrap() {
            assert!(e <= 1e-6, "gaussian error {e}");
        }
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let errs = local_clt_error(&u, &[2, 4, 8, 16], 1024).unwrap();
        for w in errs.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        assert!(errs[3].1 < 0.02);
    }
}
