//! Uniform-grid functions with a monotone tail envelope.
//!
//! A [`GridFunction`] stores samples `v_i` at `x_i = origin + i·h`. Each
//! sample stands for the cell `[x_i − h/2, x_i + h/2)`, so the mass is the
//! rectangle sum `h·Σ v_i`; for cell-average discretizations this is exact
//! and discrete convolution preserves it. Outside the sampled window the
//! function is bounded by a [`TailEnvelope`], restricted to the declared
//! support.

use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::special::{gamma, gamma_ur};
use crate::Extended;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Samples a block must contain before its grid extrema are trusted.
pub const MIN_SAMPLES_PER_BLOCK: usize = 8;

/// Default cap on the number of grid points.
pub const DEFAULT_MAX_POINTS: usize = 1 << 24;

/// Truncated mass above which an integrable envelope is mandatory.
pub const TRUNCATION_TOL: f64 = 1e-3;

const INDEX_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    /// Identically zero beyond the cutoff.
    Zero,
    /// `C · t^{−e}`.
    PowerLaw,
    /// `C · exp(−e t)`.
    Exponential,
    /// `C / (t · (ln t)^e)`.
    LogPower,
}

/// Non-increasing bound `min{cap, C·shape(|t|)}` valid for `|t| ≥ cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEnvelope {
    pub cutoff: f64,
    pub constant: f64,
    pub exponent: f64,
    pub decay: Decay,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    /// The bound coincides with the represented function beyond the cutoff.
    #[serde(default)]
    pub exact: bool,
}

impl TailEnvelope {
    pub fn new(cutoff: f64, constant: f64, exponent: f64, decay: Decay) -> Self {
        Self {
            cutoff: cutoff.max(0.0),
            constant,
            exponent,
            decay,
            cap: None,
            exact: false,
        }
    }

    pub fn zero(cutoff: f64) -> Self {
        Self::new(cutoff, 0.0, 0.0, Decay::Zero)
    }

    /// Constant level `c` beyond the cutoff; never integrable unless `c = 0`.
    pub fn flat(cutoff: f64, c: f64) -> Self {
        Self::new(cutoff, c, 0.0, Decay::PowerLaw)
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn exact(mut self) -> Self {
        self.exact = true;
        self
    }

    fn is_zero(&self) -> bool {
        self.decay == Decay::Zero || self.constant == 0.0
    }

    fn shape(&self, t: f64) -> f64 {
        match self.decay {
            Decay::Zero => 0.0,
            Decay::PowerLaw => {
                if self.exponent == 0.0 {
                    1.0
                } else {
                    t.powf(-self.exponent)
                }
            }
            Decay::Exponential => (-self.exponent * t).exp(),
            Decay::LogPower => {
                if t <= 1.0 {
                    f64::INFINITY
                } else {
                    1.0 / (t * t.ln().powf(self.exponent))
                }
            }
        }
    }

    /// Envelope value at `|t|`; below the cutoff the cutoff value is returned.
    pub fn value(&self, t: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let t = t.abs().max(self.cutoff);
        let v = self.constant * self.shape(t);
        match self.cap {
            Some(c) => v.min(c),
            None => v,
        }
    }

    pub fn is_integrable(&self) -> bool {
        self.is_integrable_with_weight(0.0)
    }

    /// Whether `∫ t^w · value(t) dt` converges at infinity.
    pub fn is_integrable_with_weight(&self, w: f64) -> bool {
        if self.is_zero() {
            return true;
        }
        match self.decay {
            Decay::Zero | Decay::Exponential => true,
            Decay::PowerLaw => self.exponent > 1.0 + w,
            Decay::LogPower => w == 0.0 && self.exponent > 1.0,
        }
    }

    /// `∫_T^∞ value(t) dt` for `T ≥ 0`, one side only.
    pub fn integral_beyond(&self, t: f64) -> Extended {
        self.power_integral_beyond(t, 1.0)
    }

    /// `∫_T^∞ value(t)^p dt`.
    pub fn power_integral_beyond(&self, t: f64, p: f64) -> Extended {
        if self.is_zero() {
            return Extended::Finite(0.0);
        }
        let t = t.max(0.0);
        // Flat stretch below the cutoff counts at the cutoff value.
        let mut head = 0.0;
        let start = if t < self.cutoff {
            head = (self.cutoff - t) * self.value(self.cutoff).powf(p);
            self.cutoff
        } else {
            t
        };
        let c = self.constant.powf(p);
        let e = self.exponent;
        let body = match self.decay {
            Decay::Zero => 0.0,
            Decay::PowerLaw => {
                let q = p * e;
                if q <= 1.0 {
                    return Extended::Infinite;
                }
                // Cap region handled by splitting at the crossover.
                match self.cap {
                    Some(cap) if e > 0.0 => {
                        let cross = (self.constant / cap).powf(1.0 / e);
                        if cross > start {
                            cap.powf(p) * (cross - start) + c * cross.powf(1.0 - q) / (q - 1.0)
                        } else {
                            c * start.powf(1.0 - q) / (q - 1.0)
                        }
                    }
                    _ => {
                        if start == 0.0 {
                            return Extended::Infinite;
                        }
                        c * start.powf(1.0 - q) / (q - 1.0)
                    }
                }
            }
            Decay::Exponential => {
                let lam = p * e;
                match self.cap {
                    Some(cap) => {
                        let cross = (self.constant / cap).ln() / e;
                        if cross > start {
                            cap.powf(p) * (cross - start) + c * (-lam * cross).exp() / lam
                        } else {
                            c * (-lam * start).exp() / lam
                        }
                    }
                    None => c * (-lam * start).exp() / lam,
                }
            }
            Decay::LogPower => {
                if start <= 1.0 {
                    return Extended::Infinite;
                }
                let l = start.ln();
                if p == 1.0 {
                    if e <= 1.0 {
                        return Extended::Infinite;
                    }
                    c * l.powf(1.0 - e) / (e - 1.0)
                } else if p > 1.0 {
                    // t^{-p} (ln t)^{-pe} ≤ t^{-p} (ln T)^{-pe}
                    c * l.powf(-p * e) * start.powf(1.0 - p) / (p - 1.0)
                } else {
                    return Extended::Infinite;
                }
            }
        };
        Extended::from_f64(head + body)
    }

    /// `∫_T^∞ t^w value(t) dt` for `w ≥ 0`; the cap is ignored.
    pub fn weighted_integral_beyond(&self, t: f64, w: f64) -> Extended {
        if w == 0.0 {
            return self.integral_beyond(t);
        }
        if self.is_zero() {
            return Extended::Finite(0.0);
        }
        let start = t.max(self.cutoff);
        let mut head = 0.0;
        if t < self.cutoff {
            let v = self.value(self.cutoff);
            head = v * (self.cutoff.powf(1.0 + w) - t.max(0.0).powf(1.0 + w)) / (1.0 + w);
        }
        let c = self.constant;
        let e = self.exponent;
        let body = match self.decay {
            Decay::Zero => 0.0,
            Decay::PowerLaw => {
                if e <= 1.0 + w || start == 0.0 {
                    return Extended::Infinite;
                }
                c * start.powf(1.0 + w - e) / (e - 1.0 - w)
            }
            Decay::Exponential => c * gamma(1.0 + w) * gamma_ur(1.0 + w, e * start) / e.powf(1.0 + w),
            Decay::LogPower => return Extended::Infinite,
        };
        Extended::from_f64(head + body)
    }

    /// Certified envelope for the `k`-fold convolution power.
    ///
    /// If `x_1 + … + x_k = x` then some `|x_i| ≥ |x|/k`, whence
    /// `f_k(x) ≤ k · sup_{|y| ≥ |x|/k} f(y)`.
    pub fn convolution_power(&self, k: usize) -> Self {
        let kf = k as f64;
        if k <= 1 {
            return self.clone();
        }
        let mut env = match self.decay {
            _ if self.is_zero() => Self::zero(self.cutoff * kf),
            Decay::Zero => unreachable!(),
            Decay::PowerLaw => Self::new(
                self.cutoff * kf,
                self.constant * kf.powf(1.0 + self.exponent),
                self.exponent,
                Decay::PowerLaw,
            ),
            Decay::Exponential => Self::new(
                self.cutoff * kf,
                self.constant * kf,
                self.exponent / kf,
                Decay::Exponential,
            ),
            Decay::LogPower => {
                // ln(x/k) ≥ ln(x)/2 once x ≥ k².
                Self::new(
                    (self.cutoff * kf).max(kf * kf),
                    self.constant * kf * kf * 2f64.powf(self.exponent),
                    self.exponent,
                    Decay::LogPower,
                )
            }
        };
        env.cap = self.cap;
        env
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut env = self.clone();
        env.constant *= s;
        env.cap = env.cap.map(|c| c * s);
        env
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn spec_mass(spec: &DensitySpec) -> f64 {
    match spec.kind() {
        crate::density::DensityKind::Tabulated { grid } => grid.total_mass(),
        _ => 1.0,
    }
}

/// Distance from the origin to the nearest supported point outside `window`.
fn outside_reach(window: (f64, f64), support: (f64, f64)) -> f64 {
    let (a, b) = window;
    let nearest = |r0: f64, r1: f64| {
        if r1 <= r0 {
            f64::INFINITY
        } else if r0 >= 0.0 {
            r0
        } else if r1 <= 0.0 {
            -r1
        } else {
            0.0
        }
    };
    let right = nearest(b.max(support.0), support.1);
    let left = nearest(support.0, a.min(support.1));
    let r = right.min(left);
    if r.is_finite() {
        r
    } else {
        a.abs().max(b.abs())
    }
}

/// Real function sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    origin: f64,
    spacing: f64,
    values: Vec<f64>,
    mass: f64,
    non_negative: bool,
    /// Bound on `|g|` outside the window.
    pub envelope: TailEnvelope,
    support: (f64, f64),
    outside_mass: f64,
    prefix: Vec<f64>,
}

fn prefix_sums(values: &[f64], h: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    p.push(0.0);
    for v in values {
        acc += h * v;
        p.push(acc);
    }
    p
}

impl GridFunction {
    /// Grid function vanishing outside its sampled window.
    pub fn new(origin: f64, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one value".into()));
        }
        if !origin.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid values must be finite".into()));
        }
        let non_negative = values.iter().all(|&v| v >= 0.0);
        let prefix = prefix_sums(&values, spacing);
        let mass = *prefix.last().expect("non-empty prefix");
        let hi = origin + (values.len() - 1) as f64 * spacing;
        let reach = origin.abs().max(hi.abs());
        Ok(Self {
            origin,
            spacing,
            values,
            mass,
            non_negative,
            envelope: TailEnvelope::zero(reach),
            support: (origin, hi),
            outside_mass: 0.0,
            prefix,
        })
    }

    /// Replaces the tail envelope and the closed support hull.
    pub fn with_envelope(mut self, envelope: TailEnvelope, support: (f64, f64)) -> Self {
        self.envelope = envelope;
        self.support = support;
        self
    }

    pub fn with_outside_mass(mut self, m: f64) -> Self {
        self.outside_mass = m;
        self
    }

    /// Samples cell averages of `spec` over `[a, b]` with spacing `h`.
    pub fn discretize(spec: &DensitySpec, window: (f64, f64), h: f64, max_points: usize) -> Result<Self> {
        let (a, b) = window;
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("window [{a}, {b}] is empty")));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("spacing must be positive, got {h}")));
        }
        let n = ((b - a) / h + INDEX_SLACK).floor() as usize + 1;
        if n > max_points {
            return Err(Error::GridOverflow {
                requested: n,
                limit: max_points,
            });
        }
        let values: Vec<f64> = match spec.kind() {
            crate::density::DensityKind::Tabulated { grid } => (0..n).map(|i| grid.eval(a + i as f64 * h)).collect(),
            _ => (0..n)
                .map(|i| {
                    let x = a + i as f64 * h;
                    spec.interval_mass(x - 0.5 * h, x + 0.5 * h) / h
                })
                .collect(),
        };
        let reach = outside_reach((a, b), spec.support());
        let envelope = spec
            .value_envelope(reach)
            .unwrap_or_else(|| TailEnvelope::flat(reach, f64::INFINITY));
        let support = spec.support();
        let grid = Self::new(a, h, values)?.with_envelope(envelope, support);
        let outside = match spec.kind() {
            crate::density::DensityKind::Tabulated { .. } => (spec_mass(spec) - grid.mass).max(0.0),
            _ => spec.cdf(a - 0.5 * h) + spec.survival(b + 0.5 * h),
        };
        if outside > TRUNCATION_TOL && !grid.tail_certified() {
            return Err(Error::UncertifiedTruncation { mass: outside });
        }
        Ok(grid.with_outside_mass(outside))
    }

    /// True when the envelope beyond the window is integrable or the
    /// window covers the support.
    pub fn tail_certified(&self) -> bool {
        self.covers_support() || self.envelope.is_integrable()
    }

    fn covers_support(&self) -> bool {
        self.support.0 >= self.origin - INDEX_SLACK * self.spacing
            && self.support.1 <= self.last_x() + INDEX_SLACK * self.spacing
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn last_x(&self) -> f64 {
        self.x(self.values.len() - 1)
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.x(i))
    }

    /// Rectangle mass `h·Σ v_i` of the sampled window.
    pub fn total_mass(&self) -> f64 {
        self.mass
    }

    /// Mass reported as lying outside the window at construction.
    pub fn outside_mass(&self) -> f64 {
        self.outside_mass
    }

    pub fn is_non_negative(&self) -> bool {
        self.non_negative
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn outside_value(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            0.0
        } else {
            self.envelope.value(x)
        }
    }

    /// Linear interpolation inside the window, envelope outside.
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.origin) / self.spacing;
        let n = self.values.len();
        if u < -INDEX_SLACK || u > (n - 1) as f64 + INDEX_SLACK {
            return self.outside_value(x);
        }
        let u = u.clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n.saturating_sub(2));
        if n == 1 {
            return self.values[0];
        }
        let t = u - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// `∫_{-∞}^{x}` over the sampled window, cells taken as constant.
    pub fn cumulative(&self, x: f64) -> f64 {
        let u = (x - self.origin) / self.spacing + 0.5;
        let n = self.values.len();
        if u <= 0.0 {
            return 0.0;
        }
        if u >= n as f64 {
            return self.mass;
        }
        let i = u.floor() as usize;
        self.prefix[i] + (u - i as f64) * self.spacing * self.values[i]
    }

    /// Inverse of [`GridFunction::cumulative`] for non-negative grids.
    pub fn inverse_cumulative(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.mass;
        let idx = self.prefix.partition_point(|&p| p < target);
        if idx == 0 {
            return self.origin - 0.5 * self.spacing;
        }
        let i = (idx - 1).min(self.values.len() - 1);
        let v = self.values[i];
        let start = self.origin + (i as f64 - 0.5) * self.spacing;
        if v > 0.0 {
            start + (target - self.prefix[i]) / v
        } else {
            start
        }
    }

    /// `∫_a^b g`: cells inside the window, envelope beyond it.
    pub fn integrate(&self, a: f64, b: f64) -> Extended {
        if b <= a {
            return Extended::Finite(0.0);
        }
        let inner = self.cumulative(b) - self.cumulative(a);
        let lo_edge = self.origin - 0.5 * self.spacing;
        let hi_edge = self.last_x() + 0.5 * self.spacing;
        let mut total = inner;
        // Right of the window.
        let r0 = a.max(hi_edge).max(self.support.0);
        let r1 = b.min(self.support.1);
        if r1 > r0 {
            match self.envelope_segment(r0, r1) {
                Extended::Finite(v) => total += v,
                Extended::Infinite => return Extended::Infinite,
            }
        }
        // Left of the window, mirrored to positive arguments.
        let l0 = a.max(self.support.0);
        let l1 = b.min(lo_edge).min(self.support.1);
        if l1 > l0 {
            match self.envelope_segment(-l1, -l0) {
                Extended::Finite(v) => total += v,
                Extended::Infinite => return Extended::Infinite,
            }
        }
        Extended::Finite(total)
    }

    // ∫ over [s, e] of envelope(|t|), where [s, e] does not straddle 0.
    fn envelope_segment(&self, s: f64, e: f64) -> Extended {
        if s >= 0.0 {
            let a = self.envelope.integral_beyond(s);
            if e.is_infinite() {
                return a;
            }
            match (a, self.envelope.integral_beyond(e)) {
                (Extended::Finite(x), Extended::Finite(y)) => Extended::Finite((x - y).max(0.0)),
                // Finite segment of a non-integrable envelope: bound by its left value.
                _ => Extended::Finite(self.envelope.value(s) * (e - s)),
            }
        } else if e <= 0.0 {
            self.envelope_segment(-e, -s)
        } else {
            match (self.envelope_segment(0.0, -s), self.envelope_segment(0.0, e)) {
                (Extended::Finite(x), Extended::Finite(y)) => Extended::Finite(x + y),
                _ => Extended::Infinite,
            }
        }
    }

    /// `∫_{|x| ≥ t} g`; equals the whole mass for `t ≤ 0`.
    pub fn tail_sum(&self, t: f64) -> Extended {
        let t = t.max(0.0);
        let right = self.integrate(t, f64::INFINITY);
        let left = self.integrate(f64::NEG_INFINITY, -t);
        match (right, left) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infinite,
        }
    }

    /// `‖g‖_p` with the tail bounded through the envelope; `None` is `p = ∞`.
    pub fn lp_norm(&self, p: Option<f64>) -> Extended {
        let extends = !self.covers_support();
        match p {
            None => {
                let mut m = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if extends {
                    m = m.max(self.envelope.value(self.edge_reach()));
                }
                Extended::from_f64(m)
            }
            Some(p) => {
                let grid: f64 = self.spacing * self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>();
                let mut total = grid;
                if extends {
                    for (start, active) in self.outer_starts() {
                        if !active {
                            continue;
                        }
                        match self.envelope.power_integral_beyond(start, p) {
                            Extended::Finite(v) => total += v,
                            Extended::Infinite => return Extended::Infinite,
                        }
                    }
                }
                Extended::Finite(total.powf(1.0 / p))
            }
        }
    }

    // Distances from the origin where the two outer regions start, and
    // whether the support reaches into them.
    fn outer_starts(&self) -> [(f64, bool); 2] {
        let hi_edge = self.last_x() + 0.5 * self.spacing;
        let lo_edge = self.origin - 0.5 * self.spacing;
        [
            (hi_edge.max(0.0), self.support.1 > hi_edge),
            ((-lo_edge).max(0.0), self.support.0 < lo_edge),
        ]
    }

    fn edge_reach(&self) -> f64 {
        let [(r, ra), (l, la)] = self.outer_starts();
        match (ra, la) {
            (true, true) => r.min(l),
            (true, false) => r,
            (false, true) => l,
            _ => f64::INFINITY,
        }
    }

    /// `h Σ |x_i|^w g_i` plus the envelope part.
    pub fn abs_moment(&self, w: f64) -> f64 {
        let mut total: f64 = self
            .xs()
            .zip(&self.values)
            .map(|(x, v)| x.abs().powf(w) * v)
            .sum::<f64>()
            * self.spacing;
        if !self.covers_support() {
            for (start, active) in self.outer_starts() {
                if active {
                    total += self.envelope.weighted_integral_beyond(start, w).as_f64();
                }
            }
        }
        total
    }

    pub fn first_moment(&self) -> f64 {
        self.spacing * self.xs().zip(&self.values).map(|(x, v)| x * v).sum::<f64>()
    }

    pub fn second_moment(&self) -> f64 {
        self.spacing * self.xs().zip(&self.values).map(|(x, v)| x * x * v).sum::<f64>()
    }

    // Index range of samples with x_i in [l, r).
    fn index_range(&self, l: f64, r: f64) -> Option<(usize, usize)> {
        let n = self.values.len() as f64;
        let lo = ((l - self.origin) / self.spacing - INDEX_SLACK).ceil().max(0.0);
        let hi = ((r - self.origin) / self.spacing - INDEX_SLACK).ceil() - 1.0;
        let hi = hi.min(n - 1.0);
        if hi < lo {
            None
        } else {
            Some((lo as usize, hi as usize))
        }
    }

    /// `(sup, inf)` of the samples in `[l, r)`; parts of the block outside
    /// the window contribute the envelope at their end nearest the origin
    /// to the sup and zero to the inf (the far-end value when exact).
    pub fn block_extrema(&self, l: f64, r: f64) -> Result<(f64, f64)> {
        let width = r - l;
        let needed = MIN_SAMPLES_PER_BLOCK as f64 * self.spacing;
        if width < needed * (1.0 - INDEX_SLACK) {
            return Err(Error::MeshTooFine {
                delta: width,
                spacing: self.spacing,
                min_samples: MIN_SAMPLES_PER_BLOCK,
            });
        }
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        if let Some((i0, i1)) = self.index_range(l, r) {
            for &v in &self.values[i0..=i1] {
                sup = sup.max(v);
                inf = inf.min(v);
            }
        }
        let hi_edge = self.last_x();
        let lo_edge = self.origin;
        let mut outer = |s: f64, e: f64| {
            // [s, e) lies entirely on one side of the window.
            let s2 = s.max(self.support.0);
            let e2 = e.min(self.support.1);
            if e2 <= s2 {
                // Off the support: the function vanishes there.
                sup = sup.max(0.0);
                inf = inf.min(0.0);
                return;
            }
            let near = if s2 >= 0.0 {
                s2
            } else if e2 <= 0.0 {
                -e2
            } else {
                0.0
            };
            let far = s2.abs().max(e2.abs());
            sup = sup.max(self.envelope.value(near));
            let lower = if self.envelope.exact && e2 >= e && s2 <= s {
                self.envelope.value(far)
            } else {
                0.0
            };
            inf = inf.min(lower);
        };
        if r > hi_edge + INDEX_SLACK * self.spacing {
            outer(l.max(hi_edge), r);
        }
        if l < lo_edge - INDEX_SLACK * self.spacing {
            outer(l, r.min(lo_edge));
        }
        if sup == f64::NEG_INFINITY {
            sup = 0.0;
            inf = 0.0;
        }
        Ok((sup, inf))
    }

    /// Maps every value through `f`, keeping geometry and envelope.
    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Ok(Self::new(self.origin, self.spacing, values)?
            .with_envelope(self.envelope.clone(), self.support)
            .with_outside_mass(self.outside_mass))
    }

    /// Restricts to samples with `x ∈ [a, b]`.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        let (i0, i1) = self
            .index_range(a, b + self.spacing * 0.5)
            .ok_or_else(|| Error::InvalidParameter(format!("[{a}, {b}] misses the grid")))?;
        Ok(Self::new(self.x(i0), self.spacing, self.values[i0..=i1].to_vec())?
            .with_envelope(self.envelope.clone(), self.support)
            .with_outside_mass(self.outside_mass))
    }

    /// Writes `x,value` rows with 17 significant digits.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P, header: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", header])?;
        for (x, v) in self.xs().zip(&self.values) {
            w.write_record([format!("{x:.16e}"), format!("{v:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a two-column CSV on a uniform grid; a header row is optional.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Csv(format!(
                    "row {} has {} columns, expected 2",
                    row + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(v)) => {
                    xs.push(x);
                    vs.push(v);
                }
                _ if row == 0 => continue,
                _ => return Err(Error::Csv(format!("row {} is not numeric", row + 1))),
            }
        }
        if xs.len() < 2 {
            return Err(Error::Csv("need at least two samples".into()));
        }
        let h = xs[1] - xs[0];
        if !(h > 0.0) {
            return Err(Error::Csv("x column must be increasing".into()));
        }
        for w in xs.windows(2) {
            // Relative tolerance on the step, plus the rounding of decimal abscissae.
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h + 8.0 * f64::EPSILON * w[1].abs() {
                return Err(Error::Csv(format!("non-uniform spacing near x = {}", w[0])));
            }
        }
        let span_h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        Self::new(xs[0], span_h, vs)
    }

    /// Attaches an envelope read from a JSON sidecar.
    pub fn read_envelope<P: AsRef<Path>>(path: P) -> Result<TailEnvelope> {
        let s = std::fs::read_to_string(path)?;
        TailEnvelope::from_json(&s)
    }
}
