//! Catalog of input densities.
//!
//! Analytic entries carry a closed-form CDF and, where one exists, a
//! closed-form fractional moment to check numerical routes against. Tabulated
//! densities come from a two-column CSV on a uniform grid.

use crate::error::{Error, Result};
use crate::grid::{Decay, GridFunction, TailEnvelope};
use crate::quad::{self, ABS_TOL};
use crate::special::{gamma, gamma_lr, gamma_ur, ln_gamma};
use crate::Extended;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{E, PI};

/// Largest mass deviation accepted for tabulated input.
pub const MASS_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub enum DensityKind {
    Exponential {
        rate: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    Pareto {
        alpha: f64,
        scale: f64,
    },
    /// `1 / (x log² x)` on `[e, ∞)`; integrable but without any finite
    /// fractional moment.
    LogCounterexample,
    /// `1 / (2 √x)` on `(0, 1]`; unbounded at the origin.
    SqrtSingular,
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Tabulated {
        grid: GridFunction,
    },
}

/// Coarse classification of how fast the tail decays.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailClass {
    Compact,
    Exponential,
    PowerLaw { alpha: f64 },
    LogPower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// A probability density together with the moment order declared for it.
#[derive(Clone, Debug, PartialEq)]
pub struct DensitySpec {
    kind: DensityKind,
    epsilon: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl DensitySpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::with_default_eps(DensityKind::Exponential { rate }))
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidParameter(format!("uniform needs a < b, got [{a}, {b}]")));
        }
        Ok(Self::with_default_eps(DensityKind::Uniform { a, b }))
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        positive("shape", shape)?;
        positive("rate", rate)?;
        Ok(Self::with_default_eps(DensityKind::Gamma { shape, rate }))
    }

    pub fn pareto(alpha: f64, scale: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("scale", scale)?;
        Ok(Self::with_default_eps(DensityKind::Pareto { alpha, scale }))
    }

    pub fn log_counterexample() -> Self {
        Self::with_default_eps(DensityKind::LogCounterexample)
    }

    pub fn sqrt_singular() -> Self {
        Self::with_default_eps(DensityKind::SqrtSingular)
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::InvalidParameter("mean must be finite".into()));
        }
        positive("sd", sd)?;
        Ok(Self::with_default_eps(DensityKind::Gaussian { mean, sd }))
    }

    /// Wraps a tabulated grid. Fails when the total mass deviates from one by
    /// more than [`MASS_TOL`]; smaller deviations are kept as-is.
    pub fn tabulated(grid: GridFunction) -> Result<Self> {
        if !grid.is_non_negative() {
            return Err(Error::InvalidParameter("tabulated density has negative values".into()));
        }
        let mass = grid.total_mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::MassCheck { mass, tol: MASS_TOL });
        }
        Ok(Self::with_default_eps(DensityKind::Tabulated { grid }))
    }

    fn with_default_eps(kind: DensityKind) -> Self {
        let epsilon = match &kind {
            DensityKind::Pareto { alpha, .. } => Some((alpha / 2.0).min(1.0)),
            DensityKind::LogCounterexample => None,
            DensityKind::Tabulated { grid } => match grid.envelope.decay {
                Decay::PowerLaw if grid.envelope.constant > 0.0 => {
                    let room = grid.envelope.exponent - 1.0;
                    if room > 0.0 {
                        Some((room / 2.0).min(1.0))
                    } else {
                        None
                    }
                }
                Decay::LogPower if grid.envelope.constant > 0.0 => None,
                _ => Some(1.0),
            },
            _ => Some(1.0),
        };
        Self { kind, epsilon }
    }

    /// Declares the moment order. Rejected when the ε-moment is infinite.
    pub fn with_epsilon(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1], got {eps}"
            )));
        }
        if !self.moment_eps(eps)?.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{} has no finite moment of order {eps}",
                self.name()
            )));
        }
        self.epsilon = Some(eps);
        Ok(self)
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DensityKind::Exponential { rate } => format!("exponential(rate={rate})"),
            DensityKind::Uniform { a, b } => format!("uniform({a},{b})"),
            DensityKind::Gamma { shape, rate } => format!("gamma(shape={shape},rate={rate})"),
            DensityKind::Pareto { alpha, scale } => format!("pareto(alpha={alpha},scale={scale})"),
            DensityKind::LogCounterexample => "log_counterexample".into(),
            DensityKind::SqrtSingular => "sqrt_singular".into(),
            DensityKind::Gaussian { mean, sd } => format!("gaussian(mean={mean},sd={sd})"),
            DensityKind::Tabulated { grid } => format!("tabulated(n={})", grid.len()),
        }
    }

    /// Closed support `[lo, hi]` (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            DensityKind::Exponential { .. } | DensityKind::Gamma { .. } => (0.0, f64::INFINITY),
            DensityKind::Uniform { a, b } => (*a, *b),
            DensityKind::Pareto { scale, .. } => (*scale, f64::INFINITY),
            DensityKind::LogCounterexample => (E, f64::INFINITY),
            DensityKind::SqrtSingular => (0.0, 1.0),
            DensityKind::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            DensityKind::Tabulated { grid } => grid.support(),
        }
    }

    pub fn is_non_negative_support(&self) -> bool {
        self.support().0 >= 0.0
    }

    pub fn tail_class(&self) -> TailClass {
        match &self.kind {
            DensityKind::Uniform { .. } | DensityKind::SqrtSingular => TailClass::Compact,
            DensityKind::Exponential { .. } | DensityKind::Gamma { .. } | DensityKind::Gaussian { .. } => {
                TailClass::Exponential
            }
            DensityKind::Pareto { alpha, .. } => TailClass::PowerLaw { alpha: *alpha },
            DensityKind::LogCounterexample => TailClass::LogPower,
            DensityKind::Tabulated { grid } => match grid.envelope.decay {
                _ if grid.envelope.constant == 0.0 => TailClass::Compact,
                Decay::Zero => TailClass::Compact,
                Decay::Exponential => TailClass::Exponential,
                Decay::PowerLaw => TailClass::PowerLaw {
                    alpha: grid.envelope.exponent - 1.0,
                },
                Decay::LogPower => TailClass::LogPower,
            },
        }
    }

    // Formula valid on the interior of the support, extended continuously.
    fn formula(&self, x: f64) -> f64 {
        match &self.kind {
            DensityKind::Exponential { rate } => rate * (-rate * x).exp(),
            DensityKind::Uniform { a, b } => 1.0 / (b - a),
            DensityKind::Gamma { shape, rate } => {
                if x == 0.0 {
                    return if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        *rate
                    } else {
                        0.0
                    };
                }
                (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(*shape)).exp()
            }
            DensityKind::Pareto { alpha, scale } => alpha * scale.powf(*alpha) / x.powf(alpha + 1.0),
            DensityKind::LogCounterexample => {
                let l = x.ln();
                1.0 / (x * l * l)
            }
            DensityKind::SqrtSingular => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    0.5 / x.sqrt()
                }
            }
            DensityKind::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
            }
            DensityKind::Tabulated { grid } => grid.eval(x),
        }
    }

    /// Density value; zero off the support.
    pub fn eval(&self, x: f64) -> f64 {
        if let DensityKind::Tabulated { grid } = &self.kind {
            return grid.eval(x);
        }
        let (lo, hi) = self.support();
        let inside = match &self.kind {
            // (0, 1]: the singular endpoint is excluded.
            DensityKind::SqrtSingular => x > lo && x <= hi,
            _ => x >= lo && x <= hi,
        };
        if inside {
            self.formula(x)
        } else {
            0.0
        }
    }

    fn eval_limit(&self, x: f64, side: Side) -> f64 {
        if let DensityKind::Tabulated { grid } = &self.kind {
            return grid.eval(x);
        }
        let (lo, hi) = self.support();
        let inside = match side {
            Side::Left => x > lo && x <= hi,
            Side::Right => x >= lo && x < hi,
        };
        if inside {
            self.formula(x)
        } else {
            0.0
        }
    }

    /// Points where the density jumps or changes monotonicity.
    fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            DensityKind::Exponential { .. } => vec![0.0],
            DensityKind::Uniform { a, b } => vec![*a, *b],
            DensityKind::Gamma { shape, rate } => {
                if *shape > 1.0 {
                    vec![0.0, (shape - 1.0) / rate]
                } else {
                    vec![0.0]
                }
            }
            DensityKind::Pareto { scale, .. } => vec![*scale],
            DensityKind::LogCounterexample => vec![E],
            DensityKind::SqrtSingular => vec![0.0, 1.0],
            DensityKind::Gaussian { mean, .. } => vec![*mean],
            DensityKind::Tabulated { .. } => vec![],
        }
    }

    /// Exact `(sup, inf)` of the density over the half-open block `[l, r)`,
    /// using the piecewise monotone structure of the catalog entry.
    pub fn block_extrema(&self, l: f64, r: f64) -> Result<(f64, f64)> {
        if let DensityKind::Tabulated { grid } = &self.kind {
            return grid.block_extrema(l, r);
        }
        if !(r > l) {
            return Err(Error::InvalidParameter(format!("empty block [{l}, {r})")));
        }
        let mut cands = vec![
            self.eval(l),
            self.eval_limit(l, Side::Right),
            self.eval_limit(r, Side::Left),
        ];
        for b in self.breakpoints() {
            if b > l && b < r {
                cands.push(self.eval(b));
                cands.push(self.eval_limit(b, Side::Left));
                cands.push(self.eval_limit(b, Side::Right));
            }
        }
        let sup = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inf = cands.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok((sup, inf))
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            DensityKind::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            DensityKind::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            DensityKind::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, rate * x)
                }
            }
            DensityKind::Pareto { .. } | DensityKind::LogCounterexample => 1.0 - self.survival(x),
            DensityKind::SqrtSingular => x.clamp(0.0, 1.0).sqrt(),
            DensityKind::Gaussian { mean, sd } => normal(*mean, *sd).cdf(x),
            DensityKind::Tabulated { grid } => grid.cumulative(x),
        }
    }

    /// `P(X > x)`, evaluated without cancellation in the right tail.
    pub fn survival(&self, x: f64) -> f64 {
        match &self.kind {
            DensityKind::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            DensityKind::Gamma { shape, rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    gamma_ur(*shape, rate * x)
                }
            }
            DensityKind::Pareto { alpha, scale } => {
                if x <= *scale {
                    1.0
                } else {
                    (scale / x).powf(*alpha)
                }
            }
            DensityKind::LogCounterexample => {
                if x <= E {
                    1.0
                } else {
                    1.0 / x.ln()
                }
            }
            DensityKind::Gaussian { mean, sd } => normal(*mean, *sd).sf(x),
            DensityKind::Tabulated { grid } => (grid.total_mass() - grid.cumulative(x)).max(0.0),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Probability of `[a, b]`, choosing the numerically stable side.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let m = if self.cdf(a) > 0.5 {
            self.survival(a) - self.survival(b)
        } else {
            self.cdf(b) - self.cdf(a)
        };
        m.max(0.0)
    }

    /// `P(|X| ≥ t)`, equal to one for `t ≤ 0`.
    pub fn tail(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (self.survival(t) + self.cdf(-t)).min(1.0)
    }

    /// `sup f`, or `None` when the density is unbounded.
    pub fn sup_norm(&self) -> Option<f64> {
        let v = match &self.kind {
            DensityKind::Exponential { rate } => *rate,
            DensityKind::Uniform { a, b } => 1.0 / (b - a),
            DensityKind::Gamma { shape, rate } => {
                if *shape < 1.0 {
                    return None;
                } else if *shape == 1.0 {
                    *rate
                } else {
                    self.formula((shape - 1.0) / rate)
                }
            }
            DensityKind::Pareto { alpha, scale } => alpha / scale,
            DensityKind::LogCounterexample => 1.0 / E,
            DensityKind::SqrtSingular => return None,
            DensityKind::Gaussian { sd, .. } => 1.0 / (sd * (2.0 * PI).sqrt()),
            DensityKind::Tabulated { grid } => grid.max_value(),
        };
        Some(v)
    }

    /// Mean, `Infinite` when it diverges; `None` when it does not exist as a
    /// signed quantity (never for the catalog).
    pub fn mean(&self) -> Extended {
        match &self.kind {
            DensityKind::Exponential { rate } => Extended::Finite(1.0 / rate),
            DensityKind::Uniform { a, b } => Extended::Finite(0.5 * (a + b)),
            DensityKind::Gamma { shape, rate } => Extended::Finite(shape / rate),
            DensityKind::Pareto { alpha, scale } => {
                if *alpha > 1.0 {
                    Extended::Finite(alpha * scale / (alpha - 1.0))
                } else {
                    Extended::Infinite
                }
            }
            DensityKind::LogCounterexample => Extended::Infinite,
            DensityKind::SqrtSingular => Extended::Finite(1.0 / 3.0),
            DensityKind::Gaussian { mean, .. } => Extended::Finite(*mean),
            DensityKind::Tabulated { grid } => {
                if grid.envelope.is_integrable_with_weight(1.0) {
                    Extended::Finite(grid.first_moment())
                } else {
                    Extended::Infinite
                }
            }
        }
    }

    /// Variance, `Infinite` when the second moment diverges.
    pub fn variance(&self) -> Extended {
        match &self.kind {
            DensityKind::Exponential { rate } => Extended::Finite(1.0 / (rate * rate)),
            DensityKind::Uniform { a, b } => Extended::Finite((b - a) * (b - a) / 12.0),
            DensityKind::Gamma { shape, rate } => Extended::Finite(shape / (rate * rate)),
            DensityKind::Pareto { alpha, scale } => {
                if *alpha > 2.0 {
                    Extended::Finite(alpha * scale * scale / ((alpha - 1.0).powi(2) * (alpha - 2.0)))
                } else {
                    Extended::Infinite
                }
            }
            DensityKind::LogCounterexample => Extended::Infinite,
            DensityKind::SqrtSingular => Extended::Finite(4.0 / 45.0),
            DensityKind::Gaussian { sd, .. } => Extended::Finite(sd * sd),
            DensityKind::Tabulated { grid } => {
                if grid.envelope.is_integrable_with_weight(2.0) {
                    let m = grid.first_moment();
                    Extended::Finite(grid.second_moment() - m * m)
                } else {
                    Extended::Infinite
                }
            }
        }
    }

    /// `C = ∫|x|^ε f(x) dx`, closed form where available.
    pub fn moment_eps(&self, eps: f64) -> Result<Extended> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "moment order must be positive, got {eps}"
            )));
        }
        let v = match &self.kind {
            DensityKind::Exponential { rate } => gamma(1.0 + eps) / rate.powf(eps),
            DensityKind::Uniform { a, b } => {
                let g = |x: f64| x.signum() * x.abs().powf(1.0 + eps) / (1.0 + eps);
                (g(*b) - g(*a)) / (b - a)
            }
            DensityKind::Gamma { shape, rate } => (ln_gamma(shape + eps) - ln_gamma(*shape)).exp() / rate.powf(eps),
            DensityKind::Pareto { alpha, scale } => {
                if eps >= *alpha {
                    return Ok(Extended::Infinite);
                }
                alpha * scale.powf(eps) / (alpha - eps)
            }
            DensityKind::LogCounterexample => return Ok(Extended::Infinite),
            DensityKind::SqrtSingular => 1.0 / (2.0 * eps + 1.0),
            DensityKind::Gaussian { mean, sd } => {
                if *mean == 0.0 {
                    sd.powf(eps) * 2f64.powf(eps / 2.0) * gamma(0.5 * (1.0 + eps)) / PI.sqrt()
                } else {
                    return self.moment_by_quadrature(eps);
                }
            }
            DensityKind::Tabulated { grid } => {
                if !grid.envelope.is_integrable_with_weight(eps) {
                    return Ok(Extended::Infinite);
                }
                grid.abs_moment(eps)
            }
        };
        Ok(Extended::Finite(v))
    }

    /// `∫|x|^ε f(x) dx` by adaptive quadrature of the density.
    pub fn moment_by_quadrature(&self, eps: f64) -> Result<Extended> {
        if let DensityKind::LogCounterexample = self.kind {
            return Ok(Extended::Infinite);
        }
        if let DensityKind::Pareto { alpha, .. } = self.kind {
            if eps >= alpha {
                return Ok(Extended::Infinite);
            }
        }
        let g = |x: f64| x.abs().powf(eps) * self.eval(x);
        let (lo, hi) = self.support();
        let mut total = 0.0;
        // Split at 0 and at the support ends so every piece is smooth.
        let mut cuts = vec![lo, hi];
        if lo < 0.0 && hi > 0.0 {
            cuts.push(0.0);
        }
        if let DensityKind::Gaussian { mean, .. } = self.kind {
            if mean > lo && mean < hi {
                cuts.push(mean);
            }
        }
        cuts.retain(|c| c.is_finite());
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        if lo == f64::NEG_INFINITY {
            let a = cuts[0];
            total += quad::integrate_to_inf(|y| g(-y), -a, ABS_TOL)?;
        }
        for w in cuts.windows(2) {
            total += quad::integrate(g, w[0], w[1], ABS_TOL)?;
        }
        if hi == f64::INFINITY {
            let b = *cuts.last().expect("at least one finite cut");
            total += quad::integrate_to_inf(g, b, ABS_TOL)?;
        }
        Ok(Extended::Finite(total))
    }

    /// `ε ∫_0^∞ P(|X| > t) t^{ε-1} dt`, computed as `∫_0^∞ P(|X| > v^{1/ε}) dv`
    /// to remove the endpoint singularity.
    pub fn moment_by_tail_identity(&self, eps: f64) -> Result<Extended> {
        if let DensityKind::LogCounterexample = self.kind {
            return Ok(Extended::Infinite);
        }
        if let DensityKind::Pareto { alpha, .. } = self.kind {
            if eps >= alpha {
                return Ok(Extended::Infinite);
            }
        }
        let g = |v: f64| self.tail(v.powf(1.0 / eps));
        // Break the range at the support extent so compact tails are not missed.
        let (lo, hi) = self.support();
        let reach = lo.abs().max(hi.abs());
        let mut total = 0.0;
        if reach.is_finite() {
            let v_end = reach.powf(eps);
            total += quad::integrate(g, 0.0, v_end, ABS_TOL)?;
        } else {
            let v_mid = 1.0;
            total += quad::integrate(g, 0.0, v_mid, ABS_TOL)?;
            total += quad::integrate_to_inf(g, v_mid, ABS_TOL)?;
        }
        Ok(Extended::Finite(total))
    }

    /// Truncated mean `m(x) = ∫_0^x P(X > y) dy` for non-negative support.
    pub fn truncated_mean(&self, x: f64) -> Result<f64> {
        if !self.is_non_negative_support() {
            return Err(Error::NegativeSupport);
        }
        if !(x >= 0.0) {
            return Err(Error::InvalidParameter(format!("truncated mean needs x >= 0, got {x}")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let v = match &self.kind {
            DensityKind::Exponential { rate } => -(-rate * x).exp_m1() / rate,
            DensityKind::Uniform { a, b } => {
                if x <= *a {
                    x
                } else if x >= *b {
                    0.5 * (a + b)
                } else {
                    // ∫_a^x (b - y)/(b - a) dy
                    a + ((b - a) * (b - a) - (b - x) * (b - x)) / (2.0 * (b - a))
                }
            }
            DensityKind::Pareto { alpha, scale } => {
                if x <= *scale {
                    x
                } else if (alpha - 1.0).abs() < 1e-14 {
                    scale + scale * (x / scale).ln()
                } else {
                    scale + scale.powf(*alpha) * (x.powf(1.0 - alpha) - scale.powf(1.0 - alpha)) / (1.0 - alpha)
                }
            }
            DensityKind::SqrtSingular => {
                let y = x.min(1.0);
                y - 2.0 / 3.0 * y.powf(1.5)
            }
            DensityKind::LogCounterexample => {
                if x <= E {
                    x
                } else {
                    E + quad::integrate(|y: f64| 1.0 / y.ln(), E, x, ABS_TOL * x)?
                }
            }
            _ => {
                let (_, hi) = self.support();
                let top = x.min(hi);
                let mut v = quad::integrate(|y| self.survival(y), 0.0, top, ABS_TOL)?;
                if x > top {
                    v += 0.0;
                }
                v
            }
        };
        Ok(v)
    }

    /// Inverse CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            DensityKind::Exponential { rate } => -(-u).ln_1p() / rate,
            DensityKind::Uniform { a, b } => a + (b - a) * u,
            DensityKind::Gamma { shape, rate } => statrs::distribution::Gamma::new(*shape, *rate)
                .expect("validated parameters")
                .inverse_cdf(u),
            DensityKind::Pareto { alpha, scale } => scale * (1.0 - u).powf(-1.0 / alpha),
            DensityKind::LogCounterexample => (1.0 / (1.0 - u)).exp(),
            DensityKind::SqrtSingular => u * u,
            DensityKind::Gaussian { mean, sd } => normal(*mean, *sd).inverse_cdf(u),
            DensityKind::Tabulated { grid } => grid.inverse_cumulative(u),
        }
    }

    /// One inverse-CDF draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Open interval keeps the unbounded quantiles finite.
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        self.quantile(u)
    }

    /// `n` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        if let DensityKind::Tabulated { grid } = &self.kind {
            let mass = grid.total_mass();
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(Error::MassCheck { mass, tol: MASS_TOL });
            }
        }
        Ok((0..n).map(|_| self.draw(rng)).collect())
    }

    /// Envelope for density values at `|t| ≥ reach`, valid on the support.
    ///
    /// `reach` is the smallest distance from the origin at which the
    /// envelope will be queried. Returns `None` when no decreasing bound is
    /// available from that distance on.
    pub fn value_envelope(&self, reach: f64) -> Option<TailEnvelope> {
        let reach = reach.max(0.0);
        match &self.kind {
            DensityKind::Exponential { rate } => Some(TailEnvelope::new(0.0, *rate, *rate, Decay::Exponential).exact()),
            DensityKind::Uniform { a, b } => Some(TailEnvelope::zero(a.abs().max(b.abs()).min(reach)).exact()),
            DensityKind::SqrtSingular => Some(TailEnvelope::zero(1.0f64.min(reach)).exact()),
            DensityKind::Pareto { alpha, scale } => Some(
                TailEnvelope::new(*scale, alpha * scale.powf(*alpha), alpha + 1.0, Decay::PowerLaw)
                    .with_cap(alpha / scale)
                    .exact(),
            ),
            DensityKind::LogCounterexample => Some(
                TailEnvelope::new(E, 1.0, 2.0, Decay::LogPower)
                    .with_cap(1.0 / E)
                    .exact(),
            ),
            DensityKind::Gaussian { mean, sd } => {
                let d0 = reach - mean.abs();
                if d0 <= 0.0 {
                    return None;
                }
                let lambda = d0 / (sd * sd);
                let at = normal(0.0, *sd).pdf_at(d0);
                Some(TailEnvelope::new(
                    reach,
                    at * (lambda * reach).exp(),
                    lambda,
                    Decay::Exponential,
                ))
            }
            DensityKind::Gamma { shape, rate } => {
                let t0 = reach.max(1e-300);
                let lambda = if *shape <= 1.0 {
                    *rate
                } else {
                    rate - (shape - 1.0) / t0
                };
                if lambda <= 0.0 || !self.formula(t0).is_finite() {
                    return None;
                }
                let c = (self.formula(t0).ln() + lambda * t0).exp();
                Some(TailEnvelope::new(reach, c, lambda, Decay::Exponential))
            }
            DensityKind::Tabulated { grid } => Some(grid.envelope.clone()),
        }
    }

    /// Bound on the tail mass `P(|X| ≥ t)`: the closed form when the catalog
    /// has one, otherwise Markov's inequality at the declared moment order.
    pub fn tail_mass_envelope(&self) -> Option<TailEnvelope> {
        match &self.kind {
            DensityKind::Exponential { rate } => Some(
                TailEnvelope::new(0.0, 1.0, *rate, Decay::Exponential)
                    .with_cap(1.0)
                    .exact(),
            ),
            DensityKind::Pareto { alpha, scale } => Some(
                TailEnvelope::new(*scale, scale.powf(*alpha), *alpha, Decay::PowerLaw)
                    .with_cap(1.0)
                    .exact(),
            ),
            DensityKind::Uniform { a, b } => Some(TailEnvelope::zero(a.abs().max(b.abs())).exact()),
            DensityKind::SqrtSingular => Some(TailEnvelope::zero(1.0).exact()),
            // Chernoff at λ = 1/σ: P(|X| ≥ t) ≤ 2 e^{λ|μ| + 1/2} e^{−λt}.
            DensityKind::Gaussian { mean, sd } => Some(
                TailEnvelope::new(0.0, 2.0 * (mean.abs() / sd + 0.5).exp(), 1.0 / sd, Decay::Exponential).with_cap(1.0),
            ),
            // Chernoff at λ = rate/2: E e^{λX} = 2^shape.
            DensityKind::Gamma { shape, rate } => {
                Some(TailEnvelope::new(0.0, 2f64.powf(*shape), 0.5 * rate, Decay::Exponential).with_cap(1.0))
            }
            _ => {
                let eps = self.epsilon?;
                let c = self.moment_eps(eps).ok()?.finite()?;
                Some(TailEnvelope::new(0.0, c, eps, Decay::PowerLaw).with_cap(1.0))
            }
        }
    }

    /// A window `[lo, hi]` holding all but `mass` of the probability.
    pub fn suggested_window(&self, mass: f64) -> (f64, f64) {
        let (slo, shi) = self.support();
        let q = |u: f64| self.quantile(u);
        let lo = if slo.is_finite() { slo } else { q(0.5 * mass).floor() };
        let hi = if shi.is_finite() {
            shi
        } else {
            q(1.0 - 0.5 * mass).ceil()
        };
        (lo, hi)
    }
}

fn normal(mean: f64, sd: f64) -> Normal {
    Normal::new(mean, sd).expect("validated parameters")
}

trait PdfAt {
    fn pdf_at(&self, x: f64) -> f64;
}

impl PdfAt for Normal {
    fn pdf_at(&self, x: f64) -> f64 {
        statrs::distribution::Continuous::pdf(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<DensitySpec> {
        vec![
            DensitySpec::exponential(1.0).unwrap(),
            DensitySpec::uniform(0.0, 1.0).unwrap(),
            DensitySpec::gamma(2.5, 1.5).unwrap(),
            DensitySpec::gamma(0.5, 1.0).unwrap(),
            DensitySpec::pareto(0.5, 1.0).unwrap(),
            DensitySpec::pareto(0.6, 1.0).unwrap(),
            DensitySpec::log_counterexample(),
            DensitySpec::sqrt_singular(),
            DensitySpec::gaussian(0.0, 1.0).unwrap(),
            DensitySpec::gaussian(1.5, 0.7).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        assert_eq!(DensitySpec::uniform(0.0, 1.0).unwrap().eval(0.5), 1.0);
        assert_eq!(DensitySpec::exponential(1.0).unwrap().eval(0.0), 1.0);
        assert_relative_eq!(DensitySpec::log_counterexample().eval(E), 1.0 / E, max_relative = 1e-15);
        assert_eq!(DensitySpec::log_counterexample().eval(2.0), 0.0);
        assert_eq!(DensitySpec::sqrt_singular().eval(0.0), 0.0);
        assert_eq!(DensitySpec::exponential(1.0).unwrap().eval(-0.1), 0.0);
    }

    #[test]
    fn tail_examples() {
        for spec in catalog() {
            assert_eq!(spec.tail(-1.0), 1.0);
        }
        assert_relative_eq!(
            DensitySpec::exponential(1.0).unwrap().tail(2.0),
            (-2f64).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            DensitySpec::pareto(0.5, 1.0).unwrap().tail(4.0),
            0.5,
            max_relative = 1e-14
        );
    }

    #[test]
    fn catalog_masses_are_one() {
        for spec in catalog() {
            let (lo, hi) = spec.support();
            let mut mass = 0.0;
            let mut cuts = vec![lo, hi];
            cuts.extend(spec.breakpoints());
            cuts.retain(|c| c.is_finite());
            cuts.sort_by(|a, b| a.total_cmp(b));
            cuts.dedup();
            if lo.is_infinite() {
                mass += quad::integrate_to_inf(|y| spec.eval(-y), -cuts[0], 1e-12).unwrap();
            }
            for w in cuts.windows(2) {
                mass += quad::integrate(|x| spec.eval(x), w[0], w[1], 1e-12).unwrap();
            }
            if hi.is_infinite() {
                let b = *cuts.last().unwrap();
                if matches!(spec.kind(), DensityKind::LogCounterexample) {
                    // u = ln x turns the slow tail into ∫ du / u².
                    mass += quad::integrate_to_inf(|u: f64| 1.0 / (u * u), b.ln(), 1e-12).unwrap();
                } else {
                    mass += quad::integrate_to_inf(|x| spec.eval(x), b, 1e-12).unwrap();
                }
            }
            let tol = if matches!(spec.kind(), DensityKind::Pareto { .. }) {
                1e-6
            } else {
                1e-8
            };
            assert_abs_diff_eq!(mass, 1.0, epsilon = tol);
        }
    }

    #[test]
    fn moment_examples() {
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        assert_relative_eq!(u.moment_eps(1.0).unwrap().as_f64(), 0.5, max_relative = 1e-15);
        let p = DensitySpec::pareto(0.5, 1.0).unwrap();
        assert_relative_eq!(p.moment_eps(0.25).unwrap().as_f64(), 2.0, max_relative = 1e-14);
        assert_eq!(
            DensitySpec::log_counterexample().moment_eps(0.1).unwrap(),
            Extended::Infinite
        );
        assert_eq!(p.moment_eps(0.5).unwrap(), Extended::Infinite);
        assert!(DensitySpec::log_counterexample().epsilon().is_none());
    }

    #[test]
    fn moment_identity_routes_agree() {
        let specs = [
            DensitySpec::exponential(1.0).unwrap(),
            DensitySpec::exponential(2.5).unwrap(),
            DensitySpec::uniform(0.0, 1.0).unwrap(),
            DensitySpec::uniform(-0.5, 2.0).unwrap(),
            DensitySpec::gamma(2.5, 1.5).unwrap(),
            DensitySpec::gamma(0.7, 0.5).unwrap(),
        ];
        for spec in specs {
            for eps in [0.1, 0.25, 0.5, 1.0] {
                let closed = spec.moment_eps(eps).unwrap().as_f64();
                let direct = spec.moment_by_quadrature(eps).unwrap().as_f64();
                let tail = spec.moment_by_tail_identity(eps).unwrap().as_f64();
                assert_relative_eq!(direct, closed, max_relative = 1e-6);
                assert_relative_eq!(tail, closed, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn truncated_mean_examples() {
        let e = DensitySpec::exponential(1.0).unwrap();
        assert_relative_eq!(
            e.truncated_mean(1.0).unwrap(),
            1.0 - (-1f64).exp(),
            max_relative = 1e-14
        );
        assert_eq!(e.truncated_mean(0.0).unwrap(), 0.0);
        let p = DensitySpec::pareto(0.5, 1.0).unwrap();
        assert_relative_eq!(p.truncated_mean(100.0).unwrap(), 19.0, max_relative = 1e-14);
        assert!(matches!(
            DensitySpec::gaussian(0.0, 1.0).unwrap().truncated_mean(1.0),
            Err(Error::NegativeSupport)
        ));
        // m(∞) = μ for a finite mean
        assert_relative_eq!(e.truncated_mean(60.0).unwrap(), 1.0, max_relative = 1e-14);
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        assert_relative_eq!(u.truncated_mean(5.0).unwrap(), 0.5, max_relative = 1e-14);
        let g = DensitySpec::gamma(2.0, 1.0).unwrap();
        assert_relative_eq!(g.truncated_mean(80.0).unwrap(), 2.0, max_relative = 1e-8);
    }

    #[test]
    fn truncated_mean_matches_quadrature_of_survival() {
        for spec in [
            DensitySpec::pareto(0.6, 1.0).unwrap(),
            DensitySpec::log_counterexample(),
            DensitySpec::sqrt_singular(),
        ] {
            for x in [0.5, 2.0, 7.5, 40.0] {
                let closed = spec.truncated_mean(x).unwrap();
                let numeric = quad::integrate(|y| spec.survival(y), 0.0, x, 1e-11).unwrap();
                assert_relative_eq!(closed, numeric, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn markov_consistency() {
        for spec in catalog() {
            let Some(eps) = spec.epsilon() else { continue };
            let c = spec.moment_eps(eps).unwrap().as_f64();
            for i in 1..=200 {
                let t = 0.05 * i as f64 * (1.0 + i as f64 / 10.0);
                assert!(
                    spec.tail(t) <= (c / t.powf(eps)).min(1.0) + 1e-15,
                    "{} at {t}",
                    spec.name()
                );
            }
        }
    }

    #[test]
    fn tail_is_monotone() {
        for spec in catalog() {
            let mut prev = spec.tail(0.0);
            if spec.is_non_negative_support() {
                assert_eq!(prev, 1.0);
            }
            for i in 1..500 {
                let t = i as f64 * 0.1;
                let v = spec.tail(t);
                assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn block_extrema_exact() {
        let log = DensitySpec::log_counterexample();
        let (s, i) = log.block_extrema(2.0, 3.0).unwrap();
        assert_relative_eq!(s, 1.0 / E, max_relative = 1e-15);
        assert_eq!(i, 0.0);
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.block_extrema(0.0, 1.0).unwrap(), (1.0, 1.0));
        assert_eq!(u.block_extrema(0.5, 1.5).unwrap(), (1.0, 0.0));
        let g = DensitySpec::gaussian(0.0, 1.0).unwrap();
        let (s, _) = g.block_extrema(-0.5, 0.5).unwrap();
        assert_relative_eq!(s, 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-15);
        let (s, _) = DensitySpec::sqrt_singular().block_extrema(0.0, 0.5).unwrap();
        assert!(s.is_infinite());
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let xs = u.sample(&mut rng, 1_000_000).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.002);

        let e = DensitySpec::exponential(1.0).unwrap();
        assert!(e.sample(&mut rng, 1).unwrap()[0] > 0.0);

        let p = DensitySpec::pareto(0.5, 1.0).unwrap();
        let xs = p.sample(&mut rng, 100_000).unwrap();
        let frac = xs.iter().filter(|&&x| x > 4.0).count() as f64 / xs.len() as f64;
        assert!((frac - 0.5).abs() < 0.005);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = DensitySpec::gamma(2.5, 1.5).unwrap();
        let a = spec.sample(&mut ChaCha8Rng::seed_from_u64(3), 50).unwrap();
        let b = spec.sample(&mut ChaCha8Rng::seed_from_u64(3), 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kolmogorov_smirnov_below_threshold() {
        for (seed, spec) in catalog().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed as u64);
            let mut xs = spec.sample(&mut rng, 100_000).unwrap();
            xs.sort_by(|a, b| a.total_cmp(b));
            let n = xs.len() as f64;
            let d = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = spec.cdf(x);
                    (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(d < 0.01, "{}: KS distance {d}", spec.name());
        }
    }

    #[test]
    fn with_epsilon_validation() {
        assert!(DensitySpec::pareto(0.6, 1.0).unwrap().with_epsilon(0.25).is_ok());
        assert!(DensitySpec::pareto(0.6, 1.0).unwrap().with_epsilon(0.6).is_err());
        assert!(DensitySpec::log_counterexample().with_epsilon(0.01).is_err());
        assert!(DensitySpec::uniform(0.0, 1.0).unwrap().with_epsilon(0.0).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DensitySpec::uniform(1.0, 1.0).is_err());
        assert!(DensitySpec::exponential(-1.0).is_err());
        assert!(DensitySpec::pareto(0.0, 1.0).is_err());
        assert!(DensitySpec::gaussian(0.0, 0.0).is_err());
    }
}
