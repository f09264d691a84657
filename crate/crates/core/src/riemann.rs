//! Translated upper and lower Riemann sums over the whole line.
//!
//! `S_δ(x) = Σ_m δ · sup_{[mδ−x, (m+1)δ−x)} g` and `s_δ(x)` with the inf.
//! Blocks meeting the window come from a [`BlockSource`]; the infinitely
//! many blocks beyond it are summed in closed form from the tail envelope.

use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, TailEnvelope, MIN_SAMPLES_PER_BLOCK};
use crate::Extended;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Anything that can report block extrema of a non-negative function.
pub trait BlockSource: Sync {
    /// `(sup, inf)` over `[l, r)`.
    fn block_extrema(&self, l: f64, r: f64) -> Result<(f64, f64)>;
    /// Interval outside of which only the envelope is consulted.
    fn window(&self) -> (f64, f64);
    /// Monotone bound on the function outside the window.
    fn envelope(&self) -> TailEnvelope;
    /// Closed hull of the support.
    fn support(&self) -> (f64, f64);
    /// Smallest admissible mesh.
    fn min_mesh(&self) -> f64;
}

/// Samples of a grid function.
pub struct GridSource<'a>(pub &'a GridFunction);

impl BlockSource for GridSource<'_> {
    fn block_extrema(&self, l: f64, r: f64) -> Result<(f64, f64)> {
        self.0.block_extrema(l, r)
    }
    fn window(&self) -> (f64, f64) {
        (self.0.origin(), self.0.last_x())
    }
    fn envelope(&self) -> TailEnvelope {
        self.0.envelope.clone()
    }
    fn support(&self) -> (f64, f64) {
        self.0.support()
    }
    fn min_mesh(&self) -> f64 {
        MIN_SAMPLES_PER_BLOCK as f64 * self.0.spacing()
    }
}

/// Exact extrema of a catalog density from its monotone pieces.
pub struct ExactSource<'a> {
    spec: &'a DensitySpec,
    window: (f64, f64),
    envelope: TailEnvelope,
}

impl<'a> ExactSource<'a> {
    pub fn new(spec: &'a DensitySpec, window: (f64, f64)) -> Result<Self> {
        let reach = window.0.abs().min(window.1.abs());
        let reach = if spec.is_non_negative_support() {
            window.1
        } else {
            reach
        };
        let envelope = spec
            .value_envelope(reach)
            .ok_or_else(|| Error::InvalidParameter(format!("no tail envelope for {}", spec.name())))?;
        Ok(Self { spec, window, envelope })
    }
}

impl BlockSource for ExactSource<'_> {
    fn block_extrema(&self, l: f64, r: f64) -> Result<(f64, f64)> {
        self.spec.block_extrema(l, r)
    }
    fn window(&self) -> (f64, f64) {
        self.window
    }
    fn envelope(&self) -> TailEnvelope {
        self.envelope.clone()
    }
    fn support(&self) -> (f64, f64) {
        self.spec.support()
    }
    fn min_mesh(&self) -> f64 {
        0.0
    }
}

/// Right-continuous step function `values[i]` on `[breaks[i], breaks[i+1])`,
/// zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::InvalidParameter(
                "step function needs n+1 breaks for n values".into(),
            ));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("breaks must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "step values must be finite and non-negative".into(),
            ));
        }
        Ok(Self { breaks, values })
    }

    pub fn integral(&self) -> f64 {
        self.breaks
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| (w[1] - w[0]) * v)
            .sum()
    }
}

impl BlockSource for StepFunction {
    fn block_extrema(&self, l: f64, r: f64) -> Result<(f64, f64)> {
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        let first = self.breaks[0];
        let last = *self.breaks.last().expect("non-empty breaks");
        if l < first || r > last {
            sup = 0.0;
            inf = 0.0;
        }
        for (w, &v) in self.breaks.windows(2).zip(&self.values) {
            if w[0] < r && w[1] > l {
                sup = sup.max(v);
                inf = inf.min(v);
            }
        }
        Ok((sup, inf))
    }
    fn window(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().expect("non-empty breaks"))
    }
    fn envelope(&self) -> TailEnvelope {
        TailEnvelope::zero(0.0).exact()
    }
    fn support(&self) -> (f64, f64) {
        self.window()
    }
    fn min_mesh(&self) -> f64 {
        0.0
    }
}

/// Both translated sums at one mesh, split into window and tail parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSums {
    pub delta: f64,
    pub x: f64,
    pub upper: Extended,
    pub lower: f64,
    /// Upper-sum contribution of blocks beyond the window.
    pub tail_upper: Extended,
    /// Lower-sum contribution of blocks beyond the window.
    pub tail_lower: f64,
}

impl BlockSums {
    /// `upper − lower`, infinite when the upper sum is.
    pub fn gap(&self) -> Extended {
        match self.upper {
            Extended::Finite(u) => Extended::Finite((u - self.lower).max(0.0)),
            Extended::Infinite => Extended::Infinite,
        }
    }

    /// Uncertainty contributed by the tail blocks.
    pub fn tail_gap(&self) -> Extended {
        match self.tail_upper {
            Extended::Finite(u) => Extended::Finite((u - self.tail_lower).max(0.0)),
            Extended::Infinite => Extended::Infinite,
        }
    }
}

fn add(a: Extended, b: Extended) -> Extended {
    match (a, b) {
        (Extended::Finite(x), Extended::Finite(y)) => Extended::Finite(x + y),
        _ => Extended::Infinite,
    }
}

// Upper and lower sums of the blocks [t0 + jδ, t0 + (j+1)δ), j ≥ 0, t0 ≥ 0.
fn tail_blocks(env: &TailEnvelope, t0: f64, delta: f64, fully_supported: bool) -> (Extended, f64) {
    let upper = add(Extended::Finite(delta * env.value(t0)), env.integral_beyond(t0));
    let lower = if env.exact && fully_supported {
        env.integral_beyond(t0 + delta).finite().unwrap_or(0.0)
    } else {
        0.0
    };
    (upper, lower)
}

/// `S_δ(x)` and `s_δ(x)` together.
pub fn block_sums<S: BlockSource + ?Sized>(src: &S, delta: f64, x: f64) -> Result<BlockSums> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("mesh must be positive, got {delta}")));
    }
    let min = src.min_mesh();
    if delta < min * (1.0 - 1e-9) {
        return Err(Error::MeshTooFine {
            delta,
            spacing: min / MIN_SAMPLES_PER_BLOCK as f64,
            min_samples: MIN_SAMPLES_PER_BLOCK,
        });
    }
    let (wlo, whi) = src.window();
    let (slo, shi) = src.support();
    let lo = wlo.max(slo);
    let hi = whi.min(shi);
    let env = src.envelope();
    let mut upper = 0.0;
    let mut lower = 0.0;
    let (m_min, m_max) = if hi >= lo {
        (((lo + x) / delta).floor() as i64, ((hi + x) / delta).floor() as i64)
    } else {
        (0, -1)
    };
    for m in m_min..=m_max {
        let l = m as f64 * delta - x;
        let (s, i) = src.block_extrema(l, l + delta)?;
        if !s.is_finite() {
            return Ok(BlockSums {
                delta,
                x,
                upper: Extended::Infinite,
                lower,
                tail_upper: Extended::Finite(0.0),
                tail_lower: 0.0,
            });
        }
        upper += delta * s;
        lower += delta * i;
    }
    let mut tail_upper = Extended::Finite(0.0);
    let mut tail_lower = 0.0;
    // Right of the last window block.
    let t0 = (m_max + 1) as f64 * delta - x;
    if shi > t0 {
        if t0 < 0.0 {
            return Err(Error::InvalidParameter(
                "window must reach the origin on the supported side".into(),
            ));
        }
        let (u, l) = tail_blocks(&env, t0, delta, shi.is_infinite());
        tail_upper = add(tail_upper, u);
        tail_lower += l;
    }
    // Left of the first window block.
    let t1 = m_min as f64 * delta - x;
    if slo < t1 {
        if t1 > 0.0 {
            return Err(Error::InvalidParameter(
                "window must reach the origin on the supported side".into(),
            ));
        }
        let (u, l) = tail_blocks(&env, -t1, delta, slo.is_infinite());
        tail_upper = add(tail_upper, u);
        tail_lower += l;
    }
    Ok(BlockSums {
        delta,
        x,
        upper: add(Extended::Finite(upper), tail_upper),
        lower: lower + tail_lower,
        tail_upper,
        tail_lower,
    })
}

/// `S_δ(x)`.
pub fn upper_sum<S: BlockSource + ?Sized>(src: &S, delta: f64, x: f64) -> Result<Extended> {
    Ok(block_sums(src, delta, x)?.upper)
}

/// `s_δ(x)`.
pub fn lower_sum<S: BlockSource + ?Sized>(src: &S, delta: f64, x: f64) -> Result<f64> {
    Ok(block_sums(src, delta, x)?.lower)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "DRI_verified")]
    DriVerified,
    Inconclusive,
    UpperSumDiverges,
}

impl Verdict {
    /// Process exit code for the verdict.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::DriVerified => 0,
            Verdict::Inconclusive => 2,
            Verdict::UpperSumDiverges => 3,
        }
    }

    fn worst(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (UpperSumDiverges, _) | (_, UpperSumDiverges) => UpperSumDiverges,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => DriVerified,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannReport {
    pub mesh_ladder: Vec<f64>,
    pub upper_sums: Vec<Extended>,
    pub lower_sums: Vec<f64>,
    /// Upper minus lower contribution of the tail blocks, per mesh.
    pub tail_bounds: Vec<Extended>,
    pub verdict: Verdict,
    /// Window part of the gap at the finest admissible mesh.
    pub gap_at_finest: Option<f64>,
    pub tail_bound_at_finest: Option<Extended>,
    pub tolerance: f64,
    /// Requested meshes dropped because they were finer than the grid allows.
    pub skipped: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl RiemannReport {
    /// `(δ, upper − lower)` pairs.
    pub fn gaps(&self) -> Vec<(f64, Extended)> {
        self.mesh_ladder
            .iter()
            .zip(self.upper_sums.iter().zip(&self.lower_sums))
            .map(|(&d, (&u, &l))| {
                (
                    d,
                    match u {
                        Extended::Finite(u) => Extended::Finite((u - l).max(0.0)),
                        Extended::Infinite => Extended::Infinite,
                    },
                )
            })
            .collect()
    }

    /// Least-squares slope of `log gap` against `log δ`.
    pub fn gap_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .gaps()
            .into_iter()
            .filter_map(|(d, g)| g.finite().filter(|&g| g > 0.0).map(|g| (d.ln(), g.ln())))
            .collect();
        fit_slope(&pts).map(|(s, _)| s)
    }
}

/// Slope and R² of a least-squares line through `pts`.
pub fn fit_slope(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// The default dyadic ladder `2^{-j}`, `j = 0..=6`.
pub fn default_ladder() -> Vec<f64> {
    (0..=6).map(|j| 2f64.powi(-j)).collect()
}

/// Upper and lower sums over `ladder` and the resulting verdict.
pub fn dri_verdict<S: BlockSource + ?Sized>(src: &S, ladder: &[f64], tol: f64) -> Result<RiemannReport> {
    if ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter(
            "mesh ladder must be strictly decreasing".into(),
        ));
    }
    let min = src.min_mesh();
    let (kept, skipped): (Vec<f64>, Vec<f64>) = ladder.iter().partition(|&&d| d >= min * (1.0 - 1e-9));
    let mut diagnostics = Vec::new();
    if !skipped.is_empty() {
        diagnostics.push(format!(
            "{} mesh(es) below the resolution limit {min:.3e} were skipped",
            skipped.len()
        ));
    }
    let sums: Vec<BlockSums> = kept
        .par_iter()
        .map(|&d| block_sums(src, d, 0.0))
        .collect::<Result<_>>()?;
    let upper_sums: Vec<Extended> = sums.iter().map(|s| s.upper).collect();
    let lower_sums: Vec<f64> = sums.iter().map(|s| s.lower).collect();
    let tail_bounds: Vec<Extended> = sums.iter().map(|s| s.tail_gap()).collect();
    let (verdict, gap_at_finest, tail_bound_at_finest) = if upper_sums.iter().any(|u| !u.is_finite()) {
        diagnostics.push("upper sum is infinite: envelope not integrable or function unbounded".into());
        (Verdict::UpperSumDiverges, None, None)
    } else if let Some(last) = sums.last() {
        let total_gap = last.gap().as_f64();
        let tail = last.tail_gap();
        let window_gap = (total_gap - tail.as_f64()).max(0.0);
        let v = if total_gap <= tol {
            Verdict::DriVerified
        } else {
            diagnostics.push(format!(
                "gap {total_gap:.4e} at finest mesh {} exceeds tolerance {tol}",
                last.delta
            ));
            Verdict::Inconclusive
        };
        (v, Some(window_gap), Some(tail))
    } else {
        diagnostics.push("no admissible mesh in the ladder; refine the grid".into());
        (Verdict::Inconclusive, None, None)
    };
    Ok(RiemannReport {
        mesh_ladder: kept,
        upper_sums,
        lower_sums,
        tail_bounds,
        verdict,
        gap_at_finest,
        tail_bound_at_finest,
        tolerance: tol,
        skipped,
        diagnostics,
    })
}

/// Verdicts for the positive and negative parts of a signed grid function.
pub fn dri_verdict_signed(
    g: &GridFunction,
    ladder: &[f64],
    tol: f64,
) -> Result<(RiemannReport, Option<RiemannReport>)> {
    if g.is_non_negative() {
        return Ok((dri_verdict(&GridSource(g), ladder, tol)?, None));
    }
    let pos = g.map_values(|v| v.max(0.0))?;
    let neg = g.map_values(|v| (-v).max(0.0))?;
    let mut rp = dri_verdict(&GridSource(&pos), ladder, tol)?;
    let rn = dri_verdict(&GridSource(&neg), ladder, tol)?;
    rp.verdict = rp.verdict.worst(rn.verdict);
    Ok((rp, Some(rn)))
}

/// Both sides of the mesh comparison inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshCheck {
    pub upper_lhs: f64,
    pub upper_rhs: f64,
    pub lower_lhs: f64,
    pub lower_rhs: f64,
    pub pass: bool,
}

impl MeshCheck {
    pub fn upper_slack(&self) -> f64 {
        self.upper_rhs - self.upper_lhs
    }
}

/// Checks `S_δ(x) ≤ (1 + 2δ/δ′) S_δ′(x′)` and `s_δ(x) ≥ (1 − 2δ/δ′) s_δ′(x′)`.
///
/// Both sides are multiplied by `δ′` before comparing, so dyadic inputs are
/// compared without rounding.
pub fn mesh_inequality_check<S: BlockSource + ?Sized>(
    src: &S,
    delta: f64,
    delta_p: f64,
    x: f64,
    x_p: f64,
) -> Result<MeshCheck> {
    let a = block_sums(src, delta, x)?;
    let b = block_sums(src, delta_p, x_p)?;
    let (su, sl) = (a.upper.as_f64(), a.lower);
    let (tu, tl) = (b.upper.as_f64(), b.lower);
    let upper_ok = su * delta_p <= (delta_p + 2.0 * delta) * tu;
    let lower_ok = sl * delta_p >= (delta_p - 2.0 * delta) * tl;
    Ok(MeshCheck {
        upper_lhs: su,
        upper_rhs: (1.0 + 2.0 * delta / delta_p) * tu,
        lower_lhs: sl,
        lower_rhs: (1.0 - 2.0 * delta / delta_p) * tl,
        pass: upper_ok && lower_ok,
    })
}
