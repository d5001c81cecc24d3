//! Calibration of the uncertainty set from bivariate samples.
//!
//! Given `m` samples of `(X, Y)`, this module builds a [`ConstraintSet`]
//! that contains the truncated tail distribution with asymptotic
//! confidence `1 - alpha`:
//!
//! - the tail-mass interval `[lF, uF]` for `P(X >= x0, Y >= y0)` from the
//!   central limit theorem,
//! - upper bounds `uX`, `uY` on the truncated marginal densities at the
//!   mode, each the product of a bootstrap quantile of a kernel density
//!   estimate and a CLT upper bound on the conditioning probability,
//! - two-sided bands on slab probabilities inside the tail from the
//!   Kolmogorov-Smirnov statistic.
//!
//! The error budget is split across the 7 calibrated component groups
//! (Bonferroni), so every sub-procedure runs at level `1 - alpha/7`; the
//! two factors inside each density bound share one slot.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AxisRectangle, GeometryError};
use crate::jsonio;
use crate::stats;
use crate::substream;
use rand::Rng;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-finite sample coordinate at row {row}")]
    NonFinite { row: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(
        "axis {axis}: only {found} samples satisfy the conditioning event (need {need}); \
         raise the threshold percentile or supply more data"
    )]
    TooFewConditioned {
        axis: char,
        found: usize,
        need: usize,
    },
    #[error("empty tail sample: no observations with X >= x0 and Y >= y0")]
    EmptyTail,
    #[error("{component}: {source}")]
    Component {
        component: &'static str,
        #[source]
        source: Box<CalibrationError>,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Raw bivariate sample.
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: Vec<(f64, f64)>,
}

impl SampleSet {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, CalibrationError> {
        if points.len() < 2 {
            return Err(CalibrationError::TooFewSamples {
                need: 2,
                got: points.len(),
            });
        }
        for (row, &(x, y)) in points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(CalibrationError::NonFinite { row });
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

pub const MIN_BOOTSTRAP_REPS: usize = 200;
pub const MIN_CONDITIONED: usize = 30;

/// Which marginal density cap is being calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub alpha: f64,
    /// Percentile levels (in (0,1)) of the marginal order statistics that
    /// define the mode (x0, y0).
    pub threshold_percentiles: (f64, f64),
    /// Percentile levels defining the slab thresholds x_1..x_nX / y_1..y_nY;
    /// strictly increasing and above the threshold percentile.
    pub moment_percentiles_x: Vec<f64>,
    pub moment_percentiles_y: Vec<f64>,
    pub bootstrap_reps: usize,
    pub bandwidth_rule: String,
    pub rng_seed: u64,
}

impl CalibrationConfig {
    /// The preset slab layouts: thresholds at the top 20/16.5/13/9.5/6/2.5,
    /// 10/8/6/4/2/1, or 5/4/3/2/1/0.5 percent of each marginal.
    pub fn preset(name: &str, alpha: f64, seed: u64) -> Result<Self, CalibrationError> {
        let (t, levels): (f64, Vec<f64>) = match name {
            "80" => (0.80, vec![0.835, 0.87, 0.905, 0.94, 0.975]),
            "90" => (0.90, vec![0.92, 0.94, 0.96, 0.98, 0.99]),
            "95" => (0.95, vec![0.96, 0.97, 0.98, 0.99, 0.995]),
            other => {
                return Err(CalibrationError::BadConfig(format!(
                    "unknown percentile preset {other:?} (expected 80, 90 or 95)"
                )))
            }
        };
        Ok(Self {
            alpha,
            threshold_percentiles: (t, t),
            moment_percentiles_x: levels.clone(),
            moment_percentiles_y: levels,
            bootstrap_reps: 1000,
            bandwidth_rule: "silverman".into(),
            rng_seed: seed,
        })
    }

    /// Per-component confidence level under the 7-way Bonferroni split.
    pub fn component_level(&self) -> f64 {
        1.0 - self.alpha / 7.0
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CalibrationError::BadConfig(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        for (tag, t, levels) in [
            ("x", self.threshold_percentiles.0, &self.moment_percentiles_x),
            ("y", self.threshold_percentiles.1, &self.moment_percentiles_y),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(CalibrationError::BadConfig(format!(
                    "{tag} threshold percentile out of range: {t}"
                )));
            }
            if levels.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(CalibrationError::BadConfig(format!(
                    "{tag} moment percentiles must increase strictly"
                )));
            }
            if levels.iter().any(|&p| p <= t || p >= 1.0) {
                return Err(CalibrationError::BadConfig(format!(
                    "{tag} moment percentiles must lie in (threshold, 1)"
                )));
            }
        }
        if self.bootstrap_reps < MIN_BOOTSTRAP_REPS {
            return Err(CalibrationError::BadConfig(format!(
                "bootstrap_reps must be at least {MIN_BOOTSTRAP_REPS}, got {}",
                self.bootstrap_reps
            )));
        }
        if self.bandwidth_rule != "silverman" {
            return Err(CalibrationError::BadConfig(format!(
                "unknown bandwidth rule {:?}",
                self.bandwidth_rule
            )));
        }
        Ok(())
    }
}

/// One slab constraint: `a * F <= P(rect) <= b * F` when conditional
/// (with `F` the tail mass), or plain `a <= P(rect) <= b` otherwise.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConstraintRow {
    #[serde(flatten)]
    pub rect: AxisRectangle,
    pub a: f64,
    pub b: f64,
    pub conditional: bool,
}

/// Calibrated uncertainty set for the truncated tail distribution.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConstraintSet {
    pub x0: f64,
    pub y0: f64,
    #[serde(rename = "lF")]
    pub l_f: f64,
    #[serde(rename = "uF")]
    pub u_f: f64,
    #[serde(rename = "uX", with = "jsonio::ext")]
    pub u_x: f64,
    #[serde(rename = "uY", with = "jsonio::ext")]
    pub u_y: f64,
    pub rows: Vec<ConstraintRow>,
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let ok = (0.0..=1.0).contains(&self.l_f)
            && self.l_f <= self.u_f
            && self.u_f <= 1.0
            && self.u_x >= 0.0
            && self.u_y >= 0.0
            && self
                .rows
                .iter()
                .all(|r| 0.0 <= r.a && r.a <= r.b && r.b <= 1.0);
        if ok {
            Ok(())
        } else {
            Err(CalibrationError::BadConfig(
                "constraint set violates its invariants".into(),
            ))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constraint set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Two-sided CLT interval `mean ± z(level) * sd / sqrt(m)` for a Bernoulli
/// mean, clipped to [0, 1]. `level` is the normal quantile level used
/// directly, so a two-sided interval at confidence `1 - a` takes
/// `level = 1 - a/2`.
pub fn clt_interval(indicators: &[bool], level: f64) -> Result<(f64, f64), CalibrationError> {
    if indicators.len() < 2 {
        return Err(CalibrationError::TooFewSamples {
            need: 2,
            got: indicators.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CalibrationError::BadConfig(format!(
            "level must lie in (0,1), got {level}"
        )));
    }
    let m = indicators.len() as f64;
    let ones = indicators.iter().filter(|&&b| b).count() as f64;
    let mean = ones / m;
    let var = (ones * (1.0 - mean) * (1.0 - mean) + (m - ones) * mean * mean) / (m - 1.0);
    let half = stats::norm_quantile(level) * var.sqrt() / m.sqrt();
    Ok(((mean - half).max(0.0), (mean + half).min(1.0)))
}

/// Quantile of the Kolmogorov distribution `K(x) = P(sup |BB(t)| <= x)`,
/// solved by bisection on the alternating series
/// `K(x) = 1 - 2 sum_k (-1)^{k-1} exp(-2 k^2 x^2)`.
pub fn kolmogorov_quantile(level: f64) -> f64 {
    let level = level.clamp(f64::MIN_POSITIVE, 1.0 - 1e-10);
    let cdf = |x: f64| -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..1000 {
            let term = (-2.0 * (k * k) as f64 * x * x).exp();
            sum += sign * term;
            sign = -sign;
            if term < 1e-12 {
                break;
            }
        }
        (1.0 - 2.0 * sum).clamp(0.0, 1.0)
    };
    let (mut lo, mut hi) = (1e-8, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Kolmogorov-Smirnov confidence bands for the empirical CDF of `values`
/// at each threshold: `a = F(t) - q/sqrt(m1)`, `b = F(t-) + q/sqrt(m1)`,
/// clipped into [0, 1]. Rows the band cannot order (possible only with
/// heavily tied data) degrade to the trivial (0, 1) band.
pub fn ks_bounds(
    values: &[f64],
    thresholds: &[f64],
    level: f64,
) -> Result<Vec<(f64, f64)>, CalibrationError> {
    if values.is_empty() {
        return Err(CalibrationError::EmptyTail);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m1 = sorted.len() as f64;
    let band = kolmogorov_quantile(level) / m1.sqrt();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let le = sorted.partition_point(|&v| v <= t) as f64 / m1;
            let lt = sorted.partition_point(|&v| v < t) as f64 / m1;
            let a = (le - band).max(0.0);
            let b = (lt + band).min(1.0);
            if a <= b {
                (a, b)
            } else {
                (0.0, 1.0)
            }
        })
        .collect())
}

/// Upper confidence bound on a truncated marginal density at the mode:
/// bootstrap `level`-quantile of the (boundary-reflected) KDE at the mode,
/// times the CLT upper bound of the conditioning probability at the same
/// level.
pub fn density_upper_bound(
    samples: &SampleSet,
    axis: Axis,
    x0: f64,
    y0: f64,
    level: f64,
    cfg: &CalibrationConfig,
) -> Result<f64, CalibrationError> {
    cfg.validate()?;
    let (point, axis_tag) = match axis {
        Axis::X => (x0, 'X'),
        Axis::Y => (y0, 'Y'),
    };
    // Conditioning event: the other coordinate is in its tail.
    let conditioned: Vec<f64> = samples
        .points()
        .iter()
        .filter_map(|&(x, y)| match axis {
            Axis::X => (y >= y0).then_some(x),
            Axis::Y => (x >= x0).then_some(y),
        })
        .collect();
    if conditioned.len() < MIN_CONDITIONED {
        return Err(CalibrationError::TooFewConditioned {
            axis: axis_tag,
            found: conditioned.len(),
            need: MIN_CONDITIONED,
        });
    }
    let m0 = conditioned.len();
    let reps = cfg.bootstrap_reps;
    let axis_salt = match axis {
        Axis::X => 0x58,
        Axis::Y => 0x59,
    };
    let mut estimates: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(cfg.rng_seed, &[axis_salt, rep as u64]);
            let resample: Vec<f64> = (0..m0)
                .map(|_| conditioned[rng.gen_range(0..m0)])
                .collect();
            let bw = stats::silverman_bandwidth(&resample);
            stats::kde_reflected_at(point, &resample, bw)
        })
        .collect();
    estimates.sort_by(f64::total_cmp);
    let kde_quantile = stats::order_statistic(&estimates, level);

    let indicators: Vec<bool> = samples
        .points()
        .iter()
        .map(|&(x, y)| match axis {
            Axis::X => y >= y0,
            Axis::Y => x >= x0,
        })
        .collect();
    let (_, cond_upper) = clt_interval(&indicators, level)?;
    Ok(kde_quantile * cond_upper)
}

/// Assemble a full constraint set at joint confidence `1 - alpha`.
pub fn calibrate(
    samples: &SampleSet,
    cfg: &CalibrationConfig,
) -> Result<ConstraintSet, CalibrationError> {
    cfg.validate()?;
    let wrap = |component: &'static str| {
        move |source: CalibrationError| CalibrationError::Component {
            component,
            source: Box::new(source),
        }
    };

    let mut xs: Vec<f64> = samples.points().iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = samples.points().iter().map(|p| p.1).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let x0 = stats::order_statistic(&xs, cfg.threshold_percentiles.0);
    let y0 = stats::order_statistic(&ys, cfg.threshold_percentiles.1);

    let level = cfg.component_level();

    // Tail mass: two-sided interval at confidence 1 - alpha/7.
    let tail: Vec<bool> = samples
        .points()
        .iter()
        .map(|&(x, y)| x >= x0 && y >= y0)
        .collect();
    let two_sided = 1.0 - cfg.alpha / 14.0;
    let (l_f, u_f) = clt_interval(&tail, two_sided).map_err(wrap("tail-mass"))?;

    let u_x =
        density_upper_bound(samples, Axis::X, x0, y0, level, cfg).map_err(wrap("density-x"))?;
    let u_y =
        density_upper_bound(samples, Axis::Y, x0, y0, level, cfg).map_err(wrap("density-y"))?;

    let x_thresholds: Vec<f64> = cfg
        .moment_percentiles_x
        .iter()
        .map(|&p| stats::order_statistic(&xs, p))
        .collect();
    let y_thresholds: Vec<f64> = cfg
        .moment_percentiles_y
        .iter()
        .map(|&p| stats::order_statistic(&ys, p))
        .collect();

    let tail_x: Vec<f64> = samples
        .points()
        .iter()
        .filter(|&&(x, y)| x >= x0 && y >= y0)
        .map(|p| p.0)
        .collect();
    let tail_y: Vec<f64> = samples
        .points()
        .iter()
        .filter(|&&(x, y)| x >= x0 && y >= y0)
        .map(|p| p.1)
        .collect();

    let bands_x = ks_bounds(&tail_x, &x_thresholds, level).map_err(wrap("ks-x"))?;
    let bands_y = ks_bounds(&tail_y, &y_thresholds, level).map_err(wrap("ks-y"))?;

    let mut rows = Vec::with_capacity(bands_x.len() + bands_y.len());
    for (t, (a, b)) in x_thresholds.iter().zip(&bands_x) {
        rows.push(ConstraintRow {
            rect: AxisRectangle::new(x0, *t, y0, f64::INFINITY)?,
            a: *a,
            b: *b,
            conditional: true,
        });
    }
    for (t, (a, b)) in y_thresholds.iter().zip(&bands_y) {
        rows.push(ConstraintRow {
            rect: AxisRectangle::new(x0, f64::INFINITY, y0, *t)?,
            a: *a,
            b: *b,
            conditional: true,
        });
    }

    let set = ConstraintSet {
        x0,
        y0,
        l_f,
        u_f,
        u_x,
        u_y,
        rows,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sample_bivariate_normal;

    #[test]
    fn clt_interval_matches_direct_formula() {
        // 500 ones out of 1000 at level 0.975.
        let mut ind = vec![true; 500];
        ind.extend(vec![false; 500]);
        let (lo, hi) = clt_interval(&ind, 0.975).unwrap();
        // sd = sqrt(250/999) = 0.50025..., z = 1.95996
        assert!((lo - 0.46899).abs() < 1e-4, "lo = {lo}");
        assert!((hi - 0.53101).abs() < 1e-4, "hi = {hi}");

        assert_eq!(clt_interval(&[true, true, true], 0.9).unwrap(), (1.0, 1.0));
        assert_eq!(clt_interval(&[false, false], 0.9).unwrap(), (0.0, 0.0));
        assert!(clt_interval(&[true], 0.9).is_err());
    }

    /// Independent oracle: partial sums of the series evaluated at a
    /// candidate, refined by bisection on a separate implementation.
    fn kolmogorov_quantile_oracle(level: f64) -> f64 {
        let cdf = |x: f64| -> f64 {
            let mut s = 0.0;
            for k in 1..2000 {
                let t = (-2.0 * (k as f64 * k as f64) * x * x).exp();
                s += if k % 2 == 1 { t } else { -t };
                if t < 1e-14 {
                    break;
                }
            }
            1.0 - 2.0 * s
        };
        let (mut lo, mut hi) = (1e-6, 8.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn kolmogorov_quantiles_match_series_oracle() {
        let q95 = kolmogorov_quantile(0.95);
        assert!((q95 - 1.3581).abs() < 1e-4, "q95 = {q95}");
        // Pinned from the oracle for the 7-way split of alpha = 0.05.
        let lvl = 1.0 - 0.05 / 7.0;
        let pinned = 1.6785;
        assert!((kolmogorov_quantile_oracle(lvl) - pinned).abs() < 1e-4);
        assert!((kolmogorov_quantile(lvl) - pinned).abs() < 1e-4);
        // Levels at 1 are capped, not divergent.
        assert!(kolmogorov_quantile(1.0).is_finite());
    }

    #[test]
    fn ks_bounds_hand_cases() {
        let q = kolmogorov_quantile(0.95);
        let vals = [1.0, 2.0, 3.0, 4.0];
        let out = ks_bounds(&vals, &[2.5], 0.95).unwrap();
        // 0.5 -/+ 1.3581/2 clips to (0, 1).
        assert_eq!(out[0], (0.0, 1.0));

        let below = ks_bounds(&vals, &[0.5], 0.95).unwrap();
        assert_eq!(below[0].0, 0.0);
        assert!((below[0].1 - q / 2.0).abs() < 1e-12);

        // Band shrinks toward the true CDF as m1 grows.
        let big: Vec<f64> = (0..100_000).map(|i| i as f64 / 100_000.0).collect();
        let out = ks_bounds(&big, &[0.25], 0.95).unwrap();
        assert!(out[0].1 - out[0].0 < 0.01);
        assert!(out[0].0 <= 0.25 && 0.25 <= out[0].1);

        assert!(ks_bounds(&[], &[1.0], 0.95).is_err());
    }

    #[test]
    fn density_bound_covers_uniform_edge() {
        let mut rng = crate::substream(77, &[5]);
        use rand::Rng;
        // X uniform on [0,1], conditioning event always true.
        let pts: Vec<(f64, f64)> = (0..10_000).map(|_| (rng.gen::<f64>(), 1.0)).collect();
        let samples = SampleSet::new(pts).unwrap();
        let mut cfg = CalibrationConfig::preset("90", 0.05, 9).unwrap();
        cfg.bootstrap_reps = 500;
        let bound = density_upper_bound(&samples, Axis::X, 0.0, 0.5, 0.95, &cfg).unwrap();
        assert!((0.9..=1.5).contains(&bound), "bound = {bound}");

        cfg.bootstrap_reps = 10;
        assert!(matches!(
            density_upper_bound(&samples, Axis::X, 0.0, 0.5, 0.95, &cfg),
            Err(CalibrationError::BadConfig(_))
        ));
    }

    #[test]
    fn density_bound_exceeds_normal_density_at_mode() {
        // Marginal N(0,1) evaluated at its 90th percentile; the bound must
        // sit above the true density in nearly every seed.
        let target = stats::norm_pdf(1.2816);
        let mut wins = 0;
        let seeds = 12;
        for seed in 0..seeds {
            let pts: Vec<(f64, f64)> = sample_bivariate_normal(100_000, 1.0, seed as u64 + 400)
                .into_iter()
                .map(|(x, _)| (x, 1.0))
                .collect();
            let samples = SampleSet::new(pts).unwrap();
            let mut cfg = CalibrationConfig::preset("90", 0.05, seed as u64).unwrap();
            cfg.bootstrap_reps = 200;
            let bound =
                density_upper_bound(&samples, Axis::X, 1.2816, 0.0, 0.95, &cfg).unwrap();
            if bound >= target {
                wins += 1;
            }
        }
        assert!(wins >= seeds - 1, "bound failed in {} of {seeds} seeds", seeds - wins);
    }

    #[test]
    fn calibrate_is_deterministic_and_valid() {
        let pts = sample_bivariate_normal(20_000, 4.0, 123);
        let samples = SampleSet::new(pts).unwrap();
        let mut cfg = CalibrationConfig::preset("90", 0.05, 7).unwrap();
        cfg.bootstrap_reps = 250;
        let a = calibrate(&samples, &cfg).unwrap();
        let b = calibrate(&samples, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        a.validate().unwrap();
        assert_eq!(a.rows.len(), 10);
        assert!(a.rows.iter().all(|r| r.conditional));
        // Round-trip through the JSON schema.
        let back = ConstraintSet::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
        assert!(back.rows[0].rect.y2.is_infinite());
    }

    #[test]
    fn calibrate_handles_degenerate_samples() {
        let pts = vec![(2.0, 3.0); 64];
        let samples = SampleSet::new(pts).unwrap();
        let mut cfg = CalibrationConfig::preset("90", 0.05, 7).unwrap();
        cfg.bootstrap_reps = 200;
        let set = calibrate(&samples, &cfg).unwrap();
        set.validate().unwrap();
        assert_eq!((set.l_f, set.u_f), (1.0, 1.0));
        assert!(set.rows.iter().all(|r| r.a == 0.0 && r.b == 1.0 || r.a <= r.b));
    }

    #[test]
    fn calibrate_interval_covers_true_tail_mass() {
        // 30 replications; the CLT interval at level 1 - 0.05/7 two-sided
        // must cover the analytic tail mass nearly always.
        let mut covered = 0;
        let runs = 30;
        for seed in 0..runs {
            let pts = sample_bivariate_normal(20_000, 4.0, 1000 + seed);
            let samples = SampleSet::new(pts).unwrap();
            let mut cfg = CalibrationConfig::preset("90", 0.05, seed).unwrap();
            cfg.bootstrap_reps = 200;
            let set = calibrate(&samples, &cfg).unwrap();
            let truth = (1.0 - stats::norm_cdf(set.x0 / 4.0)) * (1.0 - stats::norm_cdf(set.y0 / 4.0));
            if set.l_f <= truth && truth <= set.u_f {
                covered += 1;
            }
        }
        assert!(covered as f64 >= 0.93 * runs as f64, "covered {covered}/{runs}");
    }

    #[test]
    fn joint_coverage_meets_bonferroni_budget() {
        // Truth satisfies every calibrated constraint in at least
        // 1 - alpha - slack of replications.
        let runs = 40;
        let mut good = 0;
        for seed in 0..runs {
            let pts = sample_bivariate_normal(20_000, 4.0, 2000 + seed);
            let samples = SampleSet::new(pts).unwrap();
            let mut cfg = CalibrationConfig::preset("90", 0.05, seed).unwrap();
            cfg.bootstrap_reps = 200;
            let set = calibrate(&samples, &cfg).unwrap();
            let sd = 4.0;
            let phi_bar = |t: f64| 1.0 - stats::norm_cdf(t / sd);
            let tail = phi_bar(set.x0) * phi_bar(set.y0);
            let fx = stats::norm_pdf(set.x0 / sd) / sd * phi_bar(set.y0);
            let fy = stats::norm_pdf(set.y0 / sd) / sd * phi_bar(set.x0);
            let mut ok = set.l_f <= tail && tail <= set.u_f && fx <= set.u_x && fy <= set.u_y;
            for row in &set.rows {
                // Conditional slab probability under independence.
                let p = if row.rect.y2.is_infinite() {
                    (phi_bar(set.x0) - phi_bar(row.rect.x2)) / phi_bar(set.x0)
                } else {
                    (phi_bar(set.y0) - phi_bar(row.rect.y2)) / phi_bar(set.y0)
                };
                ok &= row.a <= p && p <= row.b;
            }
            if ok {
                good += 1;
            }
        }
        let frac = good as f64 / runs as f64;
        assert!(frac >= 1.0 - 0.05 - 0.05, "joint coverage {frac}");
    }
}
