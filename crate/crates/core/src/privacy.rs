//! Label histograms and the Laplace mechanism.
//!
//! A node slices its label series into windows, counts the values per bin and
//! adds independent Laplace noise to every bin before the histogram leaves the
//! node. A counting query changes by at most one when a single reading changes,
//! so the sensitivity is fixed to 1 and the noise scale is `1 / epsilon`.
//!
//! Noised counts are kept as they are: negative or fractional values are not
//! clamped or rounded.

use std::fmt;

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::topology::NodeId;
use crate::{Error, Result};

/// Privacy parameter of the Laplace mechanism. Always finite and positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Epsilon(value))
        } else {
            Err(Error::InvalidParameter(format!(
                "epsilon must be finite and positive, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Epsilon {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Epsilon::new(value)
    }
}

impl From<Epsilon> for f64 {
    fn from(e: Epsilon) -> f64 {
        e.0
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Equal-width binning of a label range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    lower: f64,
    upper: f64,
    bin_count: usize,
}

impl BinSpec {
    pub fn new(lower: f64, upper: f64, bin_count: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "bin range must satisfy lower < upper, got [{lower}, {upper})"
            )));
        }
        if bin_count == 0 {
            return Err(Error::InvalidParameter("bin_count must be at least 1".into()));
        }
        Ok(BinSpec {
            lower,
            upper,
            bin_count,
        })
    }

    /// Spans `[min, max]` of `values`. A degenerate range is widened by 0.5 on
    /// each side so the spec stays valid.
    pub fn fit(values: impl IntoIterator<Item = f64>, bin_count: usize) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, v) in values.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "bin range fit",
                    index: i,
                });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            return Err(Error::EmptyInput("bin range fit"));
        }
        if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        Self::new(lo, hi, bin_count)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    /// `bin_count + 1` edges from `lower` to `upper`.
    pub fn edges(&self) -> Vec<f64> {
        let width = (self.upper - self.lower) / self.bin_count as f64;
        (0..=self.bin_count)
            .map(|k| self.lower + k as f64 * width)
            .collect()
    }

    /// Bin of `value`; values outside the range land in the boundary bins.
    pub fn bin_of(&self, value: f64) -> usize {
        if value < self.lower {
            return 0;
        }
        if value >= self.upper {
            return self.bin_count - 1;
        }
        let width = (self.upper - self.lower) / self.bin_count as f64;
        (((value - self.lower) / width) as usize).min(self.bin_count - 1)
    }
}

/// Which node, window and channel a histogram describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramTag {
    pub origin: NodeId,
    pub window_index: usize,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyHistogram {
    pub counts: Vec<f64>,
    /// `None` for raw counts, the privacy parameter once noised.
    pub epsilon: Option<Epsilon>,
    pub window_index: usize,
    pub channel: usize,
    pub origin: NodeId,
}

impl NoisyHistogram {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn is_private(&self) -> bool {
        self.epsilon.is_some()
    }
}

/// Counts the window's values per bin.
pub fn build_histogram(window: &[f64], spec: &BinSpec, tag: HistogramTag) -> Result<NoisyHistogram> {
    if window.is_empty() {
        return Err(Error::EmptyInput("histogram window"));
    }
    let mut counts = vec![0.0; spec.bin_count()];
    for (i, &v) in window.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::NonFinite {
                context: "histogram window",
                index: i,
            });
        }
        counts[spec.bin_of(v)] += 1.0;
    }
    Ok(NoisyHistogram {
        counts,
        epsilon: None,
        window_index: tag.window_index,
        channel: tag.channel,
        origin: tag.origin,
    })
}

/// Laplace distribution centred at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    scale: f64,
    location: f64,
    sensitivity: f64,
}

impl LaplaceParams {
    /// Sensitivity of a single-bin counting query.
    pub const COUNT_SENSITIVITY: f64 = 1.0;

    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "laplace scale must be positive, got {scale}"
            )));
        }
        Ok(LaplaceParams {
            scale,
            location: 0.0,
            sensitivity: Self::COUNT_SENSITIVITY,
        })
    }

    /// Calibrated noise for a query with the given sensitivity: scale = sensitivity / epsilon.
    pub fn calibrated(sensitivity: f64, epsilon: Epsilon) -> Result<Self> {
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sensitivity must be positive, got {sensitivity}"
            )));
        }
        let mut params = Self::new(sensitivity / epsilon.value())?;
        params.sensitivity = sensitivity;
        Ok(params)
    }

    pub fn for_counts(epsilon: Epsilon) -> Result<Self> {
        Self::calibrated(Self::COUNT_SENSITIVITY, epsilon)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (-(x - self.location).abs() / self.scale).exp() / (2.0 * self.scale)
    }

    /// One draw by inverting the CDF of a uniform on the open unit interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
        self.location - self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}

/// Draws one value from Laplace(0, scale).
pub fn laplace_sample<R: Rng + ?Sized>(params: &LaplaceParams, rng: &mut R) -> f64 {
    params.sample(rng)
}

/// Adds independent Laplace(0, 1/eps) noise to every bin.
///
/// Fails on an already-noised histogram: noising twice would silently change
/// the privacy guarantee.
pub fn privatize<R: Rng + ?Sized>(hist: &NoisyHistogram, eps: Epsilon, rng: &mut R) -> Result<NoisyHistogram> {
    if let Some(existing) = hist.epsilon {
        return Err(Error::PrivacyViolation(format!(
            "histogram from `{}` (window {}, channel {}) is already noised with epsilon {existing}",
            hist.origin, hist.window_index, hist.channel
        )));
    }
    let params = LaplaceParams::for_counts(eps)?;
    let counts = hist.counts.iter().map(|&c| c + params.sample(rng)).collect();
    Ok(NoisyHistogram {
        counts,
        epsilon: Some(eps),
        ..hist.clone()
    })
}

/// Elementwise mean of histograms for the same window and channel.
///
/// Each bin is summed in sorted order, so the result does not depend on the
/// order of `hists`.
pub fn average_histograms<H: AsRef<NoisyHistogram>>(hists: &[H]) -> Result<Vec<f64>> {
    let first = hists
        .first()
        .ok_or(Error::EmptyInput("histogram average"))?
        .as_ref();
    for h in hists.iter().map(AsRef::as_ref) {
        if h.bin_count() != first.bin_count() {
            return Err(Error::shape("histogram bins", first.bin_count(), h.bin_count()));
        }
        if h.channel != first.channel || h.window_index != first.window_index {
            return Err(Error::InvalidParameter(format!(
                "cannot average histograms of (window {}, channel {}) and (window {}, channel {})",
                first.window_index, first.channel, h.window_index, h.channel
            )));
        }
    }
    let n = hists.len() as f64;
    let mut column = Vec::with_capacity(hists.len());
    Ok((0..first.bin_count())
        .map(|k| {
            column.clear();
            column.extend(hists.iter().map(|h| h.as_ref().counts[k]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect())
}

impl AsRef<NoisyHistogram> for NoisyHistogram {
    fn as_ref(&self) -> &NoisyHistogram {
        self
    }
}

/// Histogram proportions as fed to a model, with the privacy tag of the
/// histograms they were derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramInput {
    pub proportions: Vec<f64>,
    pub epsilon: Option<Epsilon>,
}

impl HistogramInput {
    /// Averages `hists` and divides by the window size.
    ///
    /// All inputs must carry the same privacy tag; post-processing never
    /// changes it.
    pub fn from_histograms<H: AsRef<NoisyHistogram>>(hists: &[H], window_size: usize) -> Result<Self> {
        if window_size == 0 {
            return Err(Error::InvalidParameter("window size must be positive".into()));
        }
        let mean = average_histograms(hists)?;
        let epsilon = hists[0].as_ref().epsilon;
        if let Some(h) = hists.iter().map(AsRef::as_ref).find(|h| h.epsilon != epsilon) {
            return Err(Error::PrivacyViolation(format!(
                "mixed privacy tags in one average ({:?} vs {:?} from `{}`)",
                epsilon, h.epsilon, h.origin
            )));
        }
        let w = window_size as f64;
        Ok(HistogramInput {
            proportions: mean.into_iter().map(|v| v / w).collect(),
            epsilon,
        })
    }

    /// All-zero input of the given length, used by the `Local` variant.
    pub fn zeros(bin_count: usize) -> Self {
        HistogramInput {
            proportions: vec![0.0; bin_count],
            epsilon: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{stream, Purpose};
    use proptest::prelude::*;

    fn tag() -> HistogramTag {
        HistogramTag {
            origin: "n".into(),
            window_index: 0,
            channel: 0,
        }
    }

    fn hist(counts: &[f64]) -> NoisyHistogram {
        NoisyHistogram {
            counts: counts.to_vec(),
            epsilon: None,
            window_index: 3,
            channel: 0,
            origin: "x".into(),
        }
    }

    #[test]
    fn bin_spec_validation_and_edges() {
        assert!(BinSpec::new(1.0, 1.0, 3).is_err());
        assert!(BinSpec::new(0.0, 1.0, 0).is_err());
        let spec = BinSpec::new(0.0, 3.0, 3).unwrap();
        assert_eq!(spec.edges(), vec![0.0, 1.0, 2.0, 3.0]);
        let flat = BinSpec::fit([2.0, 2.0], 4).unwrap();
        assert_eq!((flat.lower(), flat.upper()), (1.5, 2.5));
    }

    #[test]
    fn counts_window() {
        let spec = BinSpec::new(0.0, 3.0, 3).unwrap();
        let h = build_histogram(&[1.0, 0.0, 1.0, 1.0, 2.0, 0.0], &spec, tag()).unwrap();
        assert_eq!(h.counts, vec![2.0, 3.0, 1.0]);
        assert_eq!(h.epsilon, None);
    }

    #[test]
    fn identical_values_fill_one_bin() {
        let spec = BinSpec::new(0.0, 10.0, 5).unwrap();
        let h = build_histogram(&[4.2; 12], &spec, tag()).unwrap();
        assert_eq!(h.counts, vec![0.0, 0.0, 12.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_values_clamp() {
        let spec = BinSpec::new(0.0, 1.0, 2).unwrap();
        let h = build_histogram(&[-5.0, 10.0], &spec, tag()).unwrap();
        assert_eq!(h.counts, vec![1.0, 1.0]);
        let h = build_histogram(&[1.0], &spec, tag()).unwrap();
        assert_eq!(h.counts, vec![0.0, 1.0]);
    }

    #[test]
    fn histogram_errors() {
        let spec = BinSpec::new(0.0, 1.0, 2).unwrap();
        assert!(matches!(build_histogram(&[], &spec, tag()), Err(Error::EmptyInput(_))));
        match build_histogram(&[0.1, f64::NAN], &spec, tag()) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected NaN error, got {other:?}"),
        }
    }

    #[test]
    fn laplace_density() {
        let p = LaplaceParams::new(1.0).unwrap();
        assert_eq!(p.pdf(0.0), 0.5);
        assert!((p.pdf(1.0) - (-1.0f64).exp() / 2.0).abs() < 1e-15);
        assert!((p.pdf(1.0) - 0.18394).abs() < 1e-5);
    }

    #[test]
    fn calibration_scale() {
        let p = LaplaceParams::for_counts(Epsilon::new(0.1).unwrap()).unwrap();
        assert!((p.scale() - 10.0).abs() < 1e-12);
        assert_eq!(p.location(), 0.0);
        assert_eq!(p.sensitivity(), 1.0);
        assert!(LaplaceParams::new(0.0).is_err());
        assert!(LaplaceParams::new(-1.0).is_err());
        assert!(Epsilon::new(0.0).is_err());
        assert!(Epsilon::new(f64::NAN).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let p = LaplaceParams::new(2.0).unwrap();
        let draw = |seed| {
            let mut rng = stream(seed, Purpose::Noise, 0);
            (0..16).map(|_| p.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn privatize_sets_tag_and_rejects_double_noise() {
        let mut rng = stream(1, Purpose::Noise, 0);
        let eps = Epsilon::new(0.5).unwrap();
        let noised = privatize(&hist(&[2.0, 3.0, 1.0]), eps, &mut rng).unwrap();
        assert_eq!(noised.epsilon, Some(eps));
        assert_eq!(noised.window_index, 3);
        assert!(matches!(
            privatize(&noised, eps, &mut rng),
            Err(Error::PrivacyViolation(_))
        ));
    }

    #[test]
    fn privatize_vanishing_noise_limit() {
        let mut rng = stream(1, Purpose::Noise, 0);
        let h = hist(&[2.0, 3.0, 1.0]);
        let noised = privatize(&h, Epsilon::new(1e300).unwrap(), &mut rng).unwrap();
        assert_eq!(noised.counts, h.counts);
    }

    #[test]
    fn privatize_mean_and_scale_monte_carlo() {
        let mut rng = stream(11, Purpose::Noise, 0);
        let eps = Epsilon::new(0.5).unwrap();
        let zero = hist(&[0.0; 4]);
        let n = 100_000;
        let mut sum = [0.0; 4];
        let mut abs_sum = [0.0; 4];
        for _ in 0..n {
            let h = privatize(&zero, eps, &mut rng).unwrap();
            for k in 0..4 {
                sum[k] += h.counts[k];
                abs_sum[k] += h.counts[k].abs();
            }
        }
        for k in 0..4 {
            assert!((sum[k] / n as f64).abs() < 0.15, "bin {k} mean {}", sum[k] / n as f64);
            let mle = abs_sum[k] / n as f64;
            assert!((mle - 2.0).abs() < 0.1, "bin {k} scale {mle}");
        }
    }

    #[test]
    fn average_of_two() {
        let out = average_histograms(&[hist(&[2.0, 3.0, 1.0]), hist(&[4.0, 1.0, 1.0])]).unwrap();
        assert_eq!(out, vec![3.0, 2.0, 1.0]);
        let single = average_histograms(&[hist(&[2.0, 3.0, 1.0])]).unwrap();
        assert_eq!(single, vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn average_errors() {
        let empty: [NoisyHistogram; 0] = [];
        assert!(matches!(average_histograms(&empty), Err(Error::EmptyInput(_))));
        assert!(average_histograms(&[hist(&[1.0]), hist(&[1.0, 2.0])]).is_err());
        let mut other = hist(&[1.0]);
        other.window_index = 4;
        assert!(average_histograms(&[hist(&[1.0]), other]).is_err());
    }

    #[test]
    fn proportions_keep_privacy_tag() {
        let mut rng = stream(2, Purpose::Noise, 0);
        let eps = Epsilon::new(0.1).unwrap();
        let a = privatize(&hist(&[6.0, 6.0]), eps, &mut rng).unwrap();
        let b = privatize(&hist(&[12.0, 0.0]), eps, &mut rng).unwrap();
        let input = HistogramInput::from_histograms(&[a.clone(), b], 12).unwrap();
        assert_eq!(input.epsilon, Some(eps));
        let raw = HistogramInput::from_histograms(&[hist(&[6.0, 6.0])], 12).unwrap();
        assert_eq!(raw.proportions, vec![0.5, 0.5]);
        assert!(matches!(
            HistogramInput::from_histograms(&[a, hist(&[1.0, 1.0])], 12),
            Err(Error::PrivacyViolation(_))
        ));
    }

    proptest! {
        #[test]
        fn histogram_sums_to_window_size(
            window in prop::collection::vec(-50.0f64..150.0, 1..64),
            bins in 1usize..20,
        ) {
            let spec = BinSpec::new(0.0, 100.0, bins).unwrap();
            let h = build_histogram(&window, &spec, tag()).unwrap();
            prop_assert_eq!(h.counts.len(), bins);
            prop_assert_eq!(h.counts.iter().sum::<f64>(), window.len() as f64);
            prop_assert!(h.counts.iter().all(|c| c.fract() == 0.0 && *c >= 0.0));
        }

        #[test]
        fn average_is_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 5), 1..8),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let hists: Vec<NoisyHistogram> = rows.iter().map(|r| hist(r)).collect();
            let mut shuffled = hists.clone();
            shuffled.shuffle(&mut stream(seed, Purpose::BatchOrder, 0));
            prop_assert_eq!(average_histograms(&hists).unwrap(), average_histograms(&shuffled).unwrap());
        }
    }
}
