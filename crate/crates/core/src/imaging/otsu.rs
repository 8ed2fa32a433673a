//! Multiclass Otsu thresholding.
//!
//! Temperatures are binned into `n_levels` gray levels, then `n_classes - 1`
//! thresholds are chosen to maximise the between-class variance
//! `sum_i w_i (mu_i - mu_T)^2`. Class `c` holds the levels in
//! `(k_{c-1}, k_c]`, with `k_0 = -1` and the last class open above.
//!
//! The search is an exact dynamic program over the occupied histogram bins.
//! An optimal partition never leaves a class empty when at least
//! `n_classes` levels are occupied, so restricting cut points to occupied
//! bins loses nothing; placing each threshold on the last occupied level of
//! its class yields the lexicographically smallest optimal vector.

use crate::scalar::Scalar;

use super::{ImagingError, ThermalFrame};

/// How temperatures are mapped onto gray levels.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantization {
    /// Linear bins over the frame's own `[min, max]`.
    #[default]
    FrameRange,
    /// Linear bins over a fixed `[min, max)` interval (values clamped).
    Fixed { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationResult {
    pub n_classes: usize,
    pub n_levels: usize,
    /// Ascending cut levels `k_1 < ... < k_{n-1}`.
    pub thresholds: Vec<usize>,
    /// Class id per pixel, row-major.
    pub labelmap: Vec<u8>,
    /// Quantized level per pixel, row-major.
    pub levels: Vec<u16>,
    /// Achieved between-class variance, in squared gray levels.
    pub separability: f64,
    /// Temperature interval mapped onto the levels.
    pub range: (f64, f64),
}

impl QuantizationResult {
    pub fn class_of_level(&self, level: usize) -> usize {
        self.thresholds.iter().take_while(|&&k| k < level).count()
    }

    /// Upper temperature edge of each threshold level.
    pub fn threshold_temperatures(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        let step = (hi - lo) / self.n_levels as f64;
        self.thresholds.iter().map(|&k| lo + step * (k + 1) as f64).collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_classes];
        for &c in &self.labelmap {
            sizes[c as usize] += 1;
        }
        sizes
    }
}

/// Maps every pixel onto `0..n_levels`; returns the levels and the interval used.
pub fn quantize<T: Scalar>(frame: &ThermalFrame<T>, n_levels: usize, mode: Quantization) -> (Vec<u16>, (f64, f64)) {
    let (lo, hi) = match mode {
        Quantization::FrameRange => {
            let (a, b) = frame.min_max();
            (a.as_f64(), b.as_f64())
        }
        Quantization::Fixed { min, max } => (min, max),
    };
    let span = hi - lo;
    let top = (n_levels - 1) as f64;
    let levels = frame
        .values()
        .iter()
        .map(|v| {
            if span <= 0.0 {
                return 0;
            }
            let x = ((v.as_f64() - lo) / span * n_levels as f64).floor();
            x.clamp(0.0, top) as u16
        })
        .collect();
    (levels, (lo, hi))
}

/// Between-class variance of a histogram under the given thresholds.
pub fn between_class_variance(hist: &[u64], thresholds: &[usize]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mu_t = hist.iter().enumerate().map(|(l, &h)| l as f64 * h as f64).sum::<f64>() / n;
    let mut bounds = thresholds.iter().map(|k| k + 1).collect::<Vec<_>>();
    bounds.push(hist.len());
    let mut start = 0;
    let mut sigma = 0.0;
    for end in bounds {
        let w: u64 = hist[start..end].iter().sum();
        if w > 0 {
            let s: f64 = (start..end).map(|l| l as f64 * hist[l] as f64).sum();
            let mu = s / w as f64;
            sigma += (w as f64 / n) * (mu - mu_t) * (mu - mu_t);
        }
        start = end;
    }
    sigma
}

/// Relative gap below which two objective values count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Optimal thresholds for a histogram with `hist.len()` levels.
pub fn otsu_histogram(hist: &[u64], n_classes: usize) -> Result<Vec<usize>, ImagingError> {
    if n_classes < 2 {
        return Err(ImagingError::InvalidArgument("at least two classes are required".into()));
    }
    if hist.len() < n_classes {
        return Err(ImagingError::InvalidArgument(format!(
            "{} levels cannot hold {n_classes} classes",
            hist.len()
        )));
    }
    let occupied: Vec<usize> = (0..hist.len()).filter(|&l| hist[l] > 0).collect();
    let m = occupied.len();
    if m < n_classes {
        return Err(ImagingError::InsufficientContrast { distinct: m, classes: n_classes });
    }

    // prefix sums over occupied bins; integers are exact in f64 below 2^53
    let mut w = vec![0.0; m + 1];
    let mut s = vec![0.0; m + 1];
    for (j, &l) in occupied.iter().enumerate() {
        w[j + 1] = w[j] + hist[l] as f64;
        s[j + 1] = s[j] + (l as u64 * hist[l]) as f64;
    }
    let cost = |a: usize, b: usize| {
        let ds = s[b] - s[a];
        ds * ds / (w[b] - w[a])
    };

    // best[g][j]: max of sum S^2/W when bins j.. are split into g non-empty groups
    let neg = f64::NEG_INFINITY;
    let mut best = vec![vec![neg; m + 1]; n_classes + 1];
    for j in 0..m {
        best[1][j] = cost(j, m);
    }
    for g in 2..=n_classes {
        for j in 0..=(m - g) {
            let mut v = neg;
            for e in (j + 1)..=(m - g + 1) {
                let cand = cost(j, e) + best[g - 1][e];
                if cand > v {
                    v = cand;
                }
            }
            best[g][j] = v;
        }
    }

    // walk left to right taking the earliest cut that attains the optimum;
    // exact ties can differ by rounding, hence the relative slack
    let mut thresholds = Vec::with_capacity(n_classes - 1);
    let mut j = 0;
    for g in (2..=n_classes).rev() {
        let target = best[g][j];
        let floor = target - TIE_TOLERANCE * target.abs();
        let e = ((j + 1)..=(m - g + 1))
            .find(|&e| cost(j, e) + best[g - 1][e] >= floor)
            .expect("optimum is attained by some cut");
        thresholds.push(occupied[e - 1]);
        j = e;
    }
    Ok(thresholds)
}

/// Multiclass Otsu segmentation of a frame.
pub fn otsu_multiclass<T: Scalar>(
    frame: &ThermalFrame<T>,
    n_classes: usize,
    n_levels: usize,
    mode: Quantization,
) -> Result<QuantizationResult, ImagingError> {
    if n_classes < 2 || n_levels < n_classes || n_levels > u16::MAX as usize + 1 {
        return Err(ImagingError::InvalidArgument(format!(
            "need 2 <= n_classes ({n_classes}) <= n_levels ({n_levels}) <= 65536"
        )));
    }
    let (levels, range) = quantize(frame, n_levels, mode);
    let mut hist = vec![0u64; n_levels];
    for &l in &levels {
        hist[l as usize] += 1;
    }
    let thresholds = otsu_histogram(&hist, n_classes)?;
    let separability = between_class_variance(&hist, &thresholds);
    let mut lut = vec![0u8; n_levels];
    let mut class = 0;
    for (l, slot) in lut.iter_mut().enumerate() {
        while class < thresholds.len() && l > thresholds[class] {
            class += 1;
        }
        *slot = class as u8;
    }
    let labelmap = levels.iter().map(|&l| lut[l as usize]).collect();
    Ok(QuantizationResult { n_classes, n_levels, thresholds, labelmap, levels, separability, range })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn frame(w: usize, h: usize, values: Vec<f64>) -> ThermalFrame<f64> {
        let ts = NaiveDate::from_ymd_opt(2023, 10, 18).unwrap().and_hms_opt(0, 0, 0).unwrap();
        ThermalFrame::new(w, h, ts, values).unwrap()
    }

    /// Exhaustive search over every strictly ascending threshold vector,
    /// keeping the first (lexicographically smallest) maximiser.
    fn brute_force(hist: &[u64], n_classes: usize) -> (Vec<usize>, f64) {
        fn rec(hist: &[u64], start: usize, left: usize, cur: &mut Vec<usize>, best: &mut (Vec<usize>, f64)) {
            if left == 0 {
                let v = between_class_variance(hist, cur);
                if best.0.is_empty() || v > best.1 + TIE_TOLERANCE * best.1.abs() {
                    *best = (cur.clone(), v);
                }
                return;
            }
            for k in start..=(hist.len() - 1 - left) {
                cur.push(k);
                rec(hist, k + 1, left - 1, cur, best);
                cur.pop();
            }
        }
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        rec(hist, 0, n_classes - 1, &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn constant_frame_has_no_contrast() {
        let f = frame(3, 3, vec![25.0; 9]);
        assert!(matches!(
            otsu_multiclass(&f, 2, 256, Quantization::FrameRange),
            Err(ImagingError::InsufficientContrast { distinct: 1, classes: 2 })
        ));
    }

    #[test]
    fn two_levels_pick_the_smallest_tied_threshold() {
        let mut values = vec![2.0; 10];
        values.extend(vec![200.0; 10]);
        let f = frame(5, 4, values);
        let q = otsu_multiclass(&f, 2, 256, Quantization::Fixed { min: 0.0, max: 256.0 }).unwrap();
        assert_eq!(q.thresholds, vec![2]);
        // sigma_B^2 is flat on [2, 199]: w0 w1 (mu1 - mu0)^2 = 0.25 * 198^2
        let mut hist = vec![0u64; 256];
        hist[2] = 10;
        hist[200] = 10;
        for k in 2..200 {
            assert_eq!(between_class_variance(&hist, &[k]), 0.25 * 198.0 * 198.0);
        }
        assert!(between_class_variance(&hist, &[1]) < q.separability);
        assert_eq!(q.separability, 0.25 * 198.0 * 198.0);
        assert_eq!(q.labelmap.iter().filter(|&&c| c == 0).count(), 10);
    }

    #[test]
    fn frame_range_quantization_spans_all_levels() {
        let f = frame(2, 1, vec![10.0, 30.0]);
        let (levels, range) = quantize(&f, 256, Quantization::FrameRange);
        assert_eq!(levels, vec![0, 255]);
        assert_eq!(range, (10.0, 30.0));
        let q = otsu_multiclass(&f, 2, 256, Quantization::FrameRange).unwrap();
        assert_eq!(q.thresholds, vec![0]);
        assert_eq!(q.threshold_temperatures(), vec![10.0 + 20.0 / 256.0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let f = frame(2, 1, vec![10.0, 30.0]);
        assert!(otsu_multiclass(&f, 1, 256, Quantization::FrameRange).is_err());
        assert!(otsu_multiclass(&f, 4, 3, Quantization::FrameRange).is_err());
    }

    #[test]
    fn random_8x8_three_classes_matches_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..64).map(|_| rng.gen_range(0..16) as f64).collect();
        let f = frame(8, 8, values);
        let q = otsu_multiclass(&f, 3, 16, Quantization::Fixed { min: 0.0, max: 16.0 }).unwrap();
        let mut hist = vec![0u64; 16];
        for &l in &q.levels {
            hist[l as usize] += 1;
        }
        let (bt, bv) = brute_force(&hist, 3);
        assert_eq!(q.thresholds, bt);
        assert!((q.separability - bv).abs() <= 1e-12 * bv.max(1.0));
    }

    proptest! {
        #[test]
        fn dp_equals_enumeration(hist in proptest::collection::vec(0u64..20, 4..=16), n in 2usize..=3) {
            let occupied = hist.iter().filter(|&&h| h > 0).count();
            prop_assume!(occupied >= n);
            let got = otsu_histogram(&hist, n).unwrap();
            let (bt, bv) = brute_force(&hist, n);
            prop_assert_eq!(&got, &bt);
            let v = between_class_variance(&hist, &got);
            prop_assert!((v - bv).abs() <= 1e-12 * bv.max(1.0));
        }

        #[test]
        fn labelmap_consistent_and_sigma_monotone(values in proptest::collection::vec(0.0f64..100.0, 12..60)) {
            let n = values.len();
            let f = frame(n, 1, values);
            let mut prev: f64 = -1.0;
            for k in 2..=4 {
                match otsu_multiclass(&f, k, 32, Quantization::FrameRange) {
                    Ok(q) => {
                        for (i, &l) in q.levels.iter().enumerate() {
                            prop_assert_eq!(q.labelmap[i] as usize, q.class_of_level(l as usize));
                        }
                        prop_assert!(q.thresholds.windows(2).all(|w| w[0] < w[1]));
                        prop_assert!(q.separability >= 0.0);
                        prop_assert!(q.separability >= prev - 1e-9 * prev.abs());
                        prev = q.separability;
                    }
                    Err(ImagingError::InsufficientContrast { .. }) => break,
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }
    }
}
