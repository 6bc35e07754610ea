//! Triangle test against fingerprint-copy forgeries.
//!
//! For a forgery `J'` and a candidate `I` the test looks at three
//! correlations: between the two noise residuals (`c_true`), and between each
//! image and the owner's fingerprint. The latter two predict `c_true` through
//! a straight line fitted on images known to be unused by the forger; a
//! candidate whose `c_true` sits far above the line shares a non-PRNU
//! component with the forgery.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{residual, DenoiseParams};
use crate::error::{ensure_same_dims, invalid, Error, Result};
use crate::fingerprint::{detect_with_residual, Fingerprint};
use crate::image::{ImagePlane, RasterF32};
use crate::stats::{check_probability, mean, normal_quantile, normal_sf, sample_sd};

/// Least-squares line `c_true = lambda * c_est + eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub lambda: f64,
    pub eta: f64,
    pub fit_count: usize,
}

impl LineFit {
    /// Vertical distance of a point above the line.
    pub fn statistic(&self, c_est: f64, c_true: f64) -> f64 {
        c_true - self.lambda * c_est - self.eta
    }
}

/// Gaussian model of the line-fit residuals of unused images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub mean: f64,
    pub sd: f64,
    pub sample_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleRecord {
    pub candidate_id: usize,
    pub c_true: f64,
    pub c_est: f64,
    pub statistic: f64,
}

impl TriangleRecord {
    pub fn new(candidate_id: usize, c_true: f64, c_est: f64, fit: &LineFit) -> Self {
        Self {
            candidate_id,
            c_true,
            c_est,
            statistic: fit.statistic(c_est, c_true),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleCorrelations {
    /// `corr(W_I, W_J')`
    pub c_true: f64,
    /// detector response of the candidate to the owner's fingerprint
    pub c_ik: f64,
    /// detector response of the forgery to the owner's fingerprint
    pub c_jk: f64,
}

/// An image prepared for repeated triangle evaluations: its residual,
/// centred and scaled to unit norm, plus its detector response.
#[derive(Clone, Debug)]
pub struct TriangleSubject {
    unit_residual: Vec<f64>,
    dims: (usize, usize),
    pub detector: f64,
}

impl TriangleSubject {
    pub fn new(image: &ImagePlane, owner: &Fingerprint, p: &DenoiseParams) -> Result<Self> {
        let w = residual(image, p)?;
        Self::from_residual(image, &w, owner)
    }

    pub fn from_residual(image: &ImagePlane, w: &RasterF32, owner: &Fingerprint) -> Result<Self> {
        let detector = detect_with_residual(image, w, owner)?;
        let mut unit = w.to_f64();
        let m = mean(&unit);
        unit.iter_mut().for_each(|v| *v -= m);
        let norm = unit.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate("zero-variance residual"));
        }
        unit.iter_mut().for_each(|v| *v /= norm);
        Ok(Self {
            unit_residual: unit,
            dims: w.dims(),
            detector,
        })
    }

    /// Residual correlation with another subject.
    pub fn residual_correlation(&self, other: &TriangleSubject) -> Result<f64> {
        ensure_same_dims(self.dims, other.dims)?;
        let dot: f64 = self
            .unit_residual
            .iter()
            .zip(&other.unit_residual)
            .map(|(a, b)| a * b)
            .sum();
        Ok(dot.clamp(-1.0, 1.0))
    }

    /// Correlation triple with `self` as the candidate and `forgery` as `J'`.
    pub fn correlations(&self, forgery: &TriangleSubject) -> Result<TriangleCorrelations> {
        Ok(TriangleCorrelations {
            c_true: self.residual_correlation(forgery)?,
            c_ik: self.detector,
            c_jk: forgery.detector,
        })
    }
}

pub fn triangle_correlations(
    candidate: &ImagePlane,
    forgery: &ImagePlane,
    owner: &Fingerprint,
    p: &DenoiseParams,
) -> Result<TriangleCorrelations> {
    ensure_same_dims(candidate.dims(), forgery.dims())?;
    let i = TriangleSubject::new(candidate, owner, p)?;
    let j = TriangleSubject::new(forgery, owner, p)?;
    i.correlations(&j)
}

/// Estimate of `c_true` from the two fingerprint correlations. The product
/// is only defined up to scale; the fitted line absorbs it.
pub fn estimate_c(c_ik: f64, c_jk: f64) -> f64 {
    c_ik * c_jk
}

/// Ordinary least squares over `(c_est, c_true)` points.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 3 {
        return Err(invalid("points", format!("need at least 3, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("line fit abscissa has zero variance"));
    }
    let lambda = sxy / sxx;
    Ok(LineFit {
        lambda,
        eta: my - lambda * mx,
        fit_count: points.len(),
    })
}

/// Gaussian moment fit of line residuals.
pub fn fit_pdf(residuals: &[f64]) -> Result<ResidualModel> {
    if residuals.len() < 2 {
        return Err(invalid("residuals", "need at least 2 samples"));
    }
    let sd = sample_sd(residuals);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("residual model has zero spread"));
    }
    Ok(ResidualModel {
        mean: mean(residuals),
        sd,
        sample_count: residuals.len(),
    })
}

/// Line and residual model from correlation triples of unused images.
pub fn fit_null(triples: &[TriangleCorrelations]) -> Result<(LineFit, ResidualModel)> {
    let points: Vec<(f64, f64)> = triples
        .iter()
        .map(|t| (estimate_c(t.c_ik, t.c_jk), t.c_true))
        .collect();
    let fit = fit_line(&points)?;
    let residuals: Vec<f64> = points.iter().map(|&(x, y)| fit.statistic(x, y)).collect();
    Ok((fit, fit_pdf(&residuals)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualOutcome {
    /// `t2`
    pub threshold: f64,
    pub flags: Vec<bool>,
    pub flagged: usize,
    /// Largest candidate statistic; isolated outliers betray a forgery even
    /// when few candidates cross `t2`.
    pub max_statistic: f64,
}

impl IndividualOutcome {
    pub fn detection_rate(&self) -> f64 {
        if self.flags.is_empty() {
            0.0
        } else {
            self.flagged as f64 / self.flags.len() as f64
        }
    }
}

/// One-sided threshold `t2 = mean + z(1 - pfa) * sd`.
pub fn individual_threshold(model: &ResidualModel, pfa: f64) -> Result<f64> {
    check_probability("pfa", pfa)?;
    Ok(model.mean + normal_quantile(1.0 - pfa)? * model.sd)
}

/// Flags every candidate whose statistic exceeds `t2`.
pub fn individual_test(records: &[TriangleRecord], model: &ResidualModel, pfa: f64) -> Result<IndividualOutcome> {
    let threshold = individual_threshold(model, pfa)?;
    let flags: Vec<bool> = records.iter().map(|r| r.statistic > threshold).collect();
    Ok(IndividualOutcome {
        threshold,
        flagged: flags.iter().filter(|&&f| f).count(),
        flags,
        max_statistic: records
            .iter()
            .map(|r| r.statistic)
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledOutcome {
    pub mean_statistic: f64,
    pub z: f64,
    pub p_value: f64,
    pub flagged: bool,
}

/// Tests a pool of candidate statistics at once: their mean is compared to
/// `Normal(model.mean, model.sd / sqrt(k))`, one-sided.
pub fn pooled_test(statistics: &[f64], model: &ResidualModel, pfa: f64) -> Result<PooledOutcome> {
    if statistics.is_empty() {
        return Err(Error::EmptyInput("pooled test needs candidate statistics"));
    }
    check_probability("pfa", pfa)?;
    let k = statistics.len() as f64;
    let mean_statistic = mean(statistics);
    let z = k.sqrt() * (mean_statistic - model.mean) / model.sd;
    let p_value = normal_sf(z);
    Ok(PooledOutcome {
        mean_statistic,
        z,
        p_value,
        flagged: p_value < pfa,
    })
}

/// Repeats the pooled test on `repetitions` random `k`-subsets of
/// `statistics` and returns the fraction of flagged repetitions.
///
/// Repetition `i` draws from its own ChaCha stream keyed by `(seed, i)`.
pub fn pooled_detection_rate(
    statistics: &[f64],
    k: usize,
    repetitions: usize,
    model: &ResidualModel,
    pfa: f64,
    seed: u64,
) -> Result<f64> {
    if k == 0 || k > statistics.len() {
        return Err(invalid("k", format!("{k} must lie in 1..={}", statistics.len())));
    }
    if repetitions == 0 {
        return Err(invalid("repetitions", "must be positive"));
    }
    check_probability("pfa", pfa)?;
    let flagged = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let subset: Vec<f64> = rand::seq::index::sample(&mut rng, statistics.len(), k)
                .iter()
                .map(|i| statistics[i])
                .collect();
            pooled_test(&subset, model, pfa).map(|o| o.flagged as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(flagged as f64 / repetitions as f64)
}

/// Everything the individual test produced for one forgery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub fit: LineFit,
    pub model: ResidualModel,
    pub records: Vec<TriangleRecord>,
    pub outcome: IndividualOutcome,
}

/// Fits the null model on `unused` and runs the individual test over
/// `candidates`, all against the same `forgery`.
pub fn individual_report(
    forgery: &TriangleSubject,
    unused: &[&TriangleSubject],
    candidates: &[(usize, &TriangleSubject)],
    pfa: f64,
) -> Result<TriangleReport> {
    let triples = unused
        .iter()
        .map(|s| s.correlations(forgery))
        .collect::<Result<Vec<_>>>()?;
    let (fit, model) = fit_null(&triples)?;
    let records = candidates
        .iter()
        .map(|(id, s)| {
            let t = s.correlations(forgery)?;
            Ok(TriangleRecord::new(*id, t.c_true, estimate_c(t.c_ik, t.c_jk), &fit))
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = individual_test(&records, &model, pfa)?;
    Ok(TriangleReport {
        fit,
        model,
        records,
        outcome,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiForgeryOutcome {
    /// `detected[j][i]`: forgery `i`, taking the candidate role, was flagged
    /// when testing forgery `j`. The diagonal is always false.
    pub detected: Vec<Vec<bool>>,
    pub statistics: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
    /// Fraction of the other forgeries flagged, per forgery.
    pub detection_rate: Vec<f64>,
}

impl MultiForgeryOutcome {
    pub fn mean_detection_rate(&self) -> f64 {
        mean(&self.detection_rate)
    }
}

/// Multiple-forgeries test over prepared subjects.
pub fn multiple_forgeries_test_prepared(
    forgeries: &[TriangleSubject],
    unused: &[TriangleSubject],
    pfa: f64,
) -> Result<MultiForgeryOutcome> {
    if forgeries.len() < 2 {
        return Err(invalid("forgeries", "need at least 2 forgeries"));
    }
    let unused_refs: Vec<&TriangleSubject> = unused.iter().collect();
    let reports = forgeries
        .par_iter()
        .enumerate()
        .map(|(j, fj)| {
            let others: Vec<(usize, &TriangleSubject)> =
                forgeries.iter().enumerate().filter(|(i, _)| *i != j).collect();
            individual_report(fj, &unused_refs, &others, pfa)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = forgeries.len();
    let mut detected = vec![vec![false; n]; n];
    let mut statistics = vec![vec![f64::NAN; n]; n];
    let mut thresholds = Vec::with_capacity(n);
    let mut detection_rate = Vec::with_capacity(n);
    for (j, report) in reports.iter().enumerate() {
        for (rec, &flag) in report.records.iter().zip(&report.outcome.flags) {
            detected[j][rec.candidate_id] = flag;
            statistics[j][rec.candidate_id] = rec.statistic;
        }
        thresholds.push(report.outcome.threshold);
        detection_rate.push(report.outcome.detection_rate());
    }
    Ok(MultiForgeryOutcome {
        detected,
        statistics,
        thresholds,
        detection_rate,
    })
}

/// Runs the triangle test between forgeries: each forgery is tested with
/// every other one in the candidate role. `unused` are owner images known
/// not to have been stolen; they fit the null model.
pub fn multiple_forgeries_test(
    forgeries: &[ImagePlane],
    owner: &Fingerprint,
    unused: &[ImagePlane],
    pfa: f64,
    p: &DenoiseParams,
) -> Result<MultiForgeryOutcome> {
    if forgeries.len() < 2 {
        return Err(invalid("forgeries", "need at least 2 forgeries"));
    }
    let prepare = |imgs: &[ImagePlane]| {
        imgs.par_iter()
            .map(|i| TriangleSubject::new(i, owner, p))
            .collect::<Result<Vec<_>>>()
    };
    multiple_forgeries_test_prepared(&prepare(forgeries)?, &prepare(unused)?, pfa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn estimate_is_product() {
        assert_eq!(estimate_c(0.0, 0.7), 0.0);
        assert_eq!(estimate_c(0.3, 0.0), 0.0);
        assert!((estimate_c(0.1, 0.2) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn exact_line() {
        let f = fit_line(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert_eq!((f.lambda, f.eta, f.fit_count), (2.0, 1.0, 3));
    }

    #[test]
    fn hand_solved_line() {
        let f = fit_line(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert!((f.lambda - 0.5).abs() < 1e-12);
        assert!((f.eta - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn line_errors() {
        assert!(fit_line(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(matches!(
            fit_line(&[(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn individual_threshold_factor() {
        let model = ResidualModel {
            mean: 0.01,
            sd: 0.002,
            sample_count: 100,
        };
        let t2 = individual_threshold(&model, 1e-3).unwrap();
        assert!(((t2 - model.mean) - 3.0902 * model.sd).abs() < 1e-3 * model.sd.max(1e-3));
        assert!(((t2 - model.mean) / model.sd - 3.0902).abs() < 1e-3);
        assert!(individual_test(&[], &model, 0.0).is_err());
    }

    #[test]
    fn individual_at_mean_never_flags() {
        let model = ResidualModel {
            mean: 0.5,
            sd: 0.1,
            sample_count: 10,
        };
        let records: Vec<_> = (0..10)
            .map(|i| TriangleRecord {
                candidate_id: i,
                c_true: 0.5,
                c_est: 0.0,
                statistic: 0.5,
            })
            .collect();
        let out = individual_test(&records, &model, 1e-3).unwrap();
        assert_eq!(out.flagged, 0);
        assert_eq!(out.max_statistic, 0.5);
    }

    #[test]
    fn pooled_null_centre_and_shift() {
        let model = ResidualModel {
            mean: 0.0,
            sd: 1.0,
            sample_count: 50,
        };
        let centre = pooled_test(&[0.0; 10], &model, 1e-3).unwrap();
        assert!((centre.p_value - 0.5).abs() < 1e-12);
        assert!(!centre.flagged);
        let shifted = pooled_test(&[1.0; 100], &model, 1e-3).unwrap();
        assert!((shifted.z - 10.0).abs() < 1e-12);
        assert!(shifted.p_value < 1e-20 && shifted.flagged);
        assert!(pooled_test(&[], &model, 1e-3).is_err());
    }

    #[test]
    fn pooled_rate_bounds() {
        let model = ResidualModel {
            mean: 0.0,
            sd: 1.0,
            sample_count: 50,
        };
        let stats = vec![5.0; 30];
        assert_eq!(pooled_detection_rate(&stats, 10, 50, &model, 1e-3, 1).unwrap(), 1.0);
        assert!(pooled_detection_rate(&stats, 31, 50, &model, 1e-3, 1).is_err());
    }

    proptest! {
        #[test]
        fn ols_residuals_sum_to_zero(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..40)) {
            if let Ok(f) = fit_line(&pts) {
                let s: f64 = pts.iter().map(|&(x, y)| f.statistic(x, y)).sum();
                prop_assert!(s.abs() < 1e-9);
            }
        }

        #[test]
        fn record_statistic_recomputable(c_true in -1.0f64..1.0, c_est in -1.0f64..1.0, l in -5.0f64..5.0, e in -1.0f64..1.0) {
            let fit = LineFit { lambda: l, eta: e, fit_count: 3 };
            let r = TriangleRecord::new(0, c_true, c_est, &fit);
            prop_assert!((r.statistic - (r.c_true - fit.lambda * r.c_est - fit.eta)).abs() < 1e-12);
        }

        #[test]
        fn scaling_c_true_scales_statistics(
            pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 5..30),
            a in 0.1f64..10.0,
        ) {
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, a * y)).collect();
            if let (Ok(f0), Ok(f1)) = (fit_line(&pts), fit_line(&scaled)) {
                for (&(x, y), &(xs, ys)) in pts.iter().zip(&scaled) {
                    prop_assert!((f1.statistic(xs, ys) - a * f0.statistic(x, y)).abs() < 1e-9);
                }
                let r0: Vec<f64> = pts.iter().map(|&(x, y)| f0.statistic(x, y)).collect();
                let r1: Vec<f64> = scaled.iter().map(|&(x, y)| f1.statistic(x, y)).collect();
                if let (Ok(m0), Ok(m1)) = (fit_pdf(&r0), fit_pdf(&r1)) {
                    let t0 = individual_threshold(&m0, 0.05).unwrap();
                    let t1 = individual_threshold(&m1, 0.05).unwrap();
                    for (s0, s1) in r0.iter().zip(&r1) {
                        // skip points sitting on the threshold where rounding could flip
                        if ((s0 - t0) / m0.sd).abs() > 1e-9 {
                            prop_assert_eq!(*s0 > t0, *s1 > t1);
                        }
                    }
                }
            }
        }
    }
}
