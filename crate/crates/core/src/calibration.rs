//! Confidence calibration: the logistic mapping `z`, the thresholded
//! calibration `g`, and maximum-likelihood fitting from labeled samples.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("invalid calibration parameters: {0}")]
    InvalidParams(String),
    #[error("inseparable calibration data: {0}")]
    Inseparable(String),
    #[error("invalid calibration input: {0}")]
    InvalidInput(String),
    #[error("calibration fit did not converge after {iterations} iterations (last iterate k={k}, y0={y0})")]
    NoConvergence { iterations: usize, k: f64, y0: f64 },
    #[error("calibration sample file line {line}: {message}")]
    Samples { line: usize, message: String },
    #[error("calibration file: {0}")]
    File(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Logistic slope and midpoint, `1 / (1 + exp(-k (c - y0)))`, plus the hard cutoffs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams<T> {
    pub k: T,
    pub y0: T,
    pub gamma_fp: T,
    pub gamma_tp: T,
}

impl<T: Scalar> CalibrationParams<T> {
    pub fn new(k: T, y0: T, gamma_fp: T, gamma_tp: T) -> Result<Self, CalibrationError> {
        let p = CalibrationParams { k, y0, gamma_fp, gamma_tp };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if !(self.k > T::zero()) || !self.k.is_finite() {
            return Err(CalibrationError::InvalidParams(format!("k must be positive, got {}", self.k)));
        }
        if !unit(self.y0) {
            return Err(CalibrationError::InvalidParams(format!("y0 must lie in [0,1], got {}", self.y0)));
        }
        if !unit(self.gamma_fp) || !unit(self.gamma_tp) || !(self.gamma_fp < self.gamma_tp) {
            return Err(CalibrationError::InvalidParams(format!(
                "need 0 <= gamma_fp < gamma_tp <= 1, got gamma_fp={} gamma_tp={}",
                self.gamma_fp, self.gamma_tp
            )));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> CalibrationParams<U> {
        CalibrationParams {
            k: U::lit(self.k.as_f64()),
            y0: U::lit(self.y0.as_f64()),
            gamma_fp: U::lit(self.gamma_fp.as_f64()),
            gamma_tp: U::lit(self.gamma_tp.as_f64()),
        }
    }
}

impl<T: Scalar> Default for CalibrationParams<T> {
    fn default() -> Self {
        CalibrationParams { k: T::lit(10.0), y0: T::lit(0.5), gamma_fp: T::lit(0.05), gamma_tp: T::lit(0.95) }
    }
}

/// The logistic part of the mapping, without cutoffs.
pub fn logistic_map<T: Scalar>(y_hat: T, params: &CalibrationParams<T>) -> T {
    let e = (-params.k * (y_hat - params.y0)).exp();
    T::one() / (T::one() + e)
}

/// 0 below `gamma_fp`, 1 above `gamma_tp`, the logistic in between.
pub fn calibrate_confidence<T: Scalar>(y_hat: T, params: &CalibrationParams<T>) -> T {
    if y_hat < params.gamma_fp {
        T::zero()
    } else if y_hat > params.gamma_tp {
        T::one()
    } else {
        logistic_map(y_hat, params)
    }
}

/// Per-model calibration with optional per-proposition overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibrator<T> {
    pub default: CalibrationParams<T>,
    #[serde(default)]
    pub overrides: BTreeMap<String, CalibrationParams<T>>,
}

impl<T: Scalar> Calibrator<T> {
    pub fn params_for(&self, proposition: &str) -> &CalibrationParams<T> {
        self.overrides.get(proposition).unwrap_or(&self.default)
    }

    pub fn calibrate(&self, proposition: &str, y_hat: T) -> T {
        calibrate_confidence(y_hat, self.params_for(proposition))
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        self.default.validate()?;
        for (label, p) in &self.overrides {
            p.validate().map_err(|e| CalibrationError::InvalidParams(format!("override for '{label}': {e}")))?;
        }
        Ok(())
    }
}

impl<T: Scalar> Default for Calibrator<T> {
    fn default() -> Self {
        CalibrationParams::default().into()
    }
}

impl<T> From<CalibrationParams<T>> for Calibrator<T> {
    fn from(default: CalibrationParams<T>) -> Self {
        Calibrator { default, overrides: BTreeMap::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationSample<T> {
    pub raw_confidence: T,
    pub is_correct: bool,
}

impl<T: Scalar> CalibrationSample<T> {
    pub fn new(raw_confidence: T, is_correct: bool) -> Result<Self, CalibrationError> {
        if !(raw_confidence >= T::zero() && raw_confidence <= T::one()) {
            return Err(CalibrationError::InvalidInput(format!("confidence {raw_confidence} outside [0,1]")));
        }
        Ok(CalibrationSample { raw_confidence, is_correct })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    /// Upper bound on `k`; separable data drives the unconstrained optimum to infinity.
    pub max_k: f64,
    pub min_k: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_k: 1e3, min_k: 1e-6, max_iterations: 500, tolerance: 1e-10 }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binomial log-likelihood of the samples under `z` with the given `(k, y0)`.
pub fn log_likelihood<T: Scalar>(samples: &[CalibrationSample<T>], k: f64, y0: f64) -> f64 {
    ll_affine(samples, -k * y0, k)
}

// Parameterized as eta = a + b*c with b = k, a = -k*y0.
fn ll_affine<T: Scalar>(samples: &[CalibrationSample<T>], a: f64, b: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let eta = a + b * s.raw_confidence.as_f64();
            if s.is_correct {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

/// Fits `(k, y0)` by maximum likelihood and picks `gamma_fp`/`gamma_tp` by a
/// precision sweep. See [`fit_calibration_with`].
pub fn fit_calibration<T: Scalar>(
    samples: &[CalibrationSample<T>],
    target_fp_rate: f64,
    target_tp_rate: f64,
) -> Result<CalibrationParams<T>, CalibrationError> {
    fit_calibration_with(samples, target_fp_rate, target_tp_rate, &FitOptions::default())
}

/// `gamma_tp` is the smallest confidence `c` such that detections with
/// confidence `>= c` have empirical precision `>= target_tp_rate`.
/// `gamma_fp` is the largest `c` such that the detections discarded below it
/// are correct at most `target_fp_rate` of the time.
///
/// The optimization runs in `f64` regardless of `T`.
pub fn fit_calibration_with<T: Scalar>(
    samples: &[CalibrationSample<T>],
    target_fp_rate: f64,
    target_tp_rate: f64,
    opts: &FitOptions,
) -> Result<CalibrationParams<T>, CalibrationError> {
    if samples.len() < 2 {
        return Err(CalibrationError::InvalidInput(format!("need at least 2 samples, got {}", samples.len())));
    }
    for (name, t) in [("target_fp_rate", target_fp_rate), ("target_tp_rate", target_tp_rate)] {
        if !(t > 0.0 && t < 1.0) {
            return Err(CalibrationError::InvalidInput(format!("{name} must lie in (0,1), got {t}")));
        }
    }
    let positives = samples.iter().filter(|s| s.is_correct).count();
    if positives == 0 || positives == samples.len() {
        return Err(CalibrationError::Inseparable(
            "samples contain a single class; both correct and incorrect detections are required".into(),
        ));
    }

    let (mut k, mut y0) = fit_logistic(samples, opts)?;
    if !(0.0..=1.0).contains(&y0) {
        // The feasible set is convex, so the constrained optimum sits on a boundary face.
        let best = [0.0, 1.0]
            .into_iter()
            .map(|edge| (fit_scale(samples, edge, opts), edge))
            .map(|(k, edge)| (log_likelihood(samples, k, edge), k, edge))
            .max_by(|x, y| x.0.total_cmp(&y.0))
            .expect("two candidates");
        (k, y0) = (best.1, best.2);
    }
    let (gamma_fp, gamma_tp) = select_thresholds(samples, target_fp_rate, target_tp_rate);
    Ok(CalibrationParams { k: T::lit(k), y0: T::lit(y0), gamma_fp: T::lit(gamma_fp), gamma_tp: T::lit(gamma_tp) })
}

fn fit_logistic<T: Scalar>(
    samples: &[CalibrationSample<T>],
    opts: &FitOptions,
) -> Result<(f64, f64), CalibrationError> {
    let n = samples.len() as f64;
    let mean_y = samples.iter().filter(|s| s.is_correct).count() as f64 / n;
    let mean_c = samples.iter().map(|s| s.raw_confidence.as_f64()).sum::<f64>() / n;
    let max_wrong =
        samples.iter().filter(|s| !s.is_correct).map(|s| s.raw_confidence.as_f64()).fold(f64::MIN, f64::max);
    let min_right = samples.iter().filter(|s| s.is_correct).map(|s| s.raw_confidence.as_f64()).fold(f64::MAX, f64::min);
    let (mut a, mut b) = if max_wrong < min_right {
        // Perfectly separated: the likelihood increases without bound in k, so pin it to the cap.
        (-opts.max_k * 0.5 * (max_wrong + min_right), opts.max_k)
    } else {
        let b = 1.0f64.clamp(opts.min_k, opts.max_k);
        ((mean_y / (1.0 - mean_y)).ln() - b * mean_c, b)
    };
    let mut ll = ll_affine(samples, a, b);

    for _ in 0..opts.max_iterations {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in samples {
            let c = s.raw_confidence.as_f64();
            let p = sigmoid(a + b * c);
            let r = if s.is_correct { 1.0 - p } else { -p };
            let w = p * (1.0 - p);
            ga += r;
            gb += r * c;
            haa += w;
            hab += w * c;
            hbb += w * c * c;
        }
        let pinned = (b >= opts.max_k && gb > 0.0) || (b <= opts.min_k && gb < 0.0);
        let (mut da, mut db) = if pinned {
            (if haa > 0.0 { ga / haa } else { ga }, 0.0)
        } else {
            let det = haa * hbb - hab * hab;
            if det > 1e-300 {
                ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
            } else {
                (ga, gb)
            }
        };
        if da * ga + db * gb <= 0.0 {
            da = ga;
            db = if pinned { 0.0 } else { gb };
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let na = a + t * da;
            let nb = (b + t * db).clamp(opts.min_k, opts.max_k);
            let nll = ll_affine(samples, na, nb);
            if nll >= ll {
                accepted = Some((na, nb, nll));
                break;
            }
            t *= 0.5;
        }
        let Some((na, nb, nll)) = accepted else {
            // No ascent direction left: stationary up to floating-point resolution.
            return Ok((b, -a / b));
        };
        let step = (na - a).abs() + (nb - b).abs();
        let gain = nll - ll;
        a = na;
        b = nb;
        ll = nll;
        if step <= opts.tolerance * (1.0 + a.abs() + b.abs()) || gain <= 1e-15 * (1.0 + ll.abs()) {
            return Ok((b, -a / b));
        }
    }
    Err(CalibrationError::NoConvergence { iterations: opts.max_iterations, k: b, y0: -a / b })
}

// Maximizes the likelihood over k alone with y0 held fixed; concave in k.
fn fit_scale<T: Scalar>(samples: &[CalibrationSample<T>], y0: f64, opts: &FitOptions) -> f64 {
    let mut k = 1.0f64.clamp(opts.min_k, opts.max_k);
    let mut ll = log_likelihood(samples, k, y0);
    for _ in 0..opts.max_iterations {
        let (mut g, mut h) = (0.0, 0.0);
        for s in samples {
            let x = s.raw_confidence.as_f64() - y0;
            let p = sigmoid(k * x);
            g += if s.is_correct { (1.0 - p) * x } else { -p * x };
            h += p * (1.0 - p) * x * x;
        }
        let step = if h > 0.0 { g / h } else { g };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let nk = (k + t * step).clamp(opts.min_k, opts.max_k);
            let nll = log_likelihood(samples, nk, y0);
            if nll >= ll {
                moved = (nk - k).abs() > opts.tolerance * (1.0 + k) && nll - ll > 1e-15 * (1.0 + ll.abs());
                k = nk;
                ll = nll;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    k
}

fn select_thresholds<T: Scalar>(
    samples: &[CalibrationSample<T>],
    target_fp_rate: f64,
    target_tp_rate: f64,
) -> (f64, f64) {
    let mut sorted: Vec<(f64, bool)> = samples.iter().map(|s| (s.raw_confidence.as_f64(), s.is_correct)).collect();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = sorted.len();
    let total_correct = sorted.iter().filter(|s| s.1).count();

    // Walk distinct confidence values; `below` counts samples strictly under the candidate.
    let mut gamma_fp = 0.0;
    let mut gamma_tp = None;
    let (mut below, mut correct_below) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let c = sorted[i].0;
        let discarded_precision = if below == 0 { 0.0 } else { correct_below as f64 / below as f64 };
        if discarded_precision <= target_fp_rate {
            gamma_fp = c;
        }
        let kept = n - below;
        let kept_precision = (total_correct - correct_below) as f64 / kept as f64;
        if gamma_tp.is_none() && kept_precision >= target_tp_rate {
            gamma_tp = Some(c);
        }
        while i < n && sorted[i].0 == c {
            below += 1;
            if sorted[i].1 {
                correct_below += 1;
            }
            i += 1;
        }
    }
    let mut lo = gamma_fp.clamp(0.0, 1.0);
    let mut hi = gamma_tp.unwrap_or(1.0).clamp(0.0, 1.0);
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    if lo == hi {
        // Widen toward the unit interval's ends.
        let step = 1e-3;
        if lo > 0.0 {
            lo = (lo - step).max(0.0);
        } else {
            hi = (hi + step).min(1.0);
        }
    }
    (lo, hi)
}

/// On-disk calibration record: `{"v":1,"model_id":…,"k":…,"y0":…,"gamma_fp":…,"gamma_tp":…}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    #[serde(default = "schema_version")]
    pub v: u32,
    pub model_id: String,
    pub k: f64,
    pub y0: f64,
    pub gamma_fp: f64,
    pub gamma_tp: f64,
}

fn schema_version() -> u32 {
    1
}

impl CalibrationFile {
    pub fn from_params<T: Scalar>(model_id: impl Into<String>, p: &CalibrationParams<T>) -> Self {
        CalibrationFile {
            v: 1,
            model_id: model_id.into(),
            k: p.k.as_f64(),
            y0: p.y0.as_f64(),
            gamma_fp: p.gamma_fp.as_f64(),
            gamma_tp: p.gamma_tp.as_f64(),
        }
    }

    pub fn params<T: Scalar>(&self) -> Result<CalibrationParams<T>, CalibrationError> {
        CalibrationParams::new(T::lit(self.k), T::lit(self.y0), T::lit(self.gamma_fp), T::lit(self.gamma_tp))
    }

    pub fn read(reader: impl Read) -> Result<Self, CalibrationError> {
        let file: CalibrationFile =
            serde_json::from_reader(reader).map_err(|e| CalibrationError::File(e.to_string()))?;
        if file.v != 1 {
            return Err(CalibrationError::File(format!("unsupported schema version {}", file.v)));
        }
        file.params::<f64>()?;
        Ok(file)
    }

    pub fn write(&self, mut writer: impl Write) -> Result<(), CalibrationError> {
        serde_json::to_writer(&mut writer, self).map_err(|e| CalibrationError::File(e.to_string()))?;
        writeln!(writer)?;
        Ok(())
    }
}

fn parse_bool(field: &str) -> Option<bool> {
    match field.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" => Some(true),
        "0" | "false" | "f" | "no" => Some(false),
        _ => None,
    }
}

/// Reads `confidence,correct` rows. A header row is detected and skipped.
pub fn read_samples_csv(reader: impl Read) -> Result<Vec<CalibrationSample<f64>>, CalibrationError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| CalibrationError::Samples { line, message: e.to_string() })?;
        if record.len() < 2 {
            return Err(CalibrationError::Samples { line, message: "expected two columns: confidence,correct".into() });
        }
        let conf = match record[0].parse::<f64>() {
            Ok(c) => c,
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CalibrationError::Samples { line, message: format!("bad confidence '{}'", &record[0]) })
            }
        };
        let correct = parse_bool(&record[1]).ok_or_else(|| CalibrationError::Samples {
            line,
            message: format!("bad correctness flag '{}'", &record[1]),
        })?;
        let sample = CalibrationSample::new(conf, correct)
            .map_err(|e| CalibrationError::Samples { line, message: e.to_string() })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_samples_csv<T: Scalar>(
    samples: &[CalibrationSample<T>],
    writer: impl Write,
) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CalibrationError::File(e.to_string());
    w.write_record(["confidence", "correct"]).map_err(io)?;
    for s in samples {
        w.write_record([s.raw_confidence.as_f64().to_string(), (s.is_correct as u8).to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
