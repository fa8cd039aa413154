//! Damped least squares, the model functions used across the analyses, and
//! prominence-based peak detection.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeTrace;
use crate::error::{domain, Error, Result};
use crate::model::{FitParameter, FitResult};
use crate::synth::{smooth_gaussian, Spectrum};

/// A parametric curve y = f(x; p).
pub trait ModelFunction: Sync {
    fn name(&self) -> &'static str;
    fn parameter_names(&self) -> &'static [&'static str];
    fn units(&self) -> &'static [&'static str];
    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// ∂f/∂p at `x`. Central finite differences unless overridden.
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        finite_difference_gradient(self, x, p, out);
    }
}

pub fn finite_difference_gradient<M: ModelFunction + ?Sized>(model: &M, x: f64, p: &[f64], out: &mut [f64]) {
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1e-6);
        q[j] = p[j] + h;
        let up = model.eval(x, &q);
        q[j] = p[j] - h;
        let down = model.eval(x, &q);
        q[j] = p[j];
        out[j] = (up - down) / (2.0 * h);
    }
}

/// `amplitude / (1 + (2(x − center)/fwhm)²) + offset`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lorentzian;

impl ModelFunction for Lorentzian {
    fn name(&self) -> &'static str {
        "lorentzian"
    }
    fn parameter_names(&self) -> &'static [&'static str] {
        &["center", "fwhm", "amplitude", "offset"]
    }
    fn units(&self) -> &'static [&'static str] {
        &["Hz", "Hz", "counts/pulse", "counts/pulse"]
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let u = 2.0 * (x - p[0]) / p[1];
        p[2] / (1.0 + u * u) + p[3]
    }
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let u = 2.0 * (x - p[0]) / p[1];
        let l = 1.0 / (1.0 + u * u);
        let dl_du = -2.0 * u * l * l;
        out[0] = p[2] * dl_du * (-2.0 / p[1]);
        out[1] = p[2] * dl_du * (-u / p[1]);
        out[2] = l;
        out[3] = 1.0;
    }
}

/// `plateau − depth / (1 + (2(x − center)/fwhm)²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LorentzianDip;

impl ModelFunction for LorentzianDip {
    fn name(&self) -> &'static str {
        "lorentzian_dip"
    }
    fn parameter_names(&self) -> &'static [&'static str] {
        &["plateau", "depth", "center", "fwhm"]
    }
    fn units(&self) -> &'static [&'static str] {
        &["", "", "Hz", "Hz"]
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let u = 2.0 * (x - p[2]) / p[3];
        p[0] - p[1] / (1.0 + u * u)
    }
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let u = 2.0 * (x - p[2]) / p[3];
        let l = 1.0 / (1.0 + u * u);
        let dl_du = -2.0 * u * l * l;
        out[0] = 1.0;
        out[1] = -l;
        out[2] = -p[1] * dl_du * (-2.0 / p[3]);
        out[3] = -p[1] * dl_du * (-u / p[3]);
    }
}

/// `amplitude · exp(−t/tau)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleExponential;

impl ModelFunction for SingleExponential {
    fn name(&self) -> &'static str {
        "single_exponential"
    }
    fn parameter_names(&self) -> &'static [&'static str] {
        &["amplitude", "tau"]
    }
    fn units(&self) -> &'static [&'static str] {
        &["counts", "s"]
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * (-x / p[1]).exp()
    }
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let e = (-x / p[1]).exp();
        out[0] = e;
        out[1] = p[0] * e * x / (p[1] * p[1]);
    }
}

/// Sum of two exponentials.
#[derive(Debug, Clone, Copy, Default)]
pub struct Biexponential;

impl ModelFunction for Biexponential {
    fn name(&self) -> &'static str {
        "biexponential"
    }
    fn parameter_names(&self) -> &'static [&'static str] {
        &["amplitude_fast", "tau_fast", "amplitude_slow", "tau_slow"]
    }
    fn units(&self) -> &'static [&'static str] {
        &["counts", "s", "counts", "s"]
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * (-x / p[1]).exp() + p[2] * (-x / p[3]).exp()
    }
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let e1 = (-x / p[1]).exp();
        let e2 = (-x / p[3]).exp();
        out[0] = e1;
        out[1] = p[0] * e1 * x / (p[1] * p[1]);
        out[2] = e2;
        out[3] = p[2] * e2 * x / (p[3] * p[3]);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Parameter scales; the iteration works in p / scale. Defaults to |initial|.
    pub scales: Option<Vec<f64>>,
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iterations: 200, scales: None, step_tolerance: 1e-10, gradient_tolerance: 1e-12 }
    }
}

/// Corrected Akaike criterion. The residual sum is floored at `floor`.
pub fn aicc(rss: f64, n: usize, k: usize, floor: f64) -> f64 {
    let nf = n as f64;
    let kf = k as f64;
    let rss = rss.max(floor).max(f64::MIN_POSITIVE);
    let correction = if n > k + 1 { 2.0 * kf * (kf + 1.0) / (nf - kf - 1.0) } else { f64::INFINITY };
    nf * (rss / nf).ln() + 2.0 * kf + correction
}

struct Problem<'a, M: ?Sized> {
    model: &'a M,
    x: &'a [f64],
    y: &'a [f64],
    sqrt_w: Vec<f64>,
    scales: Vec<f64>,
}

impl<M: ModelFunction + ?Sized> Problem<'_, M> {
    fn params(&self, q: &DVector<f64>) -> Vec<f64> {
        q.iter().zip(&self.scales).map(|(q, s)| q * s).collect()
    }

    /// Weighted residuals and their squared norm; `None` if the model is not finite.
    fn residuals(&self, q: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
        let p = self.params(q);
        let r = DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).zip(&self.sqrt_w).map(|((&x, &y), &w)| w * (y - self.model.eval(x, &p))),
        );
        let chi2 = r.norm_squared();
        chi2.is_finite().then_some((r, chi2))
    }

    /// Weighted Jacobian with respect to the scaled parameters.
    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let p = self.params(q);
        let k = p.len();
        let mut j = DMatrix::zeros(self.x.len(), k);
        let mut g = vec![0.0; k];
        for (i, (&x, &w)) in self.x.iter().zip(&self.sqrt_w).enumerate() {
            self.model.gradient(x, &p, &mut g);
            for c in 0..k {
                j[(i, c)] = w * g[c] * self.scales[c];
            }
        }
        j
    }
}

/// Levenberg–Marquardt fit of `model` to (x, y). `weights` are inverse
/// variances (uniform when `None`).
pub fn least_squares_fit<M: ModelFunction + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    initial: &[f64],
    options: &FitOptions,
) -> Result<FitResult> {
    let names = model.parameter_names();
    let k = names.len();
    if initial.len() != k {
        return domain(format!("{} takes {k} parameters, got {}", model.name(), initial.len()));
    }
    if x.len() != y.len() || weights.is_some_and(|w| w.len() != x.len()) {
        return domain("x, y and weights differ in length");
    }
    if x.len() < k + 1 {
        return Err(Error::InsufficientData { needed: k + 1, got: x.len() });
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return domain("initial parameters must be finite");
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return domain("data must be finite");
    }
    let sqrt_w: Vec<f64> = match weights {
        Some(w) => {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return domain("weights must be finite and nonnegative");
            }
            w.iter().map(|v| v.sqrt()).collect()
        }
        None => vec![1.0; x.len()],
    };
    let scales: Vec<f64> = match &options.scales {
        Some(s) if s.len() == k && s.iter().all(|v| v.is_finite() && *v > 0.0) => s.clone(),
        Some(_) => return domain("parameter scales must be positive, one per parameter"),
        None => initial.iter().map(|v| if *v != 0.0 { v.abs() } else { 1.0 }).collect(),
    };
    let prob = Problem { model, x, y, sqrt_w, scales };

    let mut q = DVector::from_iterator(k, initial.iter().zip(&prob.scales).map(|(p, s)| p / s));
    let (mut r, mut chi2) =
        prob.residuals(&q).ok_or_else(|| Error::Domain(format!("{} is not finite at the initial parameters", model.name())))?;
    let mut lambda = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    let mut gradient_norm;

    loop {
        let jac = prob.jacobian(&q);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        gradient_norm = g.amax();
        if gradient_norm < options.gradient_tolerance || chi2 == 0.0 {
            converged = true;
            break;
        }
        if iterations >= options.max_iterations {
            break;
        }
        let max_diag = a.diagonal().max().max(f64::MIN_POSITIVE);
        if lambda.is_nan() {
            lambda = 1e-3 * max_diag;
        }
        let mut accepted = false;
        while lambda <= 1e30 * max_diag {
            let mut damped = a.clone();
            for i in 0..k {
                damped[(i, i)] += lambda;
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&g);
            let trial = &q + &step;
            match prob.residuals(&trial) {
                Some((r_new, chi2_new)) if chi2_new < chi2 => {
                    let rel = step.norm() / (q.norm() + options.step_tolerance);
                    q = trial;
                    r = r_new;
                    chi2 = chi2_new;
                    lambda = (lambda / 10.0).max(f64::MIN_POSITIVE);
                    accepted = true;
                    if rel < options.step_tolerance {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        iterations += 1;
        if !accepted {
            // no representable step lowers the residual: a numerical minimum
            converged = true;
            break;
        }
        if converged {
            let jac = prob.jacobian(&q);
            gradient_norm = (jac.transpose() * &r).amax();
            break;
        }
    }

    let jac = prob.jacobian(&q);
    let a = jac.transpose() * &jac;
    let inverse = a.cholesky().ok_or(Error::RankDeficient)?.inverse();
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let n = x.len();
    let reduced = chi2 / (n - k) as f64;
    let p = prob.params(&q);
    let parameters: BTreeMap<String, FitParameter> = names
        .iter()
        .zip(model.units())
        .enumerate()
        .map(|(i, (name, unit))| {
            let se = prob.scales[i] * (inverse[(i, i)] * reduced).max(0.0).sqrt();
            (name.to_string(), FitParameter { value: p[i], standard_error: se, unit: unit.to_string() })
        })
        .collect();
    let data_norm: f64 = y.iter().zip(&prob.sqrt_w).map(|(y, w)| (y * w).powi(2)).sum();
    Ok(FitResult {
        model: model.name().to_string(),
        names: names.iter().map(|s| s.to_string()).collect(),
        parameters,
        residual_sum_of_squares: chi2,
        aicc: aicc(chi2, n, k, 1e-10 * data_norm),
        points: n,
        converged,
        iterations,
        gradient_norm,
    })
}

/// Heteroscedasticity-consistent standard errors of an unweighted fit:
/// the diagonal of (JᵀJ)⁻¹ Jᵀ diag(variance) J (JᵀJ)⁻¹ at `params`.
pub fn sandwich_standard_errors<M: ModelFunction + ?Sized>(model: &M, x: &[f64], params: &[f64], variances: &[f64]) -> Result<Vec<f64>> {
    let k = params.len();
    if x.len() != variances.len() {
        return domain("x and variances differ in length");
    }
    // scaled columns keep the normal matrix well conditioned
    let scales: Vec<f64> = params.iter().map(|p| if *p != 0.0 { p.abs() } else { 1.0 }).collect();
    let mut j = DMatrix::zeros(x.len(), k);
    let mut g = vec![0.0; k];
    for (i, &xi) in x.iter().enumerate() {
        model.gradient(xi, params, &mut g);
        for c in 0..k {
            j[(i, c)] = g[c] * scales[c];
        }
    }
    let bread = (j.transpose() * &j).cholesky().ok_or(Error::RankDeficient)?.inverse();
    let mut jv = j.clone();
    for (i, v) in variances.iter().enumerate() {
        jv.row_mut(i).scale_mut(v.max(0.0));
    }
    let meat = j.transpose() * jv;
    let cov = &bread * meat * &bread;
    Ok((0..k).map(|c| scales[c] * cov[(c, c)].max(0.0).sqrt()).collect())
}

/// A local maximum of a spectrum together with its topographic prominence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCandidate {
    pub index: usize,
    pub center_hz: f64,
    /// In the units of the detection signal (counts per pulse for spectra).
    pub prominence: f64,
    pub left_base: usize,
    pub right_base: usize,
}

/// Indices of local maxima. A flat top counts once, at its middle.
fn local_maxima(v: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = v.len();
    let mut i = 1;
    while i + 1 < n {
        if v[i - 1] < v[i] {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Prominence of the maximum at `peak` with its left and right base indices.
pub fn prominence(v: &[f64], peak: usize) -> (f64, usize, usize) {
    let h = v[peak];
    let (mut left_min, mut left_base) = (h, peak);
    let mut i = peak;
    while i > 0 {
        i -= 1;
        if v[i] > h {
            break;
        }
        if v[i] < left_min {
            left_min = v[i];
            left_base = i;
        }
    }
    let (mut right_min, mut right_base) = (h, peak);
    let mut i = peak;
    while i + 1 < v.len() {
        i += 1;
        if v[i] > h {
            break;
        }
        if v[i] < right_min {
            right_min = v[i];
            right_base = i;
        }
    }
    (h - left_min.max(right_min), left_base, right_base)
}

/// Local maxima of `values` whose prominence reaches `min_prominence`,
/// sorted by position. `frequencies_hz` supplies the center of each.
pub fn detect_peaks_in(values: &[f64], frequencies_hz: &[f64], min_prominence: f64) -> Vec<PeakCandidate> {
    local_maxima(values)
        .into_iter()
        .filter_map(|i| {
            let (p, left_base, right_base) = prominence(values, i);
            (p >= min_prominence).then(|| PeakCandidate {
                index: i,
                center_hz: frequencies_hz.get(i).copied().unwrap_or(i as f64),
                prominence: p,
                left_base,
                right_base,
            })
        })
        .collect()
}

/// Peaks of a spectrum in counts-per-pulse units, sorted by frequency.
pub fn detect_peaks(spectrum: &Spectrum, min_prominence: f64) -> Vec<PeakCandidate> {
    detect_peaks_in(&spectrum.counts_per_pulse(), spectrum.frequencies_hz(), min_prominence)
}

/// Sample points and Poisson weights of one peak's fit window.
#[derive(Debug, Clone)]
pub struct PeakWindow {
    pub start: usize,
    pub end: usize,
    pub width_estimate_hz: f64,
}

/// Window around `candidate`: ± max(5 × width estimate, 20 steps), clipped at
/// the midpoints to the neighbouring candidates.
pub fn peak_window(values: &[f64], step_hz: f64, candidate: &PeakCandidate, neighbors: &[PeakCandidate]) -> PeakWindow {
    let n = values.len();
    let i = candidate.index;
    let lower = neighbors.iter().filter(|c| c.index < i).map(|c| (c.index + i).div_ceil(2)).max().unwrap_or(0);
    let upper = neighbors.iter().filter(|c| c.index > i).map(|c| (c.index + i) / 2).min().unwrap_or(n - 1);
    let local = smooth_gaussian(&values[lower..=upper], 2.0);
    let peak = i - lower;
    let base = local[0]
        .min(local[local.len() - 1])
        .max(values[candidate.left_base.clamp(lower, upper)].min(values[candidate.right_base.clamp(lower, upper)]));
    let half = base + 0.5 * (local[peak] - base);
    let left = (0..peak).rev().find(|&k| local[k] < half).unwrap_or(0);
    let right = (peak + 1..local.len()).find(|&k| local[k] < half).unwrap_or(local.len() - 1);
    let width_steps = ((right - left) as f64).max(2.0);
    let reach = (5.0 * width_steps).max(20.0).ceil() as usize;
    PeakWindow { start: i.saturating_sub(reach).max(lower), end: (i + reach).min(upper), width_estimate_hz: width_steps * step_hz }
}

/// Most lines fitted jointly by [`fit_lorentzian_cluster`].
pub const MAX_CLUSTER: usize = 4;

const SUM_NAMES: [&str; 1 + 3 * MAX_CLUSTER] = [
    "offset",
    "center_0",
    "fwhm_0",
    "amplitude_0",
    "center_1",
    "fwhm_1",
    "amplitude_1",
    "center_2",
    "fwhm_2",
    "amplitude_2",
    "center_3",
    "fwhm_3",
    "amplitude_3",
];
const SUM_UNITS: [&str; 1 + 3 * MAX_CLUSTER] =
    ["counts/pulse", "Hz", "Hz", "counts/pulse", "Hz", "Hz", "counts/pulse", "Hz", "Hz", "counts/pulse", "Hz", "Hz", "counts/pulse"];

/// Sum of 1 to 4 Lorentzians on a shared constant. Parameters: offset, then
/// (center, fwhm, amplitude) per line.
#[derive(Debug, Clone, Copy)]
pub struct LorentzianSum {
    pub lines: usize,
}

impl ModelFunction for LorentzianSum {
    fn name(&self) -> &'static str {
        "lorentzian_sum"
    }
    fn parameter_names(&self) -> &'static [&'static str] {
        &SUM_NAMES[..1 + 3 * self.lines]
    }
    fn units(&self) -> &'static [&'static str] {
        &SUM_UNITS[..1 + 3 * self.lines]
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] + p[1..].chunks(3).map(|l| Lorentzian.eval(x, &[l[0], l[1], l[2], 0.0])).sum::<f64>()
    }
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        let mut g = [0.0; 4];
        for (l, o) in p[1..].chunks(3).zip(out[1..].chunks_mut(3)) {
            Lorentzian.gradient(x, &[l[0], l[1], l[2], 0.0], &mut g);
            o.copy_from_slice(&g[..3]);
        }
    }
}

/// Fits the lines of `cluster` jointly, one Lorentzian each on a shared
/// constant. The window spans every member's window and is clipped at the
/// midpoints to the candidates in `neighbors` outside the cluster.
/// `subtract` (counts per pulse, full grid) is removed from the data first.
/// Returns one result per member with absolute center (Hz), FWHM (Hz),
/// amplitude and offset (counts per pulse).
pub fn fit_lorentzian_cluster(
    spectrum: &Spectrum,
    cluster: &[PeakCandidate],
    neighbors: &[PeakCandidate],
    subtract: Option<&[f64]>,
) -> Result<Vec<FitResult>> {
    if cluster.is_empty() || cluster.len() > MAX_CLUSTER {
        return domain(format!("a cluster holds 1 to {MAX_CLUSTER} lines, got {}", cluster.len()));
    }
    let scale = spectrum.counts_per_pulse_scale();
    let freqs = spectrum.frequencies_hz();
    let mut values = spectrum.counts_per_pulse();
    if let Some(s) = subtract {
        if s.len() != values.len() {
            return domain("subtracted model differs in length from the spectrum");
        }
        values.iter_mut().zip(s).for_each(|(v, s)| *v -= s);
    }
    let step = spectrum.step_hz();
    let outside: Vec<PeakCandidate> = neighbors.iter().filter(|n| cluster.iter().all(|c| c.index != n.index)).copied().collect();
    let mut all: Vec<PeakCandidate> = outside.iter().chain(cluster).copied().collect();
    all.sort_by_key(|c| c.index);
    all.dedup_by_key(|c| c.index);

    let mut start = usize::MAX;
    let mut end = 0;
    let mut widths = Vec::with_capacity(cluster.len());
    for c in cluster {
        // width estimate against every neighbour, reach against the outside ones
        let own = peak_window(&values, step, c, &all);
        let reach = (5.0 * own.width_estimate_hz / step).max(20.0).ceil() as usize;
        start = start.min(c.index.saturating_sub(reach));
        end = end.max((c.index + reach).min(values.len() - 1));
        widths.push(own.width_estimate_hz);
    }
    let first = cluster.iter().map(|c| c.index).min().unwrap();
    let last = cluster.iter().map(|c| c.index).max().unwrap();
    if let Some(lo) = outside.iter().filter(|n| n.index < first).map(|n| (n.index + first).div_ceil(2)).max() {
        start = start.max(lo);
    }
    if let Some(hi) = outside.iter().filter(|n| n.index > last).map(|n| (n.index + last) / 2).min() {
        end = end.min(hi);
    }
    let count = end + 1 - start;
    if count < 5 {
        return Err(Error::InsufficientData { needed: 5, got: count });
    }
    let origin = cluster[0].center_hz;
    let range = start..=end;
    let x: Vec<f64> = freqs[range.clone()].iter().map(|f| f - origin).collect();
    let y: Vec<f64> = values[range.clone()].to_vec();
    let w: Vec<f64> = spectrum.counts()[range].iter().map(|c| scale * scale / c.max(1.0)).collect();
    let baseline = y[0].min(y[y.len() - 1]);
    let mut initial = vec![baseline];
    let mut scales = vec![0.0];
    let mut amp_scale: f64 = 0.0;
    for (c, &width) in cluster.iter().zip(&widths) {
        let amplitude = (values[c.index] - baseline).max(c.prominence).max(1e-6);
        amp_scale = amp_scale.max(amplitude);
        initial.extend([c.center_hz - origin, width, amplitude]);
        scales.extend([width, width, amplitude]);
    }
    scales[0] = amp_scale;
    let model = LorentzianSum { lines: cluster.len() };
    let joint = least_squares_fit(&model, &x, &y, Some(&w), &initial, &FitOptions { scales: Some(scales), ..FitOptions::default() })?;

    let offset = joint.parameters["offset"].clone();
    Ok((0..cluster.len())
        .map(|m| {
            let get = |name: &str| joint.parameters[&format!("{name}_{m}")].clone();
            let mut center = get("center");
            center.value += origin;
            let mut fwhm = get("fwhm");
            fwhm.value = fwhm.value.abs();
            let parameters = [("center", center), ("fwhm", fwhm), ("amplitude", get("amplitude")), ("offset", offset.clone())]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            FitResult {
                model: Lorentzian.name().to_string(),
                names: Lorentzian.parameter_names().iter().map(|s| s.to_string()).collect(),
                parameters,
                ..joint.clone()
            }
        })
        .collect())
}

/// Fits one Lorentzian (plus constant) to the window of `candidate`, with
/// `subtract` removed from the data first.
pub fn fit_lorentzian_peak_with(
    spectrum: &Spectrum,
    candidate: &PeakCandidate,
    neighbors: &[PeakCandidate],
    subtract: Option<&[f64]>,
) -> Result<FitResult> {
    Ok(fit_lorentzian_cluster(spectrum, std::slice::from_ref(candidate), neighbors, subtract)?.remove(0))
}

/// Fits one Lorentzian (plus constant) around `candidate`. Parameters:
/// absolute center (Hz), FWHM (Hz), amplitude and offset (counts per pulse).
pub fn fit_lorentzian_peak(spectrum: &Spectrum, candidate: &PeakCandidate, neighbors: &[PeakCandidate]) -> Result<FitResult> {
    fit_lorentzian_peak_with(spectrum, candidate, neighbors, None)
}

/// Groups consecutive candidates whose separation is below the sum of their
/// width estimates. Groups hold at most [`MAX_CLUSTER`] lines.
pub fn blended_clusters(spectrum: &Spectrum, candidates: &[PeakCandidate]) -> Vec<Vec<PeakCandidate>> {
    let values = smooth_gaussian(&spectrum.counts_per_pulse(), 2.0);
    let step = spectrum.step_hz();
    let widths: Vec<f64> = candidates.iter().map(|c| peak_window(&values, step, c, candidates).width_estimate_hz).collect();
    let mut clusters: Vec<Vec<PeakCandidate>> = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let joins = i > 0
            && (c.center_hz - candidates[i - 1].center_hz).abs() < widths[i] + widths[i - 1]
            && clusters.last().is_some_and(|g| g.len() < MAX_CLUSTER);
        match clusters.last_mut() {
            Some(g) if joins => g.push(*c),
            _ => clusters.push(vec![*c]),
        }
    }
    clusters
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Single,
    Biexponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Inverse variance 1/max(counts, 1).
    Poisson,
    Uniform,
}

/// Outcome of single-versus-biexponential model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySelection {
    pub model: DecayModel,
    pub single: Option<FitResult>,
    pub biexponential: Option<FitResult>,
    /// AICc(single) − AICc(biexponential); positive favours two components.
    pub aicc_improvement: f64,
}

impl DecaySelection {
    pub fn chosen(&self) -> &FitResult {
        match self.model {
            DecayModel::Single => self.single.as_ref().expect("single fit present when selected"),
            DecayModel::Biexponential => self.biexponential.as_ref().expect("biexponential fit present when selected"),
        }
    }
}

/// Required AICc improvement before a second component is accepted.
pub const AICC_THRESHOLD: f64 = 10.0;

/// Log-linear estimate of (amplitude, tau) from positive samples.
fn log_linear(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, y)| **y > 0.0).map(|(x, y)| (*x, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0 && slope.is_finite()).then(|| ((my - slope * mx).exp(), -1.0 / slope))
}

fn biexp_degenerate(fit: &FitResult) -> bool {
    let v = fit.values();
    v[0] <= 0.0 || v[2] <= 0.0 || v[1] <= 0.0 || v[3] <= 0.0 || v[3] / v[1] < 1.05 || !fit.converged
}

/// Fits a single and a biexponential decay to (t, counts) and keeps the second
/// component only if the corrected Akaike criterion improves by more than 10.
pub fn select_decay_model_xy(x: &[f64], y: &[f64], weighting: Weighting) -> Result<DecaySelection> {
    if x.len() < 20 {
        return Err(Error::InsufficientData { needed: 20, got: x.len() });
    }
    let weights: Option<Vec<f64>> = match weighting {
        Weighting::Poisson => Some(y.iter().map(|c| 1.0 / c.max(1.0)).collect()),
        Weighting::Uniform => None,
    };
    let w = weights.as_deref();
    let span = x[x.len() - 1] - x[0];
    let (a0, tau0) =
        log_linear(&x[..x.len() / 3], &y[..x.len() / 3]).or_else(|| log_linear(x, y)).unwrap_or((y[0].abs().max(1.0), span / 3.0));
    let tau0 = tau0.clamp(span / 1000.0, span * 10.0);

    let single = least_squares_fit(&SingleExponential, x, y, w, &[a0, tau0], &FitOptions::default()).ok();
    let (a_s, tau_s) = single
        .as_ref()
        .filter(|f| f.converged && f.value("tau") > 0.0)
        .map(|f| (f.value("amplitude"), f.value("tau")))
        .unwrap_or((a0, tau0));

    let mut starts = Vec::new();
    // peel: slow component from the tail, fast from the early remainder
    let tail = x.iter().position(|&t| t >= x[0] + 2.0 * tau_s).unwrap_or(2 * x.len() / 3).min(x.len() - 5);
    if let Some((a_slow, tau_slow)) = log_linear(&x[tail..], &y[tail..]) {
        let rest: Vec<f64> = x.iter().zip(y).map(|(t, y)| y - a_slow * (-t / tau_slow).exp()).collect();
        let early = (tail / 2).max(3);
        if let Some((a_fast, tau_fast)) = log_linear(&x[..early], &rest[..early]) {
            if tau_fast < tau_slow {
                starts.push([a_fast, tau_fast, a_slow, tau_slow]);
            }
        }
    }
    starts.push([0.5 * a_s, 0.5 * tau_s, 0.5 * a_s, 2.0 * tau_s]);
    starts.push([0.5 * a_s, 0.3 * tau_s, 0.5 * a_s, 1.5 * tau_s]);

    let biexponential = starts
        .iter()
        .filter_map(|s| least_squares_fit(&Biexponential, x, y, w, s, &FitOptions::default()).ok())
        .map(order_components)
        .filter(|f| !biexp_degenerate(f))
        .min_by(|a, b| a.residual_sum_of_squares.total_cmp(&b.residual_sum_of_squares));

    let single_ok = single.as_ref().is_some_and(|f| f.converged);
    match (single_ok, &biexponential) {
        (false, None) => Err(Error::ModelSelection("neither decay model converged".into())),
        (false, Some(_)) => Ok(DecaySelection { model: DecayModel::Biexponential, single, biexponential, aicc_improvement: f64::INFINITY }),
        (true, None) => Ok(DecaySelection { model: DecayModel::Single, single, biexponential, aicc_improvement: f64::NEG_INFINITY }),
        (true, Some(b)) => {
            let improvement = single.as_ref().map(|s| s.aicc).unwrap_or(f64::INFINITY) - b.aicc;
            let model = if improvement > AICC_THRESHOLD { DecayModel::Biexponential } else { DecayModel::Single };
            Ok(DecaySelection { model, single, biexponential, aicc_improvement: improvement })
        }
    }
}

/// Model selection on a trace, with x = bin start times.
pub fn select_decay_model(trace: &TimeTrace, weighting: Weighting) -> Result<DecaySelection> {
    select_decay_model_xy(&trace.bin_starts(), &trace.counts, weighting)
}

/// Relabels a biexponential fit so that `tau_fast` ≤ `tau_slow`.
fn order_components(mut fit: FitResult) -> FitResult {
    if fit.value("tau_fast") > fit.value("tau_slow") {
        let p = &mut fit.parameters;
        let af = p.remove("amplitude_fast").unwrap();
        let tf = p.remove("tau_fast").unwrap();
        let as_ = p.remove("amplitude_slow").unwrap();
        let ts = p.remove("tau_slow").unwrap();
        p.insert("amplitude_fast".into(), as_);
        p.insert("tau_fast".into(), ts);
        p.insert("amplitude_slow".into(), af);
        p.insert("tau_slow".into(), tf);
    }
    fit
}
