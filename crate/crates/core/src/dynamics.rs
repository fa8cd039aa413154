//! Time-domain physics: fluorescence decay traces, two-level rate-equation
//! hole burning with the pump/probe endpoint formulas, and Zeeman splitting.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{Catalog, DetectorModel, ScanProtocol, SiteResonance};
use crate::synth::line_shape;

pub const DEFAULT_BIN_WIDTH_S: f64 = 10e-6;

/// Bohr magneton over Planck's constant, Hz/T.
pub const BOHR_MAGNETON_HZ_PER_T: f64 = 1.399_624_493_61e10;

/// Photon counts binned after the end of the excitation pulse (t = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub bin_width_s: f64,
    pub counts: Vec<f64>,
    pub protocol: ScanProtocol,
}

impl TimeTrace {
    pub fn new(bin_width_s: f64, counts: Vec<f64>, protocol: ScanProtocol) -> Result<Self> {
        let t = TimeTrace { bin_width_s, counts, protocol };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_s > 0.0) {
            return domain("bin width must be positive");
        }
        if self.counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return domain("trace counts must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.bin_width_s * self.counts.len() as f64
    }

    /// Start time of each bin.
    pub fn bin_starts(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| i as f64 * self.bin_width_s).collect()
    }

    /// Bin-wise sum with another trace of identical binning.
    pub fn added(&self, other: &TimeTrace) -> Result<TimeTrace> {
        if self.counts.len() != other.counts.len() || (self.bin_width_s - other.bin_width_s).abs() > 1e-15 {
            return domain("traces differ in binning");
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        TimeTrace::new(self.bin_width_s, counts, self.protocol)
    }
}

pub fn write_trace_csv<W: Write>(trace: &TimeTrace, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["t_us", "counts"])?;
    for (t, c) in trace.bin_starts().iter().zip(&trace.counts) {
        wtr.write_record([(t * 1e6).to_string(), c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `t_us,counts` rows. The bin width is taken from the first two rows.
pub fn read_trace_csv<R: Read>(reader: R, protocol: ScanProtocol) -> Result<TimeTrace> {
    let rows = read_two_column_csv(reader, ["t_us", "counts"])?;
    if rows.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: rows.len() });
    }
    let width_us = rows[1].0 - rows[0].0;
    for (i, (t, _)) in rows.iter().enumerate() {
        if (t - (rows[0].0 + i as f64 * width_us)).abs() > 1e-6 * width_us.abs().max(1.0) {
            return Err(Error::Parse { row: i + 1, message: "trace bins are not uniform".into() });
        }
    }
    TimeTrace::new(width_us * 1e-6, rows.into_iter().map(|r| r.1).collect(), protocol)
}

pub(crate) fn read_two_column_csv<R: Read>(reader: R, header: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let got = rdr.headers()?.clone();
    if got.iter().ne(header) {
        return Err(Error::Parse { row: 0, message: format!("expected header {}, got {got:?}", header.join(",")) });
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k).unwrap_or("").trim().parse().map_err(|e| Error::Parse { row, message: format!("{e}") })
            };
            Ok((parse(0)?, parse(1)?))
        })
        .collect()
}

/// Emitted photons of `site` per pulse in each bin, scaled by `weight`.
/// The site amplitude is the emission integrated over the survey window.
fn site_emission_bins(site: &SiteResonance, weight: f64, protocol: &ScanProtocol, edges: &[f64]) -> Result<Vec<f64>> {
    let tau = site.lifetime_s.ok_or_else(|| Error::Domain(format!("line at {} nm has no lifetime", site.center_wavelength_nm)))?;
    let (t0, t1) = (protocol.window_start_s, protocol.window_end_s);
    let mut components = Vec::with_capacity(2);
    match site.second_component {
        Some(second) => {
            components.push((site.amplitude * (1.0 - second.fraction), tau));
            components.push((site.amplitude * second.fraction, second.lifetime_s));
        }
        None => components.push((site.amplitude, tau)),
    }
    let mut out = vec![0.0; edges.len() - 1];
    for (window_amplitude, tau) in components {
        // total photons per pulse such that the window integral equals the amplitude
        let total = window_amplitude / ((-t0 / tau).exp() - (-t1 / tau).exp());
        for (o, e) in out.iter_mut().zip(edges.windows(2)) {
            *o += weight * total * ((-e[0] / tau).exp() - (-e[1] / tau).exp());
        }
    }
    Ok(out)
}

fn bin_edges(duration_s: f64, bin_width_s: f64) -> Result<Vec<f64>> {
    if !(bin_width_s > 0.0) || !(duration_s >= bin_width_s) {
        return domain("trace duration must cover at least one positive-width bin");
    }
    let n = (duration_s / bin_width_s + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * bin_width_s).collect())
}

fn assemble_trace(
    emission: Vec<f64>,
    detector: &DetectorModel,
    protocol: &ScanProtocol,
    edges: &[f64],
    bin_width_s: f64,
) -> Result<TimeTrace> {
    let reps = f64::from(protocol.repetitions);
    let eta = detector.system_detection_efficiency;
    let counts = emission
        .iter()
        .zip(edges.windows(2))
        .map(|(site, e)| reps * (eta * (site + detector.background_emission(e[0], e[1])) + detector.dark_counts(e[1] - e[0])))
        .collect();
    TimeTrace::new(bin_width_s, counts, *protocol)
}

/// Expected decay trace with the laser on the center of `site`, summed over
/// `protocol.repetitions` pulses, in 10 us bins.
pub fn decay_trace(site: &SiteResonance, detector: &DetectorModel, protocol: &ScanProtocol, duration_s: f64) -> Result<TimeTrace> {
    decay_trace_binned(site, detector, protocol, duration_s, DEFAULT_BIN_WIDTH_S)
}

pub fn decay_trace_binned(
    site: &SiteResonance,
    detector: &DetectorModel,
    protocol: &ScanProtocol,
    duration_s: f64,
    bin_width_s: f64,
) -> Result<TimeTrace> {
    protocol.validate()?;
    detector.validate()?;
    if duration_s < protocol.window_end_s {
        return domain("trace duration must reach the end of the integration window");
    }
    let edges = bin_edges(duration_s, bin_width_s)?;
    let emission = site_emission_bins(site, 1.0, protocol, &edges)?;
    assemble_trace(emission, detector, protocol, &edges, bin_width_s)
}

/// Expected decay trace with the laser parked at `frequency_hz`: every
/// catalog line contributes with its line-shape weight at that detuning.
pub fn decay_trace_at(
    catalog: &Catalog,
    frequency_hz: f64,
    detector: &DetectorModel,
    protocol: &ScanProtocol,
    duration_s: f64,
) -> Result<TimeTrace> {
    protocol.validate()?;
    detector.validate()?;
    let edges = bin_edges(duration_s, DEFAULT_BIN_WIDTH_S)?;
    let mut emission = vec![0.0; edges.len() - 1];
    for site in catalog {
        let w = line_shape(frequency_hz - site.center_frequency_hz(), site.inhomogeneous_fwhm_hz, protocol.fm_broadening_hz);
        if w < 1e-12 {
            continue;
        }
        for (e, s) in emission.iter_mut().zip(site_emission_bins(site, w, protocol, &edges)?) {
            *e += s;
        }
    }
    assemble_trace(emission, detector, protocol, &edges, DEFAULT_BIN_WIDTH_S)
}

/// Background-only trace (no resonant emission).
pub fn background_trace(detector: &DetectorModel, protocol: &ScanProtocol, duration_s: f64) -> Result<TimeTrace> {
    protocol.validate()?;
    detector.validate()?;
    let edges = bin_edges(duration_s, DEFAULT_BIN_WIDTH_S)?;
    let emission = vec![0.0; edges.len() - 1];
    assemble_trace(emission, detector, protocol, &edges, DEFAULT_BIN_WIDTH_S)
}

/// Poisson draw of every bin of an expected trace.
pub fn sample_trace(expected: &TimeTrace, seed: u64) -> TimeTrace {
    let counts = expected.counts.iter().enumerate().map(|(i, &l)| crate::synth::poisson_draw(seed, i as u64, l)).collect();
    TimeTrace { bin_width_s: expected.bin_width_s, counts, protocol: expected.protocol }
}

/// One constant-rate segment of the two-level rate equation
/// dρ/dt = R(1 − 2ρ) − ρ/τ, as the affine map ρ ↦ a·ρ + b.
#[derive(Debug, Clone, Copy)]
struct Affine {
    a: f64,
    b: f64,
}

impl Affine {
    fn segment(rate: f64, lifetime: f64, duration: f64) -> Self {
        let k = 2.0 * rate + 1.0 / lifetime;
        let a = (-k * duration).exp();
        Affine { a, b: rate / k * (1.0 - a) }
    }

    /// `self` followed by `next`.
    fn then(self, next: Affine) -> Affine {
        Affine { a: next.a * self.a, b: next.a * self.b + next.b }
    }

    fn apply(self, rho: f64) -> f64 {
        self.a * rho + self.b
    }
}

/// Excited-state occupation of a resonant two-level ion after `t` seconds of
/// driving at pump rate `pump_rate` from the ground state.
pub fn rho_res(t: f64, pump_rate: f64, lifetime: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    Affine::segment(pump_rate, lifetime, t).apply(0.0)
}

/// Threshold above which a probe detuning counts as "far" (in units of γ_D).
pub const FAR_DETUNING_FACTOR: f64 = 20.0;

/// Pump/probe occupation reference. Returns the resonant-case value at zero
/// detuning and the far-detuned closed form above 20 γ_D, both verbatim.
/// In between it returns the ensemble rate-equation occupation of the
/// hole simulator, single shot from the ground state.
pub fn eq1_reference(pump_s: f64, detuning_hz: f64, lifetime: f64, pump_rate: f64, homogeneous_fwhm_hz: f64) -> Result<f64> {
    if !(pump_s > 0.0) {
        return domain("pump duration must be positive");
    }
    if detuning_hz == 0.0 {
        return Ok(rho_res(2.0 * pump_s, pump_rate, lifetime));
    }
    if detuning_hz.abs() > FAR_DETUNING_FACTOR * homogeneous_fwhm_hz {
        return Ok(eq1_far_detuned(pump_s, lifetime, pump_rate));
    }
    let cfg = HoleBurnConfig {
        pump_duration_s: pump_s,
        probe_duration_s: pump_s,
        delay_s: 0.0,
        repetition_period_s: f64::INFINITY,
        pump_rate_hz: pump_rate,
        homogeneous_fwhm_hz,
        lifetime_s: lifetime,
        ..HoleBurnConfig::default()
    };
    Ok(cfg.ensemble_occupation(detuning_hz))
}

/// Far-detuned closed form 2ρ_res(t_p)(1 − ½e^(−t_p/τ)).
pub fn eq1_far_detuned(pump_s: f64, lifetime: f64, pump_rate: f64) -> f64 {
    2.0 * rho_res(pump_s, pump_rate, lifetime) * (1.0 - 0.5 * (-pump_s / lifetime).exp())
}

/// Transient spectral hole-burning sequence: pump at the line center,
/// optional dark delay, probe at a detuning Δf, then detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoleBurnConfig {
    pub pump_duration_s: f64,
    pub probe_duration_s: f64,
    pub delay_s: f64,
    /// Probe detunings are a symmetric grid of `detuning_points` over ±`detuning_span_hz`.
    pub detuning_span_hz: f64,
    pub detuning_points: usize,
    pub repetition_period_s: f64,
    /// EOM sideband spacing; informational only.
    pub sideband_separation_hz: f64,
    pub pump_rate_hz: f64,
    pub homogeneous_fwhm_hz: f64,
    pub lifetime_s: f64,
    /// Photons are counted from the end of the probe for this long.
    pub detection_window_s: f64,
}

impl Default for HoleBurnConfig {
    fn default() -> Self {
        let lifetime_s = 0.764e-3;
        let homogeneous_fwhm_hz = 0.75e6;
        HoleBurnConfig {
            pump_duration_s: 20e-6,
            probe_duration_s: 20e-6,
            delay_s: 0.0,
            detuning_span_hz: 20.0 * homogeneous_fwhm_hz,
            detuning_points: 201,
            repetition_period_s: 3e-3,
            sideband_separation_hz: 5e9,
            pump_rate_hz: 0.01 / lifetime_s,
            homogeneous_fwhm_hz,
            lifetime_s,
            detection_window_s: 1e-3,
        }
    }
}

/// Spacing of the ion-detuning integration grid, in units of γ_D.
const ION_GRID_STEP: f64 = 1.0 / 20.0;
/// Extra ion-detuning margin beyond the probe grid, in units of γ_D.
const ION_GRID_MARGIN: f64 = 200.0;

impl HoleBurnConfig {
    /// Weak-pump configuration (R₀τ = 0.01) for a given homogeneous width and lifetime.
    pub fn weak_pump(homogeneous_fwhm_hz: f64, lifetime_s: f64) -> Self {
        HoleBurnConfig {
            detuning_span_hz: 20.0 * homogeneous_fwhm_hz,
            pump_rate_hz: 0.01 / lifetime_s,
            homogeneous_fwhm_hz,
            lifetime_s,
            ..HoleBurnConfig::default()
        }
    }

    /// Validates the configuration and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.pump_duration_s > 0.0 && self.probe_duration_s > 0.0) {
            return domain("pump and probe durations must be positive");
        }
        if !(self.delay_s >= 0.0) {
            return domain("pump-probe delay must be nonnegative");
        }
        if !(self.homogeneous_fwhm_hz > 0.0 && self.lifetime_s > 0.0) {
            return domain("homogeneous width and lifetime must be positive");
        }
        if !(self.pump_rate_hz >= 0.0) {
            return domain("pump rate must be nonnegative");
        }
        if !(self.detection_window_s > 0.0) {
            return domain("detection window must be positive");
        }
        if self.detuning_points < 3 {
            return domain("need at least 3 probe detunings");
        }
        if self.detuning_span_hz < 10.0 * self.homogeneous_fwhm_hz * (1.0 - 1e-12) {
            return domain(format!(
                "detuning grid ±{:.3e} Hz is narrower than ±10 γ_D = ±{:.3e} Hz",
                self.detuning_span_hz,
                10.0 * self.homogeneous_fwhm_hz
            ));
        }
        let busy = self.pump_duration_s + self.delay_s + self.probe_duration_s;
        if self.repetition_period_s < busy {
            return domain("repetition period is shorter than the pulse sequence");
        }
        let mut warnings = Vec::new();
        if self.repetition_period_s < 2.0 * self.lifetime_s {
            warnings.push(format!(
                "repetition period {:.3e} s is shorter than twice the lifetime {:.3e} s",
                self.repetition_period_s, self.lifetime_s
            ));
        }
        Ok(warnings)
    }

    pub fn detunings(&self) -> Vec<f64> {
        let n = self.detuning_points;
        (0..n).map(|i| -self.detuning_span_hz + 2.0 * self.detuning_span_hz * i as f64 / (n - 1) as f64).collect()
    }

    fn lorentz(&self, detuning: f64) -> f64 {
        let x = 2.0 * detuning / self.homogeneous_fwhm_hz;
        1.0 / (1.0 + x * x)
    }

    /// Pump (rate r1), delay, probe (rate r2) as one affine map.
    fn pulses(&self, pump_rate: f64, probe_rate: f64) -> Affine {
        let tau = self.lifetime_s;
        Affine::segment(pump_rate, tau, self.pump_duration_s).then(Affine::segment(0.0, tau, self.delay_s)).then(Affine::segment(
            probe_rate,
            tau,
            self.probe_duration_s,
        ))
    }

    /// Occupation at the end of the probe in the periodic steady state.
    fn end_of_probe(&self, pump_rate: f64, probe_rate: f64) -> f64 {
        let seq = self.pulses(pump_rate, probe_rate);
        let rest = self.repetition_period_s - (self.pump_duration_s + self.delay_s + self.probe_duration_s);
        let start = if rest.is_finite() {
            let relax = (-rest / self.lifetime_s).exp();
            relax * seq.b / (1.0 - relax * seq.a)
        } else {
            0.0
        };
        seq.apply(start)
    }

    fn ion_grid(&self, max_detuning: f64) -> (Vec<f64>, f64) {
        let step = ION_GRID_STEP * self.homogeneous_fwhm_hz;
        let reach = max_detuning.abs() + ION_GRID_MARGIN * self.homogeneous_fwhm_hz;
        let n = (reach / step).ceil() as i64;
        ((-n..=n).map(|k| k as f64 * step).collect(), step)
    }

    /// Σ over ions of the end-of-probe occupation for probe detuning `df`,
    /// divided by the effective width of a resonant class (π γ_D / 2), so a
    /// linear response reads as a single-ion occupation.
    fn integrated(&self, ions: &[f64], step: f64, pump: impl Fn(f64) -> f64, probe: impl Fn(f64) -> f64) -> f64 {
        let sum: f64 = ions.iter().map(|&d| self.end_of_probe(pump(d), probe(d))).sum();
        sum * step / (std::f64::consts::FRAC_PI_2 * self.homogeneous_fwhm_hz)
    }

    /// Pump-only plus probe-only ensemble occupation: the value at infinite
    /// probe detuning, and the Δf-independent part of every profile point.
    fn plateau(&self, ions: &[f64], step: f64) -> f64 {
        let r0 = self.pump_rate_hz;
        self.integrated(ions, step, |d| r0 * self.lorentz(d), |_| 0.0) + self.integrated(ions, step, |_| 0.0, |d| r0 * self.lorentz(d))
    }

    /// Ensemble occupation at probe detuning `df`. The single-pulse parts are
    /// translation invariant and taken from the plateau; only the pump×probe
    /// cross term, which decays as the product of both profiles, is integrated.
    fn occupation_at(&self, ions: &[f64], step: f64, plateau: f64, df: f64) -> f64 {
        let r0 = self.pump_rate_hz;
        let cross: f64 = ions
            .iter()
            .map(|&d| {
                let (r1, r2) = (r0 * self.lorentz(d), r0 * self.lorentz(d - df));
                self.end_of_probe(r1, r2) - self.end_of_probe(r1, 0.0) - self.end_of_probe(0.0, r2)
            })
            .sum();
        plateau + cross * step / (std::f64::consts::FRAC_PI_2 * self.homogeneous_fwhm_hz)
    }

    fn ensemble_occupation(&self, detuning_hz: f64) -> f64 {
        let (ions, step) = self.ion_grid(detuning_hz);
        let plateau = self.plateau(&ions, step);
        self.occupation_at(&ions, step, plateau, detuning_hz)
    }
}

/// Occupations in the language of the pump/probe endpoint formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointComparison {
    /// Occupation of the pump-resonant ions after pump and probe at Δf = 0.
    pub simulated_resonant: f64,
    /// ρ_res(2 t_p).
    pub reference_resonant: f64,
    /// Pump-class plus probe-class occupation at the largest grid detuning.
    pub simulated_far: f64,
    /// Rate-equation closed form ρ_res(t_p)·e^(−(delay + t_probe)/τ) + ρ_res(t_probe), single shot.
    pub rate_equation_far: f64,
    /// Far-detuned closed form 2ρ_res(t_p)(1 − ½e^(−t_p/τ)).
    pub reference_far: f64,
    /// (reference_far − simulated_far) / simulated_far.
    pub far_discrepancy: f64,
}

/// Normalised hole profile produced by [`simulate_hole`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleProfile {
    pub detunings_hz: Vec<f64>,
    /// Detected signal relative to the infinitely detuned plateau.
    pub signal_norm: Vec<f64>,
    /// Ensemble occupation per resonant class (see [`EndpointComparison`]).
    pub occupation: Vec<f64>,
    pub plateau_occupation: f64,
    pub endpoints: EndpointComparison,
    pub warnings: Vec<String>,
}

/// Rate-equation simulation of transient spectral hole burning, integrated
/// over a locally flat inhomogeneous distribution of ion detunings.
pub fn simulate_hole(cfg: &HoleBurnConfig) -> Result<HoleProfile> {
    let mut warnings = cfg.validate()?;
    let detunings = cfg.detunings();
    let max_df = cfg.detuning_span_hz;
    let (ions, step) = cfg.ion_grid(max_df);
    let r0 = cfg.pump_rate_hz;

    // infinitely detuned probe: the two pulses excite disjoint ion classes
    let plateau = cfg.plateau(&ions, step);
    let occupation: Vec<f64> = detunings.par_iter().map(|&df| cfg.occupation_at(&ions, step, plateau, df)).collect();
    // detected photons in the window are proportional to the end-of-probe occupation
    let signal_norm = occupation.iter().map(|o| o / plateau).collect();

    let far = max_df;
    let resonant_class = cfg.end_of_probe(r0, r0);
    let far_pump_class = cfg.end_of_probe(r0, r0 * cfg.lorentz(-far));
    let far_probe_class = cfg.end_of_probe(r0 * cfg.lorentz(far), r0);
    let simulated_far = far_pump_class + far_probe_class;
    let tau = cfg.lifetime_s;
    let rate_equation_far = rho_res(cfg.pump_duration_s, r0, tau) * (-(cfg.delay_s + cfg.probe_duration_s) / tau).exp()
        + rho_res(cfg.probe_duration_s, r0, tau);
    let reference_far = eq1_far_detuned(cfg.pump_duration_s, tau, r0);
    let far_discrepancy = (reference_far - simulated_far) / simulated_far;
    if far_discrepancy.abs() > 0.01 {
        warnings.push(format!("far-detuned closed form differs from the rate equation by {:.1}%", 100.0 * far_discrepancy));
    }
    let endpoints = EndpointComparison {
        simulated_resonant: resonant_class,
        reference_resonant: rho_res(2.0 * cfg.pump_duration_s, r0, tau),
        simulated_far,
        rate_equation_far,
        reference_far,
        far_discrepancy,
    };
    Ok(HoleProfile { detunings_hz: detunings, signal_norm, occupation, plateau_occupation: plateau, endpoints, warnings })
}

/// Steady-state power-broadened hole width 2γ_D√(1 + s), s = 2R₀τ.
pub fn power_broadened_hole_fwhm(homogeneous_fwhm_hz: f64, pump_rate_hz: f64, lifetime_s: f64) -> f64 {
    2.0 * homogeneous_fwhm_hz * (1.0 + 2.0 * pump_rate_hz * lifetime_s).sqrt()
}

pub fn write_hole_csv<W: Write>(detunings_hz: &[f64], signal: &[f64], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["detuning_hz", "signal_norm"])?;
    for (d, s) in detunings_hz.iter().zip(signal) {
        wtr.write_record([d.to_string(), s.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `detuning_hz,signal_norm` rows into (detunings, signal).
pub fn read_hole_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(read_two_column_csv(reader, ["detuning_hz", "signal_norm"])?.into_iter().unzip())
}

/// Polarisation-dependent intensity of one Zeeman branch:
/// `base + modulation·cos²(θ − phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchWeight {
    pub base: f64,
    #[serde(default)]
    pub modulation: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl BranchWeight {
    pub fn constant(w: f64) -> Self {
        BranchWeight { base: w, modulation: 0.0, phase_rad: 0.0 }
    }

    pub fn at(&self, polarization_rad: f64) -> f64 {
        self.base + self.modulation * (polarization_rad - self.phase_rad).cos().powi(2)
    }
}

/// One magnetically inequivalent orientation of a site. Branch order:
/// `[+(g_e+g_g), −(g_e+g_g), +(g_e−g_g), −(g_e−g_g)]`, offsets for positive field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeemanSubsite {
    pub g_ground: f64,
    pub g_excited: f64,
    pub weights: [BranchWeight; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeemanSite {
    pub zero_field_frequency_hz: f64,
    pub subsites: Vec<ZeemanSubsite>,
    #[serde(default = "default_max_field")]
    pub max_field_t: f64,
}

fn default_max_field() -> f64 {
    0.060
}

/// Lines closer than this are merged.
pub const ZEEMAN_MERGE_HZ: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanLine {
    pub offset_hz: f64,
    pub intensity: f64,
}

impl ZeemanSite {
    pub fn validate(&self) -> Result<()> {
        if self.subsites.is_empty() || self.subsites.len() > 24 {
            return domain(format!("a site has 1 to 24 subsites, got {}", self.subsites.len()));
        }
        for s in &self.subsites {
            if !(s.g_ground >= 0.0 && s.g_excited >= 0.0) {
                return domain("g-factors must be nonnegative");
            }
            for w in &s.weights {
                if !(w.base >= 0.0 && w.base + w.modulation.min(0.0) >= 0.0) {
                    return domain("branch weights must be nonnegative at every polarisation");
                }
            }
        }
        Ok(())
    }
}

/// Zeeman components of `site` at field `field_t` (tesla, signed), sorted by offset.
pub fn zeeman_lines(site: &ZeemanSite, field_t: f64, polarization_rad: f64) -> Result<Vec<ZeemanLine>> {
    site.validate()?;
    if field_t.abs() > site.max_field_t {
        return domain(format!("|B| = {} T exceeds the {} T limit", field_t.abs(), site.max_field_t));
    }
    let k = BOHR_MAGNETON_HZ_PER_T * field_t / 2.0;
    let mut raw = Vec::with_capacity(4 * site.subsites.len());
    for s in &site.subsites {
        let sum = (s.g_excited + s.g_ground) * k;
        let diff = (s.g_excited - s.g_ground) * k;
        for (offset, w) in [sum, -sum, diff, -diff].into_iter().zip(&s.weights) {
            raw.push(ZeemanLine { offset_hz: offset, intensity: w.at(polarization_rad) });
        }
    }
    raw.sort_by(|a, b| a.offset_hz.total_cmp(&b.offset_hz));

    // groups of (first offset, last offset, intensity-weighted shift from first, intensity)
    let mut merged: Vec<(f64, f64, f64, f64)> = Vec::new();
    for line in raw {
        match merged.last_mut() {
            Some(m) if line.offset_hz - m.1 <= ZEEMAN_MERGE_HZ => {
                m.1 = line.offset_hz;
                m.2 += (line.offset_hz - m.0) * line.intensity;
                m.3 += line.intensity;
            }
            _ => merged.push((line.offset_hz, line.offset_hz, 0.0, line.intensity)),
        }
    }
    Ok(merged
        .into_iter()
        .filter(|m| m.3 > 0.0)
        .map(|(first, _, shift, intensity)| ZeemanLine { offset_hz: first + shift / intensity, intensity })
        .collect())
}

/// Lines at +B and at −B for the same polarisation.
pub fn reverse_field_check(site: &ZeemanSite, field_t: f64, polarization_rad: f64) -> Result<(Vec<ZeemanLine>, Vec<ZeemanLine>)> {
    Ok((zeeman_lines(site, field_t.abs(), polarization_rad)?, zeeman_lines(site, -field_t.abs(), polarization_rad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site_1527() -> SiteResonance {
        Catalog::table1().find(1527.565, 1e-6).unwrap().clone()
    }

    #[test]
    fn bin_integrals_decay_exactly() {
        let det = DetectorModel::background_free(0.6627);
        let trace = decay_trace(&site_1527(), &det, &ScanProtocol::default(), 5e-3).unwrap();
        assert_eq!(trace.len(), 500);
        let tau = 0.807e-3;
        let first = trace.counts[0];
        for (k, c) in trace.counts.iter().enumerate().take(200) {
            let t = k as f64 * trace.bin_width_s;
            assert!((c / first - (-t / tau).exp()).abs() < 1e-12);
        }
        // interpolated to t = τ the trace has fallen by exactly e
        let k = (tau / trace.bin_width_s).floor() as usize;
        let at_tau = trace.counts[k] * (-(tau - k as f64 * trace.bin_width_s) / tau).exp();
        assert!((at_tau / first - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn window_integral_equals_amplitude() {
        let det = DetectorModel::background_free(1.0);
        let p = ScanProtocol { repetitions: 1, ..ScanProtocol::default() };
        let trace = decay_trace(&site_1527(), &det, &p, 5e-3).unwrap();
        // window 10 us .. 1 ms is bins 1..100
        let s: f64 = trace.counts[1..100].iter().sum();
        assert!((s - 25.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn zero_amplitude_site_is_background() {
        let det = DetectorModel::default();
        let p = ScanProtocol::default();
        let mut site = site_1527();
        site.amplitude = 0.0;
        let a = decay_trace(&site, &det, &p, 5e-3).unwrap();
        let b = background_trace(&det, &p, 5e-3).unwrap();
        for (x, y) in a.counts.iter().zip(&b.counts) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn site_without_lifetime_is_rejected() {
        let mut site = site_1527();
        site.lifetime_s = None;
        assert!(decay_trace(&site, &DetectorModel::default(), &ScanProtocol::default(), 5e-3).is_err());
    }

    #[test]
    fn rho_limits() {
        assert_eq!(rho_res(0.0, 1e3, 1e-3), 0.0);
        let r = rho_res(10.0, 1e9, 1e-3);
        assert!((r - 0.5).abs() < 1e-6);
        for &t in &[1e-6, 1e-4, 1e-2, 1.0] {
            for &r0 in &[1.0, 1e3, 1e6] {
                let v = rho_res(t, r0, 0.8e-3);
                assert!((0.0..=0.5).contains(&v));
            }
        }
    }

    #[test]
    fn eq1_endpoints() {
        let (tp, tau, r0, g) = (20e-6, 0.764e-3, 500.0, 0.75e6);
        assert_eq!(eq1_reference(tp, 0.0, tau, r0, g).unwrap(), rho_res(2.0 * tp, r0, tau));
        let far = eq1_reference(tp, 100.0 * g, tau, r0, g).unwrap();
        assert_eq!(far, 2.0 * rho_res(tp, r0, tau) * (1.0 - 0.5 * (-tp / tau).exp()));
        let factor = 1.0 - 0.5 * (-tp / tau).exp();
        assert!((factor - 0.513).abs() < 5e-4, "{factor}");
        assert!(eq1_reference(0.0, 0.0, tau, r0, g).is_err());
    }

    #[test]
    fn eq1_intermediate_lies_between_rate_equation_limits() {
        let (tp, tau, r0, g) = (20e-6, 0.764e-3, 500.0, 0.75e6);
        let near = eq1_reference(tp, 0.1 * g, tau, r0, g).unwrap();
        let mid = eq1_reference(tp, 2.0 * g, tau, r0, g).unwrap();
        let edge = eq1_reference(tp, 19.0 * g, tau, r0, g).unwrap();
        assert!(near < mid && mid < edge, "{near} {mid} {edge}");
    }

    #[test]
    fn narrow_grid_rejected() {
        let cfg = HoleBurnConfig { detuning_span_hz: 5.0 * 0.75e6, ..HoleBurnConfig::default() };
        assert!(matches!(simulate_hole(&cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn short_repetition_warns() {
        let cfg = HoleBurnConfig { repetition_period_s: 1e-3, detuning_points: 11, ..HoleBurnConfig::default() };
        let p = simulate_hole(&cfg).unwrap();
        assert!(p.warnings.iter().any(|w| w.contains("twice the lifetime")));
    }

    #[test]
    fn hole_minimum_at_zero_and_symmetric() {
        let cfg = HoleBurnConfig { detuning_points: 41, ..HoleBurnConfig::default() };
        let p = simulate_hole(&cfg).unwrap();
        let (imin, _) = p.signal_norm.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(p.detunings_hz[imin], 0.0);
        let n = p.signal_norm.len();
        for i in 0..n {
            assert!((p.signal_norm[i] - p.signal_norm[n - 1 - i]).abs() < 1e-12);
            assert!(p.signal_norm[i] > 0.0);
        }
    }

    fn one_subsite(gg: f64, ge: f64) -> ZeemanSite {
        ZeemanSite {
            zero_field_frequency_hz: 1.96e14,
            subsites: vec![ZeemanSubsite { g_ground: gg, g_excited: ge, weights: [BranchWeight::constant(1.0); 4] }],
            max_field_t: 0.06,
        }
    }

    #[test]
    fn zero_field_restores_degeneracy() {
        let lines = zeeman_lines(&one_subsite(2.0, 5.0), 0.0, 0.0).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].offset_hz, 0.0);
        assert!((lines[0].intensity - 4.0).abs() < 1e-12);
    }

    #[test]
    fn four_symmetric_lines() {
        let lines = zeeman_lines(&one_subsite(2.0, 5.0), 0.05, 0.0).unwrap();
        assert_eq!(lines.len(), 4);
        for (a, b) in lines.iter().zip(lines.iter().rev()) {
            assert_eq!(a.offset_hz, -b.offset_hz);
        }
        let k = BOHR_MAGNETON_HZ_PER_T * 0.05 / 2.0;
        assert!((lines[3].offset_hz - 7.0 * k).abs() < 1e-3);
        assert!((lines[2].offset_hz - 3.0 * k).abs() < 1e-3);
    }

    #[test]
    fn field_limit_and_subsite_count() {
        assert!(zeeman_lines(&one_subsite(2.0, 5.0), 0.07, 0.0).is_err());
        let mut s = one_subsite(2.0, 5.0);
        s.subsites = vec![s.subsites[0].clone(); 25];
        assert!(zeeman_lines(&s, 0.01, 0.0).is_err());
    }
}
