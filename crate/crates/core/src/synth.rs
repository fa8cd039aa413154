//! Forward model of the excitation survey: expected counts per laser step
//! and Poisson sampling of them.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{Catalog, DetectorModel, ScanProtocol};

/// Counts recorded at each laser step of a frequency scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    frequencies_hz: Vec<f64>,
    counts: Vec<f64>,
    pub protocol: ScanProtocol,
    pub detector: DetectorModel,
    /// Seed of the Poisson draw, `None` for expected values.
    pub seed: Option<u64>,
}

/// JSON sidecar written next to a spectrum CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumMetadata {
    pub protocol: ScanProtocol,
    pub detector: DetectorModel,
    pub seed: Option<u64>,
}

impl Spectrum {
    pub fn new(
        frequencies_hz: Vec<f64>,
        counts: Vec<f64>,
        protocol: ScanProtocol,
        detector: DetectorModel,
        seed: Option<u64>,
    ) -> Result<Self> {
        let s = Spectrum { frequencies_hz, counts, protocol, detector, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies_hz.len() != self.counts.len() {
            return domain("frequency grid and counts differ in length");
        }
        if self.frequencies_hz.len() >= 2 {
            let step = self.frequencies_hz[1] - self.frequencies_hz[0];
            if !(step > 0.0) {
                return domain("frequency grid must be ascending");
            }
            let f0 = self.frequencies_hz[0];
            for (i, f) in self.frequencies_hz.iter().enumerate() {
                if (f - (f0 + i as f64 * step)).abs() > 1.0 {
                    return domain(format!("frequency grid is not uniform at index {i}"));
                }
            }
        }
        if let Some(i) = self.counts.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return domain(format!("counts must be finite and nonnegative (index {i})"));
        }
        Ok(())
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn step_hz(&self) -> f64 {
        if self.frequencies_hz.len() >= 2 {
            self.frequencies_hz[1] - self.frequencies_hz[0]
        } else {
            self.protocol.step_hz
        }
    }

    /// Detected counts per step that correspond to one emitted photon per pulse.
    pub fn counts_per_pulse_scale(&self) -> f64 {
        f64::from(self.protocol.repetitions) * self.detector.system_detection_efficiency
    }

    /// Counts converted to emitted counts per pulse.
    pub fn counts_per_pulse(&self) -> Vec<f64> {
        let scale = self.counts_per_pulse_scale();
        self.counts.iter().map(|c| c / scale).collect()
    }

    pub fn metadata(&self) -> SpectrumMetadata {
        SpectrumMetadata { protocol: self.protocol, detector: self.detector, seed: self.seed }
    }

    /// Same grid and metadata with different counts.
    pub fn with_counts(&self, counts: Vec<f64>) -> Result<Spectrum> {
        Spectrum::new(self.frequencies_hz.clone(), counts, self.protocol, self.detector, self.seed)
    }
}

/// Peak-normalised Lorentzian of full width `fwhm` averaged over a
/// rectangular frequency-modulation window of full width `fm_width`.
pub fn line_shape(detuning: f64, fwhm: f64, fm_width: f64) -> f64 {
    let g = 0.5 * fwhm;
    if fm_width <= 0.0 {
        return 1.0 / (1.0 + (detuning / g).powi(2));
    }
    let a = (detuning + 0.5 * fm_width) / g;
    let b = (detuning - 0.5 * fm_width) / g;
    // atan(a) - atan(b), stable for large |detuning|
    (g / fm_width) * (a - b).atan2(1.0 + a * b)
}

/// Emitted background plus its dark-count equivalent, in counts per pulse, as
/// seen by the survey gate. Dark counts are detector events and are not
/// divided by the efficiency twice: the returned value is already expressed
/// as an emission-equivalent.
pub fn survey_background_per_pulse(protocol: &ScanProtocol, detector: &DetectorModel) -> f64 {
    detector.background_emission(protocol.window_start_s, protocol.window_end_s)
        + detector.dark_counts(protocol.window_length_s()) / detector.system_detection_efficiency
}

/// Uniform frequency grid covered by the protocol.
pub fn scan_grid(protocol: &ScanProtocol) -> Result<Vec<f64>> {
    protocol.validate()?;
    let (f_min, f_max) = protocol.frequency_range_hz()?;
    let n = ((f_max - f_min) / protocol.step_hz + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| f_min + i as f64 * protocol.step_hz).collect())
}

/// Expected counts per step from every catalog line plus the flat background.
pub fn expected_spectrum(catalog: &Catalog, protocol: &ScanProtocol, detector: &DetectorModel) -> Result<Spectrum> {
    detector.validate()?;
    let grid = scan_grid(protocol)?;
    let lines: Vec<(f64, f64, f64)> = catalog.iter().map(|r| (r.center_frequency_hz(), r.inhomogeneous_fwhm_hz, r.amplitude)).collect();
    let background = survey_background_per_pulse(protocol, detector);
    let scale = f64::from(protocol.repetitions) * detector.system_detection_efficiency;
    let fm = protocol.fm_broadening_hz;
    let counts = grid
        .par_iter()
        .map(|&f| {
            let lines_sum: f64 = lines.iter().map(|&(fc, w, a)| a * line_shape(f - fc, w, fm)).sum();
            scale * (background + lines_sum)
        })
        .collect();
    Spectrum::new(grid, counts, *protocol, *detector, None)
}

/// Independent Poisson draw at every grid point. Each point uses its own
/// ChaCha stream so the result does not depend on evaluation order.
pub fn sample_spectrum(expected: &Spectrum, seed: u64) -> Result<Spectrum> {
    if let Some(i) = expected.counts.iter().position(|c| !c.is_finite()) {
        return domain(format!("expected counts not finite at index {i}"));
    }
    let counts = expected.counts.par_iter().enumerate().map(|(i, &lambda)| poisson_draw(seed, i as u64, lambda)).collect();
    let mut s = expected.with_counts(counts)?;
    s.seed = Some(seed);
    Ok(s)
}

/// Poisson variate for stream `stream` of `seed`.
pub fn poisson_draw(seed: u64, stream: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
}

/// Gaussian smoothing with reflecting boundaries. `sigma` is in grid steps;
/// zero returns a copy.
pub fn smooth_gaussian(values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || values.len() < 2 {
        return values.to_vec();
    }
    let half = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let n = values.len() as isize;
    let reflect = |mut j: isize| -> usize {
        while j < 0 || j >= n {
            if j < 0 {
                j = -j - 1;
            }
            if j >= n {
                j = 2 * n - j - 1;
            }
        }
        j as usize
    };
    (0..n).map(|i| kernel.iter().enumerate().map(|(k, w)| w * values[reflect(i + k as isize - half)]).sum::<f64>() / norm).collect()
}

pub fn write_spectrum_csv<W: Write>(spectrum: &Spectrum, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["frequency_hz", "counts"])?;
    for (f, c) in spectrum.frequencies_hz.iter().zip(&spectrum.counts) {
        wtr.write_record([f.to_string(), c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `frequency_hz,counts` rows; protocol and detector come from the sidecar.
pub fn read_spectrum_csv<R: Read>(reader: R, metadata: SpectrumMetadata) -> Result<Spectrum> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(["frequency_hz", "counts"]) {
        return Err(Error::Parse { row: 0, message: format!("expected header frequency_hz,counts, got {headers:?}") });
    }
    let mut freqs = Vec::new();
    let mut counts = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k).unwrap_or("").trim().parse().map_err(|e| Error::Parse { row, message: format!("{e}") })
        };
        freqs.push(parse(0)?);
        counts.push(parse(1)?);
    }
    Spectrum::new(freqs, counts, metadata.protocol, metadata.detector, metadata.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SiteResonance;

    fn single_line_catalog() -> Catalog {
        Catalog::new(vec![SiteResonance::new(1538.685, 1.02e9, 4.06, Some(0.764e-3)).unwrap()], "test").unwrap()
    }

    fn narrow_protocol() -> ScanProtocol {
        ScanProtocol { start_wavelength_nm: 1538.6, stop_wavelength_nm: 1538.77, ..ScanProtocol::default() }
    }

    #[test]
    fn grid_length_and_uniformity() {
        let p = narrow_protocol();
        let grid = scan_grid(&p).unwrap();
        let (lo, hi) = p.frequency_range_hz().unwrap();
        assert_eq!(grid.len(), ((hi - lo) / p.step_hz).floor() as usize + 1);
        assert!(grid.windows(2).all(|w| ((w[1] - w[0]) - 50e6).abs() < 1.0));
    }

    #[test]
    fn peak_height_matches_amplitude() {
        let p = ScanProtocol { fm_broadening_hz: 0.0, ..narrow_protocol() };
        let d = DetectorModel::background_free(0.6627);
        let cat = single_line_catalog();
        let fc = cat.resonances()[0].center_frequency_hz();
        // a grid that lands exactly on the line center
        let p = ScanProtocol {
            start_wavelength_nm: crate::model::frequency_to_wavelength(fc + 100.0 * p.step_hz).unwrap(),
            stop_wavelength_nm: crate::model::frequency_to_wavelength(fc - 100.0 * p.step_hz).unwrap(),
            ..p
        };
        let s = expected_spectrum(&cat, &p, &d).unwrap();
        let peak = s.counts().iter().cloned().fold(0.0, f64::max);
        assert!((peak / (4.06 * 1000.0 * 0.6627) - 1.0).abs() < 1e-6, "{peak}");
    }

    #[test]
    fn fm_smearing_is_small_for_wide_lines() {
        let ratio = line_shape(0.0, 1.02e9, 60e6);
        assert!(ratio < 1.0 && ratio > 0.998, "{ratio}");
    }

    #[test]
    fn empty_catalog_is_flat() {
        let p = narrow_protocol();
        let d = DetectorModel::default();
        let s = expected_spectrum(&Catalog::empty(), &p, &d).unwrap();
        let b = survey_background_per_pulse(&p, &d) * 1000.0 * 0.6627;
        assert!(s.counts().iter().all(|c| (c - b).abs() < 1e-9 * b));
    }

    #[test]
    fn invalid_window_is_domain_error() {
        let p = ScanProtocol { window_start_s: -1e-6, ..narrow_protocol() };
        assert!(matches!(expected_spectrum(&single_line_catalog(), &p, &DetectorModel::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_expectation_samples_zero() {
        let p = narrow_protocol();
        let grid = scan_grid(&p).unwrap();
        let zeros = vec![0.0; grid.len()];
        let s = Spectrum::new(grid, zeros, p, DetectorModel::default(), None).unwrap();
        let drawn = sample_spectrum(&s, 11).unwrap();
        assert!(drawn.counts().iter().all(|&c| c == 0.0));
        assert_eq!(drawn.seed, Some(11));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = narrow_protocol();
        let e = expected_spectrum(&single_line_catalog(), &p, &DetectorModel::default()).unwrap();
        assert_eq!(sample_spectrum(&e, 7).unwrap(), sample_spectrum(&e, 7).unwrap());
        assert_ne!(sample_spectrum(&e, 7).unwrap().counts(), sample_spectrum(&e, 8).unwrap().counts());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = narrow_protocol();
        let e = expected_spectrum(&single_line_catalog(), &p, &DetectorModel::default()).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&e, &mut buf).unwrap();
        let back = read_spectrum_csv(buf.as_slice(), e.metadata()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn smoothing_preserves_constants() {
        let v = vec![3.0; 17];
        assert!(smooth_gaussian(&v, 2.0).iter().all(|x| (x - 3.0).abs() < 1e-12));
        assert_eq!(smooth_gaussian(&v, 0.0), v);
    }
}
