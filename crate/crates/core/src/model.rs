//! Domain types shared by every stage: resonances and their catalog, scan
//! protocol, detector description, fit results, and wavelength/frequency
//! conversion.
//!
//! Frequencies and widths are carried in Hz, times in seconds. Wavelengths
//! (vacuum, nm) appear only in the catalog file and in [`SiteResonance`],
//! whose center is the quantity read off the wavemeter.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Two catalog lines closer than this are considered the same resonance.
pub const CENTER_UNIQUENESS_HZ: f64 = 1.0e6;

const TABLE1_CSV: &str = include_str!("../data/table1.csv");
const OFFRESONANT_CSV: &str = include_str!("../data/offresonant.csv");

/// Vacuum wavelength (nm) to optical frequency (Hz).
pub fn wavelength_to_frequency(wavelength_nm: f64) -> Result<f64> {
    if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
        return domain(format!("wavelength must be positive, got {wavelength_nm} nm"));
    }
    Ok(SPEED_OF_LIGHT / (wavelength_nm * 1e-9))
}

/// Optical frequency (Hz) to vacuum wavelength (nm).
pub fn frequency_to_wavelength(frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
        return domain(format!("frequency must be positive, got {frequency_hz} Hz"));
    }
    Ok(SPEED_OF_LIGHT / frequency_hz * 1e9)
}

/// A second decay channel of a biexponential line. `fraction` is the share
/// of the window-integrated emission carried by this component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondComponent {
    pub lifetime_s: f64,
    pub fraction: f64,
}

/// One inhomogeneously broadened optical line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteResonance {
    pub center_wavelength_nm: f64,
    pub inhomogeneous_fwhm_hz: f64,
    /// Net peak height above background, counts per excitation pulse
    /// integrated over the survey window (before detector efficiency).
    pub amplitude: f64,
    pub lifetime_s: Option<f64>,
    pub second_component: Option<SecondComponent>,
    pub homogeneous_fwhm_hz: Option<f64>,
    /// Line is known to decay biexponentially. Informational until a second
    /// component is fitted or injected.
    pub biexponential: bool,
    /// Line was reported by an earlier PLE study.
    pub previously_observed: bool,
}

impl SiteResonance {
    pub fn new(center_wavelength_nm: f64, inhomogeneous_fwhm_hz: f64, amplitude: f64, lifetime_s: Option<f64>) -> Result<Self> {
        let site = SiteResonance {
            center_wavelength_nm,
            inhomogeneous_fwhm_hz,
            amplitude,
            lifetime_s,
            second_component: None,
            homogeneous_fwhm_hz: None,
            biexponential: false,
            previously_observed: false,
        };
        site.validate()?;
        Ok(site)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                domain(format!("{name} must be positive and finite, got {v}"))
            }
        };
        positive("center wavelength", self.center_wavelength_nm)?;
        positive("inhomogeneous FWHM", self.inhomogeneous_fwhm_hz)?;
        positive("amplitude", self.amplitude)?;
        if let Some(t) = self.lifetime_s {
            positive("lifetime", t)?;
        }
        if let Some(second) = self.second_component {
            positive("second lifetime", second.lifetime_s)?;
            if !(second.fraction > 0.0 && second.fraction < 1.0) {
                return domain(format!("second-component fraction must lie in (0, 1), got {}", second.fraction));
            }
        }
        if let Some(h) = self.homogeneous_fwhm_hz {
            positive("homogeneous FWHM", h)?;
            if h >= self.inhomogeneous_fwhm_hz {
                return domain("homogeneous FWHM must be below the inhomogeneous FWHM");
            }
        }
        Ok(())
    }

    pub fn center_frequency_hz(&self) -> f64 {
        SPEED_OF_LIGHT / (self.center_wavelength_nm * 1e-9)
    }

    /// Same line with a second decay component injected.
    pub fn with_second_component(mut self, lifetime_s: f64, fraction: f64) -> Result<Self> {
        self.second_component = Some(SecondComponent { lifetime_s, fraction });
        self.biexponential = true;
        self.validate()?;
        Ok(self)
    }
}

/// Ordered list of resonances, longest wavelength first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    resonances: Vec<SiteResonance>,
    pub provenance: String,
}

impl Catalog {
    /// Builds a catalog, sorting by descending wavelength and rejecting
    /// centers that coincide within 1 MHz.
    pub fn new(mut resonances: Vec<SiteResonance>, provenance: impl Into<String>) -> Result<Self> {
        for r in &resonances {
            r.validate()?;
        }
        resonances.sort_by(|a, b| b.center_wavelength_nm.total_cmp(&a.center_wavelength_nm));
        for pair in resonances.windows(2) {
            let df = (pair[0].center_frequency_hz() - pair[1].center_frequency_hz()).abs();
            if df < CENTER_UNIQUENESS_HZ {
                return domain(format!(
                    "duplicate center: {} nm and {} nm are {:.0} Hz apart",
                    pair[0].center_wavelength_nm, pair[1].center_wavelength_nm, df
                ));
            }
        }
        Ok(Catalog { resonances, provenance: provenance.into() })
    }

    pub fn empty() -> Self {
        Catalog::default()
    }

    /// The 70-line overview table shipped with the crate.
    pub fn table1() -> Self {
        let mut catalog = read_catalog_csv(TABLE1_CSV.as_bytes()).expect("bundled table is valid");
        catalog.provenance = "bundled overview table (70 resonances)".to_string();
        catalog
    }

    pub fn resonances(&self) -> &[SiteResonance] {
        &self.resonances
    }

    pub fn len(&self) -> usize {
        self.resonances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resonances.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SiteResonance> {
        self.resonances.iter()
    }

    /// Line whose center is closest to `wavelength_nm`, if within `tolerance_nm`.
    pub fn find(&self, wavelength_nm: f64, tolerance_nm: f64) -> Option<&SiteResonance> {
        self.resonances
            .iter()
            .map(|r| ((r.center_wavelength_nm - wavelength_nm).abs(), r))
            .filter(|(d, _)| *d <= tolerance_nm)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, r)| r)
    }

    /// Union of two catalogs.
    pub fn merged(&self, other: &Catalog) -> Result<Catalog> {
        let mut all = self.resonances.clone();
        all.extend(other.resonances.iter().cloned());
        Catalog::new(all, format!("{} + {}", self.provenance, other.provenance))
    }
}

impl<'a> IntoIterator for &'a Catalog {
    type Item = &'a SiteResonance;
    type IntoIter = std::slice::Iter<'a, SiteResonance>;

    fn into_iter(self) -> Self::IntoIter {
        self.resonances.iter()
    }
}

pub const CATALOG_HEADER: [&str; 5] = ["wavelength_nm", "fwhm_ghz", "lifetime_ms", "amplitude", "flags"];

/// Reads the catalog CSV format. Rows are numbered from 1 (the header is row 0).
pub fn read_catalog_csv<R: Read>(reader: R) -> Result<Catalog> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 4 || headers.iter().take(4).ne(CATALOG_HEADER.iter().take(4).copied()) {
        return Err(Error::Parse { row: 0, message: format!("expected header {}, got {:?}", CATALOG_HEADER.join(","), headers) });
    }
    let mut resonances = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let number = |k: usize| -> Result<f64> {
            field(k).parse::<f64>().map_err(|e| Error::Parse { row, message: format!("column {}: {e}", CATALOG_HEADER[k]) })
        };
        let wavelength = number(0)?;
        let fwhm_ghz = number(1)?;
        let lifetime_ms = if field(2).is_empty() { None } else { Some(number(2)?) };
        let amplitude = number(3)?;
        let mut site = SiteResonance {
            center_wavelength_nm: wavelength,
            inhomogeneous_fwhm_hz: fwhm_ghz * 1e9,
            amplitude,
            lifetime_s: lifetime_ms.map(|t| t * 1e-3),
            second_component: None,
            homogeneous_fwhm_hz: None,
            biexponential: false,
            previously_observed: false,
        };
        for flag in field(4).split('|').filter(|f| !f.is_empty()) {
            match flag {
                "biexp" => site.biexponential = true,
                "weiss" => site.previously_observed = true,
                other => return Err(Error::Parse { row, message: format!("unknown flag `{other}`") }),
            }
        }
        site.validate().map_err(|e| Error::Parse { row, message: e.to_string() })?;
        resonances.push(site);
    }
    Catalog::new(resonances, "csv").map_err(|e| Error::Parse { row: 0, message: e.to_string() })
}

/// Formats with at most `decimals` digits after the point, trailing zeros removed.
pub(crate) fn fmt_decimal(value: f64, decimals: usize) -> String {
    let s = format!("{value:.decimals$}");
    if s.contains('.') {
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".to_string()
        } else {
            s.to_string()
        }
    } else {
        s
    }
}

/// Writes the catalog CSV format: wavelength to 1 pm, widths to 1 MHz,
/// lifetimes to 1 us, amplitudes to 1e-3 counts/pulse.
pub fn write_catalog_csv<W: Write>(catalog: &Catalog, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CATALOG_HEADER)?;
    for r in catalog.iter() {
        let mut flags = Vec::new();
        if r.biexponential {
            flags.push("biexp");
        }
        if r.previously_observed {
            flags.push("weiss");
        }
        wtr.write_record([
            format!("{:.3}", r.center_wavelength_nm),
            fmt_decimal(r.inhomogeneous_fwhm_hz / 1e9, 3),
            r.lifetime_s.map(|t| fmt_decimal(t * 1e3, 3)).unwrap_or_default(),
            fmt_decimal(r.amplitude, 3),
            flags.join("|"),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Explicit on/off-resonant wavelength pair used for background subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffResonantPair {
    pub resonant_nm: f64,
    pub offresonant_nm: f64,
}

/// The bundled list of measured off-resonant reference wavelengths.
pub fn offresonant_pairs() -> Vec<OffResonantPair> {
    let mut rdr = csv::Reader::from_reader(OFFRESONANT_CSV.as_bytes());
    rdr.records()
        .map(|rec| {
            let rec = rec.expect("bundled pair list is valid");
            OffResonantPair { resonant_nm: rec[0].parse().expect("number"), offresonant_nm: rec[1].parse().expect("number") }
        })
        .collect()
}

/// Maximum wavelength disagreement tolerated when pairing the off-resonant
/// list with catalog lines. The two tables spell some centers up to 5 pm apart.
pub const PAIR_MATCH_TOLERANCE_NM: f64 = 0.006;

/// Off-resonant reference wavelength listed for the catalog line nearest to
/// `site`, matched by nearest neighbour within [`PAIR_MATCH_TOLERANCE_NM`].
pub fn listed_offresonant_for(site: &SiteResonance) -> Option<f64> {
    offresonant_pairs()
        .into_iter()
        .map(|p| ((p.resonant_nm - site.center_wavelength_nm).abs(), p))
        .filter(|(d, _)| *d <= PAIR_MATCH_TOLERANCE_NM)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p.offresonant_nm)
}

/// Laser stepping and gating of a PLE survey (also reused for decay traces).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanProtocol {
    pub start_wavelength_nm: f64,
    pub stop_wavelength_nm: f64,
    pub step_hz: f64,
    pub fm_broadening_hz: f64,
    pub pulse_duration_s: f64,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub repetitions: u32,
}

impl Default for ScanProtocol {
    fn default() -> Self {
        ScanProtocol {
            start_wavelength_nm: 1516.0,
            stop_wavelength_nm: 1550.0,
            step_hz: 50e6,
            fm_broadening_hz: 60e6,
            pulse_duration_s: 100e-6,
            window_start_s: 10e-6,
            window_end_s: 1e-3,
            repetitions: 1000,
        }
    }
}

impl ScanProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_hz > 0.0) {
            return domain("scan step must be positive");
        }
        if !(self.fm_broadening_hz >= 0.0) {
            return domain("FM broadening must be nonnegative");
        }
        if !(self.start_wavelength_nm > 0.0 && self.stop_wavelength_nm > 0.0) {
            return domain("scan wavelengths must be positive");
        }
        if !(self.pulse_duration_s > 0.0) {
            return domain("pulse duration must be positive");
        }
        if !(self.window_start_s >= 0.0 && self.window_end_s > self.window_start_s) {
            return domain(format!("integration window [{}, {}] s is invalid", self.window_start_s, self.window_end_s));
        }
        if self.repetitions == 0 {
            return domain("repetitions must be at least 1");
        }
        Ok(())
    }

    /// Scan limits as (lowest, highest) optical frequency.
    pub fn frequency_range_hz(&self) -> Result<(f64, f64)> {
        let a = wavelength_to_frequency(self.start_wavelength_nm)?;
        let b = wavelength_to_frequency(self.stop_wavelength_nm)?;
        Ok((a.min(b), a.max(b)))
    }

    pub fn window_length_s(&self) -> f64 {
        self.window_end_s - self.window_start_s
    }
}

/// One exponentially decaying emission channel. `amplitude` is the total
/// number of photons emitted per excitation pulse (integral over all t > 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayComponent {
    pub amplitude: f64,
    pub time_constant_s: f64,
}

impl DecayComponent {
    /// Photons emitted in [t0, t1] after the pulse.
    pub fn integrate(&self, t0: f64, t1: f64) -> f64 {
        let tau = self.time_constant_s;
        self.amplitude * ((-t0 / tau).exp() - (-t1 / tau).exp())
    }
}

/// Single-photon detector plus the wavelength-independent background emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub system_detection_efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub background_fast: DecayComponent,
    pub background_slow: DecayComponent,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            system_detection_efficiency: 0.6627,
            dark_count_rate_hz: 20.0,
            background_fast: DecayComponent { amplitude: 0.3, time_constant_s: 200e-6 },
            background_slow: DecayComponent { amplitude: 0.3, time_constant_s: 800e-6 },
        }
    }
}

impl DetectorModel {
    /// Ideal detector with no background and no dark counts.
    pub fn background_free(efficiency: f64) -> Self {
        DetectorModel {
            system_detection_efficiency: efficiency,
            dark_count_rate_hz: 0.0,
            background_fast: DecayComponent { amplitude: 0.0, time_constant_s: 200e-6 },
            background_slow: DecayComponent { amplitude: 0.0, time_constant_s: 800e-6 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.system_detection_efficiency;
        if !(eta > 0.0 && eta <= 1.0) {
            return domain(format!("detection efficiency must lie in (0, 1], got {eta}"));
        }
        if !(self.dark_count_rate_hz >= 0.0) {
            return domain("dark count rate must be nonnegative");
        }
        let (fast, slow) = (self.background_fast, self.background_slow);
        if !(fast.time_constant_s > 0.0 && slow.time_constant_s > 0.0) {
            return domain("background time constants must be positive");
        }
        if fast.time_constant_s >= slow.time_constant_s {
            return domain("fast background component must decay faster than the slow one");
        }
        if fast.amplitude < 0.0 || slow.amplitude < 0.0 {
            return domain("background amplitudes must be nonnegative");
        }
        Ok(())
    }

    /// Background photons per pulse emitted inside [t0, t1] (before efficiency).
    pub fn background_emission(&self, t0: f64, t1: f64) -> f64 {
        self.background_fast.integrate(t0, t1) + self.background_slow.integrate(t0, t1)
    }

    /// Dark counts registered in a gate of the given length.
    pub fn dark_counts(&self, gate_s: f64) -> f64 {
        self.dark_count_rate_hz * gate_s
    }
}

/// A fitted parameter with its unit and one-sigma standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub value: f64,
    pub standard_error: f64,
    pub unit: String,
}

/// Outcome of one least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub parameters: BTreeMap<String, FitParameter>,
    pub residual_sum_of_squares: f64,
    /// Corrected Akaike information criterion.
    pub aicc: f64,
    pub points: usize,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn value(&self, name: &str) -> f64 {
        self.parameters[name].value
    }

    pub fn error(&self, name: &str) -> f64 {
        self.parameters[name].standard_error
    }

    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.get(name)
    }

    /// Parameter values in declaration order.
    pub fn values(&self) -> Vec<f64> {
        self.names.iter().map(|n| self.parameters[n].value).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_at_table_line() {
        let f = wavelength_to_frequency(1538.685).unwrap();
        assert!((f - 194.8347e12).abs() < 0.01e12, "{f}");
        let back = frequency_to_wavelength(f).unwrap();
        assert!(((back - 1538.685) / 1538.685).abs() < 1e-12);
    }

    #[test]
    fn longer_wavelength_lower_frequency() {
        assert!(wavelength_to_frequency(1550.0).unwrap() < wavelength_to_frequency(1516.0).unwrap());
    }

    #[test]
    fn nonpositive_wavelength_rejected() {
        assert!(matches!(wavelength_to_frequency(0.0), Err(Error::Domain(_))));
        assert!(matches!(wavelength_to_frequency(-3.0), Err(Error::Domain(_))));
        assert!(frequency_to_wavelength(f64::NAN).is_err());
    }

    #[test]
    fn table_row_parses() {
        let csv = "wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags\n1538.685,1.02,0.764,4.06,\n";
        let cat = read_catalog_csv(csv.as_bytes()).unwrap();
        let r = &cat.resonances()[0];
        assert_eq!(r.center_wavelength_nm, 1538.685);
        assert!((r.inhomogeneous_fwhm_hz - 1.02e9).abs() < 1.0);
        assert!((r.lifetime_s.unwrap() - 0.764e-3).abs() < 1e-15);
        assert_eq!(r.amplitude, 4.06);
        assert!(!r.biexponential);
    }

    #[test]
    fn empty_stream_gives_empty_catalog() {
        let csv = "wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags\n";
        assert!(read_catalog_csv(csv.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_report_their_index() {
        let csv = "wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags\n1530,1,1,1,\n1531,x,1,1,\n";
        match read_catalog_csv(csv.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags\n1530,1,-1,1,\n";
        assert!(matches!(read_catalog_csv(csv.as_bytes()), Err(Error::Parse { row: 1, .. })));
        let csv = "wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags\n1530,1,1,1,odd\n";
        assert!(matches!(read_catalog_csv(csv.as_bytes()), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn duplicate_center_rejected() {
        let csv = "wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags\n1530.000,1,1,1,\n1530.000,2,1,1,\n";
        assert!(read_catalog_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn bundled_table() {
        let cat = Catalog::table1();
        assert_eq!(cat.len(), 70);
        assert_eq!(cat.iter().filter(|r| r.biexponential).count(), 8);
        assert_eq!(cat.iter().filter(|r| r.previously_observed).count(), 7);
        let first = &cat.resonances()[0];
        let last = &cat.resonances()[69];
        assert_eq!(first.center_wavelength_nm, 1539.949);
        assert_eq!(last.center_wavelength_nm, 1518.042);
        for r in &cat {
            assert!((1516.0..=1550.0).contains(&r.center_wavelength_nm));
        }
        let r = cat.find(1527.565, 1e-6).unwrap();
        assert_eq!(r.amplitude, 25.0);
        assert!((r.lifetime_s.unwrap() - 0.807e-3).abs() < 1e-15);
    }

    #[test]
    fn every_listed_pair_maps_to_a_catalog_line() {
        let cat = Catalog::table1();
        let pairs = offresonant_pairs();
        assert_eq!(pairs.len(), 70);
        for p in &pairs {
            assert!(cat.find(p.resonant_nm, PAIR_MATCH_TOLERANCE_NM).is_some(), "{p:?}");
        }
        let site = cat.find(1527.565, 1e-6).unwrap();
        assert_eq!(listed_offresonant_for(site), Some(1527.461));
    }

    #[test]
    fn invalid_detector_and_protocol() {
        let d = DetectorModel { system_detection_efficiency: 1.5, ..DetectorModel::default() };
        assert!(d.validate().is_err());
        let mut d = DetectorModel::default();
        d.background_fast.time_constant_s = 1e-3;
        assert!(d.validate().is_err());
        let mut p = ScanProtocol::default();
        p.window_end_s = p.window_start_s;
        assert!(p.validate().is_err());
        p = ScanProtocol { repetitions: 0, ..ScanProtocol::default() };
        assert!(p.validate().is_err());
        assert!(ScanProtocol::default().validate().is_ok());
        assert!(DetectorModel::default().validate().is_ok());
    }

    #[test]
    fn site_invariants() {
        assert!(SiteResonance::new(1530.0, 1e9, 1.0, Some(1e-3)).is_ok());
        assert!(SiteResonance::new(1530.0, 0.0, 1.0, None).is_err());
        let s = SiteResonance::new(1530.0, 1e9, 1.0, Some(1e-3)).unwrap();
        assert!(s.clone().with_second_component(3e-4, 1.2).is_err());
        assert!(s.clone().with_second_component(3e-4, 0.5).is_ok());
        let mut h = s;
        h.homogeneous_fwhm_hz = Some(2e9);
        assert!(h.validate().is_err());
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(fmt_decimal(2.82, 3), "2.82");
        assert_eq!(fmt_decimal(1.0, 3), "1");
        assert_eq!(fmt_decimal(1.2084, 3), "1.208");
        assert_eq!(fmt_decimal(-0.0001, 3), "0");
    }
}
