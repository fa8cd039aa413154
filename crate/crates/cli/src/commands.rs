use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use ple_core::analysis::{
    background_choice_study, extract_lifetime, hole_to_homogeneous, match_resonances, off_resonant_frequency, survey_pipeline,
    BackgroundStudy,
};
use ple_core::cavity::{kappa_for_quality, CavityDesign};
use ple_core::dynamics::{
    decay_trace_at, read_hole_csv, read_trace_csv, sample_trace, simulate_hole, write_hole_csv, write_trace_csv, zeeman_lines, TimeTrace,
    ZeemanSite,
};
use ple_core::model::{read_catalog_csv, wavelength_to_frequency, write_catalog_csv};
use ple_core::reproduce::{run_all, six_line_site};
use ple_core::synth::{expected_spectrum, read_spectrum_csv, sample_spectrum, write_spectrum_csv, SpectrumMetadata};
use ple_core::Catalog;

use crate::config::RunConfig;
use crate::output::{opt, OutDir, Table};
use crate::{Cli, CliError, Command};

#[derive(Debug, Args)]
pub struct SimulateSpectrum {
    /// Catalog CSV (default: bundled Table 1).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write expected counts instead of a Poisson draw.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long)]
    pub start_nm: Option<f64>,
    #[arg(long)]
    pub stop_nm: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SimulateDecay {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noiseless: bool,
    /// Line to excite (catalog wavelength, nm).
    #[arg(long)]
    pub wavelength_nm: Option<f64>,
    /// Off-resonant reference wavelength; the listed one or two linewidths away by default.
    #[arg(long)]
    pub off_nm: Option<f64>,
    #[arg(long)]
    pub duration_ms: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SimulateHole {
    /// Homogeneous linewidth (FWHM), MHz.
    #[arg(long)]
    pub gamma_mhz: Option<f64>,
    /// Pump-probe delay, µs.
    #[arg(long)]
    pub delay_us: Option<f64>,
    #[arg(long)]
    pub lifetime_ms: Option<f64>,
    /// Resonant pump rate times lifetime.
    #[arg(long)]
    pub pump_rate_tau: Option<f64>,
    #[arg(long)]
    pub repetition_ms: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Zeeman {
    /// ZeemanSite JSON (default: a six-line example site).
    #[arg(long)]
    pub site: Option<PathBuf>,
    #[arg(long)]
    pub field_mt: Option<f64>,
    #[arg(long)]
    pub polarization_deg: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeSpectrum {
    /// Spectrum CSV (`frequency_hz,counts`).
    #[arg(long)]
    pub input: PathBuf,
    /// JSON sidecar with protocol, detector and seed (default: input with .json extension, else the run config).
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long)]
    pub min_prominence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeLifetime {
    /// On-resonant trace (`t_us,counts`).
    #[arg(long)]
    pub on: PathBuf,
    /// Off-resonant trace; give six to also run the background-choice study.
    #[arg(long, required = true)]
    pub off: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeHole {
    /// Hole profile CSV (`detuning_hz,signal_norm`).
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct Match {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Electrical line list CSV with a `frequency_hz` column.
    #[arg(long)]
    pub electrical: PathBuf,
    #[arg(long)]
    pub tolerance_ghz: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Purcell {
    /// Target Purcell factor.
    #[arg(long = "F")]
    pub purcell_factor: Option<f64>,
    /// Bulk emission rate, Hz.
    #[arg(long)]
    pub gamma_bulk: Option<f64>,
    #[arg(long)]
    pub lambda_nm: Option<f64>,
    /// Refractive index.
    #[arg(long)]
    pub n: Option<f64>,
    /// Quality factor to convert to a damping rate.
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Reproduce {
    #[arg(long)]
    pub survey_seed: Option<u64>,
    #[arg(long)]
    pub lifetime_seeds: Option<u64>,
    #[arg(long)]
    pub lifetime_repetitions: Option<u32>,
    #[arg(long)]
    pub property_cases: Option<usize>,
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::SimulateSpectrum(_) => "simulate-spectrum",
        Command::SimulateDecay(_) => "simulate-decay",
        Command::SimulateHole(_) => "simulate-hole",
        Command::Zeeman(_) => "zeeman",
        Command::AnalyzeSpectrum(_) => "analyze-spectrum",
        Command::AnalyzeLifetime(_) => "analyze-lifetime",
        Command::AnalyzeHole(_) => "analyze-hole",
        Command::Match(_) => "match",
        Command::Purcell(_) => "purcell",
        Command::Reproduce(_) => "reproduce",
    }
}

/// Folds the command-line flags into the configuration.
fn apply_flags(cfg: &mut RunConfig, command: &Command) {
    match command {
        Command::SimulateSpectrum(a) => {
            set(&mut cfg.catalog, a.catalog.clone().map(Some));
            set(&mut cfg.seed, a.seed.map(Some));
            set(&mut cfg.protocol.start_wavelength_nm, a.start_nm);
            set(&mut cfg.protocol.stop_wavelength_nm, a.stop_nm);
            set(&mut cfg.protocol.repetitions, a.repetitions);
        }
        Command::SimulateDecay(a) => {
            set(&mut cfg.catalog, a.catalog.clone().map(Some));
            set(&mut cfg.seed, a.seed.map(Some));
            set(&mut cfg.decay.wavelength_nm, a.wavelength_nm);
            set(&mut cfg.decay.duration_s, a.duration_ms.map(|v| v * 1e-3));
            set(&mut cfg.protocol.repetitions, a.repetitions);
        }
        Command::SimulateHole(a) => {
            if let Some(g) = a.gamma_mhz {
                cfg.hole.homogeneous_fwhm_hz = g * 1e6;
                cfg.hole.detuning_span_hz = 20.0 * g * 1e6;
            }
            set(&mut cfg.hole.lifetime_s, a.lifetime_ms.map(|v| v * 1e-3));
            if a.pump_rate_tau.is_some() || a.lifetime_ms.is_some() {
                let r0_tau = a.pump_rate_tau.unwrap_or(cfg.hole.pump_rate_hz * cfg.hole.lifetime_s);
                cfg.hole.pump_rate_hz = r0_tau / cfg.hole.lifetime_s;
            }
            set(&mut cfg.hole.delay_s, a.delay_us.map(|v| v * 1e-6));
            set(&mut cfg.hole.repetition_period_s, a.repetition_ms.map(|v| v * 1e-3));
            set(&mut cfg.hole.detuning_points, a.points);
        }
        Command::Zeeman(a) => {
            set(&mut cfg.zeeman.field_t, a.field_mt.map(|v| v * 1e-3));
            set(&mut cfg.zeeman.polarization_rad, a.polarization_deg.map(f64::to_radians));
        }
        Command::AnalyzeSpectrum(a) => set(&mut cfg.survey.min_prominence, a.min_prominence),
        Command::Match(a) => {
            set(&mut cfg.catalog, a.catalog.clone().map(Some));
            set(&mut cfg.matching.tolerance_hz, a.tolerance_ghz.map(|v| v * 1e9));
        }
        Command::Purcell(a) => {
            set(&mut cfg.cavity.inputs.purcell_factor, a.purcell_factor);
            set(&mut cfg.cavity.inputs.gamma_bulk_hz, a.gamma_bulk);
            set(&mut cfg.cavity.inputs.wavelength_nm, a.lambda_nm);
            set(&mut cfg.cavity.inputs.refractive_index, a.n);
            set(&mut cfg.cavity.quality_factor, a.q.map(Some));
        }
        Command::Reproduce(a) => {
            set(&mut cfg.reproduce.survey_seed, a.survey_seed);
            set(&mut cfg.reproduce.lifetime_seeds, a.lifetime_seeds);
            set(&mut cfg.reproduce.lifetime_repetitions, a.lifetime_repetitions);
            set(&mut cfg.reproduce.property_cases, a.property_cases);
        }
        Command::AnalyzeLifetime(_) | Command::AnalyzeHole(_) => {}
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;
    apply_flags(&mut cfg, &cli.command);
    let out = OutDir::create(&cli.global.out)?;
    let name = command_name(&cli.command);
    out.write_json(&format!("{name}.config.json"), &cfg)?;
    let fmt = cli.global.format;

    match &cli.command {
        Command::SimulateSpectrum(a) => simulate_spectrum(&cfg, a, &out),
        Command::SimulateDecay(a) => simulate_decay(&cfg, a, &out),
        Command::SimulateHole(_) => {
            let profile = simulate_hole(&cfg.hole)?;
            for w in &profile.warnings {
                log::warn!("{w}");
            }
            out.write_with("hole.csv", |w| write_hole_csv(&profile.detunings_hz, &profile.signal_norm, w))?;
            let e = profile.endpoints.clone();
            out.write_report("hole_report", fmt, &profile, || {
                Table::key_value(vec![
                    ("simulated_resonant", e.simulated_resonant.to_string()),
                    ("reference_resonant", e.reference_resonant.to_string()),
                    ("simulated_far", e.simulated_far.to_string()),
                    ("rate_equation_far", e.rate_equation_far.to_string()),
                    ("reference_far", e.reference_far.to_string()),
                    ("far_discrepancy", e.far_discrepancy.to_string()),
                ])
            })?;
            println!(
                "hole profile: {} detunings, far-detuned discrepancy vs closed form {:+.1}%",
                profile.detunings_hz.len(),
                100.0 * e.far_discrepancy
            );
            Ok(())
        }
        Command::Zeeman(a) => {
            let site: ZeemanSite = match &a.site {
                Some(path) => read_json(path)?,
                None => cfg.zeeman.site.clone().unwrap_or_else(six_line_site),
            };
            let lines = zeeman_lines(&site, cfg.zeeman.field_t, cfg.zeeman.polarization_rad)?;
            out.write_report("zeeman", fmt, &lines, || {
                let mut t = Table::new(&["offset_hz", "intensity"]);
                lines.iter().for_each(|l| t.push(vec![l.offset_hz.to_string(), l.intensity.to_string()]));
                t
            })?;
            println!("{} Zeeman lines at {} mT", lines.len(), cfg.zeeman.field_t * 1e3);
            for l in &lines {
                println!("  {:+10.4} GHz  intensity {:.4}", l.offset_hz / 1e9, l.intensity);
            }
            Ok(())
        }
        Command::AnalyzeSpectrum(a) => analyze_spectrum(&cfg, a, &out, fmt),
        Command::AnalyzeLifetime(a) => analyze_lifetime(&cfg, a, &out, fmt),
        Command::AnalyzeHole(a) => {
            let (d, s) = read_hole_csv(open(&a.input)?)?;
            let h = hole_to_homogeneous(&d, &s)?;
            for w in &h.warnings {
                log::warn!("{w}");
            }
            out.write_report("hole_analysis", fmt, &h, || {
                Table::key_value(vec![
                    ("hole_fwhm_hz", h.hole_fwhm_hz.to_string()),
                    ("hole_fwhm_error_hz", h.fit.error("fwhm").to_string()),
                    ("homogeneous_bound_hz", h.homogeneous_bound_hz.to_string()),
                    ("depth", h.depth.to_string()),
                    ("plateau_noise", h.plateau_noise.to_string()),
                ])
            })?;
            println!("hole FWHM: {:.4} MHz", h.hole_fwhm_hz / 1e6);
            println!("homogeneous linewidth bound: {:.4} MHz", h.homogeneous_bound_hz / 1e6);
            Ok(())
        }
        Command::Match(a) => {
            let catalog = load_catalog(&cfg)?;
            let electrical = read_frequency_list(&a.electrical)?;
            let report = match_resonances(&catalog, &electrical, cfg.matching.tolerance_hz)?;
            out.write_report("match", fmt, &report, || {
                let mut t = Table::new(&["optical_wavelength_nm", "optical_hz", "electrical_hz", "separation_hz"]);
                for p in &report.pairs {
                    t.push(vec![
                        format!("{:.3}", p.optical_wavelength_nm),
                        p.optical_hz.to_string(),
                        p.electrical_hz.to_string(),
                        p.separation_hz.to_string(),
                    ]);
                }
                t
            })?;
            println!(
                "{} of {} optical lines matched within {} GHz ({:.1}%)",
                report.pairs.len(),
                catalog.len(),
                report.tolerance_hz / 1e9,
                100.0 * report.fraction
            );
            Ok(())
        }
        Command::Purcell(_) => {
            let design = CavityDesign::new(cfg.cavity.inputs)?;
            let kappa = cfg.cavity.quality_factor.map(|q| kappa_for_quality(design.wavelength_nm, q)).transpose()?;
            #[derive(serde::Serialize)]
            struct Report {
                design: CavityDesign,
                kappa_for_quality_hz: Option<f64>,
            }
            let report = Report { design, kappa_for_quality_hz: kappa };
            out.write_report("cavity", fmt, &report, || {
                Table::key_value(vec![
                    ("purcell_factor", design.purcell_factor.to_string()),
                    ("coupling_hz", design.coupling_hz.to_string()),
                    ("kappa_hz", design.kappa_hz.to_string()),
                    ("quality_factor", design.quality_factor.to_string()),
                    ("mode_volume_m3", design.mode_volume_m3.to_string()),
                    ("mode_volume_cubic_wavelengths", design.mode_volume_cubic_wavelengths.to_string()),
                    ("kappa_for_quality_hz", opt(kappa)),
                ])
            })?;
            println!("mode volume: {:.4} (lambda/n)^3 = {:.4e} m^3", design.mode_volume_cubic_wavelengths, design.mode_volume_m3);
            println!(
                "coupling g = {:.4e} Hz, kappa = 4g = {:.4e} Hz, Q = {:.4e}",
                design.coupling_hz, design.kappa_hz, design.quality_factor
            );
            if let (Some(q), Some(k)) = (cfg.cavity.quality_factor, kappa) {
                println!("Q = {q:e} gives kappa = {:.4} GHz", k / 1e9);
            }
            Ok(())
        }
        Command::Reproduce(_) => {
            let outcomes = run_all(&cfg.reproduce);
            out.write_report("reproduce", fmt, &outcomes, || {
                let mut t = Table::new(&["criterion", "title", "passed", "details"]);
                for o in &outcomes {
                    t.push(vec![o.id.to_string(), o.title.clone(), o.passed.to_string(), o.details.join("; ")]);
                }
                t
            })?;
            for o in &outcomes {
                println!("{}", o.summary());
                for d in &o.details {
                    println!("    {d}");
                }
            }
            let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
            println!("{}/{} criteria pass", outcomes.len() - failed.len(), outcomes.len());
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Analysis(format!("criteria {failed:?} failed")))
            }
        }
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_catalog(cfg: &RunConfig) -> Result<Catalog, CliError> {
    match &cfg.catalog {
        Some(path) => Ok(read_catalog_csv(open(path)?)?),
        None => Ok(Catalog::table1()),
    }
}

fn read_frequency_list(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let bad = |row: usize, m: String| CliError::Config(format!("{} row {row}: {m}", path.display()));
    let col = rdr
        .headers()
        .map_err(|e| bad(0, e.to_string()))?
        .iter()
        .position(|h| h.trim() == "frequency_hz")
        .ok_or_else(|| bad(0, "missing frequency_hz column".into()))?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| bad(i + 1, e.to_string()))?;
            rec.get(col).unwrap_or("").trim().parse::<f64>().map_err(|e| bad(i + 1, e.to_string()))
        })
        .collect()
}

fn simulate_spectrum(cfg: &RunConfig, a: &SimulateSpectrum, out: &OutDir) -> Result<(), CliError> {
    let catalog = load_catalog(cfg)?;
    let expected = expected_spectrum(&catalog, &cfg.protocol, &cfg.detector)?;
    let spectrum = if a.noiseless { expected } else { sample_spectrum(&expected, cfg.require_seed("simulate-spectrum")?)? };
    out.write_with("spectrum.csv", |w| write_spectrum_csv(&spectrum, w))?;
    out.write_json("spectrum.json", &spectrum.metadata())?;
    println!("spectrum: {} points, {} catalog lines", spectrum.len(), catalog.len());
    Ok(())
}

fn simulate_decay(cfg: &RunConfig, a: &SimulateDecay, out: &OutDir) -> Result<(), CliError> {
    let catalog = load_catalog(cfg)?;
    let site = catalog
        .find(cfg.decay.wavelength_nm, 5e-4)
        .ok_or_else(|| CliError::Config(format!("no catalog line at {} nm", cfg.decay.wavelength_nm)))?;
    let off_hz = match a.off_nm {
        Some(nm) => wavelength_to_frequency(nm)?,
        None => off_resonant_frequency(site),
    };
    let seed = if a.noiseless { None } else { Some(cfg.require_seed("simulate-decay")?) };
    let mut traces = Vec::new();
    for (stream, (name, f)) in [("decay_on.csv", site.center_frequency_hz()), ("decay_off.csv", off_hz)].into_iter().enumerate() {
        let expected = decay_trace_at(&catalog, f, &cfg.detector, &cfg.protocol, cfg.decay.duration_s)?;
        let trace = match seed {
            // distinct draws for the two traces
            Some(s) => sample_trace(&expected, s.wrapping_mul(2).wrapping_add(stream as u64)),
            None => expected,
        };
        out.write_with(name, |w| write_trace_csv(&trace, w))?;
        traces.push(trace);
    }
    println!("decay traces for {:.3} nm: {} bins of {} us", site.center_wavelength_nm, traces[0].len(), traces[0].bin_width_s * 1e6);
    Ok(())
}

fn analyze_spectrum(cfg: &RunConfig, a: &AnalyzeSpectrum, out: &OutDir, fmt: crate::output::Format) -> Result<(), CliError> {
    let sidecar = a.metadata.clone().or_else(|| Some(a.input.with_extension("json")).filter(|p| p.exists()));
    let metadata = match sidecar {
        Some(p) => read_json(&p)?,
        None => SpectrumMetadata { protocol: cfg.protocol, detector: cfg.detector, seed: cfg.seed },
    };
    let spectrum = read_spectrum_csv(open(&a.input)?, metadata)?;
    let result = survey_pipeline(&spectrum, &cfg.survey)?;
    out.write_with("catalog.csv", |w| write_catalog_csv(&result.catalog, w))?;
    out.write_report("survey", fmt, &result, || {
        let mut t =
            Table::new(&["candidate_hz", "prominence", "center_hz", "center_error_hz", "fwhm_hz", "fwhm_error_hz", "amplitude", "error"]);
        for l in &result.lines {
            let get = |name: &str, err: bool| l.fit.as_ref().map(|f| if err { f.error(name) } else { f.value(name) });
            t.push(vec![
                l.candidate.center_hz.to_string(),
                l.candidate.prominence.to_string(),
                opt(get("center", false)),
                opt(get("center", true)),
                opt(get("fwhm", false)),
                opt(get("fwhm", true)),
                opt(get("amplitude", false)),
                l.error.clone().unwrap_or_default(),
            ]);
        }
        t
    })?;
    let failed = result.lines.iter().filter(|l| l.error.is_some()).count();
    println!(
        "{} peaks at prominence >= {} counts/pulse, {} lines catalogued, {failed} fits failed",
        result.lines.len(),
        cfg.survey.min_prominence,
        result.catalog.len()
    );
    Ok(())
}

fn analyze_lifetime(cfg: &RunConfig, a: &AnalyzeLifetime, out: &OutDir, fmt: crate::output::Format) -> Result<(), CliError> {
    let read = |p: &PathBuf| -> Result<TimeTrace, CliError> { Ok(read_trace_csv(open(p)?, cfg.protocol)?) };
    let on = read(&a.on)?;
    let offs = a.off.iter().map(read).collect::<Result<Vec<_>, _>>()?;
    if offs.len() != 1 && offs.len() != 6 {
        return Err(CliError::Config(format!("give one off-resonant trace, or six for the background study; got {}", offs.len())));
    }
    let result = extract_lifetime(&on, &offs[0])?;
    out.write_report("lifetime", fmt, &result, || {
        let sel = result.selection.as_ref();
        let (tau, err) = result.lifetime().unzip();
        Table::key_value(vec![
            ("model", sel.map(|s| format!("{:?}", s.model).to_lowercase()).unwrap_or_default()),
            ("tau_s", opt(tau)),
            ("tau_error_s", opt(err)),
            ("aicc_improvement", opt(sel.map(|s| s.aicc_improvement))),
            ("no_signal", result.no_signal.to_string()),
            ("warnings", result.warnings.join("; ")),
        ])
    })?;
    let Some(selection) = &result.selection else {
        return Err(CliError::Analysis(result.warnings.join("; ")));
    };
    if let Some((tau, err)) = result.lifetime() {
        println!("lifetime: {:.4} ms +- {:.4} ms ({:?} model selected)", tau * 1e3, err * 1e3, selection.model);
    }
    if offs.len() == 6 {
        let study: BackgroundStudy = background_choice_study(&on, &offs)?;
        out.write_report("background_study", fmt, &study, || {
            let mut t = Table::new(&["offset_hz", "lifetime_s", "standard_error_s", "note"]);
            for e in &study.entries {
                t.push(vec![e.offset_hz.to_string(), opt(e.lifetime_s), opt(e.standard_error_s), e.note.clone().unwrap_or_default()]);
            }
            t
        })?;
        println!(
            "background study: mean fit error {:.3} us, spread {:.3} us, ratio {:.2}",
            study.mean_fit_error_s * 1e6,
            study.lifetime_spread_s * 1e6,
            study.spread_to_error_ratio
        );
    }
    Ok(())
}
