use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sac_core::io::{read_samples_csv, write_frames_csv, write_scenario_csv};
use sac_core::sac::Band;
use sac_core::suite::{check_gates, default_gates, run_suite, standard_cases, EvalSettings};
use sac_core::{design_prototype, generate, DesignSpec, FilterBank, SacOptions, SacState, ScenarioId, ScenarioSpec, SystemConfig};

#[derive(Parser)]
#[command(name = "sac", version, about = "Self-adaptive contractive phasor estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the prototype filter bank.
    Design(DesignArgs),
    /// Estimate phasors from a CSV file or a generated scenario.
    Run(RunArgs),
    /// Generate scenario samples with their truth columns.
    Gen(GenArgs),
    /// Run the standard battery and check the acceptance gates.
    Suite(SuiteArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// Filter order (window holds N+1 samples).
    #[arg(long = "order", default_value_t = 64)]
    order: usize,
    /// Number of rejected harmonics.
    #[arg(long = "harmonics", default_value_t = 11)]
    harmonics: usize,
    /// Nominal frequency, Hz.
    #[arg(long, default_value_t = 60.0)]
    f0: f64,
    /// Sampling rate, Hz.
    #[arg(long, default_value_t = 1920.0)]
    fs: f64,
}

impl SystemArgs {
    fn config(&self) -> SystemConfig {
        SystemConfig {
            order: self.order,
            harmonics: self.harmonics,
            f0: self.f0,
            sample_period: 1.0 / self.fs,
            ..SystemConfig::default()
        }
    }
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Frequency contractive range, Hz.
    #[arg(long, default_value_t = 15.0)]
    freq_range_hz: f64,
    /// Damping contractive range, 1/s.
    #[arg(long, default_value_t = 4.0)]
    damping_range: f64,
    /// ROCOF contractive range, Hz/s.
    #[arg(long, default_value_t = 16.0)]
    rocof_range_hz_s: f64,
    /// ROCOD contractive range, 1/s^2.
    #[arg(long, default_value_t = 110.0)]
    rocod_range: f64,
    #[arg(long, default_value_t = 0.3)]
    l_freq: f64,
    #[arg(long, default_value_t = 0.3)]
    l_damping: f64,
    #[arg(long, default_value_t = 0.9)]
    l_rocof: f64,
    #[arg(long, default_value_t = 0.9)]
    l_rocod: f64,
    /// Grid points per contractive interval.
    #[arg(long, default_value_t = 401)]
    grid: usize,
    /// Output path of the filter bank JSON.
    #[arg(short, long, default_value = "bank.json")]
    out: PathBuf,
    /// Output path of the design report; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Lower and upper frequency thresholds, Hz.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    freq_band_hz: Option<Vec<f64>>,
    /// Lower and upper damping thresholds, 1/s.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    damping_band: Option<Vec<f64>>,
    /// Lower and upper ROCOF thresholds, Hz/s.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    rocof_band_hz_s: Option<Vec<f64>>,
    /// Lower and upper ROCOD thresholds, 1/s^2.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    rocod_band: Option<Vec<f64>>,
    /// Keep the prototype bank; only the priors adapt.
    #[arg(long)]
    no_filter_adaptation: bool,
}

impl ThresholdArgs {
    fn options(&self) -> Result<SacOptions> {
        let tau = std::f64::consts::TAU;
        let band = |v: &Option<Vec<f64>>, scale: f64, dflt: Band| match v.as_deref() {
            Some([lo, hi]) => Band::new(lo * scale, hi * scale),
            _ => dflt,
        };
        let mut o = SacOptions::default();
        let th = &mut o.thresholds;
        th.omega = band(&self.freq_band_hz, tau, th.omega);
        th.sigma = band(&self.damping_band, 1.0, th.sigma);
        th.alpha = band(&self.rocof_band_hz_s, tau, th.alpha);
        th.gamma = band(&self.rocod_band, 1.0, th.gamma);
        th.validate()?;
        o.adapt_filters = !self.no_filter_adaptation;
        Ok(o)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Filter bank JSON produced by `design`.
    #[arg(long)]
    bank: PathBuf,
    /// Sample CSV with `re,im` or `ya,yb,yc` columns.
    #[arg(long, conflicts_with = "scenario")]
    input: Option<PathBuf>,
    /// Scenario id to generate instead of reading a file.
    #[arg(long)]
    scenario: Option<ScenarioId>,
    /// Samples between reports; defaults to Fs / reporting rate.
    #[arg(long)]
    stride: Option<usize>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Output CSV; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Scenario id (A1, A2, A3, B1, B2, B3, STEP_AMP, STEP_PHASE, FAULT_SYNTH).
    #[arg(long, required_unless_present = "spec")]
    scenario: Option<ScenarioId>,
    /// JSON scenario file; flags given alongside override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    offset_hz: Option<f64>,
    #[arg(long)]
    harmonic: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[command(flatten)]
    system: SystemArgs,
    /// Output CSV; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Filter bank JSON; designed with defaults when omitted.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Noise level, dB; `inf` runs noiseless.
    #[arg(long, default_value_t = 75.0)]
    snr: f64,
    /// Number of noise seeds per scenario.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Reporting stride for the non-step cases.
    #[arg(long)]
    stride: Option<usize>,
    /// Frequency sweep increment for the steady cases, Hz.
    #[arg(long, default_value_t = 0.5)]
    sweep_step_hz: f64,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_design(a: DesignArgs) -> Result<()> {
    let cfg = a.system.config();
    let tau = std::f64::consts::TAU;
    let spec = DesignSpec {
        omega_con: tau * a.freq_range_hz,
        sigma_con: a.damping_range,
        alpha_con: tau * a.rocof_range_hz_s,
        gamma_con: a.rocod_range,
        l_omega: a.l_freq,
        l_sigma: a.l_damping,
        l_alpha: a.l_rocof,
        l_gamma: a.l_rocod,
        grid_density: a.grid,
        ..DesignSpec::default()
    };
    let (bank, report) = design_prototype(&cfg, &spec)?;
    bank.save(&a.out)?;
    let report_path = a.report.unwrap_or_else(|| a.out.with_extension("report.json"));
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    let c = &report.certificate;
    eprintln!(
        "wrote {} and {}; worst ratios: freq {:.4} damping {:.4} rocof {:.4} rocod {:.4}",
        a.out.display(),
        report_path.display(),
        c.omega.ratio,
        c.sigma.ratio,
        c.alpha.ratio,
        c.gamma.ratio
    );
    Ok(())
}

fn load_bank(path: &Path) -> Result<(FilterBank, SystemConfig)> {
    let bank = FilterBank::load(path).with_context(|| format!("loading {}", path.display()))?;
    let cfg = SystemConfig {
        order: bank.order(),
        harmonics: bank.harmonics(),
        f0: bank.f0(),
        sample_period: bank.sample_period(),
        ..SystemConfig::default()
    };
    let stride = (1.0 / (cfg.sample_period * cfg.reporting_rate)).round() as usize;
    Ok((bank, cfg.with_stride(stride.max(1))))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let (bank, mut cfg) = load_bank(&a.bank)?;
    if let Some(s) = a.stride {
        cfg = cfg.with_stride(s);
    }
    cfg.validate()?;
    let stream = match (&a.input, a.scenario) {
        (Some(p), _) => read_samples_csv(BufReader::new(File::open(p)?), &cfg)?,
        (None, Some(id)) => generate(&ScenarioSpec::new(id), &cfg)?.stream,
        (None, None) => bail!("either --input or --scenario is required"),
    };
    let mut state = SacState::new(cfg, bank, a.thresholds.options()?)?;
    let frames = state.run(&stream)?;
    write_frames_csv(output(a.out.as_deref())?, &frames)?;
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let cfg = a.system.config();
    let mut spec = match (&a.spec, a.scenario) {
        (Some(p), _) => ScenarioSpec::from_json(&fs::read_to_string(p)?)?,
        (None, Some(id)) => ScenarioSpec::new(id),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    if let Some(id) = a.scenario {
        spec.id = id;
    }
    if let Some(f) = a.offset_hz {
        spec = spec.with_offset(f);
    }
    if let Some(h) = a.harmonic {
        spec = spec.with_harmonic(h);
    }
    if a.snr_db.is_some() {
        spec.snr_db = a.snr_db;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(d) = a.duration_s {
        spec = spec.with_duration(d);
    }
    let g = generate(&spec, &cfg)?;
    write_scenario_csv(output(a.out.as_deref())?, &g, &cfg)?;
    Ok(())
}

fn cmd_suite(a: SuiteArgs) -> Result<bool> {
    let (bank, mut cfg) = match &a.bank {
        Some(p) => load_bank(p)?,
        None => {
            let cfg = SystemConfig::default();
            (design_prototype(&cfg, &DesignSpec::default())?.0, cfg)
        }
    };
    if let Some(s) = a.stride {
        cfg = cfg.with_stride(s);
    }
    cfg.validate()?;
    let snr = a.snr.is_finite().then_some(a.snr);
    let seeds: Vec<u64> = (1..=a.seeds).collect();
    let cases = standard_cases(&cfg, snr, &seeds, a.sweep_step_hz);
    let summary = run_suite(&cases, &bank, &SacOptions::default(), &cfg, &EvalSettings::default())?;
    if let Some(p) = &a.out_json {
        fs::write(p, summary.to_json()?)?;
    }
    if let Some(p) = &a.out_csv {
        fs::write(p, summary.to_csv()?)?;
    }
    let outcomes = check_gates(&summary, &default_gates());
    for o in &outcomes {
        let value = o.value.map_or("missing".to_string(), |v| format!("{v:.6}"));
        println!("{} {} {:?} {:?} = {}", if o.pass { "PASS" } else { "FAIL" }, o.gate.test, o.gate.quantity, o.gate.bound, value);
    }
    Ok(outcomes.iter().all(|o| o.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design(a) => cmd_design(a).map(|_| true),
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Gen(a) => cmd_gen(a).map(|_| true),
        Command::Suite(a) => cmd_suite(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
