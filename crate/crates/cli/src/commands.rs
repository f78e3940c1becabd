use std::io::Write;
use std::path::{Path, PathBuf};

use idlertomo_core::{
    report_fidelity, run_calibration, run_scan, IdlerStateParams, ReconstructionResult, ScanPlan, ScanRecord,
    SignalSetting, WaveplateKind,
};
use serde::{Deserialize, Serialize};

use crate::config::load_config;
use crate::manifest::RunManifest;
use crate::sweep::{clamp_transmission, default_angles, reconstruct_with, rows_to_csv, run_sweep};
use crate::verify::run_verify;
use crate::{
    report, require_seed, CalibrateArgs, Cli, CliError, CliResult, Format, PlateArg, ReconstructArgs, ReportArgs,
    SettingArg, SimulateArgs, SweepArgs, VerifyArgs,
};

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep_results.json";
pub const VERIFY_FILE: &str = "verify_report.json";

/// Collects the files of one run and writes the manifest last.
struct OutputSet {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputSet {
    fn open(cli: &Cli, command: &str, dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            manifest: RunManifest::new(command, cli.config.as_deref(), cli.seed, dir),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn write_scan(&mut self, stem: &str, record: &ScanRecord) -> CliResult<()> {
        self.write(&format!("{stem}.csv"), &record.to_csv_string())?;
        self.write(&format!("{stem}.json"), &(serde_json::to_string_pretty(record)? + "\n"))
    }

    fn finish(self) -> CliResult<()> {
        self.manifest.write()
    }
}

fn emit<W: Write>(out: &mut W, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("writing stdout", e))
}

fn pretty<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn scan_args_plan(points: usize, n: u64, setting: SignalSetting, seed: u64, noiseless: bool) -> CliResult<ScanPlan> {
    ScanPlan::uniform(points, n, setting, seed, noiseless).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn simulate<W: Write>(cli: &Cli, a: &SimulateArgs, out: &mut W) -> CliResult<()> {
    let seed = require_seed(cli)?;
    let cfg = load_config(cli.config.as_deref(), &a.overrides)?;
    let settings: &[SignalSetting] = match a.setting {
        SettingArg::H => &[SignalSetting::H],
        SettingArg::V => &[SignalSetting::V],
        SettingArg::Both => &[SignalSetting::H, SignalSetting::V],
    };
    let records: Vec<ScanRecord> = settings
        .iter()
        .map(|&s| {
            let plan = scan_args_plan(a.scan.points, a.scan.n, s, seed, a.scan.noiseless)?;
            Ok(run_scan(&cfg.clone().with_setting(s), &plan))
        })
        .collect::<CliResult<_>>()?;

    match &cli.out {
        Some(dir) => {
            let mut set = OutputSet::open(cli, "simulate", dir)?;
            for r in &records {
                set.write_scan(&format!("scan_{}", r.setting().as_str()), r)?;
            }
            set.finish()
        }
        None => {
            for r in &records {
                match cli.format {
                    Format::Csv => emit(out, &r.to_csv_string())?,
                    Format::Json => emit(out, &pretty(r)?)?,
                }
            }
            Ok(())
        }
    }
}

/// Calibration summary as written to `calibration.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub t_h: f64,
    pub t_v: f64,
    #[serde(default)]
    pub t_h_stderr: f64,
    #[serde(default)]
    pub t_v_stderr: f64,
}

pub fn calibrate<W: Write>(cli: &Cli, a: &CalibrateArgs, out: &mut W) -> CliResult<()> {
    let seed = require_seed(cli)?;
    let cfg = load_config(cli.config.as_deref(), &a.overrides)?;
    let plan = scan_args_plan(a.scan.points, a.scan.n, SignalSetting::H, seed, a.scan.noiseless)?;
    let (cal, scan_h, scan_v) = run_calibration(&cfg, &plan)?;
    let summary = CalibrationFile { t_h: cal.t_h, t_v: cal.t_v, t_h_stderr: cal.t_h_stderr, t_v_stderr: cal.t_v_stderr };

    match &cli.out {
        Some(dir) => {
            let mut set = OutputSet::open(cli, "calibrate", dir)?;
            set.write(CALIBRATION_FILE, &pretty(&summary)?)?;
            set.write("calibration_fits.json", &pretty(&cal)?)?;
            set.write_scan("calibration_scan_H", &scan_h)?;
            set.write_scan("calibration_scan_V", &scan_v)?;
            set.finish()
        }
        None => match cli.format {
            Format::Csv => emit(
                out,
                &format!(
                    "t_h,t_h_stderr,t_v,t_v_stderr\n{},{},{},{}\n",
                    summary.t_h, summary.t_h_stderr, summary.t_v, summary.t_v_stderr
                ),
            ),
            Format::Json => emit(out, &pretty(&summary)?),
        },
    }
}

pub fn read_calibration(path: &Path) -> CliResult<CalibrationFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading calibration {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn reconstruct<W: Write>(cli: &Cli, a: &ReconstructArgs, out: &mut W) -> CliResult<()> {
    let cal = read_calibration(&a.calibration)?;
    let scan_h = ScanRecord::load(&a.scan_h)?;
    let scan_v = ScanRecord::load(&a.scan_v)?;
    if cal.t_h > 1.0 || cal.t_v > 1.0 {
        eprintln!("note: calibrated transmission above 1 clamped to 1");
    }
    let mut result = reconstruct_with(a.method, &scan_h, &scan_v, clamp_transmission(cal.t_h), clamp_transmission(cal.t_v))?;

    let reference = match a.ref_p_h {
        Some(p_h) => Some(IdlerStateParams::new(p_h, a.ref_xi, a.ref_purity)?),
        None => scan_h.truth().map(|c| *c.idler()),
    };
    if let Some(r) = reference {
        report_fidelity(&mut result, &r)?;
    }

    let json = pretty(&result)?;
    match &cli.out {
        Some(dir) => {
            let mut set = OutputSet::open(cli, "reconstruct", dir)?;
            set.write(RECONSTRUCTION_FILE, &json)?;
            set.finish()?;
            emit(out, &report::render(&result))
        }
        None => match cli.format {
            Format::Json => emit(out, &json),
            Format::Csv => emit(out, &report::render(&result)),
        },
    }
}

pub fn sweep<W: Write>(cli: &Cli, a: &SweepArgs, out: &mut W) -> CliResult<()> {
    let seed = require_seed(cli)?;
    let cfg = load_config(cli.config.as_deref(), &a.overrides)?;
    let kind = match a.plate {
        PlateArg::Hwp => WaveplateKind::HalfWave,
        PlateArg::Qwp => WaveplateKind::QuarterWave,
    };
    let angles = if a.angles.is_empty() { default_angles() } else { a.angles.clone() };
    if angles.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Usage("angles must be finite numbers of degrees".into()));
    }
    // Validate the plan shape up front so a bad flag is a usage error.
    scan_args_plan(a.scan.points, a.scan.n, SignalSetting::H, seed, a.scan.noiseless)?;
    let result = run_sweep(&cfg, kind, &angles, a.method, a.scan.points, a.scan.n, seed, a.scan.noiseless)?;
    let csv = rows_to_csv(&result.rows);

    match &cli.out {
        Some(dir) => {
            let mut set = OutputSet::open(cli, "sweep", dir)?;
            set.write(SWEEP_CSV, &csv)?;
            set.write(SWEEP_JSON, &pretty(&result)?)?;
            set.finish()
        }
        None => match cli.format {
            Format::Csv => emit(out, &csv),
            Format::Json => emit(out, &pretty(&result.rows)?),
        },
    }
}

pub fn verify<W: Write>(cli: &Cli, a: &VerifyArgs, out: &mut W) -> CliResult<()> {
    let seed = require_seed(cli)?;
    let report = run_verify(seed, a.trials)?;
    match cli.format {
        Format::Csv => emit(out, &report.to_text())?,
        Format::Json => emit(out, &pretty(&report)?)?,
    }
    if let Some(dir) = &cli.out {
        let mut set = OutputSet::open(cli, "verify", dir)?;
        set.write(VERIFY_FILE, &pretty(&report)?)?;
        set.finish()?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Failed("verification failed".into()))
    }
}

pub fn report<W: Write>(a: &ReportArgs, out: &mut W) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| CliError::io(format!("reading {}", a.input.display()), e))?;
    let result: ReconstructionResult = serde_json::from_str(&text)?;
    emit(out, &report::render(&result))
}
