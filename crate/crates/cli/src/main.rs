//! `lsi`: command-line front end to the LSI laboratory.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input. Output files are
//! written to a temporary sibling and renamed into place, so a failed run
//! never leaves a partial file.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lsi_lab::bg::{blowup_scan, compute_bg, BGReport, BgError, BlowupScan};
use lsi_lab::highdim::{bakry_emery_certificate, HessianCertificate, MeasureND, ProbeSpec};
use lsi_lab::measure::Measure1D;
use lsi_lab::mollify::{AsymptoticReport, MollifiedDensity, Side};
use lsi_lab::rmt::{concentration_experiment, ConcentrationReport, ExperimentConfig};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Invalid(_) => 2,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "lsi", version, about = "Log-Sobolev constants of Gaussian-mollified measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; 0 lets the runtime decide. Never changes results.
    #[arg(long, global = true, env = "LSI_LAB_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bracket the LSI constant of a mollified 1-D measure.
    Estimate {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        /// Relative quadrature tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Track the bracket as the mollification variance shrinks.
    Scan {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        deltas: Vec<f64>,
    },
    /// Wigner concentration experiment from a JSON config.
    Rmt {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Probe-based curvature certificate for a mollified atom cloud in ℝⁿ.
    Bakry {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        /// Grid points per axis.
        #[arg(long, default_value_t = 21)]
        resolution: usize,
        /// Seeded uniform probes on top of the grid.
        #[arg(long, default_value_t = 200)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tail quotients against their large-|x| asymptotics on a grid of x.
    Asymptotics {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        xs: Vec<f64>,
        #[arg(long, default_value_t = Side::Left)]
        side: Side,
        #[arg(long)]
        tol: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build().map_err(invalid)?;
    let text = pool.install(|| render(cli))?;
    emit(cli.out.as_deref(), &text)
}

fn render(cli: &Cli) -> Result<String> {
    let json = cli.format == Format::Json;
    match &cli.command {
        Command::Estimate { measure, delta, tol } => {
            let report = compute_bg(&mollified(measure, *delta, *tol)?);
            Ok(if json { to_json(&report)? } else { estimate_csv(&report) })
        }
        Command::Scan { measure, deltas } => {
            if deltas.len() < 2 {
                return Err(invalid("need ≥ 2 deltas for slope"));
            }
            if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return Err(invalid("delta must be positive"));
            }
            let scan = blowup_scan(&load_measure(measure)?, deltas).map_err(|e| match e {
                BgError::NoGap => invalid("NoGap: measure support has no gap"),
                other => invalid(other),
            })?;
            eprintln!(
                "slope vs 1/delta: {:.6} (prefactor corrected {:.6}, theoretical {:.6})",
                scan.fitted_slope_vs_inv_delta, scan.prefactor_corrected_slope, scan.theoretical_exponent
            );
            Ok(if json { to_json(&scan)? } else { scan_csv(&scan) })
        }
        Command::Rmt { config, seed } => {
            let mut cfg: ExperimentConfig = serde_json::from_str(&read(config)?).map_err(invalid)?;
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            let report = concentration_experiment(&cfg).map_err(invalid)?;
            Ok(if json { to_json(&report)? } else { rmt_csv(&report) })
        }
        Command::Bakry { measure, delta, resolution, random, seed } => {
            check_delta(*delta)?;
            let m = MeasureND::from_json(&read(measure)?).map_err(invalid)?;
            let probes = ProbeSpec { resolution: *resolution, random: *random, seed: *seed };
            let cert = bakry_emery_certificate(&m, *delta, &probes).map_err(invalid)?;
            Ok(if json { to_json(&cert)? } else { bakry_csv(&cert) })
        }
        Command::Asymptotics { measure, delta, xs, side, tol } => {
            if xs.is_empty() {
                return Err(invalid("need at least one x"));
            }
            let d = mollified(measure, *delta, *tol)?;
            let rows =
                xs.iter().map(|&x| d.asymptotic_ratios(x, *side).map_err(invalid)).collect::<Result<Vec<_>>>()?;
            Ok(if json { to_json(&rows)? } else { asymptotics_csv(&rows) })
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(invalid("delta must be positive"))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load_measure(path: &Path) -> Result<Measure1D> {
    Measure1D::from_json(&read(path)?).map_err(invalid)
}

fn mollified(path: &Path, delta: f64, tol: Option<f64>) -> Result<MollifiedDensity> {
    check_delta(delta)?;
    let d = MollifiedDensity::new(load_measure(path)?, delta).map_err(invalid)?;
    match tol {
        Some(t) if t > 0.0 && t < 1.0 => Ok(d.with_quadrature_tol(t)),
        Some(t) => Err(invalid(format!("tolerance must lie in (0, 1), got {t}"))),
        None => Ok(d),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(invalid)?;
    s.push('\n');
    Ok(s)
}

fn estimate_csv(r: &BGReport) -> String {
    format!("{}\n{}\n", BGReport::CSV_HEADER, r.csv_row())
}

fn scan_csv(scan: &BlowupScan) -> String {
    let mut out = format!("{}\n", BGReport::CSV_HEADER);
    for r in &scan.reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out.push_str(&format!(
        "# slope={:.16e},prefactor_corrected_slope={:.16e},theoretical={:.16e}\n",
        scan.fitted_slope_vs_inv_delta, scan.prefactor_corrected_slope, scan.theoretical_exponent
    ));
    out
}

fn rmt_csv(r: &ConcentrationReport) -> String {
    r.to_csv()
}

fn bakry_csv(c: &HessianCertificate) -> String {
    format!(
        "delta,R,n,min_eig,c_candidate,threshold_ok,perturbation_bound,probes_evaluated\n\
         {:.16e},{:.16e},{},{:.16e},{},{},{:.16e},{}\n",
        c.delta,
        c.radius,
        c.n,
        c.min_eig,
        c.c_candidate.map_or_else(String::new, |v| format!("{v:.16e}")),
        c.threshold_ok,
        c.perturbation_bound,
        c.probes_evaluated
    )
}

fn asymptotics_csv(rows: &[AsymptoticReport]) -> String {
    let mut out = String::from("x,side,ratio_score,ratio_tail,ratio_reciprocal,max_deviation\n");
    for r in rows {
        out.push_str(&format!(
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.x,
            r.side,
            r.ratio_score,
            r.ratio_tail,
            r.ratio_reciprocal,
            r.max_deviation()
        ));
    }
    out
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let Some(path) = out else {
        let mut stdout = std::io::stdout().lock();
        return stdout
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source });
    };
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
