mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lamai_core::detector::DetectorKind;
use lamai_core::harness::{
    compare_to_se, emit_results, predict_ser_sweep, run_campaign, trace_detector,
    write_comparison_csv, write_trace_csv, CampaignConfig, CampaignOutput, OutputFormat,
};
use lamai_core::simulation::snr_to_n0;
use lamai_core::state_evolution::{
    beta_min_over_nt, fixed_point_scan, log_grid, phase_map, se_recursion, solve_fixed_point,
    thresholds, BetaMinScan, Psi, PsiCurve, PsiSpec, ThresholdReport, DEFAULT_PSI_SAMPLES,
};
use serde::Serialize;

use crate::config::{load_file, output_path, Settings};

/// Large-MIMO detection under transmit impairments: SER campaigns and
/// state-evolution analysis.
#[derive(Debug, Parser)]
#[command(name = "lamai", version)]
struct Cli {
    /// Directory for outputs without an explicit --output.
    #[arg(long, global = true, env = config::OUTPUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (defaults to a fixed name in the output directory).
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<Settings> {
        let base = match &self.config {
            Some(p) => load_file(p)?,
            None => Settings::default(),
        };
        Ok(self.settings.clone().over(base))
    }
}

#[derive(Debug, Args)]
struct PsiArgs {
    /// Monte Carlo samples for the MSE function.
    #[arg(long, default_value_t = DEFAULT_PSI_SAMPLES)]
    psi_samples: usize,
    /// Points of the log-spaced sigma^2 grid.
    #[arg(long, default_value_t = PsiCurve::DEFAULT_POINTS)]
    grid_points: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo SER campaign.
    Ser {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
        /// Also write LAMA-I against the SE prediction (`<output>.se.csv`).
        #[arg(long)]
        compare: bool,
        #[arg(long, default_value_t = DEFAULT_PSI_SAMPLES)]
        psi_samples: usize,
    },
    /// State-evolution trace, the fixed point reached from the start, and
    /// every fixed point on the grid.
    Se {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        psi: PsiArgs,
    },
    /// Recovery thresholds and, with beta and N0, the uniqueness regime.
    Thresholds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        psi: PsiArgs,
        /// System load; defaults to mt/mr when both are given.
        #[arg(long)]
        beta: Option<f64>,
        /// Noise variance; defaults to the one implied by --snr-db.
        #[arg(long)]
        n0: Option<f64>,
        /// Also minimize beta_min over this many log-spaced N_T in [1e-3, 1].
        #[arg(long)]
        nt_scan: Option<usize>,
    },
    /// Regime and fixed-point count over a beta x N0 grid.
    Phase {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        psi: PsiArgs,
        /// Linear beta grid lo:hi:count.
        #[arg(long, default_value = "0.1:2:20")]
        beta_grid: String,
        /// Logarithmic N0 grid lo:hi:count.
        #[arg(long, default_value = "1e-4:10:20")]
        n0_grid: String,
    },
    /// Large-system SER predicted from the fixed point over an SNR sweep.
    PredictSer {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_PSI_SAMPLES)]
        psi_samples: usize,
    },
    /// Per-iteration detector statistics at one SNR.
    Trace {
        #[command(flatten)]
        common: Common,
        /// Attach the state-evolution prediction.
        #[arg(long)]
        se: bool,
        #[arg(long, default_value_t = DEFAULT_PSI_SAMPLES)]
        psi_samples: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Ser {
            common,
            format,
            compare,
            psi_samples,
        } => {
            let cfg = common.resolve()?.campaign()?;
            let name = match format {
                OutputFormat::Csv => "ser.csv",
                OutputFormat::Json => "ser.json",
            };
            let path = output_path(common.output.clone(), out_dir, name)?;
            let records = run_campaign(&cfg)?;
            for r in records.iter().filter(|r| r.flagged) {
                eprintln!(
                    "warning: {} at {} dB failed in {} of {} trials",
                    r.detector, r.snr_db, r.failed_trials, r.trials
                );
            }
            let output = CampaignOutput {
                config: cfg,
                records,
            };
            emit_results(&output, format, &path)?;
            if compare {
                let lama_i: Vec<_> = output
                    .records
                    .iter()
                    .filter(|r| r.detector == DetectorKind::LamaI)
                    .cloned()
                    .collect();
                if lama_i.is_empty() {
                    bail!("--compare needs lama-i among the detectors");
                }
                let rows = compare_to_se(&output.config, &lama_i, psi_samples, output.config.seed)?;
                let cmp_path = path.with_extension("se.csv");
                write_comparison_csv(&rows, create(&cmp_path)?)?;
                eprintln!("wrote {}", cmp_path.display());
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Se { common, psi } => {
            let cfg = common.resolve()?.campaign()?;
            let path = output_path(common.output.clone(), out_dir, "se.csv")?;
            let (psi_fn, n0) = single_point_psi(&cfg, psi.psi_samples)?;
            let beta = cfg.beta();
            let trace = se_recursion(&psi_fn, beta, n0, cfg.tmax)?;
            let reached = solve_fixed_point(&psi_fn, beta, n0)?;
            let curve = PsiCurve::evaluate(&psi_fn, &curve_grid(psi.grid_points)?);
            let all = fixed_point_scan(&psi_fn, &curve, beta, n0);

            let mut out = csv::Writer::from_writer(create(&path)?);
            out.write_record(["kind", "index", "sigma2"])?;
            for (t, s) in trace.sigma2.iter().enumerate() {
                out.write_record(["iterate".to_string(), (t + 1).to_string(), s.to_string()])?;
            }
            out.write_record([
                "fixed-point".to_string(),
                "0".to_string(),
                reached.to_string(),
            ])?;
            for (i, s) in all.iter().enumerate() {
                out.write_record(["scan-root".to_string(), i.to_string(), s.to_string()])?;
            }
            out.flush()?;
            if all.len() > 1 {
                eprintln!("note: {} fixed points on the grid", all.len());
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Thresholds {
            common,
            psi,
            beta,
            n0,
            nt_scan,
        } => {
            let settings = common.resolve()?;
            let cfg = settings.campaign()?;
            let path = output_path(common.output.clone(), out_dir, "thresholds.json")?;
            let beta = beta
                .or_else(|| (settings.mr.is_some() && settings.mt.is_some()).then(|| cfg.beta()));
            let n0 = match (n0, settings.snr_db, beta) {
                (Some(v), _, _) => Some(v),
                (None, Some(s), Some(b)) => {
                    Some(snr_to_n0(s.start, b, cfg.constellation()?.energy()))
                }
                _ => None,
            };
            let grid = curve_grid(psi.grid_points)?;
            let psi_fn = Psi::new(&PsiSpec::auto(
                cfg.constellation()?,
                cfg.n_t()?,
                psi.psi_samples,
                cfg.seed,
            ))?;
            let curve = PsiCurve::evaluate(&psi_fn, &grid);
            let report = thresholds(&psi_fn, &curve, beta, n0)?;
            let scan = match nt_scan {
                Some(n) => {
                    let c = cfg.constellation()?;
                    Some(beta_min_over_nt(&log_grid(1e-3, 1.0, n), |nt| {
                        let p = Psi::new(&PsiSpec::auto(c.clone(), nt, psi.psi_samples, cfg.seed))?;
                        Ok(PsiCurve::evaluate(&p, &grid))
                    })?)
                }
                None => None,
            };
            let out = ThresholdOutput {
                report,
                beta_min_scan: scan,
            };
            serde_json::to_writer_pretty(create(&path)?, &out)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Phase {
            common,
            psi,
            beta_grid,
            n0_grid,
        } => {
            let cfg = common.resolve()?.campaign()?;
            let path = output_path(common.output.clone(), out_dir, "phase.csv")?;
            let betas = parse_grid(&beta_grid, false)?;
            let n0s = parse_grid(&n0_grid, true)?;
            let psi_fn = Psi::new(&PsiSpec::auto(
                cfg.constellation()?,
                cfg.n_t()?,
                psi.psi_samples,
                cfg.seed,
            ))?;
            let curve = PsiCurve::evaluate(&psi_fn, &curve_grid(psi.grid_points)?);
            let cells = phase_map(&psi_fn, &curve, &betas, &n0s)?;
            let mut out = csv::Writer::from_writer(create(&path)?);
            out.write_record(["beta", "n0", "regime", "fixed_points"])?;
            for c in &cells {
                let regime = serde_json::to_value(c.regime)?;
                out.write_record([
                    c.beta.to_string(),
                    c.n0.to_string(),
                    regime.as_str().unwrap_or_default().to_string(),
                    c.fixed_points.to_string(),
                ])?;
            }
            out.flush()?;
            eprintln!("wrote {}", path.display());
        }
        Command::PredictSer {
            common,
            psi_samples,
        } => {
            let cfg = common.resolve()?.campaign()?;
            let path = output_path(common.output.clone(), out_dir, "predict_ser.csv")?;
            let points = predict_ser_sweep(&cfg, &cfg.snr_points(), psi_samples, cfg.seed)?;
            let mut out = csv::Writer::from_writer(create(&path)?);
            out.write_record(["snr_db", "n0", "fixed_point", "ser"])?;
            for p in &points {
                out.write_record([
                    p.snr_db.to_string(),
                    p.n0.to_string(),
                    p.fixed_point.to_string(),
                    p.ser.to_string(),
                ])?;
            }
            out.flush()?;
            eprintln!("wrote {}", path.display());
        }
        Command::Trace {
            common,
            se,
            psi_samples,
        } => {
            let settings = common.resolve()?;
            let cfg = settings.campaign()?;
            let path = output_path(common.output.clone(), out_dir, "trace.csv")?;
            let kind = match settings.detector.as_ref().map(|d| d.0.as_slice()) {
                None => DetectorKind::LamaI,
                Some([one]) => *one,
                Some(_) => bail!("trace takes a single detector"),
            };
            let trials = settings.trials.unwrap_or(500);
            let system = cfg.system(single_snr(&cfg)?)?;
            let rows = trace_detector(&system, kind, cfg.tmax, trials, se.then_some(psi_samples))?;
            write_trace_csv(&rows, create(&path)?)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdOutput {
    #[serde(flatten)]
    report: ThresholdReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_min_scan: Option<BetaMinScan>,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn single_snr(cfg: &CampaignConfig) -> anyhow::Result<f64> {
    match cfg.snr_points().as_slice() {
        [one] => Ok(*one),
        _ => bail!("this subcommand needs a single --snr-db value"),
    }
}

fn single_point_psi(cfg: &CampaignConfig, samples: usize) -> anyhow::Result<(Psi, f64)> {
    let system = cfg.system(single_snr(cfg)?)?;
    let psi = Psi::new(&PsiSpec::auto(
        system.constellation.clone(),
        system.n_t(),
        samples,
        cfg.seed,
    ))?;
    Ok((psi, system.n0))
}

fn curve_grid(points: usize) -> anyhow::Result<Vec<f64>> {
    if points < 2 {
        bail!("grid needs at least 2 points");
    }
    Ok(log_grid(PsiCurve::DEFAULT_LO, PsiCurve::DEFAULT_HI, points))
}

/// `lo:hi:count`, spaced linearly or logarithmically.
fn parse_grid(s: &str, log: bool) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        bail!("grid '{s}' is not lo:hi:count");
    };
    let (lo, hi): (f64, f64) = (lo.trim().parse()?, hi.trim().parse()?);
    let n: usize = n.trim().parse()?;
    if n == 0 || !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        bail!("grid '{s}' needs 0 < lo <= hi and count >= 1");
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok(if log {
        log_grid(lo, hi, n)
    } else {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    })
}
