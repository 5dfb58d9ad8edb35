//! Configuration layering: built-in defaults, then an optional JSON file,
//! then command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::Args;
use lamai_core::constellation::{PointRecord, StandardConstellation};
use lamai_core::detector::DetectorKind;
use lamai_core::harness::{db_serde, CampaignConfig, ConstellationSpec};
use serde::Deserialize;

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "LAMAI_OUTPUT_DIR";

/// SNR sweep in dB. On the command line: `10` or `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SnrSweep {
    fn single(v: f64) -> Self {
        SnrSweep {
            start: v,
            stop: v,
            step: 1.0,
        }
    }

    fn from_list(values: &[f64]) -> Result<Self, String> {
        match values {
            [] => Err("empty SNR list".into()),
            [v] => Ok(SnrSweep::single(*v)),
            [a, b, ..] => {
                let step = b - a;
                let evenly = values
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - step).abs() < 1e-9 * step.abs().max(1.0));
                if !(step > 0.0) || !evenly {
                    return Err("SNR list must be increasing and evenly spaced".into());
                }
                Ok(SnrSweep {
                    start: *a,
                    stop: *values.last().unwrap(),
                    step,
                })
            }
        }
    }
}

impl FromStr for SnrSweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("invalid SNR '{s}': {e}"))
            })
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [v] => Ok(SnrSweep::single(*v)),
            [start, stop, step] => Ok(SnrSweep {
                start: *start,
                stop: *stop,
                step: *step,
            }),
            _ => Err(format!("expected 'value' or 'start:stop:step', got '{s}'")),
        }
    }
}

impl<'de> Deserialize<'de> for SnrSweep {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Scalar(f64),
            List(Vec<f64>),
            Range { start: f64, stop: f64, step: f64 },
            Text(String),
        }
        let sweep = match Repr::deserialize(d)? {
            Repr::Scalar(v) => Ok(SnrSweep::single(v)),
            Repr::List(v) => SnrSweep::from_list(&v),
            Repr::Range { start, stop, step } => Ok(SnrSweep { start, stop, step }),
            Repr::Text(t) => t.parse(),
        };
        sweep.map_err(serde::de::Error::custom)
    }
}

/// A dB value that may be `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Db(pub f64);

impl FromStr for Db {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        db_serde::parse(s).map(Db)
    }
}

impl<'de> Deserialize<'de> for Db {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        db_serde::deserialize(d).map(Db)
    }
}

/// Constellation by built-in name, by path to a JSON point list, or (in a
/// config file) as an inline point list.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationArg(pub ConstellationSpec);

impl FromStr for ConstellationArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Ok(kind) = s.parse::<StandardConstellation>() {
            return Ok(ConstellationArg(kind.into()));
        }
        let text = std::fs::read_to_string(s).map_err(|e| {
            format!("'{s}' is neither a known constellation nor a readable file: {e}")
        })?;
        let records: Vec<PointRecord> = serde_json::from_str(&text)
            .map_err(|e| format!("bad constellation file '{s}': {e}"))?;
        Ok(ConstellationArg(ConstellationSpec::Points(records)))
    }
}

impl<'de> Deserialize<'de> for ConstellationArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Points(Vec<PointRecord>),
        }
        match Repr::deserialize(d)? {
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
            Repr::Points(p) => Ok(ConstellationArg(ConstellationSpec::Points(p))),
        }
    }
}

/// Detector selection: `lama-i`, `lama`, `lama-whitened`, `all`, or a
/// comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct Detectors(pub Vec<DetectorKind>);

impl FromStr for Detectors {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        DetectorKind::parse_list(s)
            .map(Detectors)
            .map_err(|e| e.to_string())
    }
}

impl<'de> Deserialize<'de> for Detectors {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            One(String),
            Many(Vec<String>),
        }
        let text = match Repr::deserialize(d)? {
            Repr::One(s) => s,
            Repr::Many(v) => v.join(","),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Settings shared by every subcommand. Each one can come from the config
/// file or a flag; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Receive antennas.
    #[arg(long)]
    pub mr: Option<usize>,
    /// Transmit antennas (users).
    #[arg(long)]
    pub mt: Option<usize>,
    /// BPSK, QPSK, 8-PSK, 16-QAM, 64-QAM, or a JSON file of {re, im, prior}.
    #[arg(long)]
    pub constellation: Option<ConstellationArg>,
    /// SNR in dB: a value or start:stop:step.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<SnrSweep>,
    /// Transmit EVM in dB (`-inf` for an ideal transmitter).
    #[arg(long, allow_hyphen_values = true)]
    pub evm_db: Option<Db>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum number of AMP iterations.
    #[arg(long)]
    pub tmax: Option<usize>,
    /// Trial cap per SNR point.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Error events after which a detector stops at a point.
    #[arg(long)]
    pub min_errors: Option<u64>,
    /// lama-i, lama, lama-whitened, all, or a comma-separated list.
    #[arg(long)]
    pub detector: Option<Detectors>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Trials per scheduling batch.
    #[arg(long)]
    pub batch: Option<usize>,
}

impl Settings {
    /// Fields set in `self` override those in `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            mr: self.mr.or(base.mr),
            mt: self.mt.or(base.mt),
            constellation: self.constellation.or(base.constellation),
            snr_db: self.snr_db.or(base.snr_db),
            evm_db: self.evm_db.or(base.evm_db),
            seed: self.seed.or(base.seed),
            tmax: self.tmax.or(base.tmax),
            trials: self.trials.or(base.trials),
            min_errors: self.min_errors.or(base.min_errors),
            detector: self.detector.or(base.detector),
            workers: self.workers.or(base.workers),
            batch: self.batch.or(base.batch),
        }
    }

    /// Applies the settings to the desk-scale default campaign.
    pub fn campaign(&self) -> anyhow::Result<CampaignConfig> {
        let mut cfg = CampaignConfig::desk_default();
        if let Some(v) = self.mr {
            cfg.mr = v;
        }
        if let Some(v) = self.mt {
            cfg.mt = v;
        }
        if let Some(c) = &self.constellation {
            cfg.constellation = c.0.clone();
        }
        if let Some(s) = self.snr_db {
            cfg.snr_start_db = s.start;
            cfg.snr_stop_db = s.stop;
            cfg.snr_step_db = s.step;
        }
        if let Some(Db(v)) = self.evm_db {
            cfg.evm_db = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.tmax {
            cfg.tmax = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.min_errors {
            cfg.min_errors = v;
        }
        if let Some(d) = &self.detector {
            cfg.detectors = d.0.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads a config file. Accepts either the flat settings layout or the
/// `config` object of a previous JSON campaign output.
pub fn load_file(path: &Path) -> anyhow::Result<Settings> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(cfg) = value.get("config") {
        let cfg: CampaignConfig = serde_json::from_value(cfg.clone()).context("campaign config")?;
        return Ok(from_campaign(&cfg));
    }
    if value.get("snr_start_db").is_some() {
        let cfg: CampaignConfig = serde_json::from_value(value).context("campaign config")?;
        return Ok(from_campaign(&cfg));
    }
    serde_json::from_value(value).with_context(|| format!("invalid settings in {}", path.display()))
}

fn from_campaign(cfg: &CampaignConfig) -> Settings {
    Settings {
        mr: Some(cfg.mr),
        mt: Some(cfg.mt),
        constellation: Some(ConstellationArg(cfg.constellation.clone())),
        snr_db: Some(SnrSweep {
            start: cfg.snr_start_db,
            stop: cfg.snr_stop_db,
            step: cfg.snr_step_db,
        }),
        evm_db: Some(Db(cfg.evm_db)),
        seed: Some(cfg.seed),
        tmax: Some(cfg.tmax),
        trials: Some(cfg.trials),
        min_errors: Some(cfg.min_errors),
        detector: Some(Detectors(cfg.detectors.clone())),
        workers: Some(cfg.workers),
        batch: Some(cfg.batch),
    }
}

/// Output path: explicit `--output`, else `default_name` in the output
/// directory (flag, then environment, then the working directory).
pub fn output_path(
    output: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    default_name: &str,
) -> anyhow::Result<PathBuf> {
    if let Some(p) = output {
        return Ok(p);
    }
    let dir = out_dir
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if dir.exists() && !dir.is_dir() {
        bail!("output directory {} is not a directory", dir.display());
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(default_name))
}
