//! Monte Carlo symbol-error-rate campaigns.
//!
//! Trial `k` of SNR point `i` draws its realization from
//! `stream_rng(seed, i, k)`, and every selected detector sees that same
//! realization. Trials run in fixed-size batches on a worker pool; per-trial
//! counts are folded in trial order, so the stopping decision and the totals
//! do not depend on the number of workers.

pub mod output;
pub mod trace;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, PointRecord, StandardConstellation};
use crate::detector::{detect, DetectorKind};
use crate::error::{Error, Result};
use crate::impairment::GaussianTransmitNoise;
use crate::random::stream_rng;
use crate::simulation::{evm_to_nt, sample_realization, snr_to_n0, SystemConfig};

pub use output::{
    compare_to_se, emit_results, predict_ser_sweep, read_json, write_comparison_csv, write_csv,
    CampaignOutput, OutputFormat, PredictedPoint, SeComparison,
};
pub use trace::{trace_detector, write_trace_csv, TraceRow};

/// Fraction of diverged trials above which a point is flagged.
pub const FLAG_FRACTION: f64 = 0.01;

/// Serde helpers for dB values that may be `-inf`, which JSON cannot hold
/// as a number; it is written as the string `"-inf"`.
pub mod db_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else if *v < 0.0 {
            Repr::Text("-inf".into()).serialize(s)
        } else {
            Err(serde::ser::Error::custom(format!(
                "unsupported dB value {v}"
            )))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => parse(&t).map_err(serde::de::Error::custom),
        }
    }

    /// Accepts a number or `-inf` (case-insensitive).
    pub fn parse(t: &str) -> Result<f64, String> {
        let t = t.trim();
        if t.eq_ignore_ascii_case("-inf") || t.eq_ignore_ascii_case("-infinity") {
            return Ok(f64::NEG_INFINITY);
        }
        t.parse::<f64>()
            .map_err(|e| format!("invalid dB value '{t}': {e}"))
    }
}

fn default_min_errors() -> u64 {
    200
}

fn default_batch() -> usize {
    256
}

fn default_workers() -> usize {
    1
}

/// A built-in constellation (unit energy) or an explicit point list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstellationSpec {
    Named(StandardConstellation),
    Points(Vec<PointRecord>),
}

impl ConstellationSpec {
    pub fn build(&self) -> Result<Constellation> {
        match self {
            ConstellationSpec::Named(kind) => Ok(Constellation::standard(*kind, true)),
            ConstellationSpec::Points(records) => Constellation::from_records(records),
        }
    }
}

impl From<StandardConstellation> for ConstellationSpec {
    fn from(kind: StandardConstellation) -> Self {
        ConstellationSpec::Named(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mr: usize,
    pub mt: usize,
    pub constellation: ConstellationSpec,
    pub detectors: Vec<DetectorKind>,
    pub snr_start_db: f64,
    pub snr_stop_db: f64,
    pub snr_step_db: f64,
    #[serde(with = "db_serde")]
    pub evm_db: f64,
    pub tmax: usize,
    /// Trial cap per SNR point.
    pub trials: u64,
    /// A detector stops at a point once it has this many symbol errors.
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Trials per scheduling batch; part of the reproducibility contract.
    #[serde(default = "default_batch")]
    pub batch: usize,
}

impl CampaignConfig {
    /// 128x8 QPSK at EVM -10 dB with all detectors.
    pub fn desk_default() -> Self {
        CampaignConfig {
            mr: 128,
            mt: 8,
            constellation: ConstellationSpec::Named(StandardConstellation::Qpsk),
            detectors: DetectorKind::ALL.to_vec(),
            snr_start_db: 0.0,
            snr_stop_db: 20.0,
            snr_step_db: 2.0,
            evm_db: -10.0,
            tmax: 10,
            trials: 100_000,
            min_errors: default_min_errors(),
            seed: 1,
            workers: default_workers(),
            batch: default_batch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mr == 0 || self.mt == 0 {
            return Err(Error::Config("antenna counts must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if !(self.snr_step_db > 0.0) {
            return Err(Error::Config(format!(
                "SNR step must be > 0, got {}",
                self.snr_step_db
            )));
        }
        if !(self.snr_start_db.is_finite() && self.snr_stop_db.is_finite())
            || self.snr_stop_db < self.snr_start_db
        {
            return Err(Error::Config(
                "SNR range must be finite with stop >= start".into(),
            ));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config("no detector selected".into()));
        }
        if self.tmax == 0 {
            return Err(Error::Config("tmax must be >= 1".into()));
        }
        if self.workers == 0 || self.batch == 0 {
            return Err(Error::Config("workers and batch must be >= 1".into()));
        }
        if self.evm_db.is_nan() || self.evm_db == f64::INFINITY {
            return Err(Error::Config(format!("invalid EVM {}", self.evm_db)));
        }
        self.constellation()?;
        Ok(())
    }

    pub fn snr_points(&self) -> Vec<f64> {
        let n =
            ((self.snr_stop_db - self.snr_start_db) / self.snr_step_db + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| self.snr_start_db + i as f64 * self.snr_step_db)
            .collect()
    }

    pub fn beta(&self) -> f64 {
        self.mt as f64 / self.mr as f64
    }

    pub fn constellation(&self) -> Result<Constellation> {
        self.constellation.build()
    }

    pub fn n_t(&self) -> Result<f64> {
        Ok(evm_to_nt(self.evm_db, self.constellation()?.energy()))
    }

    /// System at one SNR point.
    pub fn system(&self, snr_db: f64) -> Result<SystemConfig> {
        let c = self.constellation()?;
        let n0 = snr_to_n0(snr_db, self.beta(), c.energy());
        let nt = evm_to_nt(self.evm_db, c.energy());
        SystemConfig::new(
            self.mr,
            self.mt,
            n0,
            c,
            GaussianTransmitNoise::new(nt)?,
            self.seed,
        )
    }
}

/// Aggregated outcome of one detector at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerRecord {
    pub detector: DetectorKind,
    pub snr_db: f64,
    #[serde(with = "db_serde")]
    pub evm_db: f64,
    pub trials: u64,
    pub symbols_per_trial: u64,
    pub errors: u64,
    /// Trials whose detector diverged; each counts as `symbols_per_trial` errors.
    pub failed_trials: u64,
    pub flagged: bool,
}

impl SerRecord {
    pub fn symbols(&self) -> u64 {
        self.trials * self.symbols_per_trial
    }

    pub fn ser(&self) -> f64 {
        if self.symbols() == 0 {
            return 0.0;
        }
        self.errors as f64 / self.symbols() as f64
    }

    /// Binomial standard error of [`SerRecord::ser`].
    pub fn stderr(&self) -> f64 {
        let n = self.symbols() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let p = self.ser();
        (p * (1.0 - p) / n).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    trials: u64,
    errors: u64,
    failed: u64,
    done: bool,
}

/// Outcome of one detector on one trial.
#[derive(Debug, Clone, Copy)]
enum TrialOutcome {
    Errors(u64),
    Failed,
}

/// Runs the campaign; records are ordered by SNR point, then detector.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<Vec<SerRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut records = Vec::new();
    for (point, snr_db) in cfg.snr_points().into_iter().enumerate() {
        let system = cfg.system(snr_db)?;
        let tallies = pool.install(|| run_point(cfg, &system, point as u64))?;
        for (kind, t) in cfg.detectors.iter().zip(tallies) {
            records.push(SerRecord {
                detector: *kind,
                snr_db,
                evm_db: cfg.evm_db,
                trials: t.trials,
                symbols_per_trial: cfg.mt as u64,
                errors: t.errors,
                failed_trials: t.failed,
                flagged: t.failed as f64 > FLAG_FRACTION * t.trials as f64,
            });
        }
    }
    Ok(records)
}

fn run_point(cfg: &CampaignConfig, system: &SystemConfig, point: u64) -> Result<Vec<Tally>> {
    let mut tallies = vec![Tally::default(); cfg.detectors.len()];
    let mut next_trial = 0u64;
    while next_trial < cfg.trials && tallies.iter().any(|t| !t.done) {
        let end = (next_trial + cfg.batch as u64).min(cfg.trials);
        let active: Vec<bool> = tallies.iter().map(|t| !t.done).collect();
        let outcomes: Vec<Vec<Option<TrialOutcome>>> = (next_trial..end)
            .into_par_iter()
            .map(|trial| run_trial(cfg, system, point, trial, &active))
            .collect::<Result<_>>()?;
        for per_trial in outcomes {
            for (t, outcome) in tallies.iter_mut().zip(per_trial) {
                let Some(outcome) = outcome else { continue };
                if t.done {
                    continue;
                }
                t.trials += 1;
                match outcome {
                    TrialOutcome::Errors(e) => t.errors += e,
                    TrialOutcome::Failed => {
                        t.failed += 1;
                        t.errors += cfg.mt as u64;
                    }
                }
                if t.errors >= cfg.min_errors {
                    t.done = true;
                }
            }
        }
        next_trial = end;
    }
    Ok(tallies)
}

fn run_trial(
    cfg: &CampaignConfig,
    system: &SystemConfig,
    point: u64,
    trial: u64,
    active: &[bool],
) -> Result<Vec<Option<TrialOutcome>>> {
    let mut rng = stream_rng(cfg.seed, point, trial);
    let r = sample_realization(system, &mut rng);
    cfg.detectors
        .iter()
        .zip(active)
        .map(|(&kind, &on)| {
            if !on {
                return Ok(None);
            }
            match detect(kind, &r.y, &r.h, system, cfg.tmax) {
                Ok(out) => Ok(Some(TrialOutcome::Errors(
                    out.symbol_errors(&r.s_index) as u64
                ))),
                Err(Error::Divergence { .. }) | Err(Error::Whitening(_)) => {
                    Ok(Some(TrialOutcome::Failed))
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}
