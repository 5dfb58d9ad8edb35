//! CSV and JSON emission of campaign results and the comparison against
//! the state-evolution prediction.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CampaignConfig, SerRecord};
use crate::detector::DetectorKind;
use crate::error::{Error, Result};
use crate::state_evolution::{predicted_ser, solve_fixed_point, Psi, PsiSpec};

/// Column order of the SER table.
pub const SER_COLUMNS: [&str; 7] = [
    "detector", "snr_db", "evm_db", "trials", "errors", "ser", "stderr",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown output format '{s}'"))),
        }
    }
}

/// Records plus the configuration (and so the seed) that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignOutput {
    pub config: CampaignConfig,
    pub records: Vec<SerRecord>,
}

pub fn write_csv<W: Write>(records: &[SerRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SER_COLUMNS)?;
    for r in records {
        out.write_record([
            r.detector.id().to_string(),
            r.snr_db.to_string(),
            r.evm_db.to_string(),
            r.trials.to_string(),
            r.errors.to_string(),
            r.ser().to_string(),
            r.stderr().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_results(output: &CampaignOutput, format: OutputFormat, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        OutputFormat::Csv => write_csv(&output.records, file),
        OutputFormat::Json => {
            serde_json::to_writer_pretty(file, output)?;
            Ok(())
        }
    }
}

pub fn read_json(path: &Path) -> Result<CampaignOutput> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// SE prediction at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPoint {
    pub snr_db: f64,
    pub n0: f64,
    pub fixed_point: f64,
    pub ser: f64,
}

/// Fixed point and predicted SER over an SNR sweep for one campaign setup.
pub fn predict_ser_sweep(
    cfg: &CampaignConfig,
    snrs: &[f64],
    psi_samples: usize,
    seed: u64,
) -> Result<Vec<PredictedPoint>> {
    let c = cfg.constellation()?;
    let nt = cfg.n_t()?;
    let psi = Psi::new(&PsiSpec::auto(c.clone(), nt, psi_samples, seed))?;
    snrs.iter()
        .map(|&snr_db| {
            let n0 = cfg.system(snr_db)?.n0;
            let fixed_point = solve_fixed_point(&psi, cfg.beta(), n0)?;
            Ok(PredictedPoint {
                snr_db,
                n0,
                fixed_point,
                ser: predicted_ser(&c, nt, fixed_point, seed),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeComparison {
    pub detector: DetectorKind,
    pub snr_db: f64,
    pub ser_mc: f64,
    pub stderr: f64,
    pub ser_predicted: f64,
    /// `(mc - predicted) / predicted`.
    pub rel_deviation: f64,
}

/// Pairs every record with the SE prediction at its SNR.
pub fn compare_to_se(
    cfg: &CampaignConfig,
    records: &[SerRecord],
    psi_samples: usize,
    seed: u64,
) -> Result<Vec<SeComparison>> {
    let snrs = cfg.snr_points();
    let predicted = predict_ser_sweep(cfg, &snrs, psi_samples, seed)?;
    records
        .iter()
        .map(|r| {
            let p = predicted
                .iter()
                .find(|p| p.snr_db == r.snr_db)
                .ok_or_else(|| Error::Config(format!("no prediction at {} dB", r.snr_db)))?;
            Ok(SeComparison {
                detector: r.detector,
                snr_db: r.snr_db,
                ser_mc: r.ser(),
                stderr: r.stderr(),
                ser_predicted: p.ser,
                rel_deviation: (r.ser() - p.ser) / p.ser,
            })
        })
        .collect()
}

pub fn write_comparison_csv<W: Write>(rows: &[SeComparison], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "detector",
        "snr_db",
        "ser_mc",
        "stderr",
        "ser_predicted",
        "rel_deviation",
    ])?;
    for r in rows {
        out.write_record([
            r.detector.id().to_string(),
            r.snr_db.to_string(),
            r.ser_mc.to_string(),
            r.stderr.to_string(),
            r.ser_predicted.to_string(),
            r.rel_deviation.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run_campaign;

    fn record(detector: DetectorKind, snr_db: f64) -> SerRecord {
        SerRecord {
            detector,
            snr_db,
            evm_db: f64::NEG_INFINITY,
            trials: 10,
            symbols_per_trial: 8,
            errors: 3,
            failed_trials: 0,
            flagged: false,
        }
    }

    #[test]
    fn empty_records_give_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "detector,snr_db,evm_db,trials,errors,ser,stderr\n"
        );
    }

    #[test]
    fn csv_rows_follow_records() {
        let mut buf = Vec::new();
        let recs = [
            record(DetectorKind::LamaI, 2.0),
            record(DetectorKind::Lama, 2.0),
        ];
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("lama-i,2,-inf,10,3,0.0375,"));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let cfg = CampaignConfig {
            mr: 8,
            mt: 2,
            snr_start_db: 0.0,
            snr_stop_db: 3.0,
            snr_step_db: 1.5,
            trials: 40,
            batch: 16,
            ..CampaignConfig::desk_default()
        };
        let out = CampaignOutput {
            records: run_campaign(&cfg).unwrap(),
            config: cfg,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        emit_results(&out, OutputFormat::Json, &path).unwrap();
        assert_eq!(read_json(&path).unwrap(), out);

        let csv_path = dir.path().join("run.csv");
        emit_results(&out, OutputFormat::Csv, &csv_path).unwrap();
        let rows = std::fs::read_to_string(&csv_path).unwrap().lines().count() - 1;
        assert_eq!(
            rows,
            out.config.detectors.len() * out.config.snr_points().len()
        );
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let out = CampaignOutput {
            config: CampaignConfig::desk_default(),
            records: vec![],
        };
        let err =
            emit_results(&out, OutputFormat::Csv, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
