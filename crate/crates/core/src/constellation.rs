//! Finite symbol alphabets with prior probabilities.
//!
//! Every constellation carries an explicit prior vector, even when the
//! priors are uniform, so the prior-weighted denoiser formulas never need a
//! uniform special case.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIOR_SUM_TOL: f64 = 1e-12;

/// Names of the built-in constellations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StandardConstellation {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8-PSK")]
    Psk8,
    #[serde(rename = "16-QAM")]
    Qam16,
    #[serde(rename = "64-QAM")]
    Qam64,
}

impl StandardConstellation {
    pub const ALL: [StandardConstellation; 5] = [
        StandardConstellation::Bpsk,
        StandardConstellation::Qpsk,
        StandardConstellation::Psk8,
        StandardConstellation::Qam16,
        StandardConstellation::Qam64,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StandardConstellation::Bpsk => "BPSK",
            StandardConstellation::Qpsk => "QPSK",
            StandardConstellation::Psk8 => "8-PSK",
            StandardConstellation::Qam16 => "16-QAM",
            StandardConstellation::Qam64 => "64-QAM",
        }
    }
}

impl fmt::Display for StandardConstellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StandardConstellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_uppercase();
        match key.as_str() {
            "BPSK" => Ok(StandardConstellation::Bpsk),
            "QPSK" | "4QAM" => Ok(StandardConstellation::Qpsk),
            "8PSK" | "PSK8" => Ok(StandardConstellation::Psk8),
            "16QAM" | "QAM16" => Ok(StandardConstellation::Qam16),
            "64QAM" | "QAM64" => Ok(StandardConstellation::Qam64),
            _ => Err(Error::Config(format!("unknown constellation '{s}'"))),
        }
    }
}

/// One record of a custom constellation file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub re: f64,
    pub im: f64,
    pub prior: f64,
}

/// A finite symbol set `O` with priors `p_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    priors: Vec<f64>,
    /// Gray label of each point, when the constellation has one.
    labels: Option<Vec<u32>>,
}

impl Constellation {
    /// Builds a constellation after checking the prior simplex, point
    /// distinctness and a finite positive energy.
    pub fn new(points: Vec<Complex64>, priors: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("constellation has no points".into()));
        }
        if points.len() != priors.len() {
            return Err(Error::Config(format!(
                "{} points but {} priors",
                points.len(),
                priors.len()
            )));
        }
        if priors.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(
                "priors must be finite and non-negative".into(),
            ));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(Error::Config(format!("priors sum to {total}, not 1")));
        }
        if points
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(Error::Config("constellation point is not finite".into()));
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if points[i] == points[j] {
                    return Err(Error::Config(format!(
                        "points {i} and {j} coincide at {}",
                        points[i]
                    )));
                }
            }
        }
        let c = Constellation {
            points,
            priors,
            labels: None,
        };
        let es = c.energy();
        if !(es.is_finite() && es > 0.0) {
            return Err(Error::Config(format!(
                "constellation energy {es} must be > 0"
            )));
        }
        Ok(c)
    }

    /// Uniform priors over `points`.
    pub fn uniform(points: Vec<Complex64>) -> Result<Self> {
        let p = 1.0 / points.len().max(1) as f64;
        let priors = vec![p; points.len()];
        Self::new(points, priors)
    }

    /// Built-in constellation with uniform priors, optionally scaled to unit energy.
    pub fn standard(kind: StandardConstellation, normalize: bool) -> Self {
        let (points, labels) = match kind {
            StandardConstellation::Bpsk => (
                vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
                vec![0, 1],
            ),
            StandardConstellation::Qpsk => square_qam(2),
            StandardConstellation::Qam16 => square_qam(4),
            StandardConstellation::Qam64 => square_qam(8),
            StandardConstellation::Psk8 => {
                let labels: Vec<u32> = (0..8u32).map(gray).collect();
                let points = (0..8)
                    .map(|k| Complex64::from_polar(1.0, PI / 8.0 + 2.0 * PI * k as f64 / 8.0))
                    .collect();
                (points, labels)
            }
        };
        let mut c = Self::uniform(points).expect("built-in constellation is valid");
        if normalize {
            let scale = c.energy().sqrt().recip();
            for a in &mut c.points {
                *a *= scale;
            }
        }
        c.labels = Some(labels);
        c
    }

    /// Looks up a built-in constellation by name.
    pub fn by_name(name: &str, normalize: bool) -> Result<Self> {
        Ok(Self::standard(name.parse()?, normalize))
    }

    pub fn from_records(records: &[PointRecord]) -> Result<Self> {
        let points = records.iter().map(|r| Complex64::new(r.re, r.im)).collect();
        let priors = records.iter().map(|r| r.prior).collect();
        Self::new(points, priors)
    }

    /// Parses a JSON list of `{re, im, prior}` records.
    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<PointRecord> = serde_json::from_str(text)?;
        Self::from_records(&records)
    }

    pub fn to_records(&self) -> Vec<PointRecord> {
        self.points
            .iter()
            .zip(&self.priors)
            .map(|(a, &prior)| PointRecord {
                re: a.re,
                im: a.im,
                prior,
            })
            .collect()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn is_uniform(&self) -> bool {
        let p = self.priors[0];
        self.priors.iter().all(|&q| q == p)
    }

    /// `Es = sum_a p_a |a|^2`.
    pub fn energy(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.priors)
            .map(|(a, p)| p * a.norm_sqr())
            .sum()
    }

    /// Mean and variance of a symbol drawn from the prior.
    pub fn moments(&self) -> (Complex64, f64) {
        let mean: Complex64 = self
            .points
            .iter()
            .zip(&self.priors)
            .map(|(a, p)| a * p)
            .sum();
        let var = (self.energy() - mean.norm_sqr()).max(0.0);
        (mean, var)
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn hard_decision_index(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            let d = (z - a).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn hard_decision(&self, z: Complex64) -> Complex64 {
        self.points[self.hard_decision_index(z)]
    }

    /// Half of the minimum distance between two points.
    pub fn half_min_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                d = d.min((self.points[i] - self.points[j]).norm());
            }
        }
        0.5 * d
    }

    /// Recognizes uniform, zero-mean QPSK laid out on the axes grid
    /// `(+-d +- jd)`, which has a closed-form symbol error rate.
    pub(crate) fn is_axis_qpsk(&self) -> bool {
        if self.len() != 4 || !self.is_uniform() {
            return false;
        }
        let d = self.points[0].re.abs();
        d > 0.0
            && self
                .points
                .iter()
                .all(|a| (a.re.abs() - d).abs() <= 1e-12 * d && (a.im.abs() - d).abs() <= 1e-12 * d)
            && self.moments().0.norm() <= 1e-12 * d
    }

    /// Uniform antipodal pair `{+a, -a}`.
    pub(crate) fn is_antipodal(&self) -> bool {
        self.len() == 2 && self.is_uniform() && (self.points[0] + self.points[1]).norm() <= 1e-12
    }
}

fn gray(n: u32) -> u32 {
    n ^ (n >> 1)
}

/// Square QAM on the odd-integer grid with per-axis Gray labels.
fn square_qam(side: u32) -> (Vec<Complex64>, Vec<u32>) {
    let bits = side.trailing_zeros();
    let mut points = Vec::with_capacity((side * side) as usize);
    let mut labels = Vec::with_capacity((side * side) as usize);
    let level = |k: u32| 2.0 * k as f64 - (side as f64 - 1.0);
    for i in 0..side {
        for q in 0..side {
            points.push(Complex64::new(level(i), level(q)));
            labels.push((gray(i) << bits) | gray(q));
        }
    }
    (points, labels)
}
