//! Network description: servers, arrival streams, admissible sets, routing
//! weights and nominal rates.
//!
//! The on-disk format is TOML with 1-based server and stream indices:
//!
//! ```toml
//! servers = 2
//! streams = 1
//! lambda = [3.0]
//! mu = [1.0, 1.0]
//! admissible = [[1, 2]]
//!
//! [[weight]]
//! server = 2
//! stream = 1
//! value = "3/2"
//! ```
//!
//! `admissible[m]` lists the servers stream `m` may join. A `[[weight]]`
//! entry sets `w_km`; pairs without an entry get weight 1. A weight for a
//! pair outside the admissible set is rejected.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("need at least one server and one stream")]
    Empty,
    #[error("expected {expected} entries in `{field}`, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty admissible set for stream {stream}")]
    EmptyAdmissibleSet { stream: usize },
    #[error("server {server} out of range in admissible set of stream {stream}")]
    ServerOutOfRange { stream: usize, server: usize },
    #[error("server {server} listed twice in admissible set of stream {stream}")]
    DuplicateServer { stream: usize, server: usize },
    #[error("weight given for server {server}, stream {stream}, which is not admissible")]
    WeightOutsideAdmissible { server: usize, stream: usize },
    #[error("weight for server {server}, stream {stream} given twice")]
    DuplicateWeight { server: usize, stream: usize },
    #[error("nonpositive weight for server {server}, stream {stream}")]
    NonPositiveWeight { server: usize, stream: usize },
    #[error("invalid weight `{0}`")]
    BadWeight(String),
    #[error("nonpositive service rate for server {server}")]
    NonPositiveServiceRate { server: usize },
    #[error("negative or non-finite arrival rate for stream {stream}")]
    BadArrivalRate { stream: usize },
    #[error("non-finite service rate for server {server}")]
    NonFiniteServiceRate { server: usize },
    #[error("malformed topology file: {0}")]
    Parse(String),
}

/// A positive rational routing weight.
///
/// Weights are kept as reduced fractions so that the simulator can compare
/// weighted queue lengths `Q_k / w_km` exactly by cross-multiplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Weight {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Weight {
    pub const ONE: Weight = Weight { num: 1, den: 1 };

    /// Numerator and denominator are limited to 32 bits so that the exact
    /// comparisons in the simulator fit into `u128`.
    pub fn new(num: u64, den: u64) -> Result<Self, TopologyError> {
        if num == 0 || den == 0 {
            return Err(TopologyError::BadWeight(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        if num > u32::MAX as u64 || den > u32::MAX as u64 {
            return Err(TopologyError::BadWeight(format!("{num}/{den}")));
        }
        Ok(Weight { num, den })
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Exact comparison of `qa / wa` against `qb / wb`.
    pub fn cmp_weighted(qa: u64, wa: Weight, qb: u64, wb: Weight) -> Ordering {
        let lhs = qa as u128 * wa.den as u128 * wb.num as u128;
        let rhs = qb as u128 * wb.den as u128 * wa.num as u128;
        lhs.cmp(&rhs)
    }

    /// Converts a finite positive float through its shortest decimal
    /// representation, so `0.1` becomes `1/10` rather than a dyadic fraction.
    pub fn from_f64(v: f64) -> Result<Self, TopologyError> {
        if !v.is_finite() || v <= 0.0 {
            return Err(TopologyError::BadWeight(v.to_string()));
        }
        format!("{v}").parse()
    }
}

impl FromStr for Weight {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TopologyError::BadWeight(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            return Weight::new(n, d);
        }
        let (mantissa, exp) = match s.split_once(['e', 'E']) {
            Some((m, e)) => (m, e.parse::<i32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let mut num: u128 = digits.parse().map_err(|_| bad())?;
        let mut den: u128 = 1;
        let scale = exp - frac_part.len() as i32;
        for _ in 0..scale.unsigned_abs() {
            if scale > 0 {
                num = num.checked_mul(10).ok_or_else(bad)?;
            } else {
                den = den.checked_mul(10).ok_or_else(bad)?;
            }
        }
        if num == 0 {
            return Err(bad());
        }
        let g = {
            let (mut a, mut b) = (num, den);
            while b != 0 {
                let t = a % b;
                a = b;
                b = t;
            }
            a
        };
        let (num, den) = (num / g, den / g);
        if num > u32::MAX as u128 || den > u32::MAX as u128 {
            return Err(bad());
        }
        Weight::new(num as u64, den as u64)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Raw form of a weight value in the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightValue {
    Int(u64),
    Float(f64),
    Text(String),
}

impl WeightValue {
    fn to_weight(&self) -> Result<Weight, TopologyError> {
        match self {
            WeightValue::Int(n) => Weight::new(*n, 1),
            WeightValue::Float(v) => Weight::from_f64(*v),
            WeightValue::Text(s) => s.parse(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub server: usize,
    pub stream: usize,
    pub value: WeightValue,
}

/// Unvalidated topology as read from a file (1-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub servers: usize,
    pub streams: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub admissible: Vec<Vec<usize>>,
    #[serde(default, rename = "weight", skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<WeightEntry>,
}

impl TopologyConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, TopologyError> {
        toml::from_str(s).map_err(|e| TopologyError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("topology config serializes")
    }

    pub fn validate(&self) -> Result<Topology, TopologyError> {
        Topology::validate(self)
    }
}

/// A validated network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    admissible: Vec<Vec<usize>>,
    incidence: Vec<Vec<usize>>,
    weights: Vec<Vec<Option<Weight>>>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl Topology {
    pub fn validate(raw: &TopologyConfig) -> Result<Self, TopologyError> {
        let (k_count, m_count) = (raw.servers, raw.streams);
        if k_count == 0 || m_count == 0 {
            return Err(TopologyError::Empty);
        }
        let check_len = |field, found, expected| {
            if found != expected {
                Err(TopologyError::DimensionMismatch {
                    field,
                    expected,
                    found,
                })
            } else {
                Ok(())
            }
        };
        check_len("lambda", raw.lambda.len(), m_count)?;
        check_len("mu", raw.mu.len(), k_count)?;
        check_len("admissible", raw.admissible.len(), m_count)?;

        for (m, &l) in raw.lambda.iter().enumerate() {
            if !l.is_finite() || l < 0.0 {
                return Err(TopologyError::BadArrivalRate { stream: m + 1 });
            }
        }
        for (k, &u) in raw.mu.iter().enumerate() {
            if !u.is_finite() {
                return Err(TopologyError::NonFiniteServiceRate { server: k + 1 });
            }
            if u <= 0.0 {
                return Err(TopologyError::NonPositiveServiceRate { server: k + 1 });
            }
        }

        let mut admissible = Vec::with_capacity(m_count);
        let mut weights = vec![vec![None; m_count]; k_count];
        for (m, set) in raw.admissible.iter().enumerate() {
            if set.is_empty() {
                return Err(TopologyError::EmptyAdmissibleSet { stream: m + 1 });
            }
            let mut servers = Vec::with_capacity(set.len());
            for &server in set {
                if server == 0 || server > k_count {
                    return Err(TopologyError::ServerOutOfRange {
                        stream: m + 1,
                        server,
                    });
                }
                if servers.contains(&(server - 1)) {
                    return Err(TopologyError::DuplicateServer {
                        stream: m + 1,
                        server,
                    });
                }
                servers.push(server - 1);
                weights[server - 1][m] = Some(Weight::ONE);
            }
            servers.sort_unstable();
            admissible.push(servers);
        }

        let mut seen = vec![vec![false; m_count]; k_count];
        for entry in &raw.weights {
            let (server, stream) = (entry.server, entry.stream);
            let in_range = (1..=k_count).contains(&server) && (1..=m_count).contains(&stream);
            if !in_range || !admissible[stream - 1].contains(&(server - 1)) {
                return Err(TopologyError::WeightOutsideAdmissible { server, stream });
            }
            if seen[server - 1][stream - 1] {
                return Err(TopologyError::DuplicateWeight { server, stream });
            }
            seen[server - 1][stream - 1] = true;
            let w = match &entry.value {
                WeightValue::Float(v) if *v <= 0.0 => {
                    return Err(TopologyError::NonPositiveWeight { server, stream })
                }
                WeightValue::Int(0) => {
                    return Err(TopologyError::NonPositiveWeight { server, stream })
                }
                WeightValue::Text(s) if s.trim().starts_with('-') || s.trim() == "0" => {
                    return Err(TopologyError::NonPositiveWeight { server, stream })
                }
                v => v.to_weight()?,
            };
            weights[server - 1][stream - 1] = Some(w);
        }

        let mut incidence = vec![Vec::new(); k_count];
        for (m, set) in admissible.iter().enumerate() {
            for &k in set {
                incidence[k].push(m);
            }
        }

        Ok(Topology {
            admissible,
            incidence,
            weights,
            lambda: raw.lambda.clone(),
            mu: raw.mu.clone(),
        })
    }

    pub fn from_toml_str(s: &str) -> Result<Self, TopologyError> {
        TopologyConfig::from_toml_str(s)?.validate()
    }

    /// Builds a topology where every admissible pair has weight 1. Indices
    /// are 0-based here, unlike the file format.
    pub fn unit_weights(
        admissible: Vec<Vec<usize>>,
        lambda: Vec<f64>,
        mu: Vec<f64>,
    ) -> Result<Self, TopologyError> {
        TopologyConfig {
            servers: mu.len(),
            streams: lambda.len(),
            lambda,
            mu,
            admissible: admissible
                .into_iter()
                .map(|s| s.into_iter().map(|k| k + 1).collect())
                .collect(),
            weights: Vec::new(),
        }
        .validate()
    }

    /// Returns a copy with different nominal rates, keeping the routing.
    pub fn with_rates(&self, lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self, TopologyError> {
        let mut cfg = self.to_config();
        cfg.lambda = lambda;
        cfg.mu = mu;
        cfg.validate()
    }

    /// External (1-based) form with every weight spelled out.
    pub fn to_config(&self) -> TopologyConfig {
        let mut weights = Vec::new();
        for (m, set) in self.admissible.iter().enumerate() {
            for &k in set {
                let w = self.weights[k][m].expect("admissible pair has a weight");
                let value = if w.denom() == 1 {
                    WeightValue::Int(w.numer())
                } else {
                    WeightValue::Text(w.to_string())
                };
                weights.push(WeightEntry {
                    server: k + 1,
                    stream: m + 1,
                    value,
                });
            }
        }
        TopologyConfig {
            servers: self.num_servers(),
            streams: self.num_streams(),
            lambda: self.lambda.clone(),
            mu: self.mu.clone(),
            admissible: self
                .admissible
                .iter()
                .map(|s| s.iter().map(|k| k + 1).collect())
                .collect(),
            weights,
        }
    }

    pub fn num_servers(&self) -> usize {
        self.mu.len()
    }

    pub fn num_streams(&self) -> usize {
        self.lambda.len()
    }

    /// `S_m`, sorted ascending.
    pub fn admissible(&self, m: usize) -> &[usize] {
        &self.admissible[m]
    }

    /// `C_k`: the streams that may join server `k`, sorted ascending.
    pub fn incidence(&self, k: usize) -> &[usize] {
        &self.incidence[k]
    }

    pub fn is_admissible(&self, k: usize, m: usize) -> bool {
        self.weights[k][m].is_some()
    }

    pub fn weight(&self, k: usize, m: usize) -> Option<Weight> {
        self.weights[k][m]
    }

    /// Weight as a float; panics for a non-admissible pair.
    pub fn w(&self, k: usize, m: usize) -> f64 {
        self.weights[k][m]
            .unwrap_or_else(|| panic!("server {k} not admissible for stream {m}"))
            .value()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
}
