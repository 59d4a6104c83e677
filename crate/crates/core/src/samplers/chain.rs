use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    GibbsUnconditional,
    GibbsConditional,
    GibbsSimultaneous,
    Metropolis,
}

impl SamplerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::GibbsUnconditional => "gibbs-unconditional",
            SamplerKind::GibbsConditional => "gibbs-conditional",
            SamplerKind::GibbsSimultaneous => "gibbs-simultaneous",
            SamplerKind::Metropolis => "metropolis",
        }
    }
}

/// Draws of a single MCMC run, burn-in rows included.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    draws: DMatrix<f64>,
    names: Vec<String>,
    burn_in: usize,
    seed: u64,
    sampler: SamplerKind,
    acceptance_rate: f64,
}

/// Everything but the draws, for the JSON sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainMeta {
    pub sampler: SamplerKind,
    pub seed: u64,
    pub burn_in: usize,
    pub n_draws: usize,
    pub acceptance_rate: f64,
    pub parameters: Vec<String>,
}

impl Chain {
    pub fn new(
        draws: DMatrix<f64>,
        names: Vec<String>,
        burn_in: usize,
        seed: u64,
        sampler: SamplerKind,
        acceptance_rate: f64,
    ) -> Result<Self> {
        if draws.nrows() <= burn_in {
            return Err(Error::Shape(format!(
                "chain has {} draws, burn-in {burn_in} leaves none",
                draws.nrows()
            )));
        }
        if names.len() != draws.ncols() {
            return Err(Error::Shape("parameter names do not match draw width".into()));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("chain contains non-finite draws".into()));
        }
        if !(0.0..=1.0).contains(&acceptance_rate) {
            return Err(Error::Domain(format!("acceptance rate {acceptance_rate} outside [0, 1]")));
        }
        Ok(Self { draws, names, burn_in, seed, sampler, acceptance_rate })
    }

    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }

    /// Rows after burn-in.
    pub fn kept(&self) -> DMatrix<f64> {
        self.draws.rows(self.burn_in, self.draws.nrows() - self.burn_in).into_owned()
    }

    pub fn n_kept(&self) -> usize {
        self.draws.nrows() - self.burn_in
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    /// Columns `start..start + len` as a chain of their own.
    pub fn sub_chain(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.dim() || len == 0 {
            return Err(Error::Shape(format!("columns {start}+{len} outside chain of width {}", self.dim())));
        }
        Ok(Self {
            draws: self.draws.columns(start, len).into_owned(),
            names: self.names[start..start + len].to_vec(),
            ..self.clone()
        })
    }

    pub fn meta(&self) -> ChainMeta {
        ChainMeta {
            sampler: self.sampler,
            seed: self.seed,
            burn_in: self.burn_in,
            n_draws: self.draws.nrows(),
            acceptance_rate: self.acceptance_rate,
            parameters: self.names.clone(),
        }
    }

    /// One draw per row with a header of parameter names. Burn-in rows are
    /// included; the sidecar records how many. Values use the shortest
    /// representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.names.join(","));
        out.push('\n');
        for i in 0..self.draws.nrows() {
            for j in 0..self.draws.ncols() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.draws[(i, j)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, meta: &ChainMeta) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Shape("empty chain file".into()))?;
        let names: Vec<String> = header.split(',').map(str::to_owned).collect();
        let mut values = Vec::new();
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
            let row = row.map_err(|e| Error::Shape(format!("chain row {}: {e}", i + 2)))?;
            if row.len() != names.len() {
                return Err(Error::Shape(format!("chain row {} has {} fields", i + 2, row.len())));
            }
            values.extend(row);
            rows += 1;
        }
        let draws = DMatrix::from_row_slice(rows, names.len(), &values);
        Self::new(draws, names, meta.burn_in, meta.seed, meta.sampler, meta.acceptance_rate)
    }
}
