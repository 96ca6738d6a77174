use crate::error::{Error, Result};

/// Row-major dense matrix of reals, used for logits and their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("logit rows must be non-empty and of equal width".into()));
        }
        Ok(Grid { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Shannon entropy in nats from log-probabilities.
pub fn entropy_from_log_probs(logp: &[f64]) -> f64 {
    -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>()
}

/// Factored categorical policy: each row of `logits` is an independent
/// softmax over `cols` choices. `reference` is a frozen copy used by the KL
/// penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    pub logits: Grid,
    pub reference: Grid,
}

impl ToyPolicy {
    /// Policy whose reference is a frozen copy of its initial logits.
    pub fn new(logits: Grid) -> Result<Self> {
        if logits.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("policy logits"));
        }
        Ok(ToyPolicy { reference: logits.clone(), logits })
    }

    pub fn with_reference(logits: Grid, reference: Grid) -> Result<Self> {
        if logits.rows() != reference.rows() || logits.cols() != reference.cols() {
            return Err(Error::InvalidArgument("reference logits must match policy shape".into()));
        }
        if logits.as_slice().iter().chain(reference.as_slice()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("policy logits"));
        }
        Ok(ToyPolicy { logits, reference })
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        ToyPolicy::new(Grid::zeros(rows, cols)).expect("zeros are finite")
    }

    pub fn rows(&self) -> usize {
        self.logits.rows()
    }

    pub fn cols(&self) -> usize {
        self.logits.cols()
    }

    pub fn probs(&self, row: usize) -> Vec<f64> {
        softmax(self.logits.row(row))
    }

    pub fn log_probs(&self, row: usize) -> Vec<f64> {
        log_softmax(self.logits.row(row))
    }

    pub fn row_entropy(&self, row: usize) -> f64 {
        entropy_from_log_probs(&self.log_probs(row))
    }

    /// Closed-form `KL(pi(.|row) || ref(.|row))` in nats.
    pub fn row_kl(&self, row: usize) -> f64 {
        let lp = self.log_probs(row);
        let lq = log_softmax(self.reference.row(row));
        lp.iter().zip(&lq).map(|(p, q)| p.exp() * (p - q)).sum()
    }
}
