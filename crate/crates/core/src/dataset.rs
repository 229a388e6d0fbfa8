use rand::seq::SliceRandom;

use crate::autodiff::Tensor;
use crate::error::{contract, Result};
use crate::nn::rng_from_seed;

/// Features with integer labels (`0/1` for binary tasks) and, for synthetic
/// data, the generator's true event probability and latent draws.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// `n × d`.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub oracle_risk: Option<Vec<f64>>,
    /// Generator latent `z`, `n × p`, kept for diagnostics only.
    pub latent: Option<Tensor>,
}

impl LabeledDataset {
    pub fn new(features: Tensor, labels: Vec<usize>, oracle_risk: Option<Vec<f64>>) -> Result<Self> {
        if features.rank() != 2 || features.rows() != labels.len() {
            return contract(format!(
                "features {:?} disagree with {} labels",
                features.shape(),
                labels.len()
            ));
        }
        if !features.all_finite() {
            return contract("features contain non-finite values");
        }
        if let Some(r) = &oracle_risk {
            if r.len() != labels.len() || r.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return contract("oracle risk must lie in (0, 1), one value per row");
            }
        }
        Ok(LabeledDataset { features, labels, oracle_risk, latent: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1).max(2)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Fraction of rows with label 1.
    pub fn event_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.len() as f64
    }

    /// Labels as a `n × 1` float column.
    pub fn label_column(&self) -> Tensor {
        Tensor::column(&self.labels.iter().map(|&l| l as f64).collect::<Vec<_>>())
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(self.features.row_slice(i));
        }
        let latent = self.latent.as_ref().map(|z| {
            let p = z.cols();
            let mut v = Vec::with_capacity(idx.len() * p);
            for &i in idx {
                v.extend_from_slice(z.row_slice(i));
            }
            Tensor::new(vec![idx.len(), p], v).expect("latent rows")
        });
        LabeledDataset {
            features: Tensor::new(vec![idx.len(), d], data).expect("feature rows"),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            oracle_risk: self.oracle_risk.as_ref().map(|r| idx.iter().map(|&i| r[i]).collect()),
            latent,
        }
    }

    /// Random train/validation/test split with proportions `6:2:2` within
    /// every class, so each split keeps the overall class rates. Rounding
    /// leftovers go to the test split.
    pub fn split_622(&self, seed: u64) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
        if self.len() < 5 {
            return contract("need at least five rows to split 6:2:2");
        }
        let mut rng = rng_from_seed(seed);
        let mut parts: [Vec<usize>; 3] = Default::default();
        for c in 0..self.num_classes() {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            members.shuffle(&mut rng);
            let n_train = members.len() * 6 / 10;
            let n_valid = members.len() * 2 / 10;
            parts[0].extend_from_slice(&members[..n_train]);
            parts[1].extend_from_slice(&members[n_train..n_train + n_valid]);
            parts[2].extend_from_slice(&members[n_train + n_valid..]);
        }
        for part in &mut parts {
            part.shuffle(&mut rng);
        }
        Ok((self.subset(&parts[0]), self.subset(&parts[1]), self.subset(&parts[2])))
    }
}

/// Per-column standardization fitted on a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row_slice(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row_slice(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n.max(1) as f64).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn identity(d: usize) -> Self {
        Standardizer { mean: vec![0.0; d], std: vec![1.0; d] }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if x.rank() != 2 || x.cols() != d {
            return contract(format!("expected {d} feature columns, got {:?}", x.shape()));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}
