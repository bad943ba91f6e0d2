//! Reasoning parameters.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ReasoningError;

pub const DEFAULT_BETA: f64 = 50.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma {
    #[default]
    Identity,
    Relu,
}

impl Sigma {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Sigma::Identity => x,
            Sigma::Relu => x.max(0.0),
        }
    }
}

/// W_s, W^0..W^L, W_r, W_e, σ and the two softmax temperatures.
///
/// A `None` projection stands for the identity and skips the product.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBundle {
    pub dim: usize,
    pub w_s: DVector<f64>,
    pub w_prop: Vec<Option<DMatrix<f64>>>,
    pub w_r: DVector<f64>,
    pub w_e: Option<DMatrix<f64>>,
    pub sigma: Sigma,
    pub beta_merge: f64,
    pub beta_transfer: f64,
}

impl WeightBundle {
    /// All-ones W_s and W_r, identity projections, σ = identity, β = 50:
    /// property scores become r·s^j and transfers r·e'.
    pub fn symbolic_default(dim: usize, slots: usize) -> Self {
        WeightBundle {
            dim,
            w_s: DVector::from_element(dim, 1.0),
            w_prop: vec![None; slots],
            w_r: DVector::from_element(dim, 1.0),
            w_e: None,
            sigma: Sigma::Identity,
            beta_merge: DEFAULT_BETA,
            beta_transfer: DEFAULT_BETA,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta_merge = beta;
        self.beta_transfer = beta;
        self
    }

    pub fn slots(&self) -> usize {
        self.w_prop.len()
    }

    pub fn validate(&self) -> Result<(), ReasoningError> {
        let bad = |m: String| Err(ReasoningError::InvalidWeights(m));
        if !(self.beta_merge > 0.0 && self.beta_merge.is_finite()) {
            return bad(format!("beta_merge must be positive, got {}", self.beta_merge));
        }
        if !(self.beta_transfer > 0.0 && self.beta_transfer.is_finite()) {
            return bad(format!("beta_transfer must be positive, got {}", self.beta_transfer));
        }
        for (name, v) in [("W_s", &self.w_s), ("W_r", &self.w_r)] {
            if v.len() != self.dim {
                return bad(format!("{name} has length {}, expected {}", v.len(), self.dim));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} is not finite"));
            }
        }
        let matrices = self
            .w_prop
            .iter()
            .enumerate()
            .map(|(j, m)| (format!("W_prop[{j}]"), m))
            .chain(std::iter::once(("W_e".to_string(), &self.w_e)));
        for (name, m) in matrices {
            if let Some(m) = m {
                if m.nrows() != self.dim || m.ncols() != self.dim {
                    return bad(format!("{name} is {}x{}, expected {d}x{d}", m.nrows(), m.ncols(), d = self.dim));
                }
                if m.iter().any(|x| !x.is_finite()) {
                    return bad(format!("{name} is not finite"));
                }
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> WeightsDocument {
        let rows = |m: &Option<DMatrix<f64>>| -> Vec<Vec<f64>> {
            let m = m.clone().unwrap_or_else(|| DMatrix::identity(self.dim, self.dim));
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        WeightsDocument {
            dim: self.dim,
            w_s: self.w_s.iter().copied().collect(),
            w_prop: self.w_prop.iter().map(rows).collect(),
            w_r: self.w_r.iter().copied().collect(),
            w_e: rows(&self.w_e),
            sigma: self.sigma,
            beta_merge: self.beta_merge,
            beta_transfer: self.beta_transfer,
        }
    }

    pub fn from_document(doc: &WeightsDocument) -> Result<Self, ReasoningError> {
        let d = doc.dim;
        let matrix = |name: &str, rows: &[Vec<f64>]| -> Result<Option<DMatrix<f64>>, ReasoningError> {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(ReasoningError::InvalidWeights(format!("{name} must be {d}x{d}")));
            }
            let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
            Ok((m != DMatrix::identity(d, d)).then_some(m))
        };
        let w_prop = doc
            .w_prop
            .iter()
            .enumerate()
            .map(|(j, m)| matrix(&format!("W_prop[{j}]"), m))
            .collect::<Result<Vec<_>, _>>()?;
        let bundle = WeightBundle {
            dim: d,
            w_s: DVector::from_vec(doc.w_s.clone()),
            w_prop,
            w_r: DVector::from_vec(doc.w_r.clone()),
            w_e: matrix("W_e", &doc.w_e)?,
            sigma: doc.sigma,
            beta_merge: doc.beta_merge,
            beta_transfer: doc.beta_transfer,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn from_json(text: &str) -> Result<Self, ReasoningError> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("weights serialize")
    }

    pub fn load(path: &Path) -> Result<Self, ReasoningError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ReasoningError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Weights JSON: matrices are lists of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsDocument {
    pub dim: usize,
    #[serde(rename = "W_s")]
    pub w_s: Vec<f64>,
    #[serde(rename = "W_prop")]
    pub w_prop: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "W_r")]
    pub w_r: Vec<f64>,
    #[serde(rename = "W_e")]
    pub w_e: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma: Sigma,
    #[serde(default = "default_beta")]
    pub beta_merge: f64,
    #[serde(default = "default_beta")]
    pub beta_transfer: f64,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

/// `m · v`, or `v` itself for the identity.
pub(crate) fn project(m: &Option<DMatrix<f64>>, v: &[f64]) -> Vec<f64> {
    match m {
        None => v.to_vec(),
        Some(m) => (m * DVector::from_column_slice(v)).as_slice().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_keeps_identity_compact() {
        let mut w = WeightBundle::symbolic_default(3, 2);
        w.w_e = Some(DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 0., 0., 0., 2.]));
        w.sigma = Sigma::Relu;
        let text = w.to_json();
        assert!(text.contains("\"W_prop\":[[[1.0,0.0,0.0]"));
        let back = WeightBundle::from_json(&text).unwrap();
        assert_eq!(back, w);
        assert!(back.w_prop.iter().all(Option::is_none));
    }

    #[test]
    fn rejects_bad_bundles() {
        let mut doc = WeightBundle::symbolic_default(2, 1).to_document();
        doc.beta_merge = 0.0;
        assert!(WeightBundle::from_document(&doc).is_err());
        let mut doc = WeightBundle::symbolic_default(2, 1).to_document();
        doc.w_e = vec![vec![1.0, 0.0]];
        assert!(WeightBundle::from_document(&doc).is_err());
        let mut doc = WeightBundle::symbolic_default(2, 1).to_document();
        doc.w_s = vec![1.0];
        assert!(WeightBundle::from_document(&doc).is_err());
        let text = r#"{"dim": 1, "W_s": [1], "W_prop": [[[1]]], "W_r": [1], "W_e": [[1]], "sigma": "tanh"}"#;
        assert!(WeightBundle::from_json(text).is_err());
    }

    #[test]
    fn projection() {
        let m = Some(DMatrix::from_row_slice(2, 2, &[0., 2., 1., 0.]));
        assert_eq!(project(&m, &[1.0, 3.0]), vec![6.0, 1.0]);
        assert_eq!(project(&None, &[1.0, 3.0]), vec![1.0, 3.0]);
    }
}
