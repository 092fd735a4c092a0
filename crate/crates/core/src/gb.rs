//! Gaussian back-end: one mean per class and a shared full covariance.
//!
//! The class score is the Gaussian log-likelihood without its class-independent
//! normalizer,
//!
//! ```text
//! log p(w|d) = −½ wᵀΣ⁻¹w + wᵀΣ⁻¹m_d − ½ m_dᵀΣ⁻¹m_d + c,   c = 0
//! ```

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{AdiError, Result};
use crate::stats::{self, check_rows, class_moments};
use crate::svm::{argmax, header_pairs};

pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GbModel {
    means: Vec<DVector<f64>>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    /// Σ⁻¹ m_d per class.
    precision_means: Vec<DVector<f64>>,
    /// ½ m_dᵀ Σ⁻¹ m_d per class.
    half_mahalanobis: Vec<f64>,
    shrinkage: f64,
}

/// Fits class means and the pooled maximum-likelihood covariance (normalized
/// by N), loaded with `shrinkage · tr(Σ)/d` on the diagonal. When the pooled
/// scatter vanishes entirely the loading falls back to `shrinkage · I`.
pub fn fit_gb(x: &[Vec<f64>], y: &[usize], num_classes: usize, shrinkage: f64) -> Result<GbModel> {
    let dim = check_rows(x, y, num_classes)?;
    if !(shrinkage >= 0.0 && shrinkage.is_finite()) {
        return Err(AdiError::invalid("shrinkage must be nonnegative"));
    }
    let moments = class_moments(x, y, num_classes);
    if let Some(c) = (0..num_classes).find(|&c| moments.counts[c] < 2) {
        return Err(AdiError::MissingClass(format!(
            "{c} (needs at least 2 samples, has {})",
            moments.counts[c]
        )));
    }
    let pooled = &moments.within / moments.total as f64;
    let tr = stats::trace(&pooled);
    let scale = if tr > 0.0 { tr / dim as f64 } else { 1.0 };
    let covariance = stats::symmetrize(pooled + DMatrix::identity(dim, dim) * (shrinkage * scale));
    GbModel::from_parts(moments.means, covariance, shrinkage)
}

impl GbModel {
    pub fn from_parts(
        means: Vec<DVector<f64>>,
        covariance: DMatrix<f64>,
        shrinkage: f64,
    ) -> Result<Self> {
        let dim = covariance.nrows();
        if covariance.ncols() != dim || means.iter().any(|m| m.len() != dim) {
            return Err(AdiError::invalid("mean and covariance dimensions disagree"));
        }
        let chol = covariance.clone().cholesky().ok_or_else(|| {
            AdiError::Numerical("shared covariance is not positive definite".into())
        })?;
        let precision = stats::symmetrize(chol.inverse());
        let precision_means: Vec<DVector<f64>> = means.iter().map(|m| &precision * m).collect();
        let half_mahalanobis = means
            .iter()
            .zip(&precision_means)
            .map(|(m, pm)| 0.5 * m.dot(pm))
            .collect();
        Ok(Self {
            means,
            covariance,
            precision,
            precision_means,
            half_mahalanobis,
            shrinkage,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn loglik(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.dim() {
            return Err(AdiError::DimensionMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        let w = DVector::from_column_slice(w);
        let quad = -0.5 * w.dot(&(&self.precision * &w));
        Ok(self
            .precision_means
            .iter()
            .zip(&self.half_mahalanobis)
            .map(|(pm, h)| quad + w.dot(pm) - h)
            .collect())
    }

    pub fn predict(&self, w: &[f64]) -> Result<usize> {
        Ok(argmax(&self.loglik(w)?))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "adi-gb v1").unwrap();
        writeln!(
            s,
            "classes {} dim {} shrinkage {}",
            self.num_classes(),
            self.dim(),
            self.shrinkage
        )
        .unwrap();
        let means = DMatrix::from_fn(self.num_classes(), self.dim(), |r, c| self.means[r][c]);
        stats::write_rows(&mut s, &means);
        stats::write_rows(&mut s, &self.covariance);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("adi-gb v1") {
            return Err(AdiError::Format("not an adi-gb v1 model".into()));
        }
        let header = lines
            .next()
            .ok_or_else(|| AdiError::Format("gb header missing".into()))?;
        let kv = header_pairs(header)?;
        let num = |k: &str| -> Result<f64> {
            kv.iter()
                .find(|(key, _)| *key == k)
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| AdiError::Format(format!("gb header lacks `{k}`")))
        };
        let classes = num("classes")? as usize;
        let dim = num("dim")? as usize;
        let means = stats::parse_rows(&mut lines, classes, dim, "gb means")?;
        let covariance = stats::parse_rows(&mut lines, dim, dim, "gb covariance")?;
        GbModel::from_parts(
            means.row_iter().map(|r| r.transpose()).collect(),
            covariance,
            num("shrinkage")?,
        )
    }
}
