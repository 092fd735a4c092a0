//! Linear discriminant analysis.
//!
//! Directions solve `S_b v = λ (S_w + γI) v` with scatter matrices normalized
//! by the sample count. The problem is reduced to a symmetric one through the
//! Cholesky factor `L` of `S_w + γI`: eigenvectors `u` of `L⁻¹ S_b L⁻ᵀ` map
//! back as `v = L⁻ᵀ u`, which also makes the columns `(S_w + γI)`-orthonormal.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{AdiError, Result};
use crate::stats::{self, check_rows, class_moments};
use crate::svm::header_pairs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrinkage {
    /// γ = factor · tr(S_w) / D.
    Relative(f64),
    Absolute(f64),
}

impl Default for Shrinkage {
    fn default() -> Self {
        Shrinkage::Relative(1e-4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// D × d, columns ordered by decreasing eigenvalue.
    projection: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    class_means: Vec<Option<Vec<f64>>>,
    gamma: f64,
    /// Largest over smallest eigenvalue of the within-class scatter.
    within_condition: f64,
}

/// Eigenvalue ratio below which an unshrunk within-class scatter counts as singular.
const SINGULAR_RATIO: f64 = 1e-12;

pub fn fit_lda(
    x: &[Vec<f64>],
    y: &[usize],
    num_classes: usize,
    out_dim: usize,
    shrinkage: Shrinkage,
) -> Result<LdaModel> {
    let dim = check_rows(x, y, num_classes)?;
    let moments = class_moments(x, y, num_classes);
    let present: Vec<usize> = (0..num_classes).filter(|&c| moments.counts[c] > 0).collect();
    if present.len() < 2 {
        return Err(AdiError::invalid("LDA needs at least two classes"));
    }
    if let Some(&c) = present.iter().find(|&&c| moments.counts[c] < 2) {
        return Err(AdiError::invalid(format!("class {c} has a single sample")));
    }
    let max_dim = (present.len() - 1).min(dim);
    if out_dim == 0 || out_dim > max_dim {
        return Err(AdiError::invalid(format!(
            "LDA output dimension {out_dim} outside 1..={max_dim}"
        )));
    }

    let n = moments.total as f64;
    let sw = &moments.within / n;
    let mut sb = DMatrix::zeros(dim, dim);
    for &c in &present {
        let diff = &moments.means[c] - &moments.grand_mean;
        sb += (&diff * diff.transpose()) * (moments.counts[c] as f64 / n);
    }
    let sb = stats::symmetrize(sb);

    let sw_eigs = SymmetricEigen::new(sw.clone()).eigenvalues;
    let (lo, hi) = sw_eigs
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let within_condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };

    let gamma = match shrinkage {
        Shrinkage::Relative(f) => f * stats::trace(&sw) / dim as f64,
        Shrinkage::Absolute(g) => g,
    };
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(AdiError::invalid("shrinkage must be nonnegative"));
    }
    if gamma == 0.0 && !(lo > SINGULAR_RATIO * hi) {
        return Err(AdiError::Numerical(
            "within-class scatter is singular; use a positive shrinkage".into(),
        ));
    }

    let regularized = sw + DMatrix::identity(dim, dim) * gamma;
    let chol = regularized.cholesky().ok_or_else(|| {
        AdiError::Numerical("within-class scatter is not positive definite; increase shrinkage".into())
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| AdiError::Numerical("Cholesky factor is singular".into()))?;
    let reduced = stats::symmetrize(&l_inv * sb * l_inv.transpose());
    let eig = SymmetricEigen::new(reduced);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let lt_inv = l_inv.transpose();
    let mut projection = DMatrix::zeros(dim, out_dim);
    let mut eigenvalues = Vec::with_capacity(out_dim);
    for (j, &k) in order.iter().take(out_dim).enumerate() {
        let mut v: DVector<f64> = &lt_inv * eig.eigenvectors.column(k);
        fix_sign(&mut v);
        projection.set_column(j, &v);
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
    }

    Ok(LdaModel {
        projection,
        eigenvalues,
        class_means: (0..num_classes)
            .map(|c| (moments.counts[c] > 0).then(|| moments.means[c].iter().copied().collect()))
            .collect(),
        gamma,
        within_condition,
    })
}

/// Makes the first non-negligible component positive.
fn fix_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if let Some(first) = v.iter().copied().find(|c| c.abs() > 1e-9 * scale) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

impl LdaModel {
    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn within_condition(&self) -> f64 {
        self.within_condition
    }

    pub fn class_means(&self) -> &[Option<Vec<f64>>] {
        &self.class_means
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(AdiError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok((0..self.output_dim())
            .map(|j| {
                self.projection
                    .column(j)
                    .iter()
                    .zip(x)
                    .map(|(p, v)| p * v)
                    .sum()
            })
            .collect())
    }

    pub fn project_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.project(x)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "adi-lda v1").unwrap();
        writeln!(
            s,
            "input {} output {} gamma {} condition {}",
            self.input_dim(),
            self.output_dim(),
            self.gamma,
            self.within_condition
        )
        .unwrap();
        let ev: Vec<String> = self.eigenvalues.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{}", ev.join(" ")).unwrap();
        stats::write_rows(&mut s, &self.projection);
        s
    }

    /// Reads a model written by [`LdaModel::to_text`]. Class means are not stored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("adi-lda v1") {
            return Err(AdiError::Format("not an adi-lda v1 model".into()));
        }
        let header = lines
            .next()
            .ok_or_else(|| AdiError::Format("lda header missing".into()))?;
        let kv = header_pairs(header)?;
        let num = |k: &str| -> Result<f64> {
            kv.iter()
                .find(|(key, _)| *key == k)
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| AdiError::Format(format!("lda header lacks `{k}`")))
        };
        let input = num("input")? as usize;
        let output = num("output")? as usize;
        let eigenvalues = stats::parse_rows(&mut lines, 1, output, "lda eigenvalues")?
            .iter()
            .copied()
            .collect();
        let projection = stats::parse_rows(&mut lines, input, output, "lda projection")?;
        Ok(Self {
            projection,
            eigenvalues,
            class_means: Vec::new(),
            gamma: num("gamma")?,
            within_condition: num("condition")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    fn two_class_axis1(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng::seeded(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..2 * n {
            let c = i % 2;
            let shift = if c == 0 { -3.0 } else { 3.0 };
            x.push(vec![
                shift + noise.sample(&mut r),
                noise.sample(&mut r),
                noise.sample(&mut r),
            ]);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn leading_direction_is_positive_axis() {
        let (x, y) = two_class_axis1(2000, 3);
        let m = fit_lda(&x, &y, 2, 1, Shrinkage::default()).unwrap();
        let v = m.projection().column(0);
        let v = v / v.norm();
        assert!(v[0] > 0.99, "direction {v}");
    }

    #[test]
    fn rejects_bad_dims_and_classes() {
        let (x, y) = two_class_axis1(10, 1);
        assert!(fit_lda(&x, &y, 2, 2, Shrinkage::default()).is_err());
        assert!(fit_lda(&x, &y, 2, 0, Shrinkage::default()).is_err());
        let ones = vec![0; x.len()];
        assert!(fit_lda(&x, &ones, 2, 1, Shrinkage::default()).is_err());
    }

    #[test]
    fn singular_scatter_needs_shrinkage() {
        // third coordinate is constant: S_w is rank deficient
        let x = vec![
            vec![0.0, 1.0, 5.0],
            vec![0.5, 0.0, 5.0],
            vec![3.0, 1.0, 5.0],
            vec![3.5, 0.2, 5.0],
        ];
        let y = vec![0, 0, 1, 1];
        let err = fit_lda(&x, &y, 2, 1, Shrinkage::Absolute(0.0)).unwrap_err();
        assert!(err.to_string().contains("shrinkage"));
        assert!(fit_lda(&x, &y, 2, 1, Shrinkage::Absolute(1e-3)).is_ok());
    }

    #[test]
    fn projection_is_linear() {
        let (x, y) = two_class_axis1(50, 9);
        let m = fit_lda(&x, &y, 2, 1, Shrinkage::default()).unwrap();
        assert_eq!(m.project(&[0.0; 3]).unwrap(), vec![0.0]);
        let a = [0.3, -1.0, 2.0];
        let b = [1.5, 0.25, -0.5];
        let ab: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let lhs = m.project(&ab).unwrap()[0];
        let rhs = m.project(&a).unwrap()[0] + m.project(&b).unwrap()[0];
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(m.project(&[1.0]).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let (x, y) = two_class_axis1(30, 2);
        let m = fit_lda(&x, &y, 2, 1, Shrinkage::default()).unwrap();
        let back = LdaModel::parse(&m.to_text()).unwrap();
        assert_eq!(back.projection(), m.projection());
        assert_eq!(back.eigenvalues(), m.eigenvalues());
    }
}
