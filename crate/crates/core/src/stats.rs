//! Class-conditional moments shared by LDA and the Gaussian back-end.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{AdiError, Result};

pub(crate) fn check_rows(x: &[Vec<f64>], y: &[usize], num_classes: usize) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(AdiError::invalid(format!(
            "need equally many samples and labels, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let dim = x[0].len();
    if dim == 0 {
        return Err(AdiError::invalid("zero-dimensional samples"));
    }
    for row in x {
        if row.len() != dim {
            return Err(AdiError::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(AdiError::invalid("non-finite sample component"));
        }
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
        return Err(AdiError::invalid(format!("label {bad} ≥ {num_classes} classes")));
    }
    Ok(dim)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Per-class counts and means, grand mean, and the within-class scatter
/// `Σ_c Σ_{i∈c} (x_i − m_c)(x_i − m_c)ᵀ` (unnormalized).
///
/// Samples are visited in a canonical order (by class, then lexicographically
/// by value), so the result does not depend on the input order at all.
pub(crate) struct ClassMoments {
    pub counts: Vec<usize>,
    pub means: Vec<DVector<f64>>,
    pub grand_mean: DVector<f64>,
    pub within: DMatrix<f64>,
    pub total: usize,
}

pub(crate) fn class_moments(x: &[Vec<f64>], y: &[usize], num_classes: usize) -> ClassMoments {
    let dim = x[0].len();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| y[a].cmp(&y[b]).then_with(|| lex_cmp(&x[a], &x[b])));

    let mut counts = vec![0usize; num_classes];
    let mut sums = vec![DVector::zeros(dim); num_classes];
    for &i in &order {
        counts[y[i]] += 1;
        sums[y[i]] += DVector::from_column_slice(&x[i]);
    }
    let means: Vec<DVector<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { s.clone() })
        .collect();
    let total = x.len();
    let mut grand_mean = DVector::zeros(dim);
    for &i in &order {
        grand_mean += DVector::from_column_slice(&x[i]);
    }
    grand_mean /= total as f64;

    let centered = DMatrix::from_fn(total, dim, |r, c| {
        let i = order[r];
        x[i][c] - means[y[i]][c]
    });
    let within = symmetrize(centered.transpose() * &centered);
    ClassMoments {
        counts,
        means,
        grand_mean,
        within,
        total,
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

pub(crate) fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

/// Writes a matrix as rows of space-separated decimals.
pub(crate) fn write_rows(out: &mut String, m: &DMatrix<f64>) {
    use std::fmt::Write;
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
}

pub(crate) fn parse_rows<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| AdiError::Format(format!("{what}: missing row {r}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| AdiError::Format(format!("{what}: non-numeric value in row {r}")))?;
        if vals.len() != cols {
            return Err(AdiError::Format(format!(
                "{what}: row {r} has {} values, expected {cols}",
                vals.len()
            )));
        }
        for (c, v) in vals.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(m)
}
