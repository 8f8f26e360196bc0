use nalgebra::{DMatrix, SymmetricEigen};

use crate::embedding::EntityVector;
use crate::error::{Error, Result};

/// Principal-component fit of a vector set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Top two principal axes, unit length, each with its largest-magnitude
    /// loading positive.
    pub components: [Vec<f64>; 2],
    /// All covariance eigenvalues (divisor n - 1), descending.
    pub eigenvalues: Vec<f64>,
    pub points: Vec<(f64, f64)>,
}

pub fn pca_2d(vectors: &[EntityVector]) -> Result<Pca2> {
    let n = vectors.len();
    if n < 3 {
        return Err(Error::DegenerateProjection(format!("need at least 3 vectors, got {n}")));
    }
    let dim = vectors[0].dim();
    if dim < 2 || vectors.iter().any(|v| v.dim() != dim) {
        return Err(Error::DegenerateProjection("vectors must share a dimension of at least 2".into()));
    }
    let x = DMatrix::from_fn(n, dim, |r, c| vectors[r].values[c] as f64);
    let mean: Vec<f64> = (0..dim).map(|c| x.column(c).mean()).collect();
    let centered = DMatrix::from_fn(n, dim, |r, c| x[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let scale = eigenvalues[0].max(f64::MIN_POSITIVE);
    if eigenvalues[0] <= 1e-12 || eigenvalues[1] <= 1e-10 * scale {
        return Err(Error::DegenerateProjection("input spans fewer than two dimensions".into()));
    }
    let axis = |i: usize| -> Vec<f64> {
        let v: Vec<f64> = eig.eigenvectors.column(order[i]).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map_or(1.0, |(_, x)| x.signum());
        v.into_iter().map(|x| x * lead).collect()
    };
    let components = [axis(0), axis(1)];
    let points = (0..n)
        .map(|r| {
            let row = centered.row(r);
            let p = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            (p(&components[0]), p(&components[1]))
        })
        .collect();
    Ok(Pca2 { mean, components, eigenvalues, points })
}

/// Deterministic 2-D PCA projection with a label per point.
pub fn project_2d(vectors: &[EntityVector], labels: &[String]) -> Result<Vec<(f64, f64, String)>> {
    if labels.len() != vectors.len() {
        return Err(Error::Config(format!("{} labels for {} vectors", labels.len(), vectors.len())));
    }
    let fit = pca_2d(vectors)?;
    Ok(fit.points.into_iter().zip(labels).map(|((x, y), l)| (x, y, l.clone())).collect())
}
