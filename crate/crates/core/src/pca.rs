//! Principal-component projection of point clouds, used to view the 6-D
//! zero-set clouds in three dimensions.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub mean: Vec<f64>,
    /// Principal axes as rows, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Variance along each kept axis divided by the total variance.
    pub explained_ratio: Vec<f64>,
    /// Number of eigenvalues above 1e−12 of the largest.
    pub rank: usize,
    pub projected: PointCloud,
}

pub fn pca(cloud: &PointCloud, target_dim: usize) -> Result<PcaResult> {
    let n = cloud.len();
    let dim = cloud.dim;
    if n < 2 {
        return Err(Error::domain("PCA needs at least two points"));
    }
    if target_dim == 0 || target_dim > dim {
        return Err(Error::domain(format!("target dimension must lie in 1..={dim}, got {target_dim}")));
    }
    let mut mean = vec![0.0; dim];
    for p in cloud.rows() {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for p in cloud.rows() {
        for i in 0..dim {
            let ci = p[i] - mean[i];
            for j in i..dim {
                cov[(i, j)] += ci * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order.iter().filter(|&&k| eig.eigenvalues[k] > 1e-12 * top).count();
    let components: Vec<Vec<f64>> =
        order[..target_dim].iter().map(|&k| eig.eigenvectors.column(k).iter().copied().collect()).collect();
    let explained_ratio = order[..target_dim]
        .iter()
        .map(|&k| if total > 0.0 { eig.eigenvalues[k].max(0.0) / total } else { 0.0 })
        .collect();
    let mut out = Vec::with_capacity(n * target_dim);
    for p in cloud.rows() {
        for c in &components {
            out.push(c.iter().zip(p.iter().zip(&mean)).map(|(ci, (x, m))| ci * (x - m)).sum());
        }
    }
    Ok(PcaResult { mean, components, explained_ratio, rank, projected: PointCloud::new(target_dim, out)? })
}

/// Maximum distance between each point and its reconstruction from the
/// projection.
pub fn reconstruction_error(cloud: &PointCloud, res: &PcaResult) -> f64 {
    let k = res.components.len();
    cloud
        .rows()
        .enumerate()
        .map(|(i, p)| {
            let z = &res.projected.points[i * k..(i + 1) * k];
            let mut r2 = 0.0;
            for j in 0..cloud.dim {
                let rec = res.mean[j] + res.components.iter().zip(z).map(|(c, zi)| c[j] * zi).sum::<f64>();
                r2 += (p[j] - rec).powi(2);
            }
            r2.sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn flat_data_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = [1.0, 2.0, -1.0, 0.5, 0.0];
        let b = [0.0, 1.0, 1.0, -2.0, 3.0];
        let mut pts = Vec::new();
        for _ in 0..500 {
            let (s, t): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            pts.extend((0..5).map(|j| 0.3 + s * a[j] + t * b[j]));
        }
        let cloud = PointCloud::new(5, pts).unwrap();
        let res = pca(&cloud, 2).unwrap();
        assert_eq!(res.rank, 2);
        assert!(reconstruction_error(&cloud, &res) <= 1e-10);
        assert!((res.explained_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_cloud_has_even_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<f64> = (0..300_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let res = pca(&PointCloud::new(3, pts).unwrap(), 3).unwrap();
        for r in &res.explained_ratio {
            assert!((r - 1.0 / 3.0).abs() < 0.1 / 3.0, "{:?}", res.explained_ratio);
        }
    }

    #[test]
    fn target_dim_is_checked() {
        let c = PointCloud::new(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(pca(&c, 3).is_err());
        assert!(pca(&c, 0).is_err());
    }
}
