//! Single-pass density-peak clustering.
//!
//! Each token gets a log-density `-Σ_j ‖z_i − z_j‖²` and a separation `δ_i`,
//! the distance to the closest denser token (or, for the densest token, to
//! the farthest token). The `c` tokens with the largest `log ρ + log δ`
//! become centers and every other token joins its nearest center. There is
//! no iteration and no bandwidth parameter.
//!
//! Densities are compared as a total order: equal densities rank the lower
//! index as denser. Score and distance ties also go to the lower index.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sqdist, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Center token indices, highest center score first. Cluster `k` is
    /// the one centred on `centers[k]`.
    pub centers: Vec<usize>,
    /// Cluster id of each token.
    pub member_of: Vec<usize>,
    /// `log ρ_i + log δ_i`; `-inf` when `δ_i = 0`.
    pub log_gamma: Vec<f64>,
    pub log_density: Vec<f64>,
    pub delta: Vec<f64>,
}

impl ClusterAssignment {
    /// Member lists per cluster, in cluster order, members ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.centers.len()];
        for (i, &k) in self.member_of.iter().enumerate() {
            groups[k].push(i);
        }
        groups
    }

    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }
}

#[inline]
fn denser(log_density: &[f64], j: usize, i: usize) -> bool {
    match log_density[j].total_cmp(&log_density[i]) {
        Ordering::Greater => true,
        Ordering::Equal => j < i,
        Ordering::Less => false,
    }
}

pub fn dpc_cluster(subset: &Matrix, c: usize) -> Result<ClusterAssignment> {
    let n = subset.rows();
    if c == 0 {
        return Err(Error::input("dpc_cluster: cluster count must be at least 1"));
    }
    if c > n {
        return Err(Error::input(format!(
            "dpc_cluster: {c} clusters requested from {n} tokens"
        )));
    }

    let d2 = pairwise_sqdist(subset);
    let log_density: Vec<f64> = (0..n).map(|i| -d2.row(i).iter().sum::<f64>()).collect();

    let delta: Vec<f64> = (0..n)
        .map(|i| {
            let row = d2.row(i);
            let nearest_denser = (0..n)
                .filter(|&j| denser(&log_density, j, i))
                .map(|j| row[j])
                .min_by(f64::total_cmp);
            match nearest_denser {
                Some(d) => d.sqrt(),
                None => row.iter().copied().fold(0.0, f64::max).sqrt(),
            }
        })
        .collect();

    let log_gamma: Vec<f64> = log_density
        .iter()
        .zip(&delta)
        .map(|(r, d)| r + d.ln())
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| log_gamma[b].total_cmp(&log_gamma[a]).then(a.cmp(&b)));
    let centers = order[..c].to_vec();

    let mut by_index: Vec<(usize, usize)> =
        centers.iter().enumerate().map(|(k, &t)| (t, k)).collect();
    by_index.sort_unstable();

    let mut member_of = vec![usize::MAX; n];
    for &(t, k) in &by_index {
        member_of[t] = k;
    }
    for i in 0..n {
        if member_of[i] != usize::MAX {
            continue;
        }
        let row = d2.row(i);
        let mut best = (f64::INFINITY, by_index[0].1);
        for &(t, k) in &by_index {
            if row[t] < best.0 {
                best = (row[t], k);
            }
        }
        member_of[i] = best.1;
    }

    Ok(ClusterAssignment {
        centers,
        member_of,
        log_gamma,
        log_density,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn two_well_separated_pairs() {
        let a = dpc_cluster(&col(&[0.0, 0.1, 5.0, 5.1]), 2).unwrap();
        let mut centers = a.centers.clone();
        centers.sort_unstable();
        assert_eq!(centers, vec![1, 2]);
        assert_eq!(a.member_of[0], a.member_of[1]);
        assert_eq!(a.member_of[2], a.member_of[3]);
        assert_ne!(a.member_of[0], a.member_of[2]);

        let want_rho = [-51.02, -49.02, -49.02, -51.02];
        for (got, want) in a.log_density.iter().zip(want_rho) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn density_tie_goes_to_lower_index() {
        // Dyadic coordinates make the two middle densities tie exactly.
        let a = dpc_cluster(&col(&[0.0, 0.5, 5.0, 5.5]), 2).unwrap();
        assert_eq!(a.log_density[1], a.log_density[2]);
        assert_eq!(a.delta, vec![0.5, 5.0, 4.5, 0.5]);
        assert_eq!(a.centers, vec![1, 2]);
        assert_eq!(a.member_of, vec![0, 0, 1, 1]);
    }

    #[test]
    fn every_token_its_own_center() {
        let a = dpc_cluster(&col(&[3.0, -1.0, 0.5, 9.0]), 4).unwrap();
        for i in 0..4 {
            assert_eq!(a.centers[a.member_of[i]], i);
        }
    }

    #[test]
    fn duplicates_are_not_second_centers() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0], [4.0, 0.0]]).unwrap();
        let a = dpc_cluster(&m, 2).unwrap();
        // token 1 duplicates the denser token 0, so δ = 0 and it is never picked.
        assert_eq!(a.delta[1], 0.0);
        assert!(!a.centers.contains(&1));
        assert_eq!(a.member_of[1], a.member_of[0]);
    }

    #[test]
    fn single_cluster_takes_everything() {
        let a = dpc_cluster(&col(&[1.0, 2.0, 7.0]), 1).unwrap();
        assert_eq!(a.groups(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(dpc_cluster(&col(&[1.0, 2.0]), 3).is_err());
        assert!(dpc_cluster(&col(&[1.0, 2.0]), 0).is_err());
    }
}
