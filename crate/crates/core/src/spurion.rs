//! Removal of spurious approximate eigenvalues.
//!
//! The refined removal clusters refined Ritz values whose distance is covered
//! by their residual norms, then keeps per cluster only as many members as
//! the numerical rank of the primitive refined vectors under the
//! gap-and-residual threshold. The two baselines used by the classical
//! Rayleigh-Ritz driver (TSVD truncation and the residual threshold test)
//! live here as well.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filter::Window;
use crate::matrix::{dense_svd, HermitianOp, Scalar};
use crate::projection::{rayleigh_ritz_from_product, select_potential, RefinedSet, RitzSet};

/// Clustering and rank-based removal only engage once every relative
/// residual is this small; before that each index stays its own cluster.
pub const CLUSTER_ACTIVATION_RELRES: f64 = 1e-3;

/// Clusters of refined Ritz values over the indices of a [`RefinedSet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterPartition {
    /// Disjoint cover of `0..refined.len()`.
    pub clusters: Vec<Vec<usize>>,
    /// Whether the pairwise criterion was applied (all relative residuals at
    /// or below the activation gate); otherwise every index is a singleton.
    pub active: bool,
    /// Relative residuals used for the gate, aligned with the refined set.
    pub rel_residuals: Vec<f64>,
}

impl ClusterPartition {
    pub fn cluster_of(&self, index: usize) -> usize {
        self.clusters
            .iter()
            .position(|c| c.contains(&index))
            .expect("partition covers all indices")
    }
}

/// Cluster refined Ritz values: an edge joins `i` and `j` iff
/// `|lambda_i - lambda_j| <= kappa (||r_i|| + ||r_j||)`; clusters are the
/// connected components. `kappa = 1` is exact for Hermitian operators; larger
/// values cover the diagonalizable case. `norm_a` scales the activation gate.
pub fn cluster_refined<T: Scalar>(
    refined: &RefinedSet<T>,
    kappa: f64,
    norm_a: f64,
) -> ClusterPartition {
    assert!(kappa >= 1.0, "conditioning constant kappa must be >= 1");
    let p = refined.len();
    let rel_residuals: Vec<f64> = refined.residual_norms.iter().map(|r| r / norm_a).collect();
    let active = !rel_residuals.is_empty()
        && rel_residuals
            .iter()
            .all(|&r| r <= CLUSTER_ACTIVATION_RELRES);

    if !active {
        return ClusterPartition {
            clusters: (0..p).map(|i| vec![i]).collect(),
            active,
            rel_residuals,
        };
    }

    // Connected components of the pairwise criterion, via union-find.
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let gap = (refined.ref_values[i] - refined.ref_values[j]).abs();
            let bound = kappa * (refined.residual_norms[i] + refined.residual_norms[j]);
            if gap <= bound {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..p {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    ClusterPartition {
        clusters: groups.into_values().collect(),
        active,
        rel_residuals,
    }
}

/// Per-member gap estimates: the distance from each refined value to the
/// nearest refined value in another cluster. With a single cluster the gap
/// falls back to the nearest window-exterior Ritz value (flagged); if none
/// exists the gap is unavailable and removal skips the cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapEstimates {
    /// Aligned with the refined-set indices; `None` marks unavailable.
    pub gaps: Vec<Option<f64>>,
    /// Set per index when the exterior-Ritz fallback produced the gap.
    pub fallback: Vec<bool>,
}

pub fn gap_estimates<T: Scalar>(
    partition: &ClusterPartition,
    refined: &RefinedSet<T>,
    exterior_ritz: &[f64],
) -> GapEstimates {
    let p = refined.len();
    let mut gaps = vec![None; p];
    let mut fallback = vec![false; p];
    let multi = partition.clusters.len() >= 2;
    for (ci, cluster) in partition.clusters.iter().enumerate() {
        for &idx in cluster {
            let lambda = refined.ref_values[idx];
            if multi {
                let mut best = f64::INFINITY;
                for (cj, other) in partition.clusters.iter().enumerate() {
                    if ci == cj {
                        continue;
                    }
                    for &jdx in other {
                        best = best.min((refined.ref_values[jdx] - lambda).abs());
                    }
                }
                gaps[idx] = Some(best);
            } else if !exterior_ritz.is_empty() {
                let best = exterior_ritz
                    .iter()
                    .map(|v| (v - lambda).abs())
                    .fold(f64::INFINITY, f64::min);
                gaps[idx] = Some(best);
                fallback[idx] = true;
            }
        }
    }
    GapEstimates { gaps, fallback }
}

// ---------------------------------------------------------------------------
// Removal reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalModeTag {
    Refined,
    Tsvd,
    Residual,
}

/// Per-cluster record of the rank decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReport {
    pub members: Vec<usize>,
    /// Singular values of the primitive refined block, descending.
    pub singular_values: Vec<f64>,
    /// Threshold `sqrt(n_hat) * max_j C ||r_j|| / g_j`; `None` when a gap was
    /// unavailable and the cluster was skipped.
    pub threshold: Option<f64>,
    /// Gap estimate per member, aligned with `members`.
    pub gaps: Vec<Option<f64>>,
    /// Whether any member gap came from the exterior-Ritz fallback.
    pub gap_fallback: bool,
    /// Numerical rank retained for this cluster.
    pub rank: Option<usize>,
}

/// Outcome of one removal pass. Indices refer to positions in the extraction
/// set the removal ran on (the refined set, or the Ritz set of the working
/// basis). `retained` and `removed` partition `potential`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemovalReport {
    pub mode: RemovalModeTag,
    pub potential: Vec<usize>,
    pub retained: Vec<usize>,
    pub removed: Vec<usize>,
    /// Retained indices whose relative residual was above the activation
    /// gate; they bypass the rank logic and block convergence.
    pub unconverged: Vec<usize>,
    pub clusters: Vec<ClusterReport>,
    /// Relative residuals aligned with `potential` (empty for TSVD mode).
    pub rel_residuals: Vec<f64>,
    /// TSVD mode: singular values of the raw moment block and kept dimension.
    pub tsvd_sigma: Option<Vec<f64>>,
    pub tsvd_kept_dim: Option<usize>,
    pub notes: Vec<String>,
}

impl RemovalReport {
    pub fn n_retained(&self) -> usize {
        self.retained.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("removal report serializes")
    }
}

/// The tune-free refined removal: per cluster, the numerical rank of the
/// primitive refined vectors under the threshold
/// `sqrt(n_hat) * max_j C ||r_j|| / g_j` decides how many members survive;
/// the extras with the largest residual norms are removed. `c_constant = 1`
/// for Hermitian operators.
pub fn refined_removal<T: Scalar>(
    partition: &ClusterPartition,
    refined: &RefinedSet<T>,
    c_constant: f64,
    exterior_ritz: &[f64],
) -> RemovalReport {
    let p = refined.len();
    let gaps = gap_estimates(partition, refined, exterior_ritz);
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    let mut unconverged = Vec::new();
    let mut clusters_out = Vec::new();
    let mut notes = Vec::new();

    for cluster in &partition.clusters {
        // Members above the activation gate are kept untouched and marked;
        // the rank test only sees converged members.
        let (conv, unconv): (Vec<usize>, Vec<usize>) = cluster
            .iter()
            .copied()
            .partition(|&i| partition.rel_residuals[i] <= CLUSTER_ACTIVATION_RELRES);
        for &i in &unconv {
            retained.push(i);
            unconverged.push(i);
        }
        if conv.is_empty() {
            continue;
        }

        let member_gaps: Vec<Option<f64>> = conv.iter().map(|&i| gaps.gaps[i]).collect();
        let gap_fallback = conv.iter().any(|&i| gaps.fallback[i]);
        let n_hat = conv.len();

        let mut z_hat = DMatrix::<T>::zeros(refined.prim_refined.nrows(), n_hat);
        for (c, &i) in conv.iter().enumerate() {
            z_hat
                .column_mut(c)
                .copy_from(&refined.prim_refined.column(i));
        }
        let sigma = dense_svd(&z_hat).sigma;

        if member_gaps.iter().any(|g| g.is_none()) {
            // No usable gap this iteration: keep the whole cluster, report it.
            retained.extend(conv.iter().copied());
            notes.push(format!(
                "cluster {:?}: gap unavailable, removal skipped this iteration",
                conv
            ));
            clusters_out.push(ClusterReport {
                members: conv,
                singular_values: sigma,
                threshold: None,
                gaps: member_gaps,
                gap_fallback,
                rank: None,
            });
            continue;
        }

        let worst_ratio = conv
            .iter()
            .zip(member_gaps.iter())
            .map(|(&i, g)| c_constant * refined.residual_norms[i] / g.unwrap())
            .fold(0.0_f64, f64::max);
        let threshold = (n_hat as f64).sqrt() * worst_ratio;
        let rank = sigma.iter().filter(|&&s| s > threshold).count();

        // Keep the `rank` members with the smallest residual norms.
        let mut order = conv.clone();
        order.sort_by(|&x, &y| {
            refined.residual_norms[x]
                .partial_cmp(&refined.residual_norms[y])
                .expect("residual norms are finite")
                .then(x.cmp(&y))
        });
        retained.extend(order.iter().take(rank).copied());
        removed.extend(order.iter().skip(rank).copied());

        clusters_out.push(ClusterReport {
            members: conv,
            singular_values: sigma,
            threshold: Some(threshold),
            gaps: member_gaps,
            gap_fallback,
            rank: Some(rank),
        });
    }

    retained.sort_unstable();
    removed.sort_unstable();
    unconverged.sort_unstable();
    RemovalReport {
        mode: RemovalModeTag::Refined,
        potential: (0..p).collect(),
        retained,
        removed,
        unconverged,
        clusters: clusters_out,
        rel_residuals: partition.rel_residuals.clone(),
        tsvd_sigma: None,
        tsvd_kept_dim: None,
        notes,
    }
}

/// TSVD baseline: truncate the raw moment block at `trunc_tol * sigma_max`,
/// project onto the kept left singular basis and retain every Ritz value in
/// the window without any residual check. Returns the Ritz set of the
/// truncated basis together with the report.
pub fn tsvd_removal<T: Scalar>(
    s_raw: &DMatrix<T>,
    a: &dyn HermitianOp<T>,
    window: &Window,
    trunc_tol: f64,
) -> Result<(RitzSet<T>, RemovalReport)> {
    let svd = dense_svd(s_raw);
    let sigma_max = svd.sigma.first().copied().unwrap_or(0.0);
    let kept = svd
        .sigma
        .iter()
        .filter(|&&s| s > trunc_tol * sigma_max && s > 0.0)
        .count();
    let u_t = svd.u.columns(0, kept).into_owned();
    let au_t = a.apply_block(&u_t);
    let ritz = rayleigh_ritz_from_product(&u_t, &au_t);
    let potential = select_potential(&ritz, window);

    let report = RemovalReport {
        mode: RemovalModeTag::Tsvd,
        potential: potential.clone(),
        retained: potential,
        removed: Vec::new(),
        unconverged: Vec::new(),
        clusters: Vec::new(),
        rel_residuals: Vec::new(),
        tsvd_sigma: Some(svd.sigma),
        tsvd_kept_dim: Some(kept),
        notes: Vec::new(),
    };
    Ok((ritz, report))
}

/// Residual-threshold baseline over precomputed residual norms: keep the
/// potential pairs whose relative residual is below `delta`.
pub fn residual_removal_from_norms(
    values: &[f64],
    residual_norms: &[f64],
    window: &Window,
    delta: f64,
    norm_a: f64,
) -> RemovalReport {
    assert!(delta > 0.0, "residual threshold must be positive");
    let potential: Vec<usize> = (0..values.len())
        .filter(|&i| window.contains(values[i]))
        .collect();
    let rel: Vec<f64> = potential
        .iter()
        .map(|&i| residual_norms[i] / norm_a)
        .collect();
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    for (k, &i) in potential.iter().enumerate() {
        if rel[k] < delta {
            retained.push(i);
        } else {
            removed.push(i);
        }
    }
    RemovalReport {
        mode: RemovalModeTag::Residual,
        potential,
        retained,
        removed,
        unconverged: Vec::new(),
        clusters: Vec::new(),
        rel_residuals: rel,
        tsvd_sigma: None,
        tsvd_kept_dim: None,
        notes: Vec::new(),
    }
}

/// Residual-threshold baseline computing the residual norms from `A`.
pub fn residual_removal<T: Scalar>(
    ritz: &RitzSet<T>,
    window: &Window,
    a: &dyn HermitianOp<T>,
    delta: f64,
) -> RemovalReport {
    let norms = ritz.residual_norms(a);
    residual_removal_from_norms(&ritz.values, &norms, window, delta, a.norm_est())
}
