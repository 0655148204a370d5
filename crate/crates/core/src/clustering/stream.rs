//! Cluster descriptors, KL-based association, and the streaming registry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::{plugin_bandwidths, Kde};
use crate::pca::Pca;

/// Largest PCA dimension of a descriptor.
pub const DESCRIPTOR_MAX_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorOptions {
    /// Bandwidth floor on principal coordinates.
    pub bandwidth_floor: f64,
    /// Bandwidth floor on the distance-to-subspace coordinate.
    pub residual_floor: f64,
    /// Density floor inside the log ratio.
    pub epsilon: f64,
}

impl Default for DescriptorOptions {
    fn default() -> Self {
        DescriptorOptions {
            bandwidth_floor: 0.25,
            residual_floor: 1.0,
            epsilon: 1e-12,
        }
    }
}

/// Kernel density description of one cluster's member features.
///
/// Members are projected onto their own leading principal axes; one extra
/// coordinate holds each point's distance to that subspace, so a foreign
/// cluster whose spread lies outside the retained axes still registers as
/// different.
#[derive(Debug, Clone)]
pub struct ClusterDescriptor {
    members: Vec<Vec<f64>>,
    pca: Pca,
    kde: Kde,
    opts: DescriptorOptions,
}

impl ClusterDescriptor {
    /// Fits a descriptor to scaled member features.
    pub fn fit(members: Vec<Vec<f64>>, opts: DescriptorOptions) -> Result<Self> {
        if members.is_empty() || members[0].is_empty() {
            return Err(Error::EmptyDescriptor);
        }
        let dim = members[0].len();
        if members.iter().any(|m| m.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: (dim, members.len()),
                actual: (0, 0),
            });
        }
        let k = DESCRIPTOR_MAX_DIM.min(members.len() - 1);
        let pca = Pca::fit(&members, k);
        let kde = fit_in_basis(&members, &pca, &opts)?;
        Ok(ClusterDescriptor {
            members,
            pca,
            kde,
            opts,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Number of principal axes kept.
    pub fn reduced_dim(&self) -> usize {
        self.pca.dim_out()
    }

    /// A single member (or identical members) gives a point mass.
    pub fn is_degenerate(&self) -> bool {
        self.pca.variances().iter().all(|&v| v == 0.0)
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    /// Mean of the member features.
    pub fn mean(&self) -> &[f64] {
        self.pca.mean()
    }
}

fn project_all(rows: &[Vec<f64>], pca: &Pca) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * (pca.dim_out() + 1));
    for r in rows {
        out.extend(pca.project(r));
        out.push(pca.residual(r));
    }
    out
}

fn fit_in_basis(rows: &[Vec<f64>], pca: &Pca, opts: &DescriptorOptions) -> Result<Kde> {
    let dim = pca.dim_out() + 1;
    let samples = project_all(rows, pca);
    let mut bw = plugin_bandwidths(&samples, dim, opts.bandwidth_floor);
    bw[dim - 1] = bw[dim - 1].max(opts.residual_floor);
    Kde::new(&samples, dim, bw)
}

/// Monte Carlo `KL(p || q)` over p's members, evaluated in q's basis and
/// clamped at zero. p's own density at each member leaves that member out, so
/// the estimate is not inflated by each kernel's self-contribution.
pub fn kl_divergence(p: &ClusterDescriptor, q: &ClusterDescriptor) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyDescriptor);
    }
    if p.members[0].len() != q.members[0].len() {
        return Err(Error::DimensionMismatch {
            expected: (q.members[0].len(), 1),
            actual: (p.members[0].len(), 1),
        });
    }
    let p_kde = fit_in_basis(&p.members, &q.pca, &p.opts)?;
    let eps = p.opts.epsilon.min(q.opts.epsilon);
    let dim = q.pca.dim_out() + 1;
    let samples = project_all(&p.members, &q.pca);
    let total: f64 = samples
        .chunks_exact(dim)
        .map(|x| (p_kde.density_without_sample(x).max(eps) / q.kde.density(x).max(eps)).ln())
        .sum();
    Ok((total / p.members.len() as f64).max(0.0))
}

/// Class decision attached to a tracked cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabel {
    /// Class index; 0 is background.
    pub class: usize,
    pub confidence: f64,
}

/// State kept for one global cluster id.
#[derive(Debug, Clone)]
pub struct ClusterEntry {
    pub descriptor: ClusterDescriptor,
    pub label: Option<ClusterLabel>,
    /// Offset of the detected box from the cluster's location mean, as
    /// `(center_x, center_y, h, w)`.
    pub offset: Option<[f64; 4]>,
    pub first_seen: usize,
    pub last_seen: usize,
}

/// Streaming map from global ids to cluster state. Ids are never reused.
#[derive(Debug, Clone, Default)]
pub struct ClusterRegistry {
    entries: BTreeMap<u64, ClusterEntry>,
    next_id: u64,
}

/// How a current cluster was matched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub global_id: u64,
    pub is_new: bool,
    /// KL to the matched previous cluster; `None` for new ids.
    pub kl: Option<f64>,
}

impl ClusterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: u64) -> Option<&ClusterEntry> {
        self.entries.get(&id)
    }

    pub fn get_mut(&mut self, id: u64) -> Result<&mut ClusterEntry> {
        self.entries.get_mut(&id).ok_or(Error::UnknownCluster(id))
    }

    /// Number of ids ever created.
    pub fn created(&self) -> u64 {
        self.next_id
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.keys().copied()
    }

    /// Ids last seen in sub-sequence `step`.
    pub fn seen_in(&self, step: usize) -> Vec<u64> {
        self.entries
            .iter()
            .filter(|(_, e)| e.last_seen == step)
            .map(|(&id, _)| id)
            .collect()
    }

    fn fresh(&mut self, descriptor: ClusterDescriptor, step: usize) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.entries.insert(
            id,
            ClusterEntry {
                descriptor,
                label: None,
                offset: None,
                first_seen: step,
                last_seen: step,
            },
        );
        id
    }
}

/// Matches the clusters of sub-sequence `step` against those of `step - 1`.
///
/// Pairs are taken greedily in ascending KL order (ties to the lower global
/// id, then the lower current index); a pair is accepted when both sides are
/// still free and KL is below `tau_kl`. Matched ids keep their label and
/// offset; every other current cluster gets a fresh id.
pub fn associate_clusters(
    current: Vec<ClusterDescriptor>,
    registry: &mut ClusterRegistry,
    step: usize,
    tau_kl: f64,
) -> Result<Vec<Association>> {
    let previous: Vec<u64> = if step == 0 {
        Vec::new()
    } else {
        registry.seen_in(step - 1)
    };
    let mut candidates = Vec::new();
    for (ci, cur) in current.iter().enumerate() {
        for &id in &previous {
            let prev = &registry.entries[&id].descriptor;
            candidates.push((kl_divergence(cur, prev)?, id, ci));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut matched: Vec<Option<(u64, f64)>> = vec![None; current.len()];
    let mut taken = std::collections::HashSet::new();
    for (kl, id, ci) in candidates {
        if kl >= tau_kl || matched[ci].is_some() || taken.contains(&id) {
            continue;
        }
        matched[ci] = Some((id, kl));
        taken.insert(id);
    }
    let mut out = Vec::with_capacity(current.len());
    for (desc, m) in current.into_iter().zip(matched) {
        match m {
            Some((id, kl)) => {
                let e = registry
                    .entries
                    .get_mut(&id)
                    .expect("candidate ids are registered");
                e.descriptor = desc;
                e.last_seen = step;
                out.push(Association {
                    global_id: id,
                    is_new: false,
                    kl: Some(kl),
                });
            }
            None => {
                let id = registry.fresh(desc, step);
                out.push(Association {
                    global_id: id,
                    is_new: true,
                    kl: None,
                });
            }
        }
    }
    Ok(out)
}
