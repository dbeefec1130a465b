//! Diagonal-covariance Gaussian mixtures fitted by EM, BIC model selection,
//! thresholded soft assignment and PCA projection.
//!
//! Items are put into a canonical order (by a hash of their coordinates)
//! before seeding, so a fit does not depend on the order the caller passes
//! vectors in.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const MAX_ITER: usize = 200;
/// Convergence tolerance on the mean per-item log-likelihood gain.
pub const TOLERANCE: f64 = 1e-4;
pub const K_MAX_CAP: usize = 50;
/// EM restarts per k in [`select_k`]; the highest final likelihood wins.
pub const N_INIT: u64 = 3;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub means: Vec<Vec<f64>>,
    /// Diagonal covariances, one vector per component.
    pub variances: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
    pub n_iter: usize,
    /// Log-likelihood after each E-step, starting from the initialization.
    pub history: Vec<f64>,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n_params(&self) -> usize {
        2 * self.k * self.dim() + self.k - 1
    }

    pub fn bic(&self, n: usize) -> f64 {
        self.n_params() as f64 * (n as f64).ln() - 2.0 * self.log_likelihood
    }

    /// Per-component log of `weight * density` for one point.
    fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|j| {
                let mut s = 0.0;
                for ((xi, mu), var) in x.iter().zip(&self.means[j]).zip(&self.variances[j]) {
                    let d = xi - mu;
                    s += LN_2PI + var.ln() + d * d / var;
                }
                self.weights[j].ln() - 0.5 * s
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftAssignment {
    /// n×k, each row sums to 1.
    pub responsibilities: Vec<Vec<f64>>,
    /// Components per item with responsibility at or above the threshold;
    /// the argmax is always included.
    pub memberships: Vec<Vec<usize>>,
}

impl SoftAssignment {
    /// Item indices per component, skipping components with no members.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let k = self.responsibilities.first().map_or(0, Vec::len);
        let mut out = vec![Vec::new(); k];
        for (i, ms) in self.memberships.iter().enumerate() {
            for &j in ms {
                out[j].push(i);
            }
        }
        out.retain(|c| !c.is_empty());
        out
    }

    pub fn hard_labels(&self) -> Vec<usize> {
        self.responsibilities.iter().map(|r| argmax(r)).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = j;
        }
    }
    best
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_dims(vectors: &[Vec<f64>]) -> Result<usize> {
    let d = vectors
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Precondition("no vectors".into()))?;
    if d == 0 {
        return Err(Error::Precondition("zero-dimensional vectors".into()));
    }
    if let Some(bad) = vectors.iter().position(|v| v.len() != d) {
        return Err(Error::Precondition(format!(
            "vector {bad} has dim {} but expected {d}",
            vectors[bad].len()
        )));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("non-finite coordinate".into()));
    }
    Ok(d)
}

fn content_hash(v: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    for x in v {
        // +0.0 and -0.0 hash alike
        h.update((x + 0.0).to_le_bytes());
    }
    h.finalize().into()
}

/// Permutation that sorts items by content hash (stable for equal content).
pub fn canonical_order(vectors: &[Vec<f64>]) -> Vec<usize> {
    let hashes: Vec<[u8; 32]> = vectors.iter().map(|v| content_hash(v)).collect();
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| hashes[a].cmp(&hashes[b]));
    order
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding over canonically ordered data.
fn seed_centers(data: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = vec![data[rng.gen_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        let c = data[pick].to_vec();
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

/// M-step from a responsibility matrix. Components with no mass keep
/// their previous parameters and get weight 0.
fn m_step(model: &mut GmmModel, data: &[&[f64]], resp: &[Vec<f64>]) {
    let n = data.len() as f64;
    let d = model.dim();
    for j in 0..model.k {
        let nj: f64 = resp.iter().map(|r| r[j]).sum();
        if nj <= f64::MIN_POSITIVE {
            model.weights[j] = 0.0;
            continue;
        }
        let mut mean = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            for (m, xi) in mean.iter_mut().zip(x.iter()) {
                *m += r[j] * xi;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nj);
        let mut var = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            for ((v, xi), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
                *v += r[j] * (xi - m) * (xi - m);
            }
        }
        var.iter_mut()
            .for_each(|v| *v = (*v / nj).max(VARIANCE_FLOOR));
        model.means[j] = mean;
        model.variances[j] = var;
        model.weights[j] = nj / n;
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
}

/// E-step: responsibilities and total log-likelihood.
fn e_step(model: &GmmModel, data: &[&[f64]]) -> (Vec<Vec<f64>>, f64) {
    let mut ll = 0.0;
    let resp = data
        .iter()
        .map(|x| {
            let lj = model.log_joint(x);
            let lse = logsumexp(&lj);
            ll += lse;
            lj.iter().map(|l| (l - lse).exp()).collect()
        })
        .collect();
    (resp, ll)
}

/// Fit a `k`-component diagonal GMM with EM.
///
/// Initialization is k-means++ seeding followed by one M-step from the
/// nearest-center hard assignment. EM stops once the mean per-item
/// log-likelihood gain drops below [`TOLERANCE`] or after [`MAX_ITER`]
/// iterations. If every vector is identical a single component is returned.
pub fn fit_gmm(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmModel> {
    let n = vectors.len();
    if k == 0 || n < k {
        return Err(Error::InvalidK { k, n });
    }
    let d = check_dims(vectors)?;
    let order = canonical_order(vectors);
    let data: Vec<&[f64]> = order.iter().map(|&i| vectors[i].as_slice()).collect();

    let degenerate = data.iter().all(|x| *x == data[0]);
    let k = if degenerate { 1 } else { k };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = seed_centers(&data, k, &mut rng);
    let mut model = GmmModel {
        k,
        means: centers.clone(),
        variances: vec![vec![1.0; d]; k],
        weights: vec![1.0 / k as f64; k],
        log_likelihood: f64::NEG_INFINITY,
        n_iter: 0,
        history: Vec::new(),
    };
    let hard: Vec<Vec<f64>> = data
        .iter()
        .map(|x| {
            let mut best = 0;
            for (j, c) in centers.iter().enumerate() {
                if sq_dist(x, c) < sq_dist(x, &centers[best]) {
                    best = j;
                }
            }
            (0..k).map(|j| if j == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    m_step(&mut model, &data, &hard);

    loop {
        let (resp, ll) = e_step(&model, &data);
        let prev = model.history.last().copied();
        model.history.push(ll);
        model.log_likelihood = ll;
        let converged = prev.is_some_and(|p| (ll - p) / (n as f64) < TOLERANCE);
        if converged || model.n_iter >= MAX_ITER {
            break;
        }
        m_step(&mut model, &data, &resp);
        model.n_iter += 1;
    }
    if !model.log_likelihood.is_finite() {
        return Err(Error::Internal("GMM log-likelihood is not finite".into()));
    }
    Ok(model)
}

/// Fit k = 1..=min(k_max, n) and keep the lowest-BIC model (ties go to the
/// smaller k). Each k gets [`N_INIT`] seeded restarts so one poor
/// k-means++ draw cannot hide the right k.
pub fn select_k(vectors: &[Vec<f64>], k_max: usize, seed: u64) -> Result<GmmModel> {
    if k_max == 0 {
        return Err(Error::InvalidK {
            k: 0,
            n: vectors.len(),
        });
    }
    let n = vectors.len();
    // fits are independent; run them in parallel, then pick in k order
    let fits: Vec<GmmModel> = (1..=k_max.min(n))
        .into_par_iter()
        .map(|k| {
            let mut m = fit_gmm(vectors, k, seed)?;
            for r in 1..N_INIT {
                if m.k < k {
                    break;
                }
                let alt = fit_gmm(vectors, k, seed.wrapping_add(r.wrapping_mul(0x9E37_79B9_7F4A_7C15)))?;
                if alt.log_likelihood > m.log_likelihood {
                    m = alt;
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, GmmModel)> = None;
    for (i, m) in fits.into_iter().enumerate() {
        if m.k < i + 1 {
            // degenerate data collapsed to one component; larger k is moot
            best.get_or_insert((m.bic(n), m));
            break;
        }
        let bic = m.bic(n);
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, m));
        }
    }
    best.map(|(_, m)| m).ok_or(Error::InvalidK { k: k_max, n })
}

pub fn soft_assign(model: &GmmModel, vectors: &[Vec<f64>], threshold: f64) -> SoftAssignment {
    let mut responsibilities = Vec::with_capacity(vectors.len());
    let mut memberships = Vec::with_capacity(vectors.len());
    for x in vectors {
        let lj = model.log_joint(x);
        let lse = logsumexp(&lj);
        let r: Vec<f64> = lj.iter().map(|l| (l - lse).exp()).collect();
        let top = argmax(&r);
        let ms: Vec<usize> = (0..model.k)
            .filter(|&j| j == top || r[j] >= threshold)
            .collect();
        responsibilities.push(r);
        memberships.push(ms);
    }
    SoftAssignment {
        responsibilities,
        memberships,
    }
}

/// Project centered data onto its top `target_dim` principal components.
///
/// Each component's largest-magnitude loading is made positive. When the
/// dimension exceeds the item count the n×n Gram matrix is decomposed
/// instead of the covariance matrix.
pub fn reduce_dim(vectors: &[Vec<f64>], target_dim: usize) -> Result<Vec<Vec<f64>>> {
    let d = check_dims(vectors)?;
    if target_dim == 0 || target_dim > d {
        return Err(Error::Precondition(format!(
            "target_dim {target_dim} must be in 1..={d}"
        )));
    }
    let n = vectors.len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    // constant coordinates carry no variance; dropping them keeps the
    // eigen solver away from exactly singular blocks
    let live: Vec<usize> = (0..d)
        .filter(|&j| vectors.iter().any(|v| v[j] != vectors[0][j]))
        .collect();
    let dl = live.len();
    let x = DMatrix::from_fn(n, dl, |i, j| vectors[i][live[j]] - mean[live[j]]);

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(target_dim);
    if dl > n {
        // n points span at most n directions; the rest carry no variance
        let gram = &x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        for idx in sorted_desc(eig.eigenvalues.as_slice()).into_iter().take(target_dim.min(n)) {
            let u = eig.eigenvectors.column(idx);
            let v = x.transpose() * u;
            let norm = v.norm();
            // zero-variance directions project everything to zero anyway
            components.push(if norm > 1e-12 {
                (v / norm).iter().copied().collect()
            } else {
                vec![0.0; dl]
            });
        }
    } else if dl > 0 {
        let cov = x.transpose() * &x;
        let eig = SymmetricEigen::new(cov);
        for idx in sorted_desc(eig.eigenvalues.as_slice()).into_iter().take(target_dim) {
            components.push(eig.eigenvectors.column(idx).iter().copied().collect());
        }
    }
    components.resize(target_dim, vec![0.0; dl]);
    for c in components.iter_mut().filter(|c| !c.is_empty()) {
        let mut big = 0;
        for (i, v) in c.iter().enumerate() {
            if v.abs() > c[big].abs() {
                big = i;
            }
        }
        if c[big] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let out: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| x.row(i).iter().zip(c).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    if out.iter().flatten().any(|v: &f64| !v.is_finite()) {
        return Err(Error::Internal("projection produced non-finite values".into()));
    }
    Ok(out)
}

fn sorted_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Default projection size: min(dim, 10·⌈log2 n⌉), at least 1.
pub fn default_target_dim(dim: usize, n: usize) -> usize {
    let log = (n.max(2) as f64).log2().ceil() as usize;
    dim.min(10 * log).max(1)
}

/// Default upper bound for `select_k`: ⌈√n⌉ capped at [`K_MAX_CAP`].
pub fn default_k_max(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).clamp(1, K_MAX_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub threshold: f64,
    /// `None` means [`default_k_max`].
    pub k_max: Option<usize>,
    /// `None` means [`default_target_dim`]; `Some(0)` disables projection.
    pub target_dim: Option<usize>,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            threshold: DEFAULT_THRESHOLD,
            k_max: None,
            target_dim: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub model: GmmModel,
    pub assignment: SoftAssignment,
    /// Member indices (into the caller's order) per nonempty component.
    pub clusters: Vec<Vec<usize>>,
}

/// Project, select k, soft-assign. Indices in the result refer to the
/// caller's order, but every numeric step runs in canonical order.
pub fn cluster(vectors: &[Vec<f64>], cfg: &ClusteringConfig) -> Result<Clustering> {
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::Config(format!(
            "soft threshold {} must be in (0, 1)",
            cfg.threshold
        )));
    }
    let d = check_dims(vectors)?;
    let n = vectors.len();
    let order = canonical_order(vectors);
    let canon: Vec<Vec<f64>> = order.iter().map(|&i| vectors[i].clone()).collect();
    // projecting beyond n dims only adds constant zero coordinates
    let target = cfg.target_dim.unwrap_or_else(|| default_target_dim(d, n).min(n));
    let reduced = if target == 0 || target >= d || n < 2 {
        canon
    } else {
        reduce_dim(&canon, target)?
    };
    let k_max = cfg.k_max.unwrap_or_else(|| default_k_max(n));
    let model = select_k(&reduced, k_max, cfg.seed)?;
    let canon_assign = soft_assign(&model, &reduced, cfg.threshold);

    let mut responsibilities = vec![Vec::new(); n];
    let mut memberships = vec![Vec::new(); n];
    for (pos, &orig) in order.iter().enumerate() {
        responsibilities[orig] = canon_assign.responsibilities[pos].clone();
        memberships[orig] = canon_assign.memberships[pos].clone();
    }
    let assignment = SoftAssignment {
        responsibilities,
        memberships,
    };
    let clusters = assignment.clusters();
    Ok(Clustering {
        model,
        assignment,
        clusters,
    })
}
