//! Soft GMM clustering: BIC picks k on two blobs, and a point halfway
//! between two symmetric components belongs to both at threshold 0.1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sirerag::clustering::{cluster, soft_assign, ClusteringConfig, GmmModel};

fn main() -> sirerag::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let centers = [[0.0, 0.0], [6.0, 0.0]];
    let mut points: Vec<Vec<f64>> = Vec::new();
    for c in &centers {
        for _ in 0..40 {
            points.push(vec![c[0] + rng.gen_range(-1.0..1.0), c[1] + rng.gen_range(-1.0..1.0)]);
        }
    }

    let cfg = ClusteringConfig {
        target_dim: Some(0),
        ..ClusteringConfig::default()
    };
    let c = cluster(&points, &cfg)?;
    println!("k = {}  bic = {:.2}  iterations = {}", c.model.k, c.model.bic(points.len()), c.model.n_iter);
    for (i, members) in c.clusters.iter().enumerate() {
        println!("cluster {i}: {} members", members.len());
    }

    let symmetric = GmmModel {
        k: 2,
        means: vec![vec![0.0, 0.0], vec![6.0, 0.0]],
        variances: vec![vec![1.0, 1.0]; 2],
        weights: vec![0.5, 0.5],
        log_likelihood: 0.0,
        n_iter: 0,
        history: Vec::new(),
    };
    let probe = vec![vec![3.0, 0.0], vec![0.0, 0.0]];
    for threshold in [0.1, 0.999] {
        let a = soft_assign(&symmetric, &probe, threshold);
        println!(
            "threshold {threshold}: midpoint {:?} {:?}, at a mean {:?}",
            a.responsibilities[0], a.memberships[0], a.memberships[1]
        );
    }
    Ok(())
}
