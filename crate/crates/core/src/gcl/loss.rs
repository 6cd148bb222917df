//! Contrastive losses and their gradients with respect to embeddings.

use crate::gcl::params::Mlp;
use crate::gcl::tensor::{axpy, cosine, cosine_grad, dot, sigmoid, softplus, Mat};
use crate::gcl::GclError;

/// Loss value plus gradients for the node rows and graph vectors of each graph in a batch.
#[derive(Debug, Clone)]
pub struct InfoGraphOut {
    pub loss: f64,
    pub d_nodes: Vec<Mat>,
    pub d_graphs: Vec<Vec<f64>>,
    pub d_critic: Mat,
    /// Node/graph pairs scored as negatives.
    pub negative_pairs: usize,
}

/// Jensen-Shannon mutual-information loss with bilinear critic `D(h, z) = hᵀ M z`.
///
/// Positive pairs are each node with its own graph; negatives are each node with every
/// other graph in the batch. Both terms are averaged over their own pair counts.
pub fn infograph_loss(nodes: &[&Mat], graphs: &[Vec<f64>], critic: &Mat) -> Result<InfoGraphOut, GclError> {
    let b = graphs.len();
    if b < 2 {
        return Err(GclError::BatchTooSmall { size: b, needed: 2 });
    }
    assert_eq!(nodes.len(), b, "one node matrix per graph");
    let mz: Vec<Vec<f64>> = graphs.iter().map(|z| critic.matvec(z)).collect();
    let n_pos: usize = nodes.iter().map(|h| h.rows).sum();
    let n_neg = n_pos * (b - 1);
    let (wp, wn) = (1.0 / n_pos as f64, 1.0 / n_neg as f64);

    let mut loss = 0.0;
    let mut d_nodes: Vec<Mat> = nodes.iter().map(|h| h.zeros_like()).collect();
    let mut d_mz = vec![vec![0.0; critic.rows]; b];
    for (g, h) in nodes.iter().enumerate() {
        for i in 0..h.rows {
            let hi = h.row(i);
            for (k, mzk) in mz.iter().enumerate() {
                let s = dot(hi, mzk);
                // ∂softplus(−s)/∂s = −σ(−s), ∂softplus(s)/∂s = σ(s)
                let ds = if k == g {
                    loss += wp * softplus(-s);
                    -wp * sigmoid(-s)
                } else {
                    loss += wn * softplus(s);
                    wn * sigmoid(s)
                };
                axpy(ds, mzk, d_nodes[g].row_mut(i));
                axpy(ds, hi, &mut d_mz[k]);
            }
        }
    }
    let mut d_critic = critic.zeros_like();
    let mut d_graphs = Vec::with_capacity(b);
    for (z, dm) in graphs.iter().zip(&d_mz) {
        d_critic.add_outer(dm, z);
        let mut dz = vec![0.0; critic.cols];
        critic.matvec_t_add(dm, &mut dz);
        d_graphs.push(dz);
    }
    Ok(InfoGraphOut { loss, d_nodes, d_graphs, d_critic, negative_pairs: n_neg })
}

/// Normalized-temperature cross entropy over two views per graph.
///
/// Returns the mean loss over all `2N` anchors and the gradient for every view vector.
pub fn graphcl_loss(views: &[[Vec<f64>; 2]], tau: f64) -> Result<(f64, Vec<[Vec<f64>; 2]>), GclError> {
    let n = views.len();
    if n < 2 {
        return Err(GclError::BatchTooSmall { size: n, needed: 2 });
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GclError::InvalidConfig(format!("temperature {tau} must be positive")));
    }
    let flat: Vec<&Vec<f64>> = views.iter().flat_map(|v| [&v[0], &v[1]]).collect();
    let m = flat.len();
    let partner = |i: usize| i ^ 1;
    let mut sims = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            sims[i * m + k] = cosine(flat[i], flat[k]) / tau;
        }
    }
    let mut loss = 0.0;
    let mut d_sims = vec![0.0; m * m];
    for i in 0..m {
        let row = &sims[i * m..(i + 1) * m];
        let max = (0..m).filter(|&k| k != i).map(|k| row[k]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..m).filter(|&k| k != i).map(|k| (row[k] - max).exp()).sum();
        loss += -(row[partner(i)] - max) + z.ln();
        for k in (0..m).filter(|&k| k != i) {
            let p = (row[k] - max).exp() / z;
            d_sims[i * m + k] += (p - if k == partner(i) { 1.0 } else { 0.0 }) / m as f64;
        }
    }
    let dim = flat[0].len();
    let mut grads = vec![vec![0.0; dim]; m];
    for i in 0..m {
        for k in 0..m {
            let ds = d_sims[i * m + k];
            if ds != 0.0 {
                let (_, ga, gb) = cosine_grad(flat[i], flat[k]);
                axpy(ds / tau, &ga, &mut grads[i]);
                axpy(ds / tau, &gb, &mut grads[k]);
            }
        }
    }
    let mut it = grads.into_iter();
    let paired = (0..n).map(|_| [it.next().unwrap(), it.next().unwrap()]).collect();
    Ok((loss / m as f64, paired))
}

/// Symmetrized node-level BGRL loss for one pair of views.
///
/// `shared` lists `(row in view 1, row in view 2)` for nodes present in both views.
/// The result is `[2 − 2·mean cos(p1, t2)] + [2 − 2·mean cos(p2, t1)]`, and gradients are
/// returned for the online predictions only.
pub fn bgrl_loss(
    pred: [&Mat; 2],
    target: [&Mat; 2],
    shared: &[(usize, usize)],
) -> Result<(f64, [Mat; 2]), GclError> {
    if shared.is_empty() {
        return Err(GclError::NoSharedNodes);
    }
    let w = 1.0 / shared.len() as f64;
    let mut d = [pred[0].zeros_like(), pred[1].zeros_like()];
    let mut loss = 4.0;
    for &(r1, r2) in shared {
        for (from, to, rp, rt) in [(0, 1, r1, r2), (1, 0, r2, r1)] {
            let (c, gp, _) = cosine_grad(pred[from].row(rp), target[to].row(rt));
            loss -= 2.0 * w * c;
            axpy(-2.0 * w, &gp, d[from].row_mut(rp));
        }
    }
    Ok((loss, d))
}

/// Activations of an [`Mlp`] applied to one vector.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

pub fn mlp_forward(mlp: &Mlp, x: &[f64]) -> MlpCache {
    let mut hidden = mlp.w1.matvec(x);
    for (h, b) in hidden.iter_mut().zip(&mlp.b1.data) {
        *h = (*h + b).max(0.0);
    }
    let mut output = mlp.w2.matvec(&hidden);
    axpy(1.0, &mlp.b2.data, &mut output);
    MlpCache { input: x.to_vec(), hidden, output }
}

/// Accumulates parameter gradients and returns `∂L/∂x`.
pub fn mlp_backward(mlp: &Mlp, cache: &MlpCache, d_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
    grads.w2.add_outer(d_out, &cache.hidden);
    axpy(1.0, d_out, &mut grads.b2.data);
    let mut d_hidden = vec![0.0; cache.hidden.len()];
    mlp.w2.matvec_t_add(d_out, &mut d_hidden);
    for (d, &h) in d_hidden.iter_mut().zip(&cache.hidden) {
        if h <= 0.0 {
            *d = 0.0;
        }
    }
    grads.w1.add_outer(&d_hidden, &cache.input);
    axpy(1.0, &d_hidden, &mut grads.b1.data);
    let mut d_in = vec![0.0; cache.input.len()];
    mlp.w1.matvec_t_add(&d_hidden, &mut d_in);
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(r: usize, c: usize, seed: u64) -> Mat {
        Mat::uniform(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn infograph_with_zero_critic_is_two_ln_two() {
        let (a, b) = (rand_mat(3, 4, 1), rand_mat(5, 4, 2));
        let out = infograph_loss(&[&a, &b], &[a.mean_rows(), b.mean_rows()], &Mat::zeros(4, 4)).unwrap();
        assert!((out.loss - 1.386294).abs() < 1e-6);
        assert!((out.loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(out.negative_pairs, 8);
    }

    #[test]
    fn infograph_vanishes_for_separated_scores() {
        // nodes aligned with their own graph vector and opposed to the other one
        let a = Mat::from_rows(&[vec![1.0, 0.0]]);
        let b = Mat::from_rows(&[vec![0.0, 1.0]]);
        let graphs = [vec![1.0, -1.0], vec![-1.0, 1.0]];
        let mut m = Mat::zeros(2, 2);
        let mut prev = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0, 500.0] {
            m.data = vec![scale, 0.0, 0.0, scale];
            let l = infograph_loss(&[&a, &b], &graphs, &m).unwrap().loss;
            assert!(l > 0.0 && l < prev);
            prev = l;
        }
        assert!(prev < 1e-200);
    }

    #[test]
    fn infograph_needs_two_graphs() {
        let a = rand_mat(2, 3, 0);
        assert!(matches!(
            infograph_loss(&[&a], &[a.mean_rows()], &Mat::zeros(3, 3)),
            Err(GclError::BatchTooSmall { size: 1, .. })
        ));
    }

    #[test]
    fn graphcl_closed_forms() {
        let e1 = vec![1.0, 0.0, 0.0];
        let e2 = vec![0.0, 1.0, 0.0];
        let (l, _) = graphcl_loss(&[[e1.clone(), e1.clone()], [e2.clone(), e2]], 0.5).unwrap();
        assert!((l - (1.0 + 2.0 * (-2.0f64).exp()).ln()).abs() < 1e-9);
        assert!((l - 0.239545).abs() < 1e-6);

        let (l, g) = graphcl_loss(&[[e1.clone(), e1.clone()], [e1.clone(), e1.clone()]], 0.5).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-9);
        assert!(g.iter().flatten().flatten().all(|x| x.abs() < 1e-9));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let views: Vec<[Vec<f64>; 2]> =
            (0..2).map(|_| [0, 1].map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        let (l, _) = graphcl_loss(&views, 1e9).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-6);
        assert!(graphcl_loss(&views[..1], 0.5).is_err());
        assert!(graphcl_loss(&views, 0.0).is_err());
    }

    #[test]
    fn graphcl_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let views: Vec<[Vec<f64>; 2]> =
            (0..3).map(|_| [0, 1].map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        let (_, g) = graphcl_loss(&views, 0.5).unwrap();
        let h = 1e-6;
        for gi in 0..3 {
            for v in 0..2 {
                for k in 0..4 {
                    let mut up = views.clone();
                    up[gi][v][k] += h;
                    let mut down = views.clone();
                    down[gi][v][k] -= h;
                    let num = (graphcl_loss(&up, 0.5).unwrap().0 - graphcl_loss(&down, 0.5).unwrap().0) / (2.0 * h);
                    assert!((num - g[gi][v][k]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn bgrl_extremes() {
        let p = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let (l, _) = bgrl_loss([&p, &p], [&p, &p], &[(0, 0), (1, 1)]).unwrap();
        assert!(l.abs() < 1e-9);
        let q = Mat::from_rows(&[vec![0.0, 3.0], vec![-1.0, 0.0]]);
        let (l, _) = bgrl_loss([&p, &p], [&q, &q], &[(0, 0), (1, 1)]).unwrap();
        assert!((l - 4.0).abs() < 1e-9);
        let (l, _) = bgrl_loss([&p, &p], [&p.clone(), &Mat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]])], &[(0, 0), (1, 1)]).unwrap();
        assert!((0.0..=8.0).contains(&l));
        assert!(matches!(bgrl_loss([&p, &p], [&p, &p], &[]), Err(GclError::NoSharedNodes)));
    }

    #[test]
    fn bgrl_gradient_matches_differences() {
        let (p1, p2, t1, t2) = (rand_mat(3, 4, 1), rand_mat(2, 4, 2), rand_mat(3, 4, 3), rand_mat(2, 4, 4));
        let shared = [(0, 1), (2, 0)];
        let (_, d) = bgrl_loss([&p1, &p2], [&t1, &t2], &shared).unwrap();
        let h = 1e-6;
        for (which, base) in [(0, &p1), (1, &p2)] {
            for k in 0..base.data.len() {
                let mut up = base.clone();
                up.data[k] += h;
                let mut down = base.clone();
                down.data[k] -= h;
                let eval = |m: &Mat| {
                    let pair = if which == 0 { [m, &p2] } else { [&p1, m] };
                    bgrl_loss(pair, [&t1, &t2], &shared).unwrap().0
                };
                let num = (eval(&up) - eval(&down)) / (2.0 * h);
                assert!((num - d[which].data[k]).abs() < 1e-7);
            }
        }
    }
}
