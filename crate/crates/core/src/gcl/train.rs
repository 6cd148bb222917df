//! Batched training under the three contrastive objectives.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gcl::augment::{drop_nodes_with, perturb_edges_with, AugmentConfig, View};
use crate::gcl::encoder::{backward, forward, readout_backward, GraphInput};
use crate::gcl::loss::{bgrl_loss, graphcl_loss, infograph_loss, mlp_backward, mlp_forward};
use crate::gcl::params::{ema_update, Adam, EncoderParams, Objective};
use crate::gcl::tensor::Mat;
use crate::gcl::GclError;
use crate::graph::FormulaGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// NT-Xent temperature (GraphCL).
    pub temperature: f64,
    /// Target-encoder decay (BGRL).
    pub ema_decay: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::GraphCl,
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            temperature: 0.5,
            ema_decay: 0.99,
            augment: AugmentConfig::default(),
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GclError> {
        let bad = |m: String| Err(GclError::InvalidConfig(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad(format!("EMA decay {} outside [0, 1)", self.ema_decay));
        }
        self.augment.validate().map_err(GclError::InvalidConfig)
    }
}

/// What the training loop did, for checking each objective's contract.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainCounters {
    pub steps: usize,
    /// Graph occurrences across all batches.
    pub graphs_seen: usize,
    /// Encoded inputs (original graphs or augmented views).
    pub views: usize,
    pub augmentations: usize,
    pub negative_pairs: usize,
    pub ema_updates: usize,
}

impl TrainCounters {
    pub fn views_per_graph(&self) -> f64 {
        self.views as f64 / self.graphs_seen.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    /// Mean batch loss of every epoch.
    pub loss_curve: Vec<f64>,
    pub counters: TrainCounters,
}

/// A pair of augmented views with the rows that refer to the same base node.
#[derive(Debug, Clone)]
pub struct ViewPair {
    pub views: [GraphInput; 2],
    /// `(row in view 1, row in view 2)`.
    pub shared: Vec<(usize, usize)>,
}

/// A fully materialized batch; loss evaluation on it is deterministic.
#[derive(Debug, Clone)]
pub enum Batch {
    InfoGraph(Vec<GraphInput>),
    GraphCl(Vec<[GraphInput; 2]>),
    Bgrl(Vec<ViewPair>),
}

impl Batch {
    pub fn graphs(&self) -> usize {
        match self {
            Batch::InfoGraph(b) => b.len(),
            Batch::GraphCl(b) => b.len(),
            Batch::Bgrl(b) => b.len(),
        }
    }

    pub fn views(&self) -> usize {
        match self {
            Batch::InfoGraph(b) => b.len(),
            Batch::GraphCl(b) => 2 * b.len(),
            Batch::Bgrl(b) => 2 * b.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    pub grads: EncoderParams,
    pub negative_pairs: usize,
}

fn view_input(view: &View, features: &Mat) -> Result<GraphInput, GclError> {
    let rows: Vec<Vec<f64>> = view.origin.iter().map(|&o| features.row(o).to_vec()).collect();
    GraphInput::new(&view.graph, Mat::from_rows(&rows))
}

fn augment(g: &FormulaGraph, cfg: &AugmentConfig, rng: &mut impl Rng) -> View {
    // one perturbation per view, drawn uniformly from the two kinds
    if rng.random_bool(0.5) {
        drop_nodes_with(g, cfg.node_drop_ratio, rng)
    } else {
        perturb_edges_with(g, cfg.edge_perturb_ratio, rng)
    }
}

/// Draws the views a batch needs. Counts augmentations in `counters`.
pub fn make_batch(
    objective: Objective,
    graphs: &[&FormulaGraph],
    features: &[&Mat],
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
    counters: &mut TrainCounters,
) -> Result<Batch, GclError> {
    let mut two_views = |g: &FormulaGraph, x: &Mat| -> Result<(View, View, [GraphInput; 2]), GclError> {
        let (a, b) = (augment(g, cfg, rng), augment(g, cfg, rng));
        counters.augmentations += 2;
        let inputs = [view_input(&a, x)?, view_input(&b, x)?];
        Ok((a, b, inputs))
    };
    Ok(match objective {
        Objective::InfoGraph => Batch::InfoGraph(
            graphs.iter().zip(features).map(|(g, x)| GraphInput::new(g, (*x).clone())).collect::<Result<_, _>>()?,
        ),
        Objective::GraphCl => {
            let mut out = Vec::with_capacity(graphs.len());
            for (g, x) in graphs.iter().zip(features) {
                out.push(two_views(g, x)?.2);
            }
            Batch::GraphCl(out)
        }
        Objective::Bgrl => {
            let mut out = Vec::with_capacity(graphs.len());
            for (g, x) in graphs.iter().zip(features) {
                let (a, b, views) = two_views(g, x)?;
                let in_b: HashMap<usize, usize> = b.origin.iter().enumerate().map(|(r, &o)| (o, r)).collect();
                let shared = a.origin.iter().enumerate().filter_map(|(r, o)| in_b.get(o).map(|&r2| (r, r2))).collect();
                out.push(ViewPair { views, shared });
            }
            Batch::Bgrl(out)
        }
    })
}

fn missing(head: &'static str) -> GclError {
    GclError::MissingHead(head)
}

/// Loss and gradients of the trainable parameters on a materialized batch.
pub fn batch_loss(params: &EncoderParams, batch: &Batch, temperature: f64) -> Result<StepOutput, GclError> {
    let mut grads = params.zero_grad();
    let enc = &params.encoder;
    match batch {
        Batch::InfoGraph(inputs) => {
            let critic = params.discriminator.as_ref().ok_or(missing("discriminator"))?;
            let caches: Vec<_> = inputs.iter().map(|x| forward(enc, x)).collect();
            let zs: Vec<Vec<f64>> = caches.iter().map(|c| c.readout()).collect();
            let nodes: Vec<&Mat> = caches.iter().map(|c| c.nodes()).collect();
            let out = infograph_loss(&nodes, &zs, critic)?;
            for (((x, c), mut d), dz) in inputs.iter().zip(&caches).zip(out.d_nodes).zip(&out.d_graphs) {
                readout_backward(dz, &mut d);
                backward(enc, x, c, &d, &mut grads.encoder);
            }
            grads.discriminator = Some(out.d_critic);
            Ok(StepOutput { loss: out.loss, grads, negative_pairs: out.negative_pairs })
        }
        Batch::GraphCl(pairs) => {
            let proj = params.projector.as_ref().ok_or(missing("projector"))?;
            let caches: Vec<[_; 2]> = pairs.iter().map(|p| [forward(enc, &p[0]), forward(enc, &p[1])]).collect();
            let heads: Vec<[_; 2]> =
                caches.iter().map(|c| [mlp_forward(proj, &c[0].readout()), mlp_forward(proj, &c[1].readout())]).collect();
            let projected: Vec<[Vec<f64>; 2]> = heads.iter().map(|h| [h[0].output.clone(), h[1].output.clone()]).collect();
            let (loss, d_views) = graphcl_loss(&projected, temperature)?;
            let head_grads = grads.projector.as_mut().expect("gradient buffer mirrors params");
            let mut d_z: Vec<[Vec<f64>; 2]> = Vec::with_capacity(pairs.len());
            for (h, d) in heads.iter().zip(&d_views) {
                d_z.push([mlp_backward(proj, &h[0], &d[0], head_grads), mlp_backward(proj, &h[1], &d[1], head_grads)]);
            }
            for ((p, c), dz) in pairs.iter().zip(&caches).zip(&d_z) {
                for v in 0..2 {
                    let mut d = c[v].nodes().zeros_like();
                    readout_backward(&dz[v], &mut d);
                    backward(enc, &p[v], &c[v], &d, &mut grads.encoder);
                }
            }
            let m = 2 * pairs.len();
            Ok(StepOutput { loss, grads, negative_pairs: m * (m - 2) })
        }
        Batch::Bgrl(pairs) => {
            let pred = params.predictor.as_ref().ok_or(missing("predictor"))?;
            let target = params.target.as_ref().ok_or(missing("target encoder"))?;
            let scale = 1.0 / pairs.len() as f64;
            let mut total = 0.0;
            for pair in pairs {
                let online = [forward(enc, &pair.views[0]), forward(enc, &pair.views[1])];
                let tgt = [forward(target, &pair.views[0]).h2, forward(target, &pair.views[1]).h2];
                let heads: [Vec<_>; 2] = [0, 1].map(|v| {
                    let h = online[v].nodes();
                    (0..h.rows).map(|i| mlp_forward(pred, h.row(i))).collect()
                });
                let preds: [Mat; 2] =
                    [0, 1].map(|v| Mat::from_rows(&heads[v].iter().map(|c| c.output.clone()).collect::<Vec<_>>()));
                let (loss, d_pred) = bgrl_loss([&preds[0], &preds[1]], [&tgt[0], &tgt[1]], &pair.shared)?;
                total += scale * loss;
                let head_grads = grads.predictor.as_mut().expect("gradient buffer mirrors params");
                let mut d_nodes = [online[0].nodes().zeros_like(), online[1].nodes().zeros_like()];
                for v in 0..2 {
                    for (i, cache) in heads[v].iter().enumerate() {
                        let d_out: Vec<f64> = d_pred[v].row(i).iter().map(|x| x * scale).collect();
                        if d_out.iter().any(|&x| x != 0.0) {
                            let d_in = mlp_backward(pred, cache, &d_out, head_grads);
                            d_nodes[v].row_mut(i).copy_from_slice(&d_in);
                        }
                    }
                }
                for v in 0..2 {
                    backward(enc, &pair.views[v], &online[v], &d_nodes[v], &mut grads.encoder);
                }
            }
            Ok(StepOutput { loss: total, grads, negative_pairs: 0 })
        }
    }
}

/// Splits a shuffled order into batches, folding a trailing singleton into the previous batch.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        let last = out.len() - 1;
        out[last] = &order[start..];
    }
    out
}

/// Trains encoder and head parameters; `features[i]` holds one row per node of `graphs[i]`.
pub fn train(graphs: &[FormulaGraph], features: &[Mat], config: &TrainConfig) -> Result<TrainOutcome, GclError> {
    config.validate()?;
    assert_eq!(graphs.len(), features.len(), "one feature matrix per graph");
    let objective = config.objective;
    let needed = if objective.uses_negatives() { 2 } else { 1 };
    if graphs.len() < needed {
        return Err(GclError::BatchTooSmall { size: graphs.len(), needed });
    }
    let dim = features[0].cols;
    for (g, x) in graphs.iter().zip(features) {
        if g.is_empty() {
            return Err(GclError::EmptyGraph);
        }
        if x.rows != g.len() || x.cols != dim {
            return Err(GclError::DimensionMismatch { what: "feature matrix", expected: g.len() * dim, found: x.rows * x.cols });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(config.augment.seed);
    aug_rng.set_stream(config.seed);
    let mut params = EncoderParams::init(objective, dim, &mut rng);
    let mut adam = Adam::new(config.learning_rate, params.to_flat().len());
    let mut counters = TrainCounters::default();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..graphs.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let chunks = batches(&order, config.batch_size.max(needed));
        for (step, ids) in chunks.iter().enumerate() {
            let gs: Vec<&FormulaGraph> = ids.iter().map(|&i| &graphs[i]).collect();
            let xs: Vec<&Mat> = ids.iter().map(|&i| &features[i]).collect();
            let batch = make_batch(objective, &gs, &xs, &config.augment, &mut aug_rng, &mut counters)?;
            let out = batch_loss(&params, &batch, config.temperature)?;
            if !out.loss.is_finite() || !out.grads.is_finite() {
                return Err(GclError::NonFiniteLoss { epoch, step, loss: out.loss });
            }
            adam.step(&mut params, &out.grads);
            if let Some(target) = params.target.as_mut() {
                ema_update(target, &params.encoder, config.ema_decay)?;
                counters.ema_updates += 1;
            }
            counters.steps += 1;
            counters.graphs_seen += batch.graphs();
            counters.views += batch.views();
            counters.negative_pairs += out.negative_pairs;
            epoch_loss += out.loss;
        }
        let mean = epoch_loss / chunks.len() as f64;
        log::info!("epoch {epoch} objective {objective} mean loss {mean:.6}");
        loss_curve.push(mean);
    }
    params.round_to_f32();
    Ok(TrainOutcome { params, loss_curve, counters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_opt, build_slt};
    use crate::latex::parse_latex;

    fn corpus() -> (Vec<FormulaGraph>, Vec<Mat>) {
        let formulas = ["a^2+b^2=c^2", "\\frac{x}{y}", "x_1+x_2", "\\sqrt{z}", "e^{i\\pi}+1=0", "a+b", "f(x)=x^2"];
        let graphs: Vec<FormulaGraph> = formulas.iter().map(|f| build_slt(&parse_latex(f).unwrap())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let feats = graphs.iter().map(|g| Mat::uniform(g.len(), 8, 0.5, &mut rng)).collect();
        (graphs, feats)
    }

    fn small(objective: Objective) -> TrainConfig {
        TrainConfig { objective, epochs: 3, batch_size: 4, learning_rate: 1e-2, ..TrainConfig::default() }
    }

    #[test]
    fn batching_never_leaves_a_singleton() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), [4, 5]);
        assert_eq!(batches(&order[..8], 4).len(), 2);
        assert_eq!(batches(&order[..1], 4), [&[0][..]]);
    }

    #[test]
    fn one_graph_is_too_few_for_negatives() {
        let (g, x) = corpus();
        for o in [Objective::InfoGraph, Objective::GraphCl] {
            assert!(matches!(train(&g[..1], &x[..1], &small(o)), Err(GclError::BatchTooSmall { size: 1, needed: 2 })));
        }
        assert!(train(&g[..1], &x[..1], &small(Objective::Bgrl)).is_ok());
    }

    #[test]
    fn runs_are_deterministic_and_counted() {
        let (g, x) = corpus();
        for o in Objective::ALL {
            let a = train(&g, &x, &small(o)).unwrap();
            let b = train(&g, &x, &small(o)).unwrap();
            assert_eq!(a.loss_curve, b.loss_curve);
            assert_eq!(a.params, b.params);
            assert_eq!(a.loss_curve.len(), 3);
            let c = a.counters;
            assert_eq!(c.graphs_seen, 3 * 7);
            match o {
                Objective::InfoGraph => {
                    assert_eq!(c.augmentations, 0);
                    assert_eq!(c.views, c.graphs_seen);
                    assert!(c.negative_pairs > 0);
                }
                Objective::GraphCl => {
                    assert_eq!(c.views, 2 * c.graphs_seen);
                    assert_eq!(c.augmentations, 2 * c.graphs_seen);
                }
                Objective::Bgrl => assert_eq!(c.negative_pairs, 0),
            }
            assert_eq!(c.ema_updates > 0, o == Objective::Bgrl);
        }
    }

    #[test]
    fn target_moves_only_by_ema() {
        let (g, x) = corpus();
        let cfg = TrainConfig { epochs: 1, batch_size: 64, ..small(Objective::Bgrl) };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = EncoderParams::init(Objective::Bgrl, 8, &mut rng);
        let out = train(&g, &x, &cfg).unwrap();
        // one step: target = d·target0 + (1−d)·online1, where target0 is the initial encoder
        let mut want = init.target.clone().unwrap();
        ema_update(&mut want, &out.params.encoder, cfg.ema_decay).unwrap();
        let got = out.params.target.unwrap();
        for (a, b) in got.w1.data.iter().zip(&want.w1.data) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(out.counters.ema_updates, 1);
    }

    #[test]
    fn opt_graphs_train_too() {
        let formulas = ["a+b", "a\\cdot b", "(a+b)^2", "x=y"];
        let graphs: Vec<FormulaGraph> = formulas.iter().map(|f| build_opt(&parse_latex(f).unwrap())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let feats: Vec<Mat> = graphs.iter().map(|g| Mat::uniform(g.len(), 6, 0.5, &mut rng)).collect();
        for o in Objective::ALL {
            let out = train(&graphs, &feats, &small(o)).unwrap();
            assert!(out.loss_curve.iter().all(|l| l.is_finite()));
        }
    }
}
