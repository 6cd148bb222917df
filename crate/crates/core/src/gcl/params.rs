use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gcl::tensor::Mat;
use crate::gcl::GclError;
use crate::graph::RELATION_SLOTS;

/// Contrastive training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    InfoGraph,
    GraphCl,
    Bgrl,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::InfoGraph, Objective::GraphCl, Objective::Bgrl];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::InfoGraph => "infograph",
            Objective::GraphCl => "graphcl",
            Objective::Bgrl => "bgrl",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Objective::InfoGraph => 0,
            Objective::GraphCl => 1,
            Objective::Bgrl => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.tag() == tag)
    }

    pub fn uses_augmentation(self) -> bool {
        self != Objective::InfoGraph
    }

    pub fn uses_negatives(self) -> bool {
        self != Objective::Bgrl
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown objective {s:?} (expected infograph, graphcl or bgrl)"))
    }
}

/// Two-layer relation-aware message-passing encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
    /// One additive embedding per relation slot.
    pub rel: Mat,
}

impl Encoder {
    pub fn init(dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: Mat::glorot(dim, dim, rng),
            b1: Mat::zeros(1, dim),
            w2: Mat::glorot(dim, dim, rng),
            b2: Mat::zeros(1, dim),
            rel: Mat::uniform(RELATION_SLOTS, dim, 0.1, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.cols
    }

    fn tensors(&self) -> [(&'static str, &Mat); 5] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2), ("rel", &self.rel)]
    }

    fn tensors_mut(&mut self) -> [&mut Mat; 5] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.rel]
    }
}

/// `W2 · ReLU(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

impl Mlp {
    pub fn init(dim: usize, rng: &mut impl Rng) -> Self {
        Self { w1: Mat::glorot(dim, dim, rng), b1: Mat::zeros(1, dim), w2: Mat::glorot(dim, dim, rng), b2: Mat::zeros(1, dim) }
    }

    fn tensors(&self) -> [(&'static str, &Mat); 4] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    fn tensors_mut(&mut self) -> [&mut Mat; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Encoder weights plus the heads a given objective needs.
///
/// Only the head belonging to `objective` is present. The BGRL target encoder is
/// never part of [`EncoderParams::trainable`]; it moves only through [`ema_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub objective: Objective,
    pub encoder: Encoder,
    /// Bilinear critic (InfoGraph).
    pub discriminator: Option<Mat>,
    /// Graph-level projection head (GraphCL).
    pub projector: Option<Mlp>,
    /// Node-level predictor (BGRL).
    pub predictor: Option<Mlp>,
    /// EMA copy of the encoder (BGRL).
    pub target: Option<Encoder>,
}

impl EncoderParams {
    pub fn init(objective: Objective, dim: usize, rng: &mut impl Rng) -> Self {
        let encoder = Encoder::init(dim, rng);
        let mut p = Self { objective, encoder, discriminator: None, projector: None, predictor: None, target: None };
        match objective {
            Objective::InfoGraph => p.discriminator = Some(Mat::glorot(dim, dim, rng)),
            Objective::GraphCl => p.projector = Some(Mlp::init(dim, rng)),
            Objective::Bgrl => {
                p.predictor = Some(Mlp::init(dim, rng));
                p.target = Some(p.encoder.clone());
            }
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    /// Zero-valued gradient buffer with the trainable shapes.
    pub fn zero_grad(&self) -> Self {
        let mut g = self.clone();
        g.target = None;
        for t in g.trainable_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        g
    }

    pub fn trainable(&self) -> Vec<&Mat> {
        self.named_tensors().into_iter().filter(|(n, _)| !n.starts_with("target.")).map(|(_, t)| t).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Mat> {
        self.named_tensors_mut().into_iter().filter(|(n, _)| !n.starts_with("target.")).map(|(_, t)| t).collect()
    }

    /// Every tensor with a stable dotted name, trainable ones first.
    pub fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = self.encoder.tensors().into_iter().map(|(n, t)| (format!("encoder.{n}"), t)).collect();
        if let Some(m) = &self.discriminator {
            out.push(("discriminator".into(), m));
        }
        if let Some(h) = &self.projector {
            out.extend(h.tensors().into_iter().map(|(n, t)| (format!("projector.{n}"), t)));
        }
        if let Some(h) = &self.predictor {
            out.extend(h.tensors().into_iter().map(|(n, t)| (format!("predictor.{n}"), t)));
        }
        if let Some(e) = &self.target {
            out.extend(e.tensors().into_iter().map(|(n, t)| (format!("target.{n}"), t)));
        }
        out
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out: Vec<(String, &mut Mat)> = Vec::new();
        let names = ["w1", "b1", "w2", "b2", "rel"];
        out.extend(names.iter().zip(self.encoder.tensors_mut()).map(|(n, t)| (format!("encoder.{n}"), t)));
        if let Some(m) = &mut self.discriminator {
            out.push(("discriminator".into(), m));
        }
        if let Some(h) = &mut self.projector {
            out.extend(names.iter().zip(h.tensors_mut()).map(|(n, t)| (format!("projector.{n}"), t)));
        }
        if let Some(h) = &mut self.predictor {
            out.extend(names.iter().zip(h.tensors_mut()).map(|(n, t)| (format!("predictor.{n}"), t)));
        }
        if let Some(e) = &mut self.target {
            out.extend(names.iter().zip(e.tensors_mut()).map(|(n, t)| (format!("target.{n}"), t)));
        }
        out
    }

    /// Trainable parameters concatenated in [`EncoderParams::trainable`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.trainable().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        for t in self.trainable_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        assert_eq!(at, flat.len(), "flat parameter length");
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Rounds every parameter to the nearest 32-bit float, matching what a checkpoint stores.
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.named_tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }
}

/// Moves every target parameter toward the online encoder: `θt ← d·θt + (1−d)·θo`.
pub fn ema_update(target: &mut Encoder, online: &Encoder, decay: f64) -> Result<(), GclError> {
    if !(0.0..1.0).contains(&decay) {
        return Err(GclError::InvalidConfig(format!("EMA decay {decay} outside [0, 1)")));
    }
    let sources = online.tensors();
    for (t, (name, o)) in target.tensors_mut().into_iter().zip(sources) {
        if !t.same_shape(o) {
            return Err(GclError::ShapeMismatch {
                tensor: name.into(),
                expected: (o.rows, o.cols),
                found: (t.rows, t.cols),
            });
        }
        for (x, y) in t.data.iter_mut().zip(&o.data) {
            *x = decay * *x + (1.0 - decay) * y;
        }
    }
    Ok(())
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to the trainable tensors of `params` given matching gradients.
    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let grad_tensors = grads.trainable();
        let mut k = 0;
        for (p, g) in params.trainable_mut().into_iter().zip(grad_tensors) {
            debug_assert!(p.same_shape(g));
            for (x, &gi) in p.data.iter_mut().zip(&g.data) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *x -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                k += 1;
            }
        }
        debug_assert_eq!(k, self.m.len());
    }
}
