//! Forward and backward passes of the message-passing encoder.
//!
//! Each layer computes `h_i ← ReLU(W·(h_i + Σ_{j∈N(i)} (h_j + r_rel(i,j))) + b)` over the
//! undirected tree, and the graph embedding is the mean of the final node rows.

use crate::embed::EmbeddingTable;
use crate::gcl::params::Encoder;
use crate::gcl::tensor::{axpy, Mat};
use crate::gcl::GclError;
use crate::graph::FormulaGraph;

/// A graph prepared for the encoder: undirected adjacency by relation slot plus node features.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    /// `(neighbor, relation slot)` per node.
    pub adjacency: Vec<Vec<(usize, usize)>>,
    pub features: Mat,
}

impl GraphInput {
    pub fn new(g: &FormulaGraph, features: Mat) -> Result<Self, GclError> {
        if g.is_empty() {
            return Err(GclError::EmptyGraph);
        }
        if features.rows != g.len() {
            return Err(GclError::DimensionMismatch { what: "feature rows", expected: g.len(), found: features.rows });
        }
        let adjacency = g.undirected_neighbors().into_iter().map(|ns| ns.into_iter().map(|(j, r)| (j, r.slot())).collect()).collect();
        Ok(Self { adjacency, features })
    }

    pub fn len(&self) -> usize {
        self.features.rows
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows == 0
    }
}

/// Node features looked up from the token table, one row per node.
pub fn node_features(table: &EmbeddingTable, g: &FormulaGraph) -> Mat {
    let rows: Vec<Vec<f64>> =
        g.nodes.iter().map(|t| table.embed_token(&t.to_string()).values.iter().map(|&x| x as f64).collect()).collect();
    if rows.is_empty() {
        return Mat::zeros(0, table.dim());
    }
    Mat::from_rows(&rows)
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    a1: Mat,
    h1: Mat,
    a2: Mat,
    /// Final node embeddings.
    pub h2: Mat,
}

impl EncoderCache {
    pub fn nodes(&self) -> &Mat {
        &self.h2
    }

    pub fn readout(&self) -> Vec<f64> {
        self.h2.mean_rows()
    }
}

fn aggregate(input: &GraphInput, h: &Mat, rel: &Mat) -> Mat {
    let mut a = h.clone();
    for (i, ns) in input.adjacency.iter().enumerate() {
        let row = a.row_mut(i);
        for &(j, slot) in ns {
            axpy(1.0, h.row(j), row);
            axpy(1.0, rel.row(slot), row);
        }
    }
    a
}

fn dense_relu(a: &Mat, w: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows, w.rows);
    for i in 0..a.rows {
        let o = out.row_mut(i);
        w.matvec_into(a.row(i), o);
        for (x, bias) in o.iter_mut().zip(&b.data) {
            *x = (*x + bias).max(0.0);
        }
    }
    out
}

pub fn forward(enc: &Encoder, input: &GraphInput) -> EncoderCache {
    let a1 = aggregate(input, &input.features, &enc.rel);
    let h1 = dense_relu(&a1, &enc.w1, &enc.b1);
    let a2 = aggregate(input, &h1, &enc.rel);
    let h2 = dense_relu(&a2, &enc.w2, &enc.b2);
    EncoderCache { a1, h1, a2, h2 }
}

/// Backpropagates one dense layer; returns the gradient w.r.t. the aggregated input.
fn dense_relu_backward(a: &Mat, h: &Mat, w: &Mat, dh: &Mat, dw: &mut Mat, db: &mut Mat) -> Mat {
    let mut da = Mat::zeros(a.rows, a.cols);
    let mut dpre = vec![0.0; h.cols];
    for i in 0..a.rows {
        for ((d, &g), &out) in dpre.iter_mut().zip(dh.row(i)).zip(h.row(i)) {
            *d = if out > 0.0 { g } else { 0.0 };
        }
        dw.add_outer(&dpre, a.row(i));
        axpy(1.0, &dpre, &mut db.data);
        w.matvec_t_add(&dpre, da.row_mut(i));
    }
    da
}

/// Backpropagates an aggregation step; returns the gradient w.r.t. the layer input.
fn aggregate_backward(input: &GraphInput, da: &Mat, drel: &mut Mat) -> Mat {
    let mut dh = da.clone();
    for (i, ns) in input.adjacency.iter().enumerate() {
        for &(j, slot) in ns {
            // node j's row feeds a_i, so it receives a_i's gradient
            axpy(1.0, da.row(i), dh.row_mut(j));
            axpy(1.0, da.row(i), drel.row_mut(slot));
        }
    }
    dh
}

/// Accumulates parameter gradients given `∂L/∂H` for the final node embeddings.
pub fn backward(enc: &Encoder, input: &GraphInput, cache: &EncoderCache, d_nodes: &Mat, grads: &mut Encoder) {
    let da2 = dense_relu_backward(&cache.a2, &cache.h2, &enc.w2, d_nodes, &mut grads.w2, &mut grads.b2);
    let dh1 = aggregate_backward(input, &da2, &mut grads.rel);
    let da1 = dense_relu_backward(&cache.a1, &cache.h1, &enc.w1, &dh1, &mut grads.w1, &mut grads.b1);
    // features are fixed inputs, but the relation embeddings of layer one still need their share
    for (i, ns) in input.adjacency.iter().enumerate() {
        for &(_, slot) in ns {
            axpy(1.0, da1.row(i), grads.rel.row_mut(slot));
        }
    }
}

/// Adds `∂L/∂z / n` to every node row, the backward pass of mean readout.
pub fn readout_backward(d_z: &[f64], d_nodes: &mut Mat) {
    let s = 1.0 / d_nodes.rows as f64;
    for i in 0..d_nodes.rows {
        axpy(s, d_z, d_nodes.row_mut(i));
    }
}

/// Node embeddings and mean-readout graph embedding.
pub fn encode(enc: &Encoder, g: &FormulaGraph, features: &Mat) -> Result<(Mat, Vec<f64>), GclError> {
    if features.cols != enc.dim() {
        return Err(GclError::DimensionMismatch { what: "feature columns", expected: enc.dim(), found: features.cols });
    }
    let input = GraphInput::new(g, features.clone())?;
    let cache = forward(enc, &input);
    let z = cache.readout();
    Ok((cache.h2, z))
}
