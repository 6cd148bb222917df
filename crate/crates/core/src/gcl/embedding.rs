use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::gcl::encoder::{forward, node_features, GraphInput};
use crate::gcl::params::EncoderParams;
use crate::gcl::GclError;
use crate::graph::{FormulaGraph, Layout};

/// How a formula vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    /// Mean readout of a trained encoder.
    Gcl,
    /// Unweighted mean of node token vectors.
    AverageBaseline,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Gcl => "GCL",
            Provenance::AverageBaseline => "AVERAGE_BASELINE",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Provenance::Gcl => 0,
            Provenance::AverageBaseline => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        [Provenance::Gcl, Provenance::AverageBaseline].into_iter().find(|p| p.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaEmbedding {
    pub id: String,
    pub vector: Vec<f32>,
    pub provenance: Provenance,
    pub layout: Layout,
}

#[derive(Debug, Clone, Copy)]
pub enum EmbedMode<'a> {
    Gcl(&'a EncoderParams),
    AverageBaseline,
}

impl EmbedMode<'_> {
    pub fn provenance(&self) -> Provenance {
        match self {
            EmbedMode::Gcl(_) => Provenance::Gcl,
            EmbedMode::AverageBaseline => Provenance::AverageBaseline,
        }
    }
}

/// Embeds one formula graph with a trained encoder or the averaging baseline.
pub fn embed_formula(mode: EmbedMode<'_>, id: &str, g: &FormulaGraph, table: &EmbeddingTable) -> Result<FormulaEmbedding, GclError> {
    if g.is_empty() {
        return Err(GclError::EmptyGraph);
    }
    let features = node_features(table, g);
    let vector = match mode {
        EmbedMode::AverageBaseline => features.mean_rows(),
        EmbedMode::Gcl(params) => {
            if params.dim() != table.dim() {
                return Err(GclError::DimensionMismatch { what: "token dimension", expected: params.dim(), found: table.dim() });
            }
            forward(&params.encoder, &GraphInput::new(g, features)?).readout()
        }
    };
    Ok(FormulaEmbedding {
        id: id.to_string(),
        vector: vector.into_iter().map(|x| x as f32).collect(),
        provenance: mode.provenance(),
        layout: g.layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcl::params::Objective;
    use crate::graph::build_slt;
    use crate::latex::parse_latex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> EmbeddingTable {
        let vocab = vec!["V!a".to_string(), "V!b".to_string(), "O!plus".to_string()];
        let vectors = vec![1.0, 2.0, 0.5, -4.0, 0.0, 0.0];
        EmbeddingTable::new(2, vocab, vectors, 4, vec![0.25; 8])
    }

    #[test]
    fn baseline_is_plain_mean() {
        let g = build_slt(&parse_latex("ab").unwrap());
        let e = embed_formula(EmbedMode::AverageBaseline, "q", &g, &table()).unwrap();
        assert_eq!(e.vector, [(1.0 + 0.5) / 2.0, (2.0 - 4.0) / 2.0]);
        assert_eq!(e.provenance, Provenance::AverageBaseline);
        assert_eq!(e.layout, Layout::Slt);
    }

    #[test]
    fn gcl_mode_is_repeatable() {
        let params = EncoderParams::init(Objective::GraphCl, 2, &mut ChaCha8Rng::seed_from_u64(0));
        let g = build_slt(&parse_latex("a+b").unwrap());
        let a = embed_formula(EmbedMode::Gcl(&params), "x", &g, &table()).unwrap();
        let b = embed_formula(EmbedMode::Gcl(&params), "x", &g, &table()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vector.len(), 2);
        let wrong = EncoderParams::init(Objective::GraphCl, 3, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(embed_formula(EmbedMode::Gcl(&wrong), "x", &g, &table()), Err(GclError::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_graph_is_rejected() {
        let g = FormulaGraph { layout: Layout::Opt, nodes: vec![], edges: vec![], root: 0 };
        assert!(matches!(embed_formula(EmbedMode::AverageBaseline, "e", &g, &table()), Err(GclError::EmptyGraph)));
    }
}
