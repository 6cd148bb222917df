//! Generated benchmark: formulas drawn from a few structural templates, judged relevant
//! to each other exactly when they share a template.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{QrelSet, MAX_GRADE};
use crate::graph::{opt_sexpr, serialize_graph, Layout};
use crate::pipeline::corpus::{build_graph, CorpusEntry};

pub const TEMPLATES: [&str; 5] = ["power_eq", "fraction", "radical", "complexity", "matrix"];
pub const SYNTHETIC_SEED: u64 = 20_240_601;

const VARS: &[&str] = &[
    "a", "b", "c", "d", "k", "m", "n", "p", "q", "r", "s", "t", "u", "v", "w", "x", "y", "z", "\\alpha", "\\beta", "\\theta", "\\lambda",
];

fn instantiate(template: usize, rng: &mut ChaCha8Rng) -> String {
    let mut vars: Vec<&str> = VARS.choose_multiple(rng, 3).copied().collect();
    let (a, b, c) = (vars.remove(0), vars.remove(0), vars.remove(0));
    let mut num = |lo: u32, hi: u32| rng.random_range(lo..=hi);
    match TEMPLATES[template] {
        "power_eq" => format!("{a}^{{{}}}+{b}^{{{}}}={}", num(2, 9), num(2, 9), num(0, 30)),
        "fraction" => format!("\\frac{{{a}+{}}}{{{b}-{}}}", num(1, 30), num(1, 30)),
        "radical" => format!("\\sqrt{{{a}^{{2}}+{}{b}}}", num(2, 40)),
        "complexity" => {
            let sep = if a.starts_with('\\') { " " } else { "" };
            format!("O({a}{sep}{b} \\log {c})")
        }
        "matrix" => format!("\\begin{{bmatrix}} {a} & {} \\\\ {} & {b} \\end{{bmatrix}}", num(0, 9), num(0, 9)),
        _ => unreachable!("template list is fixed"),
    }
}

/// `per_template` formulas per template, ids `f000`, `f001`, ... assigned round-robin over
/// templates. Every formula is distinct as an SLT and as an OPT, so commutative
/// reorderings never produce duplicates.
pub fn synthetic_corpus(per_template: usize, seed: u64) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen_slt = HashSet::new();
    let mut seen_opt = HashSet::new();
    let mut by_template: Vec<Vec<String>> = vec![Vec::new(); TEMPLATES.len()];
    for (t, bucket) in by_template.iter_mut().enumerate() {
        while bucket.len() < per_template {
            let latex = instantiate(t, &mut rng);
            let slt = serialize_graph(&build_graph(&latex, Layout::Slt).expect("templates parse"), "");
            let opt = opt_sexpr(&build_graph(&latex, Layout::Opt).expect("templates parse"));
            if !seen_slt.contains(&slt) && !seen_opt.contains(&opt) {
                seen_slt.insert(slt);
                seen_opt.insert(opt);
                bucket.push(latex);
            }
        }
    }
    let width = (per_template * TEMPLATES.len()).saturating_sub(1).to_string().len().max(3);
    let mut out = Vec::with_capacity(per_template * TEMPLATES.len());
    for i in 0..per_template {
        for (t, bucket) in by_template.iter().enumerate() {
            let n = out.len();
            out.push(CorpusEntry { id: format!("f{n:0width$}"), latex: bucket[i].clone(), template: Some(TEMPLATES[t].to_string()) });
        }
    }
    out
}

/// Every formula is a query; every other formula is judged, grade 4 for the same template
/// and 0 otherwise.
pub fn template_qrels(corpus: &[CorpusEntry]) -> QrelSet {
    let mut qrels = QrelSet::default();
    for q in corpus {
        for d in corpus.iter().filter(|d| d.id != q.id) {
            let grade = if d.template == q.template { MAX_GRADE } else { 0 };
            qrels.insert(&q.id, &d.id, grade).expect("ids are unique");
        }
    }
    qrels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_balanced_distinct_and_deterministic() {
        let c = synthetic_corpus(40, SYNTHETIC_SEED);
        assert_eq!(c.len(), 200);
        assert_eq!(c, synthetic_corpus(40, SYNTHETIC_SEED));
        for t in TEMPLATES {
            assert_eq!(c.iter().filter(|e| e.template.as_deref() == Some(t)).count(), 40);
        }
        let opts: HashSet<String> = c.iter().map(|e| opt_sexpr(&build_graph(&e.latex, Layout::Opt).unwrap())).collect();
        assert_eq!(opts.len(), 200);
        assert_eq!(c[0].id, "f000");
        assert_eq!(c[199].id, "f199");
    }

    #[test]
    fn qrels_follow_templates() {
        let c = synthetic_corpus(3, 1);
        let q = template_qrels(&c);
        assert_eq!(q.queries.len(), 15);
        let j = q.get("f000").unwrap();
        assert_eq!(j.len(), 14);
        assert!(!j.contains_key("f000"));
        assert_eq!(j.values().filter(|&&g| g == 4).count(), 2);
        assert_eq!(j["f005"], 4);
        assert_eq!(j["f001"], 0);
    }
}
