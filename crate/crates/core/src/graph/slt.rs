use crate::graph::{FormulaGraph, GraphBuilder, Layout, Relation};
use crate::latex::{BinOp, DivSign, Expr, ExpressionTree, Fence, MatrixKind, MulSign, UnaryOp};
use crate::token::{MathToken, TokenKind};

/// Builds the symbol layout tree of a parsed formula.
///
/// Symbols written on a common baseline are chained with `NEXT`; scripts hang off the
/// last symbol of their base; fraction parts, radicands and matrix rows open nested
/// baselines attached with `OVER`/`UNDER`, `WITHIN` and `ELEMENT`.
pub fn build_slt(tree: &ExpressionTree) -> FormulaGraph {
    let mut slt = SltBuilder { b: GraphBuilder::new(Layout::Slt) };
    let (first, _) = slt.chain(&tree.root);
    slt.b.finish(first)
}

struct SltBuilder {
    b: GraphBuilder,
}

fn matrix_value(kind: MatrixKind, rows: &[Vec<Expr>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let prefix = if kind == MatrixKind::Vert { "v" } else { "" };
    format!("{prefix}{}x{cols}", rows.len())
}

pub(crate) fn matrix_token(kind: MatrixKind, rows: &[Vec<Expr>]) -> MathToken {
    MathToken::known(TokenKind::Matrix, &matrix_value(kind, rows))
}

impl SltBuilder {
    fn symbol(&mut self, kind: TokenKind, value: &str) -> usize {
        self.b.node(MathToken::known(kind, value))
    }

    /// Lays out `expr` as its own baseline and returns its first and last symbols.
    fn chain(&mut self, expr: &Expr) -> (usize, usize) {
        let mut items = Vec::new();
        self.baseline(expr, &mut items);
        for w in items.windows(2) {
            self.b.edge(w[0], w[1], Relation::Next);
        }
        (items[0], *items.last().expect("expressions are never empty"))
    }

    fn attach(&mut self, parent: usize, rel: Relation, expr: &Expr) {
        let (first, _) = self.chain(expr);
        self.b.edge(parent, first, rel);
    }

    fn baseline(&mut self, expr: &Expr, out: &mut Vec<usize>) {
        match expr {
            Expr::Var(v) => out.push(self.symbol(TokenKind::Variable, v)),
            Expr::Num(n) => out.push(self.symbol(TokenKind::Number, n)),
            Expr::Script { base, sub, sup } => {
                self.baseline(base, out);
                let target = *out.last().unwrap();
                if let Some(s) = sub {
                    self.attach(target, Relation::Sub, s);
                }
                if let Some(s) = sup {
                    self.attach(target, Relation::Sup, s);
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                self.baseline(lhs, out);
                let sym = match op {
                    BinOp::Plus => Some((TokenKind::Operator, "plus")),
                    BinOp::Minus => Some((TokenKind::Operator, "minus")),
                    BinOp::PlusMinus => Some((TokenKind::Operator, "pm")),
                    BinOp::MinusPlus => Some((TokenKind::Operator, "mp")),
                    BinOp::Times(MulSign::Implicit) => None,
                    BinOp::Times(MulSign::Cdot) => Some((TokenKind::Operator, "cdot")),
                    BinOp::Times(MulSign::Times) => Some((TokenKind::Operator, "times")),
                    BinOp::Times(MulSign::Star) => Some((TokenKind::Operator, "ast")),
                    BinOp::Divide(DivSign::Slash) => Some((TokenKind::Operator, "slash")),
                    BinOp::Divide(DivSign::Div) => Some((TokenKind::Operator, "div")),
                    BinOp::Rel(r) => Some((TokenKind::Relation, r.name())),
                };
                if let Some((kind, value)) = sym {
                    out.push(self.symbol(kind, value));
                }
                self.baseline(rhs, out);
            }
            Expr::Unary { op, operand } => {
                let value = match op {
                    UnaryOp::Minus => "minus",
                    UnaryOp::Plus => "plus",
                    UnaryOp::PlusMinus => "pm",
                };
                out.push(self.symbol(TokenKind::Operator, value));
                self.baseline(operand, out);
            }
            Expr::Factorial(inner) => {
                self.baseline(inner, out);
                out.push(self.symbol(TokenKind::Operator, "factorial"));
            }
            Expr::Frac { num, den } => {
                let frac = self.symbol(TokenKind::Fraction, "frac");
                self.attach(frac, Relation::Over, num);
                self.attach(frac, Relation::Under, den);
                out.push(frac);
            }
            Expr::Sqrt { index, radicand } => {
                let root = self.symbol(TokenKind::Radical, "sqrt");
                self.attach(root, Relation::Within, radicand);
                if let Some(i) = index {
                    self.attach(root, Relation::PreSup, i);
                }
                out.push(root);
            }
            Expr::Func { name, sub, sup, arg } => {
                let f = self.symbol(TokenKind::Function, name);
                if let Some(s) = sub {
                    self.attach(f, Relation::Sub, s);
                }
                if let Some(s) = sup {
                    self.attach(f, Relation::Sup, s);
                }
                out.push(f);
                if let Some(a) = arg {
                    self.baseline(a, out);
                }
            }
            Expr::Group { fence, body } => {
                let (open, close) = match fence {
                    Fence::Paren => ("lparen", "rparen"),
                    Fence::Bracket => ("lbrack", "rbrack"),
                    Fence::Brace => ("lbrace", "rbrace"),
                };
                out.push(self.symbol(TokenKind::Group, open));
                self.baseline(body, out);
                out.push(self.symbol(TokenKind::Group, close));
            }
            Expr::Matrix { kind, rows } => {
                let m = self.b.node(matrix_token(*kind, rows));
                for row in rows {
                    // each row is one baseline: cells follow each other with NEXT
                    let mut prev_last: Option<usize> = None;
                    for cell in row {
                        let (first, last) = self.chain(cell);
                        match prev_last {
                            None => self.b.edge(m, first, Relation::Element),
                            Some(p) => self.b.edge(p, first, Relation::Next),
                        }
                        prev_last = Some(last);
                    }
                }
                out.push(m);
            }
            Expr::List(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(self.symbol(TokenKind::Operator, "comma"));
                    }
                    self.baseline(item, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::latex::parse_latex;

    fn slt(s: &str) -> FormulaGraph {
        build_slt(&parse_latex(s).unwrap())
    }

    fn labels(g: &FormulaGraph) -> Vec<String> {
        g.nodes.iter().map(ToString::to_string).collect()
    }

    fn edges(g: &FormulaGraph) -> Vec<(String, String, String)> {
        g.edges
            .iter()
            .map(|e| (g.nodes[e.src].to_string(), g.nodes[e.dst].to_string(), e.rel.to_string()))
            .collect()
    }

    #[test]
    fn single_symbol() {
        let g = slt("x");
        assert_eq!(labels(&g), ["V!x"]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn quadratic_layout() {
        let g = slt("a^3+b^2=0");
        assert_eq!(labels(&g), ["V!a", "N!3", "O!plus", "V!b", "N!2", "U!eq", "N!0"]);
        let want = [
            ("V!a", "N!3", "SUP"),
            ("V!a", "O!plus", "NEXT"),
            ("O!plus", "V!b", "NEXT"),
            ("V!b", "N!2", "SUP"),
            ("V!b", "U!eq", "NEXT"),
            ("U!eq", "N!0", "NEXT"),
        ];
        let got = edges(&g);
        assert_eq!(got.len(), want.len());
        for (s, d, r) in want {
            assert!(got.contains(&(s.into(), d.into(), r.into())), "missing {s}-{r}->{d}");
        }
        assert_eq!(g.root, 0);
    }

    #[test]
    fn fraction_parts() {
        let g = slt("\\frac{a}{b}");
        assert_eq!(labels(&g), ["F!frac", "V!a", "V!b"]);
        assert_eq!(
            g.edges,
            [Edge { src: 0, dst: 1, rel: Relation::Over }, Edge { src: 0, dst: 2, rel: Relation::Under }]
        );
    }

    #[test]
    fn sup_and_sub_differ_only_in_label() {
        let (a, b) = (slt("a^b"), slt("a_b"));
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.edges.len(), 1);
        assert_eq!(a.edges[0].rel, Relation::Sup);
        assert_eq!(b.edges[0].rel, Relation::Sub);
    }

    #[test]
    fn matrix_rows_are_baselines() {
        let g = slt("\\begin{bmatrix} a & b \\\\ c & d \\end{bmatrix}");
        assert_eq!(labels(&g), ["M!2x2", "V!a", "V!b", "V!c", "V!d"]);
        let got = edges(&g);
        assert!(got.contains(&("M!2x2".into(), "V!a".into(), "ELEMENT".into())));
        assert!(got.contains(&("M!2x2".into(), "V!c".into(), "ELEMENT".into())));
        assert!(got.contains(&("V!a".into(), "V!b".into(), "NEXT".into())));
        assert!(got.contains(&("V!c".into(), "V!d".into(), "NEXT".into())));
    }

    #[test]
    fn radical_and_group() {
        let g = slt("\\sqrt[n]{x}(y)");
        assert_eq!(labels(&g), ["R!sqrt", "V!x", "V!n", "G!lparen", "V!y", "G!rparen"]);
        g.validate().unwrap();
    }
}
