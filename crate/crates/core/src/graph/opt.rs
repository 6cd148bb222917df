use crate::graph::slt::matrix_token;
use crate::graph::{FormulaGraph, GraphBuilder, Layout, Relation};
use crate::latex::{BinOp, Expr, ExpressionTree, Fence, RelOp, UnaryOp};
use crate::token::{MathToken, TokenKind};

/// Builds the operator tree of a parsed formula.
///
/// Operators are internal nodes whose operands are ordered children (`ARG0`, `ARG1`, ...).
/// `plus`, `times` and `eq` are flattened across nesting and their operands sorted by the
/// byte order of each operand's s-expression, so reorderings of those operands yield the
/// same tree.
pub fn build_opt(tree: &ExpressionTree) -> FormulaGraph {
    let root = lower(&tree.root);
    let mut b = GraphBuilder::new(Layout::Opt);
    let r = emit(&root, &mut b);
    b.finish(r)
}

/// S-expression of an operator tree, e.g. `(U!eq (O!plus V!a V!b) N!0)`.
pub fn opt_sexpr(g: &FormulaGraph) -> String {
    let children = ordered_children(g);
    let mut out = String::new();
    write_sexpr(g, &children, g.root, &mut out);
    out
}

fn ordered_children(g: &FormulaGraph) -> Vec<Vec<usize>> {
    g.children()
        .into_iter()
        .map(|mut kids| {
            kids.sort_by_key(|&(_, r)| match r {
                Relation::Arg(i) => i,
                _ => u16::MAX,
            });
            kids.into_iter().map(|(c, _)| c).collect()
        })
        .collect()
}

fn write_sexpr(g: &FormulaGraph, children: &[Vec<usize>], v: usize, out: &mut String) {
    if children[v].is_empty() {
        out.push_str(&g.nodes[v].to_string());
        return;
    }
    out.push('(');
    out.push_str(&g.nodes[v].to_string());
    for &c in &children[v] {
        out.push(' ');
        write_sexpr(g, children, c, out);
    }
    out.push(')');
}

#[derive(Debug, Clone)]
struct Node {
    token: MathToken,
    children: Vec<Node>,
    /// cached s-expression, used as the canonical sort key
    sexpr: String,
}

impl Node {
    fn new(token: MathToken, children: Vec<Node>) -> Self {
        let sexpr = if children.is_empty() {
            token.to_string()
        } else {
            let mut s = format!("({token}");
            for c in &children {
                s.push(' ');
                s.push_str(&c.sexpr);
            }
            s.push(')');
            s
        };
        Node { token, children, sexpr }
    }

    fn leaf(kind: TokenKind, value: &str) -> Self {
        Node::new(MathToken::known(kind, value), Vec::new())
    }

    fn op(kind: TokenKind, value: &str, children: Vec<Node>) -> Self {
        Node::new(MathToken::known(kind, value), children)
    }

    /// Associative and commutative operator: splice same-operator children, then sort.
    fn commutative(kind: TokenKind, value: &str, operands: Vec<Node>) -> Self {
        let token = MathToken::known(kind, value);
        let mut flat = Vec::with_capacity(operands.len());
        for o in operands {
            if o.token == token {
                flat.extend(o.children);
            } else {
                flat.push(o);
            }
        }
        flat.sort_by(|a, b| a.sexpr.as_bytes().cmp(b.sexpr.as_bytes()));
        Node::new(token, flat)
    }
}

fn lower(expr: &Expr) -> Node {
    match expr {
        Expr::Var(v) => Node::leaf(TokenKind::Variable, v),
        Expr::Num(n) => Node::leaf(TokenKind::Number, n),
        Expr::Script { base, sub, sup } => {
            let mut node = lower(base);
            if let Some(s) = sub {
                node = Node::op(TokenKind::Operator, "subscript", vec![node, lower(s)]);
            }
            if let Some(s) = sup {
                node = Node::op(TokenKind::Operator, "pow", vec![node, lower(s)]);
            }
            node
        }
        Expr::Binary { op, lhs, rhs } => {
            let (l, r) = (lower(lhs), lower(rhs));
            match op {
                BinOp::Plus => Node::commutative(TokenKind::Operator, "plus", vec![l, r]),
                BinOp::Times(_) => Node::commutative(TokenKind::Operator, "times", vec![l, r]),
                BinOp::Rel(RelOp::Eq) => Node::commutative(TokenKind::Relation, "eq", vec![l, r]),
                BinOp::Minus => Node::op(TokenKind::Operator, "minus", vec![l, r]),
                BinOp::PlusMinus => Node::op(TokenKind::Operator, "pm", vec![l, r]),
                BinOp::MinusPlus => Node::op(TokenKind::Operator, "mp", vec![l, r]),
                BinOp::Divide(_) => Node::op(TokenKind::Operator, "divide", vec![l, r]),
                BinOp::Rel(rel) => Node::op(TokenKind::Relation, rel.name(), vec![l, r]),
            }
        }
        Expr::Unary { op, operand } => {
            let value = match op {
                UnaryOp::Minus => "neg",
                UnaryOp::Plus => "pos",
                UnaryOp::PlusMinus => "pm",
            };
            Node::op(TokenKind::Operator, value, vec![lower(operand)])
        }
        Expr::Factorial(inner) => Node::op(TokenKind::Operator, "factorial", vec![lower(inner)]),
        Expr::Frac { num, den } => Node::op(TokenKind::Fraction, "frac", vec![lower(num), lower(den)]),
        Expr::Sqrt { index: None, radicand } => Node::op(TokenKind::Radical, "sqrt", vec![lower(radicand)]),
        Expr::Sqrt { index: Some(i), radicand } => {
            Node::op(TokenKind::Radical, "root", vec![lower(radicand), lower(i)])
        }
        Expr::Func { name, sub, sup, arg } => {
            let args: Vec<Node> = arg.iter().map(|a| lower(a)).collect();
            if sub.is_none() && sup.is_none() {
                return Node::op(TokenKind::Function, name, args);
            }
            let mut head = Node::leaf(TokenKind::Function, name);
            if let Some(s) = sub {
                head = Node::op(TokenKind::Operator, "subscript", vec![head, lower(s)]);
            }
            if let Some(s) = sup {
                head = Node::op(TokenKind::Operator, "pow", vec![head, lower(s)]);
            }
            if args.is_empty() {
                head
            } else {
                let mut children = vec![head];
                children.extend(args);
                Node::op(TokenKind::Operator, "apply", children)
            }
        }
        Expr::Group { fence: Fence::Paren | Fence::Bracket, body } => lower(body),
        Expr::Group { fence: Fence::Brace, body } => {
            let items = match body.as_ref() {
                Expr::List(items) => items.iter().map(lower).collect(),
                other => vec![lower(other)],
            };
            Node::op(TokenKind::Operator, "set", items)
        }
        Expr::Matrix { kind, rows } => {
            let cells = rows.iter().flatten().map(lower).collect();
            Node::new(matrix_token(*kind, rows), cells)
        }
        Expr::List(items) => Node::op(TokenKind::Operator, "list", items.iter().map(lower).collect()),
    }
}

fn emit(node: &Node, b: &mut GraphBuilder) -> usize {
    let id = b.node(node.token.clone());
    for (i, child) in node.children.iter().enumerate() {
        let c = emit(child, b);
        b.edge(id, c, Relation::Arg(i as u16));
    }
    id
}
