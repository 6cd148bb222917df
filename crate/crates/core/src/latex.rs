//! A parser for the LaTeX math subset accepted by the engine.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! list     := relation (',' relation)*
//! relation := additive (REL additive)*          REL: = < > \le \ge \ne \in \approx ...
//! additive := term (('+' | '-' | \pm | \mp) term)*
//! term     := unary ((('*' | \cdot | \times | '/' | \div) unary) | postfix)*
//! unary    := ('-' | '+' | \pm) unary | postfix
//! postfix  := primary ('^' script | '_' script)* '!'*
//! primary  := letter | digits | greek | '(' list ')' | '[' list ']' | '{' list '}' | \{ list \}
//!           | \left( list \right) | \frac{..}{..} | \sqrt[..]{..} | function | matrix environment
//! ```
//!
//! Adjacent primaries multiply implicitly, so `mn` is `m * n` and `2(a+b)` is `2 * (a+b)`.
//! Error offsets are 1-based byte positions into the source.

use std::fmt;

/// Spelled-out Greek letters and other symbols that behave like identifiers.
const IDENTIFIER_COMMANDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "epsilon", "varepsilon", "zeta", "eta", "theta", "vartheta", "iota", "kappa",
    "lambda", "mu", "nu", "xi", "pi", "varpi", "rho", "varrho", "sigma", "varsigma", "tau", "upsilon", "phi", "varphi",
    "chi", "psi", "omega", "Gamma", "Delta", "Theta", "Lambda", "Xi", "Pi", "Sigma", "Upsilon", "Phi", "Psi", "Omega",
    "infty", "partial", "nabla", "ell", "hbar", "ldots", "cdots", "dots",
];

const FUNCTION_COMMANDS: &[&str] = &[
    "log", "ln", "lg", "exp", "sin", "cos", "tan", "cot", "sec", "csc", "arcsin", "arccos", "arctan", "sinh", "cosh",
    "tanh", "det", "dim", "ker", "lim", "max", "min", "sup", "inf", "gcd", "deg", "arg", "Pr",
];

const SPACING_COMMANDS: &[&str] = &["quad", "qquad"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced delimiter `{delimiter}` at offset {offset}")]
    UnbalancedDelimiter { offset: usize, delimiter: String },
    #[error("unsupported command `{command}` at offset {offset}")]
    UnsupportedCommand { offset: usize, command: String },
    #[error("unexpected character {ch:?} at offset {offset}")]
    UnexpectedCharacter { offset: usize, ch: char },
    #[error("unexpected `{found}` at offset {offset}")]
    UnexpectedToken { offset: usize, found: String },
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("empty group at offset {offset}")]
    EmptyGroup { offset: usize },
    #[error("duplicate script at offset {offset}")]
    DuplicateScript { offset: usize },
}

impl ParseError {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::EmptyInput => "EmptyInput",
            ParseError::UnbalancedDelimiter { .. } => "UnbalancedDelimiter",
            ParseError::UnsupportedCommand { .. } => "UnsupportedCommand",
            ParseError::UnexpectedCharacter { .. } => "UnexpectedCharacter",
            ParseError::UnexpectedToken { .. } => "UnexpectedToken",
            ParseError::UnexpectedEnd => "UnexpectedEnd",
            ParseError::EmptyGroup { .. } => "EmptyGroup",
            ParseError::DuplicateScript { .. } => "DuplicateScript",
        }
    }

    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::UnbalancedDelimiter { offset, .. }
            | ParseError::UnsupportedCommand { offset, .. }
            | ParseError::UnexpectedCharacter { offset, .. }
            | ParseError::UnexpectedToken { offset, .. }
            | ParseError::EmptyGroup { offset }
            | ParseError::DuplicateScript { offset } => Some(*offset),
            ParseError::EmptyInput | ParseError::UnexpectedEnd => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MulSign {
    Implicit,
    Cdot,
    Times,
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DivSign {
    Slash,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
    Approx,
    Equiv,
    Sim,
    In,
    NotIn,
    Subset,
    SubsetEq,
    To,
    MapsTo,
    Propto,
    Ll,
    Gg,
}

impl RelOp {
    pub fn name(self) -> &'static str {
        match self {
            RelOp::Eq => "eq",
            RelOp::Lt => "lt",
            RelOp::Gt => "gt",
            RelOp::Le => "le",
            RelOp::Ge => "ge",
            RelOp::Ne => "ne",
            RelOp::Approx => "approx",
            RelOp::Equiv => "equiv",
            RelOp::Sim => "sim",
            RelOp::In => "in",
            RelOp::NotIn => "notin",
            RelOp::Subset => "subset",
            RelOp::SubsetEq => "subseteq",
            RelOp::To => "to",
            RelOp::MapsTo => "mapsto",
            RelOp::Propto => "propto",
            RelOp::Ll => "ll",
            RelOp::Gg => "gg",
        }
    }

    fn from_command(cmd: &str) -> Option<Self> {
        Some(match cmd {
            "leq" | "le" => RelOp::Le,
            "geq" | "ge" => RelOp::Ge,
            "neq" | "ne" => RelOp::Ne,
            "approx" => RelOp::Approx,
            "equiv" => RelOp::Equiv,
            "sim" => RelOp::Sim,
            "in" => RelOp::In,
            "notin" => RelOp::NotIn,
            "subset" => RelOp::Subset,
            "subseteq" => RelOp::SubsetEq,
            "to" | "rightarrow" => RelOp::To,
            "mapsto" => RelOp::MapsTo,
            "propto" => RelOp::Propto,
            "ll" => RelOp::Ll,
            "gg" => RelOp::Gg,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Plus,
    Minus,
    PlusMinus,
    MinusPlus,
    Times(MulSign),
    Divide(DivSign),
    Rel(RelOp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Minus,
    Plus,
    PlusMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fence {
    Paren,
    Bracket,
    Brace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    Plain,
    Bracket,
    Paren,
    Vert,
}

/// Parsed expression. Invisible `{...}` groups are dropped; visible fences are kept
/// so that layout trees can reproduce them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    Num(String),
    Script { base: Box<Expr>, sub: Option<Box<Expr>>, sup: Option<Box<Expr>> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Factorial(Box<Expr>),
    Frac { num: Box<Expr>, den: Box<Expr> },
    Sqrt { index: Option<Box<Expr>>, radicand: Box<Expr> },
    Func { name: String, sub: Option<Box<Expr>>, sup: Option<Box<Expr>>, arg: Option<Box<Expr>> },
    Group { fence: Fence, body: Box<Expr> },
    Matrix { kind: MatrixKind, rows: Vec<Vec<Expr>> },
    List(Vec<Expr>),
}

/// Root of a parsed formula.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExpressionTree {
    pub root: Expr,
}

impl fmt::Display for Expr {
    /// Compact prefix rendering, mainly for diagnostics and tests.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) | Expr::Num(v) => f.write_str(v),
            Expr::Script { base, sub, sup } => {
                match (sub, sup) {
                    (Some(s), Some(p)) => write!(f, "sup(sub({base},{s}),{p})"),
                    (Some(s), None) => write!(f, "sub({base},{s})"),
                    (None, Some(p)) => write!(f, "sup({base},{p})"),
                    (None, None) => write!(f, "{base}"),
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let name = match op {
                    BinOp::Plus => "plus",
                    BinOp::Minus => "minus",
                    BinOp::PlusMinus => "pm",
                    BinOp::MinusPlus => "mp",
                    BinOp::Times(_) => "times",
                    BinOp::Divide(_) => "divide",
                    BinOp::Rel(r) => r.name(),
                };
                write!(f, "{name}({lhs},{rhs})")
            }
            Expr::Unary { op, operand } => {
                let name = match op {
                    UnaryOp::Minus => "neg",
                    UnaryOp::Plus => "pos",
                    UnaryOp::PlusMinus => "pm",
                };
                write!(f, "{name}({operand})")
            }
            Expr::Factorial(e) => write!(f, "factorial({e})"),
            Expr::Frac { num, den } => write!(f, "frac({num},{den})"),
            Expr::Sqrt { index: Some(i), radicand } => write!(f, "root({radicand},{i})"),
            Expr::Sqrt { index: None, radicand } => write!(f, "sqrt({radicand})"),
            Expr::Func { name, sub, sup, arg } => {
                write!(f, "{name}")?;
                if let Some(s) = sub {
                    write!(f, "_{s}")?;
                }
                if let Some(s) = sup {
                    write!(f, "^{s}")?;
                }
                match arg {
                    Some(a) => write!(f, "({a})"),
                    None => Ok(()),
                }
            }
            Expr::Group { body, .. } => write!(f, "({body})"),
            Expr::Matrix { rows, .. } => {
                f.write_str("matrix(")?;
                for (i, row) in rows.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    for (j, cell) in row.iter().enumerate() {
                        if j > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{cell}")?;
                    }
                }
                f.write_str(")")
            }
            Expr::List(items) => {
                f.write_str("list(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Lex {
    Letter(char),
    Digit(char),
    Sym(char),
    Command(String),
    /// `\{` and `\}`
    EscBrace(char),
    RowSep,
}

#[derive(Debug, Clone)]
struct Tok {
    lex: Lex,
    /// 1-based byte offset
    offset: usize,
}

impl Tok {
    fn describe(&self) -> String {
        match &self.lex {
            Lex::Letter(c) | Lex::Digit(c) | Lex::Sym(c) => c.to_string(),
            Lex::Command(c) => format!("\\{c}"),
            Lex::EscBrace(c) => format!("\\{c}"),
            Lex::RowSep => "\\\\".to_string(),
        }
    }
}

fn is_known_command(name: &str) -> bool {
    IDENTIFIER_COMMANDS.contains(&name)
        || FUNCTION_COMMANDS.contains(&name)
        || RelOp::from_command(name).is_some()
        || matches!(
            name,
            "frac" | "dfrac" | "tfrac" | "sqrt" | "begin" | "end" | "left" | "right" | "cdot" | "times" | "div" | "ast" | "pm" | "mp"
        )
}

fn lex(source: &str) -> Result<Vec<Tok>, ParseError> {
    let bytes = source.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let offset = i + 1;
        let c = source[i..].chars().next().expect("char boundary");
        match c {
            c if c.is_whitespace() => i += c.len_utf8(),
            '\\' => {
                let rest = &source[i + 1..];
                let name_len = rest.bytes().take_while(u8::is_ascii_alphabetic).count();
                if name_len > 0 {
                    let name = &rest[..name_len];
                    i += 1 + name_len;
                    if SPACING_COMMANDS.contains(&name) {
                        continue;
                    }
                    if !is_known_command(name) {
                        return Err(ParseError::UnsupportedCommand { offset, command: format!("\\{name}") });
                    }
                    toks.push(Tok { lex: Lex::Command(name.to_string()), offset });
                } else {
                    match rest.chars().next() {
                        Some('\\') => toks.push(Tok { lex: Lex::RowSep, offset }),
                        Some(b @ ('{' | '}')) => toks.push(Tok { lex: Lex::EscBrace(b), offset }),
                        Some(',' | ';' | ':' | '!' | ' ') => {}
                        Some(other) => {
                            return Err(ParseError::UnsupportedCommand { offset, command: format!("\\{other}") })
                        }
                        None => return Err(ParseError::UnsupportedCommand { offset, command: "\\".into() }),
                    }
                    i += 1 + rest.chars().next().map_or(0, char::len_utf8);
                }
            }
            c if c.is_ascii_alphabetic() => {
                toks.push(Tok { lex: Lex::Letter(c), offset });
                i += 1;
            }
            c if c.is_ascii_digit() => {
                toks.push(Tok { lex: Lex::Digit(c), offset });
                i += 1;
            }
            '+' | '-' | '*' | '/' | '=' | '<' | '>' | ',' | '.' | '^' | '_' | '{' | '}' | '(' | ')' | '[' | ']'
            | '&' | '!' => {
                toks.push(Tok { lex: Lex::Sym(c), offset });
                i += 1;
            }
            other => return Err(ParseError::UnexpectedCharacter { offset, ch: other }),
        }
    }
    Ok(toks)
}

/// Parses a formula in the supported LaTeX subset.
pub fn parse_latex(source: &str) -> Result<ExpressionTree, ParseError> {
    let toks = lex(source)?;
    if toks.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut p = Parser { toks, pos: 0 };
    let root = p.list()?;
    if let Some(t) = p.peek() {
        let t = t.clone();
        return Err(match t.lex {
            Lex::Sym(')' | ']' | '}') | Lex::EscBrace('}') => {
                ParseError::UnbalancedDelimiter { offset: t.offset, delimiter: t.describe() }
            }
            Lex::Command(ref c) if c == "right" || c == "end" => {
                ParseError::UnbalancedDelimiter { offset: t.offset, delimiter: t.describe() }
            }
            _ => ParseError::UnexpectedToken { offset: t.offset, found: t.describe() },
        });
    }
    Ok(ExpressionTree { root })
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_lex(&self) -> Option<&Lex> {
        self.peek().map(|t| &t.lex)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn peek_is_sym(&self, c: char) -> bool {
        matches!(self.peek_lex(), Some(Lex::Sym(s)) if *s == c)
    }

    fn peek_is_command(&self, name: &str) -> bool {
        matches!(self.peek_lex(), Some(Lex::Command(c)) if c == name)
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(t) => match t.lex {
                Lex::Sym(')' | ']' | '}') | Lex::EscBrace('}') => {
                    ParseError::UnbalancedDelimiter { offset: t.offset, delimiter: t.describe() }
                }
                _ => ParseError::UnexpectedToken { offset: t.offset, found: t.describe() },
            },
            None => ParseError::UnexpectedEnd,
        }
    }

    fn starts_primary(&self) -> bool {
        match self.peek_lex() {
            Some(Lex::Letter(_) | Lex::Digit(_)) => true,
            Some(Lex::Sym('(' | '[' | '{')) => true,
            Some(Lex::EscBrace('{')) => true,
            Some(Lex::Command(c)) => {
                IDENTIFIER_COMMANDS.contains(&c.as_str())
                    || FUNCTION_COMMANDS.contains(&c.as_str())
                    || matches!(c.as_str(), "frac" | "dfrac" | "tfrac" | "sqrt" | "begin" | "left")
            }
            _ => false,
        }
    }

    fn list(&mut self) -> Result<Expr, ParseError> {
        let mut items = vec![self.relation()?];
        while self.peek_is_sym(',') {
            self.bump();
            items.push(self.relation()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Expr::List(items) })
    }

    fn relation_op(&self) -> Option<RelOp> {
        match self.peek_lex()? {
            Lex::Sym('=') => Some(RelOp::Eq),
            Lex::Sym('<') => Some(RelOp::Lt),
            Lex::Sym('>') => Some(RelOp::Gt),
            Lex::Command(c) => RelOp::from_command(c),
            _ => None,
        }
    }

    fn relation(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.additive()?;
        while let Some(op) = self.relation_op() {
            self.bump();
            let rhs = self.additive()?;
            lhs = Expr::Binary { op: BinOp::Rel(op), lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek_lex() {
                Some(Lex::Sym('+')) => BinOp::Plus,
                Some(Lex::Sym('-')) => BinOp::Minus,
                Some(Lex::Command(c)) if c == "pm" => BinOp::PlusMinus,
                Some(Lex::Command(c)) if c == "mp" => BinOp::MinusPlus,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let explicit = match self.peek_lex() {
                Some(Lex::Sym('*')) => Some(BinOp::Times(MulSign::Star)),
                Some(Lex::Sym('/')) => Some(BinOp::Divide(DivSign::Slash)),
                Some(Lex::Command(c)) => match c.as_str() {
                    "cdot" => Some(BinOp::Times(MulSign::Cdot)),
                    "times" => Some(BinOp::Times(MulSign::Times)),
                    "ast" => Some(BinOp::Times(MulSign::Star)),
                    "div" => Some(BinOp::Divide(DivSign::Div)),
                    _ => None,
                },
                _ => None,
            };
            let (op, rhs) = if let Some(op) = explicit {
                self.bump();
                (op, self.unary()?)
            } else if self.starts_primary() {
                (BinOp::Times(MulSign::Implicit), self.postfix()?)
            } else {
                break;
            };
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let op = match self.peek_lex() {
            Some(Lex::Sym('-')) => UnaryOp::Minus,
            Some(Lex::Sym('+')) => UnaryOp::Plus,
            Some(Lex::Command(c)) if c == "pm" => UnaryOp::PlusMinus,
            _ => return self.postfix(),
        };
        self.bump();
        let operand = self.unary()?;
        Ok(Expr::Unary { op, operand: Box::new(operand) })
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        let (sub, sup) = self.scripts()?;
        let mut e = if sub.is_none() && sup.is_none() {
            base
        } else {
            Expr::Script { base: Box::new(base), sub, sup }
        };
        while self.peek_is_sym('!') {
            self.bump();
            e = Expr::Factorial(Box::new(e));
        }
        Ok(e)
    }

    #[allow(clippy::type_complexity)]
    fn scripts(&mut self) -> Result<(Option<Box<Expr>>, Option<Box<Expr>>), ParseError> {
        let (mut sub, mut sup) = (None, None);
        loop {
            let slot = if self.peek_is_sym('^') {
                &mut sup
            } else if self.peek_is_sym('_') {
                &mut sub
            } else {
                break;
            };
            let t = self.bump().unwrap();
            if slot.is_some() {
                return Err(ParseError::DuplicateScript { offset: t.offset });
            }
            *slot = Some(Box::new(self.script_arg()?));
        }
        Ok((sub, sup))
    }

    /// A script argument is a braced group or a single token; `a^23` is `a^2` times 3.
    fn script_arg(&mut self) -> Result<Expr, ParseError> {
        match self.peek_lex() {
            Some(Lex::Digit(d)) => {
                let d = *d;
                self.bump();
                Ok(Expr::Num(d.to_string()))
            }
            Some(Lex::Letter(c)) => {
                let c = *c;
                self.bump();
                Ok(Expr::Var(c.to_string()))
            }
            Some(_) => self.primary(),
            None => Err(ParseError::UnexpectedEnd),
        }
    }

    fn number(&mut self) -> Expr {
        let mut s = String::new();
        while let Some(Lex::Digit(d)) = self.peek_lex() {
            s.push(*d);
            self.bump();
            let decimal_point = self.peek_is_sym('.')
                && matches!(self.toks.get(self.pos + 1).map(|t| &t.lex), Some(Lex::Digit(_)))
                && !s.contains('.');
            if decimal_point {
                self.bump();
                s.push('.');
            }
        }
        Expr::Num(s)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseError::UnexpectedEnd);
        };
        match &tok.lex {
            Lex::Letter(c) => {
                self.bump();
                Ok(Expr::Var(c.to_string()))
            }
            Lex::Digit(_) => Ok(self.number()),
            Lex::Sym('(') => self.fenced(Fence::Paren, ')'),
            Lex::Sym('[') => self.fenced(Fence::Bracket, ']'),
            Lex::Sym('{') => {
                self.bump();
                let body = self.group_body(&tok, |l| matches!(l, Lex::Sym('}')))?;
                Ok(body)
            }
            Lex::EscBrace('{') => {
                self.bump();
                let body = self.group_body(&tok, |l| matches!(l, Lex::EscBrace('}')))?;
                Ok(Expr::Group { fence: Fence::Brace, body: Box::new(body) })
            }
            Lex::Command(name) => {
                let name = name.clone();
                match name.as_str() {
                    n if IDENTIFIER_COMMANDS.contains(&n) => {
                        self.bump();
                        Ok(Expr::Var(name))
                    }
                    n if FUNCTION_COMMANDS.contains(&n) => self.function(name),
                    "frac" | "dfrac" | "tfrac" => {
                        self.bump();
                        let num = self.required_group()?;
                        let den = self.required_group()?;
                        Ok(Expr::Frac { num: Box::new(num), den: Box::new(den) })
                    }
                    "sqrt" => {
                        self.bump();
                        let index = if self.peek_is_sym('[') {
                            let open = self.bump().unwrap();
                            Some(Box::new(self.group_body(&open, |l| matches!(l, Lex::Sym(']')))?))
                        } else {
                            None
                        };
                        let radicand = self.script_arg()?;
                        Ok(Expr::Sqrt { index, radicand: Box::new(radicand) })
                    }
                    "left" => self.left_right(),
                    "begin" => self.matrix(),
                    _ => Err(self.unexpected()),
                }
            }
            _ => Err(self.unexpected()),
        }
    }

    fn fenced(&mut self, fence: Fence, close: char) -> Result<Expr, ParseError> {
        let open = self.bump().unwrap();
        let body = self.group_body(&open, |l| matches!(l, Lex::Sym(c) if *c == close))?;
        Ok(Expr::Group { fence, body: Box::new(body) })
    }

    /// Parses a list up to the closing token accepted by `is_close`, consuming it.
    fn group_body(&mut self, open: &Tok, is_close: impl Fn(&Lex) -> bool) -> Result<Expr, ParseError> {
        let unbalanced = || ParseError::UnbalancedDelimiter { offset: open.offset, delimiter: open.describe() };
        match self.peek_lex() {
            None => return Err(unbalanced()),
            Some(l) if is_close(l) => return Err(ParseError::EmptyGroup { offset: open.offset }),
            _ => {}
        }
        let body = match self.list() {
            Ok(b) => b,
            Err(ParseError::UnexpectedEnd) => return Err(unbalanced()),
            Err(e) => return Err(e),
        };
        match self.peek() {
            Some(t) if is_close(&t.lex) => {
                self.bump();
                Ok(body)
            }
            Some(t) if matches!(t.lex, Lex::Sym(')' | ']' | '}') | Lex::EscBrace('}')) => {
                Err(ParseError::UnbalancedDelimiter { offset: t.offset, delimiter: t.describe() })
            }
            Some(_) => Err(self.unexpected()),
            None => Err(unbalanced()),
        }
    }

    fn required_group(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(t) if matches!(t.lex, Lex::Sym('{')) => {
                let open = self.bump().unwrap();
                self.group_body(&open, |l| matches!(l, Lex::Sym('}')))
            }
            Some(_) => self.script_arg(),
            None => Err(ParseError::UnexpectedEnd),
        }
    }

    fn function(&mut self, name: String) -> Result<Expr, ParseError> {
        self.bump();
        let (sub, sup) = self.scripts()?;
        let arg = if self.starts_primary() { Some(Box::new(self.postfix()?)) } else { None };
        Ok(Expr::Func { name, sub, sup, arg })
    }

    fn left_right(&mut self) -> Result<Expr, ParseError> {
        let left = self.bump().unwrap();
        let (fence, close): (Fence, fn(&Lex) -> bool) = match self.bump().map(|t| t.lex) {
            Some(Lex::Sym('(')) => (Fence::Paren, |l| matches!(l, Lex::Sym(')'))),
            Some(Lex::Sym('[')) => (Fence::Bracket, |l| matches!(l, Lex::Sym(']'))),
            Some(Lex::EscBrace('{')) => (Fence::Brace, |l| matches!(l, Lex::EscBrace('}'))),
            Some(_) => return Err(ParseError::UnsupportedCommand { offset: left.offset, command: "\\left".into() }),
            None => return Err(ParseError::UnbalancedDelimiter { offset: left.offset, delimiter: "\\left".into() }),
        };
        let body = match self.list() {
            Ok(b) => b,
            Err(ParseError::UnexpectedEnd) => {
                return Err(ParseError::UnbalancedDelimiter { offset: left.offset, delimiter: "\\left".into() })
            }
            Err(e) => return Err(e),
        };
        if !self.peek_is_command("right") {
            return Err(match self.peek() {
                None => ParseError::UnbalancedDelimiter { offset: left.offset, delimiter: "\\left".into() },
                Some(_) => self.unexpected(),
            });
        }
        let right = self.bump().unwrap();
        match self.bump() {
            Some(t) if close(&t.lex) => Ok(Expr::Group { fence, body: Box::new(body) }),
            _ => Err(ParseError::UnbalancedDelimiter { offset: right.offset, delimiter: "\\right".into() }),
        }
    }

    fn environment_name(&mut self, at: &Tok) -> Result<String, ParseError> {
        if !self.peek_is_sym('{') {
            return Err(ParseError::UnexpectedToken { offset: at.offset, found: at.describe() });
        }
        let open = self.bump().unwrap();
        let mut name = String::new();
        while let Some(Lex::Letter(c)) = self.peek_lex() {
            name.push(*c);
            self.bump();
        }
        if !self.peek_is_sym('}') {
            return Err(ParseError::UnbalancedDelimiter { offset: open.offset, delimiter: "{".into() });
        }
        self.bump();
        Ok(name)
    }

    fn matrix(&mut self) -> Result<Expr, ParseError> {
        let begin = self.bump().unwrap();
        let name = self.environment_name(&begin)?;
        let kind = match name.as_str() {
            "matrix" => MatrixKind::Plain,
            "bmatrix" => MatrixKind::Bracket,
            "pmatrix" => MatrixKind::Paren,
            "vmatrix" => MatrixKind::Vert,
            _ => return Err(ParseError::UnsupportedCommand { offset: begin.offset, command: format!("\\begin{{{name}}}") }),
        };
        let unbalanced = || ParseError::UnbalancedDelimiter { offset: begin.offset, delimiter: format!("\\begin{{{name}}}") };
        let mut rows: Vec<Vec<Expr>> = vec![Vec::new()];
        loop {
            match self.peek_lex() {
                None => return Err(unbalanced()),
                Some(Lex::Command(c)) if c == "end" => {
                    let end = self.bump().unwrap();
                    let end_name = self.environment_name(&end)?;
                    if end_name != name {
                        return Err(ParseError::UnbalancedDelimiter { offset: end.offset, delimiter: format!("\\end{{{end_name}}}") });
                    }
                    break;
                }
                _ => {}
            }
            let cell_start = self.peek().unwrap().offset;
            let cell = match self.list() {
                Ok(c) => c,
                Err(ParseError::UnexpectedEnd) => return Err(unbalanced()),
                Err(ParseError::UnexpectedToken { offset, .. }) if offset == cell_start => {
                    return Err(ParseError::EmptyGroup { offset })
                }
                Err(e) => return Err(e),
            };
            rows.last_mut().unwrap().push(cell);
            match self.peek_lex() {
                Some(Lex::Sym('&')) => {
                    self.bump();
                }
                Some(Lex::RowSep) => {
                    self.bump();
                    rows.push(Vec::new());
                }
                Some(Lex::Command(c)) if c == "end" => {}
                None => return Err(unbalanced()),
                Some(_) => return Err(self.unexpected()),
            }
        }
        if rows.last().is_some_and(Vec::is_empty) {
            rows.pop();
        }
        if rows.is_empty() {
            return Err(ParseError::EmptyGroup { offset: begin.offset });
        }
        Ok(Expr::Matrix { kind, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> String {
        parse_latex(s).unwrap().root.to_string()
    }

    #[test]
    fn atomic_variable() {
        assert_eq!(parse_latex("x").unwrap().root, Expr::Var("x".into()));
    }

    #[test]
    fn quadratic_relation_shape() {
        assert_eq!(p("a^3+b^2=0"), "eq(plus(sup(a,3),sup(b,2)),0)");
    }

    #[test]
    fn unclosed_brace_reports_offset() {
        assert_eq!(
            parse_latex("a^{3"),
            Err(ParseError::UnbalancedDelimiter { offset: 3, delimiter: "{".into() })
        );
    }

    #[test]
    fn error_cases() {
        assert_eq!(parse_latex("   "), Err(ParseError::EmptyInput));
        assert_eq!(
            parse_latex("a+\\foo"),
            Err(ParseError::UnsupportedCommand { offset: 3, command: "\\foo".into() })
        );
        assert!(matches!(parse_latex("a}"), Err(ParseError::UnbalancedDelimiter { offset: 2, .. })));
        assert!(matches!(parse_latex("(a"), Err(ParseError::UnbalancedDelimiter { offset: 1, .. })));
        assert!(matches!(parse_latex("(a]"), Err(ParseError::UnbalancedDelimiter { offset: 3, .. })));
        assert!(matches!(
            parse_latex("\\begin{bmatrix}a\\end{pmatrix}"),
            Err(ParseError::UnbalancedDelimiter { offset: 17, .. })
        ));
        assert!(matches!(parse_latex("\\begin{bmatrix}a"), Err(ParseError::UnbalancedDelimiter { offset: 1, .. })));
        assert_eq!(parse_latex("a+"), Err(ParseError::UnexpectedEnd));
        assert!(matches!(parse_latex("a^b^c"), Err(ParseError::DuplicateScript { .. })));
        assert!(matches!(parse_latex("a$"), Err(ParseError::UnexpectedCharacter { offset: 2, ch: '$' })));
        assert!(matches!(parse_latex("\\frac{}{b}"), Err(ParseError::EmptyGroup { .. })));
    }

    #[test]
    fn precedence_and_implicit_products() {
        assert_eq!(p("a+b c"), "plus(a,times(b,c))");
        assert_eq!(p("a-b-c"), "minus(minus(a,b),c)");
        assert_eq!(p("-a^2"), "neg(sup(a,2))");
        assert_eq!(p("2(x+1)"), "times(2,(plus(x,1)))");
        assert_eq!(p("a/b\\cdot c"), "times(divide(a,b),c)");
        assert_eq!(p("a^23"), "times(sup(a,2),3)");
        assert_eq!(p("x_{11}"), "sub(x,11)");
        assert_eq!(p("3.14r"), "times(3.14,r)");
        assert_eq!(p("n!"), "factorial(n)");
    }

    #[test]
    fn functions_and_structures() {
        assert_eq!(p("O(mn \\log m)"), "times(O,(times(times(m,n),log(m))))");
        assert_eq!(p("\\log_2 n"), "log_2(n)");
        assert_eq!(p("\\frac{a}{b}"), "frac(a,b)");
        assert_eq!(p("\\frac12"), "frac(1,2)");
        assert_eq!(p("\\sqrt[3]{x}"), "root(x,3)");
        assert_eq!(p("\\alpha \\in \\Theta"), "in(alpha,Theta)");
        assert_eq!(p("\\left( a \\right)"), "(a)");
        assert_eq!(p("\\max(a, b)"), "max((list(a,b)))");
    }

    #[test]
    fn matrices() {
        assert_eq!(
            p("\\begin{bmatrix} h_{11} & h_{12}\\\\ h_{21} & h_{22} \\end{bmatrix}"),
            "matrix(sub(h,11),sub(h,12);sub(h,21),sub(h,22))"
        );
        assert_eq!(p("\\begin{pmatrix} x \\\\ y \\\\ \\end{pmatrix}"), "matrix(x;y)");
    }

    #[test]
    fn deterministic() {
        let s = "\\begin{bmatrix} V_1\\\\ I_2 \\end{bmatrix} = \\begin{bmatrix} h_{11} & h_{12}\\\\ h_{21} & h_{22} \\end{bmatrix}";
        assert_eq!(parse_latex(s), parse_latex(s));
    }
}
