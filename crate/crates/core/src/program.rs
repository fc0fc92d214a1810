//! Lambda-calculus view of circuits.
//!
//! A program over `n` qubits is written with `n + 1` nested lambdas. `$0` is
//! the input circuit and `$i` (for `i >= 1`) is qubit parameter `i - 1`. A gate
//! application `(g c $a $b)` appends gate `g` on the listed qubits to the
//! circuit `c`, so the innermost application runs first:
//!
//! ```text
//! (lambda (lambda (lambda (cnot (x $0 $1) $1 $2))))
//! ```
//!
//! is `x` on qubit 0 followed by `cnot` with control 0 and target 1.

use std::fmt;

use crate::circuit::{Circuit, GateLookup};
use crate::error::{Error, Result};
use crate::gates::GateRef;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    /// The input circuit (`$0`).
    Input,
    Apply {
        gate: GateRef,
        input: Box<Expr>,
        /// Qubit parameter indices (0-based; printed as `$i+1`).
        qubits: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    arity: usize,
    body: Expr,
}

impl Program {
    pub fn identity(arity: usize) -> Self {
        Program {
            arity,
            body: Expr::Input,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }

    pub fn from_circuit(c: &Circuit) -> Self {
        let body = c.placements().iter().fold(Expr::Input, |acc, p| Expr::Apply {
            gate: p.gate.clone(),
            input: Box::new(acc),
            qubits: p.qubits.clone(),
        });
        Program {
            arity: c.n_qubits(),
            body,
        }
    }

    pub fn to_circuit(&self) -> Result<Circuit> {
        let mut stack = Vec::new();
        let mut cur = &self.body;
        while let Expr::Apply { gate, input, qubits } = cur {
            stack.push((gate, qubits));
            cur = input;
        }
        let mut c = Circuit::new(self.arity);
        for (gate, qubits) in stack.into_iter().rev() {
            c.push(gate.clone(), qubits.clone())?;
        }
        Ok(c)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for _ in 0..=self.arity {
            f.write_str("(lambda ")?;
        }
        write_expr(&self.body, f)?;
        for _ in 0..=self.arity {
            f.write_str(")")?;
        }
        Ok(())
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Input => f.write_str("$0"),
        Expr::Apply { gate, input, qubits } => {
            write!(f, "({} ", gate.name())?;
            write_expr(input, f)?;
            for q in qubits {
                write!(f, " ${}", q + 1)?;
            }
            f.write_str(")")
        }
    }
}

pub fn print_program(p: &Program) -> String {
    p.to_string()
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Var(usize),
    Name(String),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Open => f.write_str("("),
            Token::Close => f.write_str(")"),
            Token::Var(i) => write!(f, "${i}"),
            Token::Name(n) => f.write_str(n),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' => {
                chars.next();
                out.push(Token::Open);
            }
            ')' => {
                chars.next();
                out.push(Token::Close);
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c == '(' || c == ')' || c.is_whitespace() {
                        break;
                    }
                    word.push(c);
                    chars.next();
                }
                if let Some(digits) = word.strip_prefix('$') {
                    let i = digits
                        .parse()
                        .map_err(|_| Error::parse(&word, "malformed variable"))?;
                    out.push(Token::Var(i));
                } else {
                    out.push(Token::Name(word));
                }
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    gates: &'a dyn GateLookup,
    arity: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::parse("<end>", "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.next()? {
            Token::Close => Ok(()),
            t => Err(Error::parse(t.to_string(), "expected `)`")),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        match self.next()? {
            Token::Var(0) => Ok(Expr::Input),
            Token::Var(i) => Err(Error::parse(
                format!("${i}"),
                "a qubit variable cannot stand for a circuit",
            )),
            Token::Open => {
                let name = match self.next()? {
                    Token::Name(n) if n == "lambda" => {
                        return Err(Error::parse("lambda", "lambdas must enclose the whole program"))
                    }
                    Token::Name(n) => n,
                    t => return Err(Error::parse(t.to_string(), "expected a gate name")),
                };
                let gate = self
                    .gates
                    .lookup(&name)
                    .ok_or_else(|| Error::parse(&name, "unknown gate"))?;
                let input = self.expr()?;
                let mut qubits = Vec::new();
                while let Some(Token::Var(i)) = self.peek().cloned() {
                    self.pos += 1;
                    if i == 0 {
                        return Err(Error::parse("$0", "the input circuit cannot be used as a qubit"));
                    }
                    if i > self.arity {
                        return Err(Error::parse(format!("${i}"), "unbound variable"));
                    }
                    if qubits.contains(&(i - 1)) {
                        return Err(Error::parse(format!("${i}"), "repeated qubit in one application"));
                    }
                    qubits.push(i - 1);
                }
                if qubits.len() != gate.arity() {
                    return Err(Error::parse(
                        &name,
                        format!("arity mismatch: expected {} qubits, got {}", gate.arity(), qubits.len()),
                    ));
                }
                self.expect_close()?;
                Ok(Expr::Apply {
                    gate,
                    input: Box::new(input),
                    qubits,
                })
            }
            t => Err(Error::parse(t.to_string(), "expected `$0` or `(`")),
        }
    }
}

/// Parse the s-expression surface syntax, resolving gate names in `gates`.
pub fn parse_program(text: &str, gates: &dyn GateLookup) -> Result<Program> {
    let tokens = tokenize(text)?;
    let mut lambdas = 0;
    while tokens.get(2 * lambdas) == Some(&Token::Open)
        && tokens.get(2 * lambdas + 1) == Some(&Token::Name("lambda".into()))
    {
        lambdas += 1;
    }
    if lambdas == 0 {
        let tok = tokens.first().map(|t| t.to_string()).unwrap_or_else(|| "<end>".into());
        return Err(Error::parse(tok, "a program starts with `(lambda`"));
    }
    let mut parser = Parser {
        tokens,
        pos: 2 * lambdas,
        gates,
        arity: lambdas - 1,
    };
    let body = parser.expr()?;
    for _ in 0..lambdas {
        parser.expect_close()?;
    }
    if let Some(t) = parser.peek() {
        return Err(Error::parse(t.to_string(), "trailing input"));
    }
    Ok(Program {
        arity: lambdas - 1,
        body,
    })
}

/// Collapse runs of whitespace and drop whitespace next to parentheses
/// (except the single space that separates tokens).
pub fn canonical_whitespace(text: &str) -> String {
    match tokenize(text) {
        Ok(tokens) => {
            let mut out = String::new();
            let mut prev: Option<&Token> = None;
            for t in &tokens {
                let space = matches!(
                    (prev, t),
                    (Some(Token::Close | Token::Var(_) | Token::Name(_)), Token::Open | Token::Var(_) | Token::Name(_))
                );
                if space {
                    out.push(' ');
                }
                out.push_str(&t.to_string());
                prev = Some(t);
            }
            out
        }
        Err(_) => text.split_whitespace().collect::<Vec<_>>().join(" "),
    }
}
