//! The `.qp` text format.
//!
//! ```text
//! # Euler equations for the free rigid body
//! params: a1, a2, a3;
//! vars: x1, x2, x3;          # optional; defaults to equation order
//! x1' = a1*x2*x3
//! x2' = a2*x1*x3
//! x3' = a3*x1*x2
//! ```
//!
//! One statement per line, `#` starts a comment. Right-hand sides are sums
//! of products of rational numbers, declared parameters (integer powers) and
//! variables (rational powers: `x^2`, `x^-1`, `x^(1/2)`). `/` divides by a
//! single factor, and parenthesized sums are expanded. `^` binds tighter than
//! `*` and `/`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::coeff::{Atom, Coefficient};
use crate::linalg::{parse_rational, rat_to_short, RatMatrix, Rational};
use crate::system::{ExpQPSystem, QPSystem, SystemError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{line}:{col}: unknown symbol `{name}`")]
    UnknownSymbol {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("{line}:{col}: exponents must be rational literals")]
    IrrationalExponent { line: usize, col: usize },
    #[error("{line}:{col}: {message}")]
    Invalid {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("variable `{0}` has no equation")]
    MissingEquation(String),
}

/// One term `coefficient · Π var^exponent` of a right-hand side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub coefficient: Coefficient,
    pub exponents: BTreeMap<String, Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdeAst {
    pub variables: Vec<String>,
    pub parameters: Vec<String>,
    /// Per variable, in `variables` order; like terms already combined.
    pub equations: Vec<Vec<Term>>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Prime,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::End => "end of line".to_string(),
            other => format!(
                "`{}`",
                match other {
                    Tok::Prime => "'",
                    Tok::Eq => "=",
                    Tok::Plus => "+",
                    Tok::Minus => "-",
                    Tok::Star => "*",
                    Tok::Slash => "/",
                    Tok::Caret => "^",
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::Comma => ",",
                    Tok::Semi => ";",
                    Tok::Colon => ":",
                    _ => unreachable!(),
                }
            ),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex_line(text: &str, line: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line,
                col,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let literal: String = chars[start..i].iter().collect();
            if literal.matches('.').count() > 1 {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    expected: "a number".into(),
                    found: format!("`{literal}`"),
                });
            }
            out.push(Token {
                tok: Tok::Number(literal),
                line,
                col,
            });
            continue;
        }
        let tok = match c {
            '\'' => Tok::Prime,
            '=' => Tok::Eq,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            ':' => Tok::Colon,
            other => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    expected: "a symbol, number or operator".into(),
                    found: format!("`{other}`"),
                })
            }
        };
        out.push(Token { tok, line, col });
        i += 1;
    }
    out.push(Token {
        tok: Tok::End,
        line,
        col: chars.len() + 1,
    });
    Ok(out)
}

/// Sparse polynomial-like expression: variable exponent map → coefficient.
type Expr = BTreeMap<BTreeMap<String, Rational>, Coefficient>;

fn expr_const(c: Coefficient) -> Expr {
    let mut e = Expr::new();
    if !c.is_zero() {
        e.insert(BTreeMap::new(), c);
    }
    e
}

fn expr_add(into: &mut Expr, key: BTreeMap<String, Rational>, c: &Coefficient) {
    if c.is_zero() {
        return;
    }
    let slot = into.entry(key.clone()).or_default();
    *slot += c;
    if slot.is_zero() {
        into.remove(&key);
    }
}

fn expr_mul(a: &Expr, b: &Expr) -> Expr {
    let mut out = Expr::new();
    for (ka, ca) in a {
        for (kb, cb) in b {
            let mut key = ka.clone();
            for (v, e) in kb {
                let slot = key.entry(v.clone()).or_insert_with(Rational::zero);
                *slot += e;
                if slot.is_zero() {
                    key.remove(v);
                }
            }
            expr_add(&mut out, key, &(ca * cb));
        }
    }
    out
}

struct Symbols<'a> {
    vars: &'a BTreeSet<String>,
    params: &'a BTreeSet<String>,
}

struct LineParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    symbols: &'a Symbols<'a>,
}

impl<'a> LineParser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.into(),
            found: t.tok.describe(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Token, ParseError> {
        if self.peek().tok == tok {
            Ok(self.next())
        } else {
            Err(self.error(expected))
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        if self.peek().tok == Tok::Semi {
            self.next();
        }
        if self.peek().tok != Tok::End {
            return Err(self.error("end of line"));
        }
        Ok(())
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut total = Expr::new();
        let mut sign = Rational::one();
        match self.peek().tok {
            Tok::Minus => {
                self.next();
                sign = -sign;
            }
            Tok::Plus => {
                self.next();
            }
            _ => {}
        }
        loop {
            let term = self.product()?;
            for (k, c) in term {
                expr_add(&mut total, k, &c.scale(&sign));
            }
            match self.peek().tok {
                Tok::Plus => {
                    self.next();
                    sign = Rational::one();
                }
                Tok::Minus => {
                    self.next();
                    sign = -Rational::one();
                }
                _ => return Ok(total),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.power()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.next();
                    let rhs = self.power()?;
                    acc = expr_mul(&acc, &rhs);
                }
                Tok::Slash => {
                    let at = self.next();
                    let rhs = self.power()?;
                    acc = expr_mul(&acc, &invert(&rhs, &at)?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let start = self.peek().clone();
        match start.tok.clone() {
            Tok::Number(lit) => {
                self.next();
                let value = parse_rational(&lit).ok_or_else(|| ParseError::Syntax {
                    line: start.line,
                    col: start.col,
                    expected: "a number".into(),
                    found: format!("`{lit}`"),
                })?;
                if self.peek().tok == Tok::Caret {
                    let at = self.next();
                    let e = self.exponent()?;
                    let p = integer_exponent(&e, &at, "numeric powers need integer exponents")?;
                    let mut v = num_traits::pow(value.clone(), p.unsigned_abs() as usize);
                    if p < 0 {
                        if value.is_zero() {
                            return Err(invalid(&at, "division by zero"));
                        }
                        v = v.recip();
                    }
                    return Ok(expr_const(Coefficient::from(v)));
                }
                Ok(expr_const(Coefficient::from(value)))
            }
            Tok::Ident(name) => {
                self.next();
                let exponent = if self.peek().tok == Tok::Caret {
                    self.next();
                    Some(self.exponent()?)
                } else {
                    None
                };
                if self.symbols.vars.contains(&name) {
                    let e = exponent.unwrap_or_else(Rational::one);
                    let mut key = BTreeMap::new();
                    if !e.is_zero() {
                        key.insert(name, e);
                    }
                    let mut out = Expr::new();
                    out.insert(key, Coefficient::one());
                    Ok(out)
                } else if self.symbols.params.contains(&name) {
                    let p = match exponent {
                        Some(e) => {
                            integer_exponent(&e, &start, "parameter powers must be integers")?
                        }
                        None => 1,
                    };
                    Ok(expr_const(Coefficient::term(
                        Atom::param(&name).pow(p),
                        Rational::one(),
                    )))
                } else {
                    Err(ParseError::UnknownSymbol {
                        line: start.line,
                        col: start.col,
                        name,
                    })
                }
            }
            Tok::LParen => {
                self.next();
                let inner = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                if self.peek().tok == Tok::Caret {
                    let at = self.next();
                    let e = self.exponent()?;
                    let p = integer_exponent(&e, &at, "powers of sums need integer exponents")?;
                    if p < 0 {
                        let inv = invert(&inner, &at)?;
                        return Ok((0..-p).fold(expr_const(Coefficient::one()), |acc, _| {
                            expr_mul(&acc, &inv)
                        }));
                    }
                    return Ok((0..p).fold(expr_const(Coefficient::one()), |acc, _| {
                        expr_mul(&acc, &inner)
                    }));
                }
                Ok(inner)
            }
            _ => Err(self.error("a number, symbol or `(`")),
        }
    }

    /// `^` operand: `2`, `-1`, `0.5`, `(1/2)`, `(-3/2)`.
    fn exponent(&mut self) -> Result<Rational, ParseError> {
        let start = self.peek().clone();
        let parenthesized = start.tok == Tok::LParen;
        if parenthesized {
            self.next();
        }
        let mut sign = Rational::one();
        match self.peek().tok {
            Tok::Minus => {
                self.next();
                sign = -sign;
            }
            Tok::Plus => {
                self.next();
            }
            _ => {}
        }
        let t = self.peek().clone();
        let mut value = match &t.tok {
            Tok::Number(lit) => {
                self.next();
                parse_rational(lit).ok_or_else(|| self.error("a rational exponent"))?
            }
            Tok::Ident(_) => {
                return Err(ParseError::IrrationalExponent {
                    line: t.line,
                    col: t.col,
                })
            }
            _ => return Err(self.error("a rational exponent")),
        };
        if parenthesized {
            if self.peek().tok == Tok::Slash {
                self.next();
                let d = self.peek().clone();
                let den = match &d.tok {
                    Tok::Number(lit) => {
                        self.next();
                        parse_rational(lit).ok_or_else(|| self.error("a denominator"))?
                    }
                    Tok::Ident(_) => {
                        return Err(ParseError::IrrationalExponent {
                            line: d.line,
                            col: d.col,
                        })
                    }
                    _ => return Err(self.error("a denominator")),
                };
                if den.is_zero() {
                    return Err(invalid(&d, "zero denominator in exponent"));
                }
                value /= den;
            }
            match &self.peek().tok {
                Tok::RParen => {
                    self.next();
                }
                Tok::Ident(_) | Tok::LParen => {
                    let t = self.peek();
                    return Err(ParseError::IrrationalExponent {
                        line: t.line,
                        col: t.col,
                    });
                }
                _ => return Err(self.error("`)`")),
            }
        }
        Ok(value * sign)
    }
}

fn invalid(at: &Token, message: &str) -> ParseError {
    ParseError::Invalid {
        line: at.line,
        col: at.col,
        message: message.into(),
    }
}

fn integer_exponent(e: &Rational, at: &Token, message: &str) -> Result<i32, ParseError> {
    if !e.is_integer() {
        return Err(invalid(at, message));
    }
    e.to_integer()
        .to_i32()
        .ok_or_else(|| invalid(at, "exponent out of range"))
}

fn invert(e: &Expr, at: &Token) -> Result<Expr, ParseError> {
    if e.len() != 1 {
        return Err(invalid(at, "can only divide by a single term"));
    }
    let (key, c) = e.iter().next().expect("one term");
    let inv_c = Coefficient::one()
        .checked_div(c)
        .map_err(|_| invalid(at, "can only divide by a single-term coefficient"))?;
    let inv_key = key.iter().map(|(v, p)| (v.clone(), -p.clone())).collect();
    Ok(BTreeMap::from([(inv_key, inv_c)]))
}

fn declaration(tokens: &[Token]) -> Option<&str> {
    match (&tokens[0].tok, tokens.get(1).map(|t| &t.tok)) {
        (Tok::Ident(kw), Some(Tok::Colon)) if kw == "params" || kw == "vars" => Some(kw.as_str()),
        _ => None,
    }
}

fn name_list(tokens: &[Token]) -> Result<Vec<(String, Token)>, ParseError> {
    let dummy = Symbols {
        vars: &BTreeSet::new(),
        params: &BTreeSet::new(),
    };
    let mut p = LineParser {
        tokens,
        pos: 2,
        symbols: &dummy,
    };
    let mut names = Vec::new();
    if matches!(p.peek().tok, Tok::End | Tok::Semi) {
        p.finish()?;
        return Ok(names);
    }
    loop {
        let t = p.peek().clone();
        match &t.tok {
            Tok::Ident(name) => {
                p.next();
                names.push((name.clone(), t.clone()));
            }
            _ => return Err(p.error("a name")),
        }
        if p.peek().tok == Tok::Comma {
            p.next();
        } else {
            break;
        }
    }
    p.finish()?;
    Ok(names)
}

/// Parses `.qp` text into an AST.
pub fn parse(text: &str) -> Result<OdeAst, ParseError> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let tokens = lex_line(raw, idx + 1)?;
        if tokens.len() > 1 {
            lines.push(tokens);
        }
    }

    let mut params: Vec<String> = Vec::new();
    let mut declared_vars: Option<Vec<String>> = None;
    let mut lhs_order: Vec<String> = Vec::new();
    let mut equations: Vec<(String, usize)> = Vec::new();
    for (li, tokens) in lines.iter().enumerate() {
        match declaration(tokens) {
            Some(kw) => {
                let names = name_list(tokens)?;
                let target: &mut Vec<String> = if kw == "params" {
                    &mut params
                } else {
                    if declared_vars.is_some() {
                        return Err(invalid(&tokens[0], "duplicate `vars:` declaration"));
                    }
                    declared_vars.get_or_insert_with(Vec::new)
                };
                for (name, at) in names {
                    if target.contains(&name) {
                        return Err(invalid(&at, &format!("`{name}` declared twice")));
                    }
                    target.push(name);
                }
            }
            None => {
                let dummy = Symbols {
                    vars: &BTreeSet::new(),
                    params: &BTreeSet::new(),
                };
                let mut p = LineParser {
                    tokens,
                    pos: 0,
                    symbols: &dummy,
                };
                let head = p.peek().clone();
                let Tok::Ident(name) = head.tok.clone() else {
                    return Err(p.error("an equation `x' = ...` or a declaration"));
                };
                p.next();
                p.expect(Tok::Prime, "`'` after the variable name")?;
                p.expect(Tok::Eq, "`=`")?;
                if lhs_order.contains(&name) {
                    return Err(invalid(&head, &format!("second equation for `{name}`")));
                }
                lhs_order.push(name.clone());
                equations.push((name, li));
            }
        }
    }

    let variables = match declared_vars {
        Some(v) => {
            if let Some((name, li)) = equations.iter().find(|(n, _)| !v.contains(n)) {
                return Err(ParseError::UnknownSymbol {
                    line: lines[*li][0].line,
                    col: lines[*li][0].col,
                    name: name.clone(),
                });
            }
            v
        }
        None => lhs_order,
    };
    if let Some(clash) = variables.iter().find(|v| params.contains(v)) {
        return Err(ParseError::Invalid {
            line: 0,
            col: 0,
            message: format!("`{clash}` is declared both as a variable and a parameter"),
        });
    }

    let var_set: BTreeSet<String> = variables.iter().cloned().collect();
    let param_set: BTreeSet<String> = params.iter().cloned().collect();
    let symbols = Symbols {
        vars: &var_set,
        params: &param_set,
    };
    let mut by_var: BTreeMap<String, Vec<Term>> = BTreeMap::new();
    for (name, li) in &equations {
        let mut p = LineParser {
            tokens: &lines[*li],
            pos: 3,
            symbols: &symbols,
        };
        let expr = p.sum()?;
        p.finish()?;
        let terms = expr
            .into_iter()
            .map(|(exponents, coefficient)| Term {
                coefficient,
                exponents,
            })
            .collect();
        by_var.insert(name.clone(), terms);
    }
    let equations = variables
        .iter()
        .map(|v| {
            by_var
                .remove(v)
                .ok_or_else(|| ParseError::MissingEquation(v.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OdeAst {
        variables,
        parameters: params,
        equations,
    })
}

/// Divides equation `i` by `xᵢ`: constant quotients form `λ`, the remaining
/// exponent vectors become quasimonomials. No normalization.
pub fn lower_raw(ast: &OdeAst) -> QPSystem {
    let n = ast.variables.len();
    let mut lambda = vec![Coefficient::zero(); n];
    let mut index: BTreeMap<Vec<Rational>, usize> = BTreeMap::new();
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    let mut entries: Vec<(usize, usize, Coefficient)> = Vec::new();
    for (i, terms) in ast.equations.iter().enumerate() {
        for term in terms {
            let row: Vec<Rational> = ast
                .variables
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let e = term
                        .exponents
                        .get(v)
                        .cloned()
                        .unwrap_or_else(Rational::zero);
                    if k == i {
                        e - Rational::one()
                    } else {
                        e
                    }
                })
                .collect();
            if row.iter().all(Zero::is_zero) {
                lambda[i] += &term.coefficient;
                continue;
            }
            let j = *index.entry(row.clone()).or_insert_with(|| {
                rows.push(row);
                rows.len() - 1
            });
            entries.push((i, j, term.coefficient.clone()));
        }
    }
    let m = rows.len();
    let mut a = vec![vec![Coefficient::zero(); m]; n];
    for (i, j, c) in entries {
        a[i][j] += &c;
    }
    let b = if rows.is_empty() {
        RatMatrix::empty(n)
    } else {
        RatMatrix::from_rows(rows)
    };
    let mut sys = QPSystem {
        var_names: ast.variables.clone(),
        params: ast.parameters.clone(),
        a,
        b,
        lambda,
    };
    sys.sort_monomials();
    sys
}

/// Lowers and normalizes.
pub fn lower(ast: &OdeAst) -> Result<QPSystem, SystemError> {
    lower_raw(ast).normalize()
}

/// Parses and lowers `.qp` text without normalizing, for reduced systems
/// whose exponent matrix is rank deficient by construction.
pub fn parse_raw_system(text: &str) -> Result<QPSystem, ParseError> {
    parse(text).map(|ast| lower_raw(&ast))
}

/// Parses a standalone coefficient expression over `params`, such as `a2`
/// or `-1/2*a1*a3^2`.
pub fn parse_coefficient(text: &str, params: &[String]) -> Result<Coefficient, ParseError> {
    let tokens = lex_line(text, 1)?;
    let vars = BTreeSet::new();
    let param_set: BTreeSet<String> = params.iter().cloned().collect();
    let symbols = Symbols {
        vars: &vars,
        params: &param_set,
    };
    let mut p = LineParser {
        tokens: &tokens,
        pos: 0,
        symbols: &symbols,
    };
    let expr = p.sum()?;
    p.finish()?;
    Ok(expr.get(&BTreeMap::new()).cloned().unwrap_or_default())
}

fn format_exponent(e: &Rational) -> String {
    if e.is_integer() && e.is_positive() {
        rat_to_short(e)
    } else {
        format!("({})", rat_to_short(e))
    }
}

fn format_factor(name: &str, e: &Rational) -> String {
    if e.is_one() {
        name.to_string()
    } else {
        format!("{name}^{}", format_exponent(e))
    }
}

/// Canonical text such that `lower(parse(render(s))) == s` for normalized
/// systems.
pub fn render(sys: &QPSystem) -> String {
    let mut out = String::from("# quasipolynomial system\n");
    if sys.n() == 0 {
        return out;
    }
    if !sys.params.is_empty() {
        let _ = writeln!(out, "params: {};", sys.params.join(", "));
    }
    let _ = writeln!(out, "vars: {};", sys.var_names.join(", "));
    for i in 0..sys.n() {
        let _ = writeln!(out, "{}' = {}", sys.var_names[i], render_rhs(sys, i));
    }
    out
}

/// Text for a system whose quasimonomials carry exponential time factors.
/// The factors are listed in comments; the equations are the autonomous part.
pub fn render_exp(sys: &ExpQPSystem) -> String {
    let auto = sys.autonomous_part();
    let mut out = String::from("# quasipolynomial system with exponential factors\n");
    for j in 0..sys.m() {
        if sys.gamma[j].is_zero() {
            continue;
        }
        let mono: Vec<String> = (0..sys.n())
            .filter(|&k| !sys.b.get(j, k).is_zero())
            .map(|k| format_factor(&sys.var_names[k], sys.b.get(j, k)))
            .collect();
        let _ = writeln!(
            out,
            "# {} carries exp(({})*t)",
            mono.join("*"),
            sys.gamma[j]
        );
    }
    out.push_str(render(&auto).trim_start_matches("# quasipolynomial system\n"));
    out
}

/// Right-hand side of equation `i` in canonical text form.
pub fn render_rhs(sys: &QPSystem, i: usize) -> String {
    let n = sys.n();
    // Terms in canonical order: by exponent row relative to xᵢ (λ is the
    // zero row).
    let mut rows: BTreeMap<Vec<Rational>, Coefficient> = BTreeMap::new();
    if !sys.lambda[i].is_zero() {
        rows.insert(vec![Rational::zero(); n], sys.lambda[i].clone());
    }
    for j in 0..sys.m() {
        if !sys.a[i][j].is_zero() {
            let slot = rows.entry(sys.b.row(j).to_vec()).or_default();
            *slot += &sys.a[i][j];
        }
    }
    let mut text = String::new();
    for (row, coeff) in rows {
        let var_factors: Vec<String> = row
            .iter()
            .enumerate()
            .filter_map(|(k, e)| {
                let total = if k == i {
                    e + Rational::one()
                } else {
                    e.clone()
                };
                (!total.is_zero()).then(|| format_factor(&sys.var_names[k], &total))
            })
            .collect();
        for (atom, weight) in coeff.terms() {
            let mut factors = Vec::new();
            let magnitude = weight.abs();
            let atom_factors: Vec<String> = atom
                .powers()
                .map(|(p, e)| format_factor(p, &Rational::from_integer(e.into())))
                .collect();
            if !magnitude.is_one() || (atom_factors.is_empty() && var_factors.is_empty()) {
                factors.push(rat_to_short(&magnitude));
            }
            factors.extend(atom_factors);
            factors.extend(var_factors.iter().cloned());
            let body = factors.join("*");
            if text.is_empty() {
                if weight.is_negative() {
                    text.push('-');
                }
            } else {
                text.push_str(if weight.is_negative() { " - " } else { " + " });
            }
            text.push_str(&body);
        }
    }
    if text.is_empty() {
        text.push('0');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{int, rat};

    const EULER: &str = "params: a1, a2, a3;\nx1' = a1*x2*x3\nx2' = a2*x1*x3\nx3' = a3*x1*x2\n";

    #[test]
    fn parses_single_term() {
        let ast = parse(EULER).unwrap();
        assert_eq!(ast.variables, vec!["x1", "x2", "x3"]);
        assert_eq!(ast.equations[0].len(), 1);
        let t = &ast.equations[0][0];
        assert_eq!(t.coefficient, Coefficient::param("a1"));
        assert_eq!(
            t.exponents,
            BTreeMap::from([("x2".to_string(), int(1)), ("x3".to_string(), int(1))])
        );
    }

    #[test]
    fn zero_rhs_has_no_terms() {
        let ast = parse("x1' = 0").unwrap();
        assert!(ast.equations[0].is_empty());
    }

    #[test]
    fn rational_exponents() {
        let ast = parse("vars: x1, x2;\nx1' = x2^(1/2)\nx2' = x1^-1 * x2^(-3/2) + x2^0.5").unwrap();
        assert_eq!(ast.equations[0][0].exponents["x2"], rat(1, 2));
        let exps: Vec<_> = ast.equations[1]
            .iter()
            .map(|t| t.exponents.clone())
            .collect();
        assert!(exps.contains(&BTreeMap::from([
            ("x1".to_string(), int(-1)),
            ("x2".to_string(), rat(-3, 2))
        ])));
        assert!(exps.contains(&BTreeMap::from([("x2".to_string(), rat(1, 2))])));
    }

    #[test]
    fn parenthesized_sums_expand() {
        let ast = parse("vars: z1, z2, z3;\nz1' = z1*(z2 - 1)\nz2' = 2*z2*(1 - z2 - 2*z3)\nz3' = 2*z3*(1 + 2*z3)")
            .unwrap();
        assert_eq!(ast.equations[1].len(), 3);
        let sys = lower_raw(&ast);
        assert_eq!(sys.lambda[1], Coefficient::from(2));
        assert_eq!(sys.lambda[0], Coefficient::from(-1));
    }

    #[test]
    fn errors_carry_positions() {
        match parse("x1' = a1*x1") {
            Err(ParseError::UnknownSymbol {
                line: 1,
                col: 7,
                name,
            }) => assert_eq!(name, "a1"),
            other => panic!("{other:?}"),
        }
        match parse("x1' = x1^pi") {
            Err(ParseError::IrrationalExponent { line: 1, col: 10 }) => {}
            other => panic!("{other:?}"),
        }
        match parse("x1' = x1 +") {
            Err(ParseError::Syntax {
                line: 1, col: 11, ..
            }) => {}
            other => panic!("{other:?}"),
        }
        match parse("x1 = x1") {
            Err(ParseError::Syntax {
                line: 1, col: 4, ..
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(
            matches!(parse("vars: x1, x2;\nx1' = x2"), Err(ParseError::MissingEquation(v)) if v == "x2")
        );
        assert!(matches!(
            parse("params: a;\nx1' = x1^a"),
            Err(ParseError::IrrationalExponent { .. })
        ));
    }

    #[test]
    fn lowering_linear_equation_gives_lambda_only() {
        let sys = lower_raw(&parse("x1' = 2*x1").unwrap());
        assert_eq!(sys.m(), 0);
        assert_eq!(sys.lambda, vec![Coefficient::from(2)]);
        assert_eq!(lower(&parse("x1' = 2*x1").unwrap()).unwrap(), sys);
    }

    #[test]
    fn render_round_trips_euler() {
        let sys = lower(&parse(EULER).unwrap()).unwrap();
        let text = render(&sys);
        assert!(text.contains("x1' = a1*x2*x3"));
        assert_eq!(lower(&parse(&text).unwrap()).unwrap(), sys);
    }

    #[test]
    fn render_formats_exponents_and_weights() {
        let ast = parse("params: a;\nx' = -1/2*a^(-1)*x^(3/2) + x^2 - 3").unwrap();
        let sys = lower_raw(&ast);
        assert_eq!(render_rhs(&sys, 0), "-3 - 1/2*a^(-1)*x^(3/2) + x^2");
    }

    #[test]
    fn empty_system_renders_header_only() {
        let sys = QPSystem::new(vec![], vec![], vec![], RatMatrix::empty(0), vec![]).unwrap();
        assert_eq!(render(&sys), "# quasipolynomial system\n");
    }

    #[test]
    fn coefficient_expressions() {
        let params = vec!["a1".to_string(), "a2".to_string()];
        assert_eq!(
            parse_coefficient("a2", &params).unwrap(),
            Coefficient::param("a2")
        );
        let c = parse_coefficient("-1/2*a1*a2^2 + 3", &params).unwrap();
        assert_eq!(c.to_string(), "-1/2*a1*a2^2 + 3");
        assert!(matches!(
            parse_coefficient("b", &params),
            Err(ParseError::UnknownSymbol { .. })
        ));
    }
}
