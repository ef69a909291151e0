//! Coordinate expressions for configuration values.
//!
//! The grammar covers the four arithmetic operations, powers, `sin`, `cos`,
//! `exp`, the constant `pi`, and the coordinates `x0`..`x3`. Expressions are
//! parsed once into a tree and evaluated by walking it; they can also be
//! differentiated symbolically, which is how the convergence pipeline
//! manufactures source terms whose exact solution is the configured field.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: [f64; 4]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Coord(c) => x[*c],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
        }
    }

    /// True when any coordinate appears in the tree.
    pub fn depends_on_coords(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Coord(_) => true,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => a.depends_on_coords(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on_coords() || b.depends_on_coords(),
        }
    }

    /// Symbolic ∂/∂xμ. Powers must have constant exponents; everything else
    /// in the grammar is smooth and differentiates by the standard rules.
    pub fn deriv(&self, mu: usize) -> Result<Expr, String> {
        let d = |a: &Expr| a.deriv(mu);
        let e = match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Coord(c) => Expr::Num(if *c == mu { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::Neg(Box::new(d(a)?)),
            Expr::Add(a, b) => Expr::Add(Box::new(d(a)?), Box::new(d(b)?)),
            Expr::Sub(a, b) => Expr::Sub(Box::new(d(a)?), Box::new(d(b)?)),
            Expr::Mul(a, b) => Expr::Add(
                Box::new(Expr::Mul(Box::new(d(a)?), b.clone())),
                Box::new(Expr::Mul(a.clone(), Box::new(d(b)?))),
            ),
            Expr::Div(a, b) => Expr::Div(
                Box::new(Expr::Sub(
                    Box::new(Expr::Mul(Box::new(d(a)?), b.clone())),
                    Box::new(Expr::Mul(a.clone(), Box::new(d(b)?))),
                )),
                Box::new(Expr::Mul(b.clone(), b.clone())),
            ),
            Expr::Pow(a, b) => {
                if b.depends_on_coords() {
                    return Err(
                        "cannot differentiate a power with a coordinate-dependent exponent"
                            .to_string(),
                    );
                }
                let bm1 = Expr::Sub(b.clone(), Box::new(Expr::Num(1.0)));
                Expr::Mul(
                    Box::new(Expr::Mul(
                        b.clone(),
                        Box::new(Expr::Pow(a.clone(), Box::new(bm1))),
                    )),
                    Box::new(d(a)?),
                )
            }
            Expr::Sin(a) => Expr::Mul(Box::new(Expr::Cos(a.clone())), Box::new(d(a)?)),
            Expr::Cos(a) => Expr::Neg(Box::new(Expr::Mul(
                Box::new(Expr::Sin(a.clone())),
                Box::new(d(a)?),
            ))),
            Expr::Exp(a) => Expr::Mul(Box::new(Expr::Exp(a.clone())), Box::new(d(a)?)),
        };
        Ok(simplify(e))
    }

    /// □ = ∂₀₀ − ∂₁₁ − ∂₂₂ − ∂₃₃ applied symbolically.
    pub fn dalembertian(&self) -> Result<Expr, String> {
        let mut total = self.deriv(0)?.deriv(0)?;
        for mu in 1..4 {
            total = Expr::Sub(Box::new(total), Box::new(self.deriv(mu)?.deriv(mu)?));
        }
        Ok(simplify(total))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{}", crate::config::fmt_f64(*v)),
            Expr::Coord(c) => write!(f, "x{c}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a}^{b})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

/// Constant folding and identity pruning; keeps derivative trees small.
pub fn simplify(e: Expr) -> Expr {
    let num = |v: f64| Expr::Num(v);
    match e {
        Expr::Neg(a) => match simplify(*a) {
            Expr::Num(v) => num(-v),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        },
        Expr::Add(a, b) => match (simplify(*a), simplify(*b)) {
            (Expr::Num(x), Expr::Num(y)) => num(x + y),
            (Expr::Num(z), b) if z == 0.0 => b,
            (a, Expr::Num(z)) if z == 0.0 => a,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        },
        Expr::Sub(a, b) => match (simplify(*a), simplify(*b)) {
            (Expr::Num(x), Expr::Num(y)) => num(x - y),
            (a, Expr::Num(z)) if z == 0.0 => a,
            (Expr::Num(z), b) if z == 0.0 => Expr::Neg(Box::new(b)),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        },
        Expr::Mul(a, b) => match (simplify(*a), simplify(*b)) {
            (Expr::Num(x), Expr::Num(y)) => num(x * y),
            (Expr::Num(z), _) | (_, Expr::Num(z)) if z == 0.0 => num(0.0),
            (Expr::Num(o), b) if o == 1.0 => b,
            (a, Expr::Num(o)) if o == 1.0 => a,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        },
        Expr::Div(a, b) => match (simplify(*a), simplify(*b)) {
            (Expr::Num(x), Expr::Num(y)) if y != 0.0 => num(x / y),
            (Expr::Num(z), _) if z == 0.0 => num(0.0),
            (a, Expr::Num(o)) if o == 1.0 => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        },
        Expr::Pow(a, b) => match (simplify(*a), simplify(*b)) {
            (Expr::Num(x), Expr::Num(y)) => {
                let v = x.powf(y);
                if v.is_finite() {
                    num(v)
                } else {
                    Expr::Pow(Box::new(num(x)), Box::new(num(y)))
                }
            }
            (a, Expr::Num(o)) if o == 1.0 => a,
            (_, Expr::Num(z)) if z == 0.0 => num(1.0),
            (a, b) => Expr::Pow(Box::new(a), Box::new(b)),
        },
        Expr::Sin(a) => match simplify(*a) {
            Expr::Num(v) => num(v.sin()),
            a => Expr::Sin(Box::new(a)),
        },
        Expr::Cos(a) => match simplify(*a) {
            Expr::Num(v) => num(v.cos()),
            a => Expr::Cos(Box::new(a)),
        },
        Expr::Exp(a) => match simplify(*a) {
            Expr::Num(v) => num(v.exp()),
            a => Expr::Exp(Box::new(a)),
        },
        leaf => leaf,
    }
}

/// Parses an expression; errors carry the 1-based character column.
pub fn parse(src: &str) -> Result<Expr, String> {
    let mut p = Parser {
        chars: src.chars().collect(),
        pos: 0,
    };
    p.skip_ws();
    if p.peek().is_none() {
        return Err("empty expression".to_string());
    }
    let e = p.expr()?;
    p.skip_ws();
    if let Some(c) = p.peek() {
        return Err(format!(
            "unexpected `{c}` at column {} (expected an operator or end of expression)",
            p.pos + 1
        ));
    }
    Ok(e)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    /// expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some('-') | Some('−') => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    /// term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') | Some('×') => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some('/') | Some('÷') => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    /// unary := ('-' | '+') unary | power. Binds looser than `^`, so `-x0^2`
    /// reads as −(x0²).
    fn unary(&mut self) -> Result<Expr, String> {
        self.skip_ws();
        match self.peek() {
            Some('-') | Some('−') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    /// power := primary ('^' unary)?   (right-associative; the exponent may
    /// carry its own sign, as in 2^-3)
    fn power(&mut self) -> Result<Expr, String> {
        let base = self.primary()?;
        self.skip_ws();
        if self.peek() == Some('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, String> {
        self.skip_ws();
        let col = self.pos + 1;
        match self.peek() {
            None => Err(format!("expected a value at column {col}, found end of expression")),
            Some('(') => {
                self.bump();
                let inner = self.expr()?;
                self.skip_ws();
                if self.bump() != Some(')') {
                    return Err(format!("unclosed `(` opened at column {col}"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(format!("unexpected `{c}` at column {col}")),
        }
    }

    fn number(&mut self) -> Result<Expr, String> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            // Exponent suffix only when followed by a (signed) digit, so
            // `2exp(x0)` fails loudly instead of eating the `e`.
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| format!("invalid number `{text}` at column {}", start + 1))
    }

    fn ident(&mut self) -> Result<Expr, String> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        match name.as_str() {
            "x0" => Ok(Expr::Coord(0)),
            "x1" => Ok(Expr::Coord(1)),
            "x2" => Ok(Expr::Coord(2)),
            "x3" => Ok(Expr::Coord(3)),
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "sin" | "cos" | "exp" => {
                self.skip_ws();
                let col = self.pos + 1;
                if self.bump() != Some('(') {
                    return Err(format!("`{name}` needs a parenthesized argument at column {col}"));
                }
                let arg = Box::new(self.expr()?);
                self.skip_ws();
                if self.bump() != Some(')') {
                    return Err(format!("unclosed `{name}(` opened at column {col}"));
                }
                Ok(match name.as_str() {
                    "sin" => Expr::Sin(arg),
                    "cos" => Expr::Cos(arg),
                    _ => Expr::Exp(arg),
                })
            }
            _ => Err(format!(
                "unknown name `{name}` at column {} (coordinates x0..x3, pi, sin, cos, exp)",
                start + 1
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: [f64; 4]) -> f64 {
        parse(src).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity_follow_convention() {
        assert_eq!(ev("2 + 3 * 4^2", [0.0; 4]), 50.0);
        assert_eq!(ev("2^3^2", [0.0; 4]), 512.0);
        assert_eq!(ev("10 - 4 - 3", [0.0; 4]), 3.0);
        assert_eq!(ev("12 / 4 / 3", [0.0; 4]), 1.0);
        assert_eq!(ev("-x0^2", [3.0, 0.0, 0.0, 0.0]), -9.0);
        assert_eq!(ev("2^-2", [0.0; 4]), 0.25);
        assert_eq!(ev("(2 + 3) * 4", [0.0; 4]), 20.0);
    }

    #[test]
    fn coordinates_functions_and_constants_evaluate() {
        let x = [0.3, -0.7, 1.1, 2.0];
        assert_eq!(ev("x0 + x1 + x2 + x3", x), x.iter().sum::<f64>());
        assert!((ev("sin(pi / 2)", x) - 1.0).abs() < 1e-15);
        assert!((ev("exp(x0) * cos(x1)", x) - x[0].exp() * x[1].cos()).abs() < 1e-15);
        assert_eq!(ev("2.5e-3", x), 0.0025);
        assert_eq!(ev("1 − 2 × 3 ÷ 6", x), 0.0);
    }

    #[test]
    fn malformed_expressions_report_positions() {
        let e = parse("2 + sigma").unwrap_err();
        assert!(e.contains("sigma") && e.contains("column 5"), "{e}");
        let e = parse("sin x0").unwrap_err();
        assert!(e.contains("parenthesized"), "{e}");
        let e = parse("(1 + 2").unwrap_err();
        assert!(e.contains("unclosed"), "{e}");
        let e = parse("1 2").unwrap_err();
        assert!(e.contains("column 3"), "{e}");
        assert!(parse("").is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            "sin(x0 * x1) + exp(x2 / (1 + x3^2))",
            "x0^3 - 2 * x1 * x2 + cos(x3)^2",
            "(x0 + x1) / (2 + sin(x2))",
        ];
        let x = [0.4, -0.3, 0.8, 0.2];
        let d = 1e-6;
        for src in cases {
            let e = parse(src).unwrap();
            for mu in 0..4 {
                let de = e.deriv(mu).unwrap();
                let mut xp = x;
                let mut xm = x;
                xp[mu] += d;
                xm[mu] -= d;
                let fd = (e.eval(xp) - e.eval(xm)) / (2.0 * d);
                assert!(
                    (de.eval(x) - fd).abs() < 1e-8,
                    "∂{mu} of {src}: {} vs {fd}",
                    de.eval(x)
                );
            }
        }
    }

    #[test]
    fn wave_operator_is_exact_on_closed_forms() {
        // □(e^{x0} cos x1) = 2 e^{x0} cos x1.
        let e = parse("exp(x0) * cos(x1)").unwrap();
        let box_e = e.dalembertian().unwrap();
        for x in [[0.2, 0.5, 0.0, 0.0], [1.0, -0.3, 0.4, 0.9]] {
            assert!((box_e.eval(x) - 2.0 * x[0].exp() * x[1].cos()).abs() < 1e-12);
        }
        // Plane waves along a null direction are annihilated.
        let n = parse("sin(x0 - x1)").unwrap();
        let box_n = n.dalembertian().unwrap();
        assert_eq!(box_n.eval([0.37, 1.41, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn variable_exponents_are_rejected_by_the_derivative() {
        let e = parse("x0^x1").unwrap();
        assert!(e.deriv(0).unwrap_err().contains("exponent"));
    }
}
