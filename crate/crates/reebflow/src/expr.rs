//! Scalar fields on a 3-coordinate chart.
//!
//! A [`ScalarField`] is a closed expression tree over the chart coordinates:
//! constants, coordinate references, `+ - * /`, integer powers, `sin`, `cos`,
//! `tan`, plus two evaluation-only nodes used by the perturbation machinery
//! (a C^2 bump cutoff and an axis average). Evaluation returns the value
//! alone or a full second-order jet (value, gradient, Hessian); singular
//! points (tan poles, division by ~0) are reported as errors, never as
//! silent non-finite numbers.
//!
//! # Expression grammar
//!
//! Inline expressions in config files and on the CLI use this grammar:
//!
//! ```text
//! expr    := term { ("+" | "-") term }
//! term    := unary { ("*" | "/") unary }
//! unary   := "-" unary | power
//! power   := atom [ "^" [ "-" ] integer ]
//! atom    := number | "pi" | coord | func "(" expr ")" | "(" expr ")"
//! func    := "sin" | "cos" | "tan"
//! coord   := one of the chart's coordinate names
//! ```

use std::fmt;
use std::ops;
use std::sync::Arc;

use crate::error::{EvalError, ParseError};
use crate::jet::Jet2;

/// Quadrature samples for the axis average node; exact for trigonometric
/// polynomials of degree < 32 in theta.
const AXIS_AVG_SAMPLES: usize = 64;

#[derive(Debug)]
enum Node {
    Const(f64),
    Coord(usize),
    Add(ScalarField, ScalarField),
    Sub(ScalarField, ScalarField),
    Mul(ScalarField, ScalarField),
    Div(ScalarField, ScalarField),
    Neg(ScalarField),
    Pow(ScalarField, i32),
    Sin(ScalarField),
    Cos(ScalarField),
    Tan(ScalarField),
    /// Quintic bump of the argument: 1 on [0, r0], 0 on [r1, inf).
    Bump { r0: f64, r1: f64, arg: ScalarField },
    /// Mean of `inner` over one theta-period on the chart axis: coordinate 0
    /// is pinned to 0, coordinate 1 swept over `[0, period)`, so the result
    /// depends on coordinate 2 alone.
    AxisThetaAverage { inner: ScalarField, period: f64 },
}

/// Immutable scalar expression over three chart coordinates.
#[derive(Clone, Debug)]
pub struct ScalarField(Arc<Node>);

impl ScalarField {
    pub fn constant(v: f64) -> Self {
        ScalarField(Arc::new(Node::Const(v)))
    }

    /// The coordinate function `x_i`, `i` in `0..3`.
    pub fn coord(i: usize) -> Self {
        assert!(i < 3, "chart has exactly 3 coordinates");
        ScalarField(Arc::new(Node::Coord(i)))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn sin(&self) -> Self {
        ScalarField(Arc::new(Node::Sin(self.clone())))
    }

    pub fn cos(&self) -> Self {
        ScalarField(Arc::new(Node::Cos(self.clone())))
    }

    pub fn tan(&self) -> Self {
        ScalarField(Arc::new(Node::Tan(self.clone())))
    }

    pub fn powi(&self, n: i32) -> Self {
        ScalarField(Arc::new(Node::Pow(self.clone(), n)))
    }

    /// Quintic C^2 cutoff of this expression: 1 where `self <= r0`,
    /// 0 where `self >= r1`.
    pub fn bump_of(&self, r0: f64, r1: f64) -> Self {
        ScalarField(Arc::new(Node::Bump {
            r0,
            r1,
            arg: self.clone(),
        }))
    }

    /// Mean of this expression over one theta-period at the chart axis
    /// (coordinate 0 = 0). Evaluation-only: no symbolic derivative.
    pub fn axis_theta_average(&self, period: f64) -> Self {
        ScalarField(Arc::new(Node::AxisThetaAverage {
            inner: self.clone(),
            period,
        }))
    }

    fn const_value(&self) -> Option<f64> {
        match &*self.0 {
            Node::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Value-only evaluation.
    pub fn eval(&self, p: [f64; 3]) -> Result<f64, EvalError> {
        let v = self.eval_inner(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { op: "eval" })
        }
    }

    fn eval_inner(&self, p: [f64; 3]) -> Result<f64, EvalError> {
        Ok(match &*self.0 {
            Node::Const(v) => *v,
            Node::Coord(i) => p[*i],
            Node::Add(a, b) => a.eval_inner(p)? + b.eval_inner(p)?,
            Node::Sub(a, b) => a.eval_inner(p)? - b.eval_inner(p)?,
            Node::Mul(a, b) => a.eval_inner(p)? * b.eval_inner(p)?,
            Node::Div(a, b) => {
                let den = b.eval_inner(p)?;
                if den.abs() < crate::jet::SINGULAR_EPS {
                    return Err(EvalError::Singular {
                        op: "div",
                        detail: format!("denominator {den:.3e}"),
                    });
                }
                a.eval_inner(p)? / den
            }
            Node::Neg(a) => -a.eval_inner(p)?,
            Node::Pow(a, n) => {
                let base = a.eval_inner(p)?;
                if *n < 0 && base.abs() < crate::jet::SINGULAR_EPS {
                    return Err(EvalError::Singular {
                        op: "powi",
                        detail: format!("base {base:.3e} with exponent {n}"),
                    });
                }
                base.powi(*n)
            }
            Node::Sin(a) => a.eval_inner(p)?.sin(),
            Node::Cos(a) => a.eval_inner(p)?.cos(),
            Node::Tan(a) => {
                let u = a.eval_inner(p)?;
                if u.cos().abs() < crate::jet::SINGULAR_EPS {
                    return Err(EvalError::Singular {
                        op: "tan",
                        detail: format!("cos({u}) = {:.3e}", u.cos()),
                    });
                }
                u.tan()
            }
            Node::Bump { r0, r1, arg } => Jet2::constant(arg.eval_inner(p)?).bump(*r0, *r1).v,
            Node::AxisThetaAverage { inner, period } => {
                let mut acc = 0.0;
                for j in 0..AXIS_AVG_SAMPLES {
                    let theta = period * (j as f64) / (AXIS_AVG_SAMPLES as f64);
                    acc += inner.eval_inner([0.0, theta, p[2]])?;
                }
                acc / (AXIS_AVG_SAMPLES as f64)
            }
        })
    }

    /// Full second-order jet at `p`.
    pub fn jet(&self, p: [f64; 3]) -> Result<Jet2, EvalError> {
        let j = self.jet_inner(p)?;
        if j.is_finite() {
            Ok(j)
        } else {
            Err(EvalError::NonFinite { op: "jet" })
        }
    }

    fn jet_inner(&self, p: [f64; 3]) -> Result<Jet2, EvalError> {
        Ok(match &*self.0 {
            Node::Const(v) => Jet2::constant(*v),
            Node::Coord(i) => Jet2::coord(p[*i], *i),
            Node::Add(a, b) => a.jet_inner(p)?.add(&b.jet_inner(p)?),
            Node::Sub(a, b) => a.jet_inner(p)?.sub(&b.jet_inner(p)?),
            Node::Mul(a, b) => a.jet_inner(p)?.mul(&b.jet_inner(p)?),
            Node::Div(a, b) => a.jet_inner(p)?.div(&b.jet_inner(p)?)?,
            Node::Neg(a) => a.jet_inner(p)?.neg(),
            Node::Pow(a, n) => a.jet_inner(p)?.powi(*n)?,
            Node::Sin(a) => a.jet_inner(p)?.sin(),
            Node::Cos(a) => a.jet_inner(p)?.cos(),
            Node::Tan(a) => a.jet_inner(p)?.tan()?,
            Node::Bump { r0, r1, arg } => arg.jet_inner(p)?.bump(*r0, *r1),
            Node::AxisThetaAverage { inner, period } => {
                // The result is a function of coordinate 2 alone; averaging
                // jets is exact by linearity.
                let mut value = 0.0;
                let mut dphi = 0.0;
                let mut ddphi = 0.0;
                for j in 0..AXIS_AVG_SAMPLES {
                    let theta = period * (j as f64) / (AXIS_AVG_SAMPLES as f64);
                    let jet = inner.jet_inner([0.0, theta, p[2]])?;
                    value += jet.v;
                    dphi += jet.g[2];
                    ddphi += jet.h[2][2];
                }
                let n = AXIS_AVG_SAMPLES as f64;
                let mut out = Jet2::constant(value / n);
                out.g[2] = dphi / n;
                out.h[2][2] = ddphi / n;
                out
            }
        })
    }

    /// Exact symbolic partial derivative with respect to coordinate `coord`.
    /// Bump and axis-average nodes are evaluation-only and refuse.
    pub fn diff(&self, coord: usize) -> Result<ScalarField, EvalError> {
        Ok(match &*self.0 {
            Node::Const(_) => ScalarField::zero(),
            Node::Coord(i) => {
                if *i == coord {
                    ScalarField::one()
                } else {
                    ScalarField::zero()
                }
            }
            Node::Add(a, b) => add(a.diff(coord)?, b.diff(coord)?),
            Node::Sub(a, b) => sub(a.diff(coord)?, b.diff(coord)?),
            Node::Mul(a, b) => add(
                mul(a.diff(coord)?, b.clone()),
                mul(a.clone(), b.diff(coord)?),
            ),
            Node::Div(a, b) => {
                // (a/b)' = a'/b - a b' / b^2
                let da = a.diff(coord)?;
                let db = b.diff(coord)?;
                sub(
                    div(da, b.clone()),
                    div(mul(a.clone(), db), b.powi(2)),
                )
            }
            Node::Neg(a) => neg(a.diff(coord)?),
            Node::Pow(a, n) => {
                if *n == 0 {
                    ScalarField::zero()
                } else {
                    mul(
                        mul(ScalarField::constant(f64::from(*n)), a.powi(n - 1)),
                        a.diff(coord)?,
                    )
                }
            }
            Node::Sin(a) => mul(a.cos(), a.diff(coord)?),
            Node::Cos(a) => neg(mul(a.sin(), a.diff(coord)?)),
            Node::Tan(a) => {
                // d tan u = (1 + tan^2 u) du
                let sec2 = add(ScalarField::one(), a.tan().powi(2));
                mul(sec2, a.diff(coord)?)
            }
            Node::Bump { .. } => {
                return Err(EvalError::SymbolicUnsupported {
                    op: "diff",
                    node: "bump",
                })
            }
            Node::AxisThetaAverage { .. } => {
                return Err(EvalError::SymbolicUnsupported {
                    op: "diff",
                    node: "axis_theta_average",
                })
            }
        })
    }

    /// Substitute `subs[i]` for coordinate `i` throughout.
    pub fn compose(&self, subs: &[ScalarField; 3]) -> Result<ScalarField, EvalError> {
        Ok(match &*self.0 {
            Node::Const(v) => ScalarField::constant(*v),
            Node::Coord(i) => subs[*i].clone(),
            Node::Add(a, b) => add(a.compose(subs)?, b.compose(subs)?),
            Node::Sub(a, b) => sub(a.compose(subs)?, b.compose(subs)?),
            Node::Mul(a, b) => mul(a.compose(subs)?, b.compose(subs)?),
            Node::Div(a, b) => div(a.compose(subs)?, b.compose(subs)?),
            Node::Neg(a) => neg(a.compose(subs)?),
            Node::Pow(a, n) => a.compose(subs)?.powi(*n),
            Node::Sin(a) => a.compose(subs)?.sin(),
            Node::Cos(a) => a.compose(subs)?.cos(),
            Node::Tan(a) => a.compose(subs)?.tan(),
            Node::Bump { r0, r1, arg } => arg.compose(subs)?.bump_of(*r0, *r1),
            Node::AxisThetaAverage { .. } => {
                return Err(EvalError::SymbolicUnsupported {
                    op: "compose",
                    node: "axis_theta_average",
                })
            }
        })
    }

    /// Pin coordinates 0 and 1 to fixed values, leaving coordinate 2 free.
    pub fn pin_first_two(&self, c0: f64, c1: f64) -> Result<ScalarField, EvalError> {
        self.compose(&[
            ScalarField::constant(c0),
            ScalarField::constant(c1),
            ScalarField::coord(2),
        ])
    }

    /// Whether the expression syntactically references coordinate `coord`.
    pub fn depends_on(&self, coord: usize) -> bool {
        match &*self.0 {
            Node::Const(_) => false,
            Node::Coord(i) => *i == coord,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.depends_on(coord) || b.depends_on(coord)
            }
            Node::Neg(a) | Node::Sin(a) | Node::Cos(a) | Node::Tan(a) => a.depends_on(coord),
            Node::Pow(a, _) => a.depends_on(coord),
            Node::Bump { arg, .. } => arg.depends_on(coord),
            Node::AxisThetaAverage { inner, .. } => coord == 2 && inner.depends_on(2),
        }
    }

    /// Parse an expression over the named coordinates.
    pub fn parse(src: &str, coords: &[String; 3]) -> Result<ScalarField, ParseError> {
        Parser::new(src, coords).parse()
    }
}

// Constructors with constant folding for the trivial identities; keeps the
// trees from symbolic differentiation small.

fn add(a: ScalarField, b: ScalarField) -> ScalarField {
    match (a.const_value(), b.const_value()) {
        (Some(x), Some(y)) => ScalarField::constant(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => ScalarField(Arc::new(Node::Add(a, b))),
    }
}

fn sub(a: ScalarField, b: ScalarField) -> ScalarField {
    match (a.const_value(), b.const_value()) {
        (Some(x), Some(y)) => ScalarField::constant(x - y),
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => neg(b),
        _ => ScalarField(Arc::new(Node::Sub(a, b))),
    }
}

fn mul(a: ScalarField, b: ScalarField) -> ScalarField {
    match (a.const_value(), b.const_value()) {
        (Some(x), Some(y)) => ScalarField::constant(x * y),
        (Some(x), _) if x == 0.0 => ScalarField::zero(),
        (_, Some(y)) if y == 0.0 => ScalarField::zero(),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => ScalarField(Arc::new(Node::Mul(a, b))),
    }
}

fn div(a: ScalarField, b: ScalarField) -> ScalarField {
    match (a.const_value(), b.const_value()) {
        (Some(x), _) if x == 0.0 => ScalarField::zero(),
        (_, Some(y)) if y == 1.0 => a,
        _ => ScalarField(Arc::new(Node::Div(a, b))),
    }
}

fn neg(a: ScalarField) -> ScalarField {
    match a.const_value() {
        Some(x) => ScalarField::constant(-x),
        None => ScalarField(Arc::new(Node::Neg(a))),
    }
}

impl ops::Add for ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: ScalarField) -> ScalarField {
        add(self, rhs)
    }
}

impl ops::Sub for ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: ScalarField) -> ScalarField {
        sub(self, rhs)
    }
}

impl ops::Mul for ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: ScalarField) -> ScalarField {
        mul(self, rhs)
    }
}

impl ops::Div for ScalarField {
    type Output = ScalarField;
    fn div(self, rhs: ScalarField) -> ScalarField {
        div(self, rhs)
    }
}

impl ops::Neg for ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        neg(self)
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(v) => write!(f, "{v}"),
            Node::Coord(i) => write!(f, "x{i}"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Pow(a, n) => write!(f, "{a}^{n}"),
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Tan(a) => write!(f, "tan({a})"),
            Node::Bump { r0, r1, arg } => write!(f, "bump[{r0},{r1}]({arg})"),
            Node::AxisThetaAverage { inner, .. } => write!(f, "axis_avg({inner})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    coords: &'a [String; 3],
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, coords: &'a [String; 3]) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
            coords,
        }
    }

    fn parse(mut self) -> Result<ScalarField, ParseError> {
        let e = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(e)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<ScalarField, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = add(lhs, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarField, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = mul(lhs, self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = div(lhs, self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<ScalarField, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ScalarField, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let n = self.integer()?;
            return Ok(base.powi(n));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(self.err("expected integer exponent"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("exponent out of range"))
    }

    fn atom(&mut self) -> Result<ScalarField, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            _ => Err(self.err("expected number, coordinate, function, or `(`")),
        }
    }

    fn number(&mut self) -> Result<ScalarField, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos > start
                && self
                    .src
                    .get(self.pos + 1)
                    .is_some_and(|&d| d.is_ascii_digit() || d == b'+' || d == b'-')
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse()
            .map(ScalarField::constant)
            .map_err(|_| self.err(format!("invalid number literal `{text}`")))
    }

    fn ident(&mut self) -> Result<ScalarField, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "pi" => Ok(ScalarField::constant(std::f64::consts::PI)),
            "sin" | "cos" | "tan" => {
                if self.peek() != Some(b'(') {
                    return Err(self.err(format!("expected `(` after `{name}`")));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(match name {
                    "sin" => arg.sin(),
                    "cos" => arg.cos(),
                    _ => arg.tan(),
                })
            }
            _ => {
                if let Some(i) = self.coords.iter().position(|c| c == name) {
                    Ok(ScalarField::coord(i))
                } else {
                    Err(ParseError {
                        pos: start,
                        msg: format!(
                            "unknown identifier `{name}`; coordinates are {:?}",
                            self.coords
                        ),
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tube_coords() -> [String; 3] {
        ["rho".into(), "theta".into(), "phi".into()]
    }

    #[test]
    fn parses_and_evaluates_polynomial_trig() {
        let f = ScalarField::parse("1 + rho^2 * sin(theta) - cos(phi)/2", &tube_coords()).unwrap();
        let v = f.eval([2.0, PI / 2.0, 0.0]).unwrap();
        assert!((v - (1.0 + 4.0 - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn parse_reports_unknown_identifier() {
        let err = ScalarField::parse("1 + rhoo", &tube_coords()).unwrap_err();
        assert!(err.msg.contains("rhoo"), "{}", err.msg);
    }

    #[test]
    fn parse_rejects_trailing_garbage() {
        assert!(ScalarField::parse("1 + 2 )", &tube_coords()).is_err());
    }

    #[test]
    fn negative_exponent_and_pi() {
        let f = ScalarField::parse("pi * rho^-2", &tube_coords()).unwrap();
        assert!((f.eval([2.0, 0.0, 0.0]).unwrap() - PI / 4.0).abs() < 1e-14);
        assert!(matches!(
            f.eval([0.0, 0.0, 0.0]),
            Err(EvalError::Singular { op: "powi", .. })
        ));
    }

    #[test]
    fn tan_pole_reported() {
        let f = ScalarField::parse("tan(rho)", &tube_coords()).unwrap();
        assert!(matches!(
            f.eval([PI / 2.0, 0.0, 0.0]),
            Err(EvalError::Singular { op: "tan", .. })
        ));
    }

    #[test]
    fn symbolic_diff_matches_jet_gradient() {
        let f = ScalarField::parse("sin(rho)^2 * cos(theta) + rho / (2 + phi)", &tube_coords())
            .unwrap();
        let p = [0.7, 1.1, 0.3];
        let jet = f.jet(p).unwrap();
        for i in 0..3 {
            let df = f.diff(i).unwrap();
            assert!(
                (df.eval(p).unwrap() - jet.g[i]).abs() < 1e-12,
                "coord {i}"
            );
        }
    }

    #[test]
    fn compose_substitutes_coordinates() {
        // f(rho, theta, phi) = rho^2 + theta, composed with the angle-doubling
        // branch map (rho, 2 theta, phi).
        let f = ScalarField::parse("rho^2 + theta", &tube_coords()).unwrap();
        let g = f
            .compose(&[
                ScalarField::coord(0),
                ScalarField::constant(2.0) * ScalarField::coord(1),
                ScalarField::coord(2),
            ])
            .unwrap();
        assert!((g.eval([3.0, 0.25, 0.0]).unwrap() - 9.5).abs() < 1e-14);
    }

    #[test]
    fn axis_average_drops_theta_dependence() {
        // mean over theta of sin(theta) * (1 + phi) at rho = 0 is 0;
        // mean of (2 + sin(theta)^2) * phi is 2.5 * phi.
        let f = ScalarField::parse("(2 + sin(theta)^2) * phi", &tube_coords()).unwrap();
        let avg = f.axis_theta_average(2.0 * PI);
        let p = [0.4, 1.0, 3.0];
        assert!((avg.eval(p).unwrap() - 7.5).abs() < 1e-12);
        let jet = avg.jet(p).unwrap();
        assert!((jet.g[2] - 2.5).abs() < 1e-12);
        assert_eq!(jet.g[0], 0.0);
        assert_eq!(jet.g[1], 0.0);
    }
}
