//! Second-order forward-mode jets over three variables.
//!
//! A [`Jet2`] carries a value, its gradient, and its (symmetric) Hessian
//! through arithmetic in one pass. Every derivative the crate reports is
//! propagated this way, so derivatives are exact to machine precision
//! rather than approximated by differencing.

use crate::error::EvalError;

/// Threshold below which a divisor or tan-cosine is treated as a pole.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Value, gradient, and Hessian of a scalar function of three variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; 3],
    /// Symmetric second-derivative matrix; both triangles kept in sync.
    pub h: [[f64; 3]; 3],
}

impl Jet2 {
    pub const fn constant(v: f64) -> Self {
        Jet2 {
            v,
            g: [0.0; 3],
            h: [[0.0; 3]; 3],
        }
    }

    /// Jet of the coordinate function `x_i` evaluated at `v`.
    pub fn coord(v: f64, i: usize) -> Self {
        let mut g = [0.0; 3];
        g[i] = 1.0;
        Jet2 {
            v,
            g,
            h: [[0.0; 3]; 3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.g.iter().all(|x| x.is_finite())
            && self.h.iter().flatten().all(|x| x.is_finite())
    }

    pub fn add(&self, o: &Jet2) -> Jet2 {
        let mut out = *self;
        out.v += o.v;
        for i in 0..3 {
            out.g[i] += o.g[i];
            for j in 0..3 {
                out.h[i][j] += o.h[i][j];
            }
        }
        out
    }

    pub fn sub(&self, o: &Jet2) -> Jet2 {
        let mut out = *self;
        out.v -= o.v;
        for i in 0..3 {
            out.g[i] -= o.g[i];
            for j in 0..3 {
                out.h[i][j] -= o.h[i][j];
            }
        }
        out
    }

    pub fn neg(&self) -> Jet2 {
        let mut out = *self;
        out.v = -out.v;
        for i in 0..3 {
            out.g[i] = -out.g[i];
            for j in 0..3 {
                out.h[i][j] = -out.h[i][j];
            }
        }
        out
    }

    pub fn mul(&self, o: &Jet2) -> Jet2 {
        let mut out = Jet2::constant(self.v * o.v);
        for i in 0..3 {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
        }
        for i in 0..3 {
            for j in 0..3 {
                out.h[i][j] = self.h[i][j] * o.v
                    + self.g[i] * o.g[j]
                    + self.g[j] * o.g[i]
                    + self.v * o.h[i][j];
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        let mut out = *self;
        out.v *= c;
        for i in 0..3 {
            out.g[i] *= c;
            for j in 0..3 {
                out.h[i][j] *= c;
            }
        }
        out
    }

    pub fn div(&self, o: &Jet2) -> Result<Jet2, EvalError> {
        if o.v.abs() < SINGULAR_EPS {
            return Err(EvalError::Singular {
                op: "div",
                detail: format!("denominator {:.3e}", o.v),
            });
        }
        let q = self.v / o.v;
        let mut g = [0.0; 3];
        for i in 0..3 {
            g[i] = (self.g[i] - q * o.g[i]) / o.v;
        }
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] =
                    (self.h[i][j] - q * o.h[i][j] - g[i] * o.g[j] - g[j] * o.g[i]) / o.v;
            }
        }
        Ok(Jet2 { v: q, g, h })
    }

    /// Chain rule through a scalar function with value `f`, derivative `df`,
    /// and second derivative `ddf` at `self.v`.
    fn chain(&self, f: f64, df: f64, ddf: f64) -> Jet2 {
        let mut out = Jet2::constant(f);
        for i in 0..3 {
            out.g[i] = df * self.g[i];
        }
        for i in 0..3 {
            for j in 0..3 {
                out.h[i][j] = df * self.h[i][j] + ddf * self.g[i] * self.g[j];
            }
        }
        out
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn tan(&self) -> Result<Jet2, EvalError> {
        let c = self.v.cos();
        if c.abs() < SINGULAR_EPS {
            return Err(EvalError::Singular {
                op: "tan",
                detail: format!("cos({}) = {:.3e}", self.v, c),
            });
        }
        let t = self.v.tan();
        let sec2 = 1.0 + t * t;
        Ok(self.chain(t, sec2, 2.0 * t * sec2))
    }

    pub fn powi(&self, n: i32) -> Result<Jet2, EvalError> {
        if n == 0 {
            return Ok(Jet2::constant(1.0));
        }
        if n < 0 && self.v.abs() < SINGULAR_EPS {
            return Err(EvalError::Singular {
                op: "powi",
                detail: format!("base {:.3e} with exponent {}", self.v, n),
            });
        }
        let nf = f64::from(n);
        let f = self.v.powi(n);
        let df = nf * self.v.powi(n - 1);
        let ddf = nf * (nf - 1.0) * self.v.powi(n - 2);
        Ok(self.chain(f, df, ddf))
    }

    /// Cutoff with value 1 on `[0, r0]`, 0 on `[r1, inf)`, and a quintic
    /// smoothstep in between (C^2 at both junctions).
    pub fn bump(&self, r0: f64, r1: f64) -> Jet2 {
        let u = self.v;
        if u <= r0 {
            return Jet2::constant(1.0);
        }
        if u >= r1 {
            return Jet2::constant(0.0);
        }
        let w = r1 - r0;
        let s = (u - r0) / w;
        let s2 = s * s;
        let s3 = s2 * s;
        let rise = s3 * (6.0 * s2 - 15.0 * s + 10.0);
        let d_rise = 30.0 * s2 * (s - 1.0) * (s - 1.0) / w;
        let dd_rise = 60.0 * s * (s - 1.0) * (2.0 * s - 1.0) / (w * w);
        self.chain(1.0 - rise, -d_rise, -dd_rise)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v: f64) -> Jet2 {
        Jet2::coord(v, 0)
    }

    #[test]
    fn product_rule_matches_hand_hessian() {
        // f = x * x at x = 3: f = 9, f' = 6, f'' = 2.
        let j = x(3.0).mul(&x(3.0));
        assert_eq!(j.v, 9.0);
        assert_eq!(j.g[0], 6.0);
        assert_eq!(j.h[0][0], 2.0);
    }

    #[test]
    fn quotient_rule() {
        // f = 1 / x at x = 2: f = 0.5, f' = -0.25, f'' = 0.25.
        let j = Jet2::constant(1.0).div(&x(2.0)).unwrap();
        assert!((j.v - 0.5).abs() < 1e-15);
        assert!((j.g[0] + 0.25).abs() < 1e-15);
        assert!((j.h[0][0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn division_by_near_zero_is_singular() {
        let err = Jet2::constant(1.0).div(&Jet2::constant(1e-13)).unwrap_err();
        assert!(matches!(err, EvalError::Singular { op: "div", .. }));
    }

    #[test]
    fn tan_near_pole_is_singular() {
        let err = x(std::f64::consts::FRAC_PI_2).tan().unwrap_err();
        assert!(matches!(err, EvalError::Singular { op: "tan", .. }));
    }

    #[test]
    fn bump_is_one_then_zero_and_c2_at_junctions() {
        let (r0, r1) = (0.1, 0.3);
        assert_eq!(x(0.05).bump(r0, r1).v, 1.0);
        assert_eq!(x(0.35).bump(r0, r1).v, 0.0);
        // Derivatives vanish at both ends of the transition.
        for u in [r0 + 1e-9, r1 - 1e-9] {
            let j = x(u).bump(r0, r1);
            assert!(j.g[0].abs() < 1e-6, "d bump at {u} = {}", j.g[0]);
            assert!(j.h[0][0].abs() < 1e-3, "dd bump at {u} = {}", j.h[0][0]);
        }
        // Monotone decreasing inside.
        let mut prev = 1.0;
        for i in 1..50 {
            let u = r0 + (r1 - r0) * (i as f64) / 50.0;
            let v = x(u).bump(r0, r1).v;
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }
}
