//! Coordinate charts on 3-manifold pieces and maps between them.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::EvalError;
use crate::expr::ScalarField;

/// A named 3-coordinate chart with per-coordinate periodicity and an
/// optional polar-radius coordinate whose axis is a chart singularity.
#[derive(Debug, Clone)]
pub struct Chart {
    name: String,
    coords: [String; 3],
    periods: [Option<f64>; 3],
    radial: Option<RadialSpec>,
}

/// Marks one coordinate as a polar radius with domain `[0, rho_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSpec {
    pub coord: usize,
    pub rho_max: f64,
}

impl Chart {
    /// Build a chart; panics on structurally invalid input (periods must be
    /// positive, at most one radial coordinate, radial coordinate aperiodic).
    pub fn new(
        name: impl Into<String>,
        coords: [&str; 3],
        periods: [Option<f64>; 3],
        radial: Option<RadialSpec>,
    ) -> Arc<Chart> {
        for p in periods.iter().flatten() {
            assert!(*p > 0.0, "chart periods must be strictly positive");
        }
        if let Some(r) = &radial {
            assert!(r.coord < 3, "radial coordinate index out of range");
            assert!(r.rho_max > 0.0, "radial domain must be nonempty");
            assert!(
                periods[r.coord].is_none(),
                "radial coordinate cannot be periodic"
            );
        }
        Arc::new(Chart {
            name: name.into(),
            coords: coords.map(str::to_owned),
            periods,
            radial,
        })
    }

    /// Solid-torus chart `(rho, theta, phi)` with `rho` in `[0, rho_max]`
    /// and both angles of period 2 pi.
    pub fn solid_torus(name: impl Into<String>, rho_max: f64) -> Arc<Chart> {
        Chart::new(
            name,
            ["rho", "theta", "phi"],
            [None, Some(2.0 * PI), Some(2.0 * PI)],
            Some(RadialSpec {
                coord: 0,
                rho_max,
            }),
        )
    }

    /// The three-torus chart `(x, y, z)`, all periods 2 pi.
    pub fn three_torus() -> Arc<Chart> {
        Chart::new(
            "t3",
            ["x", "y", "z"],
            [Some(2.0 * PI), Some(2.0 * PI), Some(2.0 * PI)],
            None,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coords(&self) -> &[String; 3] {
        &self.coords
    }

    pub fn period(&self, i: usize) -> Option<f64> {
        self.periods[i]
    }

    pub fn radial(&self) -> Option<RadialSpec> {
        self.radial
    }

    /// Domain membership. Angle coordinates are stored with winding, so only
    /// the radial bound is restrictive.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self.radial {
            Some(r) => p[r.coord] >= 0.0 && p[r.coord] <= r.rho_max,
            None => true,
        }
    }

    /// Reduce angle coordinates modulo their periods (display only; all
    /// computation keeps unreduced values so winding survives).
    pub fn reduce(&self, p: [f64; 3]) -> [f64; 3] {
        let mut out = p;
        for i in 0..3 {
            if let Some(period) = self.periods[i] {
                out[i] = p[i].rem_euclid(period);
            }
        }
        out
    }
}

/// A differentiable map between charts, given by one component expression
/// per target coordinate.
///
/// When the map acts integer-linearly on the two angle coordinates, the
/// integer matrix is recorded so winding (homotopy) data transforms in exact
/// integer arithmetic alongside the floating-point chart map.
#[derive(Debug, Clone)]
pub struct ChartMap {
    pub source: Arc<Chart>,
    pub target: Arc<Chart>,
    comps: [ScalarField; 3],
    angle_matrix: Option<[[i64; 2]; 2]>,
}

impl ChartMap {
    pub fn new(source: Arc<Chart>, target: Arc<Chart>, comps: [ScalarField; 3]) -> Self {
        ChartMap {
            source,
            target,
            comps,
            angle_matrix: None,
        }
    }

    /// Record that coordinates 1 and 2 (the angles) map by this integer
    /// matrix: `(a, b) -> (m00 a + m01 b, m10 a + m11 b)`.
    pub fn with_angle_matrix(mut self, m: [[i64; 2]; 2]) -> Self {
        self.angle_matrix = Some(m);
        self
    }

    pub fn components(&self) -> &[ScalarField; 3] {
        &self.comps
    }

    pub fn angle_matrix(&self) -> Option<[[i64; 2]; 2]> {
        self.angle_matrix
    }

    /// Exact action on angle-winding vectors, when declared.
    pub fn map_winding(&self, w: [i64; 2]) -> Option<[i64; 2]> {
        self.angle_matrix.map(|m| {
            [
                m[0][0] * w[0] + m[0][1] * w[1],
                m[1][0] * w[0] + m[1][1] * w[1],
            ]
        })
    }

    pub fn apply(&self, p: [f64; 3]) -> Result<[f64; 3], EvalError> {
        Ok([
            self.comps[0].eval(p)?,
            self.comps[1].eval(p)?,
            self.comps[2].eval(p)?,
        ])
    }

    /// Jacobian `J[i][j] = d comp_i / d x_j` at `p`.
    pub fn jacobian(&self, p: [f64; 3]) -> Result<[[f64; 3]; 3], EvalError> {
        let mut j = [[0.0; 3]; 3];
        for (i, comp) in self.comps.iter().enumerate() {
            j[i] = comp.jet(p)?.g;
        }
        Ok(j)
    }

    /// Identity map on a chart.
    pub fn identity(chart: Arc<Chart>) -> Self {
        ChartMap {
            source: chart.clone(),
            target: chart,
            comps: [
                ScalarField::coord(0),
                ScalarField::coord(1),
                ScalarField::coord(2),
            ],
            angle_matrix: Some([[1, 0], [0, 1]]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_torus_domain_and_reduction() {
        let chart = Chart::solid_torus("tube", 2.0);
        assert!(chart.contains([1.5, 10.0, -7.0]));
        assert!(!chart.contains([2.5, 0.0, 0.0]));
        let reduced = chart.reduce([1.5, 2.0 * PI + 0.25, -0.25]);
        assert!((reduced[1] - 0.25).abs() < 1e-12);
        assert!((reduced[2] - (2.0 * PI - 0.25)).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "periods must be strictly positive")]
    fn zero_period_rejected() {
        Chart::new("bad", ["a", "b", "c"], [Some(0.0), None, None], None);
    }

    #[test]
    fn winding_transforms_exactly() {
        let chart = Chart::solid_torus("tube", 1.0);
        let map = ChartMap::identity(chart).with_angle_matrix([[2, 1], [0, 3]]);
        assert_eq!(map.map_winding([1, -1]), Some([1, -3]));
    }
}
