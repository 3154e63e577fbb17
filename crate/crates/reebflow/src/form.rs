//! One-forms on charts: exterior derivative, wedge, contact verification,
//! Reeb field extraction, and pullbacks.
//!
//! Orientation convention: the chart coordinate order defines the positive
//! volume form `dx1 ^ dx2 ^ dx3`; a "positive contact form" has positive
//! `alpha ^ d alpha` coefficient in that order. Reports record the sign so
//! forms of either orientation are handled.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, ChartMap};
use crate::error::{EvalError, FormError};
use crate::expr::ScalarField;

/// Absolute degeneracy threshold on the (rho-normalized near the axis)
/// wedge coefficient, and the Reeb rescale refusal threshold.
pub const DEGENERACY_EPS: f64 = 1e-9;
/// Reeb postcondition tolerances: |alpha(X) - 1| and |dalpha(X,.)| / |dalpha|.
pub const REEB_ALPHA_TOL: f64 = 1e-10;
pub const REEB_DALPHA_TOL: f64 = 1e-9;
/// On polar charts the coordinate volume degenerates at rho = 0, so the
/// axis-regularity criterion tests wedge / rho on this collar.
pub const AXIS_COLLAR_RHO: f64 = 0.05;

/// Geometric collar radii: `AXIS_COLLAR_RHO * 4^-j`. Sampling toward the
/// axis is what lets the test tell a wedge that decays like rho^3 (axis
/// degeneracy) from one growing like rho (regular).
const AXIS_COLLAR_LEVELS: usize = 10;
const AXIS_COLLAR_ANGLES: usize = 8;

/// Pointwise value of a two-form: antisymmetric matrix with `m[i][j]` the
/// coefficient of `dx_i ^ dx_j`. Antisymmetry holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoFormValue {
    m: [[f64; 3]; 3],
}

impl TwoFormValue {
    /// Build from the three independent upper-triangle entries
    /// `(m01, m02, m12)`.
    pub fn from_upper(m01: f64, m02: f64, m12: f64) -> Self {
        TwoFormValue {
            m: [
                [0.0, m01, m02],
                [-m01, 0.0, m12],
                [-m02, -m12, 0.0],
            ],
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    /// Contraction `(i_X M)_j = sum_i M[i][j] X^i`... stored as the vector
    /// `M . x` with `(M x)_i = sum_j m[i][j] x_j`.
    pub fn contract(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i] += self.m[i][j] * x[j];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }
}

/// A one-form on a chart: one coefficient field per coordinate differential.
#[derive(Debug, Clone)]
pub struct OneForm {
    chart: Arc<Chart>,
    coeffs: [ScalarField; 3],
}

impl OneForm {
    pub fn new(chart: Arc<Chart>, coeffs: [ScalarField; 3]) -> Self {
        OneForm { chart, coeffs }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn coeffs(&self) -> &[ScalarField; 3] {
        &self.coeffs
    }

    pub fn coeff_values(&self, p: [f64; 3]) -> Result<[f64; 3], EvalError> {
        Ok([
            self.coeffs[0].eval(p)?,
            self.coeffs[1].eval(p)?,
            self.coeffs[2].eval(p)?,
        ])
    }

    /// Pair with a tangent vector: `alpha(x)` at `p`.
    pub fn pair(&self, p: [f64; 3], x: [f64; 3]) -> Result<f64, EvalError> {
        let a = self.coeff_values(p)?;
        Ok(a[0] * x[0] + a[1] * x[1] + a[2] * x[2])
    }

    /// Rescale by a constant.
    pub fn scale(&self, c: f64) -> OneForm {
        let k = ScalarField::constant(c);
        OneForm {
            chart: self.chart.clone(),
            coeffs: [
                k.clone() * self.coeffs[0].clone(),
                k.clone() * self.coeffs[1].clone(),
                k * self.coeffs[2].clone(),
            ],
        }
    }

    /// Pointwise exterior derivative: `M[i][j] = d_i a_j - d_j a_i`.
    pub fn exterior_derivative_at(&self, p: [f64; 3]) -> Result<TwoFormValue, EvalError> {
        let j0 = self.coeffs[0].jet(p)?;
        let j1 = self.coeffs[1].jet(p)?;
        let j2 = self.coeffs[2].jet(p)?;
        Ok(TwoFormValue::from_upper(
            j1.g[0] - j0.g[1],
            j2.g[0] - j0.g[2],
            j2.g[1] - j1.g[2],
        ))
    }

    /// Coefficient of `dx1 ^ dx2 ^ dx3` in `alpha ^ d alpha` at `p`:
    /// `a1 M23 - a2 M13 + a3 M12`.
    pub fn wedge_self_d(&self, p: [f64; 3]) -> Result<f64, EvalError> {
        let a = self.coeff_values(p)?;
        let m = self.exterior_derivative_at(p)?;
        Ok(a[0] * m.entry(1, 2) - a[1] * m.entry(0, 2) + a[2] * m.entry(0, 1))
    }

    /// The Reeb vector at `p`: kernel direction `v = (M23, -M13, M12)` of
    /// `d alpha` rescaled so `alpha(X) = 1`. Refuses when `|alpha(v)|` is
    /// below [`DEGENERACY_EPS`] (contact condition fails there).
    pub fn reeb_at(&self, p: [f64; 3]) -> Result<ReebVector, FormError> {
        let a = self.coeff_values(p)?;
        let m = self.exterior_derivative_at(p)?;
        let v = [m.entry(1, 2), -m.entry(0, 2), m.entry(0, 1)];
        let pairing = a[0] * v[0] + a[1] * v[1] + a[2] * v[2];
        if pairing.abs() < DEGENERACY_EPS {
            return Err(FormError::Degenerate { point: p, pairing });
        }
        let x = [v[0] / pairing, v[1] / pairing, v[2] / pairing];
        let alpha_residual = (a[0] * x[0] + a[1] * x[1] + a[2] * x[2] - 1.0).abs();
        let contracted = m.contract(x);
        let dalpha_residual = contracted
            .iter()
            .fold(0.0_f64, |acc, c| acc.max(c.abs()));
        let scale = m.max_abs().max(1.0);
        if alpha_residual > REEB_ALPHA_TOL || dalpha_residual > REEB_DALPHA_TOL * scale {
            return Err(FormError::ResidualExceeded {
                point: p,
                alpha_residual,
                dalpha_residual,
            });
        }
        Ok(ReebVector {
            vec: x,
            alpha_residual,
            dalpha_residual,
        })
    }
}

/// Reeb vector with its verified postcondition residuals.
#[derive(Debug, Clone, Copy)]
pub struct ReebVector {
    pub vec: [f64; 3],
    pub alpha_residual: f64,
    pub dalpha_residual: f64,
}

/// Rectangular sampling grid, cell-centered so interval endpoints (in
/// particular a polar axis at rho = 0) are never sampled.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub n: [usize; 3],
    pub bounds: [[f64; 2]; 3],
}

impl GridSpec {
    /// Natural grid for a chart: radial coordinate over `(0, rho_max)`,
    /// periodic coordinates over one period, anything else over `[-1, 1]`.
    pub fn from_chart(chart: &Chart, n: [usize; 3]) -> Self {
        let mut bounds = [[0.0, 0.0]; 3];
        for i in 0..3 {
            bounds[i] = if let Some(r) = chart.radial().filter(|r| r.coord == i) {
                [0.0, r.rho_max]
            } else if let Some(p) = chart.period(i) {
                [0.0, p]
            } else {
                [-1.0, 1.0]
            };
        }
        GridSpec { n, bounds }
    }

    pub fn with_bounds(mut self, coord: usize, lo: f64, hi: f64) -> Self {
        self.bounds[coord] = [lo, hi];
        self
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let k = flat % self.n[2];
        let j = (flat / self.n[2]) % self.n[1];
        let i = flat / (self.n[2] * self.n[1]);
        let coord = |idx: usize, b: [f64; 2], nn: usize| -> f64 {
            b[0] + (b[1] - b[0]) * (idx as f64 + 0.5) / (nn as f64)
        };
        [
            coord(i, self.bounds[0], self.n[0]),
            coord(j, self.bounds[1], self.n[1]),
            coord(k, self.bounds[2], self.n[2]),
        ]
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

/// Verdict of a contact-condition sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactVerdict {
    PositiveContact,
    NegativeContact,
    /// Mixed signs or wedge below threshold: not a contact form on this
    /// chart (a verdict, not an exception).
    NotContact,
}

/// Result of [`contact_check`].
#[derive(Debug, Clone, Serialize)]
pub struct ContactReport {
    pub verdict: ContactVerdict,
    pub sign_consistent: bool,
    pub points_checked: usize,
    pub singular_points: usize,
    pub degenerate_points: usize,
    pub min_wedge: f64,
    pub max_wedge: f64,
    /// Min of |wedge| / rho over the fixed axis collar `0 < rho <= 0.05`
    /// (radial charts only): bounded away from zero distinguishes the chart
    /// singularity from genuine contact degeneracy.
    pub axis_margin: Option<f64>,
    pub threshold: f64,
}

impl ContactReport {
    pub fn passed(&self) -> bool {
        self.verdict != ContactVerdict::NotContact
    }
}

/// Sweep the wedge coefficient of `alpha ^ d alpha` over `grid`, plus the
/// axis-regularity collar on radial charts.
pub fn contact_check(form: &OneForm, grid: &GridSpec) -> ContactReport {
    let wedges: Vec<Result<f64, EvalError>> = (0..grid.len())
        .into_par_iter()
        .map(|i| form.wedge_self_d(grid.point(i)))
        .collect();

    let mut singular = 0usize;
    let mut degenerate = 0usize;
    let mut min_wedge = f64::INFINITY;
    let mut max_wedge = f64::NEG_INFINITY;
    let mut pos = false;
    let mut neg = false;
    for w in &wedges {
        match w {
            Ok(w) => {
                min_wedge = min_wedge.min(*w);
                max_wedge = max_wedge.max(*w);
                if w.abs() <= DEGENERACY_EPS {
                    degenerate += 1;
                } else if *w > 0.0 {
                    pos = true;
                } else {
                    neg = true;
                }
            }
            Err(_) => singular += 1,
        }
    }

    // Axis-regularity criterion on radial charts.
    let axis_margin = form
        .chart()
        .radial()
        .map(|r| match axis_collar_margin(form, r.coord, r.rho_max) {
            Ok(m) => m,
            Err(_) => {
                singular += 1;
                0.0
            }
        });

    let sign_consistent = !(pos && neg) && (pos || neg) && degenerate == 0;
    let axis_ok = axis_margin.map_or(true, |m| m > DEGENERACY_EPS);
    let verdict = if sign_consistent && axis_ok && singular == 0 {
        if pos {
            ContactVerdict::PositiveContact
        } else {
            ContactVerdict::NegativeContact
        }
    } else {
        ContactVerdict::NotContact
    };

    ContactReport {
        verdict,
        sign_consistent,
        points_checked: wedges.len(),
        singular_points: singular,
        degenerate_points: degenerate,
        min_wedge,
        max_wedge,
        axis_margin,
        threshold: DEGENERACY_EPS,
    }
}

/// Min of `|wedge| / rho` over a collar of geometrically shrinking radii
/// `rho_small * 4^-j` with a full angle sweep at each level.
pub fn axis_collar_margin(
    form: &OneForm,
    radial_coord: usize,
    rho_max: f64,
) -> Result<f64, EvalError> {
    let chart = form.chart();
    let mut margin = f64::INFINITY;
    let start = AXIS_COLLAR_RHO.min(0.5 * rho_max);
    for level in 0..AXIS_COLLAR_LEVELS {
        let rho = start * 4.0_f64.powi(-(level as i32));
        for ja in 0..AXIS_COLLAR_ANGLES {
            for jb in 0..AXIS_COLLAR_ANGLES {
                let mut p = [0.0; 3];
                p[radial_coord] = rho;
                let mut slot = 0;
                for c in 0..3 {
                    if c == radial_coord {
                        continue;
                    }
                    let period = chart.period(c).unwrap_or(2.0 * std::f64::consts::PI);
                    let idx = if slot == 0 { ja } else { jb };
                    p[c] = period * (idx as f64 + 0.5) / (AXIS_COLLAR_ANGLES as f64);
                    slot += 1;
                }
                let w = form.wedge_self_d(p)?;
                margin = margin.min(w.abs() / rho);
            }
        }
    }
    Ok(margin)
}

/// Pointwise pullback: `(map* alpha)(p) = J^T . alpha(map(p))`.
pub fn pullback_values(
    map: &ChartMap,
    form: &OneForm,
    p: [f64; 3],
) -> Result<[f64; 3], FormError> {
    check_chart(map, form)?;
    let q = map.apply(p)?;
    let a = form.coeff_values(q)?;
    let jac = map.jacobian(p)?;
    let mut out = [0.0; 3];
    for k in 0..3 {
        for i in 0..3 {
            out[k] += jac[i][k] * a[i];
        }
    }
    Ok(out)
}

/// Symbolic pullback: returns a new one-form on the map's source chart with
/// closed-form coefficients `sum_i (d comp_i / d x_k) (a_i o map)`.
pub fn pullback_form(map: &ChartMap, form: &OneForm) -> Result<OneForm, FormError> {
    check_chart(map, form)?;
    let comps = map.components();
    let mut coeffs = [
        ScalarField::zero(),
        ScalarField::zero(),
        ScalarField::zero(),
    ];
    for (k, coeff) in coeffs.iter_mut().enumerate() {
        let mut acc = ScalarField::zero();
        for i in 0..3 {
            let d = comps[i].diff(k).map_err(FormError::Eval)?;
            let composed = form.coeffs()[i].compose(comps).map_err(FormError::Eval)?;
            acc = acc + d * composed;
        }
        *coeff = acc;
    }
    Ok(OneForm::new(map.source.clone(), coeffs))
}

/// Pointwise pullback of a two-form value: `(map* omega)[i][j] =
/// sum_{k,l} J[k][i] omega[k][l] J[l][j]`.
pub fn pullback_two_form_at(
    map: &ChartMap,
    omega_at_image: &TwoFormValue,
    p: [f64; 3],
) -> Result<TwoFormValue, EvalError> {
    let jac = map.jacobian(p)?;
    let mut upper = [0.0; 3];
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    for (slot, (i, j)) in pairs.iter().enumerate() {
        let mut acc = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                acc += jac[k][*i] * omega_at_image.entry(k, l) * jac[l][*j];
            }
        }
        upper[slot] = acc;
    }
    Ok(TwoFormValue::from_upper(upper[0], upper[1], upper[2]))
}

fn check_chart(map: &ChartMap, form: &OneForm) -> Result<(), FormError> {
    if map.target.name() != form.chart().name() {
        return Err(FormError::ChartMismatch {
            expected: map.target.name().to_owned(),
            got: form.chart().name().to_owned(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;

    fn tube_chart() -> Arc<Chart> {
        Chart::solid_torus("tube", 2.0)
    }

    /// d phi + rho^2 d theta, the standard transverse-tube form.
    fn tube_form() -> OneForm {
        OneForm::new(
            tube_chart(),
            [
                ScalarField::zero(),
                ScalarField::coord(0).powi(2),
                ScalarField::one(),
            ],
        )
    }

    #[test]
    fn exterior_derivative_of_tube_form() {
        let f = tube_form();
        for rho in [0.3, 1.0, 1.7] {
            let m = f.exterior_derivative_at([rho, 0.4, 1.2]).unwrap();
            assert!((m.entry(0, 1) - 2.0 * rho).abs() < 1e-14);
            assert_eq!(m.entry(0, 2), 0.0);
            assert_eq!(m.entry(1, 2), 0.0);
            // Antisymmetry is structural.
            assert_eq!(m.entry(1, 0), -m.entry(0, 1));
            assert_eq!(m.entry(0, 0), 0.0);
        }
    }

    #[test]
    fn exterior_derivative_of_constant_form_vanishes() {
        let f = OneForm::new(
            tube_chart(),
            [
                ScalarField::constant(3.0),
                ScalarField::constant(-1.0),
                ScalarField::constant(0.5),
            ],
        );
        let m = f.exterior_derivative_at([1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.max_abs(), 0.0);
    }

    #[test]
    fn wedge_of_tube_form_is_two_rho() {
        let f = tube_form();
        assert!((f.wedge_self_d([1.0, 0.0, 0.0]).unwrap() - 2.0).abs() < 1e-14);
        assert!((f.wedge_self_d([0.25, 1.0, 2.0]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn wedge_of_closed_form_is_zero() {
        let f = OneForm::new(
            tube_chart(),
            [
                ScalarField::constant(1.0),
                ScalarField::constant(2.0),
                ScalarField::constant(3.0),
            ],
        );
        assert_eq!(f.wedge_self_d([0.5, 0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn reeb_of_tube_form_points_along_phi() {
        let f = tube_form();
        for rho in [1e-3, 0.5, 1.9] {
            let reeb = f.reeb_at([rho, 1.0, -2.0]).unwrap();
            assert!((reeb.vec[0]).abs() < 1e-12);
            assert!((reeb.vec[1]).abs() < 1e-12);
            assert!((reeb.vec[2] - 1.0).abs() < 1e-12);
            assert!(reeb.alpha_residual <= REEB_ALPHA_TOL);
        }
    }

    #[test]
    fn reeb_refuses_at_degenerate_point() {
        // d phi alone: wedge vanishes identically.
        let f = OneForm::new(
            tube_chart(),
            [ScalarField::zero(), ScalarField::zero(), ScalarField::one()],
        );
        let err = f.reeb_at([1.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, FormError::Degenerate { .. }));
    }

    #[test]
    fn contact_check_tube_form_positive() {
        let f = tube_form();
        let grid = GridSpec::from_chart(f.chart(), [40, 8, 8]);
        let report = contact_check(&f, &grid);
        assert_eq!(report.verdict, ContactVerdict::PositiveContact);
        assert!(report.sign_consistent);
        // min wedge = 2 rho at the innermost cell center.
        let rho_min = 2.0 * (0.5 / 40.0);
        assert!((report.min_wedge - 2.0 * rho_min).abs() < 1e-12);
        // Axis margin: wedge / rho = 2 identically.
        let margin = report.axis_margin.unwrap();
        assert!((margin - 2.0).abs() < 1e-9);
    }

    #[test]
    fn contact_check_flags_non_contact_form() {
        let f = OneForm::new(
            tube_chart(),
            [ScalarField::zero(), ScalarField::zero(), ScalarField::one()],
        );
        let report = contact_check(&f, &GridSpec::from_chart(f.chart(), [10, 4, 4]));
        assert_eq!(report.verdict, ContactVerdict::NotContact);
        assert_eq!(report.degenerate_points, report.points_checked);
    }

    #[test]
    fn identity_pullback_preserves_values() {
        let f = tube_form();
        let map = ChartMap::identity(tube_chart());
        let p = [0.8, 0.3, 1.1];
        let pulled = pullback_values(&map, &f, p).unwrap();
        let direct = f.coeff_values(p).unwrap();
        for i in 0..3 {
            assert!((pulled[i] - direct[i]).abs() < 1e-14);
        }
        // Symbolic path agrees.
        let sym = pullback_form(&map, &f).unwrap();
        let sym_vals = sym.coeff_values(p).unwrap();
        for i in 0..3 {
            assert!((sym_vals[i] - direct[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_is_cell_centered_and_axis_free() {
        let grid = GridSpec::from_chart(&tube_chart(), [4, 4, 4]);
        for p in grid.points() {
            assert!(p[0] > 0.0 && p[0] < 2.0);
        }
        assert_eq!(grid.len(), 64);
    }
}
