//! Concrete model contact forms and their closed-form slope data.
//!
//! Slope convention: a slope "on the torus T_rho" is measured as
//! d phi / d theta (longitudinal advance per meridional advance). With that
//! convention the characteristic foliation of the model family has slope
//! `-tan^2 rho` and its Reeb field has slope `1 / r^2` independent of rho;
//! each operation documents the convention it uses and the tests pin the
//! values above.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use crate::chart::Chart;
use crate::error::{EvalError, FormError, ModelError};
use crate::expr::ScalarField;
use crate::form::OneForm;

/// The model solid-torus contact form
/// `alpha_r = (sin^2 rho d theta + cos^2 rho d phi) / (sin^2 rho + cos^2 rho / r^2)`
/// on the `(rho, theta, phi)` chart with `rho` in `[0, pi/2)`.
#[derive(Debug, Clone)]
pub struct ModelTorusForm {
    r: f64,
    r_squared: f64,
    form: OneForm,
}

/// Margin kept between the chart edge and `pi/2`, where the model family's
/// denominator profile ends its domain.
pub const MODEL_RHO_MAX: f64 = FRAC_PI_2;

impl ModelTorusForm {
    /// Build `alpha_r` for the given `r > 0`.
    pub fn new(r: f64) -> Result<Self, ModelError> {
        if !(r.is_finite() && r > 0.0) {
            return Err(ModelError::Parameter(format!("alpha_r needs r > 0, got {r}")));
        }
        Ok(Self::from_r_squared_unchecked(r, r * r))
    }

    /// Build `alpha_r` from `r^2` directly (avoids the sqrt-then-square
    /// round-trip when the squared parameter is the natural input).
    pub fn from_r_squared(r_squared: f64) -> Result<Self, ModelError> {
        if !(r_squared.is_finite() && r_squared > 0.0) {
            return Err(ModelError::Parameter(format!(
                "alpha_r needs r^2 > 0, got {r_squared}"
            )));
        }
        Ok(Self::from_r_squared_unchecked(r_squared.sqrt(), r_squared))
    }

    fn from_r_squared_unchecked(r: f64, r_squared: f64) -> Self {
        let chart = Chart::solid_torus("model_torus", MODEL_RHO_MAX);
        let rho = ScalarField::coord(0);
        let sin2 = rho.sin().powi(2);
        let cos2 = rho.cos().powi(2);
        let denom = sin2.clone() + ScalarField::constant(1.0 / r_squared) * cos2.clone();
        let form = OneForm::new(
            chart,
            [
                ScalarField::zero(),
                sin2 / denom.clone(),
                cos2 / denom,
            ],
        );
        ModelTorusForm {
            r,
            r_squared,
            form,
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn r_squared(&self) -> f64 {
        self.r_squared
    }

    pub fn form(&self) -> &OneForm {
        &self.form
    }

    pub fn chart(&self) -> &Arc<Chart> {
        self.form.chart()
    }

    /// Characteristic-foliation slope `d phi / d theta = -tan^2 rho` on
    /// `T_rho`.
    pub fn char_slope(&self, rho: f64) -> Result<f64, EvalError> {
        char_slope_model(rho)
    }

    /// Reeb slope `d phi / d theta = 1 / r^2`, independent of rho.
    pub fn reeb_slope(&self) -> f64 {
        1.0 / self.r_squared
    }

    /// Action-angle data of the model: Reeb components and form coefficients
    /// as functions of rho.
    pub fn action_angle(&self) -> ActionAngleProfile {
        let coeffs = self.form.coeffs();
        ActionAngleProfile::new(
            ScalarField::one(),
            ScalarField::constant(1.0 / self.r_squared),
            coeffs[1].clone(),
            coeffs[2].clone(),
            coeffs[0].clone(),
        )
        .expect("model profile satisfies a f + b g = 1 identically")
    }
}

/// `-tan^2 rho`, the characteristic-foliation slope (d phi / d theta) of the
/// model family on `T_rho`; also computable as `-coeff_theta / coeff_phi` of
/// `alpha_r`, and the two agree.
pub fn char_slope_model(rho: f64) -> Result<f64, EvalError> {
    if !(0.0..FRAC_PI_2).contains(&rho) {
        return Err(EvalError::OutOfDomain {
            chart: "model_torus".into(),
            point: [rho, 0.0, 0.0],
        });
    }
    let t = rho.tan();
    Ok(-t * t)
}

/// `1 / r^2`, the Reeb slope (d phi / d theta) of `alpha_r`, independent of
/// rho.
pub fn reeb_slope_model(r: f64) -> Result<f64, ModelError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(ModelError::Parameter(format!("reeb slope needs r > 0, got {r}")));
    }
    Ok(1.0 / (r * r))
}

/// Kernel slope `d phi / d theta = -coeff_theta / coeff_phi` of a form
/// restricted to the torus through `p` (coordinates 1, 2 tangent).
pub fn kernel_slope_at(form: &OneForm, p: [f64; 3]) -> Result<f64, FormError> {
    let a = form.coeff_values(p)?;
    if a[2].abs() < 1e-300 {
        return Err(FormError::Degenerate {
            point: p,
            pairing: a[2],
        });
    }
    Ok(-a[1] / a[2])
}

/// The standard transverse-tube form `d phi + rho^2 d theta` on a solid
/// torus of radius `rho_max`. Its characteristic foliation on `T_rho` has
/// slope `d phi / d theta = -rho^2`.
pub fn standard_tube_form(rho_max: f64) -> OneForm {
    let chart = Chart::solid_torus("tube", rho_max);
    OneForm::new(
        chart,
        [
            ScalarField::zero(),
            ScalarField::coord(0).powi(2),
            ScalarField::one(),
        ],
    )
}

/// Characteristic slope `d phi / d theta = -rho^2` of the standard tube.
pub fn tube_char_slope(rho: f64) -> f64 {
    -rho * rho
}

/// The three-torus example: the form
/// `(sin z dx + cos z dy) + (sin x dy + cos x dz) / 2` together with the
/// unnormalized field `X = (2 sin z, sin x + 2 cos z, cos x)`, which is a
/// positive rescaling of its Reeb field since `alpha(X) = 5/2 + 2 sin x cos z > 0`.
#[derive(Debug, Clone)]
pub struct T3Form {
    form: OneForm,
    paper_field: [ScalarField; 3],
}

impl T3Form {
    pub fn form(&self) -> &OneForm {
        &self.form
    }

    pub fn chart(&self) -> &Arc<Chart> {
        self.form.chart()
    }

    /// The unnormalized tangent field.
    pub fn field(&self) -> &[ScalarField; 3] {
        &self.paper_field
    }

    pub fn field_at(&self, p: [f64; 3]) -> Result<[f64; 3], EvalError> {
        Ok([
            self.paper_field[0].eval(p)?,
            self.paper_field[1].eval(p)?,
            self.paper_field[2].eval(p)?,
        ])
    }

    /// `alpha(X) = 5/2 + 2 sin x cos z`, the rescaling factor between the
    /// tangent field and the Reeb field.
    pub fn pairing_at(&self, p: [f64; 3]) -> f64 {
        2.5 + 2.0 * p[0].sin() * p[2].cos()
    }
}

pub fn t3_example() -> T3Form {
    let chart = Chart::three_torus();
    let x = ScalarField::coord(0);
    let z = ScalarField::coord(2);
    let half = ScalarField::constant(0.5);
    let two = ScalarField::constant(2.0);
    let form = OneForm::new(
        chart,
        [
            z.sin(),
            z.cos() + half.clone() * x.sin(),
            half * x.cos(),
        ],
    );
    let paper_field = [
        two.clone() * z.sin(),
        x.sin() + two * z.cos(),
        x.cos(),
    ];
    T3Form { form, paper_field }
}

/// Action-angle data near a locally integrable orbit: Reeb components
/// `a(rho) d/d theta + b(rho) d/d phi` and form coefficients
/// `f d theta + g d phi + h d rho`, constrained by `a f + b g = 1`.
#[derive(Debug, Clone)]
pub struct ActionAngleProfile {
    pub a: ScalarField,
    pub b: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
    pub h: ScalarField,
}

/// Sampling tolerance for the `a f + b g = 1` identity.
pub const ACTION_ANGLE_TOL: f64 = 1e-10;

impl ActionAngleProfile {
    /// Validates `a f + b g = 1` on a rho sample of the model domain.
    pub fn new(
        a: ScalarField,
        b: ScalarField,
        f: ScalarField,
        g: ScalarField,
        h: ScalarField,
    ) -> Result<Self, ModelError> {
        for i in 0..64 {
            let rho = MODEL_RHO_MAX * (i as f64 + 0.5) / 64.0;
            let p = [rho, 0.0, 0.0];
            let lhs = a.eval(p).and_then(|av| {
                Ok(av * f.eval(p)? + b.eval(p)? * g.eval(p)?)
            });
            match lhs {
                Ok(v) if (v - 1.0).abs() <= ACTION_ANGLE_TOL => {}
                Ok(v) => {
                    return Err(ModelError::Parameter(format!(
                        "a f + b g = {v} at rho = {rho}, expected 1"
                    )))
                }
                Err(e) => return Err(ModelError::Parameter(format!("profile not evaluable: {e}"))),
            }
        }
        Ok(ActionAngleProfile { a, b, f, g, h })
    }
}

/// Convenience: the angles and radii used throughout the model tests.
pub fn model_sample_rhos() -> Vec<f64> {
    (1..30).map(|i| PI / 2.0 * (i as f64) / 31.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{contact_check, ContactVerdict, GridSpec};
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn alpha_one_has_unit_denominator() {
        let m = ModelTorusForm::new(1.0).unwrap();
        for rho in model_sample_rhos() {
            let p = [rho, 0.3, 1.0];
            let a = m.form().coeff_values(p).unwrap();
            assert!((a[1] - rho.sin().powi(2)).abs() < 1e-14);
            assert!((a[2] - rho.cos().powi(2)).abs() < 1e-14);
            assert_eq!(a[0], 0.0);
        }
    }

    #[test]
    fn alpha_sqrt2_at_pi_over_4() {
        // D = 1/2 + 1/4 = 3/4, F = 4/3, both coefficients F/2 = 2/3.
        let m = ModelTorusForm::new(2.0_f64.sqrt()).unwrap();
        let a = m.form().coeff_values([FRAC_PI_4, 0.0, 0.0]).unwrap();
        assert!((a[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!((a[2] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn alpha_r_limits_to_r_squared_dphi_on_core() {
        // F(0) = r^2, so alpha_r -> r^2 d phi at the axis; alpha(Reeb) = 1
        // there since the Reeb phi-component is 1 / r^2.
        for r in [0.7, 1.0, 2.0_f64.sqrt(), 2.3] {
            let m = ModelTorusForm::new(r).unwrap();
            let a = m.form().coeff_values([1e-9, 0.0, 0.0]).unwrap();
            assert!(a[1].abs() < 1e-15);
            assert!((a[2] - r * r).abs() < 1e-8, "r = {r}: {}", a[2]);
        }
    }

    #[test]
    fn exterior_derivative_of_alpha_one_at_pi_over_6() {
        // A' = sin 2 rho, B' = -sin 2 rho at r = 1.
        let m = ModelTorusForm::new(1.0).unwrap();
        let d = m
            .form()
            .exterior_derivative_at([PI / 6.0, 0.2, 0.9])
            .unwrap();
        let s = (PI / 3.0).sin();
        assert!((d.entry(0, 1) - s).abs() < 1e-13);
        assert!((d.entry(0, 2) + s).abs() < 1e-13);
        assert!(d.entry(1, 2).abs() < 1e-13);
    }

    #[test]
    fn wedge_of_alpha_one_is_sin_two_rho() {
        let m = ModelTorusForm::new(1.0).unwrap();
        for rho in model_sample_rhos() {
            let w = m.form().wedge_self_d([rho, 1.0, 2.0]).unwrap();
            assert!((w - (2.0 * rho).sin()).abs() < 1e-13, "rho = {rho}");
        }
    }

    #[test]
    fn model_family_is_positive_contact() {
        for r in [0.7, 1.0, 2.0_f64.sqrt(), 2.3] {
            let m = ModelTorusForm::new(r).unwrap();
            let grid = GridSpec::from_chart(m.chart(), [30, 8, 8])
                .with_bounds(0, 0.0, MODEL_RHO_MAX - 0.05);
            let report = contact_check(m.form(), &grid);
            assert_eq!(report.verdict, ContactVerdict::PositiveContact, "r = {r}");
        }
    }

    #[test]
    fn reeb_of_alpha_r_is_torus_tangent_with_slope_inverse_r_squared() {
        for r in [0.7, 1.0, 2.0_f64.sqrt(), 2.0] {
            let m = ModelTorusForm::new(r).unwrap();
            for rho in model_sample_rhos() {
                let reeb = m.form().reeb_at([rho, 0.4, 2.2]).unwrap();
                assert!(reeb.vec[0].abs() < 1e-10, "rho-component nonzero");
                assert!((reeb.vec[1] - 1.0).abs() < 1e-10);
                assert!((reeb.vec[2] - 1.0 / (r * r)).abs() < 1e-10);
                // Slope d phi / d theta mirrors the closed form.
                let slope = reeb.vec[2] / reeb.vec[1];
                assert!((slope - m.reeb_slope()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn char_slope_values() {
        assert_eq!(char_slope_model(0.0).unwrap(), 0.0);
        assert!((char_slope_model(FRAC_PI_4).unwrap() + 1.0).abs() < 1e-14);
        assert!((char_slope_model(PI / 3.0).unwrap() + 3.0).abs() < 1e-12);
        assert!(char_slope_model(FRAC_PI_2).is_err());
    }

    #[test]
    fn char_slope_matches_kernel_of_coefficients() {
        let m = ModelTorusForm::new(1.7).unwrap();
        for rho in model_sample_rhos() {
            let from_coeffs = kernel_slope_at(m.form(), [rho, 0.0, 0.0]).unwrap();
            let closed = char_slope_model(rho).unwrap();
            assert!(
                (from_coeffs - closed).abs() <= 1e-10 * (1.0 + closed.abs()),
                "rho = {rho}: {from_coeffs} vs {closed}"
            );
        }
    }

    #[test]
    fn reeb_slope_values() {
        assert_eq!(reeb_slope_model(1.0).unwrap(), 1.0);
        assert!((reeb_slope_model(2.0_f64.sqrt()).unwrap() - 0.5).abs() < 1e-15);
        assert!((reeb_slope_model(2.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(reeb_slope_model(0.0).is_err());
    }

    #[test]
    fn tube_slopes() {
        assert!((tube_char_slope(2.0_f64.sqrt()) + 2.0).abs() < 1e-15);
        assert_eq!(tube_char_slope(0.0), 0.0);
        assert!((tube_char_slope(1.0) + 1.0).abs() < 1e-15);
        // Same value read off the form coefficients.
        let tube = standard_tube_form(2.0);
        let s = kernel_slope_at(&tube, [1.2, 0.0, 0.0]).unwrap();
        assert!((s - tube_char_slope(1.2)).abs() < 1e-14);
    }

    #[test]
    fn t3_field_on_the_integral_curves() {
        let t3 = t3_example();
        let up = t3.field_at([FRAC_PI_2, 0.77, 0.0]).unwrap();
        assert!((up[0]).abs() < 1e-14 && (up[2]).abs() < 1e-14);
        assert!((up[1] - 3.0).abs() < 1e-14);
        let down = t3.field_at([-FRAC_PI_2, -0.3, PI]).unwrap();
        assert!((down[0]).abs() < 1e-13 && (down[2]).abs() < 1e-15);
        assert!((down[1] + 3.0).abs() < 1e-13);
    }

    #[test]
    fn t3_pairing_at_origin_is_five_halves() {
        let t3 = t3_example();
        let x = t3.field_at([0.0, 0.0, 0.0]).unwrap();
        let paired = t3.form().pair([0.0, 0.0, 0.0], x).unwrap();
        assert!((paired - 2.5).abs() < 1e-14);
        assert!((t3.pairing_at([0.0, 0.0, 0.0]) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn t3_field_is_reeb_up_to_rescaling() {
        let t3 = t3_example();
        // Deterministic low-discrepancy sample of the torus.
        for i in 0..200 {
            let s = i as f64;
            let p = [
                (s * 0.754).rem_euclid(2.0 * PI),
                (s * 1.318).rem_euclid(2.0 * PI),
                (s * 2.083).rem_euclid(2.0 * PI),
            ];
            let x = t3.field_at(p).unwrap();
            let pairing = t3.form().pair(p, x).unwrap();
            assert!((pairing - t3.pairing_at(p)).abs() < 1e-12);
            let reeb = t3.form().reeb_at(p).unwrap();
            for k in 0..3 {
                assert!(
                    (reeb.vec[k] - x[k] / pairing).abs() < 1e-10,
                    "component {k} at {p:?}"
                );
            }
            // d alpha (X, .) vanishes.
            let m = t3.form().exterior_derivative_at(p).unwrap();
            let contracted = m.contract(x);
            for c in contracted {
                assert!(c.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn action_angle_profile_of_model_satisfies_af_bg_one() {
        let m = ModelTorusForm::new(1.4142).unwrap();
        let profile = m.action_angle();
        for rho in model_sample_rhos() {
            let p = [rho, 0.0, 0.0];
            let v = profile.a.eval(p).unwrap() * profile.f.eval(p).unwrap()
                + profile.b.eval(p).unwrap() * profile.g.eval(p).unwrap();
            assert!((v - 1.0).abs() <= ACTION_ANGLE_TOL);
        }
    }
}
