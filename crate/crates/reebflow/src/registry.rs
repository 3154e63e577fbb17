//! Named model registry: resolves CLI/config references like
//! `alpha_r:r=1.414`, `tube`, or `t3` to concrete forms.

use crate::error::ModelError;
use crate::expr::ScalarField;
use crate::form::OneForm;
use crate::models::{standard_tube_form, t3_example, ModelTorusForm};

/// Which registry entry a reference resolved to.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    AlphaR { r_squared: f64 },
    Tube { rho_max: f64 },
    T3,
}

/// A resolved model: the contact form plus, when the model carries one, the
/// unnormalized tangent field used for explicit-field integration.
#[derive(Debug, Clone)]
pub struct Model {
    pub reference: String,
    pub kind: ModelKind,
    pub form: OneForm,
    pub explicit_field: Option<[ScalarField; 3]>,
}

/// Parse a model reference.
///
/// Accepted forms: `alpha_r:r=R`, `alpha_r:r2=R2`, `tube`,
/// `tube:rho_max=RMAX`, `t3`.
pub fn parse_model(reference: &str) -> Result<Model, ModelError> {
    let (name, args) = match reference.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (reference.trim(), None),
    };
    match name {
        "alpha_r" => {
            let (key, value) = parse_kv(args.ok_or_else(|| {
                ModelError::Parameter("alpha_r needs `r=...` or `r2=...`".into())
            })?)?;
            let model = match key {
                "r" => ModelTorusForm::new(value)?,
                "r2" => ModelTorusForm::from_r_squared(value)?,
                other => {
                    return Err(ModelError::Parameter(format!(
                        "unknown alpha_r parameter `{other}`"
                    )))
                }
            };
            Ok(Model {
                reference: reference.to_owned(),
                kind: ModelKind::AlphaR {
                    r_squared: model.r_squared(),
                },
                form: model.form().clone(),
                explicit_field: None,
            })
        }
        "tube" => {
            let rho_max = match args {
                None => 2.0,
                Some(a) => {
                    let (key, value) = parse_kv(a)?;
                    if key != "rho_max" {
                        return Err(ModelError::Parameter(format!(
                            "unknown tube parameter `{key}`"
                        )));
                    }
                    if !(value.is_finite() && value > 0.0) {
                        return Err(ModelError::Parameter(format!(
                            "tube rho_max must be positive, got {value}"
                        )));
                    }
                    value
                }
            };
            Ok(Model {
                reference: reference.to_owned(),
                kind: ModelKind::Tube { rho_max },
                form: standard_tube_form(rho_max),
                explicit_field: None,
            })
        }
        "t3" => {
            if args.is_some() {
                return Err(ModelError::Parameter("t3 takes no parameters".into()));
            }
            let t3 = t3_example();
            Ok(Model {
                reference: reference.to_owned(),
                kind: ModelKind::T3,
                form: t3.form().clone(),
                explicit_field: Some(t3.field().clone()),
            })
        }
        other => Err(ModelError::UnknownModel(other.to_owned())),
    }
}

fn parse_kv(s: &str) -> Result<(&str, f64), ModelError> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| ModelError::Parameter(format!("expected key=value, got `{s}`")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| ModelError::Parameter(format!("invalid number `{value}`")))?;
    Ok((key.trim(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_three_models() {
        let m = parse_model("alpha_r:r=1.414").unwrap();
        assert!(matches!(m.kind, ModelKind::AlphaR { .. }));
        let m = parse_model("alpha_r:r2=2.0").unwrap();
        assert!(matches!(m.kind, ModelKind::AlphaR { r_squared } if (r_squared - 2.0).abs() < 1e-15));
        let m = parse_model("tube").unwrap();
        assert!(matches!(m.kind, ModelKind::Tube { rho_max } if rho_max == 2.0));
        let m = parse_model("t3").unwrap();
        assert!(m.explicit_field.is_some());
    }

    #[test]
    fn rejects_unknown_models_and_parameters() {
        assert!(matches!(
            parse_model("alpha"),
            Err(ModelError::UnknownModel(_))
        ));
        assert!(parse_model("alpha_r:q=2").is_err());
        assert!(parse_model("alpha_r:r=-1").is_err());
        assert!(parse_model("tube:r=1").is_err());
        assert!(parse_model("t3:x=1").is_err());
    }
}
