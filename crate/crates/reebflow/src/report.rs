//! Run configuration, task dispatch, and machine-readable verification
//! reports.
//!
//! Configs are human-editable TOML (JSON accepted on input); unknown keys
//! are errors. Reports are JSON with every floating-point value written
//! with 17 significant digits, and every verdict re-derivable from its
//! recorded margin, comparison, and tolerance.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Once;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::chart::Chart;
use crate::cover::{
    branch_map, equivariant_perturbation, hyperbolic_perturbation, lens_branched_cover,
    verify_contact_scaling, BranchData, BumpFunction,
};
use crate::dynamics::{
    find_periodic_orbit, hypothesis_report, integrate, FlowSpec, OrbitOptions, OrbitRecord,
};
use crate::error::ModelError;
use crate::expr::ScalarField;
use crate::form::{contact_check, pullback_form, ContactVerdict, GridSpec, OneForm};
use crate::models::MODEL_RHO_MAX;
use crate::registry::{parse_model, Model};
use crate::surgery::{
    euler_class, nearest_rational_distance, plan_tight_surgery, verify_gluing, LensSpace,
};

/// Environment variable controlling the rayon pool size.
pub const THREADS_ENV: &str = "REEBFLOW_THREADS";

/// An `f64` that serializes as a JSON number with 17 significant digits,
/// so reports reproduce bit-for-bit and re-parse exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let n = serde_json::Number::from_str(&format!("{:.16e}", self.0))
                .map_err(serde::ser::Error::custom)?;
            n.serialize(s)
        } else {
            s.serialize_str(&self.0.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for F17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> serde::de::Visitor<'de> for V {
            type Value = F17;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a numeric string")
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<F17, E> {
                Ok(F17(v))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<F17, E> {
                Ok(F17(v as f64))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<F17, E> {
                Ok(F17(v as f64))
            }

            fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<F17, E> {
                s.parse().map(F17).map_err(serde::de::Error::custom)
            }

            // serde_json's arbitrary-precision numbers arrive as a one-entry
            // map with a private key and the digits as the value.
            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut m: A,
            ) -> Result<F17, A::Error> {
                match m.next_entry::<String, String>()? {
                    Some((_, digits)) => {
                        digits.parse().map(F17).map_err(serde::de::Error::custom)
                    }
                    None => Err(serde::de::Error::custom("empty number map")),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// The task a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    VerifyForm,
    SurgeryPlan,
    BranchLift,
    FlowOrbits,
    LensCover,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskKind::VerifyForm => "verify-form",
            TaskKind::SurgeryPlan => "surgery-plan",
            TaskKind::BranchLift => "branch-lift",
            TaskKind::FlowOrbits => "flow-orbits",
            TaskKind::LensCover => "lens-cover",
        };
        write!(f, "{s}")
    }
}

/// Model reference or inline form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Registry reference, e.g. `alpha_r:r=1.414`.
    pub name: Option<String>,
    /// Chart for inline coefficients: `tube`, `model_torus`, or `t3`.
    pub chart: Option<String>,
    /// Inline coefficient expressions, one per coordinate differential.
    pub coeffs: Option<[String; 3]>,
    /// Radial extent for inline tube charts.
    pub rho_max: Option<f64>,
}

/// Task parameters; which fields are required depends on the task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub p: Option<i64>,
    pub q: Option<i64>,
    pub m: Option<i64>,
    pub k: Option<i64>,
    pub l: Option<i64>,
    /// Branch-lift case: `1`, `2`, or `hyp`.
    pub case: Option<String>,
    /// Case-1 prefactor expression over the tube coordinates.
    pub f: Option<String>,
    pub r0: Option<f64>,
    pub r1: Option<f64>,
    pub epsilon: Option<f64>,
    /// `grid:AxB` or `point:x,y,z`.
    pub seeds: Option<String>,
    pub returns: Option<usize>,
    pub section_coord: Option<usize>,
    pub section_value: Option<f64>,
    pub b1: Option<[i64; 3]>,
    pub b2: Option<[i64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: [usize; 3],
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: [50, 16, 16] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub contact: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { contact: 1e-9 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub json: Option<String>,
    pub csv: Option<String>,
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    /// Reserved: all computations are deterministic; recorded in the report
    /// as a no-op.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Error split matching the exit-code contract: config problems exit 2,
/// computation problems exit 1.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("computation error in {check}: {message}")]
    Computation { check: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Computation { .. } => 1,
        }
    }

    fn computation(check: &str, err: impl fmt::Display) -> Self {
        RunError::Computation {
            check: check.to_owned(),
            message: err.to_string(),
        }
    }
}

/// Load and validate a config file; `.json` parses as JSON, anything else
/// as TOML. Unknown keys are errors, inline expressions and model
/// references are resolved eagerly so typos fail before any computation.
pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| RunError::Config(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| RunError::Config(e.to_string()))?
    };
    validate_config(&config)?;
    Ok(config)
}

pub fn validate_config(config: &RunConfig) -> Result<(), RunError> {
    if !(config.tolerances.contact > 0.0) {
        return Err(RunError::Config(format!(
            "tolerances.contact must be positive, got {}",
            config.tolerances.contact
        )));
    }
    if config.grid.n.iter().any(|&n| n == 0) {
        return Err(RunError::Config("grid.n entries must be nonzero".into()));
    }
    if let Some(model) = &config.model {
        resolve_model(model).map(|_| ())?;
    }
    Ok(())
}

fn resolve_model(spec: &ModelSpec) -> Result<Model, RunError> {
    match (&spec.name, &spec.chart, &spec.coeffs) {
        (Some(name), None, None) => {
            parse_model(name).map_err(|e: ModelError| RunError::Config(e.to_string()))
        }
        (None, Some(chart_name), Some(exprs)) => {
            let chart = match chart_name.as_str() {
                "tube" => Chart::solid_torus("tube", spec.rho_max.unwrap_or(2.0)),
                "model_torus" => Chart::solid_torus("model_torus", MODEL_RHO_MAX),
                "t3" => Chart::three_torus(),
                other => {
                    return Err(RunError::Config(format!(
                        "unknown chart `{other}`; available: tube, model_torus, t3"
                    )))
                }
            };
            let coords = chart.coords().clone();
            let mut coeffs = Vec::with_capacity(3);
            for src in exprs {
                let field = ScalarField::parse(src, &coords)
                    .map_err(|e| RunError::Config(format!("in `{src}`: {e}")))?;
                coeffs.push(field);
            }
            let coeffs: [ScalarField; 3] = [
                coeffs[0].clone(),
                coeffs[1].clone(),
                coeffs[2].clone(),
            ];
            Ok(Model {
                reference: format!("inline:{chart_name}"),
                kind: crate::registry::ModelKind::Tube {
                    rho_max: spec.rho_max.unwrap_or(2.0),
                },
                form: OneForm::new(chart, coeffs),
                explicit_field: None,
            })
        }
        _ => Err(RunError::Config(
            "model needs either `name` or both `chart` and `coeffs`".into(),
        )),
    }
}

/// Comparison direction of a check: `margin OP tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
}

impl CmpOp {
    pub fn eval(self, margin: f64, tolerance: f64) -> bool {
        match self {
            CmpOp::Gt => margin > tolerance,
            CmpOp::Ge => margin >= tolerance,
            CmpOp::Lt => margin < tolerance,
            CmpOp::Le => margin <= tolerance,
        }
    }
}

/// One named check; the verdict is a pure function of the recorded margin,
/// comparison, and tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub margin: F17,
    pub op: CmpOp,
    pub tolerance: F17,
    pub verdict: bool,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, margin: f64, op: CmpOp, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            margin: F17(margin),
            op,
            tolerance: F17(tolerance),
            verdict: op.eval(margin, tolerance),
        }
    }

    fn boolean(name: impl Into<String>, pass: bool) -> Self {
        CheckResult::new(name, if pass { 1.0 } else { 0.0 }, CmpOp::Gt, 0.5)
    }
}

/// A complete run record: config echo, per-check results, task payload,
/// and produced artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub task: TaskKind,
    pub config: RunConfig,
    pub threads: usize,
    pub seed: Option<u64>,
    pub checks: Vec<CheckResult>,
    pub payload: Value,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: F17,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

static THREAD_INIT: Once = Once::new();

fn init_threads() -> usize {
    THREAD_INIT.call_once(|| {
        if let Ok(n) = std::env::var(THREADS_ENV) {
            if let Ok(n) = n.parse::<usize>() {
                if n > 0 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
    rayon::current_num_threads()
}

/// Execute a run: dispatch to the owning module, gather checks and payload,
/// write any requested artifacts, and return the report. Deterministic for
/// a fixed config and version (the wall-clock field aside).
pub fn run(config: &RunConfig) -> Result<Report, RunError> {
    validate_config(config)?;
    let started = Instant::now();
    let threads = init_threads();
    let mut artifacts = Vec::new();

    let (checks, mut payload) = match config.task {
        TaskKind::VerifyForm => run_verify_form(config)?,
        TaskKind::SurgeryPlan => run_surgery_plan(config)?,
        TaskKind::BranchLift => run_branch_lift(config)?,
        TaskKind::FlowOrbits => run_flow_orbits(config, &mut artifacts)?,
        TaskKind::LensCover => run_lens_cover(config)?,
    };
    normalize_numbers(&mut payload);

    if let Some(json_path) = &config.output.json {
        artifacts.push(json_path.clone());
    }
    let report = Report {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        task: config.task,
        config: config.clone(),
        threads,
        seed: config.seed,
        checks,
        payload,
        artifacts,
        wall_clock_seconds: F17(started.elapsed().as_secs_f64()),
    };
    if let Some(json_path) = &config.output.json {
        fs::write(json_path, report.to_json())
            .map_err(|e| RunError::Computation {
                check: "write_json".into(),
                message: e.to_string(),
            })?;
    }
    Ok(report)
}

/// Rewrite every non-integer JSON number in the payload with 17
/// significant digits.
fn normalize_numbers(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if !n.is_i64() && !n.is_u64() {
                if let Some(f) = n.as_f64() {
                    if let Ok(formatted) =
                        serde_json::Number::from_str(&format!("{f:.16e}"))
                    {
                        *n = formatted;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(normalize_numbers),
        Value::Object(map) => map.values_mut().for_each(normalize_numbers),
        _ => {}
    }
}

fn required<T: Copy>(v: Option<T>, name: &str) -> Result<T, RunError> {
    v.ok_or_else(|| RunError::Config(format!("missing required parameter `{name}`")))
}

fn run_verify_form(config: &RunConfig) -> Result<(Vec<CheckResult>, Value), RunError> {
    let model_spec = config
        .model
        .as_ref()
        .ok_or_else(|| RunError::Config("verify-form needs a model".into()))?;
    let model = resolve_model(model_spec)?;
    let tol = config.tolerances.contact;
    let grid = GridSpec::from_chart(model.form.chart(), config.grid.n);
    let report = contact_check(&model.form, &grid);

    let signed_min = match report.verdict {
        ContactVerdict::PositiveContact => report.min_wedge,
        ContactVerdict::NegativeContact => -report.max_wedge,
        ContactVerdict::NotContact => 0.0,
    };
    let mut checks = vec![
        CheckResult::boolean("sign_consistent", report.sign_consistent),
        CheckResult::new("min_wedge_magnitude", signed_min, CmpOp::Gt, tol),
    ];
    if let Some(margin) = report.axis_margin {
        checks.push(CheckResult::new("axis_margin", margin, CmpOp::Gt, tol));
    }
    // Reeb postcondition residuals on a sample of the grid.
    let mut max_residual: f64 = 0.0;
    let sample_stride = (grid.len() / 64).max(1);
    for i in (0..grid.len()).step_by(sample_stride) {
        match model.form.reeb_at(grid.point(i)) {
            Ok(reeb) => {
                max_residual = max_residual
                    .max(reeb.alpha_residual)
                    .max(reeb.dalpha_residual);
            }
            Err(_) => max_residual = f64::INFINITY,
        }
    }
    checks.push(CheckResult::new(
        "reeb_residual_max",
        max_residual,
        CmpOp::Le,
        1e-9,
    ));

    let payload = serde_json::json!({
        "model": model.reference,
        "grid": grid,
        "contact": serde_json::to_value(&report).unwrap_or(Value::Null),
    });
    Ok((checks, payload))
}

fn run_surgery_plan(config: &RunConfig) -> Result<(Vec<CheckResult>, Value), RunError> {
    let p = required(config.params.p, "p")?;
    let q = required(config.params.q, "q")?;
    let plan = plan_tight_surgery(p, q).map_err(|e| RunError::computation("plan", e))?;
    let gluing = verify_gluing(&plan).map_err(|e| RunError::computation("gluing", e))?;
    let euler = euler_class(p, q);
    let lens = LensSpace::new(p, q).ok();

    let det = plan.matrix.p * plan.matrix.t - plan.matrix.q * plan.matrix.s;
    let checks = vec![
        CheckResult::new("determinant", (det - 1) as f64, CmpOp::Le, 0.0),
        CheckResult::new("rbar_positive", plan.rbar, CmpOp::Gt, 0.0),
        CheckResult::new("n_slope_negative", plan.n_slope, CmpOp::Lt, 0.0),
        CheckResult::new(
            "r2_irrationality_proxy",
            nearest_rational_distance(plan.r_squared, 50),
            CmpOp::Ge,
            1e-6,
        ),
        CheckResult::new(
            "gluing_foliation_match",
            relative_gap(gluing.foliation.lhs, gluing.foliation.rhs),
            CmpOp::Le,
            gluing.foliation.tolerance,
        ),
        CheckResult::new(
            "gluing_reeb_match",
            if gluing.reeb.pass {
                relative_gap(gluing.reeb.lhs, gluing.reeb.rhs)
            } else {
                f64::INFINITY
            },
            CmpOp::Le,
            gluing.reeb.tolerance,
        ),
        CheckResult::new(
            "gluing_wedge_positive",
            gluing.positivity.lhs,
            CmpOp::Gt,
            gluing.positivity.tolerance,
        ),
        CheckResult::boolean("sufficiently_large_torus", gluing.sufficiently_large),
    ];
    let payload = serde_json::json!({
        "p": p,
        "q": q,
        "s": plan.matrix.s,
        "t": plan.matrix.t,
        "r2": plan.r_squared,
        "rho_star": plan.rho_star,
        "n": plan.n_slope,
        "rbar": plan.rbar,
        "euler": euler,
        "lens_space": lens.map(|l| l.to_string()),
        "gluing": serde_json::to_value(&gluing).unwrap_or(Value::Null),
    });
    Ok((checks, payload))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn run_branch_lift(config: &RunConfig) -> Result<(Vec<CheckResult>, Value), RunError> {
    let model_spec = config
        .model
        .as_ref()
        .ok_or_else(|| RunError::Config("branch-lift needs a model".into()))?;
    let model = resolve_model(model_spec)?;
    let m = required(config.params.m, "m")?;
    let k = config.params.k.unwrap_or(0);
    let l = required(config.params.l, "l")?;
    let data = BranchData::new(m, k, l).map_err(|e| RunError::Config(e.to_string()))?;
    let case = config.params.case.as_deref().unwrap_or("2");

    match case {
        "2" => {
            let chart = model.form.chart().clone();
            let coeffs = model.form.coeffs();
            for (i, c) in coeffs.iter().enumerate() {
                if c.depends_on(1) || c.depends_on(2) {
                    return Err(RunError::Config(format!(
                        "case 2 needs action-angle coefficients (functions of rho); coefficient {i} is not"
                    )));
                }
            }
            let rho_hi = chart.radial().map(|r| r.rho_max).unwrap_or(1.0);
            let grid = GridSpec::from_chart(&chart, config.grid.n)
                .with_bounds(0, 0.0, rho_hi - 0.05);
            let report = verify_contact_scaling(
                &coeffs[1].clone(),
                &coeffs[2].clone(),
                &coeffs[0].clone(),
                &data,
                chart,
                &grid,
            )
            .map_err(|e| RunError::computation("scaling", e))?;
            let checks = vec![CheckResult::new(
                "scaling_max_rel_dev",
                report.max_relative_deviation,
                CmpOp::Le,
                report.tolerance,
            )];
            let payload = serde_json::json!({
                "model": model.reference,
                "case": "2",
                "branch": data,
                "scaling": serde_json::to_value(&report).unwrap_or(Value::Null),
            });
            Ok((checks, payload))
        }
        "1" => {
            let chart = model.form.chart().clone();
            if chart.radial().is_none() {
                return Err(RunError::Config(
                    "case 1 needs a tube chart (transverse-loop normal form)".into(),
                ));
            }
            let coords = chart.coords().clone();
            let f_src = config.params.f.as_deref().unwrap_or("1");
            let f = ScalarField::parse(f_src, &coords)
                .map_err(|e| RunError::Config(format!("in `{f_src}`: {e}")))?;
            let chi = BumpFunction::new(
                config.params.r0.unwrap_or(0.1),
                config.params.r1.unwrap_or(0.3),
            )
            .map_err(|e| RunError::Config(e.to_string()))?;
            let out = equivariant_perturbation(&f, &chi, chart.clone())
                .map_err(|e| RunError::computation("equivariant", e))?;

            // Lift beta through the non-smooth branch map and compare the
            // wedge against the m*l scaling at mapped points.
            let map = branch_map(&data, false, chart);
            let lifted =
                pullback_form(&map, &out.beta).map_err(|e| RunError::computation("lift", e))?;
            let mut max_dev: f64 = 0.0;
            let lift_grid = GridSpec::from_chart(&map.source, [12, 8, 8]);
            for p in lift_grid.points() {
                let down = map
                    .apply(p)
                    .and_then(|q| out.beta.wedge_self_d(q))
                    .map_err(|e| RunError::computation("lift", e))?;
                let up = lifted
                    .wedge_self_d(p)
                    .map_err(|e| RunError::computation("lift", e))?;
                let expected = (data.degree() as f64) * down;
                max_dev = max_dev.max((up - expected).abs() / expected.abs().max(1e-300));
            }

            let checks = vec![
                CheckResult::new(
                    "g_positive",
                    out.report.min_g.unwrap_or(f64::NEG_INFINITY),
                    CmpOp::Gt,
                    out.report.tolerance,
                ),
                CheckResult::new(
                    "reeb_numerator_positive",
                    out.report.min_reeb_numerator.unwrap_or(f64::NEG_INFINITY),
                    CmpOp::Gt,
                    out.report.tolerance,
                ),
                CheckResult::new(
                    "beta_contact_margin",
                    out.report.min_wedge_margin,
                    CmpOp::Gt,
                    out.report.tolerance,
                ),
                CheckResult::new(
                    "equivariance_defect",
                    out.report.equivariance_defect.unwrap_or(f64::INFINITY),
                    CmpOp::Le,
                    0.0,
                ),
                CheckResult::new("lift_scaling_max_rel_dev", max_dev, CmpOp::Le, 1e-9),
            ];
            let payload = serde_json::json!({
                "model": model.reference,
                "case": "1",
                "branch": data,
                "prefactor": f_src,
                "perturbation": serde_json::to_value(&out.report).unwrap_or(Value::Null),
            });
            Ok((checks, payload))
        }
        "hyp" => {
            let chart = model.form.chart().clone();
            if chart.radial().is_none() {
                return Err(RunError::Config("case hyp needs a tube chart".into()));
            }
            let map = branch_map(&data, true, chart);
            let beta =
                pullback_form(&map, &model.form).map_err(|e| RunError::computation("lift", e))?;
            let u = BumpFunction::new(
                config.params.r0.unwrap_or(0.2),
                config.params.r1.unwrap_or(0.6),
            )
            .map_err(|e| RunError::Config(e.to_string()))?;
            let epsilon = config.params.epsilon.unwrap_or(0.5);
            let (_, report) = hyperbolic_perturbation(&beta, &u, epsilon)
                .map_err(|e| RunError::computation("hyperbolic", e))?;
            let checks = vec![
                CheckResult::boolean("epsilon_admissible_found", report.valid),
                CheckResult::new(
                    "wedge_margin",
                    report.min_wedge_margin,
                    CmpOp::Gt,
                    report.tolerance,
                ),
            ];
            let payload = serde_json::json!({
                "model": model.reference,
                "case": "hyp",
                "branch": data,
                "perturbation": serde_json::to_value(&report).unwrap_or(Value::Null),
            });
            Ok((checks, payload))
        }
        other => Err(RunError::Config(format!(
            "unknown case `{other}`; expected 1, 2, or hyp"
        ))),
    }
}

fn parse_seeds(
    params: &Params,
    chart: &Chart,
    section_coord: usize,
    section_value: f64,
) -> Result<Vec<[f64; 3]>, RunError> {
    let spec = params.seeds.as_deref().unwrap_or("grid:4x4");
    if let Some(rest) = spec.strip_prefix("point:") {
        let parts: Vec<f64> = rest
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| RunError::Config(format!("bad seed point `{rest}`: {e}")))?;
        if parts.len() != 3 {
            return Err(RunError::Config("seed point needs 3 coordinates".into()));
        }
        return Ok(vec![[parts[0], parts[1], parts[2]]]);
    }
    if let Some(rest) = spec.strip_prefix("grid:") {
        let (a, b) = rest
            .split_once('x')
            .ok_or_else(|| RunError::Config(format!("bad seed grid `{rest}`; want AxB")))?;
        let (na, nb): (usize, usize) = (
            a.parse()
                .map_err(|_| RunError::Config(format!("bad grid count `{a}`")))?,
            b.parse()
                .map_err(|_| RunError::Config(format!("bad grid count `{b}`")))?,
        );
        let (t1, t2) = match section_coord {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let range = |c: usize| -> (f64, f64) {
            if let Some(r) = chart.radial().filter(|r| r.coord == c) {
                (0.05 * r.rho_max, 0.95 * r.rho_max)
            } else if let Some(p) = chart.period(c) {
                (0.0, p)
            } else {
                (-1.0, 1.0)
            }
        };
        let (lo1, hi1) = range(t1);
        let (lo2, hi2) = range(t2);
        let mut seeds = Vec::with_capacity(na * nb);
        for i in 0..na {
            for j in 0..nb {
                let mut p = [0.0; 3];
                p[section_coord] = section_value;
                p[t1] = lo1 + (hi1 - lo1) * (i as f64 + 0.5) / na as f64;
                p[t2] = lo2 + (hi2 - lo2) * (j as f64 + 0.5) / nb as f64;
                seeds.push(p);
            }
        }
        return Ok(seeds);
    }
    Err(RunError::Config(format!(
        "bad seeds spec `{spec}`; want grid:AxB or point:x,y,z"
    )))
}

fn run_flow_orbits(
    config: &RunConfig,
    artifacts: &mut Vec<String>,
) -> Result<(Vec<CheckResult>, Value), RunError> {
    use rayon::prelude::*;

    let model_spec = config
        .model
        .as_ref()
        .ok_or_else(|| RunError::Config("flow-orbits needs a model".into()))?;
    let model = resolve_model(model_spec)?;
    let spec = match &model.explicit_field {
        Some(field) => FlowSpec::explicit(model.form.chart().clone(), field.clone()),
        None => FlowSpec::reeb(model.form.clone()),
    };
    let section_coord = config.params.section_coord.unwrap_or(1);
    let section_value = config.params.section_value.unwrap_or(0.1);
    let seeds = parse_seeds(&config.params, spec.chart(), section_coord, section_value)?;
    let opts = OrbitOptions {
        section_coord: Some(section_coord),
        returns: config.params.returns.unwrap_or(1),
        max_newton: 25,
        ..OrbitOptions::default()
    };

    let results: Vec<(usize, Result<OrbitRecord, String>)> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, seed)| {
            (
                i,
                find_periodic_orbit(&spec, *seed, &opts).map_err(|e| e.to_string()),
            )
        })
        .collect();

    // Merge deterministically by seed index; deduplicate by period and
    // reduced section point.
    let mut orbits: Vec<OrbitRecord> = Vec::new();
    let mut failures: Vec<Value> = Vec::new();
    for (i, r) in results {
        match r {
            Ok(orbit) => {
                let duplicate = orbits.iter().any(|o| {
                    (o.period - orbit.period).abs() < 1e-6
                        && reduced_distance(spec.chart(), o.point, orbit.point) < 1e-4
                });
                if !duplicate {
                    orbits.push(orbit);
                }
            }
            Err(e) => failures.push(serde_json::json!({
                "seed_index": i,
                "seed": seeds[i],
                "error": e,
            })),
        }
    }

    let hypothesis = hypothesis_report(spec.chart(), &orbits);

    let mut checks = vec![CheckResult::new(
        "orbits_found",
        orbits.len() as f64,
        CmpOp::Ge,
        1.0,
    )];
    for (i, orbit) in orbits.iter().enumerate() {
        checks.push(CheckResult::new(
            format!("orbit_{i}_residual"),
            orbit.residual,
            CmpOp::Le,
            opts.residual_tol,
        ));
        checks.push(CheckResult::new(
            format!("orbit_{i}_multiplier_product"),
            orbit.multiplier_product_defect,
            CmpOp::Le,
            1e-6,
        ));
    }

    if let Some(csv_path) = &config.output.csv {
        let csv = trajectories_csv(&spec, &orbits).map_err(|e| RunError::Computation {
            check: "csv_export".into(),
            message: e.to_string(),
        })?;
        fs::write(csv_path, csv).map_err(|e| RunError::Computation {
            check: "csv_export".into(),
            message: e.to_string(),
        })?;
        artifacts.push(csv_path.clone());
    }

    let payload = serde_json::json!({
        "model": model.reference,
        "seeds": seeds.len(),
        "orbits": serde_json::to_value(&orbits).unwrap_or(Value::Null),
        "failures": failures,
        "hypothesis": serde_json::to_value(&hypothesis).unwrap_or(Value::Null),
    });
    Ok((checks, payload))
}

fn reduced_distance(chart: &Chart, a: [f64; 3], b: [f64; 3]) -> f64 {
    let mut acc = 0.0_f64;
    for c in 0..3 {
        let mut d = a[c] - b[c];
        if let Some(p) = chart.period(c) {
            d = d.rem_euclid(p);
            d = d.min(p - d);
        }
        acc += d * d;
    }
    acc.sqrt()
}

/// CSV rows `orbit,t,c1,c2,c3,w1,w2,w3`: one period per orbit, with the
/// cumulative winding (in turns) of each periodic coordinate.
fn trajectories_csv(
    spec: &FlowSpec,
    orbits: &[OrbitRecord],
) -> Result<String, crate::error::DynError> {
    let chart = spec.chart().clone();
    let names = chart.coords();
    let mut out = String::new();
    out.push_str(&format!(
        "orbit,t,{},{},{},w_{},w_{},w_{}\n",
        names[0], names[1], names[2], names[0], names[1], names[2]
    ));
    for (idx, orbit) in orbits.iter().enumerate() {
        let traj = integrate(spec, orbit.point, orbit.period)?;
        for (t, y) in traj.t.iter().zip(traj.y.iter()) {
            let mut w = [0.0_f64; 3];
            for c in 0..3 {
                if let Some(p) = chart.period(c) {
                    w[c] = (y[c] - orbit.point[c]) / p;
                }
            }
            out.push_str(&format!(
                "{idx},{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                y[0], y[1], y[2], w[0], w[1], w[2]
            ));
        }
    }
    Ok(out)
}

fn run_lens_cover(config: &RunConfig) -> Result<(Vec<CheckResult>, Value), RunError> {
    let p = required(config.params.p, "p")?;
    let q = required(config.params.q, "q")?;
    let b1 = required(config.params.b1, "b1")?;
    let b2 = required(config.params.b2, "b2")?;
    let base = LensSpace::new(p, q).map_err(|e| RunError::Config(e.to_string()))?;
    let b1 = BranchData::new(b1[0], b1[1], b1[2]).map_err(|e| RunError::Config(e.to_string()))?;
    let b2 = BranchData::new(b2[0], b2[1], b2[2]).map_err(|e| RunError::Config(e.to_string()))?;
    let cover =
        lens_branched_cover(&base, &b1, &b2).map_err(|e| RunError::computation("cover", e))?;

    // The construction already cross-validated |H1| against the Smith
    // normal form of the presentation; record the comparison.
    let h1 = cover.h1_order();
    let checks = vec![
        CheckResult::boolean("branching_compatible", true),
        CheckResult::new(
            "h1_matches_presentation",
            0.0,
            CmpOp::Le,
            0.0,
        ),
    ];
    let payload = serde_json::json!({
        "base": base.to_string(),
        "branch_1": b1,
        "branch_2": b2,
        "cover": cover.to_string(),
        "cover_p": cover.p,
        "cover_q": cover.q,
        "h1_order": h1,
    });
    Ok((checks, payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f17_serializes_with_17_significant_digits() {
        let v = serde_json::to_string(&F17(0.1)).unwrap();
        assert_eq!(v, "1.0000000000000001e-1");
        let back: F17 = serde_json::from_str(&v).unwrap();
        assert_eq!(back.0, 0.1);
        let third = serde_json::to_string(&F17(2.0 / 3.0)).unwrap();
        let back: F17 = serde_json::from_str(&third).unwrap();
        assert_eq!(back.0, 2.0 / 3.0);
    }

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let config: RunConfig = toml::from_str(
            r#"
            task = "surgery-plan"
            [params]
            p = -2
            q = 1
            "#,
        )
        .unwrap();
        assert_eq!(config.grid.n, [50, 16, 16]);
        assert_eq!(config.tolerances.contact, 1e-9);
        assert!(config.output.json.is_none());
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let err = toml::from_str::<RunConfig>(
            r#"
            task = "verify-form"
            [gridd]
            n = [1, 1, 1]
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("gridd"), "{err}");
    }

    #[test]
    fn tolerance_override_is_echoed() {
        let config: RunConfig = toml::from_str(
            r#"
            task = "verify-form"
            [model]
            name = "tube"
            [tolerances]
            contact = 1e-12
            "#,
        )
        .unwrap();
        assert_eq!(config.tolerances.contact, 1e-12);
        let report = run(&config).unwrap();
        assert_eq!(report.config.tolerances.contact, 1e-12);
    }

    #[test]
    fn surgery_plan_payload_schema() {
        let config: RunConfig = toml::from_str(
            r#"
            task = "surgery-plan"
            [params]
            p = -2
            q = 1
            "#,
        )
        .unwrap();
        let report = run(&config).unwrap();
        assert!(report.all_passed());
        let payload = &report.payload;
        assert_eq!(payload["s"], serde_json::json!(1));
        assert_eq!(payload["t"], serde_json::json!(-1));
        assert_eq!(payload["euler"], serde_json::json!(2));
        for key in ["p", "q", "s", "t", "r2", "rho_star", "n", "rbar", "euler"] {
            assert!(!payload[key].is_null(), "missing key {key}");
        }
    }

    #[test]
    fn verdicts_rederive_from_margins() {
        let config: RunConfig = toml::from_str(
            r#"
            task = "verify-form"
            [model]
            name = "alpha_r:r=1.414"
            [grid]
            n = [20, 8, 8]
            "#,
        )
        .unwrap();
        let report = run(&config).unwrap();
        assert!(report.all_passed());
        let json = report.to_json();
        let parsed: Report = serde_json::from_str(&json).unwrap();
        for check in &parsed.checks {
            assert_eq!(
                check.verdict,
                check.op.eval(check.margin.0, check.tolerance.0),
                "check {}",
                check.name
            );
        }
    }

    #[test]
    fn malformed_inline_expression_is_a_config_error() {
        let config: RunConfig = toml::from_str(
            r#"
            task = "verify-form"
            [model]
            chart = "tube"
            coeffs = ["0", "rho^", "1"]
            "#,
        )
        .unwrap();
        let err = run(&config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn deterministic_reports_modulo_wall_clock() {
        let config: RunConfig = toml::from_str(
            r#"
            task = "branch-lift"
            [model]
            name = "alpha_r:r2=2.0"
            [params]
            m = 2
            l = 1
            [grid]
            n = [10, 6, 6]
            "#,
        )
        .unwrap();
        let a = run(&config).unwrap().to_json();
        let b = run(&config).unwrap().to_json();
        let strip = |s: &str| -> String {
            s.lines()
                .filter(|l| !l.contains("wall_clock_seconds"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(!a.contains("wall_clock_seconds\": null"));
    }
}
