//! Reeb-flow dynamics: adaptive integration with winding-aware angle
//! tracking, Poincare sections with event-located returns, periodic-orbit
//! detection by Newton shooting, Floquet classification, rotation numbers
//! on invariant tori, and the orbit hypothesis report.

use std::f64::consts::PI;
use std::ops::ControlFlow;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::chart::Chart;
use crate::error::DynError;
use crate::expr::ScalarField;
use crate::form::OneForm;

/// Below this radius the Cartesian-wrapped Reeb evaluation switches to a
/// symmetric 4-point average around the axis.
const AXIS_SAFE_RHO: f64 = 1e-8;
/// Crossings within this time of the previous one are re-detections.
const EVENT_ARM_TIME: f64 = 1e-9;
/// Floquet tolerances.
pub const MULTIPLIER_PRODUCT_TOL: f64 = 1e-6;
pub const FLOQUET_TOL: f64 = 1e-6;

/// Where the integrated vector field comes from.
#[derive(Debug, Clone)]
pub enum FieldSource {
    /// Reeb field of a one-form, evaluated pointwise in the form's chart.
    Reeb(OneForm),
    /// Reeb field of a form on a polar chart, integrated in Cartesian
    /// disk coordinates `(x, y, phi)` so the core circle is an interior
    /// orbit rather than a chart singularity.
    ReebCartesian { form: OneForm, chart: Arc<Chart> },
    /// An explicit vector field.
    Explicit {
        chart: Arc<Chart>,
        comps: [ScalarField; 3],
    },
}

/// Integrator settings: embedded Dormand-Prince 5(4) with per-step local
/// error below `atol + rtol |y|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rtol: 1e-11,
            atol: 1e-13,
            h_init: 1e-3,
            h_max: 0.25,
            max_steps: 2_000_000,
        }
    }
}

/// A flow to analyze: field source plus integrator settings and the time
/// horizon used by section searches.
#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub source: FieldSource,
    pub settings: IntegratorSettings,
    pub max_time: f64,
}

impl FlowSpec {
    pub fn reeb(form: OneForm) -> Self {
        FlowSpec {
            source: FieldSource::Reeb(form),
            settings: IntegratorSettings::default(),
            max_time: 400.0,
        }
    }

    /// Integrate the Reeb flow of a form on a polar chart in Cartesian
    /// disk coordinates `(x, y, phi)`.
    pub fn reeb_cartesian(form: OneForm) -> Self {
        let radial = form
            .chart()
            .radial()
            .expect("cartesian wrapping needs a radial chart");
        assert_eq!(radial.coord, 0, "radial coordinate must come first");
        let phi_period = form.chart().period(2);
        let chart = Chart::new(
            format!("{}_cartesian", form.chart().name()),
            ["x", "y", "phi"],
            [None, None, phi_period],
            None,
        );
        FlowSpec {
            source: FieldSource::ReebCartesian { form, chart },
            settings: IntegratorSettings::default(),
            max_time: 400.0,
        }
    }

    pub fn explicit(chart: Arc<Chart>, comps: [ScalarField; 3]) -> Self {
        FlowSpec {
            source: FieldSource::Explicit { chart, comps },
            settings: IntegratorSettings::default(),
            max_time: 400.0,
        }
    }

    pub fn with_max_time(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    pub fn chart(&self) -> &Arc<Chart> {
        match &self.source {
            FieldSource::Reeb(form) => form.chart(),
            FieldSource::ReebCartesian { chart, .. } => chart,
            FieldSource::Explicit { chart, .. } => chart,
        }
    }

    /// Evaluate the field at a point.
    pub fn field(&self, p: [f64; 3]) -> Result<[f64; 3], DynError> {
        match &self.source {
            FieldSource::Reeb(form) => Ok(form.reeb_at(p)?.vec),
            FieldSource::ReebCartesian { form, .. } => cartesian_reeb(form, p),
            FieldSource::Explicit { comps, .. } => Ok([
                comps[0].eval(p)?,
                comps[1].eval(p)?,
                comps[2].eval(p)?,
            ]),
        }
    }
}

/// Reeb field of a polar-chart form, expressed in `(x, y, phi)`. Off the
/// axis this is the plain polar evaluation pushed through the coordinate
/// change; inside [`AXIS_SAFE_RHO`] the field is replaced by the symmetric
/// average of four probes on that circle (error `O(rho_probe^2)`).
fn cartesian_reeb(form: &OneForm, p: [f64; 3]) -> Result<[f64; 3], DynError> {
    let (x, y, phi) = (p[0], p[1], p[2]);
    let rho = x.hypot(y);
    if rho >= AXIS_SAFE_RHO {
        let theta = y.atan2(x);
        let reeb = form.reeb_at([rho, theta, phi])?.vec;
        Ok([
            reeb[0] * x / rho - reeb[1] * y,
            reeb[0] * y / rho + reeb[1] * x,
            reeb[2],
        ])
    } else {
        let mut acc = [0.0; 3];
        for k in 0..4 {
            let theta = PI * 0.5 * k as f64;
            let reeb = form.reeb_at([AXIS_SAFE_RHO, theta, phi])?.vec;
            let (sin_t, cos_t) = theta.sin_cos();
            acc[0] += reeb[0] * cos_t - reeb[1] * AXIS_SAFE_RHO * sin_t;
            acc[1] += reeb[0] * sin_t + reeb[1] * AXIS_SAFE_RHO * cos_t;
            acc[2] += reeb[2];
        }
        Ok([acc[0] / 4.0, acc[1] / 4.0, acc[2] / 4.0])
    }
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn axpy(y: &[f64; 3], h: f64, coeffs: &[f64], ks: &[[f64; 3]]) -> [f64; 3] {
    let mut out = *y;
    for (c, k) in coeffs.iter().zip(ks.iter()) {
        if *c != 0.0 {
            for i in 0..3 {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

/// One Dormand-Prince step: returns the 5th-order solution and the
/// embedded error estimate.
fn dp_step(spec: &FlowSpec, y: &[f64; 3], h: f64) -> Result<([f64; 3], [f64; 3]), DynError> {
    let mut ks: Vec<[f64; 3]> = Vec::with_capacity(7);
    ks.push(spec.field(*y)?);
    for stage in 0..6 {
        let y_stage = axpy(y, h, &DP_A[stage][..=stage], &ks);
        let _ = DP_C[stage];
        ks.push(spec.field(y_stage)?);
    }
    let y5 = axpy(y, h, &DP_B5, &ks);
    let y4 = axpy(y, h, &DP_B4, &ks);
    let err = [y5[0] - y4[0], y5[1] - y4[1], y5[2] - y4[2]];
    Ok((y5, err))
}

/// Adaptive advance by exactly `dt >= 0`, invoking `on_accept` after each
/// accepted step with `(t_prev, y_prev, t_new, y_new)`; `t` is measured
/// from 0 at `start`. The callback can stop the advance early by returning
/// `ControlFlow::Break`.
fn drive(
    spec: &FlowSpec,
    start: [f64; 3],
    dt: f64,
    mut on_accept: impl FnMut(f64, &[f64; 3], f64, &[f64; 3]) -> Result<ControlFlow<()>, DynError>,
) -> Result<[f64; 3], DynError> {
    if dt <= 0.0 {
        return Ok(start);
    }
    let s = spec.settings;
    let mut t = 0.0;
    let mut y = start;
    let mut h = s.h_init.min(s.h_max).min(dt);
    let mut steps = 0usize;
    while t < dt {
        if steps >= s.max_steps {
            return Err(DynError::StepLimit {
                max_steps: s.max_steps,
            });
        }
        steps += 1;
        h = h.min(dt - t);
        if h < 1e-15 * (1.0 + t.abs()) {
            // Remaining interval is below time resolution.
            break;
        }
        let (y_new, err) = dp_step(spec, &y, h)?;
        let mut scaled = 0.0_f64;
        for i in 0..3 {
            let tol = s.atol + s.rtol * y[i].abs().max(y_new[i].abs());
            scaled = scaled.max((err[i] / tol).abs());
        }
        if scaled <= 1.0 {
            let t_new = t + h;
            if !spec.chart().contains(y_new) {
                return Err(DynError::Form(crate::error::FormError::Eval(
                    crate::error::EvalError::OutOfDomain {
                        chart: spec.chart().name().to_owned(),
                        point: y_new,
                    },
                )));
            }
            let flow = on_accept(t, &y, t_new, &y_new)?;
            y = y_new;
            t = t_new;
            if flow.is_break() {
                return Ok(y);
            }
        }
        let factor = if scaled > 0.0 {
            (0.9 * scaled.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h * factor).min(s.h_max);
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(DynError::StepUnderflow { t });
        }
    }
    Ok(y)
}

/// A time-sampled trajectory with unreduced angle coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn end(&self) -> [f64; 3] {
        *self.y.last().expect("trajectory has at least the start point")
    }
}

/// Integrate for `time` from `start`, recording each accepted step. Angle
/// coordinates are never reduced, so winding survives in the samples.
pub fn integrate(spec: &FlowSpec, start: [f64; 3], time: f64) -> Result<Trajectory, DynError> {
    let mut t = vec![0.0];
    let mut y = vec![start];
    let end = drive(spec, start, time, |_, _, t1, y1| {
        t.push(t1);
        y.push(*y1);
        Ok(ControlFlow::Continue(()))
    })?;
    if time > 0.0 {
        // `drive` lands exactly on `time`; record defensively anyway.
        if (t.last().copied().unwrap() - time).abs() > 1e-12 * (1.0 + time) {
            t.push(time);
            y.push(end);
        }
    }
    Ok(Trajectory { t, y })
}

/// A Poincare section `{ coord = value }`; for periodic coordinates every
/// translate `value + n * period` counts, so winding flows register one
/// crossing per period.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Section {
    pub coord: usize,
    pub value: f64,
}

impl Section {
    pub fn through(coord: usize, point: [f64; 3]) -> Self {
        Section {
            coord,
            value: point[coord],
        }
    }
}

/// First `n` section crossings (time from start, crossing state), with an
/// optional per-step monitor.
fn crossings(
    spec: &FlowSpec,
    start: [f64; 3],
    section: &Section,
    n: usize,
    mut monitor: impl FnMut(&[f64; 3]) -> Result<(), DynError>,
) -> Result<Vec<(f64, [f64; 3])>, DynError> {
    let period = spec.chart().period(section.coord);
    let c = section.coord;
    let mut found: Vec<(f64, [f64; 3])> = Vec::with_capacity(n);
    let mut y = start;
    let mut t_base = 0.0_f64;
    let mut last_event = 0.0_f64;
    monitor(&y)?;

    while found.len() < n {
        if t_base >= spec.max_time {
            return Err(DynError::NoReturn {
                max_time: spec.max_time,
            });
        }
        let mut event: Option<(f64, f64, [f64; 3], f64)> = None; // (t0, h, y0, target)
        let chunk = (spec.max_time - t_base).min(64.0 * spec.settings.h_max);
        drive(spec, y, chunk, |t0, y0, t1, y1| {
            monitor(y1)?;
            let (x0, x1) = (y0[c], y1[c]);
            if let Some(target) = first_target_crossed(x0, x1, section.value, period) {
                let t_abs = t_base + t0;
                if t_abs + (t1 - t0) > last_event + EVENT_ARM_TIME {
                    event = Some((t0, t1 - t0, *y0, target));
                    return Ok(ControlFlow::Break(()));
                }
            }
            Ok(ControlFlow::Continue(()))
        })
        .map(|end| {
            if event.is_none() {
                y = end;
                t_base += chunk;
            }
        })?;

        if let Some((t0, h, y0, target)) = event {
            let (dt_star, y_star) = locate_crossing(spec, &y0, h, c, target)?;
            let t_star = t_base + t0 + dt_star;
            if t_star > last_event + EVENT_ARM_TIME {
                found.push((t_star, y_star));
                last_event = t_star;
            }
            y = y_star;
            t_base = t_star;
        }
    }
    Ok(found)
}

/// The first translate of `value` crossed when the coordinate moves from
/// `x0` to `x1` (start-exclusive, end-inclusive).
fn first_target_crossed(x0: f64, x1: f64, value: f64, period: Option<f64>) -> Option<f64> {
    if x1 == x0 {
        return None;
    }
    match period {
        None => {
            let crossed = (x0 < value && value <= x1) || (x1 <= value && value < x0);
            crossed.then_some(value)
        }
        Some(p) => {
            // Nearest translate strictly ahead of x0 in the direction of x1.
            let dir = (x1 - x0).signum();
            let steps = ((x0 - value) / p).floor();
            let mut target = value + steps * p;
            // Walk targets in the direction of motion until past x0.
            while (target - x0) * dir <= 0.0 {
                target += dir * p;
            }
            let crossed = (target - x0) * dir > 0.0 && (target - x1) * dir <= 0.0;
            crossed.then_some(target)
        }
    }
}

/// Bisection on the true (tolerance-controlled) flow: narrows the crossing
/// bracket `[0, h]` from `y0` until the time is resolved to ~1e-13.
fn locate_crossing(
    spec: &FlowSpec,
    y0: &[f64; 3],
    h: f64,
    coord: usize,
    target: f64,
) -> Result<(f64, [f64; 3]), DynError> {
    let mut lo_state = *y0;
    let mut t_lo = 0.0_f64;
    let mut t_hi = h;
    let d_start = y0[coord] - target;
    let mut d_lo = d_start;
    for _ in 0..64 {
        if (t_hi - t_lo) < 1e-13 * (1.0 + t_hi) {
            break;
        }
        let t_mid = 0.5 * (t_lo + t_hi);
        let y_mid = drive(spec, lo_state, t_mid - t_lo, |_, _, _, _| {
            Ok(ControlFlow::Continue(()))
        })?;
        let d_mid = y_mid[coord] - target;
        if d_mid == 0.0 || (d_mid > 0.0) != (d_lo > 0.0) {
            t_hi = t_mid;
        } else {
            lo_state = y_mid;
            t_lo = t_mid;
            d_lo = d_mid;
        }
    }
    let y_star = drive(spec, lo_state, t_hi - t_lo, |_, _, _, _| {
        Ok(ControlFlow::Continue(()))
    })?;
    Ok((t_hi, y_star))
}

/// First return to the section: `(return point, return time)`. Fails with a
/// transversality error when the field is tangent to the section at the
/// start, and with a no-return error past `spec.max_time`.
pub fn poincare_return(
    spec: &FlowSpec,
    section: &Section,
    point: [f64; 3],
) -> Result<([f64; 3], f64), DynError> {
    let v = spec.field(point)?;
    let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if v[section.coord].abs() <= 1e-8 * speed.max(1e-300) {
        return Err(DynError::TangentSection {
            point,
            speed: v[section.coord].abs(),
        });
    }
    let hits = crossings(spec, point, section, 1, |_| Ok(()))?;
    let (t, y) = hits[0];
    Ok((y, t))
}

/// How a detected orbit's linearized return map sits in the symplectic
/// classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Elliptic,
    /// Multipliers within tolerance of -1 (period-doubling boundary):
    /// nondegenerate, but too close to the unit-circle edge to claim more.
    EllipticBorderline,
    Hyperbolic,
    Degenerate,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Elliptic => write!(f, "elliptic"),
            Classification::EllipticBorderline => write!(f, "elliptic (borderline)"),
            Classification::Hyperbolic => write!(f, "hyperbolic"),
            Classification::Degenerate => write!(f, "degenerate"),
        }
    }
}

/// Classify a multiplier pair of an area-preserving return map. Requires
/// `|l1 l2 - 1| <= 1e-6`; eigenvalue within 1e-6 of +1 is degenerate, trace
/// within 1e-6 of -2 is flagged borderline, otherwise |trace| < 2 is
/// elliptic and |trace| > 2 hyperbolic.
pub fn classify_floquet(l1: Complex64, l2: Complex64) -> Result<Classification, DynError> {
    let defect = (l1 * l2 - Complex64::new(1.0, 0.0)).norm();
    if defect > MULTIPLIER_PRODUCT_TOL {
        return Err(DynError::InvalidMultipliers { defect });
    }
    if (l1 - Complex64::new(1.0, 0.0)).norm() <= FLOQUET_TOL
        || (l2 - Complex64::new(1.0, 0.0)).norm() <= FLOQUET_TOL
    {
        return Ok(Classification::Degenerate);
    }
    let trace = (l1 + l2).re;
    if (trace + 2.0).abs() <= FLOQUET_TOL {
        return Ok(Classification::EllipticBorderline);
    }
    if trace.abs() < 2.0 {
        Ok(Classification::Elliptic)
    } else {
        Ok(Classification::Hyperbolic)
    }
}

fn serialize_multipliers<S>(m: &[Complex64; 2], s: S) -> Result<S::Ok, S::Error>
where
    S: serde::Serializer,
{
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(2))?;
    for c in m {
        seq.serialize_element(&[c.re, c.im])?;
    }
    seq.end()
}

/// A detected periodic orbit.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitRecord {
    pub seed: [f64; 3],
    /// Converged point on the section.
    pub point: [f64; 3],
    pub period: f64,
    /// Floquet multipliers of the transverse linearized return map,
    /// serialized as `[[re, im], [re, im]]`.
    #[serde(serialize_with = "serialize_multipliers")]
    pub multipliers: [Complex64; 2],
    pub classification: Classification,
    /// Integer winding per chart coordinate over one period (0 for
    /// aperiodic coordinates).
    pub winding: [i64; 3],
    /// Return-map displacement at the converged point.
    pub residual: f64,
    /// `|l1 l2 - 1|`: deviation of the return map from area preservation.
    pub multiplier_product_defect: f64,
    pub returns: usize,
}

/// Knobs for [`find_periodic_orbit`].
#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    /// Section coordinate; default picks the fastest periodic coordinate
    /// at the seed.
    pub section_coord: Option<usize>,
    /// Fixed point of the `returns`-th return map.
    pub returns: usize,
    pub max_newton: usize,
    pub residual_tol: f64,
    /// Central-difference step of the return-map Jacobian.
    pub fd_step: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            section_coord: None,
            returns: 1,
            max_newton: 50,
            residual_tol: 1e-9,
            fd_step: 1e-6,
        }
    }
}

/// Newton shooting for a periodic orbit near `seed`: iterates the
/// return-map displacement on the section through the seed until the
/// residual drops below tolerance, then fills in period, multipliers,
/// classification, and winding.
pub fn find_periodic_orbit(
    spec: &FlowSpec,
    seed: [f64; 3],
    opts: &OrbitOptions,
) -> Result<OrbitRecord, DynError> {
    let chart = spec.chart().clone();
    let section_coord = match opts.section_coord {
        Some(c) => c,
        None => {
            let v = spec.field(seed)?;
            let mut best = None;
            for c in 0..3 {
                if chart.period(c).is_some() {
                    let speed = v[c].abs();
                    if best.map_or(true, |(_, s)| speed > s) {
                        best = Some((c, speed));
                    }
                }
            }
            best.map(|(c, _)| c).unwrap_or(2)
        }
    };
    let section = Section::through(section_coord, seed);
    let (t1, t2) = transverse_coords(section_coord);

    // k-th return in the transverse coordinates, with section-coordinate
    // winding removed.
    let return_map = |u: [f64; 2]| -> Result<([f64; 2], f64), DynError> {
        let mut p = seed;
        p[t1] = u[0];
        p[t2] = u[1];
        let hits = crossings(spec, p, &section, opts.returns, |_| Ok(()))?;
        let (t, y) = *hits.last().expect("requested at least one return");
        Ok(([y[t1], y[t2]], t))
    };
    let displacement = |u: [f64; 2]| -> Result<([f64; 2], f64), DynError> {
        let (pu, t) = return_map(u)?;
        let mut d = [pu[0] - u[0], pu[1] - u[1]];
        for (slot, c) in [(0usize, t1), (1usize, t2)] {
            if let Some(p) = chart.period(c) {
                // Transverse winding is legitimate closure; remove whole
                // periods.
                d[slot] -= p * (d[slot] / p).round();
            }
        }
        Ok((d, t))
    };

    let mut u = [seed[t1], seed[t2]];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..opts.max_newton {
        let (d, _) = displacement(u)?;
        residual = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if residual <= opts.residual_tol {
            converged = true;
            break;
        }
        // Central-difference Jacobian of the displacement.
        let h = opts.fd_step;
        let mut jac = [[0.0_f64; 2]; 2];
        for col in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[col] += h;
            dn[col] -= h;
            let (dp, _) = displacement(up)?;
            let (dm, _) = displacement(dn)?;
            jac[0][col] = (dp[0] - dm[0]) / (2.0 * h);
            jac[1][col] = (dp[1] - dm[1]) / (2.0 * h);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-14 {
            return Err(DynError::NoConvergence {
                iterations: opts.max_newton,
                residual,
            });
        }
        let du = [
            (-jac[1][1] * d[0] + jac[0][1] * d[1]) / det,
            (jac[1][0] * d[0] - jac[0][0] * d[1]) / det,
        ];
        u = [u[0] + du[0], u[1] + du[1]];
    }
    if !converged {
        return Err(DynError::NoConvergence {
            iterations: opts.max_newton,
            residual,
        });
    }

    // Converged: assemble the record.
    let mut point = seed;
    point[t1] = u[0];
    point[t2] = u[1];
    let (_, period) = displacement(u)?;
    let (d_final, _) = displacement(u)?;
    residual = (d_final[0] * d_final[0] + d_final[1] * d_final[1]).sqrt();

    // Multipliers from the finite-difference Jacobian of the return map
    // itself (displacement Jacobian + identity).
    let h = opts.fd_step;
    let mut jp = [[0.0_f64; 2]; 2];
    for col in 0..2 {
        let mut up = u;
        let mut dn = u;
        up[col] += h;
        dn[col] -= h;
        let (pp, _) = return_map(up)?;
        let (pm, _) = return_map(dn)?;
        jp[0][col] = (pp[0] - pm[0]) / (2.0 * h);
        jp[1][col] = (pp[1] - pm[1]) / (2.0 * h);
    }
    let (l1, l2) = eigenvalues_2x2(&jp);
    let defect = (l1 * l2 - Complex64::new(1.0, 0.0)).norm();
    let classification = classify_floquet(l1, l2)?;

    // Winding from the unreduced angle advance over one full loop.
    let hits = crossings(spec, point, &section, opts.returns, |_| Ok(()))?;
    let end = hits.last().expect("closure loop has returns").1;
    let mut winding = [0i64; 3];
    for c in 0..3 {
        if let Some(p) = chart.period(c) {
            let turns = (end[c] - point[c]) / p;
            let rounded = turns.round();
            if (turns - rounded).abs() > 1e-6 {
                return Err(DynError::NonIntegralWinding {
                    value: turns,
                    coord: c,
                });
            }
            winding[c] = rounded as i64;
        }
    }

    Ok(OrbitRecord {
        seed,
        point,
        period,
        multipliers: [l1, l2],
        classification,
        winding,
        residual,
        multiplier_product_defect: defect,
        returns: opts.returns,
    })
}

fn transverse_coords(section_coord: usize) -> (usize, usize) {
    match section_coord {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> (Complex64, Complex64) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (
            Complex64::new(0.5 * (tr + s), 0.0),
            Complex64::new(0.5 * (tr - s), 0.0),
        )
    } else {
        let s = (-disc).sqrt();
        (
            Complex64::new(0.5 * tr, 0.5 * s),
            Complex64::new(0.5 * tr, -0.5 * s),
        )
    }
}

/// Rotation-number estimate on an invariant torus.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RotationEstimate {
    /// Average advance of the measured angle per section period, in turns.
    pub value: f64,
    /// Difference between the full and half-sample averages.
    pub error_estimate: f64,
    pub returns: usize,
    /// Largest observed drift of the radial coordinate.
    pub drift: f64,
}

/// Birkhoff average of the `measured` angle advance per period of the
/// `section` angle, over `num_returns` returns. Monitors the radial
/// coordinate for drift off the invariant torus (tolerance 1e-6).
pub fn rotation_number(
    spec: &FlowSpec,
    seed: [f64; 3],
    num_returns: usize,
    section_coord: usize,
    measured_coord: usize,
) -> Result<RotationEstimate, DynError> {
    const DRIFT_TOL: f64 = 1e-6;
    let chart = spec.chart().clone();
    let radial = chart.radial().map(|r| r.coord);
    let m_period = chart
        .period(measured_coord)
        .unwrap_or(2.0 * PI);
    let section = Section::through(section_coord, seed);
    let mut drift = 0.0_f64;
    let rho0 = radial.map(|c| seed[c]);
    let hits = crossings(spec, seed, &section, num_returns.max(2), |y| {
        if let (Some(c), Some(r0)) = (radial, rho0) {
            drift = drift.max((y[c] - r0).abs());
            if drift > DRIFT_TOL {
                return Err(DynError::TorusDrift { drift });
            }
        }
        Ok(())
    })?;
    let n = hits.len();
    let full = (hits[n - 1].1[measured_coord] - seed[measured_coord]) / (m_period * n as f64);
    let half_idx = n / 2;
    let half = (hits[half_idx - 1].1[measured_coord] - seed[measured_coord])
        / (m_period * half_idx as f64);
    Ok(RotationEstimate {
        value: full,
        error_estimate: (full - half).abs(),
        returns: n,
        drift,
    })
}

/// Per-orbit data the hypothesis report derives.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitAssessment {
    pub classification: Classification,
    pub winding: [i64; 3],
    /// Whether the orbit class has finite order in the chart's fundamental
    /// group; `None` where the chart carries no decidable winding data.
    pub finite_order: Option<bool>,
}

/// Sampled-evidence summary of which tightness-theorem hypothesis set the
/// detected orbits are consistent with.
#[derive(Debug, Clone, Serialize)]
pub struct TightnessHypothesisReport {
    pub orbits: Vec<OrbitAssessment>,
    /// Consistent with "no closed orbits of finite order".
    pub consistent_with_hypothesis_1: bool,
    /// Consistent with "no degenerate orbits and no hyperbolic orbits of
    /// finite order".
    pub consistent_with_hypothesis_2: bool,
    pub violations: Vec<String>,
    pub disclaimer: &'static str,
}

pub const HYPOTHESIS_DISCLAIMER: &str =
    "sampled evidence, not a proof: only the orbits found are assessed";

/// Assess detected orbits against the two hypothesis sets. On torus-like
/// charts an orbit is finite-order exactly when its winding vector
/// vanishes; charts without periodic coordinates are undecidable here.
pub fn hypothesis_report(chart: &Chart, orbits: &[OrbitRecord]) -> TightnessHypothesisReport {
    let decidable = (0..3).any(|c| chart.period(c).is_some());
    let mut assessments = Vec::with_capacity(orbits.len());
    let mut violations = Vec::new();
    let mut h1 = true;
    let mut h2 = true;
    for (i, orbit) in orbits.iter().enumerate() {
        let finite_order = decidable.then(|| orbit.winding == [0, 0, 0]);
        if let Some(fo) = finite_order {
            if fo {
                h1 = false;
                violations.push(format!(
                    "orbit {i}: finite order (zero winding), classification {}",
                    orbit.classification
                ));
            }
            if orbit.classification == Classification::Hyperbolic && fo {
                h2 = false;
            }
        }
        if orbit.classification == Classification::Degenerate {
            h2 = false;
            violations.push(format!("orbit {i}: degenerate"));
        }
        assessments.push(OrbitAssessment {
            classification: orbit.classification,
            winding: orbit.winding,
            finite_order,
        });
    }
    TightnessHypothesisReport {
        orbits: assessments,
        consistent_with_hypothesis_1: h1,
        consistent_with_hypothesis_2: h2,
        violations,
        disclaimer: HYPOTHESIS_DISCLAIMER,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{t3_example, ModelTorusForm};
    use std::f64::consts::FRAC_PI_2;

    fn alpha_r_flow(r: f64) -> FlowSpec {
        FlowSpec::reeb(ModelTorusForm::new(r).unwrap().form().clone())
    }

    fn t3_flow() -> FlowSpec {
        let t3 = t3_example();
        FlowSpec::explicit(t3.chart().clone(), t3.field().clone())
    }

    #[test]
    fn integrate_hopf_flow_advances_both_angles() {
        // r = 1: Reeb = (0, 1, 1), so time 2 pi advances theta and phi by
        // 2 pi with rho frozen.
        let spec = alpha_r_flow(1.0);
        let start = [0.6, 0.0, 0.0];
        let traj = integrate(&spec, start, 2.0 * PI).unwrap();
        let end = traj.end();
        assert!((end[0] - 0.6).abs() < 1e-12);
        assert!((end[1] - 2.0 * PI).abs() < 1e-9);
        assert!((end[2] - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn integrate_zero_time_is_identity() {
        let spec = alpha_r_flow(1.3);
        let start = [0.5, 1.0, 2.0];
        let traj = integrate(&spec, start, 0.0).unwrap();
        assert_eq!(traj.end(), start);
        assert_eq!(traj.t.len(), 1);
    }

    #[test]
    fn integrate_t3_invariant_line() {
        let spec = t3_flow();
        let traj = integrate(&spec, [FRAC_PI_2, 0.0, 0.0], 2.0 * PI / 3.0).unwrap();
        let end = traj.end();
        assert!((end[0] - FRAC_PI_2).abs() < 1e-10);
        assert!((end[1] - 2.0 * PI).abs() < 1e-9);
        assert!(end[2].abs() < 1e-10);
    }

    #[test]
    fn invariant_torus_rho_is_frozen() {
        // X_rho = 0 exactly, so the integrated rho never moves.
        let spec = alpha_r_flow(2.0_f64.sqrt());
        let start = [0.7, 0.3, 1.0];
        let mut max_drift = 0.0_f64;
        let traj = integrate(&spec, start, 100.0 * 2.0 * PI).unwrap();
        for y in &traj.y {
            max_drift = max_drift.max((y[0] - 0.7).abs());
        }
        assert!(max_drift <= 1e-7, "drift {max_drift}");
    }

    #[test]
    fn reeb_residuals_stay_small_along_trajectory() {
        let model = ModelTorusForm::new(1.7).unwrap();
        let spec = FlowSpec::reeb(model.form().clone());
        let traj = integrate(&spec, [0.9, 0.0, 0.0], 30.0).unwrap();
        for y in traj.y.iter().step_by(7) {
            let reeb = model.form().reeb_at(*y).unwrap();
            assert!(reeb.alpha_residual <= 1e-8);
            assert!(reeb.dalpha_residual <= 1e-8);
        }
    }

    #[test]
    fn poincare_return_rotates_by_reeb_slope() {
        // Section theta = theta0: return after time 2 pi with phi advanced
        // by 2 pi / r^2.
        let spec = alpha_r_flow(2.0_f64.sqrt());
        let start = [0.8, 0.25, 1.0];
        let section = Section::through(1, start);
        let (y, t) = poincare_return(&spec, &section, start).unwrap();
        assert!((t - 2.0 * PI).abs() < 1e-9);
        assert!((y[1] - (start[1] + 2.0 * PI)).abs() < 1e-9);
        assert!((y[2] - (start[2] + PI)).abs() < 1e-9);
        assert!((y[0] - start[0]).abs() < 1e-10);
    }

    #[test]
    fn poincare_return_on_t3_invariant_line() {
        let spec = t3_flow();
        let start = [FRAC_PI_2, 0.0, 0.0];
        let section = Section::through(1, start);
        let (y, t) = poincare_return(&spec, &section, start).unwrap();
        assert!((t - 2.0 * PI / 3.0).abs() < 1e-9);
        assert!((y[0] - FRAC_PI_2).abs() < 1e-9);
        assert!(y[2].abs() < 1e-9);
    }

    #[test]
    fn tangent_section_is_rejected() {
        // X_rho = 0: a rho-section is tangent to the flow.
        let spec = alpha_r_flow(1.2);
        let start = [0.5, 0.0, 0.0];
        let err = poincare_return(&spec, &Section::through(0, start), start).unwrap_err();
        assert!(matches!(err, DynError::TangentSection { .. }));
    }

    #[test]
    fn classify_examples() {
        let e = classify_floquet(
            Complex64::from_polar(1.0, PI / 3.0),
            Complex64::from_polar(1.0, -PI / 3.0),
        )
        .unwrap();
        assert_eq!(e, Classification::Elliptic);
        let h = classify_floquet(Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.0)).unwrap();
        assert_eq!(h, Classification::Hyperbolic);
        let d = classify_floquet(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(d, Classification::Degenerate);
        let b = classify_floquet(Complex64::new(-1.0, 0.0), Complex64::new(-1.0, 0.0)).unwrap();
        assert_eq!(b, Classification::EllipticBorderline);
        assert!(matches!(
            classify_floquet(Complex64::new(2.0, 0.0), Complex64::new(2.0, 0.0)),
            Err(DynError::InvalidMultipliers { .. })
        ));
    }

    #[test]
    fn t3_periodic_orbit_from_spec_seed() {
        let spec = t3_flow();
        let orbit = find_periodic_orbit(&spec, [FRAC_PI_2, 0.1, 0.05], &OrbitOptions::default())
            .unwrap();
        assert!((orbit.period - 2.0 * PI / 3.0).abs() < 1e-6, "period {}", orbit.period);
        assert_eq!(orbit.winding, [0, 1, 0]);
        assert_eq!(orbit.classification, Classification::Elliptic);
        assert!(orbit.residual <= 1e-9);
        assert!(orbit.multiplier_product_defect <= 1e-6);
        for m in orbit.multipliers {
            assert!((m.norm() - 1.0).abs() <= 1e-6);
        }
        // Hand linearization: transverse system (dx, dz)' = [[0,2],[-1,0]],
        // eigenvalues +- i sqrt(2), multipliers exp(+- i sqrt(2) T).
        let expected_arg = 2.0_f64.sqrt() * 2.0 * PI / 3.0;
        let got = orbit.multipliers[0].arg().abs();
        let wrapped = (2.0 * PI - expected_arg).min(expected_arg);
        assert!(
            (got - wrapped).abs() < 1e-5,
            "multiplier phase {got} vs {wrapped}"
        );
        // Converged onto the integral curve x = pi/2, z = 0.
        assert!((orbit.point[0] - FRAC_PI_2).abs() < 1e-8);
        assert!(orbit.point[2].abs() < 1e-8);
    }

    #[test]
    fn model_core_orbit_in_cartesian_coordinates() {
        let r2 = 2.0_f64.sqrt(); // r^2 for r = 2^(1/4), irrational rotation
        let model = ModelTorusForm::from_r_squared(r2).unwrap();
        let spec = FlowSpec::reeb_cartesian(model.form().clone());
        let opts = OrbitOptions {
            section_coord: Some(2),
            ..OrbitOptions::default()
        };
        let orbit = find_periodic_orbit(&spec, [1e-3, 0.0, 0.0], &opts).unwrap();
        // Core orbit: period 2 pi r^2, winding (0, 0, 1), elliptic with
        // multiplier phase 2 pi r^2 mod 2 pi.
        assert!((orbit.period - 2.0 * PI * r2).abs() < 1e-7, "period {}", orbit.period);
        assert_eq!(orbit.winding, [0, 0, 1]);
        assert_eq!(orbit.classification, Classification::Elliptic);
        assert!(orbit.point[0].hypot(orbit.point[1]) < 1e-6);
        let expected = 2.0 * PI * r2 % (2.0 * PI);
        let wrapped = (2.0 * PI - expected).min(expected);
        assert!((orbit.multipliers[0].arg().abs() - wrapped).abs() < 1e-5);
    }

    #[test]
    fn quasiperiodic_seed_does_not_converge() {
        // Off-core seeds of an irrational-slope model lie on invariant
        // tori with no nearby periodic orbit: the polar-chart return map
        // is a rigid rotation, so Newton sees a singular Jacobian.
        let spec = alpha_r_flow(2.0_f64.powf(0.25));
        let opts = OrbitOptions {
            section_coord: Some(1),
            max_newton: 8,
            ..OrbitOptions::default()
        };
        let err = find_periodic_orbit(&spec, [0.8, 0.0, 0.0], &opts).unwrap_err();
        assert!(matches!(err, DynError::NoConvergence { .. }), "{err:?}");
    }

    #[test]
    fn rotation_number_matches_reeb_slope() {
        for r2 in [2.0, 3.0] {
            let model = ModelTorusForm::from_r_squared(r2).unwrap();
            let spec = FlowSpec::reeb(model.form().clone());
            let est = rotation_number(&spec, [0.6, 0.0, 0.0], 16, 1, 2).unwrap();
            assert!(
                (est.value - 1.0 / r2).abs() < 1e-6,
                "r^2 = {r2}: {}",
                est.value
            );
            assert!(est.error_estimate < 1e-9);
            assert!(est.drift <= 1e-7);
        }
    }

    #[test]
    fn rotation_number_detects_torus_drift() {
        // A field with a genuine radial component drifts off the torus.
        let chart = Chart::solid_torus("leaky", 2.0);
        let spec = FlowSpec::explicit(
            chart,
            [
                ScalarField::constant(0.01),
                ScalarField::one(),
                ScalarField::constant(0.5),
            ],
        );
        let err = rotation_number(&spec, [0.5, 0.0, 0.0], 8, 1, 2).unwrap_err();
        assert!(matches!(err, DynError::TorusDrift { .. }));
    }

    #[test]
    fn hypothesis_report_for_model_cores() {
        // Both core orbits of an irrational model are elliptic with nonzero
        // winding: consistent with hypothesis set (2) (and with (1)).
        let spec = FlowSpec::reeb_cartesian(
            ModelTorusForm::from_r_squared(2.0_f64.sqrt()).unwrap().form().clone(),
        );
        let opts = OrbitOptions {
            section_coord: Some(2),
            ..OrbitOptions::default()
        };
        let orbit = find_periodic_orbit(&spec, [1e-3, 0.0, 0.0], &opts).unwrap();
        let report = hypothesis_report(spec.chart(), &[orbit]);
        assert!(report.consistent_with_hypothesis_1);
        assert!(report.consistent_with_hypothesis_2);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn hypothesis_report_flags_contractible_hyperbolic_orbit() {
        let chart = Chart::three_torus();
        let fake = OrbitRecord {
            seed: [0.0; 3],
            point: [0.0; 3],
            period: 1.0,
            multipliers: [Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.0)],
            classification: Classification::Hyperbolic,
            winding: [0, 0, 0],
            residual: 0.0,
            multiplier_product_defect: 0.0,
            returns: 1,
        };
        let report = hypothesis_report(&chart, &[fake]);
        assert!(!report.consistent_with_hypothesis_1);
        assert!(!report.consistent_with_hypothesis_2);
        assert!(!report.violations.is_empty());
    }
}
