//! Branched-covering machinery: branch maps, the integrable pullback and
//! its wedge-scaling identity, the equivariant and bump perturbations, and
//! lens-space cover bookkeeping with a Smith-normal-form homology check.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::chart::{Chart, ChartMap};
use crate::error::CoverError;
use crate::expr::ScalarField;
use crate::form::{axis_collar_margin, GridSpec, OneForm};
use crate::jet::Jet2;
use crate::surgery::{heegaard_matrix, LensSpace};

/// Per-torus covering data: the boundary map is
/// `(theta, phi) -> (m theta + k phi, l phi)` with `m` the meridional
/// branching degree and `l` the longitudinal degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BranchData {
    pub m: i64,
    pub k: i64,
    pub l: i64,
}

impl BranchData {
    pub fn new(m: i64, k: i64, l: i64) -> Result<Self, CoverError> {
        if m < 1 || l < 1 {
            return Err(CoverError::BadBranchData(format!(
                "need m >= 1 and l >= 1, got m = {m}, l = {l}"
            )));
        }
        Ok(BranchData { m, k, l })
    }

    /// Covering degree of the solid-torus piece.
    pub fn degree(&self) -> i64 {
        self.m * self.l
    }

    pub fn boundary_matrix(&self) -> [[i64; 2]; 2] {
        [[self.m, self.k], [0, self.l]]
    }

    pub fn is_trivial(&self) -> bool {
        self.m == 1 && self.k == 0 && self.l == 1
    }
}

/// The solid-torus branch map as a chart map onto `target`.
///
/// Non-smooth variant: `(rho, theta, phi) -> (rho, m theta + k phi, l phi)`,
/// differentiable off `rho = 0`. Smooth variant: first component `rho^2`,
/// smooth everywhere but with vanishing `d rho`-row at the axis.
pub fn branch_map(data: &BranchData, smooth: bool, target: Arc<Chart>) -> ChartMap {
    let rho_max = target
        .radial()
        .map(|r| if smooth { r.rho_max.sqrt() } else { r.rho_max })
        .unwrap_or(1.0);
    let source = Chart::solid_torus(format!("{}_cover", target.name()), rho_max);
    let rho = ScalarField::coord(0);
    let theta = ScalarField::coord(1);
    let phi = ScalarField::coord(2);
    let comps = [
        if smooth { rho.powi(2) } else { rho },
        ScalarField::constant(data.m as f64) * theta
            + ScalarField::constant(data.k as f64) * phi.clone(),
        ScalarField::constant(data.l as f64) * phi,
    ];
    ChartMap::new(source, target, comps).with_angle_matrix(data.boundary_matrix())
}

/// Pullback of an action-angle form `f d theta + g d phi + h d rho`
/// (coefficients functions of rho) under the non-smooth branch map:
/// `m f d theta + (k f + l g) d phi + h d rho`. The coefficients stay
/// smooth in rho, so the form extends over the axis.
pub fn pullback_integrable(
    f: &ScalarField,
    g: &ScalarField,
    h: &ScalarField,
    data: &BranchData,
    chart: Arc<Chart>,
) -> OneForm {
    OneForm::new(
        chart,
        [
            h.clone(),
            ScalarField::constant(data.m as f64) * f.clone(),
            ScalarField::constant(data.k as f64) * f.clone()
                + ScalarField::constant(data.l as f64) * g.clone(),
        ],
    )
}

/// Pointwise comparison of `wedge(lifted)` against `m l * wedge(base)`.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub ml: i64,
    pub points_checked: usize,
    pub max_relative_deviation: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const SCALING_TOL: f64 = 1e-9;

/// Verify the wedge-scaling identity `wedge(lift) = m l wedge(base)` of the
/// integrable pullback on a grid.
pub fn verify_contact_scaling(
    f: &ScalarField,
    g: &ScalarField,
    h: &ScalarField,
    data: &BranchData,
    chart: Arc<Chart>,
    grid: &GridSpec,
) -> Result<ScalingReport, CoverError> {
    let base = OneForm::new(chart.clone(), [h.clone(), f.clone(), g.clone()]);
    let lifted = pullback_integrable(f, g, h, data, chart);
    let ml = data.degree();
    let results: Vec<Result<(f64, f64), CoverError>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let wb = base.wedge_self_d(p)?;
            let wl = lifted.wedge_self_d(p)?;
            Ok((wb, wl))
        })
        .collect();

    let mut max_dev = 0.0_f64;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    for r in results {
        let (wb, wl) = r?;
        let expected = ml as f64 * wb;
        max_dev = max_dev.max((wl - expected).abs() / expected.abs().max(f64::MIN_POSITIVE));
        if wb != 0.0 {
            let ratio = wl / wb;
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
        }
    }
    Ok(ScalingReport {
        ml,
        points_checked: grid.len(),
        max_relative_deviation: max_dev,
        min_ratio,
        max_ratio,
        tolerance: SCALING_TOL,
        pass: max_dev <= SCALING_TOL,
    })
}

/// A C^2 cutoff: 1 on `[0, r0]`, 0 on `[r1, inf)`, quintic smoothstep in
/// between.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BumpFunction {
    pub r0: f64,
    pub r1: f64,
}

impl BumpFunction {
    pub fn new(r0: f64, r1: f64) -> Result<Self, CoverError> {
        if !(0.0 < r0 && r0 < r1) {
            return Err(CoverError::BadBumpRadii { r0, r1 });
        }
        Ok(BumpFunction { r0, r1 })
    }

    pub fn value(&self, u: f64) -> f64 {
        Jet2::constant(u).bump(self.r0, self.r1).v
    }

    /// Value with first and second derivatives.
    pub fn jet(&self, u: f64) -> (f64, f64, f64) {
        let j = Jet2::coord(u, 0).bump(self.r0, self.r1);
        (j.v, j.g[0], j.h[0][0])
    }

    /// The cutoff as a scalar field of the given expression (usually rho).
    pub fn field_of(&self, arg: &ScalarField) -> ScalarField {
        arg.bump_of(self.r0, self.r1)
    }
}

/// Margins and verdict of a perturbation construction.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    /// Neighborhood / strength parameters the construction used.
    pub bump_r0: f64,
    pub bump_r1: f64,
    pub epsilon_requested: Option<f64>,
    /// Largest tested epsilon with positive margin (bump perturbation only).
    pub epsilon_admissible: Option<f64>,
    /// Min of the prefactor g over the verification grid.
    pub min_g: Option<f64>,
    /// Min of the Reeb phi-component numerator `2 g + rho g_rho`.
    pub min_reeb_numerator: Option<f64>,
    /// Min of the rho-normalized wedge coefficient.
    pub min_wedge_margin: f64,
    /// Sup over theta of `|g(rho,theta,phi) - g(rho,0,phi)|` for rho <= r0.
    pub equivariance_defect: Option<f64>,
    pub tolerance: f64,
    pub valid: bool,
}

/// Output of [`equivariant_perturbation`].
#[derive(Debug, Clone)]
pub struct EquivariantPerturbation {
    /// The theta-equivariant prefactor `g = f0 + (1 - chi) fbar`.
    pub g: ScalarField,
    /// `beta = g (d phi + rho^2 d theta)`.
    pub beta: OneForm,
    pub report: PerturbationReport,
}

const PERTURBATION_GRID: [usize; 3] = [24, 16, 8];
const PERTURBATION_TOL: f64 = 1e-9;

/// Remove the theta-dependence of a positive prefactor `f(rho, theta, phi)`
/// of the tube form near the axis: split `f = f0(rho, phi) + fbar` with
/// `fbar = O(rho)`, where
/// `f0 = f(0, 0, phi) + rho * mean_theta(d f / d rho at rho = 0)`,
/// and blend with the bump: `g = f0 + (1 - chi(rho)) fbar`.
///
/// The report verifies `g > 0`, the no-contractible-orbit numerator
/// `2 g + rho g_rho > 0`, the contact margin of `beta`, and exact
/// theta-independence of `g` on the equivariance zone `rho <= r0`.
pub fn equivariant_perturbation(
    f: &ScalarField,
    chi: &BumpFunction,
    chart: Arc<Chart>,
) -> Result<EquivariantPerturbation, CoverError> {
    let theta_period = chart.period(1).unwrap_or(2.0 * PI);
    let f_axis = f
        .compose(&[
            ScalarField::zero(),
            ScalarField::zero(),
            ScalarField::coord(2),
        ])
        .map_err(CoverError::Eval)?;
    let df_drho = f.diff(0).map_err(CoverError::Eval)?;
    let radial_mean = df_drho.axis_theta_average(theta_period);
    let f0 = f_axis + ScalarField::coord(0) * radial_mean;
    let fbar = f.clone() - f0.clone();
    let one_minus_chi = ScalarField::one() - chi.field_of(&ScalarField::coord(0));
    let g = f0 + one_minus_chi * fbar;

    let rho2 = ScalarField::coord(0).powi(2);
    let beta = OneForm::new(
        chart.clone(),
        [
            ScalarField::zero(),
            g.clone() * rho2,
            g.clone(),
        ],
    );

    // Margins over the tube.
    let grid = GridSpec::from_chart(&chart, PERTURBATION_GRID);
    let mut min_g = f64::INFINITY;
    let mut min_num = f64::INFINITY;
    let mut min_wedge = f64::INFINITY;
    for p in grid.points() {
        let jet = g.jet(p).map_err(CoverError::Eval)?;
        min_g = min_g.min(jet.v);
        min_num = min_num.min(2.0 * jet.v + p[0] * jet.g[0]);
        let w = beta.wedge_self_d(p).map_err(CoverError::Eval)?;
        min_wedge = min_wedge.min(w / p[0]);
    }

    // Equivariance zone: g must be exactly theta-independent for rho <= r0.
    let mut defect = 0.0_f64;
    let n_rho = 8;
    for i in 0..n_rho {
        let rho = chi.r0 * (i as f64 + 0.5) / (n_rho as f64);
        for jphi in 0..8 {
            let phi = 2.0 * PI * (jphi as f64) / 8.0;
            let base = g.eval([rho, 0.0, phi]).map_err(CoverError::Eval)?;
            for jth in 1..16 {
                let theta = theta_period * (jth as f64) / 16.0;
                let v = g.eval([rho, theta, phi]).map_err(CoverError::Eval)?;
                defect = defect.max((v - base).abs());
            }
        }
    }

    let valid = min_g > PERTURBATION_TOL
        && min_num > PERTURBATION_TOL
        && min_wedge > PERTURBATION_TOL
        && defect == 0.0;
    let report = PerturbationReport {
        bump_r0: chi.r0,
        bump_r1: chi.r1,
        epsilon_requested: None,
        epsilon_admissible: None,
        min_g: Some(min_g),
        min_reeb_numerator: Some(min_num),
        min_wedge_margin: min_wedge,
        equivariance_defect: Some(defect),
        tolerance: PERTURBATION_TOL,
        valid,
    };
    Ok(EquivariantPerturbation { g, beta, report })
}

/// Margin tolerance of the epsilon bisection.
pub const EPSILON_MARGIN_TOL: f64 = 1e-8;
const EPSILON_BISECTION_STEPS: usize = 20;

/// Restore the contact condition of a branch-map pullback that degenerates
/// at the axis: `abar = beta + epsilon u(rho) rho^2 d theta`.
///
/// Bisects downward from the requested epsilon (20 steps) and returns the
/// form at the largest tested epsilon whose rho-normalized wedge margin
/// stays positive on a grid including an axis collar. No admissible epsilon
/// yields an invalid report, not an error.
pub fn hyperbolic_perturbation(
    beta: &OneForm,
    u: &BumpFunction,
    epsilon: f64,
) -> Result<(OneForm, PerturbationReport), CoverError> {
    let chart = beta.chart().clone();
    let perturbed = |eps: f64| -> OneForm {
        let extra = ScalarField::constant(eps)
            * u.field_of(&ScalarField::coord(0))
            * ScalarField::coord(0).powi(2);
        OneForm::new(
            chart.clone(),
            [
                beta.coeffs()[0].clone(),
                beta.coeffs()[1].clone() + extra,
                beta.coeffs()[2].clone(),
            ],
        )
    };

    let margin = |form: &OneForm| -> Result<f64, CoverError> {
        let grid = GridSpec::from_chart(&chart, PERTURBATION_GRID);
        let mut m = f64::INFINITY;
        for p in grid.points() {
            let w = form.wedge_self_d(p).map_err(CoverError::Eval)?;
            let norm = chart.radial().map(|r| p[r.coord]).unwrap_or(1.0);
            m = m.min(w / norm);
        }
        if let Some(r) = chart.radial() {
            // Geometric rho -> 0 collar catches axis degeneracy.
            m = m.min(
                axis_collar_margin(form, r.coord, r.rho_max).map_err(CoverError::Eval)?,
            );
        }
        Ok(m)
    };

    let mut admissible: Option<(f64, f64)> = None; // (epsilon, margin)
    let top_margin = margin(&perturbed(epsilon))?;
    if top_margin > EPSILON_MARGIN_TOL {
        admissible = Some((epsilon, top_margin));
    } else if epsilon > 0.0 {
        // Bisect for the largest valid epsilon below the requested one.
        let (mut lo, mut hi) = (0.0_f64, epsilon);
        for _ in 0..EPSILON_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let m = margin(&perturbed(mid))?;
            if m > EPSILON_MARGIN_TOL {
                if admissible.map_or(true, |(e, _)| mid > e) {
                    admissible = Some((mid, m));
                }
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    let (eps_star, final_margin) = match admissible {
        Some((e, m)) => (Some(e), m),
        None => (None, top_margin),
    };
    let form = perturbed(eps_star.unwrap_or(0.0));
    let report = PerturbationReport {
        bump_r0: u.r0,
        bump_r1: u.r1,
        epsilon_requested: Some(epsilon),
        epsilon_admissible: eps_star,
        min_g: None,
        min_reeb_numerator: None,
        min_wedge_margin: final_margin,
        equivariance_defect: None,
        tolerance: EPSILON_MARGIN_TOL,
        valid: eps_star.is_some(),
    };
    Ok((form, report))
}

/// Diagonal of the Smith normal form of a small integer matrix
/// (non-negative entries, each dividing the next).
pub fn smith_diagonal(mat: &[Vec<i128>]) -> Vec<i128> {
    let rows = mat.len();
    let cols = if rows == 0 { 0 } else { mat[0].len() };
    let mut a: Vec<Vec<i128>> = mat.to_vec();
    let n = rows.min(cols);
    let mut diag = Vec::with_capacity(n);
    let mut top = 0usize;
    while top < n {
        // Find a nonzero pivot at or below/right of (top, top).
        let mut pivot = None;
        'outer: for i in top..rows {
            for j in top..cols {
                if a[i][j] != 0 {
                    pivot = Some((i, j));
                    break 'outer;
                }
            }
        }
        let Some((pi, pj)) = pivot else {
            break;
        };
        a.swap(top, pi);
        for row in a.iter_mut() {
            row.swap(top, pj);
        }
        // Clear the pivot row and column by gcd reduction.
        loop {
            let mut changed = false;
            for i in (top + 1)..rows {
                while a[i][top] != 0 {
                    let q = a[i][top] / a[top][top];
                    for j in top..cols {
                        a[i][j] -= q * a[top][j];
                    }
                    if a[i][top] != 0 {
                        a.swap(top, i);
                        changed = true;
                    }
                }
            }
            for j in (top + 1)..cols {
                while a[top][j] != 0 {
                    let q = a[top][j] / a[top][top];
                    for row in a.iter_mut().skip(top) {
                        row[j] -= q * row[top];
                    }
                    if a[top][j] != 0 {
                        for row in a.iter_mut() {
                            row.swap(top, j);
                        }
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        diag.push(a[top][top].abs());
        top += 1;
    }
    while diag.len() < n {
        diag.push(0);
    }
    // Enforce the divisibility chain d1 | d2 | ... .
    for i in 0..diag.len() {
        for j in (i + 1)..diag.len() {
            if diag[i] != 0 && diag[j] % diag[i] != 0 || diag[i] == 0 && diag[j] != 0 {
                let g = num_integer::gcd(diag[i], diag[j]);
                let l = if g == 0 { 0 } else { diag[i] / g * diag[j] };
                diag[i] = g;
                diag[j] = l;
            }
        }
    }
    diag
}

/// `|H1|` of the genus-one gluing with matrix `g`: order of the cokernel of
/// the presentation `[mu_1 | G mu_2]`; `None` when infinite.
pub fn h1_order_from_gluing(g: &[[i64; 2]; 2]) -> Option<u64> {
    let presentation = vec![
        vec![1i128, g[0][0] as i128],
        vec![0i128, g[1][0] as i128],
    ];
    let diag = smith_diagonal(&presentation);
    let mut order: u64 = 1;
    for d in diag {
        if d == 0 {
            return None;
        }
        order *= d as u64;
    }
    Some(order)
}

/// Branched cover of a lens space over the two Heegaard cores with per-core
/// covering data. The composed gluing matrix `P1^-1 G P2` must be integral
/// and unimodular ("meridian degrees divide consistently"); the resulting
/// `L(p', q')` is validated against the Smith-normal-form homology order.
pub fn lens_branched_cover(
    space: &LensSpace,
    b1: &BranchData,
    b2: &BranchData,
) -> Result<LensSpace, CoverError> {
    let g = heegaard_matrix(space)
        .map_err(|e| CoverError::BadBranchData(format!("base space: {e}")))?;
    let g = [
        [g[0][0] as i128, g[0][1] as i128],
        [g[1][0] as i128, g[1][1] as i128],
    ];
    let p1 = b1.boundary_matrix();
    let p2 = b2.boundary_matrix();
    // adj(P1) . G . P2, then divide by det(P1) = m1 l1.
    let adj1 = [[p1[1][1] as i128, -(p1[0][1] as i128)], [0, p1[0][0] as i128]];
    let det1 = (p1[0][0] * p1[1][1]) as i128;
    let mut num = [[0i128; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    num[i][j] += adj1[i][a] * g[a][b] * (p2[b][j] as i128);
                }
            }
        }
    }
    let mut composed = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            if num[i][j] % det1 != 0 {
                return Err(CoverError::IncompatibleBranching);
            }
            composed[i][j] = (num[i][j] / det1) as i64;
        }
    }
    let det = composed[0][0] * composed[1][1] - composed[0][1] * composed[1][0];
    if det.abs() != 1 {
        return Err(CoverError::IncompatibleBranching);
    }

    // Read off L(p', q') in the same convention as `heegaard_matrix`.
    let c = composed[1][0];
    let cover = if c == 0 {
        LensSpace::new(0, 1)
    } else if c < 0 {
        LensSpace::new(-c, composed[0][0])
    } else {
        LensSpace::new(c, -composed[0][0])
    }
    .map_err(|e| CoverError::BadBranchData(format!("cover read-off: {e}")))?;

    // Independent homology order from the presentation matrix.
    let h1 = h1_order_from_gluing(&composed);
    if h1 != cover.h1_order() {
        return Err(CoverError::HomologyMismatch {
            from_matrix: format!("{:?}", cover.h1_order()),
            from_presentation: format!("{h1:?}"),
        });
    }
    Ok(cover)
}
