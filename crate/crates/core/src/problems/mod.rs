//! Bilevel minimax problems: the oracle interface, projection and the
//! finite-difference gradient audit.

mod quadratic;
mod reweight;

pub use quadratic::{QuadraticBmo, QuadraticConfig, QuadraticMatrices};
pub use reweight::{ReweightBmo, ReweightConfig};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantsRegistry;
use crate::data::{Sample, SampleSource};
use crate::error::Result;
use crate::rng::{derived_rng, Stream, StreamRng};
use crate::triple::{Dims, ParamTriple};

/// Ball radii `(R_x, R_y, R_z)` for the projected domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Radii {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Radii {
    pub fn uniform(r: f64) -> Self {
        Self { x: r, y: r, z: r }
    }

    /// Radius of the smallest ball containing the product domain.
    pub fn joint(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Oracle interface of `min_x E f(x, y*, z*; xi)` subject to
/// `(y*, z*) = argmin_y argmax_z E g(x, y, z; zeta)`.
///
/// Gradients are returned as a [`ParamTriple`] holding the three partials.
pub trait BmoProblem: SampleSource + Send + Sync {
    fn name(&self) -> &'static str;
    /// How samples are drawn, for reports.
    fn noise_model(&self) -> &'static str;
    fn dims(&self) -> Dims;
    /// Lengths of upper (`xi`) and lower (`zeta`) samples.
    fn sample_dims(&self) -> (usize, usize);
    fn upper_loss(&self, w: &ParamTriple, xi: &Sample) -> f64;
    fn lower_loss(&self, w: &ParamTriple, zeta: &Sample) -> f64;
    fn upper_grad(&self, w: &ParamTriple, xi: &Sample) -> ParamTriple;
    fn lower_grad(&self, w: &ParamTriple, zeta: &Sample) -> ParamTriple;
    fn radii(&self) -> Option<Radii>;
    fn constants(&self) -> &ConstantsRegistry;
    /// Whether `f >= 0` everywhere.
    fn upper_nonnegative(&self) -> bool;
    /// Closed-form oracles, for problems that have them.
    fn analytic(&self) -> Option<&dyn AnalyticBmo> {
        None
    }
}

/// Closed-form quantities available on analytically solvable problems.
pub trait AnalyticBmo: Sync {
    /// Exact lower-level saddle of the training-set lower loss at `x`.
    fn analytic_saddle(&self, x: &DVector<f64>, training: &[Sample]) -> Result<(DVector<f64>, DVector<f64>)>;

    /// Implicit hypergradient `grad_x f + Jy^T grad_y f + Jz^T grad_z f`
    /// at `w`, with the saddle Jacobians of the lower problem.
    fn implicit_hypergradient(&self, w: &ParamTriple, xi: &Sample) -> DVector<f64>;

    /// Value and hypergradient of `x -> mean_{xi in upper} f(x, y*(x), z*(x); xi)`.
    fn upper_objective(
        &self,
        x: &DVector<f64>,
        training: &[Sample],
        upper: &[Sample],
    ) -> Result<(f64, DVector<f64>)>;

    /// `x -> E_xi f(x, y*(x), z*(x); xi)` with the saddle on `training`.
    fn population_objective(&self, x: &DVector<f64>, training: &[Sample]) -> Result<f64>;

    /// `E_xi f(w; xi)` at a fixed triple.
    fn population_risk(&self, w: &ParamTriple) -> f64;

    /// Minimizer of [`AnalyticBmo::upper_objective`] over the `x` domain.
    fn empirical_minimizer(&self, training: &[Sample], upper: &[Sample]) -> Result<DVector<f64>>;

    /// Minimizer of [`AnalyticBmo::population_objective`] over the `x` domain.
    fn population_minimizer(&self, training: &[Sample]) -> Result<DVector<f64>>;
}

/// Radial projection of `u` onto the ball of radius `r`.
///
/// The scale is nudged down until the result lies inside the closed ball,
/// so a second projection leaves it untouched bit for bit.
pub fn project_ball(u: &mut DVector<f64>, r: f64) {
    let n = u.norm();
    if n <= r {
        return;
    }
    let orig = u.clone();
    let mut s = r / n;
    loop {
        *u = &orig * s;
        if u.norm() <= r {
            return;
        }
        s *= 1.0 - f64::EPSILON;
    }
}

/// Blockwise projection onto the declared balls; identity without radii.
pub fn project(radii: Option<Radii>, w: &ParamTriple) -> ParamTriple {
    let mut out = w.clone();
    if let Some(r) = radii {
        project_ball(&mut out.x, r.x);
        project_ball(&mut out.y, r.y);
        project_ball(&mut out.z, r.z);
    }
    out
}

/// Pulls `v` back inside a ball of radius `r` (used to bound sample noise).
pub(crate) fn clamp_norm(mut v: DVector<f64>, r: f64) -> DVector<f64> {
    project_ball(&mut v, r);
    v
}

pub(crate) fn standard_normal_vec(rng: &mut StreamRng, n: usize) -> DVector<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Names of the six partial gradients, in audit order.
pub const PARTIAL_NAMES: [&str; 6] = [
    "grad_x f", "grad_y f", "grad_z f", "grad_x g", "grad_y g", "grad_z g",
];

/// A partial gradient that disagrees with finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditFailure {
    pub partial: &'static str,
    pub trial: usize,
    pub rel_error: f64,
    pub point: ParamTriple,
}

impl std::fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} disagrees with finite differences (relative error {:e}) at trial {}, point x={:?} y={:?} z={:?}",
            self.partial,
            self.rel_error,
            self.trial,
            self.point.x.as_slice(),
            self.point.y.as_slice(),
            self.point.z.as_slice()
        )
    }
}

impl std::error::Error for AuditFailure {}

/// Largest sampled secant ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmpiricalModuli {
    pub lip_f: f64,
    pub lip_g: f64,
    pub smooth_f: f64,
    pub smooth_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub trials: usize,
    /// Worst relative error seen for each entry of [`PARTIAL_NAMES`].
    pub max_rel_error: [f64; 6],
    pub empirical: EmpiricalModuli,
    /// Registered moduli exceeded by more than 1%, e.g. `"L_g: 3.1 > 3.0"`.
    pub exceedances: Vec<String>,
}

/// Relative tolerance for the finite-difference comparison.
pub const AUDIT_REL_TOL: f64 = 1e-5;
const AUDIT_FLOOR: f64 = 1e-6;

fn random_point(radii: Option<Radii>, dims: Dims, rng: &mut StreamRng) -> ParamTriple {
    use rand::Rng;
    let mut block = |d: usize, r: Option<f64>| {
        let mut v = standard_normal_vec(rng, d);
        match r {
            Some(r) => {
                let n = v.norm();
                if n > 0.0 {
                    let frac: f64 = rng.random::<f64>().powf(1.0 / d.max(1) as f64);
                    v *= r * frac / n;
                }
                v
            }
            None => v * 2.0,
        }
    };
    ParamTriple::new(
        block(dims.dx, radii.map(|r| r.x)),
        block(dims.dy, radii.map(|r| r.y)),
        block(dims.dz, radii.map(|r| r.z)),
    )
}

fn central_difference<F: Fn(&ParamTriple) -> f64>(loss: F, w: &ParamTriple, h: f64) -> ParamTriple {
    let dims = w.dims();
    let base = w.to_stacked();
    let mut out = DVector::zeros(dims.total());
    for j in 0..dims.total() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[j] += h;
        minus[j] -= h;
        let fp = loss(&ParamTriple::from_stacked(&plus, dims));
        let fm = loss(&ParamTriple::from_stacked(&minus, dims));
        out[j] = (fp - fm) / (2.0 * h);
    }
    ParamTriple::from_stacked(&out, dims)
}

fn rel_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let denom = a.norm().max(b.norm()).max(AUDIT_FLOOR);
    (a - b).norm() / denom
}

/// Checks every partial gradient of `p` against central finite differences
/// at `trials` random points inside the projection radii, and records the
/// largest sampled Lipschitz and smoothness secant ratios.
#[allow(clippy::result_large_err)]
pub fn gradient_audit<P: BmoProblem + ?Sized>(
    p: &P,
    trials: usize,
    seed: u64,
) -> std::result::Result<AuditReport, AuditFailure> {
    assert!(trials >= 1, "gradient_audit needs at least one trial");
    let dims = p.dims();
    let mut rng = derived_rng(seed, Stream::Audit, &[0]);
    let mut max_rel = [0.0f64; 6];
    for trial in 0..trials {
        let w = random_point(p.radii(), dims, &mut rng);
        let xi = p.draw_upper(&mut rng);
        let zeta = p.draw_lower(&mut rng);
        let h = 1e-6 * (1.0 + w.norm());
        let gf = p.upper_grad(&w, &xi);
        let gg = p.lower_grad(&w, &zeta);
        let nf = central_difference(|v| p.upper_loss(v, &xi), &w, h);
        let ng = central_difference(|v| p.lower_loss(v, &zeta), &w, h);
        let pairs = [
            (&gf.x, &nf.x),
            (&gf.y, &nf.y),
            (&gf.z, &nf.z),
            (&gg.x, &ng.x),
            (&gg.y, &ng.y),
            (&gg.z, &ng.z),
        ];
        for (k, (a, b)) in pairs.into_iter().enumerate() {
            let e = rel_error(a, b);
            max_rel[k] = max_rel[k].max(e);
            if !(e <= AUDIT_REL_TOL) {
                return Err(AuditFailure {
                    partial: PARTIAL_NAMES[k],
                    trial,
                    rel_error: e,
                    point: w,
                });
            }
        }
    }
    let (empirical, exceedances) = secant_audit(p, trials, seed);
    Ok(AuditReport {
        trials,
        max_rel_error: max_rel,
        empirical,
        exceedances,
    })
}

/// Samples secant ratios `|f(a)-f(b)|/|a-b|` and `|grad f(a) - grad f(b)|/|a-b|`
/// (and the same for `g`) over `pairs` random pairs inside the radii. Half of
/// the pairs are short-range so the ratios approach local gradient and
/// Hessian norms. Returns the maxima and any registered modulus exceeded by
/// more than 1%. Without radii the check is skipped.
pub fn secant_audit<P: BmoProblem + ?Sized>(p: &P, pairs: usize, seed: u64) -> (EmpiricalModuli, Vec<String>) {
    let mut m = EmpiricalModuli::default();
    let Some(radii) = p.radii() else {
        return (m, Vec::new());
    };
    let dims = p.dims();
    let mut rng = derived_rng(seed, Stream::Audit, &[1]);
    for k in 0..pairs {
        let a = random_point(Some(radii), dims, &mut rng);
        let b = if k % 2 == 0 {
            random_point(Some(radii), dims, &mut rng)
        } else {
            let step = standard_normal_vec(&mut rng, dims.total()) * 1e-3;
            let moved = ParamTriple::from_stacked(&(a.to_stacked() + step), dims);
            project(Some(radii), &moved)
        };
        let dist = crate::triple::triple_distance(&a, &b).expect("same dims");
        if dist == 0.0 {
            continue;
        }
        let xi = p.draw_upper(&mut rng);
        let zeta = p.draw_lower(&mut rng);
        m.lip_f = m.lip_f.max((p.upper_loss(&a, &xi) - p.upper_loss(&b, &xi)).abs() / dist);
        m.lip_g = m.lip_g.max((p.lower_loss(&a, &zeta) - p.lower_loss(&b, &zeta)).abs() / dist);
        let df = p.upper_grad(&a, &xi).to_stacked() - p.upper_grad(&b, &xi).to_stacked();
        let dg = p.lower_grad(&a, &zeta).to_stacked() - p.lower_grad(&b, &zeta).to_stacked();
        m.smooth_f = m.smooth_f.max(df.norm() / dist);
        m.smooth_g = m.smooth_g.max(dg.norm() / dist);
    }
    let c = p.constants();
    let mut exceed = Vec::new();
    for (name, seen, reg) in [
        ("l_f", m.lip_f, c.lip_f),
        ("l_g", m.lip_g, c.lip_g),
        ("L_f", m.smooth_f, c.smooth_f),
        ("L_g", m.smooth_g, c.smooth_g),
    ] {
        if let Some(reg) = reg {
            if seen > reg * 1.01 {
                exceed.push(format!("{name}: {seen} > {reg}"));
            }
        }
    }
    (m, exceed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interior_point_unchanged() {
        let w = ParamTriple::from_slices(&[0.5, 0.5], &[1.0], &[0.0]);
        let p = project(Some(Radii::uniform(2.0)), &w);
        assert!(p.bitwise_eq(&w));
    }

    #[test]
    fn radial_scaling() {
        let w = ParamTriple::from_slices(&[6.0, 8.0], &[0.0], &[0.0]);
        let p = project(Some(Radii { x: 5.0, y: 1.0, z: 1.0 }), &w);
        assert!((p.x.norm() - 5.0).abs() < 1e-12);
        assert!(p.x.norm() <= 5.0);
        assert!((p.x[0] / p.x[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn no_radii_is_identity() {
        let w = ParamTriple::from_slices(&[600.0], &[1e9], &[-3.0]);
        assert!(project(None, &w).bitwise_eq(&w));
    }

    proptest! {
        #[test]
        fn projection_idempotent(
            x in prop::collection::vec(-100.0..100.0f64, 3),
            y in prop::collection::vec(-100.0..100.0f64, 2),
            z in prop::collection::vec(-100.0..100.0f64, 4),
            r in 0.01..50.0f64,
        ) {
            let w = ParamTriple::from_slices(&x, &y, &z);
            let radii = Some(Radii { x: r, y: r * 0.5, z: r * 2.0 });
            let once = project(radii, &w);
            let twice = project(radii, &once);
            prop_assert!(once.bitwise_eq(&twice));
            prop_assert!(once.x.norm() <= r);
        }
    }
}
