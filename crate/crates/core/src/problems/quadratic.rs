//! Quadratic bilevel minimax problem with closed-form saddle points.
//!
//! Lower level, per sample `zeta = (zeta1, zeta2)`:
//!
//! ```text
//! g = 1/2 y'Ay - 1/2 z'Bz + y'Cz + y'(Px + zeta1) + z'(Qx + zeta2)
//! ```
//!
//! Upper level, per sample `xi`:
//!
//! ```text
//! f = 1/2 |y - (Mx + xi)|^2 + 1/2 |z|^2 + lambda/2 |x|^2
//! ```
//!
//! Samples are `mean + sigma * eps` with `eps` standard normal, radially
//! clamped to norm `sqrt(d) + 8`. The clamp binds with probability below
//! `1e-13`; it exists so that the registered Lipschitz moduli are true
//! bounds on the projected domain.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{clamp_norm, standard_normal_vec, AnalyticBmo, BmoProblem, Radii};
use crate::constants::ConstantsRegistry;
use crate::data::{Sample, SampleSource};
use crate::error::{invalid, BimaxError, Result};
use crate::rng::{derived_rng, Stream, StreamRng};
use crate::triple::{Dims, ParamTriple};

const NOISE_CLAMP_MARGIN: f64 = 8.0;

/// Explicit problem matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticMatrices {
    /// `d_y x d_y`, symmetric positive definite.
    pub a: Vec<Vec<f64>>,
    /// `d_z x d_z`, symmetric positive definite.
    pub b: Vec<Vec<f64>>,
    /// `d_y x d_z`.
    pub c: Vec<Vec<f64>>,
    /// `d_y x d_x`.
    pub p: Vec<Vec<f64>>,
    /// `d_z x d_x`.
    pub q: Vec<Vec<f64>>,
    /// `d_y x d_x`.
    pub m: Vec<Vec<f64>>,
    /// Mean of `xi`, length `d_y`.
    pub xi_mean: Vec<f64>,
    /// Mean of `zeta`, length `d_y + d_z`.
    pub zeta_mean: Vec<f64>,
}

/// Construction parameters. Matrices are either drawn from `seed` or
/// supplied inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadraticConfig {
    pub dx: usize,
    pub dy: usize,
    pub dz: usize,
    pub seed: u64,
    pub lambda: f64,
    pub sigma_xi: f64,
    pub sigma_zeta: f64,
    /// Scale of the random `C` coupling block.
    pub coupling: f64,
    /// Scale of the random means of `xi` and `zeta`.
    pub mean_scale: f64,
    pub radii: Option<Radii>,
    pub matrices: Option<QuadraticMatrices>,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        Self {
            dx: 5,
            dy: 5,
            dz: 5,
            seed: 11,
            lambda: 0.1,
            sigma_xi: 1.0,
            sigma_zeta: 1.0,
            coupling: 0.5,
            mean_scale: 1.0,
            radii: Some(Radii::uniform(10.0)),
            matrices: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticBmo {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    m: DMatrix<f64>,
    lambda: f64,
    sigma_xi: f64,
    sigma_zeta: f64,
    xi_mean: DVector<f64>,
    zeta_mean: DVector<f64>,
    radii: Option<Radii>,
    constants: ConstantsRegistry,
    /// `[A, C; -C', B]`
    kkt: DMatrix<f64>,
    kkt_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// `d(y*, z*)/dx`, `(d_y + d_z) x d_x`.
    jac: DMatrix<f64>,
    dims: Dims,
}

fn to_matrix(name: &'static str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(invalid(name, format!("expected a {r}x{c} nested array")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn sym_min_eig(name: &'static str, m: &DMatrix<f64>) -> Result<f64> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(invalid(name, "matrix is not symmetric"));
    }
    let e = SymmetricEigen::new(m.clone()).eigenvalues.min();
    if !(e > 0.0) {
        return Err(BimaxError::NotPositiveDefinite { name, min_eig: e });
    }
    Ok(e)
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    spectral_norm_sym(&(m.transpose() * m)).sqrt()
}

fn mean_of(samples: &[Sample], dim: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(dim);
    for s in samples {
        acc += s;
    }
    acc / samples.len().max(1) as f64
}

impl QuadraticBmo {
    pub fn new(cfg: &QuadraticConfig) -> Result<Self> {
        let (dx, dy, dz) = (cfg.dx, cfg.dy, cfg.dz);
        if dy == 0 || dz == 0 {
            return Err(invalid("dims", "d_y and d_z must be >= 1"));
        }
        for (name, v) in [
            ("lambda", cfg.lambda),
            ("sigma_xi", cfg.sigma_xi),
            ("sigma_zeta", cfg.sigma_zeta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if let Some(r) = cfg.radii {
            for (name, v) in [("radii.x", r.x), ("radii.y", r.y), ("radii.z", r.z)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(name, format!("must be finite and > 0, got {v}")));
                }
            }
        }
        let (a, b, c, p, q, m, xi_mean, zeta_mean) = match &cfg.matrices {
            Some(mx) => {
                if mx.xi_mean.len() != dy || mx.zeta_mean.len() != dy + dz {
                    return Err(invalid("matrices", "mean vectors have the wrong length"));
                }
                (
                    to_matrix("A", &mx.a, dy, dy)?,
                    to_matrix("B", &mx.b, dz, dz)?,
                    to_matrix("C", &mx.c, dy, dz)?,
                    to_matrix("P", &mx.p, dy, dx)?,
                    to_matrix("Q", &mx.q, dz, dx)?,
                    to_matrix("M", &mx.m, dy, dx)?,
                    DVector::from_column_slice(&mx.xi_mean),
                    DVector::from_column_slice(&mx.zeta_mean),
                )
            }
            None => Self::random_matrices(cfg),
        };
        Self::from_matrices(a, b, c, p, q, m, xi_mean, zeta_mean, cfg)
    }

    #[allow(clippy::type_complexity)]
    fn random_matrices(
        cfg: &QuadraticConfig,
    ) -> (
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DVector<f64>,
        DVector<f64>,
    ) {
        let (dx, dy, dz) = (cfg.dx, cfg.dy, cfg.dz);
        let mut rng = derived_rng(cfg.seed, Stream::Instance, &[]);
        let mut gauss = |r: usize, c: usize| {
            let v = standard_normal_vec(&mut rng, r * c);
            DMatrix::from_column_slice(r, c, v.as_slice())
        };
        let ga = gauss(dy, dy);
        let gb = gauss(dz, dz);
        let a = DMatrix::identity(dy, dy) + &ga * ga.transpose() * (0.5 / dy as f64);
        let b = DMatrix::identity(dz, dz) + &gb * gb.transpose() * (0.5 / dz as f64);
        let c = gauss(dy, dz) * (cfg.coupling / (dy.max(dz) as f64).sqrt());
        let sx = 1.0 / (dx.max(1) as f64).sqrt();
        let p = gauss(dy, dx) * sx;
        let q = gauss(dz, dx) * sx;
        let m = gauss(dy, dx) * sx;
        let xi_mean = gauss(dy, 1).column(0) * cfg.mean_scale;
        let zeta_mean = gauss(dy + dz, 1).column(0) * cfg.mean_scale;
        (a, b, c, p, q, m, xi_mean, zeta_mean)
    }

    #[allow(clippy::too_many_arguments)]
    fn from_matrices(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        m: DMatrix<f64>,
        xi_mean: DVector<f64>,
        zeta_mean: DVector<f64>,
        cfg: &QuadraticConfig,
    ) -> Result<Self> {
        let (dx, dy, dz) = (cfg.dx, cfg.dy, cfg.dz);
        sym_min_eig("A", &a)?;
        sym_min_eig("B", &b)?;
        let n = dy + dz;
        let mut kkt = DMatrix::zeros(n, n);
        kkt.view_mut((0, 0), (dy, dy)).copy_from(&a);
        kkt.view_mut((0, dy), (dy, dz)).copy_from(&c);
        kkt.view_mut((dy, 0), (dz, dy)).copy_from(&(-c.transpose()));
        kkt.view_mut((dy, dy), (dz, dz)).copy_from(&b);
        let kkt_lu = kkt.clone().lu();
        let mut forcing = DMatrix::zeros(n, dx);
        forcing.view_mut((0, 0), (dy, dx)).copy_from(&(-&p));
        forcing.view_mut((dy, 0), (dz, dx)).copy_from(&q);
        let jac = kkt_lu
            .solve(&forcing)
            .ok_or(BimaxError::Singular("saddle Jacobian"))?;

        let dims = Dims::new(dx, dy, dz);
        let mut out = Self {
            a,
            b,
            c,
            p,
            q,
            m,
            lambda: cfg.lambda,
            sigma_xi: cfg.sigma_xi,
            sigma_zeta: cfg.sigma_zeta,
            xi_mean,
            zeta_mean,
            radii: cfg.radii,
            constants: ConstantsRegistry::default(),
            kkt,
            kkt_lu,
            jac,
            dims,
        };
        out.constants = out.compute_constants()?;
        Ok(out)
    }

    /// Joint Hessian of `f` in stacked `(x, y, z)` order.
    pub fn upper_hessian(&self) -> DMatrix<f64> {
        let Dims { dx, dy, dz } = self.dims;
        let n = dx + dy + dz;
        let mut h = DMatrix::zeros(n, n);
        let mtm = self.m.transpose() * &self.m + DMatrix::identity(dx, dx) * self.lambda;
        h.view_mut((0, 0), (dx, dx)).copy_from(&mtm);
        h.view_mut((0, dx), (dx, dy)).copy_from(&(-self.m.transpose()));
        h.view_mut((dx, 0), (dy, dx)).copy_from(&(-&self.m));
        h.view_mut((dx, dx), (dy, dy)).fill_with_identity();
        h.view_mut((dx + dy, dx + dy), (dz, dz)).fill_with_identity();
        h
    }

    /// Joint Hessian of `g` in stacked `(x, y, z)` order.
    pub fn lower_hessian(&self) -> DMatrix<f64> {
        let Dims { dx, dy, dz } = self.dims;
        let n = dx + dy + dz;
        let mut h = DMatrix::zeros(n, n);
        h.view_mut((0, dx), (dx, dy)).copy_from(&self.p.transpose());
        h.view_mut((0, dx + dy), (dx, dz)).copy_from(&self.q.transpose());
        h.view_mut((dx, 0), (dy, dx)).copy_from(&self.p);
        h.view_mut((dx, dx), (dy, dy)).copy_from(&self.a);
        h.view_mut((dx, dx + dy), (dy, dz)).copy_from(&self.c);
        h.view_mut((dx + dy, 0), (dz, dx)).copy_from(&self.q);
        h.view_mut((dx + dy, dx), (dz, dy)).copy_from(&self.c.transpose());
        h.view_mut((dx + dy, dx + dy), (dz, dz)).copy_from(&(-&self.b));
        h
    }

    /// Largest norm a clamped `xi` can have.
    pub fn xi_bound(&self) -> f64 {
        self.xi_mean.norm() + self.sigma_xi * ((self.dims.dy as f64).sqrt() + NOISE_CLAMP_MARGIN)
    }

    /// Largest norm a clamped `zeta` can have.
    pub fn zeta_bound(&self) -> f64 {
        let d = (self.dims.dy + self.dims.dz) as f64;
        self.zeta_mean.norm() + self.sigma_zeta * (d.sqrt() + NOISE_CLAMP_MARGIN)
    }

    /// Gradients are affine, `grad = H w + b(sample)`, so on the product of
    /// balls `|grad| <= |H| R + max |b|` and the smoothness modulus is `|H|`.
    fn compute_constants(&self) -> Result<ConstantsRegistry> {
        let hf = spectral_norm_sym(&self.upper_hessian());
        let hg = spectral_norm_sym(&self.lower_hessian());
        let mut reg = ConstantsRegistry {
            smooth_f: Some(hf),
            smooth_g: Some(hg),
            ..Default::default()
        };
        if let Some(r) = self.radii {
            let rw = r.joint();
            let m_norm = spectral_norm(&self.m);
            reg.lip_f = Some(hf * rw + (m_norm * m_norm + 1.0).sqrt() * self.xi_bound());
            reg.lip_g = Some(hg * rw + self.zeta_bound());
        }
        reg.validate()?;
        Ok(reg)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_xi(&self) -> f64 {
        self.sigma_xi
    }

    pub fn xi_mean(&self) -> &DVector<f64> {
        &self.xi_mean
    }

    pub fn zeta_mean(&self) -> &DVector<f64> {
        &self.zeta_mean
    }

    /// The KKT matrix `[A, C; -C', B]`.
    pub fn kkt_matrix(&self) -> &DMatrix<f64> {
        &self.kkt
    }

    /// `d(y*, z*)/dx`.
    pub fn saddle_jacobian(&self) -> &DMatrix<f64> {
        &self.jac
    }

    /// Inline copy of every matrix, e.g. for echoing a seeded instance.
    pub fn matrices(&self) -> QuadraticMatrices {
        QuadraticMatrices {
            a: from_matrix(&self.a),
            b: from_matrix(&self.b),
            c: from_matrix(&self.c),
            p: from_matrix(&self.p),
            q: from_matrix(&self.q),
            m: from_matrix(&self.m),
            xi_mean: self.xi_mean.iter().copied().collect(),
            zeta_mean: self.zeta_mean.iter().copied().collect(),
        }
    }

    fn saddle_rhs(&self, x: &DVector<f64>, zeta_bar: &DVector<f64>) -> DVector<f64> {
        let Dims { dy, dz, .. } = self.dims;
        let mut rhs = DVector::zeros(dy + dz);
        rhs.rows_mut(0, dy)
            .copy_from(&(-(&self.p * x + zeta_bar.rows(0, dy))));
        rhs.rows_mut(dy, dz)
            .copy_from(&(&self.q * x + zeta_bar.rows(dy, dz)));
        rhs
    }

    /// Saddle of the lower loss averaged against a given `zeta` mean.
    pub fn saddle_for_mean(&self, x: &DVector<f64>, zeta_bar: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let Dims { dy, dz, .. } = self.dims;
        let rhs = self.saddle_rhs(x, zeta_bar);
        let mut sol = self
            .kkt_lu
            .solve(&rhs)
            .ok_or(BimaxError::Singular("saddle system"))?;
        // one step of iterative refinement
        let resid = &rhs - &self.kkt * &sol;
        if let Some(corr) = self.kkt_lu.solve(&resid) {
            sol += corr;
        }
        Ok((sol.rows(0, dy).into_owned(), sol.rows(dy, dz).into_owned()))
    }

    /// Relative first-order residual `|(grad_y G, grad_z G)| / scale` of the
    /// full-batch lower loss at `(x, y, z)`.
    pub fn saddle_residual(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, training: &[Sample]) -> f64 {
        let Dims { dy, dz, .. } = self.dims;
        let zb = mean_of(training, dy + dz);
        let rhs = self.saddle_rhs(x, &zb);
        let mut sol = DVector::zeros(dy + dz);
        sol.rows_mut(0, dy).copy_from(y);
        sol.rows_mut(dy, dz).copy_from(z);
        let lhs = &self.kkt * &sol;
        let scale = rhs.norm() + lhs.norm();
        if scale == 0.0 {
            return 0.0;
        }
        (lhs - rhs).norm() / scale
    }

    /// Value and hypergradient of the bilevel objective with the lower
    /// saddle taken against `zeta_bar`, the upper loss averaged over
    /// `upper` (or replaced by its expectation when `upper` is `None`).
    fn objective_with(
        &self,
        x: &DVector<f64>,
        zeta_bar: &DVector<f64>,
        upper: Option<&[Sample]>,
    ) -> Result<(f64, DVector<f64>)> {
        let Dims { dy, .. } = self.dims;
        let (ys, zs) = self.saddle_for_mean(x, zeta_bar)?;
        let mx = &self.m * x;
        let base = &ys - &mx;
        let (value_fit, xi_bar) = match upper {
            Some(set) => {
                let v = set
                    .iter()
                    .map(|xi| 0.5 * (&base - xi).norm_squared())
                    .sum::<f64>()
                    / set.len() as f64;
                (v, mean_of(set, dy))
            }
            None => {
                let v = 0.5 * (&base - &self.xi_mean).norm_squared()
                    + 0.5 * self.sigma_xi * self.sigma_xi * dy as f64;
                (v, self.xi_mean.clone())
            }
        };
        let value = value_fit + 0.5 * zs.norm_squared() + 0.5 * self.lambda * x.norm_squared();
        let w = ParamTriple::new(x.clone(), ys, zs);
        let grad = self.implicit_hypergradient(&w, &xi_bar);
        Ok((value, grad))
    }
}

impl SampleSource for QuadraticBmo {
    fn draw_upper(&self, rng: &mut StreamRng) -> Sample {
        let d = self.dims.dy;
        let eps = clamp_norm(standard_normal_vec(rng, d), (d as f64).sqrt() + NOISE_CLAMP_MARGIN);
        &self.xi_mean + eps * self.sigma_xi
    }

    fn draw_lower(&self, rng: &mut StreamRng) -> Sample {
        let d = self.dims.dy + self.dims.dz;
        let eps = clamp_norm(standard_normal_vec(rng, d), (d as f64).sqrt() + NOISE_CLAMP_MARGIN);
        &self.zeta_mean + eps * self.sigma_zeta
    }
}

impl BmoProblem for QuadraticBmo {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn noise_model(&self) -> &'static str {
        "mean + sigma * eps, eps ~ N(0, I) clamped to norm sqrt(d) + 8"
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn sample_dims(&self) -> (usize, usize) {
        (self.dims.dy, self.dims.dy + self.dims.dz)
    }

    fn upper_loss(&self, w: &ParamTriple, xi: &Sample) -> f64 {
        let r = &w.y - &self.m * &w.x - xi;
        0.5 * r.norm_squared() + 0.5 * w.z.norm_squared() + 0.5 * self.lambda * w.x.norm_squared()
    }

    fn lower_loss(&self, w: &ParamTriple, zeta: &Sample) -> f64 {
        let Dims { dy, dz, .. } = self.dims;
        let (y, z, x) = (&w.y, &w.z, &w.x);
        0.5 * y.dot(&(&self.a * y)) - 0.5 * z.dot(&(&self.b * z))
            + y.dot(&(&self.c * z))
            + y.dot(&(&self.p * x + zeta.rows(0, dy)))
            + z.dot(&(&self.q * x + zeta.rows(dy, dz)))
    }

    fn upper_grad(&self, w: &ParamTriple, xi: &Sample) -> ParamTriple {
        let r = &w.y - &self.m * &w.x - xi;
        ParamTriple::new(
            -(self.m.transpose() * &r) + &w.x * self.lambda,
            r,
            w.z.clone(),
        )
    }

    fn lower_grad(&self, w: &ParamTriple, zeta: &Sample) -> ParamTriple {
        let Dims { dy, dz, .. } = self.dims;
        let (y, z, x) = (&w.y, &w.z, &w.x);
        ParamTriple::new(
            self.p.transpose() * y + self.q.transpose() * z,
            &self.a * y + &self.c * z + &self.p * x + zeta.rows(0, dy),
            -(&self.b * z) + self.c.transpose() * y + &self.q * x + zeta.rows(dy, dz),
        )
    }

    fn radii(&self) -> Option<Radii> {
        self.radii
    }

    fn constants(&self) -> &ConstantsRegistry {
        &self.constants
    }

    fn upper_nonnegative(&self) -> bool {
        true
    }

    fn analytic(&self) -> Option<&dyn AnalyticBmo> {
        Some(self)
    }
}

impl AnalyticBmo for QuadraticBmo {
    fn analytic_saddle(&self, x: &DVector<f64>, training: &[Sample]) -> Result<(DVector<f64>, DVector<f64>)> {
        if x.len() != self.dims.dx {
            return Err(BimaxError::DimensionMismatch {
                what: "x",
                expected: self.dims.dx,
                got: x.len(),
            });
        }
        let zb = mean_of(training, self.dims.dy + self.dims.dz);
        self.saddle_for_mean(x, &zb)
    }

    fn implicit_hypergradient(&self, w: &ParamTriple, xi: &Sample) -> DVector<f64> {
        let Dims { dx, dy, dz } = self.dims;
        let g = self.upper_grad(w, xi);
        let jy = self.jac.view((0, 0), (dy, dx));
        let jz = self.jac.view((dy, 0), (dz, dx));
        g.x + jy.transpose() * g.y + jz.transpose() * g.z
    }

    fn upper_objective(
        &self,
        x: &DVector<f64>,
        training: &[Sample],
        upper: &[Sample],
    ) -> Result<(f64, DVector<f64>)> {
        if upper.is_empty() {
            return Err(invalid("upper", "sample set is empty"));
        }
        let zb = mean_of(training, self.dims.dy + self.dims.dz);
        self.objective_with(x, &zb, Some(upper))
    }

    fn population_objective(&self, x: &DVector<f64>, training: &[Sample]) -> Result<f64> {
        let zb = mean_of(training, self.dims.dy + self.dims.dz);
        Ok(self.objective_with(x, &zb, None)?.0)
    }

    fn population_risk(&self, w: &ParamTriple) -> f64 {
        let r = &w.y - &self.m * &w.x - &self.xi_mean;
        0.5 * r.norm_squared()
            + 0.5 * self.sigma_xi * self.sigma_xi * self.dims.dy as f64
            + 0.5 * w.z.norm_squared()
            + 0.5 * self.lambda * w.x.norm_squared()
    }

    fn empirical_minimizer(&self, training: &[Sample], upper: &[Sample]) -> Result<DVector<f64>> {
        let zb = mean_of(training, self.dims.dy + self.dims.dz);
        self.minimize(|x| self.objective_with(x, &zb, Some(upper)))
    }

    fn population_minimizer(&self, training: &[Sample]) -> Result<DVector<f64>> {
        let zb = mean_of(training, self.dims.dy + self.dims.dz);
        self.minimize(|x| self.objective_with(x, &zb, None))
    }
}

/// Gradient-norm target for the upper-level minimizers.
pub const MINIMIZER_GRAD_TOL: f64 = 1e-8;

impl QuadraticBmo {
    /// Hessian of the bilevel objective, `(Jy - M)'(Jy - M) + Jz'Jz + lambda I`.
    pub fn objective_hessian(&self) -> DMatrix<f64> {
        let Dims { dx, dy, dz } = self.dims;
        let jy = self.jac.view((0, 0), (dy, dx)).into_owned();
        let jz = self.jac.view((dy, 0), (dz, dx)).into_owned();
        let d = jy - &self.m;
        d.transpose() * &d + jz.transpose() * jz + DMatrix::identity(dx, dx) * self.lambda
    }

    /// Minimizes a convex quadratic objective over the `x` ball. Starts from
    /// the Newton point when the Hessian is positive definite and finishes
    /// with (projected) gradient descent with step `1/L` until the gradient
    /// (or projected-gradient residual) is at most [`MINIMIZER_GRAD_TOL`].
    fn minimize<F>(&self, obj: F) -> Result<DVector<f64>>
    where
        F: Fn(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
    {
        let dx = self.dims.dx;
        if dx == 0 {
            return Ok(DVector::zeros(0));
        }
        let h = self.objective_hessian();
        let lip = spectral_norm_sym(&h).max(f64::MIN_POSITIVE);
        let (_, g0) = obj(&DVector::zeros(dx))?;
        let mut x = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&g0),
            None => DVector::zeros(dx),
        };
        let rx = self.radii.map(|r| r.x);
        if let Some(r) = rx {
            super::project_ball(&mut x, r);
        }
        for _ in 0..1_000_000 {
            let (_, g) = obj(&x)?;
            let mut next = &x - &g / lip;
            if let Some(r) = rx {
                super::project_ball(&mut next, r);
            }
            // projected-gradient mapping; equals the gradient in the interior
            let mapping = (&x - &next) * lip;
            if mapping.norm() <= MINIMIZER_GRAD_TOL {
                return Ok(x);
            }
            x = next;
        }
        Err(BimaxError::Unsupported(
            "upper-level minimizer did not reach the gradient tolerance".into(),
        ))
    }
}
