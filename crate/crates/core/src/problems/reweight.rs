//! Adversarial data reweighting on a linear regression task.
//!
//! Samples are `(a, b)` with features `a` of length `p` and a scalar label.
//! The upper variable is `x = (u, r)`: `u` (length `p + 2`) parameterizes
//! the per-sample weighting map `w = eps + (1 - 2 eps) sigmoid(u'phi)` with
//! `phi = (a, b, 1) / sqrt(p + 2)`, and `r` (length `p`) is an output head
//! added to the lower model.
//!
//! ```text
//! g = w(u; a, b) * 1/2 (b - (a + z)'y)^2 + mu/2 |y|^2 - rho/2 |z|^2
//! f = 1/2 (b - a'(y + r))^2 + lambda/2 |x|^2
//! ```
//!
//! `y` is a ridge model fitted on the weighted training set and `z` an
//! adversarial feature shift. Training labels are corrupted with
//! probability `corrupt_fraction`; validation and test labels are clean.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_norm, standard_normal_vec, BmoProblem, Radii};
use crate::constants::ConstantsRegistry;
use crate::data::{Sample, SampleSource};
use crate::error::{invalid, Result};
use crate::rng::{derived_rng, Stream, StreamRng};
use crate::triple::{Dims, ParamTriple};

/// Weights live in `[WEIGHT_EPS, 1 - WEIGHT_EPS]`.
pub const WEIGHT_EPS: f64 = 1e-6;
const FEATURE_CLAMP_MARGIN: f64 = 8.0;
const NOISE_CLAMP: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReweightConfig {
    /// Feature count `p`.
    pub features: usize,
    pub seed: u64,
    pub rho: f64,
    pub mu: f64,
    pub lambda: f64,
    pub corrupt_fraction: f64,
    pub sigma_clean: f64,
    pub sigma_corrupt: f64,
    pub radii: Radii,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        Self {
            features: 4,
            seed: 11,
            rho: 10.0,
            mu: 0.1,
            lambda: 1e-3,
            corrupt_fraction: 0.3,
            sigma_clean: 0.5,
            sigma_corrupt: 3.0,
            radii: Radii { x: 5.0, y: 3.0, z: 1.0 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReweightBmo {
    cfg: ReweightConfig,
    theta: DVector<f64>,
    constants: ConstantsRegistry,
    dims: Dims,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl ReweightBmo {
    pub fn new(cfg: &ReweightConfig) -> Result<Self> {
        let p = cfg.features;
        if p == 0 {
            return Err(invalid("features", "must be >= 1"));
        }
        for (name, v) in [
            ("rho", cfg.rho),
            ("mu", cfg.mu),
            ("radii.x", cfg.radii.x),
            ("radii.y", cfg.radii.y),
            ("radii.z", cfg.radii.z),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("lambda", cfg.lambda),
            ("sigma_clean", cfg.sigma_clean),
            ("sigma_corrupt", cfg.sigma_corrupt),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&cfg.corrupt_fraction) {
            return Err(invalid("corrupt_fraction", "must lie in [0, 1]"));
        }
        // Hessian in z is w y y' - rho I with w < 1 and |y| <= R_y.
        let ry2 = cfg.radii.y * cfg.radii.y;
        if cfg.rho <= ry2 {
            return Err(invalid(
                "rho",
                format!("must exceed R_y^2 = {ry2} for strong concavity in z, got {}", cfg.rho),
            ));
        }
        let mut rng = derived_rng(cfg.seed, Stream::Instance, &[]);
        let mut theta = standard_normal_vec(&mut rng, p);
        let n = theta.norm();
        if n > 0.0 {
            theta /= n;
        }
        let mut out = Self {
            cfg: cfg.clone(),
            theta,
            constants: ConstantsRegistry::default(),
            dims: Dims::new(2 * p + 2, p, p),
        };
        out.constants = out.compute_constants()?;
        Ok(out)
    }

    pub fn config(&self) -> &ReweightConfig {
        &self.cfg
    }

    /// Ground-truth regression vector (unit norm).
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    fn p(&self) -> usize {
        self.cfg.features
    }

    /// Largest feature norm a sample can have.
    pub fn feature_bound(&self) -> f64 {
        (self.p() as f64).sqrt() + FEATURE_CLAMP_MARGIN
    }

    /// Largest label magnitude a sample can have.
    pub fn label_bound(&self) -> f64 {
        self.feature_bound() + NOISE_CLAMP * self.cfg.sigma_clean.max(self.cfg.sigma_corrupt)
    }

    fn split<'a>(&self, s: &'a Sample) -> (nalgebra::DVectorView<'a, f64>, f64) {
        let p = self.p();
        (s.rows(0, p), s[p])
    }

    fn features_phi(&self, s: &Sample) -> DVector<f64> {
        let p = self.p();
        let mut phi = DVector::from_element(p + 2, 1.0);
        phi.rows_mut(0, p + 1).copy_from(&s.rows(0, p + 1));
        phi / ((p + 2) as f64).sqrt()
    }

    /// `(w, s)` with `s = sigmoid(u'phi)` and `w = eps + (1 - 2 eps) s`.
    fn weight_parts(&self, x: &DVector<f64>, s: &Sample) -> (f64, f64) {
        let u = x.rows(0, self.p() + 2);
        let sg = sigmoid(u.dot(&self.features_phi(s)));
        (WEIGHT_EPS + (1.0 - 2.0 * WEIGHT_EPS) * sg, sg)
    }

    /// Weight the map assigns to training sample `zeta` at upper variable `x`.
    pub fn weight(&self, x: &DVector<f64>, zeta: &Sample) -> f64 {
        self.weight_parts(x, zeta).0
    }

    fn draw(&self, rng: &mut StreamRng, corrupt: bool) -> Sample {
        let p = self.p();
        let a = clamp_norm(standard_normal_vec(rng, p), self.feature_bound());
        let noise: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal).clamp(-NOISE_CLAMP, NOISE_CLAMP);
        let sigma = if corrupt { self.cfg.sigma_corrupt } else { self.cfg.sigma_clean };
        let b = a.dot(&self.theta) + sigma * noise;
        let mut s = DVector::zeros(p + 1);
        s.rows_mut(0, p).copy_from(&a);
        s[p] = b;
        s
    }

    fn compute_constants(&self) -> Result<ConstantsRegistry> {
        let c = &self.cfg;
        let (rx, ry, rz) = (c.radii.x, c.radii.y, c.radii.z);
        let sa = self.feature_bound();
        let sb = self.label_bound();
        // upper residual bound, |r| <= R_x
        let ef = sb + sa * (ry + rx);
        let smooth_f = 2.0 * sa * sa + c.lambda;
        let lip_f = c.lambda * rx + 2f64.sqrt() * ef * sa;

        let eg = sb + (sa + rz) * ry;
        let phi = ((sa * sa + sb * sb + 1.0) / (self.p() + 2) as f64).sqrt();
        let v = sa + rz;
        // |s'(1 - 2s)| <= 1/(6 sqrt 3) < 0.1 and s(1 - s) <= 1/4
        let h_uu = 0.1 * phi * phi * 0.5 * eg * eg;
        let h_uy = 0.25 * phi * eg * v;
        let h_uz = 0.25 * phi * eg * ry;
        let h_yy = v * v + c.mu;
        let h_yz = eg + v * ry;
        let h_zz = ry * ry + c.rho;
        let smooth_g = (h_uu * h_uu
            + 2.0 * h_uy * h_uy
            + 2.0 * h_uz * h_uz
            + h_yy * h_yy
            + 2.0 * h_yz * h_yz
            + h_zz * h_zz)
            .sqrt();
        let g_u = 0.25 * 0.5 * eg * eg * phi;
        let g_y = eg * v + c.mu * ry;
        let g_z = eg * ry + c.rho * rz;
        let lip_g = (g_u * g_u + g_y * g_y + g_z * g_z).sqrt();
        ConstantsRegistry::new(lip_f, lip_g, smooth_f, smooth_g)
    }
}

impl SampleSource for ReweightBmo {
    fn draw_upper(&self, rng: &mut StreamRng) -> Sample {
        self.draw(rng, false)
    }

    fn draw_lower(&self, rng: &mut StreamRng) -> Sample {
        let corrupt = rng.random::<f64>() < self.cfg.corrupt_fraction;
        self.draw(rng, corrupt)
    }
}

impl BmoProblem for ReweightBmo {
    fn name(&self) -> &'static str {
        "reweight"
    }

    fn noise_model(&self) -> &'static str {
        "a ~ N(0, I) clamped to norm sqrt(p) + 8, b = a'theta + sigma * e, e ~ N(0, 1) clamped to [-8, 8]"
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn sample_dims(&self) -> (usize, usize) {
        (self.p() + 1, self.p() + 1)
    }

    fn upper_loss(&self, w: &ParamTriple, xi: &Sample) -> f64 {
        let p = self.p();
        let (a, b) = self.split(xi);
        let r = w.x.rows(p + 2, p);
        let e = b - a.dot(&(&w.y + r));
        0.5 * e * e + 0.5 * self.cfg.lambda * w.x.norm_squared()
    }

    fn lower_loss(&self, w: &ParamTriple, zeta: &Sample) -> f64 {
        let (a, b) = self.split(zeta);
        let (wt, _) = self.weight_parts(&w.x, zeta);
        let e = b - (a + &w.z).dot(&w.y);
        wt * 0.5 * e * e + 0.5 * self.cfg.mu * w.y.norm_squared() - 0.5 * self.cfg.rho * w.z.norm_squared()
    }

    fn upper_grad(&self, w: &ParamTriple, xi: &Sample) -> ParamTriple {
        let p = self.p();
        let lam = self.cfg.lambda;
        let (a, b) = self.split(xi);
        let r = w.x.rows(p + 2, p);
        let e = b - a.dot(&(&w.y + r));
        let mut gx = &w.x * lam;
        let mut gr = gx.rows_mut(p + 2, p);
        gr -= a * e;
        ParamTriple::new(gx, a * (-e), DVector::zeros(p))
    }

    fn lower_grad(&self, w: &ParamTriple, zeta: &Sample) -> ParamTriple {
        let p = self.p();
        let (a, b) = self.split(zeta);
        let (wt, sg) = self.weight_parts(&w.x, zeta);
        let v = a + &w.z;
        let e = b - v.dot(&w.y);
        let mut gx = DVector::zeros(2 * p + 2);
        let du = (1.0 - 2.0 * WEIGHT_EPS) * sg * (1.0 - sg) * 0.5 * e * e;
        gx.rows_mut(0, p + 2).copy_from(&(self.features_phi(zeta) * du));
        let gy = &v * (-wt * e) + &w.y * self.cfg.mu;
        let gz = &w.y * (-wt * e) - &w.z * self.cfg.rho;
        ParamTriple::new(gx, gy, gz)
    }

    fn radii(&self) -> Option<Radii> {
        Some(self.cfg.radii)
    }

    fn constants(&self) -> &ConstantsRegistry {
        &self.constants
    }

    fn upper_nonnegative(&self) -> bool {
        true
    }
}
