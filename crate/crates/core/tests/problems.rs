use bimax_core::constants::ConstantsRegistry;
use bimax_core::data::{DatasetPair, Sample, SampleSource};
use bimax_core::problems::{gradient_audit, secant_audit, AnalyticBmo, BmoProblem, Radii};
use bimax_core::rng::{stream_rng, StreamRng};
use bimax_core::{Dims, ParamTriple, QuadraticBmo, QuadraticConfig, ReweightBmo, ReweightConfig};
use nalgebra::DVector;
use rand::Rng;

fn quad(d: usize) -> QuadraticBmo {
    QuadraticBmo::new(&QuadraticConfig {
        dx: d,
        dy: d,
        dz: d,
        ..Default::default()
    })
    .unwrap()
}

/// Plain Gaussian elimination with partial pivoting on row-major data.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

#[test]
fn seed11_saddle_matches_independent_kkt_solve() {
    let p = quad(3);
    let d = DatasetPair::generate(&p, 10, 30, 10, 4).unwrap();
    let mx = p.matrices();
    let x = [0.3, -1.2, 2.0];
    let mut zbar = [0.0; 6];
    for s in d.training.iter() {
        for (k, v) in s.iter().enumerate() {
            zbar[k] += v / d.m2() as f64;
        }
    }
    let px = matvec(&mx.p, &x);
    let qx = matvec(&mx.q, &x);
    let mut kkt = vec![vec![0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            kkt[i][j] = mx.a[i][j];
            kkt[i][3 + j] = mx.c[i][j];
            kkt[3 + i][j] = -mx.c[j][i];
            kkt[3 + i][3 + j] = mx.b[i][j];
        }
    }
    let mut rhs = vec![0.0; 6];
    for i in 0..3 {
        rhs[i] = -(px[i] + zbar[i]);
        rhs[3 + i] = qx[i] + zbar[3 + i];
    }
    let oracle = dense_solve(kkt, rhs);
    let (y, z) = p.analytic_saddle(&DVector::from_row_slice(&x), &d.training).unwrap();
    for i in 0..3 {
        assert!((y[i] - oracle[i]).abs() <= 1e-12 * (1.0 + oracle[i].abs()));
        assert!((z[i] - oracle[3 + i]).abs() <= 1e-12 * (1.0 + oracle[3 + i].abs()));
    }
}

#[test]
fn saddle_first_order_residual() {
    for seed in [11, 12, 13] {
        let p = QuadraticBmo::new(&QuadraticConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let d = DatasetPair::generate(&p, 10, 50, 10, seed).unwrap();
        let mut rng = stream_rng(seed);
        for _ in 0..10 {
            let x = DVector::from_fn(5, |_, _| rng.random_range(-3.0..3.0));
            let (y, z) = p.analytic_saddle(&x, &d.training).unwrap();
            // gradient of the full-batch lower loss at the saddle
            let w = ParamTriple::new(x.clone(), y.clone(), z.clone());
            let mut gy = DVector::zeros(5);
            let mut gz = DVector::zeros(5);
            for s in d.training.iter() {
                let g = p.lower_grad(&w, s);
                gy += g.y;
                gz += g.z;
            }
            let res = (gy.norm_squared() + gz.norm_squared()).sqrt() / d.m2() as f64;
            let scale = p.kkt_matrix().norm() * (y.norm() + z.norm()) + 1.0;
            assert!(res / scale <= 1e-10, "residual {res}");
            assert!(p.saddle_residual(&x, &y, &z, &d.training) <= 1e-10);
        }
    }
}

#[test]
fn hypergradient_matches_finite_differences() {
    let p = quad(5);
    let d = DatasetPair::generate(&p, 20, 20, 10, 1).unwrap();
    let mut rng = stream_rng(99);
    let mut points: Vec<DVector<f64>> = (0..20)
        .map(|_| DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0)))
        .collect();
    points.push(DVector::from_fn(5, |i, _| if i == 0 { 1.0 } else { 0.0 }));
    let h = 1e-5;
    for x in points {
        let (_, g) = p.upper_objective(&x, &d.training, &d.validation).unwrap();
        let fd = DVector::from_fn(5, |j, _| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            let fa = p.upper_objective(&a, &d.training, &d.validation).unwrap().0;
            let fb = p.upper_objective(&b, &d.training, &d.validation).unwrap().0;
            (fa - fb) / (2.0 * h)
        });
        let rel = (&g - &fd).norm() / g.norm().max(fd.norm()).max(1e-12);
        assert!(rel <= 1e-6, "relative error {rel}");
    }
}

#[test]
fn audits_pass_on_both_problems() {
    let q = quad(5);
    let r = gradient_audit(&q, 100, 11).unwrap();
    assert!(r.exceedances.is_empty(), "{:?}", r.exceedances);
    let w = ReweightBmo::new(&ReweightConfig::default()).unwrap();
    let r = gradient_audit(&w, 100, 11).unwrap();
    assert!(r.exceedances.is_empty(), "{:?}", r.exceedances);
}

#[test]
fn secant_ratios_within_registered_moduli() {
    let q = quad(5);
    let (_, ex) = secant_audit(&q, 10_000, 3);
    assert!(ex.is_empty(), "{ex:?}");
    let w = ReweightBmo::new(&ReweightConfig::default()).unwrap();
    let (_, ex) = secant_audit(&w, 10_000, 3);
    assert!(ex.is_empty(), "{ex:?}");
}

/// Wraps a problem and flips the sign of one partial.
struct FlipZ(QuadraticBmo);

impl SampleSource for FlipZ {
    fn draw_upper(&self, rng: &mut StreamRng) -> Sample {
        self.0.draw_upper(rng)
    }
    fn draw_lower(&self, rng: &mut StreamRng) -> Sample {
        self.0.draw_lower(rng)
    }
}

impl BmoProblem for FlipZ {
    fn name(&self) -> &'static str {
        "flipped"
    }
    fn noise_model(&self) -> &'static str {
        "none"
    }
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn sample_dims(&self) -> (usize, usize) {
        self.0.sample_dims()
    }
    fn upper_loss(&self, w: &ParamTriple, xi: &Sample) -> f64 {
        self.0.upper_loss(w, xi)
    }
    fn lower_loss(&self, w: &ParamTriple, zeta: &Sample) -> f64 {
        self.0.lower_loss(w, zeta)
    }
    fn upper_grad(&self, w: &ParamTriple, xi: &Sample) -> ParamTriple {
        self.0.upper_grad(w, xi)
    }
    fn lower_grad(&self, w: &ParamTriple, zeta: &Sample) -> ParamTriple {
        let mut g = self.0.lower_grad(w, zeta);
        g.z = -g.z;
        g
    }
    fn radii(&self) -> Option<Radii> {
        self.0.radii()
    }
    fn constants(&self) -> &ConstantsRegistry {
        self.0.constants()
    }
    fn upper_nonnegative(&self) -> bool {
        true
    }
}

#[test]
fn planted_sign_flip_is_named() {
    let err = gradient_audit(&FlipZ(quad(5)), 100, 11).unwrap_err();
    assert_eq!(err.partial, "grad_z g");
    assert!(err.to_string().contains("grad_z g"));
}

#[test]
fn monte_carlo_population_risk_converges_noise_free() {
    let p = QuadraticBmo::new(&QuadraticConfig {
        sigma_xi: 0.0,
        sigma_zeta: 0.0,
        ..Default::default()
    })
    .unwrap();
    let d = DatasetPair::generate(&p, 5, 5, 50, 2).unwrap();
    let w = ParamTriple::from_slices(&[1.0, 0.0, -1.0, 0.5, 0.0], &[0.2; 5], &[-0.3; 5]);
    let est: f64 = d.test.iter().map(|xi| p.upper_loss(&w, xi)).sum::<f64>() / d.m_test() as f64;
    assert!((est - p.population_risk(&w)).abs() <= 1e-12 * est.abs().max(1.0));
}
