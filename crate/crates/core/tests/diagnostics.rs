use proptest::prelude::*;

use thinfilm::basis::Discretization;
use thinfilm::diagnostics::{analyticity_ratios, free_boundary, level_set, verify_cz_kernel_bound, CzSampleSpec};
use thinfilm::evolution::InitialData;
use thinfilm::norms::{ExactFlow, EXPONENTS};
use thinfilm::profiles::ModelParams;
use thinfilm::spectral::{HeatKernel, SpectralOperator};

fn setup(dim: usize, l: usize, k: usize) -> (Discretization, SpectralOperator, ModelParams) {
    let d = Discretization::new(dim, 1.0, l, k).unwrap();
    let op = SpectralOperator::build(&d, dim as f64).unwrap();
    (d, op, ModelParams::thin_film(dim, 1.0).unwrap())
}

#[test]
fn cz_supremum_is_finite_and_stable() {
    let (d, op, _) = setup(1, 1, 20);
    let k = HeatKernel::new(&op, &d);
    let spec = CzSampleSpec::new(6);
    for e in EXPONENTS {
        let a = verify_cz_kernel_bound(&k, e, &spec, 1e6).unwrap();
        let b = verify_cz_kernel_bound(&k, e, &spec.refined(), 1e6).unwrap();
        let (sa, sb) = (a.constant("sup").unwrap(), b.constant("sup").unwrap());
        assert!(a.passed && b.passed, "{e:?}");
        assert!(sb >= sa * (1.0 - 1e-12));
        assert!((sb - sa) / sb < 0.25, "{e:?}: {sa} -> {sb}");
        assert!(a.constant("sup_near_boundary").unwrap() <= sa);
    }
}

#[test]
fn cz_rejects_foreign_exponent() {
    let (d, op, _) = setup(1, 1, 8);
    let k = HeatKernel::new(&op, &d);
    assert!(verify_cz_kernel_bound(&k, (3, 0, 0), &CzSampleSpec::new(3), 1e6).is_err());
}

#[test]
fn eigenmode_has_entire_time_dependence() {
    let (d, op, p) = setup(1, 1, 10);
    let g = InitialData::Eigen { rank: 1, amplitude: 1.0 }.build(&d, &op, &p).unwrap();
    let flow = ExactFlow::new(&op, &g, 2.0);
    let r = analyticity_ratios(&flow, &d, 1.0, 5, 20, 1e3).unwrap();
    // a single mode gives (a_k / a_0)^{1/k} = t μ₁ / (k!)^{1/k}
    assert_eq!(r.sequence.len(), 5);
    let mut fact = 1.0;
    for (i, v) in r.sequence.iter().enumerate() {
        let k = (i + 1) as f64;
        fact *= k;
        let expect = op.mu_1() / fact.powf(1.0 / k);
        assert!((v - expect).abs() < 1e-6 * expect, "k = {k}: {v} vs {expect}");
    }
}

#[test]
fn free_boundary_of_zero_is_the_unit_sphere() {
    let (d, _, p) = setup(2, 2, 4);
    let fb = free_boundary(&d, &d.zeros(), &p, 12).unwrap();
    for pt in fb.points.iter().flatten() {
        let r: f64 = pt.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((r - 1.0).abs() < 1e-12);
    }
}

fn small_field(seed: u64) -> (Discretization, thinfilm::basis::Field, ModelParams) {
    let (d, op, p) = setup(2, 2, 4);
    let w = InitialData::Random {
        seed,
        amplitude: 0.05,
        l_cap: 2,
        k_cap: 2,
        mean_zero: false,
    }
    .build(&d, &op, &p)
    .unwrap();
    (d, w, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn level_sets_are_nested(seed in 0u64..1000, a in 1e-4f64..0.05, b in 1e-4f64..0.05) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let (d, w, p) = small_field(seed);
        let outer = level_set(&d, &w, lo, &p, 16).unwrap();
        let inner = level_set(&d, &w, hi, &p, 16).unwrap();
        for (ro, ri) in outer.radii.iter().zip(&inner.radii) {
            if let (Some(ro), Some(ri)) = (ro, ri) {
                prop_assert!(ri <= ro);
            }
        }
    }
}
