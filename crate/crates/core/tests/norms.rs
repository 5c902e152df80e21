use proptest::prelude::*;

use thinfilm::basis::Discretization;
use thinfilm::evolution::InitialData;
use thinfilm::norms::{lipschitz_norm, x_norm, y_norm, ExactFlow, WhitneyNormConfig};
use thinfilm::profiles::ModelParams;
use thinfilm::spectral::SpectralOperator;

fn setup() -> (Discretization, SpectralOperator, ModelParams) {
    let d = Discretization::new(1, 1.0, 1, 8).unwrap();
    let op = SpectralOperator::build(&d, 1.0).unwrap();
    (d, op, ModelParams::thin_film(1, 1.0).unwrap())
}

#[test]
fn adding_samples_never_lowers_the_norm() {
    let (d, op, p) = setup();
    let g = InitialData::Random {
        seed: 9,
        amplitude: 1.0,
        l_cap: 1,
        k_cap: 4,
        mean_zero: false,
    }
    .build(&d, &op, &p)
    .unwrap();
    let flow = ExactFlow::new(&op, &g, 4.0);
    let small = WhitneyNormConfig::coarse(1);
    let mut big = small.clone();
    big.radii.push(small.radii.last().unwrap() / 2.0);
    big.centers.push(vec![0.93]);
    big.centers.push(vec![-0.41]);
    let a = x_norm(&flow, &d, &small).unwrap().total;
    let b = x_norm(&flow, &d, &big).unwrap().total;
    assert!(b >= a, "{a} > {b}");
}

#[test]
fn y_norm_of_zero_forcing_vanishes() {
    let (d, op, _) = setup();
    let flow = ExactFlow::new(&op, &d.zeros(), 2.0);
    let y = y_norm(&flow, &d, &WhitneyNormConfig::coarse(1)).unwrap();
    assert_eq!(y.total, 0.0);
}

#[test]
fn invalid_configuration_is_rejected() {
    let (d, op, _) = setup();
    let flow = ExactFlow::new(&op, &d.coordinate(0), 2.0);
    let mut cfg = WhitneyNormConfig::coarse(1);
    cfg.p = 1.0;
    assert!(x_norm(&flow, &d, &cfg).is_err());
    cfg.p = 4.0;
    cfg.radii.push(1.5);
    assert!(x_norm(&flow, &d, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lipschitz_norm_is_homogeneous(seed in 0u64..500, c in -5.0f64..5.0) {
        let (d, op, p) = setup();
        let g = InitialData::Random { seed, amplitude: 1.0, l_cap: 1, k_cap: 4, mean_zero: false }
            .build(&d, &op, &p)
            .unwrap();
        let a = lipschitz_norm(&d, &g, 40).0;
        let b = lipschitz_norm(&d, &g.scale(c), 40).0;
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * (1.0 + b));
    }
}
