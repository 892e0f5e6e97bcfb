use approx::assert_relative_eq;
use lazy_ensemble::inverse::{self, Gauge, LazyEnsemble};
use lazy_ensemble::partition::{self, qubit, TemperatureSpectrum};
use lazy_ensemble::sampler::RandomStream;
use lazy_ensemble::spectra::{self, ComplexMatrix, HermitianMatrix};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn nodes_strategy(max_spread: f64) -> impl Strategy<Value = Vec<f64>> {
    (2usize..=8).prop_flat_map(move |n| prop::collection::vec(-max_spread / 2.0..max_spread / 2.0, n))
}

fn spectrum_strategy() -> impl Strategy<Value = Vec<f64>> {
    (2usize..=6).prop_flat_map(|n| prop::collection::vec(0.02f64..1.0, n)).prop_map(|w| {
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    })
}

fn random_unitary(n: usize, seed: u64) -> ComplexMatrix {
    let mut rng = RandomStream::new(seed);
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        for j in i + 1..n {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    spectra::eigh(&HermitianMatrix::new(m).unwrap()).basis
}

fn ts(v: Vec<f64>) -> TemperatureSpectrum {
    TemperatureSpectrum::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gauge_shift_moves_log_z_only(nodes in nodes_strategy(20.0), c in -30.0f64..30.0) {
        let base = partition::evaluate(&ts(nodes.clone())).unwrap();
        let moved = partition::evaluate(&ts(nodes).shifted(c)).unwrap();
        prop_assert!((moved.log_z - (base.log_z - c)).abs() <= 1e-10 * (1.0 + base.log_z.abs()));
        for (a, b) in base.occupations.iter().zip(&moved.occupations) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((base.entropy - moved.entropy).abs() <= 1e-10);
    }

    #[test]
    fn occupations_follow_permutations(nodes in nodes_strategy(20.0), rot in 0usize..8) {
        let n = nodes.len();
        let mut permuted = nodes.clone();
        permuted.rotate_left(rot % n);
        let a = partition::mean_occupations(&ts(nodes)).unwrap();
        let b = partition::mean_occupations(&ts(permuted)).unwrap();
        let mut a_rot = a.clone();
        a_rot.rotate_left(rot % n);
        for (x, y) in a_rot.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-13);
        }
    }

    #[test]
    fn occupations_are_a_distribution_ordered_against_nodes(nodes in nodes_strategy(40.0)) {
        let occ = partition::mean_occupations(&ts(nodes.clone())).unwrap();
        prop_assert!((occ.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(occ.iter().all(|&l| l > 0.0));
        for i in 0..nodes.len() {
            for j in 0..nodes.len() {
                if nodes[i] < nodes[j] - 1e-9 {
                    prop_assert!(occ[i] >= occ[j] - 1e-14);
                }
            }
        }
    }

    #[test]
    fn occupations_are_the_log_z_gradient(nodes in nodes_strategy(10.0)) {
        let occ = partition::mean_occupations(&ts(nodes.clone())).unwrap();
        let h = 1e-5;
        for s in 0..nodes.len() {
            let (mut up, mut dn) = (nodes.clone(), nodes.clone());
            up[s] += h;
            dn[s] -= h;
            let fd = (partition::log_partition(&ts(up)).unwrap() - partition::log_partition(&ts(dn)).unwrap()) / (2.0 * h);
            prop_assert!((occ[s] + fd).abs() <= 1e-7, "s={} occ={} fd={}", s, occ[s], fd);
        }
    }

    #[test]
    fn contour_matches_divided_differences(nodes in nodes_strategy(10.0)) {
        let b = ts(nodes);
        let z = partition::log_partition(&b).unwrap().exp();
        let c = partition::partition_contour(&b, 512).unwrap();
        prop_assert!(((c - z) / z).abs() <= 1e-8);
    }

    #[test]
    fn entropy_is_non_negative(nodes in nodes_strategy(60.0)) {
        prop_assert!(partition::differential_entropy(&ts(nodes)).unwrap() >= 0.0);
    }

    #[test]
    fn fit_round_trips(values in spectrum_strategy(), seed in any::<u64>()) {
        let n = values.len();
        let u = random_unitary(n, seed);
        let rho = spectra::validate_density(HermitianMatrix::from_spectral(&u, &values).into_matrix()).unwrap();
        let ens = inverse::fit_temperature(&rho, Gauge::TraceZero, 1e-10).unwrap();
        prop_assert!(ens.iterations() <= inverse::MAX_NEWTON_ITERATIONS);
        prop_assert!(ens.temperature().trace().abs() <= 1e-10);
        let avg = ens.average_state();
        let gap = (avg.as_matrix() - rho.matrix().as_matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(gap <= 1e-8, "gap {}", gap);
    }

    #[test]
    fn fit_commutes_with_rho(values in spectrum_strategy(), seed in any::<u64>()) {
        let u = random_unitary(values.len(), seed);
        let rho = spectra::validate_density(HermitianMatrix::from_spectral(&u, &values).into_matrix()).unwrap();
        let ens = inverse::fit_temperature(&rho, Gauge::TraceZero, 1e-10).unwrap();
        let (b, r) = (ens.temperature().as_matrix(), rho.matrix().as_matrix());
        let comm = (b * r - r * b).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(comm <= 1e-9 * (1.0 + ens.temperature().max_abs()));
    }

    #[test]
    fn larger_weight_gets_lower_temperature(values in spectrum_strategy()) {
        let u = ComplexMatrix::identity(values.len(), values.len());
        let rho = spectra::validate_density(HermitianMatrix::from_spectral(&u, &values).into_matrix()).unwrap();
        let ens = inverse::fit_temperature(&rho, Gauge::TraceZero, 1e-10).unwrap();
        let b: Vec<f64> = (0..values.len()).map(|i| ens.temperature().as_matrix()[(i, i)].re).collect();
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] > values[j] + 1e-6 {
                    prop_assert!(b[i] < b[j]);
                }
            }
        }
    }

    #[test]
    fn qubit_inverse_inverts(beta in -40.0f64..40.0) {
        let d = qubit::qubit_delta(beta);
        prop_assert!(d.abs() < 0.5);
        prop_assert!((qubit::qubit_delta(-beta) + d).abs() <= 1e-15);
        let back = qubit::qubit_inverse_delta(d).unwrap();
        prop_assert!((back - beta).abs() <= 1e-8 * (1.0 + beta.abs()).powi(2));
    }
}

#[test]
fn qubit_examples() {
    let z = partition::log_partition(&ts(vec![-1.0, 1.0])).unwrap();
    assert_relative_eq!(z, 1f64.sinh().ln(), max_relative = 1e-12);
    let occ = partition::mean_occupations(&ts(vec![-1.0, 1.0])).unwrap();
    assert_relative_eq!(occ[0], 0.6565176, epsilon = 1e-7);
    assert_relative_eq!(occ[1], 0.3434824, epsilon = 1e-7);
    let ens = LazyEnsemble::from_temperature(&HermitianMatrix::from_diagonal(&[-1.0, 1.0]), Gauge::TraceZero).unwrap();
    assert_relative_eq!(ens.entropy(), 0.1515959, epsilon = 1e-7);
}

#[test]
fn regauge_preserves_physics() {
    let values = [0.5, 0.3, 0.2];
    let rho = spectra::validate_density(HermitianMatrix::from_spectral(&random_unitary(3, 11), &values).into_matrix()).unwrap();
    let a = inverse::fit_temperature(&rho, Gauge::TraceZero, 1e-12).unwrap();
    let b = inverse::regauge(&a, Gauge::LogZZero);
    assert!(b.log_z().abs() <= 1e-12);
    assert_relative_eq!(a.entropy(), b.entropy(), epsilon = 1e-12);
    assert_relative_eq!(b.entropy(), -b.mean_energy(), epsilon = 1e-10);
    let c = inverse::regauge(&b, Gauge::TraceZero);
    let gap = (c.temperature().as_matrix() - a.temperature().as_matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(gap <= 1e-12);
}
