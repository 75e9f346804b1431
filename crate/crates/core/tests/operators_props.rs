use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use torsionlab::discrete_operators::*;
use torsionlab::model_spectra::*;

fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn circle_complex_has_one_harmonic_per_degree(amp in 0.0f64..0.8, phase in 0.0f64..6.0, nodes in 8usize..40) {
        let grid = CircleGrid::from_fn(nodes, |th| 1.0 + amp * (th + phase).sin()).unwrap();
        let c = build_circle_complex(&grid).unwrap();
        let (e0, e1) = c.laplacian_eigenvalues();
        prop_assert!(e0[0].abs() < 1e-9 && e1[0].abs() < 1e-9);
        prop_assert!(e0[1] > 1e-6 && e1[1] > 1e-6);
        let h = c.harmonic_basis(1e-9);
        prop_assert_eq!(h.iter().map(|b| b.ncols()).collect::<Vec<_>>(), vec![1, 1]);
    }

    #[test]
    fn assembly_differential_squares_to_zero(eps in 0.2f64..1.0, alpha in 0.0f64..PI, vertical in 0.5f64..3.0) {
        let grid = CircleGrid::uniform(10, 2.0 * PI).unwrap();
        let c = build_circle_complex(&grid).unwrap();
        let fiber = build_fiber_operator(&FiberModel::new(2, 1.0, 2).unwrap()).unwrap();
        let sc = ScalingParams::new(eps, vertical, 1.0, alpha).unwrap();
        let asm = assemble_total_dirac(&c, &fiber, &sc).unwrap();
        prop_assert!(asm.differential_square_residual() < 1e-11);
        prop_assert_eq!(&asm.kernel_dimensions(1e-9)[..4], &[1, 1, 0, 0]);
    }

    #[test]
    fn contour_agrees_with_eigendecomposition(seed in any::<u64>(), t in 0.2f64..2.0) {
        let d = random_symmetric(12, seed);
        let c = contour_heat_operator(&d, t, &Contour::default()).unwrap();
        let exact = heat_operator(&(&d * &d), t).unwrap();
        prop_assert!((&c.matrix - &exact).amax() < 1e-8);
        prop_assert!(c.error_bound < 1e-8);
    }
}

#[test]
fn fiber_kernel_is_the_gaussian_for_each_tau() {
    for tau in [0.5, 1.0, 2.0] {
        let op = build_fiber_operator(&FiberModel::new(2, tau, 6).unwrap()).unwrap();
        assert_eq!(op.kernel(1e-9).ncols(), 1);
        assert!(hermite_ground_state_error(&op, 8.0, 101).unwrap() < 1e-10);
    }
}

#[test]
fn large_time_difference_shrinks_with_epsilon() {
    let grid = CircleGrid::uniform(12, 2.0 * PI).unwrap();
    let c = build_circle_complex(&grid).unwrap();
    let fiber = build_fiber_operator(&FiberModel::new(2, 1.0, 2).unwrap()).unwrap();
    let mut last = f64::INFINITY;
    for eps in [1.0, 0.7, 0.5] {
        let asm = assemble_total_dirac(&c, &fiber, &ScalingParams::adiabatic(eps).unwrap()).unwrap();
        let proj = kernel_projection(&asm).unwrap();
        let diff = large_time_comparison(&asm, &proj, 1.0).difference;
        assert!(diff < last, "eps={eps}: {diff} >= {last}");
        last = diff;
    }
}
