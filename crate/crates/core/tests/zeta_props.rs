use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;
use torsionlab::heat_zeta::*;
use torsionlab::model_spectra::*;
use torsionlab::special::{hurwitz_zeta, hurwitz_zeta_dual};

fn circle(l: f64) -> Spectrum {
    circle_hodge_spectrum(&CircleGeometry::new(l).unwrap(), 200).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn closed_form_circle_torsion(l in 0.2f64..20.0) {
        let r = torsion_zeta_closed_form(&circle(l)).unwrap();
        prop_assert!((r.log_torsion + l.ln()).abs() < 1e-9);
        prop_assert!((r.zeta_at_zero - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hurwitz_matches_lerch(a in 0.05f64..3.0) {
        let z = hurwitz_zeta_dual(0.0, a);
        prop_assert!((z.re - (0.5 - a)).abs() < 1e-10);
        let lerch = ln_gamma(a) - 0.5 * (2.0 * std::f64::consts::PI).ln();
        prop_assert!((z.eps - lerch).abs() < 1e-9, "{} vs {}", z.eps, lerch);
    }

    #[test]
    fn hurwitz_matches_direct_sum(a in 0.1f64..2.0, s in 2.5f64..6.0) {
        let direct: f64 = (0..200_000).map(|n| (n as f64 + a).powf(-s)).sum();
        let tail = (200_000.0 + a).powf(1.0 - s) / (s - 1.0);
        prop_assert!((hurwitz_zeta(s, a) - direct - tail).abs() < 1e-9 * direct.max(1.0));
    }

    #[test]
    fn fit_recovers_planted_coefficients(c in prop::collection::vec(-3.0f64..3.0, 5)) {
        let powers = default_powers();
        let samples: Vec<(f64, f64)> = log_spaced(0.01, 0.5, 16)
            .into_iter()
            .map(|t| (t, powers.iter().zip(&c).map(|(p, a)| a * t.powf(*p)).sum()))
            .collect();
        let fit = fit_small_time_expansion(&samples, &powers).unwrap();
        for (p, a) in powers.iter().zip(&c) {
            prop_assert!((fit.coefficient(*p).unwrap() - a).abs() < 1e-7);
        }
    }

    #[test]
    fn det_line_norm_tracks_change_of_basis(entries in prop::collection::vec(-2.0f64..2.0, 4), shift in 0.5f64..3.0) {
        let mass = DVector::from_vec(vec![1.0, 2.0, 0.5, 1.5]);
        let h0 = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 2.0]);
        let h1 = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 0.0, 1.0]);
        let a = DMatrix::from_row_slice(2, 2, &entries) + DMatrix::identity(2, 2) * shift * 3.0;
        let det = a.determinant();
        prop_assume!(det.abs() > 1e-3);
        let before = det_line_log_norm(&[h0.clone(), h1.clone()], &mass, None, Some(&[2, 1])).unwrap();
        let after = det_line_log_norm(&[&h0 * &a, h1], &mass, None, None).unwrap();
        prop_assert!((after.log_norm - before.log_norm - det.abs().ln()).abs() < 1e-10);
    }
}

#[test]
fn heat_split_reproduces_circle_torsion() {
    for l in [0.7, 3.0, 9.0] {
        let spec = circle(l);
        let run = heat_split_from_spectrum(
            &spec,
            circle_fit_window(l),
            16,
            &default_powers(),
            &HeatSplitOptions::default(),
        )
        .unwrap();
        assert!((run.result.log_torsion + l.ln()).abs() < 1e-6, "L={l}: {}", run.result.log_torsion);
        assert!(run.result.error_budget < 1e-3);
        assert_eq!(run.chi2, -1.0);
    }
}

#[test]
fn det_line_rejects_wrong_betti_numbers() {
    let mass = DVector::from_element(3, 1.0);
    let h = DMatrix::identity(3, 1);
    let r = det_line_log_norm(&[h], &mass, None, Some(&[1, 1]));
    assert!(matches!(r, Err(torsionlab::Error::CohomologyViolation(_))));
}
