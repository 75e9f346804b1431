use std::f64::consts::PI;
use torsionlab::adiabatic_lab::*;

fn small_disc() -> Discretization {
    Discretization {
        max_mode: 80,
        cutoff: 4,
        ..Discretization::default()
    }
}

fn small_grid() -> SweepGrid {
    SweepGrid {
        times: vec![0.3, 1.0],
        verticals: vec![1.0, 4.0],
        sigmas: vec![0.2, 1.0],
        ..SweepGrid::default()
    }
}

fn twisted() -> LabGeometry {
    LabGeometry {
        alpha: PI,
        ..LabGeometry::default()
    }
}

#[test]
fn reports_are_byte_identical_on_rerun() {
    let (g, d, grid) = (twisted(), small_disc(), small_grid());
    let a = alpha_form_check(&g, &d, &grid).unwrap();
    let b = alpha_form_check(&g, &d, &grid).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.summary_json().to_string(), b.summary_json().to_string());
    let r1 = fiber_supertrace_decay_check(&g, &d, &grid).unwrap();
    let r2 = fiber_supertrace_decay_check(&g, &d, &grid).unwrap();
    assert_eq!(r1.to_csv(), r2.to_csv());
}

#[test]
fn degenerate_rectangles() {
    let (g, d) = (twisted(), small_disc());
    let bad = RectangleParams { a_top: 0.1, t0: 2.0, sigma: 0.1 };
    assert!(rectangle_integrals(&g, &d, &bad).is_err());
    let thin = RectangleParams { a_top: 1.5, t0: 1.0, sigma: 0.2 };
    let r = rectangle_integrals(&g, &d, &thin).unwrap();
    assert_eq!(r.sides[1], 0.0);
    assert_eq!(r.sides[3], 0.0);
    assert!(r.sum.abs() < 1e-10, "{}", r.sum);
}

#[test]
fn rectangle_residual_is_bounded_by_closedness_times_area() {
    let (g, d) = (twisted(), small_disc());
    let rect = RectangleParams { a_top: 1.5, t0: 3.0, sigma: 0.3 };
    let r = rectangle_integrals(&g, &d, &rect).unwrap();
    let h = 1e-3;
    let mut worst = 0.0f64;
    for i in 0..=4 {
        let t = rect.sigma + (rect.a_top - rect.sigma) * i as f64 / 4.0;
        for j in 0..=4 {
            let v = 1.0 + (rect.t0 - 1.0) * j as f64 / 4.0;
            let da = (alpha_form(&g, &d, t, v + h).unwrap().a - alpha_form(&g, &d, t, v - h).unwrap().a) / (2.0 * h);
            let db = (alpha_form(&g, &d, t + h, v).unwrap().b - alpha_form(&g, &d, t - h, v).unwrap().b) / (2.0 * h);
            worst = worst.max((da - db).abs());
        }
    }
    let area = (rect.a_top - rect.sigma) * (rect.t0 - 1.0);
    assert!(r.sum.abs() <= worst * area + r.budget + 1e-6, "sum {} closedness {worst}", r.sum);
    assert!(r.sum.abs() < 1e-3);
}

#[test]
fn untwisted_fiber_traces_vanish_exactly() {
    let rep = fiber_supertrace_decay_check(&LabGeometry::default(), &small_disc(), &small_grid()).unwrap();
    assert!(rep.max_observed("fiber_trace") <= 1e-12);
    assert!(rep.passed());
}

#[test]
fn unknown_tag_is_rejected() {
    assert!(run_report("nope", &LabConfig::default()).is_err());
}
