use thermo_battery_web::{correction_curve, curve_points, erasure_curves, majorizes};

#[test]
fn erasure_curves_start_at_ln2() {
    let v = erasure_curves(11, 0.4, 1.0).unwrap();
    assert_eq!(v.len(), 55);
    assert!((v[1] + std::f64::consts::LN_2).abs() < 1e-12);
    assert!((v[3] + std::f64::consts::LN_2).abs() < 1e-12);
    assert!((v[50] - 0.4).abs() < 1e-15);
    assert!(erasure_curves(11, 0.5, 1.0).is_err());
}

#[test]
fn correction_curve_dips_then_blows_up() {
    let v = correction_curve(50.0, 0.1, 5.0, 1.0, 10.0, 60.0, 1.0).unwrap();
    let ln_c: Vec<f64> = v.chunks(2).map(|r| r[1]).collect();
    assert_eq!(ln_c.len(), 51);
    assert!(ln_c.iter().all(|x| x.is_finite()));
    let min = ln_c.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(ln_c[50] > min + 20.0);
    assert!(correction_curve(50.0, 0.1, 5.0, 1.0, 10.0, 5.0, 1.0).is_err());
}

#[test]
fn curves_end_at_partition_function() {
    let pts = curve_points(&[0.0, 1.0], &[0.5, 0.5], 1.0).unwrap();
    assert_eq!(pts.len(), 6);
    assert!((pts[4] - (1.0 + (-1.0f64).exp())).abs() < 1e-15 && pts[5] == 1.0);
    // above-thermal excitation is out of reach without work
    assert!(!majorizes(&[0.0, 1.0], &[1.0, 0.0], &[0.5, 0.5], 1.0).unwrap());
    assert!(majorizes(&[0.0, 1.0], &[1.0, 0.0], &[0.8, 0.2], 1.0).unwrap());
    assert!(!majorizes(&[0.0, 1.0], &[0.8, 0.2], &[1.0, 0.0], 1.0).unwrap());
}
