use proptest::prelude::*;
use qglauber_core::channels::{
    build_classical_transition, build_kraus, build_x_matrix, kron2, verify_cptp, verify_extension,
    Mat2, Mat4, XMatrix,
};
use qglauber_core::io::{read_series_csv, write_series_csv};
use qglauber_core::observables::{SeriesMeta, TimeSeries};
use qglauber_core::Variant;

fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    [[c, -s], [s, c]]
}

/// Product of Givens rotations in each of the six coordinate planes.
fn orthogonal4(angles: &[f64; 6]) -> Mat4 {
    let planes = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let mut m = [[0.0; 4]; 4];
    (0..4).for_each(|i| m[i][i] = 1.0);
    for (&(p, q), &a) in planes.iter().zip(angles) {
        let (s, c) = a.sin_cos();
        for row in m.iter_mut() {
            let (x, y) = (row[p], row[q]);
            row[p] = c * x - s * y;
            row[q] = s * x + c * y;
        }
    }
    m
}

#[test]
fn named_variants_pass_both_checks() {
    let t = build_classical_transition();
    for v in Variant::ALL {
        let k = build_kraus(&build_x_matrix(v));
        assert!(verify_cptp(&k).pass, "{v}");
        assert!(verify_extension(&k, &t).unwrap().pass, "{v}");
    }
}

#[test]
fn identity_x_is_cptp_but_not_an_extension() {
    let mut id = [[0.0; 4]; 4];
    (0..4).for_each(|i| id[i][i] = 1.0);
    let x = XMatrix::custom(id).unwrap();
    let k = build_kraus(&x);
    assert!(verify_cptp(&k).pass);
    assert!(
        !verify_extension(&k, &build_classical_transition())
            .unwrap()
            .pass
    );
    assert!(x.extension_residual() > 0.4);
}

proptest! {
    #[test]
    fn orthogonal_x_gives_a_cptp_pair(angles in proptest::array::uniform6(-3.2f64..3.2)) {
        let x = XMatrix::custom(orthogonal4(&angles)).unwrap();
        let k = build_kraus(&x);
        prop_assert!(verify_cptp(&k).pass);
        let ext = verify_extension(&k, &build_classical_transition()).unwrap();
        prop_assert_eq!(ext.pass, x.extension_residual() <= 1e-12);
    }

    #[test]
    fn rescaled_x_is_rejected(angles in proptest::array::uniform6(-3.2f64..3.2), scale in 1.01f64..2.0) {
        let mut m = orthogonal4(&angles);
        m.iter_mut().flatten().for_each(|v| *v *= scale);
        let k = build_kraus(&XMatrix::custom(m).unwrap());
        prop_assert!(!verify_cptp(&k).pass);
        prop_assert!(verify_extension(&k, &build_classical_transition()).is_err());
    }

    #[test]
    fn identity_tensor_rotation_always_extends(theta in -3.2f64..3.2) {
        let ident = [[1.0, 0.0], [0.0, 1.0]];
        let x = XMatrix::custom(kron2(&ident, &rotation(theta))).unwrap();
        let k = build_kraus(&x);
        let ext = verify_extension(&k, &build_classical_transition()).unwrap();
        prop_assert_eq!(ext.pass, (theta.cos().powi(2) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn series_csv_round_trips(
        values in proptest::collection::vec(-1e6f64..1e6, 1..30),
        with_err in any::<bool>(),
    ) {
        let times: Vec<f64> = (0..values.len()).map(|k| k as f64 / 7.0).collect();
        let stderr = with_err.then(|| values.iter().map(|v| v.abs() / 3.0).collect());
        let s = TimeSeries::new(times, values, stderr, SeriesMeta {
            observable: "purity".into(),
            variant: "S2".into(),
            n_sites: 14,
            mode: "traj".into(),
        }).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &s).unwrap();
        let back = read_series_csv(buf.as_slice(), "purity").unwrap();
        prop_assert_eq!(back, s);
    }
}
