use dae_sdc::analysis::stiff_limit_matrix;
use dae_sdc::collocation::MinSrOptions;
use dae_sdc::prelude::*;
use proptest::prelude::*;

/// `|sum_j q_mj s_j^p - c_m^{p+1}/(p+1)|` in local coordinates
/// `s = (t - t0) / h`, divided by `sum_j |q_mj s_j^p|`, the size of the
/// rounding error any f64 quadrature makes.
fn scaled_row_error(q: &[f64], s: &[f64], upper: f64, p: i32, h: f64) -> f64 {
    let approx: f64 = q.iter().zip(s).map(|(w, x)| w * x.powi(p)).sum();
    let exact = h * upper.powi(p + 1) / f64::from(p + 1);
    let scale: f64 = q.iter().zip(s).map(|(w, x)| (w * x.powi(p)).abs()).sum();
    (approx - exact).abs() / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_integrate_low_degree_polynomials(m in 1usize..=8, t0 in -3.0f64..3.0, h in 1e-3f64..4.0) {
        let scheme = CollocationScheme::radau_right(m, t0, t0 + h).unwrap();
        let s: Vec<f64> = scheme.unit_nodes().to_vec();
        let q = scheme.q();
        for row in 0..m {
            for p in 0..m as i32 {
                let err = scaled_row_error(q.row(row), &s, s[row], p, h);
                prop_assert!(err <= 1e-13, "M={m} row={row} p={p}: {err:e}");
            }
        }
    }

    #[test]
    fn last_row_is_exact_to_degree_2m_minus_2(m in 1usize..=8, t0 in -3.0f64..3.0, h in 1e-3f64..4.0) {
        let scheme = CollocationScheme::radau_right(m, t0, t0 + h).unwrap();
        let s = scheme.unit_nodes();
        let last = scheme.q().row(m - 1);
        for p in 0..(2 * m - 1) as i32 {
            let err = scaled_row_error(last, s, 1.0, p, h);
            prop_assert!(err <= 1e-13, "M={m} p={p}: {err:e}");
        }
        let w = scheme.weights();
        for j in 0..m {
            prop_assert!((w[j] - last[j]).abs() <= 1e-15 * h);
        }
    }

    #[test]
    fn integration_matrix_scales_with_the_interval(m in 1usize..=8, t0 in -3.0f64..3.0, h in 1e-3f64..4.0) {
        let scheme = CollocationScheme::radau_right(m, t0, t0 + h).unwrap();
        let unit = CollocationScheme::radau_right(m, 0.0, 1.0).unwrap();
        for i in 0..m {
            prop_assert!((scheme.nodes()[i] - (t0 + h * unit.nodes()[i])).abs() <= 4.0 * f64::EPSILON * (1.0 + t0.abs() + h));
            for j in 0..m {
                let (a, b) = (scheme.q()[(i, j)], h * unit.q()[(i, j)]);
                prop_assert!((a - b).abs() <= 1e-15 * h, "Q[{i},{j}] {a} vs {b}");
            }
            let row_sum: f64 = scheme.q().row(i).iter().sum();
            prop_assert!((row_sum - (scheme.nodes()[i] - t0)).abs() <= 1e-14 * h);
        }
    }

    #[test]
    fn lu_stiff_limit_is_nilpotent_on_any_interval(m in 2usize..=8, t0 in -3.0f64..3.0, h in 1e-3f64..4.0) {
        let scheme = CollocationScheme::radau_right(m, t0, t0 + h).unwrap();
        let qd = QDeltaMatrix::new(QDeltaKind::Lu, &scheme).unwrap();
        for i in 0..m {
            for j in i + 1..m {
                prop_assert_eq!(qd.matrix()[(i, j)], 0.0);
            }
        }
        let k = stiff_limit_matrix(&scheme, &qd).unwrap();
        prop_assert!(k.matrix.powi(m as u32).norm_inf() <= 1e-10);
    }

    #[test]
    fn nodes_are_increasing_and_end_at_the_right_endpoint(m in 1usize..=12) {
        let scheme = CollocationScheme::radau_right(m, 0.0, 1.0).unwrap();
        let c = scheme.nodes();
        prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c[0] > 0.0);
        prop_assert_eq!(c[m - 1], 1.0);
        let w_sum: f64 = scheme.weights().iter().sum();
        prop_assert!((w_sum - 1.0).abs() <= 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn min_sr_s_beats_implicit_euler_in_the_stiff_limit(m in 2usize..=5, seed in any::<u64>()) {
        let scheme = CollocationScheme::radau_right(m, 0.0, 1.0).unwrap();
        let opts = MinSrOptions { seed, ..MinSrOptions::default() };
        let minsr = QDeltaMatrix::with_options(QDeltaKind::MinSrS, &scheme, &opts).unwrap();
        let ie = QDeltaMatrix::new(QDeltaKind::ImplicitEuler, &scheme).unwrap();
        let rho_minsr = stiff_limit_matrix(&scheme, &minsr).unwrap().spectral_radius();
        let rho_ie = stiff_limit_matrix(&scheme, &ie).unwrap().spectral_radius();
        prop_assert!(rho_minsr < rho_ie, "M={m}: {rho_minsr} vs {rho_ie}");
        prop_assert!(minsr.matrix().diagonal().iter().all(|d| *d > 0.0));
    }
}

#[test]
fn coefficient_file_reproduces_the_optimized_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = CollocationScheme::radau_right(4, 0.0, 0.5).unwrap();
    for kind in [QDeltaKind::MinSrS, QDeltaKind::MinSrNs] {
        let qd = QDeltaMatrix::new(kind, &scheme).unwrap();
        let path = dir.path().join(format!("{}.json", kind.name()));
        qd.to_coefficients_file().unwrap().save(&path).unwrap();
        let other = CollocationScheme::radau_right(4, 1.0, 1.25).unwrap();
        let loaded = QDeltaMatrix::from_file(&path, &other).unwrap();
        assert_eq!(loaded.kind(), kind);
        assert_eq!(loaded.unit_matrix().diagonal(), qd.unit_matrix().diagonal());
        assert!(loaded.matrix().sub(&qd.unit_matrix().scaled(0.25)).max_abs() <= 1e-16);
        assert!(QDeltaMatrix::from_file(&path, &CollocationScheme::radau_right(3, 0.0, 1.0).unwrap()).is_err());
    }
}

#[test]
fn explicit_kinds_have_no_stiff_limit() {
    let scheme = CollocationScheme::radau_right(3, 0.0, 1.0).unwrap();
    for kind in [QDeltaKind::ExplicitEuler, QDeltaKind::Picard] {
        let qd = QDeltaMatrix::new(kind, &scheme).unwrap();
        assert!(matches!(
            stiff_limit_matrix(&scheme, &qd),
            Err(SdcError::InvalidArgument(_))
        ));
    }
}
