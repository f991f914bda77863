use proptest::prelude::*;

use qgan_core::data::{
    aggregate_1s, granger_test, FlowRecord, Scaler, TimePoint, TAU,
};
use qgan_core::detect::{anomaly_score, compute_threshold, DetectionMode, Weights};
use qgan_core::qsim::{brute_force_unitary, Backend, Gate, NoiseModel, QuantumState, C64};
use qgan_core::vqc::{
    build_discriminator, build_generator, encode_angle, AngleSource, CircuitPlan, Discriminator,
    Generator, Layer, ParamVector,
};

fn gate(n: usize) -> impl Strategy<Value = Gate> {
    let angle = -7.0..7.0f64;
    prop_oneof![
        (0..n, angle.clone()).prop_map(|(qubit, angle)| Gate::Rx { qubit, angle }),
        (0..n, angle.clone()).prop_map(|(qubit, angle)| Gate::Ry { qubit, angle }),
        (0..n, angle).prop_map(|(qubit, angle)| Gate::Rz { qubit, angle }),
        (0..n, 1..n).prop_map(move |(c, d)| Gate::Cx {
            control: c,
            target: (c + d) % n,
        }),
    ]
}

fn circuit(max_qubits: usize, max_gates: usize) -> impl Strategy<Value = (usize, Vec<Gate>)> {
    (2..=max_qubits).prop_flat_map(move |n| (Just(n), prop::collection::vec(gate(n), 0..max_gates)))
}

fn point() -> impl Strategy<Value = TimePoint> {
    (-1.0..=1.0f64, -1.0..=1.0f64).prop_map(|(a, b)| TimePoint::new(a, b))
}

fn window() -> impl Strategy<Value = [TimePoint; TAU]> {
    [point(), point(), point()]
}

fn noise() -> impl Strategy<Value = NoiseModel> {
    (0.0..0.2f64, 0.0..0.2f64, 0.0..0.2f64).prop_map(|(p1, p2, readout_flip)| NoiseModel {
        p1,
        p2,
        readout_flip,
        enabled: true,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn statevector_norm_is_preserved(c in (2..=5usize).prop_flat_map(|n| (Just(n), prop::collection::vec(gate(n), 1000)))) {
        let (n, gates) = c;
        let mut s = QuantumState::new(n, &Backend::Pure).unwrap();
        s.run(&gates).unwrap();
        let norm: f64 = s.amplitudes().unwrap().iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn statevector_matches_brute_force_unitary((n, gates) in circuit(4, 30)) {
        let mut s = QuantumState::new(n, &Backend::Pure).unwrap();
        s.run(&gates).unwrap();
        let u = brute_force_unitary(&gates, n).unwrap();
        for (i, amp) in s.amplitudes().unwrap().iter().enumerate() {
            let want: C64 = u[(i, 0)];
            prop_assert!((amp - want).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_noise_density_matches_statevector((n, gates) in circuit(4, 30)) {
        let mut pure = QuantumState::new(n, &Backend::Pure).unwrap();
        pure.run(&gates).unwrap();
        let mut mixed = QuantumState::new(n, &Backend::Noisy(NoiseModel::noiseless())).unwrap();
        mixed.run(&gates).unwrap();
        for q in 0..n {
            prop_assert!((pure.expect_z(q).unwrap() - mixed.expect_z(q).unwrap()).abs() < 1e-10);
        }
        let disabled = NoiseModel { enabled: false, ..NoiseModel::default() };
        let mut off = QuantumState::new(n, &Backend::Noisy(disabled)).unwrap();
        off.run(&gates).unwrap();
        prop_assert!((pure.expect_z(0).unwrap() - off.expect_z(0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn density_matrix_is_a_state((n, gates) in circuit(3, 25), nm in noise()) {
        let mut s = QuantumState::new(n, &Backend::Noisy(nm)).unwrap();
        s.run(&gates).unwrap();
        let rho = s.density_matrix();
        prop_assert!((s.trace() - 1.0).abs() < 1e-10);
        prop_assert!((&rho - rho.adjoint()).norm() < 1e-10);
        let eig = nalgebra::linalg::SymmetricEigen::new(hermitian_to_real(&rho)).eigenvalues;
        prop_assert!(eig.iter().all(|&e| e > -1e-10), "eigenvalues {eig:?}");
    }

    #[test]
    fn encoding_round_trip(x in -1.0..=1.0f64) {
        let theta = encode_angle(x).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&theta));
        prop_assert!((theta.cos() - x).abs() < 1e-12);
    }

    #[test]
    fn outputs_are_bounded(w in window(), c in point(), seed in any::<u64>(), scale in 0.0..10.0f64) {
        let g = Generator::new(&CircuitPlan::default_generator()).unwrap();
        let d = Discriminator::new(&CircuitPlan::default_discriminator()).unwrap();
        let tg = ParamVector(ParamVector::init(30, seed).0.iter().map(|v| v * scale * 100.0).collect());
        let td = ParamVector(ParamVector::init(50, seed ^ 1).0.iter().map(|v| v * scale * 100.0).collect());
        let p = g.forward(&tg, &w, &Backend::Pure).unwrap();
        prop_assert!(p.a.abs() <= 1.0 && p.b.abs() <= 1.0);
        let s = d.forward(&td, &w, &c, &Backend::Pure).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn candidate_gradient_matches_finite_difference(
        w in window(),
        a in -0.9..0.9f64,
        b in -0.9..0.9f64,
        seed in any::<u64>(),
    ) {
        let d = Discriminator::new(&CircuitPlan::default_discriminator()).unwrap();
        let theta = ParamVector(ParamVector::init(50, seed).0.iter().map(|v| v * 50.0).collect());
        let c = TimePoint::new(a, b);
        let grad = d.candidate_grad(&theta, &w, &c, &Backend::Pure).unwrap();
        let h = 1e-6;
        for f in 0..2 {
            let shift = |delta: f64| {
                let mut p = c;
                if f == 0 { p.a += delta } else { p.b += delta }
                d.forward(&theta, &w, &p, &Backend::Pure).unwrap()
            };
            let fd = (shift(h) - shift(-h)) / (2.0 * h);
            prop_assert!((grad[f] - fd).abs() < 1e-6, "feature {f}: {} vs {fd}", grad[f]);
        }
    }

    #[test]
    fn generator_jacobian_matches_finite_difference(w in window(), seed in any::<u64>(), k in 0..30usize) {
        let g = Generator::new(&CircuitPlan::default_generator()).unwrap();
        let theta = ParamVector(ParamVector::init(30, seed).0.iter().map(|v| v * 50.0).collect());
        let (_, jac) = g.forward_with_jacobian(&theta, &w, &Backend::Pure).unwrap();
        let h = 1e-6;
        let at = |delta: f64| {
            let mut t = theta.clone();
            t.0[k] += delta;
            g.forward(&t, &w, &Backend::Pure).unwrap()
        };
        let (p, m) = (at(h), at(-h));
        prop_assert!((jac[k][0] - (p.a - m.a) / (2.0 * h)).abs() < 1e-6);
        prop_assert!((jac[k][1] - (p.b - m.b) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn score_is_a_convex_combination(lg in 0.0..10.0f64, ld in 0.0..10.0f64, mse in 0.0..4.0f64, d in 0.0..=1.0f64) {
        let w = Weights::from_losses(lg, ld).unwrap();
        prop_assert!((w.w_g + w.w_d - 1.0).abs() < 1e-12);
        prop_assert!(w.w_g >= 0.0 && w.w_d >= 0.0);
        let s = anomaly_score(mse, d, w);
        let (lo, hi) = (mse.min(1.0 - d), mse.max(1.0 - d));
        prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
        prop_assert_eq!(anomaly_score(mse, d, w.for_mode(DetectionMode::GenOnly)), mse);
        prop_assert_eq!(anomaly_score(mse, d, w.for_mode(DetectionMode::DiscOnly)), 1.0 - d);
        if lg > 0.0 && ld > 0.0 {
            // the component with the larger training loss gets the smaller weight
            prop_assert_eq!(lg > ld, w.w_g < w.w_d);
        }
    }

    #[test]
    fn threshold_bounds_false_alarms(scores in prop::collection::vec(0.0..5.0f64, 1..400), p in 50.0..=100.0f64) {
        let t = compute_threshold(&scores, p).unwrap();
        prop_assert!(scores.contains(&t.value));
        let above = scores.iter().filter(|&&s| s > t.value).count() as f64;
        let n = scores.len() as f64;
        prop_assert!(above <= n * (1.0 - p / 100.0) + 1e-6);
    }

    #[test]
    fn scaling_round_trip(
        pts in prop::collection::vec((0.0..1e6f64, 0.0..1e4f64), 2..50),
        probe in (0.0..1.0f64, 0.0..1.0f64),
    ) {
        let mut points: Vec<TimePoint> = pts.iter().map(|&(a, b)| TimePoint::new(a, b)).collect();
        points.push(TimePoint::new(pts[0].0 + 1.0, pts[0].1 + 1.0));
        let s = Scaler::fit(&points).unwrap();
        for p in &points {
            let (scaled, clamped) = s.apply(p);
            prop_assert!(!clamped);
            prop_assert!(scaled.a.abs() <= 1.0 && scaled.b.abs() <= 1.0);
            let back = s.unscale(&scaled);
            prop_assert!((back.a - p.a).abs() <= 1e-9 * (1.0 + p.a.abs()));
            prop_assert!((back.b - p.b).abs() <= 1e-9 * (1.0 + p.b.abs()));
        }
        let inside = TimePoint::new(
            s.min[0] + probe.0 * (s.max[0] - s.min[0]),
            s.min[1] + probe.1 * (s.max[1] - s.min[1]),
        );
        prop_assert!(!s.apply(&inside).1);
    }

    #[test]
    fn granger_unrestricted_fits_better(
        x in prop::collection::vec(-1.0..1.0f64, 40..120),
        noise in prop::collection::vec(-1.0..1.0f64, 120),
        lag in 1..4usize,
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| a * a + e).collect();
        if let Ok(r) = granger_test("x", &x, &y, lag) {
            prop_assert!(r.rss_unrestricted <= r.rss_restricted);
            prop_assert!(r.f_stat >= 0.0);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn aggregation_conserves_records(
        recs in prop::collection::vec((0..60i64, 0.0..1e5f64, 0.0..1500.0f64, any::<bool>()), 1..200),
    ) {
        let records: Vec<FlowRecord> = recs
            .iter()
            .map(|&(ts, a, b, attack)| FlowRecord {
                timestamp: 1_500_000_000 + ts,
                fwd_iat_mean: a,
                fwd_pkt_len_mean: b,
                label: if attack { "DDoS".into() } else { "Benign".into() },
            })
            .collect();
        let (buckets, report) = aggregate_1s(&records).unwrap();
        let first = recs.iter().map(|r| r.0).min().unwrap();
        let last = recs.iter().map(|r| r.0).max().unwrap();
        prop_assert_eq!(buckets.len() as i64, last - first + 1);
        let attacks = recs.iter().filter(|r| r.3).count() as u64;
        prop_assert_eq!(buckets.iter().map(|b| b.attack_count).sum::<u64>(), attacks);
        prop_assert_eq!(report.attack_records, attacks);
        let distinct: std::collections::BTreeSet<i64> = recs.iter().map(|r| r.0).collect();
        prop_assert_eq!(report.filled, buckets.len() - distinct.len());
        for (i, b) in buckets.iter().enumerate() {
            prop_assert_eq!(b.t, i as u64);
        }
        let (amin, amax) = recs.iter().fold((f64::MAX, f64::MIN), |(l, h), r| (l.min(r.1), h.max(r.1)));
        prop_assert!(buckets.iter().all(|b| b.a >= amin - 1e-9 && b.a <= amax + 1e-9));
    }
}

/// Real symmetric embedding `[[Re, -Im], [Im, Re]]`; its spectrum is that of `rho`, doubled.
fn hermitian_to_real(rho: &nalgebra::DMatrix<C64>) -> nalgebra::DMatrix<f64> {
    let n = rho.nrows();
    nalgebra::DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = rho[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

#[test]
fn input_layers_inject_the_window_in_order() {
    for (circuit, redundancy) in [
        (build_generator(&CircuitPlan::default_generator()).unwrap(), 2),
        (build_discriminator(&CircuitPlan::default_discriminator()).unwrap(), 2),
    ] {
        let injections: Vec<usize> = circuit
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Input { injection, .. } => Some(*injection),
                _ => None,
            })
            .collect();
        assert_eq!(injections, [0, 1, 2]);
        let steps: Vec<(usize, usize)> = circuit
            .angle_sources()
            .into_iter()
            .filter_map(|s| match s {
                Some(AngleSource::Window { step, feature }) => Some((step, feature)),
                _ => None,
            })
            .collect();
        assert!(steps.windows(2).all(|w| w[0].0 <= w[1].0));
        for step in 0..TAU {
            for feature in 0..2 {
                let n = steps.iter().filter(|&&s| s == (step, feature)).count();
                assert_eq!(n, redundancy);
            }
        }
    }
}
