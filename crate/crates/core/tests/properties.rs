use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use autoctl::diagnostics::{envelope_fit, envelope_preserved};
use autoctl::dilatation::{ChartMode, DilatationChart};
use autoctl::dynamics::{nonlinear_term, transport_sum_with, Nonlinearity};
use autoctl::experiments::config::{LatticeConfig, Model};
use autoctl::experiments::RunConfig;
use autoctl::steppers::{Scheme, StepPlan};
use autoctl::{DecayEnvelope, Exec, Lattice, ModeField};

fn field(n: usize, m: i64, c: f64, s: f64, seed: u64) -> ModeField {
    let lat = Lattice::new(n, m, 1.0).unwrap();
    let env = DecayEnvelope::new(c, s).unwrap();
    ModeField::from_envelope(&lat, &env, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    let scale = a.iter().chain(b).map(|z| z.norm()).fold(1.0, f64::max);
    a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol * scale)
}

prop_compose! {
    fn vector_field()(n in 2usize..=3, m in 1i64..=3, s in 0.0f64..4.0, c in 0.1f64..3.0, seed in any::<u64>())
        -> ModeField {
        field(n, m, c, s, seed)
    }
}

prop_compose! {
    fn small_field()(n in 1usize..=3, m in 1i64..=3, s in 0.0f64..4.0, c in 0.1f64..3.0, seed in any::<u64>())
        -> ModeField {
        field(n, m, c, s, seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn convolution_is_bilinear_and_symmetric(
        n in 1usize..=3, m in 1i64..=2, a in -2.0f64..2.0, s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()
    ) {
        let x = field(n, m, 1.0, 1.0, s1);
        let y = field(n, m, 1.0, 2.0, s2);
        let z = field(n, m, 1.0, 0.5, s3);
        let lat = x.lattice().clone();
        let (x0, y0, z0) = (x.component(0), y.component(0), z.component(0));
        let mix: Vec<Complex64> = x0.iter().zip(y0).map(|(p, q)| p * a + q).collect();
        let lhs = lat.convolve(&mix, z0).unwrap();
        let cx = lat.convolve(x0, z0).unwrap();
        let cy = lat.convolve(y0, z0).unwrap();
        let rhs: Vec<Complex64> = cx.iter().zip(&cy).map(|(p, q)| p * a + q).collect();
        prop_assert!(close(&lhs, &rhs, 1e-12));
        prop_assert!(close(&lat.convolve(z0, x0).unwrap(), &cx, 1e-13));
    }

    #[test]
    fn seq_and_par_agree_bitwise(v in small_field()) {
        let a = transport_sum_with(Exec::Seq, &v).unwrap();
        let b = transport_sum_with(Exec::Par, &v).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn projector_is_idempotent_and_solenoidal(v in vector_field()) {
        let p = v.leray_project().unwrap();
        let pp = p.leray_project().unwrap();
        prop_assert!(pp.max_diff(&p) <= 1e-14 * v.sup_norm().max(1.0));
        let div = p.divergence().iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(div <= 1e-12 * v.l2_norm().max(1.0));
        prop_assert!(p.l2_norm() <= v.l2_norm() * (1.0 + 1e-14));
    }

    #[test]
    fn navier_stokes_term_preserves_reality(v in vector_field()) {
        let w = v.leray_project().unwrap();
        let nl = nonlinear_term(&w, Nonlinearity::NavierStokes).unwrap();
        prop_assert!(nl.reality_defect() <= 1e-12 * nl.sup_norm().max(1.0));
    }

    #[test]
    fn hs_norm_is_monotone_in_s_and_homogeneous(v in small_field(), s1 in 0.0f64..6.0, ds in 0.0f64..4.0, c in -5.0f64..5.0) {
        let (a, b) = (v.hs_norm(s1), v.hs_norm(s1 + ds));
        prop_assert!(a <= b * (1.0 + 1e-14));
        let scaled = v.scaled(c).hs_norm(s1);
        prop_assert!((scaled - c.abs() * a).abs() <= 1e-13 * a.max(1e-300));
        prop_assert!((v.scaled(c).l2_norm() - c.abs() * v.l2_norm()).abs() <= 1e-13 * v.l2_norm());
    }

    #[test]
    fn chart_roundtrip(t0 in 0.0f64..10.0, x in 0.0f64..0.999, global in any::<bool>()) {
        let mode = if global { ChartMode::GlobalFactor } else { ChartMode::LocalizedFactor };
        let ch = DilatationChart::new(t0, 1.0, 1.0, mode).unwrap();
        let tau = t0 + x;
        let back = ch.tau_of_sigma(ch.sigma_of_tau(tau).unwrap()).unwrap();
        prop_assert!((back - tau).abs() <= 1e-12 * tau.max(1.0));
        let sigma = ch.sigma_of_tau(tau).unwrap();
        let m = ch.mu_at(sigma).unwrap();
        prop_assert!(m.mu > 0.0 && m.mu <= m.mu_tau1 && m.mu_tau1 <= m.mu_tau2);
    }

    #[test]
    fn envelope_fit_is_scale_equivariant(n in 1usize..=3, m in 2i64..=3, s in 0.5f64..5.0, k in 0.01f64..100.0, seed in any::<u64>()) {
        let v = field(n, m, 1.0, s, seed);
        let a = envelope_fit(&v).unwrap();
        let b = envelope_fit(&v.scaled(k)).unwrap();
        prop_assert!((a.envelope.s - b.envelope.s).abs() <= 1e-6);
        prop_assert!((b.envelope.c - k * a.envelope.c).abs() <= 1e-6 * k * a.envelope.c);
        prop_assert!(a.envelope.satisfied(&v));
    }

    #[test]
    fn envelope_preserved_is_monotone_in_c(v in small_field(), c in 0.05f64..5.0, s in 0.0f64..5.0, grow in 1.0f64..10.0) {
        let snaps = vec![(0.0, v.clone()), (1.0, v.scaled(0.5))];
        let tight = envelope_preserved(&snaps, &DecayEnvelope::new(c, s).unwrap()).unwrap();
        let loose = envelope_preserved(&snaps, &DecayEnvelope::new(c * grow, s).unwrap()).unwrap();
        prop_assert!(!tight.preserved || loose.preserved);
        prop_assert!(loose.worst_margin >= tight.worst_margin);
    }

    #[test]
    fn config_roundtrip(id in "[a-z][a-z0-9-]{0,12}", n in 1usize..=3, m in 0i64..=6, dt in 1e-4f64..0.1,
                        steps in 1usize..1000, seed in any::<u64>(), blow in any::<bool>()) {
        let cfg = RunConfig {
            id,
            model: Model::Burgers,
            seed,
            output_dir: None,
            expect_blowup: blow,
            nonlinearity: None,
            lattice: Some(LatticeConfig { n, m, l: 1.0 }),
            fluid: None,
            forcing: None,
            chart: None,
            plan: Some(StepPlan { dt, steps, scheme: Scheme::Rk4 }),
            initial: Some(autoctl::experiments::config::InitialConfig {
                kind: autoctl::experiments::config::InitialKind::Zero,
                c: None, s: None, zero_mean: false, project: None, path: None,
            }),
            diagnostics: Default::default(),
            ode: None,
            kp: None,
            kernel: None,
        };
        let text = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml_string().unwrap(), text);
    }
}

#[test]
fn shipped_configs_roundtrip() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::load(&path).unwrap();
            let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            assert_eq!(again, cfg, "{}", path.display());
            count += 1;
        }
    }
    assert!(count >= 8);
}
