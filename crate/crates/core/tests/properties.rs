use mpp_core::calibrate::{calibrate, CalibrationBundle, DegreeChoice, FitConfig};
use mpp_core::design::{reduce_metric, DesignMatrix, DesignSpec, Metric, TipShape};
use mpp_core::estimate::{estimate_frame, estimate_stream, Predictor};
use mpp_core::filter::lowpass_filter;
use mpp_core::flight::align_series;
use mpp_core::lstsq::fit_least_squares;
use mpp_core::poly::{binomial, expand_features};
use mpp_core::preprocess::{assemble_dataset, normalize_frame, PreprocessConfig};
use mpp_core::synth::{default_calibration_angles, generate_grid, OracleConfig};
use mpp_core::PressureFrame;
use proptest::prelude::*;
use std::sync::OnceLock;

fn small_bundle() -> &'static CalibrationBundle {
    static B: OnceLock<CalibrationBundle> = OnceLock::new();
    B.get_or_init(|| {
        let cfg = OracleConfig::new(TipShape::Cone, 0.5, 7);
        let runs = generate_grid(
            &cfg,
            &[6.0, 12.0, 18.0],
            &default_calibration_angles(),
            2.0,
            33.0,
        )
        .unwrap();
        let ds = assemble_dataset(&runs, &PreprocessConfig::default()).unwrap();
        let fit = FitConfig {
            degree: DegreeChoice::Fixed(3),
            ..FitConfig::default()
        };
        calibrate(&ds, &fit).unwrap().0
    })
}

// integer multiples of 2^-11 Pa: every rescaling by 0.5, 2 or 10 stays exact
fn quantized_frame() -> impl Strategy<Value = PressureFrame> {
    prop::array::uniform5(-1_024_000i64..=1_024_000)
        .prop_map(|k| PressureFrame::new(0.0, k.map(|v| v as f64 / 2048.0)))
        .prop_filter("needs airflow", |f| {
            normalize_frame(f, 2.0).is_ok() && normalize_frame(&f.scaled(0.5), 2.0).is_ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn normalization_is_scale_free(f in quantized_frame(), c in prop::sample::select(vec![0.5, 2.0, 10.0])) {
        let a = normalize_frame(&f, 0.0).unwrap();
        let b = normalize_frame(&f.scaled(c), 0.0).unwrap();
        prop_assert_eq!(a.x, b.x);
        prop_assert!((b.q - c * a.q).abs() <= 4.0 * f64::EPSILON * b.q);
        let norm: f64 = a.x.iter().map(|v| v * v).sum();
        prop_assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn angle_estimates_are_scale_free(f in quantized_frame(), c in prop::sample::select(vec![0.5, 2.0, 10.0])) {
        let p = Predictor::new(small_bundle());
        let a = p.estimate(&f).unwrap();
        let b = p.estimate(&f.scaled(c)).unwrap();
        prop_assert_eq!(a.state.aoa, b.state.aoa);
        prop_assert_eq!(a.state.aos, b.state.aos);
    }
}

fn brute_metric(m: &DesignMatrix, metric: Metric, d: usize) -> f64 {
    let [_, ns, _, na, nk] = m.shape();
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sd = |v: &[f64]| {
        let mu = avg(v);
        (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let sensors: Vec<usize> = match metric {
        Metric::AirspeedResolution | Metric::AirspeedNoise => vec![0],
        _ => vec![1, 2, 3, 4],
    };
    let mut speeds = Vec::new();
    for s in 0..ns {
        let mut sens = Vec::new();
        for &c in &sensors {
            let mut angs = Vec::new();
            for a in 0..na {
                let samples: Vec<f64> = (0..nk).map(|k| m.get(d, s, c, a, k).unwrap()).collect();
                angs.push(match metric {
                    Metric::AngularNoise | Metric::AirspeedNoise => sd(&samples),
                    _ => avg(&samples),
                });
            }
            sens.push(if metric == Metric::AngularResolution {
                sd(&angs)
            } else {
                avg(&angs)
            });
        }
        speeds.push(avg(&sens));
    }
    if metric == Metric::AirspeedResolution {
        sd(&speeds)
    } else {
        avg(&speeds)
    }
}

fn tensor() -> impl Strategy<Value = DesignMatrix> {
    (1usize..=2, 2usize..=3, 2usize..=4, 2usize..=6).prop_flat_map(|(nd, ns, na, nk)| {
        prop::collection::vec(-500.0f64..500.0, nd * ns * 5 * na * nk).prop_map(move |vals| {
            let designs = (0..nd)
                .map(|i| DesignSpec {
                    id: format!("d{i}"),
                    tip: TipShape::Cone,
                    spacing_mm: 0.4,
                })
                .collect();
            let mut m = DesignMatrix::new(designs, vec![3.0; ns], vec![(0.0, 0.0); na], nk);
            let mut it = vals.into_iter();
            for d in 0..nd {
                for s in 0..ns {
                    for c in 0..5 {
                        for a in 0..na {
                            for k in 0..nk {
                                m.set(d, s, c, a, k, it.next());
                            }
                        }
                    }
                }
            }
            m
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn metric_reduction_matches_nested_loops(m in tensor()) {
        for metric in Metric::ALL {
            let got = reduce_metric(&m, metric).unwrap();
            for (d, g) in got.iter().enumerate() {
                let want = brute_metric(&m, metric, d);
                prop_assert!((g - want).abs() <= 1e-12 * want.abs().max(1.0), "{metric:?}: {g} vs {want}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alignment_is_one_to_one(
        da in prop::collection::vec(0.005f64..0.1, 1..80),
        db in prop::collection::vec(0.005f64..0.1, 1..80),
        tol in 0.0f64..0.05,
    ) {
        let cum = |d: &[f64]| d.iter().scan(0.0, |t, x| { *t += x; Some(*t) }).collect::<Vec<f64>>();
        let (a, b) = (cum(&da), cum(&db));
        let al = align_series(&a, &b, tol);
        prop_assert_eq!(al.pairs.len() + al.unpaired_a, a.len());
        prop_assert_eq!(al.pairs.len() + al.unpaired_b, b.len());
        for w in al.pairs.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
        for &(i, j) in &al.pairs {
            prop_assert!((a[i] - b[j]).abs() <= tol);
        }
    }

    #[test]
    fn filter_passes_constants(c in -500.0f64..500.0, fc in 0.5f64..20.0) {
        let y = lowpass_filter(&vec![c; 200], 50.0, fc).unwrap();
        prop_assert!(y.iter().all(|v| (v - c).abs() <= 1e-9 * c.abs().max(1.0)));
    }

    #[test]
    fn feature_count_is_binomial(n in 1usize..7, d in 1usize..6) {
        let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        prop_assert_eq!(expand_features(&x, d).unwrap().len(), binomial(n + d, d));
    }

    #[test]
    fn least_squares_recovers_exact_polynomials(coef in prop::array::uniform4(-5.0f64..5.0)) {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| {
            let t = i as f64 / 10.0 - 2.0;
            vec![1.0, t, t * t, t * t * t]
        }).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.iter().zip(&coef).map(|(a, b)| a * b).sum()).collect();
        let got = fit_least_squares(&rows, &y).unwrap();
        for (g, c) in got.iter().zip(&coef) {
            prop_assert!((g - c).abs() < 1e-9);
        }
    }
}

#[test]
fn streaming_equals_batch() {
    let b = small_bundle();
    let cfg = OracleConfig::new(TipShape::Cone, 0.5, 3);
    let run = &generate_grid(&cfg, &[9.0], &[(10.0, -5.0)], 3.0, 50.0).unwrap()[0];
    let stream = estimate_stream(b, &run.frames, 50.0, 10.0).unwrap();
    let channels: Vec<Vec<f64>> = (0..5)
        .map(|c| {
            lowpass_filter(
                &run.frames.iter().map(|f| f.dp[c]).collect::<Vec<_>>(),
                50.0,
                10.0,
            )
            .unwrap()
        })
        .collect();
    for (i, s) in stream.iter().enumerate() {
        let f = PressureFrame::new(run.frames[i].t, std::array::from_fn(|c| channels[c][i]));
        assert_eq!(s.estimate.unwrap(), estimate_frame(b, &f).unwrap());
    }
}

#[test]
fn bundle_survives_json() {
    let b = small_bundle();
    let text = serde_json::to_string(b).unwrap();
    let back: CalibrationBundle = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, b);
    back.validate().unwrap();
}

#[test]
fn calibration_is_deterministic() {
    let cfg = OracleConfig::new(TipShape::Sphere, 0.5, 11);
    let runs = generate_grid(&cfg, &[6.0, 15.0], &default_calibration_angles(), 1.0, 33.0).unwrap();
    let ds = assemble_dataset(&runs, &PreprocessConfig::default()).unwrap();
    let fit = FitConfig {
        degree: DegreeChoice::Fixed(2),
        ..FitConfig::default()
    };
    let a = calibrate(&ds, &fit).unwrap();
    let b = calibrate(&ds, &fit).unwrap();
    assert_eq!(
        serde_json::to_string(&a.0).unwrap(),
        serde_json::to_string(&b.0).unwrap()
    );
    assert_eq!(a.1, b.1);
}

#[test]
fn unaugmented_fit_drops_dependent_monomials() {
    // unit-length inputs make x1^2 + ... + x5^2 collinear with the constant
    let cfg = OracleConfig::new(TipShape::Cone, 0.0, 5);
    let runs = generate_grid(&cfg, &[6.0, 15.0], &default_calibration_angles(), 1.0, 33.0).unwrap();
    let ds = assemble_dataset(&runs, &PreprocessConfig::default()).unwrap();
    let fit = FitConfig {
        degree: DegreeChoice::Fixed(2),
        augment: false,
        ..FitConfig::default()
    };
    let (bundle, report) = calibrate(&ds, &fit).unwrap();
    assert!(!bundle.metadata.dropped_monomials.aoa.is_empty());
    assert!(report.aoa.mae.is_finite());
}
