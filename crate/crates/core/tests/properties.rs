use proptest::prelude::*;

use tvl1flow::filters::{iterated_median, median_filter};
use tvl1flow::image_ops::{derivative_5pt, warp_image, Axis};
use tvl1flow::io::{decode_flo, encode_flo};
use tvl1flow::pd::{apply_k, apply_k_star, solve, LinearizedData};
use tvl1flow::{epe, estimate_flow, DualField, FlowField, MedianMode, ScalarField, SolverConfig};

fn field(w: usize, h: usize, lo: f64, hi: f64) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(lo..hi, w * h).prop_map(move |v| ScalarField::new(w, h, v).unwrap())
}

fn sized_fields(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<ScalarField>> {
    (2usize..9, 2usize..9)
        .prop_flat_map(move |(w, h)| prop::collection::vec(field(w, h, lo, hi), n))
}

fn dot(a: &[&ScalarField], b: &[&ScalarField]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(p, q)| p * q)
                .sum::<f64>()
        })
        .sum()
}

fn texture(w: usize, h: usize, dx: f64) -> ScalarField {
    ScalarField::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64 - dx, y as f64);
        0.5 + 0.2 * (x / 3.0).sin() * (y / 4.0).cos() + 0.2 * ((x + y) / 6.0).cos()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn k_star_is_the_adjoint_of_k(fs in sized_fields(8, -2.0, 2.0)) {
        let phi = fs[7].map(f64::abs);
        let u = FlowField::new(fs[0].clone(), fs[1].clone()).unwrap();
        let d = DualField::new(
            (fs[2].clone(), fs[3].clone()),
            (fs[4].clone(), fs[5].clone()),
            fs[6].clone(),
        )
        .unwrap();
        let ku = apply_k(&u, &phi).unwrap();
        let ktd = apply_k_star(&d, &phi).unwrap();
        let lhs = dot(&ku.channels(), &d.channels());
        let rhs = dot(&[ktd.u1(), ktd.u2()], &[u.u1(), u.u2()]);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn medians_stay_within_the_input_range(fs in (4usize..20, 4usize..20)
        .prop_flat_map(|(w, h)| field(w, h, 0.0, 1.0)))
    {
        let (lo, hi) = (fs.min(), fs.max());
        for out in [median_filter(&fs, 3).unwrap(), iterated_median(&fs, 5, 3, 2.0).unwrap()] {
            prop_assert!(out.min() >= lo && out.max() <= hi);
        }
    }

    #[test]
    fn flo_bytes_round_trip(fs in sized_fields(2, -1e3, 1e3)) {
        let flow = FlowField::new(
            fs[0].map(|v| v as f32 as f64),
            fs[1].map(|v| v as f32 as f64),
        )
        .unwrap();
        let bytes = encode_flo(&flow);
        let back = decode_flo(&bytes, "mem.flo".as_ref()).unwrap();
        prop_assert_eq!(&back, &flow);
        prop_assert_eq!(encode_flo(&back), bytes);
    }

    #[test]
    fn zero_flow_warp_is_identity(fs in sized_fields(1, 0.0, 1.0)) {
        let f = &fs[0];
        let (w, h) = f.dims();
        let warped = warp_image(f, &FlowField::zeros(w, h)).unwrap();
        for (a, b) in warped.as_slice().iter().zip(f.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_images_have_zero_derivatives(c in 0.0f64..1.0, w in 5usize..16, h in 5usize..16) {
        let f = ScalarField::filled(w, h, c);
        for axis in [Axis::X, Axis::Y] {
            prop_assert!(derivative_5pt(&f, axis).unwrap().as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn config_text_round_trips(
        tau in 0.01f64..2.0,
        sigma in 0.01f64..2.0,
        warps in 1usize..20,
        normalize in any::<bool>(),
        mode in prop::sample::select(vec![MedianMode::Off, MedianMode::Single, MedianMode::Iterated]),
    ) {
        let cfg = SolverConfig {
            tau,
            sigma,
            warps_per_level: warps,
            normalize_steps: normalize,
            median_mode: mode,
            ..SolverConfig::default()
        };
        prop_assert_eq!(SolverConfig::from_kv_text(&cfg.to_kv_text()).unwrap(), cfg);
    }

    #[test]
    fn consistent_data_keeps_the_zero_flow(fs in sized_fields(3, -1.0, 1.0)) {
        let (w, h) = fs[0].dims();
        let lin = LinearizedData::new(
            fs[0].clone(),
            fs[1].clone(),
            ScalarField::zeros(w, h),
            fs[2].map(|v| v.abs().min(1.0)),
        )
        .unwrap();
        let out = solve(&lin, &SolverConfig::default()).unwrap();
        prop_assert!(out.flow.u1().as_slice().iter().chain(out.flow.u2().as_slice()).all(|&v| v == 0.0));
        prop_assert!(out.trace.iter().all(|e| e.is_finite() && *e >= 0.0));
    }
}

#[test]
fn recovers_a_small_translation() {
    let (w, h) = (64, 48);
    let f1 = texture(w, h, 0.0);
    let f2 = texture(w, h, 1.0);
    let cfg = SolverConfig {
        warps_per_level: 5,
        wmf_enabled: false,
        ..SolverConfig::default()
    };
    let result = estimate_flow(&f1, &f2, &cfg).unwrap();
    let gt = FlowField::uniform(w, h, 1.0, 0.0);
    let mask = tvl1flow::ValidMask::from_fn(w, h, |x, y| {
        (4..w - 4).contains(&x) && (4..h - 4).contains(&y)
    });
    let e = epe(&result.flow, &gt, Some(&mask)).unwrap();
    assert!(e < 0.05, "interior EPE {e}");
    assert_eq!(
        result.traces.len(),
        5 * result.traces.iter().map(|t| t.level).max().unwrap() + 5
    );
}
