use std::sync::OnceLock;

use matched_illum::colorimetry::{
    delta_e_ab, lab_to_xyz, uv_prime, xyz_of, xyz_to_lab, CmfSet, LabColor, WhitePoint,
};
use matched_illum::correction::evaluate;
use matched_illum::datasets;
use matched_illum::illuminator::synthetic::SyntheticConfig;
use matched_illum::illuminator::{solve_metamer, ChannelWeights, IlluminatorModel, RenderMode};
use matched_illum::matcher::bvls;
use matched_illum::matcher::bvls::{kkt_tolerance, kkt_violation};
use matched_illum::spectral::{
    diag_mul, luther_residual, sensor_response, Matrix31x3, SensorSet, Spectrum, Tristimulus, N,
};
use matched_illum::synth::{fit_with_size, macbeth_candidates, AchromaticChoice};
use matched_illum::Error;
use nalgebra::{DMatrix, DVector, Matrix3};
use proptest::prelude::*;

fn model() -> &'static IlluminatorModel {
    static M: OnceLock<IlluminatorModel> = OnceLock::new();
    M.get_or_init(|| SyntheticConfig::default().build().unwrap())
}

fn shift_free() -> &'static IlluminatorModel {
    static M: OnceLock<IlluminatorModel> = OnceLock::new();
    M.get_or_init(|| SyntheticConfig::default().shift_free().build().unwrap())
}

fn cmf() -> &'static CmfSet {
    static X: OnceLock<CmfSet> = OnceLock::new();
    X.get_or_init(datasets::cie1931)
}

fn candidates() -> &'static Vec<Spectrum> {
    static C: OnceLock<Vec<Spectrum>> = OnceLock::new();
    C.get_or_init(|| {
        macbeth_candidates(&datasets::colorchecker(), AchromaticChoice::default())
            .unwrap()
            .into_iter()
            .map(|(_, s)| s)
            .collect()
    })
}

fn spectrum(lo: f64, hi: f64) -> impl Strategy<Value = Spectrum> {
    prop::array::uniform31(lo..hi).prop_map(Spectrum::generic)
}

fn weights(k: usize) -> impl Strategy<Value = ChannelWeights> {
    prop::collection::vec(0.0..=1.0f64, k).prop_map(|c| ChannelWeights::new(c).unwrap())
}

fn close(a: &Spectrum, b: &Spectrum, tol: f64) -> bool {
    let scale = a
        .values()
        .iter()
        .chain(b.values())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    (0..N).all(|i| (a[i] - b[i]).abs() <= tol * scale)
}

fn close3(a: Tristimulus, b: Tristimulus, tol: f64) -> bool {
    let scale = a.0.iter().chain(&b.0).fold(1.0f64, |m, v| m.max(v.abs()));
    (0..3).all(|k| (a[k] - b[k]).abs() <= tol * scale)
}

fn invertible_3x3() -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform9(0.0..0.3f64)
        .prop_map(|v| Matrix3::from_column_slice(&v) + Matrix3::identity() * 1.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diag_mul_commutes_and_associates(a in spectrum(0.0, 2.0), b in spectrum(0.0, 2.0), c in spectrum(0.0, 2.0)) {
        prop_assert_eq!(diag_mul(&a, &b), diag_mul(&b, &a));
        prop_assert!(close(&diag_mul(&diag_mul(&a, &b), &c), &diag_mul(&a, &diag_mul(&b, &c)), 1e-15));
    }

    #[test]
    fn sensor_response_is_linear_in_reflectance(
        e in spectrum(0.0, 1.0), r1 in spectrum(0.0, 1.0), r2 in spectrum(0.0, 1.0),
        a in -2.0..2.0f64, b in -2.0..2.0f64,
    ) {
        let q = datasets::nikon_d5100();
        let mix = Spectrum::generic(std::array::from_fn(|i| a * r1[i] + b * r2[i]));
        let lhs = sensor_response(&q, &e, &mix);
        let (p1, p2) = (sensor_response(&q, &e, &r1), sensor_response(&q, &e, &r2));
        let rhs = Tristimulus(std::array::from_fn(|k| a * p1[k] + b * p2[k]));
        prop_assert!(close3(lhs, rhs, 1e-12));
    }

    #[test]
    fn luther_residual_ignores_invertible_mixing(t in invertible_3x3()) {
        let q = datasets::nikon_d5100();
        let qt = SensorSet::new(Matrix31x3::from(q.matrix() * t)).unwrap();
        let (_, r0) = luther_residual(&q, cmf()).unwrap();
        let (_, r1) = luther_residual(&qt, cmf()).unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-9 * r0.max(1.0));
    }

    #[test]
    fn xyz_is_linear_in_the_light(e1 in spectrum(0.0, 1.0), e2 in spectrum(0.0, 1.0), r in spectrum(0.0, 1.0), a in 0.0..3.0f64) {
        let e = Spectrum::generic(std::array::from_fn(|i| a * e1[i] + e2[i]));
        let lhs = xyz_of(&e, &r, cmf());
        let (t1, t2) = (xyz_of(&e1, &r, cmf()), xyz_of(&e2, &r, cmf()));
        prop_assert!(close3(lhs, Tristimulus(std::array::from_fn(|k| a * t1[k] + t2[k])), 1e-12));
    }

    #[test]
    fn lab_roundtrip(x in 0.0..1.2f64, y in 0.0..1.2f64, z in 0.0..1.2f64) {
        let w = WhitePoint::new(Tristimulus::new(0.95, 1.0, 1.09)).unwrap();
        let t = Tristimulus::new(x, y, z);
        let back = lab_to_xyz(xyz_to_lab(t, w).unwrap(), w);
        prop_assert!(close3(t, back, 1e-12));
    }

    #[test]
    fn delta_e_is_a_metric(p in prop::array::uniform3(-100.0..100.0f64), q in prop::array::uniform3(-100.0..100.0f64), r in prop::array::uniform3(-100.0..100.0f64)) {
        let lab = |v: [f64; 3]| LabColor::new(v[0], v[1], v[2]);
        let (p, q, r) = (lab(p), lab(q), lab(r));
        prop_assert_eq!(delta_e_ab(p, p), 0.0);
        prop_assert_eq!(delta_e_ab(p, q), delta_e_ab(q, p));
        prop_assert!(delta_e_ab(p, r) <= delta_e_ab(p, q) + delta_e_ab(q, r) + 1e-12);
    }

    #[test]
    fn uv_prime_ignores_scale(x in 0.01..2.0f64, y in 0.01..2.0f64, z in 0.01..2.0f64, k in 1e-3..1e3f64) {
        let a = uv_prime(Tristimulus::new(x, y, z)).unwrap();
        let b = uv_prime(Tristimulus::new(k * x, k * y, k * z)).unwrap();
        prop_assert!((a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14);
    }

    #[test]
    fn spectrum_at_is_continuous(ch in 0usize..10, c in 0.0..0.999f64) {
        let m = model().normalized();
        let a = m.spectrum_at(ch, c).unwrap();
        let b = m.spectrum_at(ch, c + 1e-9).unwrap();
        prop_assert!(close(&a, &b, 1e-6));
    }

    #[test]
    fn simple_render_is_linear(c1 in weights(10), c2 in weights(10), a in 0.0..1.0f64) {
        let m = model();
        let mix = ChannelWeights::new((0..10).map(|i| a * c1.as_slice()[i] + (1.0 - a) * c2.as_slice()[i]).collect()).unwrap();
        let (r1, r2) = (m.render(&c1, RenderMode::Simple).unwrap(), m.render(&c2, RenderMode::Simple).unwrap());
        let want = Spectrum::generic(std::array::from_fn(|i| a * r1[i] + (1.0 - a) * r2[i]));
        prop_assert!(close(&m.render(&mix, RenderMode::Simple).unwrap(), &want, 1e-13));
    }

    #[test]
    fn renders_agree_without_peak_shift(c in weights(10)) {
        let m = shift_free();
        let s = m.render(&c, RenderMode::Simple).unwrap();
        let x = m.render(&c, RenderMode::Complex).unwrap();
        prop_assert!(close(&s, &x, 1e-12));
    }

    #[test]
    fn evaluation_ignores_capture_light_scale(k in 1e-3..1e3f64, pick in 0usize..2) {
        let q = datasets::nikon_d5100();
        let e = [datasets::d65(), datasets::illuminant_a()][pick].clone();
        let refl: Vec<Spectrum> = datasets::colorchecker().into_iter().map(|(_, r)| r).collect();
        let base = evaluate(&q, &e, &e, &refl, cmf()).unwrap();
        let scaled = evaluate(&q, &e, &e.scaled(k), &refl, cmf()).unwrap();
        prop_assert!((base.mean - scaled.mean).abs() < 1e-9);
        prop_assert!((base.max - scaled.max).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bvls_satisfies_kkt(
        (m, k) in (1usize..15, 1usize..8),
        seed in prop::collection::vec(-1.0..1.0f64, 15 * 8 + 15 + 16),
        width in 0.0..2.0f64,
    ) {
        let g = DMatrix::from_fn(m, k, |i, j| seed[i * 8 + j]);
        let d = DVector::from_fn(m, |i, _| 3.0 * seed[120 + i]);
        let lo: Vec<f64> = (0..k).map(|j| seed[135 + j]).collect();
        let hi: Vec<f64> = (0..k).map(|j| seed[135 + j] + width * (1.0 + seed[143 + j]) / 2.0).collect();
        let c = bvls(&g, &d, &lo, &hi).unwrap();
        for j in 0..k {
            prop_assert!(c[j] >= lo[j] && c[j] <= hi[j]);
        }
        prop_assert!(kkt_violation(&g, &d, &c, &lo, &hi) <= kkt_tolerance(&g, &d));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metamer_respects_box_and_matches_xyz(
        tilt in -1.0..1.0f64, wiggle in 0.0..0.3f64, freq in 1.0..6.0f64, mode in prop::bool::ANY,
    ) {
        let target = Spectrum::from_fn(|nm| {
            let t = (nm - 550.0) / 150.0;
            1.0 + 0.5 * tilt * t + wiggle * (freq * t).sin()
        });
        let mode = if mode { RenderMode::Complex } else { RenderMode::Simple };
        match solve_metamer(model(), &target, cmf(), mode) {
            Ok(sol) => {
                prop_assert!(sol.weights.as_slice().iter().all(|c| (0.0..=1.0).contains(c)));
                prop_assert!(sol.scale > 0.0 && sol.scale <= 1.0);
                prop_assert!(sol.xyz_residual <= 1e-6);
            }
            Err(Error::Infeasible(msg)) => prop_assert!(msg.contains("u'v'")),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn larger_subsets_never_fit_worse(r in spectrum(0.02, 1.0)) {
        let errs: Vec<f64> = (1..=4).map(|k| fit_with_size(&r, candidates(), k).unwrap().rel_error).collect();
        for w in errs.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", errs);
        }
    }
}
