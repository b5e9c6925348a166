use num_complex::Complex64;
use proptest::prelude::*;

use pdc_core::components::{chain_transmission, mode_overlap, ComponentChain, GaussianMode, OpticalElement};
use pdc_core::counting::{background_corrected_g2, BackgroundCorrection, CountRecord};
use pdc_core::jsa::{max_fiber_distance, schmidt_decompose, JointSpectralAmplitude, SpectralGridAxes};
use pdc_core::phasematch::{
    find_degenerate_wavelength, find_poling_period, qpm_mismatch, shg_tuning_curve, TuningCurve, WaveguideSpec,
};
use pdc_core::{Polarization, Topology};

fn element() -> impl Strategy<Value = OpticalElement> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(te, tm)| OpticalElement::new("e", te, tm).unwrap())
}

proptest! {
    #[test]
    fn overlap_symmetric_and_scale_free(
        ax in 0.5..10.0f64, ay in 0.5..10.0f64, bx in 0.5..10.0f64, by in 0.5..10.0f64, s in 0.1..10.0f64,
    ) {
        let a = GaussianMode::new(ax, ay).unwrap();
        let b = GaussianMode::new(bx, by).unwrap();
        let ab = mode_overlap(&a, &b).unwrap();
        prop_assert!(ab > 0.0 && ab <= 1.0);
        prop_assert!((ab - mode_overlap(&b, &a).unwrap()).abs() < 1e-15);
        let scaled = mode_overlap(&a.scaled(s).unwrap(), &b.scaled(s).unwrap()).unwrap();
        prop_assert!((ab - scaled).abs() < 1e-12);
    }

    #[test]
    fn appending_elements_never_raises_transmission(
        elements in prop::collection::vec(element(), 0..6), extra in element(), length in 0.0..3.0f64,
    ) {
        let mut chain = ComponentChain { elements, ..ComponentChain::pigtailed_idler(length) };
        for pol in [Polarization::TE, Polarization::TM] {
            let before = chain_transmission(&chain, pol, true).unwrap();
            prop_assert!((0.0..=1.0).contains(&before));
            let mut longer = chain.clone();
            longer.elements.push(extra.clone());
            prop_assert!(chain_transmission(&longer, pol, true).unwrap() <= before);
        }
        chain.elements.reverse();
        let reversed = chain_transmission(&chain, Polarization::TM, false).unwrap();
        chain.elements.reverse();
        let forward = chain_transmission(&chain, Polarization::TM, false).unwrap();
        prop_assert!((reversed - forward).abs() <= 1e-15 * forward.max(1e-300));
    }

    #[test]
    fn mismatch_symmetric_under_exchange(signal in 1500.0..1620.0f64, idler in 1500.0..1620.0f64) {
        let spec = WaveguideSpec::default();
        let mut swapped = spec.clone();
        swapped.polarization_map = spec.polarization_map.swapped();
        let pump = 1.0 / (1.0 / signal + 1.0 / idler);
        let a = qpm_mismatch(&spec, pump, signal, idler).unwrap();
        let b = qpm_mismatch(&swapped, pump, idler, signal).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn shg_curve_is_normalized(center in 1540.0..1570.0f64, half in 0.5..5.0f64, points in 3usize..200) {
        let curve = shg_tuning_curve(&WaveguideSpec::default(), center - half, center + half, points).unwrap();
        prop_assert!(curve.intensity.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(curve.intensity.iter().filter(|v| **v == 1.0).count(), 1);
        let back = TuningCurve::from_csv(&curve.to_csv().unwrap()).unwrap();
        prop_assert_eq!(back.wavelength_nm.len(), curve.wavelength_nm.len());
    }

    #[test]
    fn period_and_degeneracy_round_trip(temperature in 20.0..120.0f64, lambda in 1500.0..1620.0f64) {
        let spec = WaveguideSpec::default().with_temperature(temperature);
        let period = find_poling_period(&spec, lambda / 2.0, lambda, lambda).unwrap();
        let designed = WaveguideSpec { poling_period_um: period, ..spec };
        let back = find_degenerate_wavelength(&designed).unwrap();
        prop_assert!((back - lambda).abs() < 1e-6, "{} vs {}", back, lambda);
    }

    #[test]
    fn fiber_reach_scales_inversely(bandwidth in 0.01..10.0f64, factor in 1.1..10.0f64) {
        let a = max_fiber_distance(bandwidth, 17.0, 1e9).unwrap();
        let b = max_fiber_distance(bandwidth * factor, 17.0, 1e9).unwrap();
        prop_assert!((a / b - factor).abs() < 1e-12 * factor);
    }

    #[test]
    fn background_correction_is_monotone(g2 in 1.0..3.0f64, b1 in 0.0..0.5f64, db in 0.0..0.4f64) {
        let c = BackgroundCorrection::PoissonianAdmixture;
        let lo = background_corrected_g2(g2, b1, c).unwrap();
        let hi = background_corrected_g2(g2, b1 + db, c).unwrap();
        prop_assert!(hi >= lo && lo >= g2);
    }

    #[test]
    fn record_merge_is_commutative(
        a in prop::array::uniform3(0u64..1000), b in prop::array::uniform3(0u64..1000),
    ) {
        let make = |s: [u64; 3]| {
            let mut r = CountRecord::empty(Topology::Direct, 1.0);
            r.pulses = 10_000;
            r.singles = [s[0] + s[2], s[1] + s[2], 0];
            r.coincidences = [s[2], 0, 0];
            r.integration_time_s = 0.01;
            r
        };
        let (ra, rb) = (make(a), make(b));
        let ab = ra.merge(&rb).unwrap();
        prop_assert_eq!(&ab, &rb.merge(&ra).unwrap());
        prop_assert!(ab.validate().is_ok());
        prop_assert_eq!(CountRecord::from_json(&ab.to_json().unwrap()).unwrap(), ab);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schmidt_number_ignores_global_factor_and_transposition(
        width in 0.3..3.0f64, corr in -0.9..0.9f64, re in -3.0..3.0f64, im in -3.0..3.0f64,
    ) {
        prop_assume!(re.abs() + im.abs() > 1e-3);
        let axes = SpectralGridAxes::centered(1550.0, 1550.0, 6.0, 48).unwrap();
        let jsa = JointSpectralAmplitude::from_fn(axes, |s, i| {
            let (x, y) = ((s - 1550.0) / width, (i - 1550.0) / width);
            Ok(Complex64::from_polar((-(x * x + y * y - 2.0 * corr * x * y) / 2.0).exp(), 0.2 * x * y))
        })
        .unwrap();
        let k = schmidt_decompose(&jsa).unwrap().schmidt_number();
        prop_assert!(k >= 1.0 - 1e-12);
        let scaled = schmidt_decompose(&jsa.scaled(Complex64::new(re, im))).unwrap().schmidt_number();
        let transposed = schmidt_decompose(&jsa.transposed()).unwrap().schmidt_number();
        prop_assert!((scaled - k).abs() < 1e-9 * k);
        prop_assert!((transposed - k).abs() < 1e-9 * k);
    }
}
