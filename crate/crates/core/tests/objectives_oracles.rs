use mcwf_core::autodiff::{ComplexTensor, ComplexVar, Tape};
use mcwf_core::objectives::{loss_base, loss_multi, loss_mwa, loss_psa, psa_target, ObjectiveConfig, ObjectiveKind};
use mcwf_core::stft::{project_consistent, stft, Spectrogram, SpecVar, StftConfig};
use mcwf_core::signal::TimeSignal;
use mcwf_core::Tensor;
use num_complex::Complex64;
use proptest::prelude::*;

const N: usize = 30;

fn cfg() -> StftConfig {
    StftConfig::new(8000, 12, 4).unwrap()
}

fn dims() -> (usize, usize) {
    (cfg().num_frames(N).unwrap(), cfg().num_bins())
}

fn spec_from(vals: &[f64], k: usize) -> Spectrogram {
    let (t, f) = dims();
    let len = t * f * k;
    let c = ComplexTensor::new(
        Tensor::new(vec![t, f, k], vals[..len].to_vec()).unwrap(),
        Tensor::new(vec![t, f, k], vals[len..2 * len].to_vec()).unwrap(),
    )
    .unwrap();
    Spectrogram::new(c, cfg(), N).unwrap()
}

/// Hermitian positive-definite `2 × 2` per bin: `[[a, b], [b*, d]]`.
fn psi_field(vals: &[f64]) -> Vec<Complex64> {
    let (t, f) = dims();
    let mut out = Vec::with_capacity(t * f * 4);
    for i in 0..t * f {
        let a = 0.2 + vals[4 * i].abs();
        let d = 0.2 + vals[4 * i + 1].abs();
        let b = Complex64::new(vals[4 * i + 2], vals[4 * i + 3]) * 0.1;
        out.extend([a.into(), b, b.conj(), d.into()]);
    }
    out
}

/// `Σ dᴴ Ψ⁻¹ d + ln det Ψ` per bin with the `2 × 2` closed-form inverse.
fn base_oracle(clean: &Spectrogram, est: &Spectrogram, psi: &[Complex64], eps: f64) -> f64 {
    let (t, f) = dims();
    let mut total = 0.0;
    for ti in 0..t {
        for fi in 0..f {
            let p = &psi[(ti * f + fi) * 4..(ti * f + fi) * 4 + 4];
            let reg = eps * (p[0].re + p[3].re) / 2.0;
            let (a, b, d) = (p[0].re + reg, p[1], p[3].re + reg);
            let det = a * d - b.norm_sqr();
            let d0 = clean.at(ti, fi, 0) - est.at(ti, fi, 0);
            let d1 = clean.at(ti, fi, 1) - est.at(ti, fi, 1);
            // inverse = [[d, −b], [−b*, a]] / det
            let quad = (d0.norm_sqr() * d + d1.norm_sqr() * a - 2.0 * (d0.conj() * b * d1).re) / det;
            total += quad + det.ln();
        }
    }
    total
}

fn spec_len() -> usize {
    let (t, f) = dims();
    2 * t * f * 2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn base_matches_closed_form(
        cv in prop::collection::vec(-1.0f64..1.0, spec_len()),
        ev in prop::collection::vec(-1.0f64..1.0, spec_len()),
        pv in prop::collection::vec(-1.0f64..1.0, 4 * dims().0 * dims().1),
    ) {
        let (t, f) = dims();
        let (clean, est) = (spec_from(&cv, 2), spec_from(&ev, 2));
        let psi = psi_field(&pv);
        let ocfg = ObjectiveConfig::with_kind(ObjectiveKind::Base);
        let tape = Tape::new();
        let psi_v = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[t, f, 2, 2], &psi).unwrap());
        let got = loss_base(SpecVar::constant(&tape, &clean), SpecVar::constant(&tape, &est), psi_v, &ocfg)
            .unwrap()
            .value();
        let expect = base_oracle(&clean, &est, &psi, ocfg.psi_eps);
        prop_assert!((got - expect).abs() <= 1e-10 * expect.abs().max(1.0), "{got} vs {expect}");
    }

    #[test]
    fn multi_without_consistency_is_base_bitwise(
        cv in prop::collection::vec(-1.0f64..1.0, spec_len()),
        ev in prop::collection::vec(-1.0f64..1.0, spec_len()),
        pv in prop::collection::vec(-1.0f64..1.0, 4 * dims().0 * dims().1),
    ) {
        let (t, f) = dims();
        let (clean, est) = (spec_from(&cv, 2), spec_from(&ev, 2));
        let tape = Tape::new();
        let psi_v = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[t, f, 2, 2], &psi_field(&pv)).unwrap());
        let (c, e) = (SpecVar::constant(&tape, &clean), SpecVar::constant(&tape, &est));
        let base = loss_base(c, e, psi_v, &ObjectiveConfig::with_kind(ObjectiveKind::Base)).unwrap().value();
        let multi_cfg = ObjectiveConfig { lambda: 0.0, ..ObjectiveConfig::with_kind(ObjectiveKind::Multi) };
        let multi = loss_multi(c, e, psi_v, &multi_cfg).unwrap().value();
        prop_assert_eq!(base.to_bits(), multi.to_bits());
    }

    #[test]
    fn multi_adds_weighted_consistency(
        cv in prop::collection::vec(-1.0f64..1.0, spec_len()),
        ev in prop::collection::vec(-1.0f64..1.0, spec_len()),
        pv in prop::collection::vec(-1.0f64..1.0, 4 * dims().0 * dims().1),
        lambda in 0.1f64..5.0,
    ) {
        let (t, f) = dims();
        let (clean, est) = (spec_from(&cv, 2), spec_from(&ev, 2));
        let psi = psi_field(&pv);
        let tape = Tape::new();
        let psi_v = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[t, f, 2, 2], &psi).unwrap());
        let ocfg = ObjectiveConfig { lambda, ..ObjectiveConfig::with_kind(ObjectiveKind::Multi) };
        let got = loss_multi(SpecVar::constant(&tape, &clean), SpecVar::constant(&tape, &est), psi_v, &ocfg)
            .unwrap()
            .value();
        let proj = project_consistent(&est).unwrap();
        let consistency = clean.data.sub(&proj.data).unwrap().norm_sq();
        let expect = base_oracle(&clean, &est, &psi, ocfg.psi_eps) + lambda * consistency;
        prop_assert!((got - expect).abs() <= 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn mwa_depends_only_on_the_resynthesis(
        cv in prop::collection::vec(-1.0f64..1.0, spec_len()),
        ev in prop::collection::vec(-1.0f64..1.0, spec_len()),
    ) {
        let (clean, est) = (spec_from(&cv, 2), spec_from(&ev, 2));
        let proj = project_consistent(&est).unwrap();
        let tape = Tape::new();
        let c = SpecVar::constant(&tape, &clean);
        let a = loss_mwa(c, SpecVar::constant(&tape, &est)).unwrap().value();
        let b = loss_mwa(c, SpecVar::constant(&tape, &proj)).unwrap().value();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn psa_matches_direct_sum(
        cv in prop::collection::vec(-1.0f64..1.0, spec_len() / 2),
        xv in prop::collection::vec(-1.0f64..1.0, spec_len() / 2),
        mv in prop::collection::vec(0.0f64..1.0, dims().0 * dims().1),
    ) {
        let (t, f) = dims();
        let (clean, noisy) = (spec_from(&cv, 1), spec_from(&xv, 1));
        let tape = Tape::new();
        let mask = tape.constant(Tensor::new(vec![t, f], mv.clone()).unwrap());
        let got = loss_psa(SpecVar::constant(&tape, &clean), SpecVar::constant(&tape, &noisy), mask, false)
            .unwrap()
            .value();
        let mut expect = 0.0;
        for ti in 0..t {
            for fi in 0..f {
                let (s, x) = (clean.at(ti, fi, 0), noisy.at(ti, fi, 0));
                let target = (s.norm() * (s.arg() - x.arg()).cos()).clamp(0.0, x.norm());
                expect += (x * mv[ti * f + fi] - Complex64::from_polar(target, x.arg())).norm_sqr();
            }
        }
        prop_assert!((got - expect).abs() <= 1e-10 * expect.max(1.0));
    }
}

#[test]
fn psa_target_on_a_consistent_pair() {
    let x: Vec<f64> = (0..N).map(|i| (i as f64 * 0.7).sin()).collect();
    let s: Vec<f64> = (0..N).map(|i| 0.5 * (i as f64 * 0.7).sin()).collect();
    let xs = stft(&TimeSignal::mono(x, 8000), &cfg()).unwrap();
    let ss = stft(&TimeSignal::mono(s, 8000), &cfg()).unwrap();
    // S = X / 2 everywhere, so the target is S itself.
    let target = psa_target(&ss.data, &xs.data).unwrap();
    assert!(target.sub(&ss.data).unwrap().norm_sq().sqrt() < 1e-12);
}
