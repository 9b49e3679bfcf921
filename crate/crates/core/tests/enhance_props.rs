use mcwf_core::autodiff::{ComplexTensor, ComplexVar, Tape};
use mcwf_core::enhance::{estimate_time_invariant_scm, mwf_enhance, posterior_covariance, wiener_filter, MaskPsd, MwfConfig};
use mcwf_core::stft::{Spectrogram, StftConfig};
use mcwf_core::Tensor;
use num_complex::Complex64;
use proptest::prelude::*;

fn cplx(vals: &[f64]) -> Vec<Complex64> {
    let h = vals.len() / 2;
    (0..h).map(|i| Complex64::new(vals[i], vals[h + i])).collect()
}

/// `A Aᴴ + floor·I` per batch element, from raw `A` entries.
fn psd_field(a: &[Complex64], batch: usize, k: usize, floor: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); batch * k * k];
    for b in 0..batch {
        for i in 0..k {
            for j in 0..k {
                let mut acc: Complex64 = (0..k).map(|l| a[b * k * k + i * k + l] * a[b * k * k + j * k + l].conj()).sum();
                if i == j {
                    acc += floor;
                }
                out[b * k * k + i * k + j] = acc;
            }
        }
    }
    out
}

fn mat_mul(a: &[Complex64], b: &[Complex64], k: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = (0..k).map(|l| a[i * k + l] * b[l * k + j]).sum();
        }
    }
    out
}

fn field_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2 * len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scm_matches_naive_sum_and_is_psd(
        xv in field_strategy(5 * 3 * 2),
        mv in prop::collection::vec(0.01f64..1.0, 5 * 3),
        probe in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let (t, f, k) = (5, 3, 2);
        let x = cplx(&xv);
        let tape = Tape::new();
        let xc = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[t, f, k], &x).unwrap());
        let mask = tape.constant(Tensor::new(vec![t, f], mv.clone()).unwrap());
        let r = estimate_time_invariant_scm(xc, mask).unwrap().value().to_complex();
        let v = cplx(&probe);
        for fi in 0..f {
            let msum: f64 = (0..t).map(|ti| mv[ti * f + fi]).sum();
            for i in 0..k {
                for j in 0..k {
                    let naive: Complex64 = (0..t)
                        .map(|ti| mv[ti * f + fi] * x[(ti * f + fi) * k + i] * x[(ti * f + fi) * k + j].conj())
                        .sum::<Complex64>()
                        / msum;
                    let got = r[(fi * k + i) * k + j];
                    prop_assert!((got - naive).norm() < 1e-12);
                    prop_assert!((got - r[(fi * k + j) * k + i].conj()).norm() < 1e-14);
                }
            }
            let mut quad = Complex64::default();
            for i in 0..k {
                for j in 0..k {
                    quad += v[i].conj() * r[(fi * k + i) * k + j] * v[j];
                }
            }
            prop_assert!(quad.re >= -1e-12);
        }
    }

    #[test]
    fn scm_is_invariant_to_mask_scale(
        xv in field_strategy(4 * 2 * 2),
        mv in prop::collection::vec(0.01f64..1.0, 4 * 2),
        c in 0.01f64..100.0,
    ) {
        let tape = Tape::new();
        let xc = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[4, 2, 2], &cplx(&xv)).unwrap());
        let m = Tensor::new(vec![4, 2], mv).unwrap();
        let r1 = estimate_time_invariant_scm(xc, tape.constant(m.clone())).unwrap().value();
        let r2 = estimate_time_invariant_scm(xc, tape.constant(m.scale(c))).unwrap().value();
        prop_assert!(r1.sub(&r2).unwrap().norm_sq().sqrt() < 1e-12 * (1.0 + r1.norm_sq().sqrt()));
    }

    #[test]
    fn wiener_filter_satisfies_its_defining_equation(
        av in field_strategy(6 * 4),
        bv in field_strategy(6 * 4),
    ) {
        let (batch, k) = (6, 2);
        let rs = psd_field(&cplx(&av), batch, k, 1e-3);
        let rn = psd_field(&cplx(&bv), batch, k, 1e-3);
        let tape = Tape::new();
        let rs_v = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[batch, k, k], &rs).unwrap());
        let rn_v = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[batch, k, k], &rn).unwrap());
        let w = wiener_filter(rs_v, rn_v, 0.0).unwrap().value().to_complex();
        for b in 0..batch {
            let sl = |v: &[Complex64]| v[b * k * k..(b + 1) * k * k].to_vec();
            let sum: Vec<Complex64> = sl(&rs).iter().zip(sl(&rn)).map(|(a, c)| a + c).collect();
            let lhs = mat_mul(&sl(&w), &sum, k);
            let resid: f64 = lhs.iter().zip(sl(&rs)).map(|(a, c)| (a - c).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(resid < 1e-9, "bin {b}: residual {resid}");
        }
    }

    #[test]
    fn single_channel_gain_is_the_scalar_wiener_gain(
        vs in prop::collection::vec(1e-3f64..10.0, 8),
        vn in prop::collection::vec(1e-3f64..10.0, 8),
    ) {
        let tape = Tape::new();
        let scalar = |v: &[f64]| ComplexVar::constant(&tape, &ComplexTensor::new(Tensor::new(vec![8, 1, 1], v.to_vec()).unwrap(), Tensor::zeros(&[8, 1, 1])).unwrap());
        let w = wiener_filter(scalar(&vs), scalar(&vn), 0.0).unwrap().value();
        for i in 0..8 {
            let expect = vs[i] / (vs[i] + vn[i]);
            prop_assert!((w.re.data()[i] - expect).abs() < 1e-12);
            prop_assert!(w.im.data()[i].abs() < 1e-15);
        }
    }
}

#[test]
fn noiseless_limit_gives_identity_and_zero_posterior() {
    let k = 2;
    let rs = psd_field(
        &[Complex64::new(1.0, 0.2), Complex64::new(0.3, -0.1), Complex64::new(-0.2, 0.5), Complex64::new(0.8, 0.0)],
        1,
        k,
        0.1,
    );
    let mut prev = f64::INFINITY;
    for delta in [1e-3, 1e-6, 1e-9] {
        let rn: Vec<Complex64> = [delta, 0.0, 0.0, delta].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let tape = Tape::new();
        let rs_v = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[1, k, k], &rs).unwrap());
        let rn_v = ComplexVar::constant(&tape, &ComplexTensor::from_complex(&[1, k, k], &rn).unwrap());
        let w = wiener_filter(rs_v, rn_v, 0.0).unwrap();
        let psi = posterior_covariance(w, rs_v).unwrap().value();
        let wv = w.value().to_complex();
        let dev = (wv[0] - 1.0).norm() + wv[1].norm() + wv[2].norm() + (wv[3] - 1.0).norm();
        assert!(dev < 100.0 * delta, "delta {delta}: |W − I| = {dev}");
        let psi_norm = psi.norm_sq().sqrt();
        assert!(psi_norm < 10.0 * delta, "delta {delta}: |Ψ| = {psi_norm}");
        assert!(psi_norm < prev);
        prev = psi_norm;
    }
}

#[test]
fn full_mask_with_unit_psd_matches_scm_ratio() {
    // One channel, one frequency: W reduces to v_s r_s / (v_s r_s + v_n r_n).
    let cfg = StftConfig::new(8000, 16, 4).unwrap();
    let n = 40;
    let t = cfg.num_frames(n).unwrap();
    let f = cfg.num_bins();
    let x = ComplexTensor::new(
        Tensor::from_fn(&[t, f, 1], |i| ((i * 13 % 7) as f64 - 3.0) * 0.3 + 0.1),
        Tensor::from_fn(&[t, f, 1], |i| ((i * 5 % 11) as f64 - 5.0) * 0.2),
    )
    .unwrap();
    let spec = Spectrogram::new(x.clone(), cfg, n).unwrap();
    let m = MaskPsd {
        mask_s: Tensor::full(&[t, f], 0.7),
        mask_n: Tensor::full(&[t, f], 0.7),
        psd_s: Tensor::full(&[t, f], 3.0),
        psd_n: Tensor::full(&[t, f], 1.0),
    };
    let cfg_mwf = MwfConfig { eps: 0.0, ..MwfConfig::default() };
    let est = mwf_enhance(&spec, &m, &cfg_mwf).unwrap();
    // Equal masks give equal SCMs, so the gain is 3 / (3 + 1) everywhere.
    let expect = x.scale(0.75);
    assert!(est.data.sub(&expect).unwrap().norm_sq().sqrt() < 1e-12);
}
