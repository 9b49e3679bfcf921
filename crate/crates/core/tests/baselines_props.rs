use mcwf_core::autodiff::ComplexTensor;
use mcwf_core::baselines::{apply_beamformer, mvdr_from_masks, tf_mask_enhance, BeamformerWeights};
use mcwf_core::enhance::oracle_mask_psd;
use mcwf_core::scene::{generate_scene, random_manifest, SceneDefaults};
use mcwf_core::stft::{stft, Spectrogram, StftConfig};
use mcwf_core::Tensor;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene_spec(seed: u64) -> (Spectrogram, Spectrogram, Spectrogram) {
    let d = SceneDefaults {
        duration_s: 0.5,
        snr_db_min: 0.0,
        snr_db_max: 0.0,
        ..SceneDefaults::default()
    };
    let mix = generate_scene(&random_manifest(seed, 0, &d).unwrap()).unwrap();
    let cfg = StftConfig::default();
    (
        stft(&mix.mixture, &cfg).unwrap(),
        stft(&mix.speech, &cfg).unwrap(),
        stft(&mix.noise, &cfg).unwrap(),
    )
}

/// Naive `Σ_t M x xᴴ / Σ_t M` at one frequency.
fn scm(x: &Spectrogram, mask: &Tensor, f: usize) -> [[Complex64; 2]; 2] {
    let mut r = [[Complex64::default(); 2]; 2];
    let mut msum = 0.0;
    for t in 0..x.frames() {
        let m = mask.data()[t * x.bins() + f];
        msum += m;
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += m * x.at(t, f, i) * x.at(t, f, j).conj();
            }
        }
    }
    r.map(|row| row.map(|v| v / msum))
}

/// Principal eigenvector of a `2 × 2` Hermitian matrix.
fn principal(r: &[[Complex64; 2]; 2]) -> [Complex64; 2] {
    let (p, q, s) = (r[0][0].re, r[0][1], r[1][1].re);
    let lambda = 0.5 * (p + s) + (0.25 * (p - s).powi(2) + q.norm_sqr()).sqrt();
    let v = if q.norm() > 1e-300 {
        [q, Complex64::new(lambda - p, 0.0)]
    } else if p >= s {
        [Complex64::new(1.0, 0.0), Complex64::default()]
    } else {
        [Complex64::default(), Complex64::new(1.0, 0.0)]
    };
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

fn quad(r: &[[Complex64; 2]; 2], w: &[Complex64; 2]) -> f64 {
    let mut acc = Complex64::default();
    for i in 0..2 {
        for j in 0..2 {
            acc += w[i].conj() * r[i][j] * w[j];
        }
    }
    acc.re
}

#[test]
fn mvdr_is_distortionless_and_minimizes_noise_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..3 {
        let (x, s, n) = scene_spec(seed);
        let m = oracle_mask_psd(&x, &s, &n, 0).unwrap();
        let bw = mvdr_from_masks(&x, &m.mask_s, &m.mask_n, 0).unwrap();
        let w_all = bw.w.to_complex();
        for f in (1..x.bins()).step_by(16) {
            let a = principal(&scm(&x, &m.mask_s, f));
            let rn = scm(&x, &m.mask_n, f);
            let w = [w_all[2 * f], w_all[2 * f + 1]];
            let wha = w[0].conj() * a[0] + w[1].conj() * a[1];
            assert!((wha - a[0]).norm() < 1e-9 * a[0].norm().max(1e-12), "f {f}: {wha} vs {}", a[0]);
            let best = quad(&rn, &w);
            for _ in 0..1000 {
                let z = [
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                ];
                // Remove the component along a so that the constraint still holds.
                let c = a[0].conj() * z[0] + a[1].conj() * z[1];
                let scale = w[0].norm() + w[1].norm();
                let feasible = [w[0] + (z[0] - a[0] * c) * scale, w[1] + (z[1] - a[1] * c) * scale];
                assert!(quad(&rn, &feasible) >= best * (1.0 - 1e-6), "f {f}");
            }
        }
    }
}

#[test]
fn white_noise_mvdr_is_the_matched_filter() {
    // R_s = a aᴴ from one frame, R_n = I from mask weights on unit frames.
    let cfg = StftConfig::new(8000, 16, 4).unwrap();
    let n = 16;
    let t = cfg.num_frames(n).unwrap();
    let f = cfg.num_bins();
    let a = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
    let mut data = Vec::with_capacity(t * f * 2);
    for ti in 0..t {
        for _ in 0..f {
            match ti {
                0 => data.extend(a),
                1 => data.extend([Complex64::new(1.0, 0.0), Complex64::default()]),
                2 => data.extend([Complex64::default(), Complex64::new(1.0, 0.0)]),
                _ => data.extend([Complex64::default(); 2]),
            }
        }
    }
    let x = Spectrogram::new(ComplexTensor::from_complex(&[t, f, 2], &data).unwrap(), cfg, n).unwrap();
    let ms = Tensor::from_fn(&[t, f], |i| if i / f == 0 { 1.0 } else { 0.0 });
    let mn = Tensor::from_fn(&[t, f], |i| if i / f == 1 || i / f == 2 { 1.0 } else { 0.0 });
    let w = mvdr_from_masks(&x, &ms, &mn, 0).unwrap().w.to_complex();
    for fi in 0..f {
        let wf = [w[2 * fi], w[2 * fi + 1]];
        // w ∝ a with wᴴa = a_0, so w = a · conj(a_0) / ‖a‖² (eps-level slack).
        for c in 0..2 {
            assert!((wf[c] - a[c] * a[0].conj()).norm() < 1e-5);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mvdr_ignores_mask_scale(c in 0.01f64..1.0, seed in 0u64..4) {
        let (x, s, n) = scene_spec(seed);
        let m = oracle_mask_psd(&x, &s, &n, 0).unwrap();
        let w1 = mvdr_from_masks(&x, &m.mask_s, &m.mask_n, 0).unwrap();
        let w2 = mvdr_from_masks(&x, &m.mask_s.scale(c), &m.mask_n.scale(c), 0).unwrap();
        prop_assert!(w1.w.sub(&w2.w).unwrap().norm_sq().sqrt() < 1e-10 * (1.0 + w1.w.norm_sq().sqrt()));
    }

    #[test]
    fn beamformer_and_mask_match_loop_oracles(
        xv in prop::collection::vec(-1.0f64..1.0, 2 * 10 * 9 * 2),
        wv in prop::collection::vec(-1.0f64..1.0, 2 * 9 * 2),
        mv in prop::collection::vec(0.0f64..1.0, 10 * 9),
    ) {
        let cfg = StftConfig::new(8000, 16, 4).unwrap();
        let (t, f, k) = (10, 9, 2);
        let len = t * f * k;
        let x = Spectrogram::new(
            ComplexTensor::new(Tensor::new(vec![t, f, k], xv[..len].to_vec()).unwrap(), Tensor::new(vec![t, f, k], xv[len..].to_vec()).unwrap()).unwrap(),
            cfg,
            38,
        )
        .unwrap();
        let w = BeamformerWeights {
            w: ComplexTensor::new(Tensor::new(vec![f, k], wv[..f * k].to_vec()).unwrap(), Tensor::new(vec![f, k], wv[f * k..].to_vec()).unwrap()).unwrap(),
            reference_channel: 0,
        };
        let y = apply_beamformer(&w, &x).unwrap();
        let mask = Tensor::new(vec![t, f], mv.clone()).unwrap();
        let ym = tf_mask_enhance(&x, &mask, 1).unwrap();
        let wc = w.w.to_complex();
        for ti in 0..t {
            for fi in 0..f {
                let expect = wc[fi * k].conj() * x.at(ti, fi, 0) + wc[fi * k + 1].conj() * x.at(ti, fi, 1);
                prop_assert!((y.at(ti, fi, 0) - expect).norm() < 1e-12);
                prop_assert!((ym.at(ti, fi, 0) - x.at(ti, fi, 1) * mv[ti * f + fi]).norm() < 1e-12);
            }
        }
    }
}
