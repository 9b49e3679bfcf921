use mcwf_core::autodiff::{complex_matmul, hermitian_inverse, hermitian_logdet, ComplexTensor, ComplexVar, Tape, Var};
use mcwf_core::{Result, Tensor};
use num_complex::Complex64;
use proptest::prelude::*;

/// Central differences of `f` at `x`.
fn numeric_grad(x: &Tensor, h: f64, f: &dyn Fn(&Tensor) -> f64) -> Tensor {
    let mut g = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let mut p = x.clone();
        p.data_mut()[i] += h;
        let mut m = x.clone();
        m.data_mut()[i] -= h;
        g.data_mut()[i] = (f(&p) - f(&m)) / (2.0 * h);
    }
    g
}

fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
    let scale = 1.0 + b.max_abs();
    let err = a.sub(b).unwrap().max_abs();
    assert!(err <= tol * scale, "max abs diff {err} (scale {scale})");
}

fn composite<'t>(x: Var<'t>, y: Var<'t>) -> Result<Var<'t>> {
    let a = x.tanh().mul(y.sigmoid())?;
    let b = x.square().add_scalar(1.0).log(0.0)?.mul(y.softplus())?;
    let c = a.add(b)?.div(y.exp().add_scalar(0.5), 0.0)?;
    let m = x.reshape(&[3, 4])?.matmul(y.reshape(&[4, 3])?)?;
    let s = m.sum_axis(0)?.cos().sum();
    let d = x.abs().add_scalar(0.1).sqrt(0.0)?.sum();
    c.sum().add(s)?.add(d)
}

fn eval_composite(x: &Tensor, y: &Tensor) -> f64 {
    let tape = Tape::new();
    composite(tape.constant(x.clone()), tape.constant(y.clone())).unwrap().item()
}

fn tensor(vals: &[f64], shape: &[usize]) -> Tensor {
    Tensor::new(shape.to_vec(), vals.to_vec()).unwrap()
}

/// `A + Aᴴ + shift·I` for a batch of `K × K` complex `A`.
fn hermitian_from<'t>(a: ComplexVar<'t>, shift: f64, k: usize) -> ComplexVar<'t> {
    let tape = a.tape();
    let shape = a.shape();
    let batch: usize = shape[..shape.len() - 2].iter().product();
    let mut eye = vec![0.0; batch * k * k];
    for b in 0..batch {
        for i in 0..k {
            eye[b * k * k + i * k + i] = shift;
        }
    }
    let eye = ComplexVar::constant(tape, &ComplexTensor::new(Tensor::new(shape.clone(), eye).unwrap(), Tensor::zeros(&shape)).unwrap());
    a.add(a.adjoint().unwrap()).unwrap().add(eye).unwrap()
}

fn complex_loss<'t>(a: ComplexVar<'t>, weights: &ComplexTensor, k: usize) -> Result<Var<'t>> {
    let m = hermitian_from(a, 4.0, k);
    let inv = hermitian_inverse(m, 1e-6)?;
    let w = ComplexVar::constant(a.tape(), weights);
    let prod = inv.mul(w)?;
    let ld = hermitian_logdet(m, 1e-6)?.sum();
    prod.re.sum().add(prod.im.scale(0.5).sum())?.add(ld)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn real_ops_match_finite_differences(
        xv in prop::collection::vec(-1.5f64..1.5, 12),
        yv in prop::collection::vec(-1.5f64..1.5, 12),
    ) {
        let (x0, y0) = (tensor(&xv, &[12]), tensor(&yv, &[12]));
        prop_assume!(xv.iter().all(|v| v.abs() > 1e-3));
        let tape = Tape::new();
        let (x, y) = (tape.leaf(x0.clone()), tape.leaf(y0.clone()));
        let grads = tape.backward(composite(x, y).unwrap()).unwrap();
        let gx = numeric_grad(&x0, 1e-6, &|p| eval_composite(p, &y0));
        let gy = numeric_grad(&y0, 1e-6, &|p| eval_composite(&x0, p));
        assert_close(&grads.wrt(x), &gx, 1e-6);
        assert_close(&grads.wrt(y), &gy, 1e-6);
    }

    #[test]
    fn backward_is_linear_in_the_loss(
        xv in prop::collection::vec(-1.0f64..1.0, 12),
        yv in prop::collection::vec(-1.0f64..1.0, 12),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let tape = Tape::new();
        let (x, y) = (tape.leaf(tensor(&xv, &[12])), tape.leaf(tensor(&yv, &[12])));
        let f = composite(x, y).unwrap();
        let g = x.mul(y).unwrap().exp().sum();
        let comb = f.scale(alpha).add(g.scale(beta)).unwrap();
        let gc = tape.backward(comb).unwrap().wrt(x);
        let gf = tape.backward(f).unwrap().wrt(x);
        let gg = tape.backward(g).unwrap().wrt(x);
        let expect = gf.scale(alpha).add(&gg.scale(beta)).unwrap();
        assert_close(&gc, &expect, 1e-12);
    }

    #[test]
    fn complex_pipeline_matches_finite_differences(
        vals in prop::collection::vec(-1.0f64..1.0, 2 * 3 * 4),
        wvals in prop::collection::vec(-1.0f64..1.0, 2 * 3 * 4),
    ) {
        let k = 2;
        let shape = [3, k, k];
        let re0 = tensor(&vals[..12], &shape);
        let im0 = tensor(&vals[12..], &shape);
        let weights = ComplexTensor::new(tensor(&wvals[..12], &shape), tensor(&wvals[12..], &shape)).unwrap();
        let tape = Tape::new();
        let a = ComplexVar::leaf(&tape, &ComplexTensor::new(re0.clone(), im0.clone()).unwrap());
        let grads = tape.backward(complex_loss(a, &weights, k).unwrap()).unwrap();
        let value = |re: &Tensor, im: &Tensor| {
            let t = Tape::new();
            let a = ComplexVar::constant(&t, &ComplexTensor::new(re.clone(), im.clone()).unwrap());
            complex_loss(a, &weights, k).unwrap().item()
        };
        assert_close(&grads.wrt(a.re), &numeric_grad(&re0, 1e-6, &|p| value(p, &im0)), 1e-6);
        assert_close(&grads.wrt(a.im), &numeric_grad(&im0, 1e-6, &|p| value(&re0, p)), 1e-6);
    }

    #[test]
    fn complex_matmul_matches_naive_product(
        av in prop::collection::vec(-2.0f64..2.0, 2 * 2 * 3 * 4),
        bv in prop::collection::vec(-2.0f64..2.0, 2 * 2 * 4 * 2),
    ) {
        let a = ComplexTensor::new(tensor(&av[..24], &[2, 3, 4]), tensor(&av[24..], &[2, 3, 4])).unwrap();
        let b = ComplexTensor::new(tensor(&bv[..16], &[2, 4, 2]), tensor(&bv[16..], &[2, 4, 2])).unwrap();
        let tape = Tape::new();
        let c = complex_matmul(ComplexVar::constant(&tape, &a), ComplexVar::constant(&tape, &b)).unwrap().value();
        prop_assert_eq!(c.shape(), &[2, 3, 2]);
        let (az, bz, cz) = (a.to_complex(), b.to_complex(), c.to_complex());
        for n in 0..2 {
            for i in 0..3 {
                for j in 0..2 {
                    let expect: Complex64 = (0..4).map(|l| az[n * 12 + i * 4 + l] * bz[n * 8 + l * 2 + j]).sum();
                    prop_assert!((cz[n * 6 + i * 2 + j] - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity(vals in prop::collection::vec(-1.0f64..1.0, 2 * 4 * 9)) {
        let k = 3;
        let shape = [4, k, k];
        let a = ComplexTensor::new(tensor(&vals[..36], &shape), tensor(&vals[36..], &shape)).unwrap();
        let tape = Tape::new();
        let av = ComplexVar::constant(&tape, &a);
        // A Aᴴ + I is Hermitian positive definite.
        let m = hermitian_from(av.matmul(av.adjoint().unwrap()).unwrap().scale(0.5), 1.0, k);
        let inv = hermitian_inverse(m, 0.0).unwrap();
        let prod = inv.matmul(m).unwrap().value().to_complex();
        for b in 0..4 {
            for i in 0..k {
                for j in 0..k {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((prod[b * 9 + i * k + j] - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn logdet_matches_eigenvalues(
        a in 0.1f64..5.0,
        d in 0.1f64..5.0,
        br in -1.0f64..1.0,
        bi in -1.0f64..1.0,
    ) {
        let b = Complex64::new(br, bi);
        prop_assume!(a * d > b.norm_sqr() + 1e-3);
        let m = ComplexTensor::from_complex(&[2, 2], &[a.into(), b, b.conj(), d.into()]).unwrap();
        let tape = Tape::new();
        let ld = hermitian_logdet(ComplexVar::constant(&tape, &m), 0.0).unwrap().item();
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
        let expect = (mean + radius).ln() + (mean - radius).ln();
        prop_assert!((ld - expect).abs() < 1e-10 * (1.0 + expect.abs()));
    }
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[12], |i| (i as f64 * 0.37).sin()));
        let y = tape.leaf(Tensor::from_fn(&[12], |i| (i as f64 * 0.11).cos()));
        let g = tape.backward(composite(x, y).unwrap()).unwrap();
        (g.wrt(x), g.wrt(y))
    };
    assert_eq!(run(), run());
}
