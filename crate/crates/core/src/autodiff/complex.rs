//! Complex tensors as real/imaginary pairs, and the batched Hermitian
//! inverse and log-determinant used by the Wiener filter and the NLL loss.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BackwardFn, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative asymmetry above which an input is rejected as non-Hermitian.
const HERMITIAN_TOL: f64 = 1e-8;
/// Relative pivot magnitude below which a matrix counts as singular.
const PIVOT_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexTensor {
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexTensor {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::shape("ComplexTensor::new", re.shape(), im.shape()));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            re: Tensor::zeros(shape),
            im: Tensor::zeros(shape),
        }
    }

    pub fn from_complex(shape: &[usize], data: &[Complex64]) -> Result<Self> {
        Self::new(
            Tensor::new(shape.to_vec(), data.iter().map(|c| c.re).collect())?,
            Tensor::new(shape.to_vec(), data.iter().map(|c| c.im).collect())?,
        )
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn numel(&self) -> usize {
        self.re.numel()
    }

    pub fn get(&self, i: usize) -> Complex64 {
        Complex64::new(self.re.data()[i], self.im.data()[i])
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re
            .data()
            .iter()
            .zip(self.im.data())
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.re.norm_sq() + self.im.norm_sq()
    }

    pub fn sub(&self, other: &ComplexTensor) -> Result<Self> {
        Ok(Self {
            re: self.re.sub(&other.re)?,
            im: self.im.sub(&other.im)?,
        })
    }

    pub fn add(&self, other: &ComplexTensor) -> Result<Self> {
        Ok(Self {
            re: self.re.add(&other.re)?,
            im: self.im.add(&other.im)?,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            re: self.re.scale(c),
            im: self.im.scale(c),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ComplexVar<'t> {
    pub re: Var<'t>,
    pub im: Var<'t>,
}

impl<'t> ComplexVar<'t> {
    pub fn new(re: Var<'t>, im: Var<'t>) -> Result<Self> {
        re.same_tape(&im)?;
        if re.shape() != im.shape() {
            return Err(Error::shape("ComplexVar::new", &re.shape(), &im.shape()));
        }
        Ok(Self { re, im })
    }

    pub fn constant(tape: &'t Tape, value: &ComplexTensor) -> Self {
        Self {
            re: tape.constant(value.re.clone()),
            im: tape.constant(value.im.clone()),
        }
    }

    pub fn leaf(tape: &'t Tape, value: &ComplexTensor) -> Self {
        Self {
            re: tape.leaf(value.re.clone()),
            im: tape.leaf(value.im.clone()),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.re.tape()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.re.shape()
    }

    pub fn value(&self) -> ComplexTensor {
        ComplexTensor {
            re: (*self.re.value()).clone(),
            im: (*self.im.value()).clone(),
        }
    }

    pub fn add(self, other: ComplexVar<'t>) -> Result<Self> {
        Ok(Self {
            re: self.re.add(other.re)?,
            im: self.im.add(other.im)?,
        })
    }

    pub fn sub(self, other: ComplexVar<'t>) -> Result<Self> {
        Ok(Self {
            re: self.re.sub(other.re)?,
            im: self.im.sub(other.im)?,
        })
    }

    /// Elementwise complex product (broadcasting).
    pub fn mul(self, other: ComplexVar<'t>) -> Result<Self> {
        Ok(Self {
            re: self.re.mul(other.re)?.sub(self.im.mul(other.im)?)?,
            im: self.re.mul(other.im)?.add(self.im.mul(other.re)?)?,
        })
    }

    /// Multiply by a real tensor (broadcasting).
    pub fn mul_real(self, r: Var<'t>) -> Result<Self> {
        Ok(Self {
            re: self.re.mul(r)?,
            im: self.im.mul(r)?,
        })
    }

    pub fn scale(self, c: f64) -> Self {
        Self {
            re: self.re.scale(c),
            im: self.im.scale(c),
        }
    }

    pub fn conj(self) -> Self {
        Self {
            re: self.re,
            im: self.im.neg(),
        }
    }

    pub fn transpose(self) -> Result<Self> {
        Ok(Self {
            re: self.re.transpose_last2()?,
            im: self.im.transpose_last2()?,
        })
    }

    /// Conjugate transpose of the trailing two axes.
    pub fn adjoint(self) -> Result<Self> {
        Ok(self.transpose()?.conj())
    }

    /// `(A + Aᴴ) / 2`.
    pub fn hermitian_part(self) -> Result<Self> {
        let re_t = self.re.transpose_last2()?;
        let im_t = self.im.transpose_last2()?;
        Ok(Self {
            re: self.re.add(re_t)?.scale(0.5),
            im: self.im.sub(im_t)?.scale(0.5),
        })
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Ok(Self {
            re: self.re.reshape(shape)?,
            im: self.im.reshape(shape)?,
        })
    }

    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Self> {
        Ok(Self {
            re: self.re.slice(axis, start, len)?,
            im: self.im.slice(axis, start, len)?,
        })
    }

    pub fn sum_axis(self, axis: usize) -> Result<Self> {
        Ok(Self {
            re: self.re.sum_axis(axis)?,
            im: self.im.sum_axis(axis)?,
        })
    }

    /// `|z|²` elementwise.
    pub fn abs_sq(self) -> Result<Var<'t>> {
        self.re.square().add(self.im.square())
    }

    pub fn matmul(self, other: ComplexVar<'t>) -> Result<Self> {
        complex_matmul(self, other)
    }

    fn select_packed(packed: Var<'t>) -> Result<Self> {
        Ok(Self {
            re: packed.select(0)?,
            im: packed.select(1)?,
        })
    }
}

/// Batched complex matrix product over the trailing two axes.
pub fn complex_matmul<'t>(a: ComplexVar<'t>, b: ComplexVar<'t>) -> Result<ComplexVar<'t>> {
    Ok(ComplexVar {
        re: a.re.matmul(b.re)?.sub(a.im.matmul(b.im)?)?,
        im: a.re.matmul(b.im)?.add(a.im.matmul(b.re)?)?,
    })
}

/// Shape of a batch of square matrices: (batch count, K).
fn square_batch(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    let n = shape.len();
    if n < 2 || shape[n - 1] != shape[n - 2] || shape[n - 1] == 0 {
        return Err(Error::shape(op, shape, &[]));
    }
    let k = shape[n - 1];
    Ok((shape[..n - 2].iter().product(), k))
}

fn load(re: &[f64], im: &[f64], off: usize, kk: usize) -> Vec<Complex64> {
    (0..kk).map(|i| Complex64::new(re[off + i], im[off + i])).collect()
}

/// Symmetrize and regularize one matrix: `(M + Mᴴ)/2 + eps·tr/K·I`.
fn regularize(m: &[Complex64], k: usize, eps: f64, batch: usize) -> Result<Vec<Complex64>> {
    let scale = m.iter().fold(0.0f64, |s, z| s.max(z.norm()));
    let mut asym = 0.0f64;
    let mut out = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for j in 0..k {
            let a = m[i * k + j];
            let b = m[j * k + i].conj();
            asym = asym.max((a - b).norm());
            out[i * k + j] = (a + b) * 0.5;
        }
    }
    if asym > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NonHermitian {
            batch,
            asymmetry: asym,
        });
    }
    let trace: f64 = (0..k).map(|i| out[i * k + i].re).sum();
    let shift = eps * trace / k as f64;
    for i in 0..k {
        out[i * k + i] += shift;
    }
    Ok(out)
}

struct Lu {
    inverse: Vec<Complex64>,
    log_abs_det: f64,
    det_phase: Complex64,
}

/// Gaussian elimination with partial pivoting on a dense `k × k` matrix.
fn lu_invert(m: &[Complex64], k: usize, batch: usize) -> Result<Lu> {
    let scale = m.iter().fold(0.0f64, |s, z| s.max(z.norm()));
    let tol = PIVOT_TOL * scale;
    let mut a = m.to_vec();
    let mut inv = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        inv[i * k + i] = Complex64::new(1.0, 0.0);
    }
    let mut log_abs_det = 0.0;
    let mut phase = Complex64::new(1.0, 0.0);
    for col in 0..k {
        let (piv, mag) = (col..k)
            .map(|r| (r, a[r * k + col].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(mag > tol) || scale == 0.0 {
            return Err(Error::SingularMatrix { batch, pivot: mag });
        }
        if piv != col {
            for j in 0..k {
                a.swap(piv * k + j, col * k + j);
                inv.swap(piv * k + j, col * k + j);
            }
            phase = -phase;
        }
        let p = a[col * k + col];
        log_abs_det += mag.ln();
        phase *= p / mag;
        let pinv = p.inv();
        for j in 0..k {
            a[col * k + j] *= pinv;
            inv[col * k + j] *= pinv;
        }
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = a[r * k + col];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..k {
                let (av, iv) = (a[col * k + j], inv[col * k + j]);
                a[r * k + j] -= f * av;
                inv[r * k + j] -= f * iv;
            }
        }
    }
    Ok(Lu {
        inverse: inv,
        log_abs_det,
        det_phase: phase,
    })
}

fn mat_mul(a: &[Complex64], b: &[Complex64], k: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for p in 0..k {
            let av = a[i * k + p];
            for j in 0..k {
                out[i * k + j] += av * b[p * k + j];
            }
        }
    }
    out
}

fn adjoint(a: &[Complex64], k: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for j in 0..k {
            out[j * k + i] = a[i * k + j].conj();
        }
    }
    out
}

/// Pull a gradient w.r.t. the regularized matrix back through the trace
/// shift and the Hermitian symmetrization.
fn pull_back_regularization(mut g: Vec<Complex64>, k: usize, eps: f64) -> Vec<Complex64> {
    let tr: f64 = (0..k).map(|i| g[i * k + i].re).sum();
    for i in 0..k {
        g[i * k + i] += eps * tr / k as f64;
    }
    let mut out = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = (g[i * k + j] + g[j * k + i].conj()) * 0.5;
        }
    }
    out
}

fn check_eps(eps: f64) -> Result<()> {
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError {
            op: "hermitian regularization",
            detail: format!("eps must be finite and non-negative, got {eps}"),
        })
    }
}

/// Batched inverse of `(M + Mᴴ)/2 + eps·(tr M / K)·I` over the trailing
/// `K × K` axes.
pub fn hermitian_inverse<'t>(m: ComplexVar<'t>, eps: f64) -> Result<ComplexVar<'t>> {
    check_eps(eps)?;
    let (re, im) = (m.re.value(), m.im.value());
    let shape = re.shape().to_vec();
    let (batch, k) = square_batch(&shape, "hermitian_inverse")?;
    let kk = k * k;
    let mut inverses = Vec::with_capacity(batch);
    let mut packed = vec![0.0; 2 * batch * kk];
    for b in 0..batch {
        let mreg = regularize(&load(re.data(), im.data(), b * kk, kk), k, eps, b)?;
        let lu = lu_invert(&mreg, k, b)?;
        for (i, z) in lu.inverse.iter().enumerate() {
            packed[b * kk + i] = z.re;
            packed[batch * kk + b * kk + i] = z.im;
        }
        inverses.push(lu.inverse);
    }
    let mut packed_shape = vec![2];
    packed_shape.extend(&shape);
    let out = Tensor::new(packed_shape, packed)?;
    let backward: BackwardFn = Box::new(move |g, wants| {
        let gd = g.data();
        let mut gre = vec![0.0; batch * kk];
        let mut gim = vec![0.0; batch * kk];
        for (b, y) in inverses.iter().enumerate() {
            let gy: Vec<Complex64> = (0..kk)
                .map(|i| Complex64::new(gd[b * kk + i], gd[batch * kk + b * kk + i]))
                .collect();
            // ∂L/∂M = −Yᴴ G Yᴴ
            let yh = adjoint(y, k);
            let gm: Vec<Complex64> = mat_mul(&mat_mul(&yh, &gy, k), &yh, k).into_iter().map(|z| -z).collect();
            let gm = pull_back_regularization(gm, k, eps);
            for (i, z) in gm.iter().enumerate() {
                gre[b * kk + i] = z.re;
                gim[b * kk + i] = z.im;
            }
        }
        vec![
            wants[0].then(|| Tensor::new(shape.clone(), gre).expect("inverse grad")),
            wants[1].then(|| Tensor::new(shape.clone(), gim).expect("inverse grad")),
        ]
    });
    let packed = m.tape().push_op(out, &[m.re, m.im], backward);
    ComplexVar::select_packed(packed)
}

/// Batched real log-determinant of the same regularized matrix as
/// [`hermitian_inverse`]; the determinant of a Hermitian positive-definite
/// matrix is real and positive, anything else is a domain error.
pub fn hermitian_logdet<'t>(m: ComplexVar<'t>, eps: f64) -> Result<Var<'t>> {
    check_eps(eps)?;
    let (re, im) = (m.re.value(), m.im.value());
    let shape = re.shape().to_vec();
    let (batch, k) = square_batch(&shape, "hermitian_logdet")?;
    let kk = k * k;
    let mut inverses = Vec::with_capacity(batch);
    let mut values = Vec::with_capacity(batch);
    for b in 0..batch {
        let mreg = regularize(&load(re.data(), im.data(), b * kk, kk), k, eps, b)?;
        let lu = lu_invert(&mreg, k, b)?;
        if lu.det_phase.re <= 0.0 {
            return Err(Error::DomainError {
                op: "hermitian_logdet",
                detail: format!("determinant is not positive at batch element {b}"),
            });
        }
        values.push(lu.log_abs_det);
        inverses.push(lu.inverse);
    }
    let out = Tensor::new(shape[..shape.len() - 2].to_vec(), values)?;
    let backward: BackwardFn = Box::new(move |g, wants| {
        let gd = g.data();
        let mut gre = vec![0.0; batch * kk];
        let mut gim = vec![0.0; batch * kk];
        for (b, y) in inverses.iter().enumerate() {
            // ∂ log det / ∂M = M⁻ᴴ
            let gm: Vec<Complex64> = adjoint(y, k).into_iter().map(|z| z * gd[b]).collect();
            let gm = pull_back_regularization(gm, k, eps);
            for (i, z) in gm.iter().enumerate() {
                gre[b * kk + i] = z.re;
                gim[b * kk + i] = z.im;
            }
        }
        vec![
            wants[0].then(|| Tensor::new(shape.clone(), gre).expect("logdet grad")),
            wants[1].then(|| Tensor::new(shape.clone(), gim).expect("logdet grad")),
        ]
    });
    Ok(m.tape().push_op(out, &[m.re, m.im], backward))
}
