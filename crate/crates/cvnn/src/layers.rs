//! Complex layers with explicit forward and backward passes.
//!
//! Every backward takes and returns cotangents in the real-pair convention
//! `∂L/∂Re + j·∂L/∂Im`, which is what real-valued backprop on the isomorphic
//! two-channel network produces.

use num_complex::Complex;
use rand::Rng;
use rtf_core::Exec;

use crate::error::{NetError, Result};
use crate::scalar::{cgemm, MatRef, Real};
use crate::tensor::{ComplexTensor, Param};

/// Training mode caches activations and uses batch statistics; evaluation
/// mode uses running statistics and keeps nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Complex weight drawn with Rayleigh-distributed magnitude (scale
/// `1/sqrt(fan_in)`) and uniform phase.
pub fn rayleigh_weight<T: Real, R: Rng + ?Sized>(rng: &mut R, fan_in: usize) -> Complex<T> {
    let sigma = 1.0 / (fan_in as f64).sqrt();
    let u: f64 = rng.random();
    let mag = sigma * (-2.0 * (1.0 - u).ln()).sqrt();
    let phase = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Complex::new(T::c(mag * phase.cos()), T::c(mag * phase.sin()))
}

/// Output size and leading pad of a "same" convolution along one axis.
pub fn same_geometry(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

/// Upper bound on the im2col buffer, in complex elements.
const IM2COL_BUDGET: usize = 1 << 22;

/// Complex 2-D cross-correlation with "same" zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    /// `[cout, kh, kw, cin]`
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub exec: Exec,
    cache: Option<ComplexTensor<T>>,
}

struct ConvGeom {
    oh: usize,
    ow: usize,
    pt: usize,
    pl: usize,
    patch: usize,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel.0 * kernel.1 * cin;
        let w = (0..cout * fan_in).map(|_| rayleigh_weight(rng, fan_in)).collect();
        Conv2d {
            weight: Param::new(format!("{name}.weight"), vec![cout, kernel.0, kernel.1, cin], w),
            bias: Param::new(format!("{name}.bias"), vec![cout], vec![zero(); cout]),
            kernel,
            stride,
            exec: Exec::default(),
            cache: None,
        }
    }

    pub fn cin(&self) -> usize {
        self.weight.shape[3]
    }

    pub fn cout(&self) -> usize {
        self.weight.shape[0]
    }

    fn geom(&self, x: &ComplexTensor<T>) -> Result<ConvGeom> {
        if x.c != self.cin() {
            return Err(NetError::Shape(format!(
                "{}: {} input channels, expected {}",
                self.weight.name,
                x.c,
                self.cin()
            )));
        }
        let (oh, pt) = same_geometry(x.h, self.kernel.0, self.stride.0);
        let (ow, pl) = same_geometry(x.w, self.kernel.1, self.stride.1);
        Ok(ConvGeom {
            oh,
            ow,
            pt,
            pl,
            patch: self.kernel.0 * self.kernel.1 * x.c,
        })
    }

    /// Samples per im2col group; depends only on shapes.
    fn group(&self, g: &ConvGeom, n: usize) -> usize {
        (IM2COL_BUDGET / (g.oh * g.ow * g.patch).max(1)).clamp(1, n.max(1))
    }

    fn im2col(&self, x: &ComplexTensor<T>, g: &ConvGeom, n0: usize, n1: usize) -> Vec<Complex<T>> {
        let rows = (n1 - n0) * g.oh * g.ow;
        let mut a = vec![zero(); rows * g.patch];
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let c = x.c;
        self.exec.for_each_chunk_mut(&mut a, g.oh * g.ow * g.patch, |i, sample| {
            let n = n0 + i;
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let row = &mut sample[(oy * g.ow + ox) * g.patch..][..g.patch];
                    for ky in 0..kh {
                        let iy = (oy * sh + ky) as isize - g.pt as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * sw + kx) as isize - g.pl as isize;
                            if ix < 0 || ix >= x.w as isize {
                                continue;
                            }
                            let src = x.idx(n, iy as usize, ix as usize, 0);
                            row[(ky * kw + kx) * c..][..c].copy_from_slice(&x.data[src..src + c]);
                        }
                    }
                }
            }
        });
        a
    }

    fn chunk_rows(rows: usize) -> usize {
        rows.div_ceil(16).max(16)
    }

    fn compute(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        let g = self.geom(x)?;
        let cout = self.cout();
        let mut out = ComplexTensor::zeros(x.n, g.oh, g.ow, cout);
        let per_sample = g.oh * g.ow * cout;
        let step = self.group(&g, x.n);
        let wt = MatRef::new(&self.weight.value, cout, g.patch).t();
        for n0 in (0..x.n).step_by(step) {
            let n1 = (n0 + step).min(x.n);
            let a = self.im2col(x, &g, n0, n1);
            let rows = (n1 - n0) * g.oh * g.ow;
            let chunk = Self::chunk_rows(rows);
            let y = &mut out.data[n0 * per_sample..n1 * per_sample];
            self.exec.for_each_chunk_mut(y, chunk * cout, |i, yc| {
                let r0 = i * chunk;
                let r = yc.len() / cout;
                let av = MatRef::new(&a[r0 * g.patch..(r0 + r) * g.patch], r, g.patch);
                cgemm(av, wt, yc, false);
                for row in yc.chunks_mut(cout) {
                    for (v, b) in row.iter_mut().zip(&self.bias.value) {
                        *v += *b;
                    }
                }
            });
        }
        Ok(out)
    }

    pub fn forward(&mut self, x: &ComplexTensor<T>, mode: Mode) -> Result<ComplexTensor<T>> {
        let y = self.compute(x)?;
        self.cache = (mode == Mode::Train).then(|| x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        self.compute(x)
    }

    pub fn backward(&mut self, dy: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| NetError::MissingContext(self.weight.name.clone()))?;
        let g = self.geom(&x)?;
        let cout = self.cout();
        if dy.shape() != [x.n, g.oh, g.ow, cout] {
            return Err(NetError::Shape(format!(
                "{}: upstream {:?}, expected {:?}",
                self.weight.name,
                dy.shape(),
                [x.n, g.oh, g.ow, cout]
            )));
        }
        for row in dy.data.chunks(cout) {
            for (gb, d) in self.bias.grad.iter_mut().zip(row) {
                *gb += *d;
            }
        }
        let mut dx = ComplexTensor::zeros(x.n, x.h, x.w, x.c);
        let per_sample = g.oh * g.ow * cout;
        let step = self.group(&g, x.n);
        let patch = g.patch;
        let w_conj = MatRef::new(&self.weight.value, cout, patch).conj();
        let c_chunk = cout.div_ceil(8).max(1);
        for n0 in (0..x.n).step_by(step) {
            let n1 = (n0 + step).min(x.n);
            let rows = (n1 - n0) * g.oh * g.ow;
            let a = self.im2col(&x, &g, n0, n1);
            let dys = &dy.data[n0 * per_sample..n1 * per_sample];
            // dW += dYᵀ · conj(A), split over output channels.
            self.exec
                .for_each_chunk_mut(&mut self.weight.grad, c_chunk * patch, |i, gw| {
                    let c0 = i * c_chunk;
                    let cc = gw.len() / patch;
                    let dyv = MatRef {
                        data: &dys[c0..],
                        rows,
                        cols: cc,
                        rs: cout,
                        cs: 1,
                        conj: false,
                    };
                    cgemm(dyv.t(), MatRef::new(&a, rows, patch).conj(), gw, true);
                });
            // dA = dY · conj(W), split over rows.
            let mut da = vec![zero(); rows * patch];
            let chunk = Self::chunk_rows(rows);
            self.exec.for_each_chunk_mut(&mut da, chunk * patch, |i, dac| {
                let r0 = i * chunk;
                let r = dac.len() / patch;
                let dyv = MatRef::new(&dys[r0 * cout..(r0 + r) * cout], r, cout);
                cgemm(dyv, w_conj, dac, false);
            });
            self.col2im(&mut dx, &da, &g, n0, n1);
        }
        Ok(dx)
    }

    fn col2im(&self, dx: &mut ComplexTensor<T>, da: &[Complex<T>], g: &ConvGeom, n0: usize, n1: usize) {
        let (h, w, c) = (dx.h, dx.w, dx.c);
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let sample_len = h * w * c;
        let region = &mut dx.data[n0 * sample_len..n1 * sample_len];
        self.exec.for_each_chunk_mut(region, sample_len, |i, dxs| {
            let rows = &da[i * g.oh * g.ow * g.patch..][..g.oh * g.ow * g.patch];
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let row = &rows[(oy * g.ow + ox) * g.patch..][..g.patch];
                    for ky in 0..kh {
                        let iy = (oy * sh + ky) as isize - g.pt as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * sw + kx) as isize - g.pl as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = &mut dxs[(iy as usize * w + ix as usize) * c..][..c];
                            for (d, s) in dst.iter_mut().zip(&row[(ky * kw + kx) * c..][..c]) {
                                *d += *s;
                            }
                        }
                    }
                }
            }
        });
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Split parametric ReLU on real and imaginary parts with per-channel slopes.
#[derive(Debug, Clone)]
pub struct CPrelu<T> {
    /// Per channel: real part is the slope for Re, imaginary part the slope for Im.
    pub alpha: Param<T>,
    cache: Option<ComplexTensor<T>>,
}

pub const CPRELU_INIT: f64 = 0.25;

#[inline]
fn prelu<T: Real>(t: T, a: T) -> T {
    if t >= T::zero() {
        t
    } else {
        a * t
    }
}

impl<T: Real> CPrelu<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        let a = T::c(CPRELU_INIT);
        CPrelu {
            alpha: Param::new(
                format!("{name}.alpha"),
                vec![channels],
                vec![Complex::new(a, a); channels],
            ),
            cache: None,
        }
    }

    fn check(&self, x: &ComplexTensor<T>) -> Result<()> {
        if x.c != self.alpha.len() {
            return Err(NetError::Shape(format!(
                "{}: {} channels, expected {}",
                self.alpha.name,
                x.c,
                self.alpha.len()
            )));
        }
        Ok(())
    }

    pub fn infer(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        self.check(x)?;
        let mut y = x.clone();
        for px in y.data.chunks_mut(x.c) {
            for (z, a) in px.iter_mut().zip(&self.alpha.value) {
                *z = Complex::new(prelu(z.re, a.re), prelu(z.im, a.im));
            }
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &ComplexTensor<T>, mode: Mode) -> Result<ComplexTensor<T>> {
        let y = self.infer(x)?;
        self.cache = (mode == Mode::Train).then(|| x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| NetError::MissingContext(self.alpha.name.clone()))?;
        x.same_shape(dy)?;
        let mut dx = dy.clone();
        for (px, dpx) in x.data.chunks(x.c).zip(dx.data.chunks_mut(x.c)) {
            for ((z, d), (a, ga)) in px
                .iter()
                .zip(dpx.iter_mut())
                .zip(self.alpha.value.iter().zip(self.alpha.grad.iter_mut()))
            {
                if z.re < T::zero() {
                    ga.re = ga.re + z.re * d.re;
                    d.re = d.re * a.re;
                }
                if z.im < T::zero() {
                    ga.im = ga.im + z.im * d.im;
                    d.im = d.im * a.im;
                }
            }
        }
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.alpha]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.alpha]
    }
}

/// Symmetric 2×2 matrix `[[rr, ri], [ri, ii]]`.
pub type Sym2 = [f64; 3];

/// `V^{-1/2}` and `V^{1/2}` of a symmetric positive definite 2×2 matrix.
pub fn inv_sqrt_2x2(v: Sym2) -> Result<(Sym2, Sym2)> {
    let [a, b, d] = v;
    let det = a * d - b * b;
    if !(det > 0.0 && a > 0.0) || !det.is_finite() {
        return Err(NetError::NonFinite(format!(
            "covariance [[{a}, {b}], [{b}, {d}]] is not positive definite"
        )));
    }
    let s = det.sqrt();
    let t = (a + d + 2.0 * s).sqrt();
    let sqrt = [(a + s) / t, b / t, (d + s) / t];
    let k = 1.0 / (s * t);
    Ok(([(d + s) * k, -b * k, (a + s) * k], sqrt))
}

/// Solves `S X + X S = C` for a general 2×2 `C` (row-major), `S` symmetric
/// positive definite.
fn sylvester_2x2(s: Sym2, c: [f64; 4]) -> [f64; 4] {
    let [p, q, r] = s;
    // Unknowns x = [x00, x01, x10, x11].
    let mut m = [
        [2.0 * p, q, q, 0.0, c[0]],
        [q, p + r, 0.0, q, c[1]],
        [q, 0.0, p + r, q, c[2]],
        [0.0, q, q, 2.0 * r, c[3]],
    ];
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..5 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let tail: f64 = (i + 1..4).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][4] - tail) / m[i][i];
    }
    x
}

#[inline]
fn apply(m: Sym2, v: (f64, f64)) -> (f64, f64) {
    (m[0] * v.0 + m[1] * v.1, m[1] * v.0 + m[2] * v.1)
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Complex batch normalization: per-channel whitening of `(Re, Im)` followed
/// by a learnable symmetric 2×2 scale `Γ` and complex shift `β`.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    /// Per channel `γ_rr + j·γ_ii`.
    pub gamma: Param<T>,
    /// Per channel `γ_ri` (real only).
    pub gamma_ri: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<Complex<f64>>,
    /// Running `V + εI`, used verbatim in evaluation mode.
    pub running_cov: Vec<Sym2>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    shape: [usize; 4],
    xc: Vec<(f64, f64)>,
    xhat: Vec<(f64, f64)>,
    whiten: Vec<Sym2>,
    sqrt: Vec<Sym2>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        let g = T::c(std::f64::consts::FRAC_1_SQRT_2);
        BatchNorm {
            gamma: Param::new(format!("{name}.gamma"), vec![channels], vec![Complex::new(g, g); channels]),
            gamma_ri: Param::real(format!("{name}.gamma_ri"), vec![channels], vec![T::zero(); channels]),
            beta: Param::new(format!("{name}.beta"), vec![channels], vec![zero(); channels]),
            running_mean: vec![Complex::new(0.0, 0.0); channels],
            running_cov: vec![[1.0, 0.0, 1.0]; channels],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.beta.len()
    }

    fn gamma_of(&self, c: usize) -> Sym2 {
        let g = self.gamma.value[c];
        [
            g.re.to_f64().unwrap(),
            self.gamma_ri.value[c].re.to_f64().unwrap(),
            g.im.to_f64().unwrap(),
        ]
    }

    fn check(&self, x: &ComplexTensor<T>) -> Result<()> {
        if x.c != self.channels() {
            return Err(NetError::Shape(format!(
                "{}: {} channels, expected {}",
                self.beta.name,
                x.c,
                self.channels()
            )));
        }
        Ok(())
    }

    fn write_out(&self, y: &mut ComplexTensor<T>, xhat: &[(f64, f64)]) {
        let ch = y.c;
        for (i, (z, xh)) in y.data.iter_mut().zip(xhat).enumerate() {
            let c = i % ch;
            let (r, im) = apply(self.gamma_of(c), *xh);
            let b = self.beta.value[c];
            *z = Complex::new(T::c(r) + b.re, T::c(im) + b.im);
        }
    }

    pub fn infer(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        self.check(x)?;
        let whiten = self
            .running_cov
            .iter()
            .map(|&v| inv_sqrt_2x2(v).map(|p| p.0))
            .collect::<Result<Vec<_>>>()?;
        let xhat: Vec<(f64, f64)> = x
            .data
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let c = i % x.c;
                let m = self.running_mean[c];
                apply(whiten[c], (z.re.to_f64().unwrap() - m.re, z.im.to_f64().unwrap() - m.im))
            })
            .collect();
        let mut y = x.clone();
        self.write_out(&mut y, &xhat);
        Ok(y)
    }

    pub fn forward(&mut self, x: &ComplexTensor<T>, mode: Mode) -> Result<ComplexTensor<T>> {
        if mode == Mode::Eval {
            self.cache = None;
            return self.infer(x);
        }
        self.check(x)?;
        let ch = x.c;
        let count = x.pixels();
        if count < 2 {
            return Err(NetError::Shape(format!(
                "{}: batch statistics need at least 2 values per channel",
                self.beta.name
            )));
        }
        let mut mean = vec![(0.0, 0.0); ch];
        for (i, z) in x.data.iter().enumerate() {
            let m = &mut mean[i % ch];
            m.0 += z.re.to_f64().unwrap();
            m.1 += z.im.to_f64().unwrap();
        }
        let inv = 1.0 / count as f64;
        mean.iter_mut().for_each(|m| *m = (m.0 * inv, m.1 * inv));
        let xc: Vec<(f64, f64)> = x
            .data
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let m = mean[i % ch];
                (z.re.to_f64().unwrap() - m.0, z.im.to_f64().unwrap() - m.1)
            })
            .collect();
        let mut cov = vec![[0.0; 3]; ch];
        for (i, v) in xc.iter().enumerate() {
            let s = &mut cov[i % ch];
            s[0] += v.0 * v.0;
            s[1] += v.0 * v.1;
            s[2] += v.1 * v.1;
        }
        for s in cov.iter_mut() {
            *s = [s[0] * inv + self.eps, s[1] * inv, s[2] * inv + self.eps];
        }
        let (whiten, sqrt): (Vec<Sym2>, Vec<Sym2>) = cov
            .iter()
            .map(|&v| inv_sqrt_2x2(v))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| NetError::NonFinite(format!("{}: {e}", self.beta.name)))?
            .into_iter()
            .unzip();
        let xhat: Vec<(f64, f64)> = xc
            .iter()
            .enumerate()
            .map(|(i, v)| apply(whiten[i % ch], *v))
            .collect();
        let mut y = x.clone();
        self.write_out(&mut y, &xhat);

        let m = self.momentum;
        for c in 0..ch {
            let rm = &mut self.running_mean[c];
            *rm = Complex::new(m * rm.re + (1.0 - m) * mean[c].0, m * rm.im + (1.0 - m) * mean[c].1);
            let rc = &mut self.running_cov[c];
            for k in 0..3 {
                rc[k] = m * rc[k] + (1.0 - m) * cov[c][k];
            }
        }
        self.cache = Some(BnCache {
            shape: x.shape(),
            xc,
            xhat,
            whiten,
            sqrt,
        });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NetError::MissingContext(self.beta.name.clone()))?;
        if dy.shape() != cache.shape {
            return Err(NetError::Shape(format!(
                "{}: upstream {:?}, expected {:?}",
                self.beta.name,
                dy.shape(),
                cache.shape
            )));
        }
        let ch = dy.c;
        let count = dy.pixels() as f64;
        let mut d_gamma = vec![[0.0; 3]; ch];
        let mut d_beta = vec![(0.0, 0.0); ch];
        let mut g_w = vec![[0.0; 4]; ch];
        let mut dxc: Vec<(f64, f64)> = Vec::with_capacity(dy.data.len());
        for (i, d) in dy.data.iter().enumerate() {
            let c = i % ch;
            let d = (d.re.to_f64().unwrap(), d.im.to_f64().unwrap());
            let xh = cache.xhat[i];
            let xc = cache.xc[i];
            d_beta[c].0 += d.0;
            d_beta[c].1 += d.1;
            d_gamma[c][0] += d.0 * xh.0;
            d_gamma[c][1] += d.0 * xh.1 + d.1 * xh.0;
            d_gamma[c][2] += d.1 * xh.1;
            let dxh = apply(self.gamma_of(c), d);
            let gw = &mut g_w[c];
            gw[0] += dxh.0 * xc.0;
            gw[1] += dxh.0 * xc.1;
            gw[2] += dxh.1 * xc.0;
            gw[3] += dxh.1 * xc.1;
            dxc.push(apply(cache.whiten[c], dxh));
        }
        // Through W = V^{-1/2}: Ḡ_S = −W Ḡ_W W, then S X + X S = Ḡ_S gives Ḡ_V.
        let g_v: Vec<[f64; 4]> = (0..ch)
            .map(|c| {
                let w = cache.whiten[c];
                let wm = [w[0], w[1], w[1], w[2]];
                let gs = neg(mul(mul(wm, g_w[c]), wm));
                sylvester_2x2(cache.sqrt[c], gs)
            })
            .collect();
        let mut mean_dxc = vec![(0.0, 0.0); ch];
        for (i, v) in dxc.iter_mut().enumerate() {
            let c = i % ch;
            let g = g_v[c];
            let sym = [g[0] + g[0], g[1] + g[2], g[3] + g[3]];
            let (a, b) = apply(sym, cache.xc[i]);
            v.0 += a / count;
            v.1 += b / count;
            mean_dxc[c].0 += v.0;
            mean_dxc[c].1 += v.1;
        }
        let mut dx = ComplexTensor::zeros(dy.n, dy.h, dy.w, ch);
        for (i, (z, v)) in dx.data.iter_mut().zip(&dxc).enumerate() {
            let m = mean_dxc[i % ch];
            *z = Complex::new(T::c(v.0 - m.0 / count), T::c(v.1 - m.1 / count));
        }
        for c in 0..ch {
            let g = &mut self.gamma.grad[c];
            *g = Complex::new(g.re + T::c(d_gamma[c][0]), g.im + T::c(d_gamma[c][2]));
            self.gamma_ri.grad[c].re = self.gamma_ri.grad[c].re + T::c(d_gamma[c][1]);
            let b = &mut self.beta.grad[c];
            *b = Complex::new(b.re + T::c(d_beta[c].0), b.im + T::c(d_beta[c].1));
        }
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.gamma_ri, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.gamma_ri, &mut self.beta]
    }
}

fn mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn neg(a: [f64; 4]) -> [f64; 4] {
    a.map(|v| -v)
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2x<T: Real>(x: &ComplexTensor<T>) -> ComplexTensor<T> {
    let mut y = ComplexTensor::zeros(x.n, 2 * x.h, 2 * x.w, x.c);
    for n in 0..x.n {
        for yy in 0..y.h {
            for xx in 0..y.w {
                let src = x.idx(n, yy / 2, xx / 2, 0);
                let dst = y.idx(n, yy, xx, 0);
                y.data[dst..dst + x.c].copy_from_slice(&x.data[src..src + x.c]);
            }
        }
    }
    y
}

/// Each input cell collects the sum of its four copies.
pub fn upsample2x_backward<T: Real>(dy: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    if dy.h % 2 != 0 || dy.w % 2 != 0 {
        return Err(NetError::Shape(format!(
            "upsample gradient of odd size {}x{}",
            dy.h, dy.w
        )));
    }
    let mut dx = ComplexTensor::zeros(dy.n, dy.h / 2, dy.w / 2, dy.c);
    for n in 0..dy.n {
        for yy in 0..dy.h {
            for xx in 0..dy.w {
                let src = dy.idx(n, yy, xx, 0);
                let dst = dx.idx(n, yy / 2, xx / 2, 0);
                for c in 0..dy.c {
                    dx.data[dst + c] += dy.data[src + c];
                }
            }
        }
    }
    Ok(dx)
}

/// Channel concatenation `[a | b]`.
pub fn concat<T: Real>(a: &ComplexTensor<T>, b: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
        return Err(NetError::Shape(format!(
            "cannot concatenate {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let c = a.c + b.c;
    let mut data = Vec::with_capacity(a.pixels() * c);
    for (pa, pb) in a.data.chunks(a.c.max(1)).zip(b.data.chunks(b.c.max(1))) {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    ComplexTensor::from_data(a.n, a.h, a.w, c, data)
}

/// Splits a concatenation gradient back into its `ca`- and remaining-channel parts.
pub fn split_channels<T: Real>(
    d: &ComplexTensor<T>,
    ca: usize,
) -> Result<(ComplexTensor<T>, ComplexTensor<T>)> {
    if ca > d.c {
        return Err(NetError::Shape(format!("split at {ca} of {} channels", d.c)));
    }
    let cb = d.c - ca;
    let mut a = Vec::with_capacity(d.pixels() * ca);
    let mut b = Vec::with_capacity(d.pixels() * cb);
    for px in d.data.chunks(d.c) {
        a.extend_from_slice(&px[..ca]);
        b.extend_from_slice(&px[ca..]);
    }
    Ok((
        ComplexTensor::from_data(d.n, d.h, d.w, ca, a)?,
        ComplexTensor::from_data(d.n, d.h, d.w, cb, b)?,
    ))
}
