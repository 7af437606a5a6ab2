use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtf_cvnn::adam::{Adam, AdamConfig};
use rtf_cvnn::layers::{upsample2x, BatchNorm, CPrelu, Conv2d, Mode, BN_EPS};
use rtf_cvnn::{ComplexTensor, Param, UNet, UNetSpec};

type C = Complex<f64>;
type T = ComplexTensor<f64>;

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize, c: usize) -> T {
    let data = (0..n * h * w * c)
        .map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    T::from_data(n, h, w, c, data).unwrap()
}

/// Weight `[cout, kh, kw, cin]`, "same" padding with the extra row/column of
/// padding on the bottom/right.
fn naive_conv(x: &T, w: &[C], b: &[C], cout: usize, k: (usize, usize), s: (usize, usize)) -> T {
    let oh = x.h.div_ceil(s.0);
    let ow = x.w.div_ceil(s.1);
    let pad_h = ((oh - 1) * s.0 + k.0).saturating_sub(x.h) / 2;
    let pad_w = ((ow - 1) * s.1 + k.1).saturating_sub(x.w) / 2;
    let mut y = T::zeros(x.n, oh, ow, cout);
    for n in 0..x.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = b[co];
                    for ky in 0..k.0 {
                        for kx in 0..k.1 {
                            let iy = (oy * s.0 + ky) as isize - pad_h as isize;
                            let ix = (ox * s.1 + kx) as isize - pad_w as isize;
                            if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                continue;
                            }
                            for ci in 0..x.c {
                                let wv = w[((co * k.0 + ky) * k.1 + kx) * x.c + ci];
                                acc += wv * x.at(n, iy as usize, ix as usize, ci);
                            }
                        }
                    }
                    let i = y.idx(n, oy, ox, co);
                    y.data[i] = acc;
                }
            }
        }
    }
    y
}

#[test]
fn conv_matches_quadruple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut conv = Conv2d::<f64>::new("c", 1, 1, (3, 3), (1, 1), &mut rng);
    conv.bias.value[0] = C::new(0.3, -0.2);
    let x = random_tensor(&mut rng, 1, 4, 4, 1);
    let y = conv.forward(&x, Mode::Eval).unwrap();
    let want = naive_conv(&x, &conv.weight.value, &conv.bias.value, 1, (3, 3), (1, 1));
    for (a, b) in y.data.iter().zip(&want.data) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn conv_matches_oracle_multichannel_strided() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for &(h, w, k, s) in &[(7, 6, 3, 2), (8, 8, 3, 2), (5, 5, 1, 1), (6, 4, 3, 1)] {
        let mut conv = Conv2d::<f64>::new("c", 3, 4, (k, k), (s, s), &mut rng);
        for b in &mut conv.bias.value {
            *b = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let x = random_tensor(&mut rng, 2, h, w, 3);
        let y = conv.forward(&x, Mode::Eval).unwrap();
        let want = naive_conv(&x, &conv.weight.value, &conv.bias.value, 4, (k, k), (s, s));
        assert_eq!(y.shape(), want.shape());
        for (a, b) in y.data.iter().zip(&want.data) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

/// Real 2-D convolution with `[cout, kh, kw, cin]` weights, stride 1, same
/// padding, and its gradients for a linear read-out `Σ r·y`.
struct RealConv {
    cin: usize,
    cout: usize,
    k: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl RealConv {
    fn taps(&self, h: usize, wd: usize) -> Vec<(usize, usize, usize, usize, usize, usize)> {
        let pad = (self.k - 1) / 2;
        let mut out = Vec::new();
        for oy in 0..h {
            for ox in 0..wd {
                for ky in 0..self.k {
                    for kx in 0..self.k {
                        let iy = (oy + ky) as isize - pad as isize;
                        let ix = (ox + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            out.push((oy, ox, ky, kx, iy as usize, ix as usize));
                        }
                    }
                }
            }
        }
        out
    }

    /// `x` is `[h, w, cin]`.
    fn forward(&self, x: &[f64], h: usize, wd: usize) -> Vec<f64> {
        let mut y = vec![0.0; h * wd * self.cout];
        for (i, v) in y.iter_mut().enumerate() {
            *v = self.b[i % self.cout];
        }
        for (oy, ox, ky, kx, iy, ix) in self.taps(h, wd) {
            for co in 0..self.cout {
                for ci in 0..self.cin {
                    y[(oy * wd + ox) * self.cout + co] +=
                        self.w[((co * self.k + ky) * self.k + kx) * self.cin + ci] * x[(iy * wd + ix) * self.cin + ci];
                }
            }
        }
        y
    }

    /// Gradients of `Σ r·y` with respect to `x`, `w`, `b`.
    fn backward(&self, x: &[f64], r: &[f64], h: usize, wd: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; self.w.len()];
        let mut db = vec![0.0; self.cout];
        for (i, v) in r.iter().enumerate() {
            db[i % self.cout] += v;
        }
        for (oy, ox, ky, kx, iy, ix) in self.taps(h, wd) {
            for co in 0..self.cout {
                let g = r[(oy * wd + ox) * self.cout + co];
                for ci in 0..self.cin {
                    let wi = ((co * self.k + ky) * self.k + kx) * self.cin + ci;
                    let xi = (iy * wd + ix) * self.cin + ci;
                    dx[xi] += g * self.w[wi];
                    dw[wi] += g * x[xi];
                }
            }
        }
        (dx, dw, db)
    }
}

#[test]
fn complex_conv_is_isomorphic_to_real_two_channel_network() {
    let (cin, cout, k, h, wd) = (2, 3, 3, 5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut conv = Conv2d::<f64>::new("c", cin, cout, (k, k), (1, 1), &mut rng);
    for b in &mut conv.bias.value {
        *b = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let x = random_tensor(&mut rng, 1, h, wd, cin);
    let r = random_tensor(&mut rng, 1, h, wd, cout);

    // real channels: 2c is the real part of complex channel c, 2c+1 the imaginary part
    let mut real = RealConv {
        cin: 2 * cin,
        cout: 2 * cout,
        k,
        w: vec![0.0; 4 * cin * cout * k * k],
        b: vec![0.0; 2 * cout],
    };
    for co in 0..cout {
        real.b[2 * co] = conv.bias.value[co].re;
        real.b[2 * co + 1] = conv.bias.value[co].im;
        for ky in 0..k {
            for kx in 0..k {
                for ci in 0..cin {
                    let z = conv.weight.value[((co * k + ky) * k + kx) * cin + ci];
                    let at = |o: usize, i: usize| ((o * k + ky) * k + kx) * 2 * cin + i;
                    real.w[at(2 * co, 2 * ci)] = z.re;
                    real.w[at(2 * co, 2 * ci + 1)] = -z.im;
                    real.w[at(2 * co + 1, 2 * ci)] = z.im;
                    real.w[at(2 * co + 1, 2 * ci + 1)] = z.re;
                }
            }
        }
    }
    let flat = |t: &T| -> Vec<f64> { t.data.iter().flat_map(|z| [z.re, z.im]).collect() };
    let xr = flat(&x);
    let rr = flat(&r);

    conv.weight.zero_grad();
    conv.bias.zero_grad();
    let y = conv.forward(&x, Mode::Train).unwrap();
    let yr = real.forward(&xr, h, wd);
    for (a, b) in flat(&y).iter().zip(&yr) {
        assert!((a - b).abs() < 1e-10);
    }

    let dx = conv.backward(&r).unwrap();
    let (dxr, dwr, dbr) = real.backward(&xr, &rr, h, wd);
    for (a, b) in flat(&dx).iter().zip(&dxr) {
        assert!((a - b).abs() < 1e-10);
    }
    for co in 0..cout {
        let g = conv.bias.grad[co];
        assert!((g.re - dbr[2 * co]).abs() < 1e-10);
        assert!((g.im - dbr[2 * co + 1]).abs() < 1e-10);
        for ky in 0..k {
            for kx in 0..k {
                for ci in 0..cin {
                    let at = |o: usize, i: usize| ((o * k + ky) * k + kx) * 2 * cin + i;
                    // chain rule through the tied real entries
                    let want_re = dwr[at(2 * co, 2 * ci)] + dwr[at(2 * co + 1, 2 * ci + 1)];
                    let want_im = dwr[at(2 * co + 1, 2 * ci)] - dwr[at(2 * co, 2 * ci + 1)];
                    let g = conv.weight.grad[((co * k + ky) * k + kx) * cin + ci];
                    assert!((g.re - want_re).abs() < 1e-10);
                    assert!((g.im - want_im).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn conv_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut conv = Conv2d::<f64>::new("c", 1, 1, (1, 1), (1, 1), &mut rng);
    conv.weight.value[0] = C::new(0.0, 1.0);
    let x = T::from_data(1, 1, 1, 1, vec![C::new(1.0, 2.0)]).unwrap();
    assert_eq!(conv.forward(&x, Mode::Eval).unwrap().data[0], C::new(-2.0, 1.0));
}

#[test]
fn conv_and_upsample_commute_with_global_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let conv = Conv2d::<f64>::new("c", 3, 2, (3, 3), (2, 2), &mut rng);
    let x = random_tensor(&mut rng, 2, 6, 6, 3);
    let phase = C::from_polar(1.0, 0.7);
    let rotated = x.map(|z| z * phase);
    let a = conv.infer(&rotated).unwrap();
    let b = conv.infer(&x).unwrap().map(|z| z * phase);
    for (p, q) in a.data.iter().zip(&b.data) {
        assert!((p - q).norm() < 1e-12);
    }
    let a = upsample2x(&rotated);
    let b = upsample2x(&x).map(|z| z * phase);
    assert_eq!(a, b);
}

#[test]
fn cprelu_does_not_commute_with_global_phase() {
    let act = CPrelu::<f64>::new("a", 1);
    let x = T::from_data(1, 1, 1, 1, vec![C::new(1.0, 1.0)]).unwrap();
    let phase = C::from_polar(1.0, std::f64::consts::PI);
    let a = act.infer(&x.map(|z| z * phase)).unwrap().data[0];
    let b = act.infer(&x).unwrap().data[0] * phase;
    assert!((a - C::new(-0.25, -0.25)).norm() < 1e-12);
    assert!((a - b).norm() > 0.5);
}

#[test]
fn batch_norm_does_not_commute_with_global_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut bn = BatchNorm::<f64>::new("bn", 1);
    bn.gamma.value[0] = C::new(1.0, 0.4);
    bn.beta.value[0] = C::new(0.5, -0.25);
    let x = random_tensor(&mut rng, 4, 3, 3, 1);
    let phase = C::from_polar(1.0, 1.1);
    let a = bn.forward(&x.map(|z| z * phase), Mode::Train).unwrap();
    let b = bn.forward(&x, Mode::Train).unwrap().map(|z| z * phase);
    let gap = a.data.iter().zip(&b.data).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(gap > 0.1, "largest deviation {gap}");
}

fn channel_stats(y: &T, c: usize) -> (C, [f64; 3]) {
    let vals: Vec<C> = (0..y.pixels()).map(|p| y.data[p * y.c + c]).collect();
    let m = vals.iter().sum::<C>() / vals.len() as f64;
    let mut cov = [0.0; 3];
    for v in &vals {
        let d = v - m;
        cov[0] += d.re * d.re;
        cov[1] += d.re * d.im;
        cov[2] += d.im * d.im;
    }
    for c in &mut cov {
        *c /= vals.len() as f64;
    }
    (m, cov)
}

#[test]
fn batch_norm_whitens_in_training_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut bn = BatchNorm::<f64>::new("bn", 2);
    let mut x = random_tensor(&mut rng, 4, 4, 4, 2);
    for z in &mut x.data {
        *z = C::new(3.0 * z.re + 1.0, 0.8 * z.re + 0.5 * z.im - 2.0);
    }
    let y = bn.forward(&x, Mode::Train).unwrap();
    for c in 0..2 {
        let (_, v) = channel_stats(&x, c);
        // target: ½ V (V + εI)⁻¹, symmetric since both factors commute
        let (a, b, d) = (v[0] + BN_EPS, v[1], v[2] + BN_EPS);
        let det = a * d - b * b;
        let inv = [d / det, -b / det, a / det];
        let t = [
            0.5 * (v[0] * inv[0] + v[1] * inv[1]),
            0.5 * (v[0] * inv[1] + v[1] * inv[2]),
            0.5 * (v[1] * inv[1] + v[2] * inv[2]),
        ];
        let (m, cov) = channel_stats(&y, c);
        assert!(m.norm() < 1e-12);
        for i in 0..3 {
            assert!((cov[i] - t[i]).abs() < 1e-6, "channel {c}: {cov:?} vs {t:?}");
        }
        assert!((cov[0] - 0.5).abs() < 1e-4 && cov[1].abs() < 1e-4 && (cov[2] - 0.5).abs() < 1e-4);
    }
}

#[test]
fn batch_norm_constant_input_gives_shift() {
    let mut bn = BatchNorm::<f64>::new("bn", 1);
    bn.beta.value[0] = C::new(0.3, -0.7);
    let x = T::from_data(2, 2, 2, 1, vec![C::new(1.5, -2.0); 8]).unwrap();
    let y = bn.forward(&x, Mode::Train).unwrap();
    for z in &y.data {
        assert!((z - C::new(0.3, -0.7)).norm() < 1e-12);
    }
}

#[test]
fn batch_norm_running_statistics_follow_momentum() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut bn = BatchNorm::<f64>::new("bn", 1);
    let x = random_tensor(&mut rng, 3, 2, 2, 1);
    bn.forward(&x, Mode::Train).unwrap();
    let (m, v) = channel_stats(&x, 0);
    assert!((bn.running_mean[0] - 0.1 * m).norm() < 1e-14);
    let want = [0.9 + 0.1 * (v[0] + BN_EPS), 0.1 * v[1], 0.9 + 0.1 * (v[2] + BN_EPS)];
    for i in 0..3 {
        assert!((bn.running_cov[0][i] - want[i]).abs() < 1e-14);
    }
    // evaluation mode uses the running statistics verbatim and changes nothing
    let before = bn.running_mean.clone();
    let a = bn.forward(&x, Mode::Eval).unwrap();
    let b = bn.infer(&x).unwrap();
    assert_eq!(a, b);
    assert_eq!(bn.running_mean, before);
}

#[test]
fn upsample_then_pick_top_left_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let x = random_tensor(&mut rng, 2, 3, 5, 2);
    let up = upsample2x(&x);
    assert_eq!(up.shape(), [2, 6, 10, 2]);
    for n in 0..2 {
        for i in 0..3 {
            for j in 0..5 {
                for c in 0..2 {
                    assert_eq!(up.at(n, 2 * i, 2 * j, c), x.at(n, i, j, c));
                    assert_eq!(up.at(n, 2 * i + 1, 2 * j + 1, c), x.at(n, i, j, c));
                }
            }
        }
    }
}

#[test]
fn adam_matches_reference_trace() {
    // f(x) = ½(x − 3)², x₀ = 0, lr 0.1, default betas and eps; reference values
    // from a plain scalar implementation of the published update rule
    const TRACE: [f64; 10] = [
        0.09999999966666669,
        0.19989729224944813,
        0.2996184760421757,
        0.3990864682638486,
        0.49822054291736,
        0.5969363915868074,
        0.6951462094878004,
        0.79275880922301,
        0.8896797648111606,
        0.985811588639555,
    ];
    let mut p = Param::<f64>::new("x", vec![1], vec![C::new(0.0, 0.0)]);
    let mut adam = Adam::new(AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    });
    for want in TRACE {
        p.grad[0] = C::new(p.value[0].re - 3.0, 0.0);
        adam.step(&mut [&mut p]).unwrap();
        assert!((p.value[0].re - want).abs() < 1e-12, "{} vs {want}", p.value[0].re);
    }
}

/// Computed by a standalone script from the layer list.
const FULL_SIZE_PARAMS_K40: usize = 31_487_168;

#[test]
fn full_size_parameter_count() {
    let spec = UNetSpec::full_size(40);
    assert_eq!(spec.param_count(), FULL_SIZE_PARAMS_K40);
    let net = UNet::<f32>::new(spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(net.param_count(), FULL_SIZE_PARAMS_K40);
}

#[test]
fn full_size_layer_layout() {
    let spec = UNetSpec::full_size(40);
    let enc: Vec<usize> = spec.encoder.iter().map(|l| l.filters).collect();
    let dec: Vec<usize> = spec.decoder.iter().map(|l| l.filters).collect();
    assert_eq!(enc, [128, 256, 512, 1024]);
    assert_eq!(dec, [512, 256, 128, 80, 80]);
    let act: Vec<bool> = spec.encoder.iter().chain(&spec.decoder).map(|l| l.act_norm).collect();
    assert_eq!(act, [false, true, true, true, true, true, true, false, false]);
    assert_eq!(spec.decoder[4].kernel, [1, 1]);
    assert!(spec.encoder.iter().all(|l| l.stride == [2, 2] && l.kernel == [3, 3]));
}

#[test]
fn small_unet_shapes_and_eval_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut net = UNet::<f32>::new(UNetSpec::scaled(3, 16), &mut rng).unwrap();
    let x = ComplexTensor::<f32>::from_data(
        2,
        16,
        32,
        6,
        (0..2 * 16 * 32 * 6)
            .map(|i| Complex::new((i as f32 * 0.1).sin(), (i as f32 * 0.3).cos()))
            .collect(),
    )
    .unwrap();
    let y = net.forward(&x, Mode::Train).unwrap();
    assert_eq!(y.shape(), [2, 16, 32, 3]);
    let a = net.infer(&x).unwrap();
    let b = net.infer(&x).unwrap();
    assert_eq!(a, b);
    let bad = ComplexTensor::<f32>::zeros(1, 12, 16, 6);
    assert!(net.infer(&bad).is_err());
}
