//! Central finite differences against backprop in f64, per layer and end to
//! end on a small U-Net.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtf_cvnn::layers::{concat, upsample2x, upsample2x_backward, BatchNorm, CPrelu, Conv2d, Mode};
use rtf_cvnn::loss::l1_loss;
use rtf_cvnn::{ComplexTensor, Param, UNet, UNetSpec};

type C = Complex<f64>;
type T = ComplexTensor<f64>;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
// guards components whose true gradient is (numerically) zero
const ABS_FLOOR: f64 = 1e-9;

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize, c: usize) -> T {
    let data = (0..n * h * w * c)
        .map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    T::from_data(n, h, w, c, data).unwrap()
}

/// Smooth scalar read-out `Σ Re(conj(r)·y)`; its real-pair gradient is `r`.
fn project(y: &T, r: &T) -> f64 {
    y.data.iter().zip(&r.data).map(|(a, b)| (b.conj() * a).re).sum()
}

/// Something differentiable the checker can perturb.
trait Net {
    fn forward(&mut self, x: &T) -> T;
    fn backward(&mut self, dy: &T) -> T;
    fn params(&mut self) -> Vec<&mut Param<f64>>;
}

/// Which scalar to perturb.
#[derive(Clone, Copy, Debug)]
enum Slot {
    Input(usize, bool),
    Param(usize, usize, bool),
}

struct Report {
    checked: usize,
    worst: f64,
}

/// Loss is the projection onto `r`, or the L1 distance to `r` when `l1`.
fn check<N: Net>(net: &mut N, x: &T, r: &T, l1: bool, samples: usize, seed: u64) -> Report {
    let loss = |net: &mut N, x: &T| -> f64 {
        let y = net.forward(x);
        if l1 {
            l1_loss(&y, r).unwrap().0
        } else {
            project(&y, r)
        }
    };
    for p in net.params() {
        p.zero_grad();
    }
    let y = net.forward(x);
    let dy = if l1 { l1_loss(&y, r).unwrap().1 } else { r.clone() };
    let dx = net.backward(&dy);

    let mut slots: Vec<Slot> = (0..x.data.len())
        .flat_map(|i| [Slot::Input(i, false), Slot::Input(i, true)])
        .collect();
    for (pi, p) in net.params().iter().enumerate() {
        for e in 0..p.len() {
            slots.push(Slot::Param(pi, e, false));
            if !p.real_only {
                slots.push(Slot::Param(pi, e, true));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<Slot> = if slots.len() <= samples {
        slots
    } else {
        rand::seq::index::sample(&mut rng, slots.len(), samples)
            .into_iter()
            .map(|i| slots[i])
            .collect()
    };

    let mut worst = 0.0f64;
    for slot in &picks {
        let mut xs = x.clone();
        let analytic;
        let eval = |delta: f64, net: &mut N, xs: &mut T| -> f64 {
            match *slot {
                Slot::Input(i, im) => {
                    let z = &mut xs.data[i];
                    if im { z.im += delta } else { z.re += delta }
                }
                Slot::Param(pi, e, im) => {
                    let mut ps = net.params();
                    let z = &mut ps[pi].value[e];
                    if im { z.im += delta } else { z.re += delta }
                }
            }
            loss(net, xs)
        };
        match *slot {
            Slot::Input(i, im) => analytic = if im { dx.data[i].im } else { dx.data[i].re },
            Slot::Param(pi, e, im) => {
                let g = net.params()[pi].grad[e];
                analytic = if im { g.im } else { g.re };
            }
        }
        let plus = eval(STEP, net, &mut xs);
        let minus = eval(-2.0 * STEP, net, &mut xs);
        eval(STEP, net, &mut xs);
        let fd = (plus - minus) / (2.0 * STEP);
        let err = (fd - analytic).abs();
        let scale = fd.abs().max(analytic.abs());
        assert!(
            err <= REL_TOL * scale + ABS_FLOOR,
            "{slot:?}: finite difference {fd:e}, backprop {analytic:e}"
        );
        if scale > ABS_FLOOR {
            worst = worst.max(err / scale);
        }
    }
    Report {
        checked: picks.len(),
        worst,
    }
}

struct ConvNet(Conv2d<f64>);
impl Net for ConvNet {
    fn forward(&mut self, x: &T) -> T {
        self.0.forward(x, Mode::Train).unwrap()
    }
    fn backward(&mut self, dy: &T) -> T {
        self.0.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.0.params_mut()
    }
}

struct ActNet(CPrelu<f64>);
impl Net for ActNet {
    fn forward(&mut self, x: &T) -> T {
        self.0.forward(x, Mode::Train).unwrap()
    }
    fn backward(&mut self, dy: &T) -> T {
        self.0.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.0.params_mut()
    }
}

struct BnNet(BatchNorm<f64>);
impl Net for BnNet {
    fn forward(&mut self, x: &T) -> T {
        self.0.forward(x, Mode::Train).unwrap()
    }
    fn backward(&mut self, dy: &T) -> T {
        self.0.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.0.params_mut()
    }
}

struct UpNet;
impl Net for UpNet {
    fn forward(&mut self, x: &T) -> T {
        upsample2x(x)
    }
    fn backward(&mut self, dy: &T) -> T {
        upsample2x_backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        Vec::new()
    }
}

struct UNetNet(UNet<f64>);
impl Net for UNetNet {
    fn forward(&mut self, x: &T) -> T {
        self.0.forward(x, Mode::Train).unwrap()
    }
    fn backward(&mut self, dy: &T) -> T {
        self.0.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.0.params_mut()
    }
}

fn assert_coverage(r: &Report, at_least: usize) {
    assert!(r.checked >= at_least, "only {} components checked", r.checked);
}

#[test]
fn conv_stride_one_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = ConvNet(Conv2d::new("c", 3, 4, (3, 3), (1, 1), &mut rng));
    for b in &mut net.0.bias.value {
        *b = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let x = random_tensor(&mut rng, 2, 5, 4, 3);
    let r = random_tensor(&mut rng, 2, 5, 4, 4);
    assert_coverage(&check(&mut net, &x, &r, false, 200, 11), 200);
}

#[test]
fn conv_stride_two_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = ConvNet(Conv2d::new("c", 2, 3, (3, 3), (2, 2), &mut rng));
    let x = random_tensor(&mut rng, 2, 8, 6, 2);
    let r = random_tensor(&mut rng, 2, 4, 3, 3);
    assert_coverage(&check(&mut net, &x, &r, false, 200, 12), 200);
}

#[test]
fn conv_pointwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = ConvNet(Conv2d::new("c", 5, 3, (1, 1), (1, 1), &mut rng));
    let x = random_tensor(&mut rng, 3, 3, 3, 5);
    let r = random_tensor(&mut rng, 3, 3, 3, 3);
    assert_coverage(&check(&mut net, &x, &r, false, 150, 13), 150);
}

#[test]
fn cprelu_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut act = CPrelu::new("a", 3);
    for a in &mut act.alpha.value {
        *a = C::new(rng.random_range(0.05..0.5), rng.random_range(0.05..0.5));
    }
    let mut net = ActNet(act);
    // keep every input at least 1e-3 from the kink
    let mut x = random_tensor(&mut rng, 2, 4, 5, 3);
    for z in &mut x.data {
        z.re += 1e-3 * z.re.signum();
        z.im += 1e-3 * z.im.signum();
    }
    let r = random_tensor(&mut rng, 2, 4, 5, 3);
    assert_coverage(&check(&mut net, &x, &r, false, 200, 14), 200);
}

#[test]
fn cprelu_slope_gradients_are_all_checked() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = ActNet(CPrelu::new("a", 4));
    let x = random_tensor(&mut rng, 3, 3, 3, 4);
    let r = random_tensor(&mut rng, 3, 3, 3, 4);
    // no inputs: sample only the eight slope components
    struct SlopesOnly<'a>(&'a mut ActNet, &'a T);
    impl Net for SlopesOnly<'_> {
        fn forward(&mut self, _: &T) -> T {
            self.0.forward(self.1)
        }
        fn backward(&mut self, dy: &T) -> T {
            self.0.backward(dy);
            T::zeros(0, 0, 0, 0)
        }
        fn params(&mut self) -> Vec<&mut Param<f64>> {
            self.0.params()
        }
    }
    let empty = T::zeros(0, 0, 0, 0);
    let report = check(&mut SlopesOnly(&mut net, &x), &empty, &r, false, 100, 15);
    assert_eq!(report.checked, 8);
}

#[test]
fn batch_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bn = BatchNorm::new("bn", 3);
    for i in 0..3 {
        bn.gamma.value[i] = C::new(rng.random_range(0.5..1.5), rng.random_range(0.5..1.5));
        bn.gamma_ri.value[i] = C::new(rng.random_range(-0.3..0.3), 0.0);
        bn.beta.value[i] = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let mut net = BnNet(bn);
    // correlated real and imaginary parts so the covariance is not diagonal
    let mut x = random_tensor(&mut rng, 2, 4, 4, 3);
    for z in &mut x.data {
        z.im += 0.6 * z.re + 0.3;
    }
    let r = random_tensor(&mut rng, 2, 4, 4, 3);
    assert_coverage(&check(&mut net, &x, &r, false, 200, 16), 200);
}

#[test]
fn upsample_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_tensor(&mut rng, 2, 3, 4, 3);
    let r = random_tensor(&mut rng, 2, 6, 8, 3);
    assert_coverage(&check(&mut UpNet, &x, &r, false, 100, 17), 100);
}

#[test]
fn l1_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_tensor(&mut rng, 1, 4, 4, 2);
    let target = random_tensor(&mut rng, 1, 4, 4, 2);
    struct Id;
    impl Net for Id {
        fn forward(&mut self, x: &T) -> T {
            x.clone()
        }
        fn backward(&mut self, dy: &T) -> T {
            dy.clone()
        }
        fn params(&mut self) -> Vec<&mut Param<f64>> {
            Vec::new()
        }
    }
    // 64 real components, all of them
    assert_eq!(check(&mut Id, &x, &target, true, 100, 18).checked, 64);
}

#[test]
fn concat_routes_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random_tensor(&mut rng, 1, 2, 2, 2);
    let b = random_tensor(&mut rng, 1, 2, 2, 3);
    let y = concat(&a, &b).unwrap();
    for n in 0..1 {
        for i in 0..2 {
            for j in 0..2 {
                for c in 0..5 {
                    let want = if c < 2 { a.at(n, i, j, c) } else { b.at(n, i, j, c - 2) };
                    assert_eq!(y.at(n, i, j, c), want);
                }
            }
        }
    }
}

fn tiny_unet(seed: u64) -> UNet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = UNet::new(UNetSpec::with_widths(2, &[4, 6], &[5]), &mut rng).unwrap();
    // perturb the initial state so no parameter sits at a special value
    for p in net.params_mut() {
        for z in &mut p.value {
            z.re += rng.random_range(-0.1..0.1);
            if !p.real_only {
                z.im += rng.random_range(-0.1..0.1);
            }
        }
    }
    net
}

#[test]
fn tiny_unet_end_to_end_gradients() {
    let net = tiny_unet(20);
    assert_eq!((net.encoder.len(), net.decoder.len()), (2, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = random_tensor(&mut rng, 2, 8, 8, 4);
    let target = random_tensor(&mut rng, 2, 8, 8, 2);
    let mut net = UNetNet(net);
    let report = check(&mut net, &x, &target, true, 300, 22);
    assert_coverage(&report, 300);
    assert!(report.worst < REL_TOL);
}

#[test]
fn tiny_unet_every_parameter_tensor_has_gradient() {
    let mut net = tiny_unet(23);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = random_tensor(&mut rng, 2, 8, 8, 4);
    let target = random_tensor(&mut rng, 2, 8, 8, 2);
    net.zero_grad();
    let y = net.forward(&x, Mode::Train).unwrap();
    let (_, g) = l1_loss(&y, &target).unwrap();
    net.backward(&g).unwrap();
    for p in net.params() {
        assert!(p.grad.iter().any(|z| z.norm() > 0.0), "{} received no gradient", p.name);
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut net = tiny_unet(25);
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let x = random_tensor(&mut rng, 2, 8, 8, 4);
    net.zero_grad();
    let y = net.forward(&x, Mode::Train).unwrap();
    let dx = net.backward(&T::zeros(y.n, y.h, y.w, y.c)).unwrap();
    assert!(dx.data.iter().all(|z| z.norm() == 0.0));
    for p in net.params() {
        assert!(p.grad.iter().all(|z| z.norm() == 0.0), "{}", p.name);
    }
}
