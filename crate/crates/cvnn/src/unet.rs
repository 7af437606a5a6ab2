//! Complex U-Net: stride-2 encoder, upsampling decoder with skip
//! concatenations, and a 1×1 output layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtf_core::Exec;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::layers::{concat, split_channels, upsample2x, upsample2x_backward, BatchNorm, CPrelu, Conv2d, Mode};
use crate::scalar::Real;
use crate::tensor::{ComplexTensor, Param};

/// One convolution, optionally followed by CPReLU and complex batch norm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub filters: usize,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub act_norm: bool,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize, stride: usize, act_norm: bool) -> Self {
        LayerSpec {
            filters,
            kernel: [kernel, kernel],
            stride: [stride, stride],
            act_norm,
        }
    }
}

/// Layer list of the network. Decoder layer `j < encoder.len()` upsamples its
/// input and concatenates the input of encoder layer `encoder.len() − 1 − j`;
/// the final decoder layer maps to the output without a skip. The first
/// `out_channels` output channels form the estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

impl UNetSpec {
    /// Encoder widths `enc`, hidden decoder widths `dec_hidden`; the last two
    /// decoder layers have `2K` filters, the final one with a 1×1 kernel.
    /// Activation and normalization follow every layer except the first
    /// encoder layer and the last two decoder layers.
    pub fn with_widths(k: usize, enc: &[usize], dec_hidden: &[usize]) -> Self {
        let encoder = enc
            .iter()
            .enumerate()
            .map(|(i, &f)| LayerSpec::conv(f, 3, 2, i > 0))
            .collect();
        let mut decoder: Vec<LayerSpec> = dec_hidden.iter().map(|&f| LayerSpec::conv(f, 3, 1, true)).collect();
        decoder.push(LayerSpec::conv(2 * k, 3, 1, false));
        decoder.push(LayerSpec::conv(2 * k, 1, 1, false));
        UNetSpec {
            in_channels: 2 * k,
            out_channels: k,
            encoder,
            decoder,
        }
    }

    /// Full-size network: encoder 128, 256, 512, 1024; decoder 512, 256, 128, 2K, 2K.
    pub fn full_size(k: usize) -> Self {
        Self::with_widths(k, &[128, 256, 512, 1024], &[512, 256, 128])
    }

    /// The full-size layout with every hidden width divided by `divisor`.
    pub fn scaled(k: usize, divisor: usize) -> Self {
        let d = divisor.max(1);
        let w = |f: usize| (f / d).max(1);
        Self::with_widths(k, &[128, 256, 512, 1024].map(w), &[512, 256, 128].map(w))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.encoder.is_empty() {
            return bad("encoder needs at least one layer".into());
        }
        if self.decoder.len() != self.encoder.len() + 1 {
            return bad(format!(
                "{} encoder layers need {} decoder layers, got {}",
                self.encoder.len(),
                self.encoder.len() + 1,
                self.decoder.len()
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        for l in self.encoder.iter().chain(&self.decoder) {
            if l.filters == 0 || l.kernel.contains(&0) || l.stride.contains(&0) {
                return bad(format!("invalid layer {l:?}"));
            }
        }
        for l in &self.encoder {
            if l.stride != [2, 2] {
                return bad("encoder layers must have stride 2".into());
            }
        }
        for l in &self.decoder {
            if l.stride != [1, 1] {
                return bad("decoder layers must have stride 1".into());
            }
        }
        if self.decoder.last().unwrap().filters < self.out_channels {
            return bad(format!(
                "output layer has {} filters, fewer than {} outputs",
                self.decoder.last().unwrap().filters,
                self.out_channels
            ));
        }
        Ok(())
    }

    /// Spatial sizes must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.encoder.len()
    }

    fn encoder_inputs(&self) -> Vec<usize> {
        std::iter::once(self.in_channels)
            .chain(self.encoder.iter().map(|l| l.filters))
            .take(self.encoder.len())
            .collect()
    }

    fn decoder_inputs(&self) -> Vec<usize> {
        let skips = self.encoder_inputs();
        let ne = self.encoder.len();
        let mut prev = self.encoder[ne - 1].filters;
        let mut out = Vec::new();
        for (j, l) in self.decoder.iter().enumerate() {
            out.push(if j < ne { prev + skips[ne - 1 - j] } else { prev });
            prev = l.filters;
        }
        out
    }

    /// Learnable real scalars: complex weights and biases count twice, each
    /// activated channel adds two CPReLU slopes and five normalization
    /// parameters.
    pub fn param_count(&self) -> usize {
        let layers = self
            .encoder
            .iter()
            .zip(self.encoder_inputs())
            .chain(self.decoder.iter().zip(self.decoder_inputs()));
        layers
            .map(|(l, cin)| {
                let conv = 2 * (l.kernel[0] * l.kernel[1] * cin * l.filters + l.filters);
                conv + if l.act_norm { 7 * l.filters } else { 0 }
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Block<T> {
    pub conv: Conv2d<T>,
    pub act: Option<(CPrelu<T>, BatchNorm<T>)>,
}

impl<T: Real> Block<T> {
    fn new<R: Rng + ?Sized>(name: &str, cin: usize, spec: &LayerSpec, rng: &mut R) -> Self {
        let k = (spec.kernel[0], spec.kernel[1]);
        let s = (spec.stride[0], spec.stride[1]);
        Block {
            conv: Conv2d::new(&format!("{name}.conv"), cin, spec.filters, k, s, rng),
            act: spec.act_norm.then(|| {
                (
                    CPrelu::new(&format!("{name}.act"), spec.filters),
                    BatchNorm::new(&format!("{name}.bn"), spec.filters),
                )
            }),
        }
    }

    pub fn forward(&mut self, x: &ComplexTensor<T>, mode: Mode) -> Result<ComplexTensor<T>> {
        let y = self.conv.forward(x, mode)?;
        match &mut self.act {
            None => Ok(y),
            Some((act, bn)) => {
                let y = act.forward(&y, mode)?;
                bn.forward(&y, mode)
            }
        }
    }

    pub fn infer(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        let y = self.conv.infer(x)?;
        match &self.act {
            None => Ok(y),
            Some((act, bn)) => bn.infer(&act.infer(&y)?),
        }
    }

    pub fn backward(&mut self, dy: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        let d = match &mut self.act {
            None => dy.clone(),
            Some((act, bn)) => act.backward(&bn.backward(dy)?)?,
        };
        self.conv.backward(&d)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.conv.params();
        if let Some((act, bn)) = &self.act {
            p.extend(act.params());
            p.extend(bn.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.conv.params_mut();
        if let Some((act, bn)) = &mut self.act {
            p.extend(act.params_mut());
            p.extend(bn.params_mut());
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct UNet<T> {
    pub spec: UNetSpec,
    pub encoder: Vec<Block<T>>,
    pub decoder: Vec<Block<T>>,
    exec: Exec,
    skip_channels: Option<Vec<usize>>,
}

impl<T: Real> UNet<T> {
    pub fn new<R: Rng + ?Sized>(spec: UNetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let encoder = spec
            .encoder
            .iter()
            .zip(spec.encoder_inputs())
            .enumerate()
            .map(|(i, (l, cin))| Block::new(&format!("enc{i}"), cin, l, rng))
            .collect();
        let decoder = spec
            .decoder
            .iter()
            .zip(spec.decoder_inputs())
            .enumerate()
            .map(|(j, (l, cin))| Block::new(&format!("dec{j}"), cin, l, rng))
            .collect();
        Ok(UNet {
            spec,
            encoder,
            decoder,
            exec: Exec::default(),
            skip_channels: None,
        })
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
        for b in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            b.conv.exec = exec;
        }
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    fn check_input(&self, x: &ComplexTensor<T>) -> Result<()> {
        let d = self.spec.divisor();
        if x.c != self.spec.in_channels {
            return Err(NetError::Shape(format!(
                "input has {} channels, network expects {}",
                x.c, self.spec.in_channels
            )));
        }
        if x.h % d != 0 || x.w % d != 0 || x.h == 0 || x.w == 0 {
            return Err(NetError::Shape(format!(
                "spatial size {}x{} is not a positive multiple of {d}",
                x.h, x.w
            )));
        }
        Ok(())
    }

    fn head(&self, y: ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        Ok(split_channels(&y, self.spec.out_channels)?.0)
    }

    pub fn forward(&mut self, x: &ComplexTensor<T>, mode: Mode) -> Result<ComplexTensor<T>> {
        self.check_input(x)?;
        let ne = self.encoder.len();
        let mut skips = Vec::with_capacity(ne);
        let mut h = x.clone();
        for block in &mut self.encoder {
            let next = block.forward(&h, mode)?;
            skips.push(std::mem::replace(&mut h, next));
        }
        for (j, block) in self.decoder.iter_mut().enumerate() {
            if j < ne {
                h = concat(&upsample2x(&h), &skips[ne - 1 - j])?;
            }
            h = block.forward(&h, mode)?;
        }
        self.skip_channels = (mode == Mode::Train).then(|| skips.iter().map(|s| s.c).collect());
        debug_assert!(h.is_finite(), "non-finite network output");
        self.head(h)
    }

    /// Evaluation-mode forward pass that leaves the model untouched.
    pub fn infer(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        self.check_input(x)?;
        let ne = self.encoder.len();
        let mut skips = Vec::with_capacity(ne);
        let mut h = x.clone();
        for block in &self.encoder {
            let next = block.infer(&h)?;
            skips.push(std::mem::replace(&mut h, next));
        }
        for (j, block) in self.decoder.iter().enumerate() {
            if j < ne {
                h = concat(&upsample2x(&h), &skips[ne - 1 - j])?;
            }
            h = block.infer(&h)?;
        }
        self.head(h)
    }

    /// Backpropagates `d_out` (the gradient of the first `out_channels`
    /// channels) and returns the gradient with respect to the input.
    pub fn backward(&mut self, d_out: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        let skip_c = self
            .skip_channels
            .take()
            .ok_or_else(|| NetError::MissingContext("unet".into()))?;
        let full = self.spec.decoder.last().unwrap().filters;
        let mut d = ComplexTensor::zeros(d_out.n, d_out.h, d_out.w, full);
        for (dst, src) in d.data.chunks_mut(full).zip(d_out.data.chunks(d_out.c)) {
            dst[..src.len()].copy_from_slice(src);
        }
        let ne = self.encoder.len();
        let mut skip_grads: Vec<Option<ComplexTensor<T>>> = vec![None; ne];
        for j in (0..self.decoder.len()).rev() {
            d = self.decoder[j].backward(&d)?;
            if j < ne {
                let i = ne - 1 - j;
                let (d_up, d_skip) = split_channels(&d, d.c - skip_c[i])?;
                skip_grads[i] = Some(d_skip);
                d = upsample2x_backward(&d_up)?;
            }
        }
        for i in (0..ne).rev() {
            d = self.encoder[i].backward(&d)?;
            if let Some(s) = skip_grads[i].take() {
                for (a, b) in d.data.iter_mut().zip(&s.data) {
                    *a += *b;
                }
            }
        }
        debug_assert!(d.is_finite(), "non-finite input gradient");
        debug_assert!(
            self.params().iter().all(|p| p.grad.iter().all(|g| g.re.is_finite() && g.im.is_finite())),
            "non-finite parameter gradient"
        );
        Ok(d)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|b| b.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|b| b.params_mut())
            .collect()
    }

    pub fn batch_norms(&self) -> Vec<&BatchNorm<T>> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .filter_map(|b| b.act.as_ref().map(|a| &a.1))
            .collect()
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm<T>> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .filter_map(|b| b.act.as_mut().map(|a| &mut a.1))
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.real_count()).sum()
    }

    /// Copies parameter values and normalization statistics from `other`.
    pub fn load_state(&mut self, other: &UNet<T>) -> Result<()> {
        if self.spec != other.spec {
            return Err(NetError::Config("network layouts differ".into()));
        }
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            a.value.clone_from(&b.value);
        }
        for (a, b) in self.batch_norms_mut().into_iter().zip(other.batch_norms()) {
            a.running_mean.clone_from(&b.running_mean);
            a.running_cov.clone_from(&b.running_cov);
        }
        Ok(())
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> UNet<U> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out: UNet<U> = UNet::new(self.spec.clone(), &mut rng).expect("spec already validated");
        for (a, b) in out.params_mut().into_iter().zip(self.params()) {
            a.value = b.value.iter().map(|z| crate::tensor::cast(*z)).collect();
        }
        for (a, b) in out.batch_norms_mut().into_iter().zip(self.batch_norms()) {
            a.running_mean.clone_from(&b.running_mean);
            a.running_cov.clone_from(&b.running_cov);
        }
        out.set_exec(self.exec);
        out
    }
}
