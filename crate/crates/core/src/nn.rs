//! Dense feed-forward networks with exact reverse-mode gradients and Adam.
//!
//! Weights are row-major `(d_out, d_in)`. Hidden layers use `tanh`, the last
//! layer is always the identity.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        weights: Vec<f64>,
        bias: Vec<f64>,
        d_in: usize,
        activation: Activation,
    ) -> Result<Self> {
        let d_out = bias.len();
        ensure_len(d_out * d_in, weights.len())?;
        Ok(Self {
            d_in,
            d_out,
            weights,
            bias,
            activation,
        })
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.d_in).zip(&self.bias) {
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
            out.push(self.activation.apply(z));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    seed: u64,
}

/// Layer outputs of one forward pass; `values[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().map_or(&[], Vec::as_slice)
    }

    pub fn input(&self) -> &[f64] {
        &self.values[0]
    }
}

/// Parameter-shaped buffer: `(weights, bias)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for (w, b) in &mut self.layers {
            w.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, o)| *a += o);
            b.iter_mut().zip(ob).for_each(|(a, o)| *a += o);
        }
    }

    /// Flattened in the same order as [`DenseNet::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }
}

impl DenseNet {
    /// Network with layer widths `dims` (`dims[0]` is the input size),
    /// `tanh` hidden layers and an identity output layer. Weights are drawn
    /// from `U(-a, a)` with `a = sqrt(6 / (d_in + d_out))`; biases start at 0.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer widths {dims:?}")));
        }
        let mut r = rng::seeded(seed);
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (d_in, d_out) = (w[0], w[1]);
                let a = libm::sqrt(6.0 / (d_in + d_out) as f64);
                let weights = (0..d_in * d_out)
                    .map(|_| rng::uniform_range(&mut r, -a, a))
                    .collect();
                let activation = if l + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Tanh
                };
                DenseLayer {
                    d_in,
                    d_out,
                    weights,
                    bias: vec![0.0; d_out],
                    activation,
                }
            })
            .collect();
        Ok(Self { layers, seed })
    }

    pub fn from_layers(layers: Vec<DenseLayer>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs at least one layer".into(),
            ));
        }
        for w in layers.windows(2) {
            ensure_len(w[0].d_out, w[1].d_in)?;
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::InvalidConfig(
                "final activation must be identity".into(),
            ));
        }
        for l in &layers {
            ensure_len(l.d_in * l.d_out, l.weights.len())?;
            ensure_len(l.d_out, l.bias.len())?;
        }
        Ok(Self { layers, seed })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            core::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        ensure_len(self.input_dim(), x.len())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.d_out);
            layer.forward_into(values.last().expect("input pushed"), &mut out);
            values.push(out);
        }
        Ok(Trace { values })
    }

    /// Gradients of a scalar loss given `upstream = dL/d(output)`.
    pub fn backward(&self, trace: &Trace, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_accumulate(trace, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`backward`](Self::backward) but adds parameter gradients into
    /// `grads`. Returns the input gradient.
    pub fn backward_accumulate(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        ensure_len(self.layers.len() + 1, trace.values.len())?;
        ensure_len(self.output_dim(), upstream.len())?;
        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace.values[l + 1];
            let inp = &trace.values[l];
            for (d, a) in delta.iter_mut().zip(out) {
                *d *= layer.activation.derivative_from_output(*a);
            }
            let (gw, gb) = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d != 0.0 {
                    for (g, x) in gw[o * layer.d_in..(o + 1) * layer.d_in].iter_mut().zip(inp) {
                        *g += d * x;
                    }
                }
            }
            let mut prev = vec![0.0; layer.d_in];
            for (row, &d) in layer.weights.chunks_exact(layer.d_in).zip(&delta) {
                if d != 0.0 {
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Input gradient only (parameters are not differentiated).
    pub fn input_gradient(&self, trace: &Trace, upstream: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.output_dim(), upstream.len())?;
        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            for (d, a) in delta.iter_mut().zip(&trace.values[l + 1]) {
                *d *= layer.activation.derivative_from_output(*a);
            }
            let mut prev = vec![0.0; layer.d_in];
            for (row, &d) in layer.weights.chunks_exact(layer.d_in).zip(&delta) {
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// All parameters, layer by layer, weights then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        ensure_len(self.param_count(), params.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Binary layout: `u32` layer count, then per layer `u32 d_in`,
    /// `u32 d_out`, `u8` activation code; then per layer the row-major
    /// weights followed by the bias as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 9 * self.layers.len() + 8 * self.param_count());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.d_in as u32).to_le_bytes());
            out.extend_from_slice(&(l.d_out as u32).to_le_bytes());
            out.push(l.activation.code());
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes [`to_bytes`](Self::to_bytes) output; returns the network and
    /// the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut cur = ByteReader::new(bytes);
        let n_layers = cur.u32()? as usize;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let d_in = cur.u32()? as usize;
            let d_out = cur.u32()? as usize;
            let act = Activation::from_code(cur.u8()?)
                .ok_or_else(|| Error::Decode("unknown activation code".into()))?;
            shapes.push((d_in, d_out, act));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (d_in, d_out, activation) in shapes {
            let weights = (0..d_in * d_out)
                .map(|_| cur.f64())
                .collect::<Result<Vec<_>>>()?;
            let bias = (0..d_out).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            layers.push(DenseLayer {
                d_in,
                d_out,
                weights,
                bias,
                activation,
            });
        }
        let net = Self::from_layers(layers, 0).map_err(|e| Error::Decode(format!("{e}")))?;
        Ok((net, cur.pos))
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Decode("unexpected end of input".into()))?;
        self.pos = end;
        let mut out = [0u8; N];
        out.copy_from_slice(chunk);
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn for_net(net: &DenseNet, lr: f64) -> Self {
        Self::new(net.param_count(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates `params` in place from `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        ensure_len(self.m.len(), params.len())?;
        ensure_len(self.m.len(), grads.len())?;
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }

    /// Applies one step to a network's parameters.
    pub fn step_net(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        ensure_len(self.m.len(), net.param_count())?;
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let mut off = 0;
        for (layer, (gw, gb)) in net.layers.iter_mut().zip(&grads.layers) {
            for (p, g) in layer
                .weights
                .iter_mut()
                .zip(gw)
                .chain(layer.bias.iter_mut().zip(gb))
            {
                let m = &mut self.m[off];
                let v = &mut self.v[off];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / c1) / (libm::sqrt(*v / c2) + self.eps);
                off += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: Vec<f64>, b: Vec<f64>, d_in: usize, act: Activation) -> DenseNet {
        DenseNet {
            layers: vec![DenseLayer::new(w, b, d_in, act).unwrap()],
            seed: 0,
        }
    }

    #[test]
    fn identity_layer_is_identity() {
        let net = single(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            2,
            Activation::Identity,
        );
        assert_eq!(net.forward(&[0.3, -2.0]).unwrap(), vec![0.3, -2.0]);
    }

    #[test]
    fn affine_arithmetic() {
        let net = single(vec![2.0], vec![1.0], 1, Activation::Identity);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn zero_tanh_layer() {
        let net = single(vec![0.0], vec![0.0], 1, Activation::Tanh);
        assert_eq!(net.forward(&[123.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn wrong_input_length() {
        let net = DenseNet::new(&[3, 4, 1], 1).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::ShapeError {
                expected: 3,
                found: 1
            })
        ));
    }

    #[test]
    fn linear_input_gradient_is_weight_row() {
        let net = single(
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0.0; 2],
            3,
            Activation::Identity,
        );
        let trace = net.forward_trace(&[0.5, -1.0, 2.0]).unwrap();
        let (_, g) = net.backward(&trace, &[1.0, 0.0]).unwrap();
        assert_eq!(g, vec![1.0, 2.0, 3.0]);
        assert_eq!(net.input_gradient(&trace, &[1.0, 0.0]).unwrap(), g);
    }

    #[test]
    fn final_layer_must_be_identity() {
        let l = DenseLayer::new(vec![1.0], vec![0.0], 1, Activation::Tanh).unwrap();
        assert!(DenseNet::from_layers(vec![l], 0).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = DenseNet::new(&[4, 8, 2], 9).unwrap();
        let b = DenseNet::new(&[4, 8, 2], 9).unwrap();
        assert_eq!(a, b);
        let bound = libm::sqrt(6.0 / 12.0);
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(a.layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn bytes_round_trip() {
        let net = DenseNet::new(&[3, 5, 2], 4).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(bytes.len(), 4 + 2 * 9 + 8 * net.param_count());
        let (back, used) = DenseNet::from_bytes(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back.parameters(), net.parameters());
        assert!(DenseNet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut adam = Adam::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2, 0.01);
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &[3.0, -0.2]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-8);
        assert!((p[1] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn adam_descends_against_constant_gradient() {
        let mut adam = Adam::new(1, 0.05);
        let mut p = vec![0.0];
        for _ in 0..100 {
            adam.step(&mut p, &[2.0]).unwrap();
        }
        assert!(p[0] < -4.0);
    }
}
