//! Attribute autoencoder: a 2M-layer encoder-decoder over the encoded
//! attribute vector. The bottleneck activation after layer M is the attribute
//! code that conditions the sequence network; the final layer reconstructs the
//! input and drives the squared-error pretraining loss.
//!
//! Layer M (the code) and layer 2M (the reconstruction) use sigmoid: the code
//! stays bounded, which keeps the additive conditioning well behaved, and the
//! reconstruction lives in (0,1) where the min-max scaled targets are. All
//! other layers use ReLU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{glorot_uniform, relu, sigmoid, Matrix, RandomSource, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(&self, z: &Vector) -> Vector {
        match self {
            Activation::Relu => relu(z),
            Activation::Sigmoid => sigmoid(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeLayer {
    pub weight: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeNetParams {
    pub layers: Vec<AttributeLayer>,
    /// M: the code is the activation of layer M (1-based), the network has 2M
    /// layers in total.
    pub encoder_depth: usize,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct AttributeForwardTrace {
    pub input: Vector,
    /// Pre-activation of each layer.
    pub pre: Vec<Vector>,
    /// Activation of each layer; `post[M-1]` is the code, `post[2M-1]` the
    /// reconstruction.
    pub post: Vec<Vector>,
}

/// Layer output widths for the chain u -> ... -> d -> ... -> u, linearly
/// interpolated on the encoder side and mirrored on the decoder side.
fn layer_widths(input_dim: usize, code_dim: usize, encoder_depth: usize) -> Vec<usize> {
    let m = encoder_depth;
    let mut widths = Vec::with_capacity(2 * m);
    for i in 1..=m {
        let t = i as f64 / m as f64;
        let w = (input_dim as f64 + (code_dim as f64 - input_dim as f64) * t).round() as usize;
        widths.push(w.max(1));
    }
    for i in (1..m).rev() {
        widths.push(widths[i - 1]);
    }
    widths.push(input_dim);
    widths
}

impl AttributeNetParams {
    pub fn init(
        input_dim: usize,
        code_dim: usize,
        encoder_depth: usize,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        if input_dim < 1 || code_dim < 1 || encoder_depth < 1 {
            return Err(Error::config(
                "attribute network needs input dim, code dim, and encoder depth of at least 1",
            ));
        }
        let widths = layer_widths(input_dim, code_dim, encoder_depth);
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input_dim;
        for (idx, &width) in widths.iter().enumerate() {
            let layer_no = idx + 1;
            let activation = if layer_no == encoder_depth || layer_no == 2 * encoder_depth {
                Activation::Sigmoid
            } else {
                Activation::Relu
            };
            layers.push(AttributeLayer {
                weight: glorot_uniform(width, prev, rng),
                bias: Vector::zeros(width),
                activation,
            });
            prev = width;
        }
        Ok(AttributeNetParams { layers, encoder_depth })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn code_dim(&self) -> usize {
        self.layers[self.encoder_depth - 1].bias.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.encoder_depth;
        if m < 1 || self.layers.len() != 2 * m {
            return Err(Error::corrupt(format!(
                "attribute network must have 2M layers, got {} with M={m}",
                self.layers.len()
            )));
        }
        let mut prev = self.input_dim();
        for (idx, layer) in self.layers.iter().enumerate() {
            if !layer.weight.shape_consistent() {
                return Err(Error::corrupt(format!("attribute layer {} weight shape", idx + 1)));
            }
            if layer.weight.cols() != prev || layer.bias.dim() != layer.weight.rows() {
                return Err(Error::corrupt(format!(
                    "attribute layer {} dimensions are inconsistent",
                    idx + 1
                )));
            }
            if !layer.weight.is_finite() || !layer.bias.is_finite() {
                return Err(Error::corrupt(format!(
                    "attribute layer {} has non-finite entries",
                    idx + 1
                )));
            }
            prev = layer.weight.rows();
        }
        if prev != self.input_dim() {
            return Err(Error::corrupt("attribute decoder output width differs from input"));
        }
        Ok(())
    }

    /// Full forward pass: code (activation of layer M), reconstruction
    /// (activation of layer 2M), and the trace for backpropagation.
    pub fn forward(&self, x: &Vector) -> Result<(Vector, Vector, AttributeForwardTrace)> {
        if x.dim() != self.input_dim() {
            return Err(Error::input(format!(
                "attribute vector has dimension {}, network expects {}",
                x.dim(),
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vector> = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let prev = if idx == 0 { x } else { &post[idx - 1] };
            let mut z = layer.weight.matvec(prev);
            z.add_scaled(1.0, &layer.bias);
            let a = layer.activation.apply(&z);
            pre.push(z);
            post.push(a);
        }
        let code = post[self.encoder_depth - 1].clone();
        let reconstruction = post.last().unwrap().clone();
        Ok((code, reconstruction, AttributeForwardTrace { input: x.clone(), pre, post }))
    }

    /// Gradients of the reconstruction loss ‖x − x̂‖² with respect to every
    /// layer's weights and biases.
    pub fn backward(&self, trace: &AttributeForwardTrace) -> AttributeNetGrads {
        let reconstruction = trace.post.last().expect("trace has layers");
        let mut d_output = reconstruction.sub(&trace.input);
        d_output.scale(2.0);
        self.backprop_from(trace, self.layers.len() - 1, d_output)
    }

    /// Gradients of an arbitrary scalar loss with respect to encoder
    /// parameters only, given that loss's gradient at the code. This is how
    /// the sequence loss reaches the encoder through the conditioning term.
    pub fn encoder_backward(&self, trace: &AttributeForwardTrace, code_grad: &Vector) -> AttributeNetGrads {
        assert_eq!(code_grad.dim(), self.code_dim(), "code gradient dimension");
        self.backprop_from(trace, self.encoder_depth - 1, code_grad.clone())
    }

    /// Backpropagate `d_post` (gradient at the activation of `top_idx`) down
    /// to layer 0, accumulating parameter gradients.
    fn backprop_from(
        &self,
        trace: &AttributeForwardTrace,
        top_idx: usize,
        mut d_post: Vector,
    ) -> AttributeNetGrads {
        assert_eq!(trace.post.len(), self.layers.len(), "stale trace");
        let mut grads = AttributeNetGrads::zeros_like(self);
        for idx in (0..=top_idx).rev() {
            let layer = &self.layers[idx];
            let mut dz = Vector::zeros(d_post.dim());
            match layer.activation {
                Activation::Sigmoid => {
                    let a = &trace.post[idx];
                    for i in 0..dz.dim() {
                        dz.set(i, d_post.get(i) * a.get(i) * (1.0 - a.get(i)));
                    }
                }
                Activation::Relu => {
                    let z = &trace.pre[idx];
                    for i in 0..dz.dim() {
                        dz.set(i, if z.get(i) > 0.0 { d_post.get(i) } else { 0.0 });
                    }
                }
            }
            let prev = if idx == 0 { &trace.input } else { &trace.post[idx - 1] };
            grads.weights[idx].add_outer(1.0, &dz, prev);
            grads.biases[idx].add_scaled(1.0, &dz);
            if idx > 0 {
                d_post = layer.weight.matvec_t(&dz);
            }
        }
        grads
    }

    /// `params += scale · grads`; pass `-learning_rate` for a descent step.
    pub fn apply_gradients(&mut self, grads: &AttributeNetGrads, scale: f64) {
        for (layer, (gw, gb)) in
            self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases))
        {
            layer.weight.add_scaled(scale, gw);
            layer.bias.add_scaled(scale, gb);
        }
    }

    /// Named mutable views of every parameter buffer, in a fixed order that
    /// matches [`AttributeNetGrads::named_grads`]. Used by gradient checking.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("attribute.layer{}.weight", idx + 1), layer.weight.data_mut()));
            out.push((format!("attribute.layer{}.bias", idx + 1), layer.bias.data_mut()));
        }
        out
    }
}

/// Squared Euclidean reconstruction error.
pub fn reconstruction_loss(x: &Vector, reconstruction: &Vector) -> Result<f64> {
    if x.dim() != reconstruction.dim() {
        return Err(Error::input(format!(
            "loss operands have dimensions {} and {}",
            x.dim(),
            reconstruction.dim()
        )));
    }
    Ok(x.sub(reconstruction).norm_sq())
}

#[derive(Debug, Clone)]
pub struct AttributeNetGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl AttributeNetGrads {
    pub fn zeros_like(params: &AttributeNetParams) -> Self {
        AttributeNetGrads {
            weights: params
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            biases: params.layers.iter().map(|l| Vector::zeros(l.bias.dim())).collect(),
        }
    }

    pub fn add(&mut self, other: &AttributeNetGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_scaled(1.0, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.add_scaled(1.0, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            w.scale(s);
        }
        for b in &mut self.biases {
            b.scale(s);
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(Matrix::norm_sq).sum::<f64>()
            + self.biases.iter().map(Vector::norm_sq).sum::<f64>()
    }

    /// Named views matching [`AttributeNetParams::named_params_mut`].
    pub fn named_grads(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (idx, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("attribute.layer{}.weight", idx + 1), w.data()));
            out.push((format!("attribute.layer{}.bias", idx + 1), b.data()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn zeroed_net(input_dim: usize, code_dim: usize, depth: usize) -> AttributeNetParams {
        let mut rng = RandomSource::new(0);
        let mut net = AttributeNetParams::init(input_dim, code_dim, depth, &mut rng).unwrap();
        for layer in &mut net.layers {
            layer.weight.scale(0.0);
            layer.bias.scale(0.0);
        }
        net
    }

    #[test]
    fn zero_parameters_give_half_vectors() {
        let net = zeroed_net(4, 2, 1);
        let x = Vector::from_slice(&[0.3, 0.9, 0.0, 1.0]);
        let (code, recon, _) = net.forward(&x).unwrap();
        assert_eq!(code.data(), &[0.5, 0.5]);
        assert_eq!(recon.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_unit_code_at_zero_input() {
        let mut net = zeroed_net(2, 1, 1);
        net.layers[0].weight = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let (code, _, _) = net.forward(&Vector::from_slice(&[0.0, 0.0])).unwrap();
        assert_eq!(code.data(), &[0.5]);
    }

    /// Straight-line re-evaluation of the two-layer forward pass, written
    /// independently of the Matrix type.
    #[test]
    fn forward_matches_straight_line_reimplementation() {
        let mut rng = RandomSource::new(21);
        let net = AttributeNetParams::init(4, 2, 1, &mut rng).unwrap();
        let x = [0.12, 0.9, 0.45, 0.3];
        let (code, recon, _) = net.forward(&Vector::from_slice(&x)).unwrap();

        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let w1 = &net.layers[0].weight;
        let b1 = &net.layers[0].bias;
        let mut v1 = [0.0; 2];
        for r in 0..2 {
            let mut z = b1.get(r);
            for c in 0..4 {
                z += w1.get(r, c) * x[c];
            }
            v1[r] = sig(z);
        }
        let w2 = &net.layers[1].weight;
        let b2 = &net.layers[1].bias;
        for r in 0..4 {
            let mut z = b2.get(r);
            for c in 0..2 {
                z += w2.get(r, c) * v1[c];
            }
            assert_abs_diff_eq!(recon.get(r), sig(z), epsilon = 1e-12);
        }
        for r in 0..2 {
            assert_abs_diff_eq!(code.get(r), v1[r], epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_loss_examples() {
        let same = Vector::from_slice(&[0.4, 0.6]);
        assert_eq!(reconstruction_loss(&same, &same).unwrap(), 0.0);
        assert_eq!(
            reconstruction_loss(
                &Vector::from_slice(&[1.0, 0.0]),
                &Vector::from_slice(&[0.0, 0.0])
            )
            .unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            reconstruction_loss(
                &Vector::from_slice(&[0.2, 0.7]),
                &Vector::from_slice(&[0.5, 0.3])
            )
            .unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert!(reconstruction_loss(&same, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn forward_rejects_wrong_input_dimension() {
        let net = zeroed_net(4, 2, 1);
        assert!(matches!(net.forward(&Vector::zeros(5)), Err(Error::InputDomain(_))));
    }

    #[test]
    fn gradients_vanish_at_a_perfect_reconstruction() {
        // Zero parameters reconstruct to the all-0.5 vector; feeding exactly
        // that vector puts the loss at its global minimum.
        let net = zeroed_net(3, 2, 1);
        let x = Vector::from_slice(&[0.5, 0.5, 0.5]);
        let (_, _, trace) = net.forward(&x).unwrap();
        let grads = net.backward(&trace);
        assert!(grads.norm_sq() < 1e-24);
    }

    #[test]
    fn accumulating_a_sample_twice_doubles_gradients() {
        let mut rng = RandomSource::new(33);
        let net = AttributeNetParams::init(5, 2, 1, &mut rng).unwrap();
        let x = Vector::from_slice(&[0.1, 0.8, 0.3, 0.9, 0.5]);
        let (_, _, trace) = net.forward(&x).unwrap();
        let single = net.backward(&trace);
        let mut accumulated = net.backward(&trace);
        accumulated.add(&single);
        let mut doubled = single.clone();
        doubled.scale(2.0);
        for (a, b) in accumulated.named_grads().iter().zip(doubled.named_grads()) {
            for (x, y) in a.1.iter().zip(b.1) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-15);
            }
        }
    }

    /// Central finite differences over every parameter of the reconstruction
    /// loss.
    fn fd_check_reconstruction(mut net: AttributeNetParams, x: &Vector) -> f64 {
        let (_, _, trace) = net.forward(x).unwrap();
        let analytic = net.backward(&trace);
        let analytic: Vec<(String, Vec<f64>)> = analytic
            .named_grads()
            .into_iter()
            .map(|(n, g)| (n, g.to_vec()))
            .collect();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for (slot, (_, grads)) in analytic.iter().enumerate() {
            for k in 0..grads.len() {
                let orig = net.named_params_mut()[slot].1[k];
                net.named_params_mut()[slot].1[k] = orig + step;
                let (_, recon, _) = net.forward(x).unwrap();
                let plus = reconstruction_loss(x, &recon).unwrap();
                net.named_params_mut()[slot].1[k] = orig - step;
                let (_, recon, _) = net.forward(x).unwrap();
                let minus = reconstruction_loss(x, &recon).unwrap();
                net.named_params_mut()[slot].1[k] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let denom = numeric.abs().max(grads[k].abs());
                if denom > 1e-7 {
                    worst = worst.max((numeric - grads[k]).abs() / denom);
                }
            }
        }
        worst
    }

    #[test]
    fn backward_matches_finite_differences_depth_one() {
        let mut rng = RandomSource::new(7);
        let net = AttributeNetParams::init(6, 3, 1, &mut rng).unwrap();
        let x = Vector::from_vec((0..6).map(|i| 0.1 + 0.13 * i as f64).collect());
        let worst = fd_check_reconstruction(net, &x);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn backward_matches_finite_differences_depth_two() {
        let mut rng = RandomSource::new(8);
        let net = AttributeNetParams::init(6, 2, 2, &mut rng).unwrap();
        let x = Vector::from_vec((0..6).map(|i| 0.9 - 0.11 * i as f64).collect());
        let worst = fd_check_reconstruction(net, &x);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    /// encoder_backward must be the gradient of any scalar function of the
    /// code; here f = code · t for a fixed vector t.
    #[test]
    fn encoder_backward_matches_finite_differences() {
        let mut rng = RandomSource::new(9);
        let mut net = AttributeNetParams::init(5, 3, 2, &mut rng).unwrap();
        let x = Vector::from_slice(&[0.2, 0.4, 0.6, 0.8, 1.0]);
        let t = Vector::from_slice(&[0.7, -1.3, 0.4]);

        let (_, _, trace) = net.forward(&x).unwrap();
        let analytic: Vec<(String, Vec<f64>)> = net
            .encoder_backward(&trace, &t)
            .named_grads()
            .into_iter()
            .map(|(n, g)| (n, g.to_vec()))
            .collect();

        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for (slot, (_, grads)) in analytic.iter().enumerate() {
            for k in 0..grads.len() {
                let orig = net.named_params_mut()[slot].1[k];
                net.named_params_mut()[slot].1[k] = orig + step;
                let plus = net.forward(&x).unwrap().0.dot(&t);
                net.named_params_mut()[slot].1[k] = orig - step;
                let minus = net.forward(&x).unwrap().0.dot(&t);
                net.named_params_mut()[slot].1[k] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let denom = numeric.abs().max(grads[k].abs());
                if denom > 1e-7 {
                    worst = worst.max((numeric - grads[k]).abs() / denom);
                }
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
        // Decoder layers are untouched by the encoder-only pass.
        let grads = net.encoder_backward(&net.forward(&x).unwrap().2, &t);
        for idx in net.encoder_depth..net.layers.len() {
            assert_eq!(grads.weights[idx].norm_sq(), 0.0);
            assert_eq!(grads.biases[idx].norm_sq(), 0.0);
        }
    }

    #[test]
    fn depth_two_widths_interpolate_and_mirror() {
        let mut rng = RandomSource::new(1);
        let net = AttributeNetParams::init(10, 2, 2, &mut rng).unwrap();
        let widths: Vec<usize> = net.layers.iter().map(|l| l.weight.rows()).collect();
        assert_eq!(widths, vec![6, 2, 6, 10]);
        assert_eq!(net.code_dim(), 2);
        assert!(net.validate().is_ok());
    }

    proptest! {
        #[test]
        fn reconstruction_stays_in_open_unit_interval(
            seed in 0u64..200,
            x in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            let mut rng = RandomSource::new(seed);
            let net = AttributeNetParams::init(6, 3, 1, &mut rng).unwrap();
            let (_, recon, _) = net.forward(&Vector::from_vec(x)).unwrap();
            prop_assert!(recon.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }

        #[test]
        fn forward_is_deterministic(seed in 0u64..50) {
            let mut rng = RandomSource::new(seed);
            let net = AttributeNetParams::init(4, 2, 2, &mut rng).unwrap();
            let x = Vector::from_slice(&[0.25, 0.5, 0.75, 1.0]);
            let (c1, r1, _) = net.forward(&x).unwrap();
            let (c2, r2, _) = net.forward(&x).unwrap();
            prop_assert_eq!(c1.data(), c2.data());
            prop_assert_eq!(r1.data(), r2.data());
        }
    }
}
