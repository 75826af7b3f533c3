//! Small dense networks with hand-rolled reverse-mode gradients and Adam.
//!
//! Batches are stored column-major: one column per sample, so a forward pass
//! is a chain of `W * X + b` broadcasts. Gradients come back in the same
//! shapes as the parameters, which keeps soft updates and the optimizer
//! trivial to write against flat slices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        if self == Activation::Tanh {
            z.apply(|v| *v = v.tanh());
        }
    }

    /// Derivative expressed through the *activated* value.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Layer widths including input and output, e.g. `[8, 256, 256, 1]`.
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>) -> Self {
        MlpSpec {
            sizes,
            hidden: Activation::Tanh,
            output: Activation::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Parameter-shaped gradients plus the gradient w.r.t. the network input.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub d_weights: Vec<DMatrix<f64>>,
    pub d_biases: Vec<DVector<f64>>,
    pub d_input: DMatrix<f64>,
}

/// Cached forward pass; `activations[0]` is the input batch.
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        assert!(spec.sizes.len() >= 2, "network needs input and output layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in spec.sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            // Xavier-uniform keeps tanh layers in their linear regime at init.
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.gen_range(-limit..limit)
            }));
            biases.push(DVector::zeros(fan_out));
        }
        Mlp { spec, weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.spec.sizes.last().unwrap()
    }

    fn activation_for_layer(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.spec.output
        } else {
            self.spec.hidden
        }
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> ForwardCache {
        assert_eq!(x.nrows(), self.input_dim(), "input batch has wrong row count");
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(x.clone());
        for (layer, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * activations.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += b;
            }
            self.activation_for_layer(layer).apply(&mut z);
            activations.push(z);
        }
        ForwardCache { activations }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let cache = self.forward_cached(x);
        cache.activations.into_iter().next_back().unwrap()
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        let batch = DMatrix::from_column_slice(x.len(), 1, x);
        self.forward(&batch).column(0).iter().copied().collect()
    }

    /// Backpropagates `d_output` (gradient of a scalar loss w.r.t. the network
    /// output, same shape as the output batch) through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, d_output: &DMatrix<f64>) -> MlpGradients {
        let n_layers = self.weights.len();
        let mut d_weights = vec![DMatrix::zeros(0, 0); n_layers];
        let mut d_biases = vec![DVector::zeros(0); n_layers];

        let out = cache.output();
        assert_eq!(d_output.shape(), out.shape(), "output gradient shape mismatch");

        let mut delta = d_output.clone();
        for layer in (0..n_layers).rev() {
            let activated = &cache.activations[layer + 1];
            let act = self.activation_for_layer(layer);
            delta.zip_apply(activated, |d, a| *d *= act.derivative_from_output(a));

            let below = &cache.activations[layer];
            d_weights[layer] = &delta * below.transpose();
            d_biases[layer] = DVector::from_iterator(
                delta.nrows(),
                delta.row_iter().map(|row| row.sum()),
            );
            delta = self.weights[layer].transpose() * delta;
        }
        MlpGradients {
            d_weights,
            d_biases,
            d_input: delta,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn load_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter vector length mismatch");
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let nw = w.len();
            w.as_mut_slice().copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = b.len();
            b.as_mut_slice().copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
    }

    /// target <- tau * online + (1 - tau) * target, elementwise.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) {
        assert_eq!(self.spec, online.spec, "soft update across different architectures");
        for (t, o) in self.weights.iter_mut().zip(&online.weights) {
            t.zip_apply(o, |t, o| *t = tau * o + (1.0 - tau) * *t);
        }
        for (t, o) in self.biases.iter_mut().zip(&online.biases) {
            t.zip_apply(o, |t, o| *t = tau * o + (1.0 - tau) * *t);
        }
    }
}

impl MlpGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.d_weights.iter().zip(&self.d_biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }
}

/// Adam with the bias-corrected update, operating on one network's flat
/// parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGradients) {
        let flat_grads = grads.flatten();
        let mut params = net.flatten_params();
        assert_eq!(flat_grads.len(), params.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = flat_grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        net.load_params(&params);
    }

    pub fn state(&self) -> (u64, &[f64], &[f64]) {
        (self.t, &self.m, &self.v)
    }

    pub fn restore(&mut self, t: u64, m: Vec<f64>, v: Vec<f64>) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.t = t;
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64, sizes: Vec<usize>, output: Activation) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec {
            sizes,
            hidden: Activation::Tanh,
            output,
        };
        Mlp::init(spec, &mut rng)
    }

    /// Scalar test loss: sum over the batch of c^T y with fixed weights c.
    fn weighted_sum_loss(net: &Mlp, x: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
        let y = net.forward(x);
        y.column_iter().map(|col| col.dot(c)).sum()
    }

    #[test]
    fn forward_matches_manual_two_layer() {
        let mut net = small_net(0, vec![2, 2, 1], Activation::Identity);
        net.weights[0] = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.5, 2.0]);
        net.biases[0] = DVector::from_row_slice(&[0.1, -0.2]);
        net.weights[1] = DMatrix::from_row_slice(1, 2, &[3.0, -2.0]);
        net.biases[1] = DVector::from_row_slice(&[0.05]);

        let x = [0.3, -0.7];
        let h0 = (1.0 * x[0] - 1.0 * x[1] + 0.1f64).tanh();
        let h1 = (0.5 * x[0] + 2.0 * x[1] - 0.2f64).tanh();
        let expected = 3.0 * h0 - 2.0 * h1 + 0.05;
        let got = net.forward_vec(&x);
        assert!((got[0] - expected).abs() < 1e-14, "got {} want {expected}", got[0]);
    }

    #[test]
    fn parameter_gradients_match_central_differences() {
        let net = small_net(7, vec![3, 5, 4, 2], Activation::Tanh);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(3, 6, |_, _| rng.gen_range(-1.0..1.0));
        let c = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));

        let cache = net.forward_cached(&x);
        // dL/dy for L = sum_b c^T y_b is c broadcast over the batch.
        let d_out = DMatrix::from_fn(2, 6, |i, _| c[i]);
        let analytic = net.backward(&cache, &d_out).flatten();

        let base = net.flatten_params();
        let h = 1e-6;
        for (idx, _) in base.iter().enumerate().step_by(7) {
            let mut probe = net.clone();
            let mut p = base.clone();
            p[idx] += h;
            probe.load_params(&p);
            let plus = weighted_sum_loss(&probe, &x, &c);
            p[idx] -= 2.0 * h;
            probe.load_params(&p);
            let minus = weighted_sum_loss(&probe, &x, &c);
            let fd = (plus - minus) / (2.0 * h);
            let denom = fd.abs().max(analytic[idx].abs()).max(1e-8);
            assert!(
                (fd - analytic[idx]).abs() / denom < 1e-4,
                "param {idx}: fd {fd} vs analytic {}",
                analytic[idx]
            );
        }
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let net = small_net(3, vec![4, 6, 1], Activation::Identity);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let batch = DMatrix::from_column_slice(4, 1, &x0);
        let cache = net.forward_cached(&batch);
        let d_out = DMatrix::from_element(1, 1, 1.0);
        let d_input = net.backward(&cache, &d_out).d_input;

        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x0.clone();
            xp[i] += h;
            let plus = net.forward_vec(&xp)[0];
            xp[i] -= 2.0 * h;
            let minus = net.forward_vec(&xp)[0];
            let fd = (plus - minus) / (2.0 * h);
            assert!(
                (fd - d_input[(i, 0)]).abs() < 1e-7,
                "input {i}: fd {fd} vs analytic {}",
                d_input[(i, 0)]
            );
        }
    }

    #[test]
    fn flatten_load_round_trip() {
        let net = small_net(2, vec![3, 8, 2], Activation::Identity);
        let flat = net.flatten_params();
        let mut other = small_net(9, vec![3, 8, 2], Activation::Identity);
        assert_ne!(other.flatten_params(), flat);
        other.load_params(&flat);
        assert_eq!(other, net);
    }

    #[test]
    fn soft_update_endpoints_and_midpoint() {
        let online = small_net(1, vec![2, 4, 1], Activation::Identity);
        let frozen = small_net(2, vec![2, 4, 1], Activation::Identity);

        let mut target = frozen.clone();
        target.soft_update_from(&online, 0.0);
        assert_eq!(target, frozen);

        let mut target = frozen.clone();
        target.soft_update_from(&online, 1.0);
        assert_eq!(target.flatten_params(), online.flatten_params());

        let mut target = frozen.clone();
        target.soft_update_from(&online, 0.25);
        let expect: Vec<f64> = frozen
            .flatten_params()
            .iter()
            .zip(online.flatten_params())
            .map(|(f, o)| 0.25 * o + 0.75 * f)
            .collect();
        let got = target.flatten_params();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_descends_quadratic() {
        // Fit a 1-parameter "network" y = w x to minimize (w - 3)^2 via the
        // gradient fed through the optimizer directly.
        let mut net = small_net(4, vec![1, 1], Activation::Identity);
        net.biases[0][0] = 0.0;
        let mut opt = Adam::new(0.05, net.param_count());
        for _ in 0..2000 {
            let w = net.weights[0][(0, 0)];
            let grads = MlpGradients {
                d_weights: vec![DMatrix::from_element(1, 1, 2.0 * (w - 3.0))],
                d_biases: vec![DVector::zeros(1)],
                d_input: DMatrix::zeros(1, 1),
            };
            opt.step(&mut net, &grads);
        }
        assert!((net.weights[0][(0, 0)] - 3.0).abs() < 1e-3);
    }
}
