//! Dense feedforward classifier with exact reverse-mode gradients and
//! forward-over-reverse second-order parameter gradients.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_class, check_input, softmax, Activation, ForwardTrace, Head, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `(out_dim, in_dim)` weight matrix.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Fully connected net: hidden layers use one shared activation, the final
/// layer is linear and produces logits.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    hidden_activation: Activation,
    explain_head: Head,
}

/// How the parameter gradient of a saliency gap is computed.
///
/// `DoubleBackprop` propagates forward-mode tangents through both the forward
/// and backward passes; it is exact but needs a twice-differentiable hidden
/// activation. `FiniteDifference` differences two exact parameter gradients
/// along the input direction and works for any activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapGradMode {
    FiniteDifference,
    DoubleBackprop,
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>, hidden_activation: Activation) -> Result<Self> {
        hidden_activation.validate()?;
        if layers.is_empty() {
            return Err(Error::Usage("network needs at least one layer".into()));
        }
        for (idx, layer) in layers.iter().enumerate() {
            if layer.weights.nrows() != layer.biases.len() {
                return Err(Error::Shape(format!(
                    "layer {idx}: {} weight rows vs {} biases",
                    layer.weights.nrows(),
                    layer.biases.len()
                )));
            }
            if idx > 0 && layer.weights.ncols() != layers[idx - 1].weights.nrows() {
                return Err(Error::Shape(format!(
                    "layer {idx} expects {} inputs but layer {} outputs {}",
                    layer.weights.ncols(),
                    idx - 1,
                    layers[idx - 1].weights.nrows()
                )));
            }
            let finite = layer.weights.iter().all(|v| v.is_finite())
                && layer.biases.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!(
                    "layer {idx} has non-finite parameters"
                )));
            }
        }
        if layers.last().unwrap().weights.nrows() < 2 {
            return Err(Error::Usage(
                "classifier needs at least two output classes".into(),
            ));
        }
        Ok(DenseNet {
            layers,
            hidden_activation,
            explain_head: Head::Probability,
        })
    }

    /// Random init: uniform in ±sqrt(6 / fan_in), biases zero. `dims` lists
    /// input, hidden, and output widths, e.g. `[16, 32, 2]`.
    pub fn random(dims: &[usize], hidden_activation: Activation, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Usage(
                "need at least input and output dimensions".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Usage("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let weights =
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
            layers.push(DenseLayer {
                weights,
                biases: Array1::zeros(fan_out),
            });
        }
        DenseNet::new(layers, hidden_activation)
    }

    pub fn with_explain_head(mut self, head: Head) -> Self {
        self.explain_head = head;
        self
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut Vec<DenseLayer> {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn explain_head(&self) -> Head {
        self.explain_head
    }

    fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Seed vector at the logits for d(output)/d(logits).
    fn logit_seed(&self, probabilities: &Array1<f64>, class: usize, head: Head) -> Array1<f64> {
        let c = self.n_classes();
        match head {
            Head::Logit => {
                let mut seed = Array1::zeros(c);
                seed[class] = 1.0;
                seed
            }
            Head::Probability => {
                // d p_c / d z_j = p_c (delta_cj - p_j)
                let pc = probabilities[class];
                let mut seed = probabilities.mapv(|pj| -pc * pj);
                seed[class] += pc;
                seed
            }
        }
    }

    /// Reverse pass from a logit-space seed down to the input.
    fn input_grad_from_seed(&self, trace: &ForwardTrace, seed: &Array1<f64>) -> Array1<f64> {
        let mut delta = seed.clone();
        for l in (0..self.n_layers()).rev() {
            let v = self.layers[l].weights.t().dot(&delta);
            if l == 0 {
                return v;
            }
            let z_prev = &trace.pre_activations[l - 1];
            delta = &v * &z_prev.mapv(|z| self.hidden_activation.deriv(z));
        }
        unreachable!("network has at least one layer");
    }

    /// Reverse pass from a logit-space seed producing parameter gradients.
    fn param_grad_from_seed(&self, trace: &ForwardTrace, seed: &Array1<f64>) -> ParamGradient {
        let mut grad = ParamGradient::zeros_like(self);
        let mut delta = seed.clone();
        for l in (0..self.n_layers()).rev() {
            let a_in = &trace.activations[l];
            grad.weights[l] = outer(&delta, a_in);
            grad.biases[l] = delta.clone();
            if l == 0 {
                break;
            }
            let v = self.layers[l].weights.t().dot(&delta);
            let z_prev = &trace.pre_activations[l - 1];
            delta = &v * &z_prev.mapv(|z| self.hidden_activation.deriv(z));
        }
        grad
    }

    /// Gradient of the mean cross-entropy over a batch, with the loss value.
    pub fn loss_and_gradient(
        &self,
        xs: &Array2<f64>,
        ys: &[usize],
    ) -> Result<(f64, ParamGradient)> {
        if xs.nrows() == 0 {
            return Err(Error::Usage("empty batch".into()));
        }
        if xs.nrows() != ys.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} labels",
                xs.nrows(),
                ys.len()
            )));
        }
        let mut grad = ParamGradient::zeros_like(self);
        let mut losses = Vec::with_capacity(xs.nrows());
        for (row, &y) in xs.outer_iter().zip(ys) {
            check_class(self, y)?;
            let x = row.to_owned();
            let trace = self.forward(&x)?;
            losses.push(-trace.probabilities[y].max(1e-300).ln());
            // d CE / d z = p - onehot(y)
            let mut seed = trace.probabilities.clone();
            seed[y] -= 1.0;
            let g = self.param_grad_from_seed(&trace, &seed);
            grad.add_assign(&g);
        }
        let inv = 1.0 / xs.nrows() as f64;
        grad.scale(inv);
        Ok((crate::util::pairwise_mean(&losses), grad))
    }

    /// Parameter gradient of an arbitrary scalar output (class probability or
    /// logit) at a single input.
    pub fn param_gradient_of_output(
        &self,
        x: &Array1<f64>,
        class: usize,
        head: Head,
    ) -> Result<ParamGradient> {
        check_input(self, x)?;
        check_class(self, class)?;
        let trace = self.forward(x)?;
        let seed = self.logit_seed(&trace.probabilities, class, head);
        Ok(self.param_grad_from_seed(&trace, &seed))
    }

    /// Value and parameter gradient of `r . grad_x out_c(x)` where `out_c` is
    /// the class-`class` output under `head`.
    ///
    /// With `r = e_i - e_j` this is the saliency gap between features `i` and
    /// `j`; general coefficient vectors fold a whole sum of gaps into one
    /// pass.
    pub fn directional_saliency_param_gradient(
        &self,
        x: &Array1<f64>,
        coeffs: &Array1<f64>,
        class: usize,
        head: Head,
        mode: GapGradMode,
    ) -> Result<(f64, ParamGradient)> {
        check_input(self, x)?;
        check_class(self, class)?;
        if coeffs.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "coefficient vector has {} entries, expected {}",
                coeffs.len(),
                self.input_dim()
            )));
        }
        match mode {
            GapGradMode::DoubleBackprop => self.directional_param_grad_exact(x, coeffs, class, head),
            GapGradMode::FiniteDifference => self.directional_param_grad_fd(x, coeffs, class, head),
        }
    }

    /// Pick the exact mode when the activation supports it (or no hidden
    /// layers exist), otherwise the finite-difference fallback.
    pub fn preferred_gap_grad_mode(&self) -> GapGradMode {
        if self.n_layers() == 1 || self.hidden_activation.has_second_derivative() {
            GapGradMode::DoubleBackprop
        } else {
            GapGradMode::FiniteDifference
        }
    }

    /// Forward-over-reverse: propagate the input-direction tangent through
    /// both passes. Exact for twice-differentiable activations.
    fn directional_param_grad_exact(
        &self,
        x: &Array1<f64>,
        coeffs: &Array1<f64>,
        class: usize,
        head: Head,
    ) -> Result<(f64, ParamGradient)> {
        if self.n_layers() > 1 && !self.hidden_activation.has_second_derivative() {
            return Err(Error::Capability(
                "exact second-order pass needs a twice-differentiable hidden activation; \
                 use the finite-difference mode"
                    .into(),
            ));
        }
        let n_layers = self.n_layers();

        // Forward pass with tangents.
        let mut a = x.clone();
        let mut da = coeffs.clone();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut layer_input_tangents = Vec::with_capacity(n_layers);
        let mut zs = Vec::with_capacity(n_layers);
        let mut dzs = Vec::with_capacity(n_layers);
        for (l, layer) in self.layers.iter().enumerate() {
            layer_inputs.push(a.clone());
            layer_input_tangents.push(da.clone());
            let z = layer.weights.dot(&a) + &layer.biases;
            let dz = layer.weights.dot(&da);
            if l + 1 < n_layers {
                a = z.mapv(|v| self.hidden_activation.apply(v));
                da = &dz * &z.mapv(|v| self.hidden_activation.deriv(v));
            } else {
                a = z.clone();
                da = dz.clone();
            }
            zs.push(z);
            dzs.push(dz);
        }
        let logits = a;
        let dlogits = da;
        let probabilities = softmax(&logits);

        // Seed and its tangent at the logits.
        let (mut u, mut du) = match head {
            Head::Logit => {
                let mut seed = Array1::zeros(self.n_classes());
                seed[class] = 1.0;
                (seed, Array1::zeros(self.n_classes()))
            }
            Head::Probability => {
                // dp_j = p_j (dz_j - sum_k p_k dz_k)
                let inner = probabilities.dot(&dlogits);
                let dp = &probabilities * &(&dlogits - inner);
                let pc = probabilities[class];
                let dpc = dp[class];
                let mut seed = probabilities.mapv(|pj| -pc * pj);
                seed[class] += pc;
                let mut dseed =
                    Array1::from_shape_fn(self.n_classes(), |j| {
                        -(dpc * probabilities[j] + pc * dp[j])
                    });
                dseed[class] += dpc;
                (seed, dseed)
            }
        };

        // Backward pass with tangents.
        let mut grad = ParamGradient::zeros_like(self);
        let mut value = f64::NAN;
        for l in (0..n_layers).rev() {
            grad.weights[l] = outer(&du, &layer_inputs[l]);
            grad.weights[l] += &outer(&u, &layer_input_tangents[l]);
            grad.biases[l] = du.clone();
            let v = self.layers[l].weights.t().dot(&u);
            let dv = self.layers[l].weights.t().dot(&du);
            if l == 0 {
                value = v.dot(coeffs);
                break;
            }
            let z_prev = &zs[l - 1];
            let dz_prev = &dzs[l - 1];
            let phi1 = z_prev.mapv(|z| self.hidden_activation.deriv(z));
            if n_layers > 1 {
                let phi2 = z_prev.mapv(|z| {
                    self.hidden_activation
                        .second_deriv(z)
                        .expect("checked above")
                });
                du = &(&dv * &phi1) + &(&(&v * &phi2) * dz_prev);
            }
            u = &v * &phi1;
        }
        Ok((value, grad))
    }

    /// Central difference of the exact parameter gradient along the input
    /// direction. Works for any activation.
    fn directional_param_grad_fd(
        &self,
        x: &Array1<f64>,
        coeffs: &Array1<f64>,
        class: usize,
        head: Head,
    ) -> Result<(f64, ParamGradient)> {
        let norm = coeffs.dot(coeffs).sqrt();
        if norm == 0.0 {
            return Ok((0.0, ParamGradient::zeros_like(self)));
        }
        let unit = coeffs / norm;
        let step = super::second_order::default_fd_step(x);
        let plus = self.param_gradient_of_output(&(x + &(&unit * step)), class, head)?;
        let minus = self.param_gradient_of_output(&(x - &(&unit * step)), class, head)?;
        let mut grad = plus;
        grad.axpy(-1.0, &minus);
        grad.scale(norm / (2.0 * step));

        let trace = self.forward(x)?;
        let seed = self.logit_seed(&trace.probabilities, class, head);
        let input_grad = self.input_grad_from_seed(&trace, &seed);
        Ok((input_grad.dot(coeffs), grad))
    }
}

impl Model for DenseNet {
    fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    fn n_classes(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    fn forward(&self, x: &Array1<f64>) -> Result<ForwardTrace> {
        check_input(self, x)?;
        let n_layers = self.n_layers();
        let mut activations = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers);
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            activations.push(a.clone());
            let z = layer.weights.dot(&a) + &layer.biases;
            a = if l + 1 < n_layers {
                z.mapv(|v| self.hidden_activation.apply(v))
            } else {
                z.clone()
            };
            pre_activations.push(z);
        }
        let logits = a;
        let probabilities = softmax(&logits);
        Ok(ForwardTrace {
            pre_activations,
            activations,
            logits,
            probabilities,
        })
    }

    fn output_gradient(&self, x: &Array1<f64>, class: usize, head: Head) -> Result<Array1<f64>> {
        check_input(self, x)?;
        check_class(self, class)?;
        let trace = self.forward(x)?;
        let seed = self.logit_seed(&trace.probabilities, class, head);
        Ok(self.input_grad_from_seed(&trace, &seed))
    }

    fn saliency_head(&self) -> Head {
        self.explain_head
    }
}

/// Gradient of the mean cross-entropy loss over a batch with respect to all
/// parameters.
pub fn param_gradient(net: &DenseNet, xs: &Array2<f64>, ys: &[usize]) -> Result<ParamGradient> {
    Ok(net.loss_and_gradient(xs, ys)?.1)
}

/// Parameter gradient of the saliency gap `I(x)_i - I(x)_j` for the class-`c`
/// output under the model's explanation head.
pub fn param_gradient_of_gap(
    net: &DenseNet,
    x: &Array1<f64>,
    i: usize,
    j: usize,
    class: usize,
    mode: GapGradMode,
) -> Result<ParamGradient> {
    let n = net.input_dim();
    if i >= n || j >= n {
        return Err(Error::Index(format!(
            "feature pair ({i}, {j}) out of range for {n} features"
        )));
    }
    if i == j {
        return Err(Error::Usage("gap needs two distinct features".into()));
    }
    let mut coeffs = Array1::zeros(n);
    coeffs[i] = 1.0;
    coeffs[j] = -1.0;
    let head = net.saliency_head();
    Ok(net
        .directional_saliency_param_gradient(x, &coeffs, class, head, mode)?
        .1)
}

/// Per-layer parameter gradients, aligned with [`DenseNet::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamGradient {
    pub fn zeros_like(net: &DenseNet) -> Self {
        ParamGradient {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.biases.raw_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGradient) {
        self.axpy(1.0, other);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamGradient) {
        for (w, ow) in self.weights.iter_mut().zip(&other.weights) {
            w.scaled_add(alpha, ow);
        }
        for (b, ob) in self.biases.iter_mut().zip(&other.biases) {
            b.scaled_add(alpha, ob);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * alpha);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * alpha);
        }
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        let mut sq = 0.0;
        for w in &self.weights {
            sq += w.iter().map(|v| v * v).sum::<f64>();
        }
        for b in &self.biases {
            sq += b.iter().map(|v| v * v).sum::<f64>();
        }
        sq.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

fn outer(u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
    let uc = u.view().insert_axis(Axis(1));
    let vr = v.view().insert_axis(Axis(0));
    uc.dot(&vr)
}

/// Two-class net whose first logit is `w . x + b` and second logit is zero,
/// so `p_0 = sigmoid(w . x + b)`. Used heavily as a linear fixture.
pub fn linear_score_net(w: &[f64], b: f64) -> DenseNet {
    let n = w.len();
    let mut weights = Array2::zeros((2, n));
    for (i, &wi) in w.iter().enumerate() {
        weights[(0, i)] = wi;
    }
    let mut biases = Array1::zeros(2);
    biases[0] = b;
    DenseNet::new(
        vec![DenseLayer { weights, biases }],
        Activation::softplus_default(),
    )
    .expect("valid fixture")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{input_gradient, predict};
    use ndarray::array;

    fn random_softplus_net(dims: &[usize], seed: u64) -> DenseNet {
        DenseNet::random(dims, Activation::Softplus { rho: 4.0 }, seed).unwrap()
    }

    #[test]
    fn forward_symmetric_logits_give_half_half() {
        let net = DenseNet::new(
            vec![DenseLayer {
                weights: array![[1.0, 0.0], [0.0, 1.0]],
                biases: Array1::zeros(2),
            }],
            Activation::Relu,
        )
        .unwrap();
        let trace = net.forward(&array![0.0, 0.0]).unwrap();
        assert_eq!(trace.probabilities, array![0.5, 0.5]);
    }

    #[test]
    fn forward_matches_closed_form_sigmoid() {
        let net = linear_score_net(&[1.0, 2.0], 0.0);
        let trace = net.forward(&array![1.0, 1.0]).unwrap();
        let want = 1.0 / (1.0 + (-3.0_f64).exp());
        assert!((trace.probabilities[0] - want).abs() < 1e-9);
    }

    #[test]
    fn forward_rejects_nan_and_bad_shape() {
        let net = linear_score_net(&[1.0, 2.0], 0.0);
        assert!(matches!(
            net.forward(&array![f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            net.forward(&array![1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn predict_argmax_and_tie_break() {
        let net = linear_score_net(&[1.0, 0.0], 0.0);
        // logit 2.0 vs 0 -> class 0
        assert_eq!(predict(&net, &array![2.0, 0.0]).unwrap(), 0);
        // symmetric -> exact tie -> lowest index
        assert_eq!(predict(&net, &array![0.0, 0.0]).unwrap(), 0);

        let three = DenseNet::new(
            vec![DenseLayer {
                weights: Array2::eye(3),
                biases: Array1::zeros(3),
            }],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(
            predict(&three, &array![0.2_f64.ln(), 0.5_f64.ln(), 0.3_f64.ln()]).unwrap(),
            1
        );
    }

    #[test]
    fn input_gradient_closed_form_logistic() {
        // p_0 = sigmoid(x1 + 2 x2); at x = 0 gradient is sigma'(0) * w = (0.25, 0.5)
        let net = linear_score_net(&[1.0, 2.0], 0.0);
        let g = input_gradient(&net, &array![0.0, 0.0], 0).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-12);
        assert!((g[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn input_gradient_zero_weights_is_zero() {
        let net = DenseNet::new(
            vec![DenseLayer {
                weights: Array2::zeros((2, 3)),
                biases: Array1::zeros(2),
            }],
            Activation::Relu,
        )
        .unwrap();
        let g = input_gradient(&net, &array![1.0, -2.0, 3.0], 0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        // Probability head through softmax on random multi-layer nets.
        for seed in 0..20 {
            let net = random_softplus_net(&[5, 7, 4, 3], seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let x = Array1::from_shape_fn(5, |_| rng.gen_range(-1.5..1.5));
            for class in 0..3 {
                let g = input_gradient(&net, &x, class).unwrap();
                let h = 1e-5;
                let mut max_rel = 0.0_f64;
                for d in 0..5 {
                    let mut xp = x.clone();
                    xp[d] += h;
                    let mut xm = x.clone();
                    xm[d] -= h;
                    let fd = (net.forward(&xp).unwrap().probabilities[class]
                        - net.forward(&xm).unwrap().probabilities[class])
                        / (2.0 * h);
                    let denom = g[d].abs().max(1e-6);
                    max_rel = max_rel.max((fd - g[d]).abs() / denom);
                }
                assert!(max_rel < 1e-4, "seed {seed} class {class}: {max_rel}");
            }
        }
    }

    #[test]
    fn logit_head_gradient_skips_softmax() {
        let net = linear_score_net(&[3.0, -1.0], 0.5);
        let g = net
            .output_gradient(&array![0.3, 0.7], 0, Head::Logit)
            .unwrap();
        assert!((g[0] - 3.0).abs() < 1e-12);
        assert!((g[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_gradient_single_sample_closed_form() {
        // One linear layer, CE gradient is (p - onehot) outer x.
        let net = linear_score_net(&[1.0, -2.0], 0.0);
        let x = array![[0.5, 1.5]];
        let y = [1usize];
        let trace = net.forward(&array![0.5, 1.5]).unwrap();
        let g = param_gradient(&net, &x, &y).unwrap();
        let p = trace.probabilities;
        for col in 0..2 {
            let want0 = (p[0] - 0.0) * x[(0, col)];
            let want1 = (p[1] - 1.0) * x[(0, col)];
            assert!((g.weights[0][(0, col)] - want0).abs() < 1e-12);
            assert!((g.weights[0][(1, col)] - want1).abs() < 1e-12);
        }
        assert!((g.biases[0][0] - p[0]).abs() < 1e-12);
        assert!((g.biases[0][1] - (p[1] - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn batch_gradient_vanishes_on_confident_correct_batch() {
        let net = linear_score_net(&[10.0], 0.0);
        let xs = array![[5.0], [-5.0], [6.0]];
        let ys = [0usize, 1, 0];
        let g = param_gradient(&net, &xs, &ys).unwrap();
        assert!(g.norm() < 1e-6, "norm {}", g.norm());
    }

    #[test]
    fn batch_gradient_duplication_invariance() {
        let net = random_softplus_net(&[3, 4, 2], 9);
        let xs = array![[0.1, -0.4, 0.7], [1.0, 0.2, -0.3]];
        let ys = [0usize, 1];
        let g1 = param_gradient(&net, &xs, &ys).unwrap();
        let xs2 = array![
            [0.1, -0.4, 0.7],
            [1.0, 0.2, -0.3],
            [0.1, -0.4, 0.7],
            [1.0, 0.2, -0.3]
        ];
        let ys2 = [0usize, 1, 0, 1];
        let mut g2 = param_gradient(&net, &xs2, &ys2).unwrap();
        g2.axpy(-1.0, &g1);
        assert!(g2.norm() < 1e-12);
    }

    #[test]
    fn batch_gradient_rejects_empty_and_mismatched() {
        let net = linear_score_net(&[1.0], 0.0);
        assert!(matches!(
            param_gradient(&net, &Array2::zeros((0, 1)), &[]),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            param_gradient(&net, &array![[1.0]], &[0, 1]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn batch_gradient_matches_parameter_finite_differences() {
        let net = random_softplus_net(&[3, 5, 2], 21);
        let xs = array![[0.3, -0.2, 0.9], [-1.1, 0.4, 0.0], [0.2, 0.2, -0.5]];
        let ys = [0usize, 1, 1];
        let (_, g) = net.loss_and_gradient(&xs, &ys).unwrap();
        let h = 1e-6;
        for layer in 0..2 {
            for r in 0..net.layers[layer].weights.nrows() {
                for c in 0..net.layers[layer].weights.ncols() {
                    let mut np = net.clone();
                    np.layers_mut()[layer].weights[(r, c)] += h;
                    let mut nm = net.clone();
                    nm.layers_mut()[layer].weights[(r, c)] -= h;
                    let fd = (np.loss_and_gradient(&xs, &ys).unwrap().0
                        - nm.loss_and_gradient(&xs, &ys).unwrap().0)
                        / (2.0 * h);
                    let got = g.weights[layer][(r, c)];
                    assert!(
                        (fd - got).abs() < 1e-6 * got.abs().max(1.0),
                        "layer {layer} ({r},{c}): fd {fd} vs {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn gap_param_gradient_linear_closed_form() {
        // Single linear layer, probability head: with dz = z0 - z1,
        // h = sigma'(dz) * (W_{0i} - W_{1i} - W_{0j} + W_{1j}).
        let net = linear_score_net(&[1.0, 2.0, -0.5], 0.3);
        let x = array![0.4, -0.2, 0.8];
        let (i, j) = (0usize, 2usize);
        for mode in [GapGradMode::DoubleBackprop, GapGradMode::FiniteDifference] {
            let g = param_gradient_of_gap(&net, &x, i, j, 0, mode).unwrap();
            let dz = 1.0 * x[0] + 2.0 * x[1] - 0.5 * x[2] + 0.3;
            let s = crate::model::activation::sigmoid(dz);
            let s1 = s * (1.0 - s);
            let s2 = s1 * (1.0 - 2.0 * s);
            let wdiff = (1.0 - 0.0) - (-0.5 - 0.0); // (W0i - W1i) - (W0j - W1j)
            for m in 0..3 {
                let dm_i = if m == i { 1.0 } else { 0.0 };
                let dm_j = if m == j { 1.0 } else { 0.0 };
                let want_row0 = s2 * x[m] * wdiff + s1 * (dm_i - dm_j);
                let want_row1 = -s2 * x[m] * wdiff - s1 * (dm_i - dm_j);
                let tol = 1e-5;
                assert!(
                    (g.weights[0][(0, m)] - want_row0).abs() < tol,
                    "{mode:?} row0 col{m}: {} vs {want_row0}",
                    g.weights[0][(0, m)]
                );
                assert!(
                    (g.weights[0][(1, m)] - want_row1).abs() < tol,
                    "{mode:?} row1 col{m}"
                );
            }
            let want_b0 = s2 * wdiff;
            assert!((g.biases[0][0] - want_b0).abs() < 1e-5, "{mode:?} bias0");
            assert!((g.biases[0][1] + want_b0).abs() < 1e-5, "{mode:?} bias1");
        }
    }

    #[test]
    fn gap_param_gradient_is_antisymmetric_in_the_pair() {
        let net = random_softplus_net(&[4, 6, 2], 3);
        let x = array![0.2, -0.7, 0.5, 1.1];
        let g_ij = param_gradient_of_gap(&net, &x, 1, 3, 0, GapGradMode::DoubleBackprop).unwrap();
        let mut g_ji =
            param_gradient_of_gap(&net, &x, 3, 1, 0, GapGradMode::DoubleBackprop).unwrap();
        g_ji.axpy(1.0, &g_ij);
        assert!(g_ji.norm() < 1e-12);
    }

    #[test]
    fn gap_param_gradient_modes_agree() {
        for seed in 0..8 {
            let net = random_softplus_net(&[4, 6, 5, 3], seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
            let x = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0));
            let exact =
                param_gradient_of_gap(&net, &x, 0, 2, 1, GapGradMode::DoubleBackprop).unwrap();
            let mut fd =
                param_gradient_of_gap(&net, &x, 0, 2, 1, GapGradMode::FiniteDifference).unwrap();
            fd.axpy(-1.0, &exact);
            let rel = fd.norm() / exact.norm().max(1e-9);
            assert!(rel < 1e-3, "seed {seed}: relative {rel}");
        }
    }

    #[test]
    fn gap_param_gradient_matches_parameter_fd_of_gap() {
        // Independent oracle: perturb each parameter and re-evaluate the gap.
        let net = random_softplus_net(&[3, 4, 2], 5);
        let x = array![0.6, -0.1, 0.4];
        let (i, j, class) = (0usize, 1usize, 0usize);
        let gap_of = |net: &DenseNet| {
            let g = net.output_gradient(&x, class, Head::Probability).unwrap();
            g[i] - g[j]
        };
        let got = param_gradient_of_gap(&net, &x, i, j, class, GapGradMode::DoubleBackprop).unwrap();
        let h = 1e-6;
        for layer in 0..2 {
            for r in 0..net.layers[layer].weights.nrows() {
                for c in 0..net.layers[layer].weights.ncols() {
                    let mut np = net.clone();
                    np.layers_mut()[layer].weights[(r, c)] += h;
                    let mut nm = net.clone();
                    nm.layers_mut()[layer].weights[(r, c)] -= h;
                    let fd = (gap_of(&np) - gap_of(&nm)) / (2.0 * h);
                    let gv = got.weights[layer][(r, c)];
                    assert!(
                        (fd - gv).abs() < 2e-5 * gv.abs().max(1.0),
                        "layer {layer} ({r},{c}): fd {fd} vs {gv}"
                    );
                }
            }
        }
    }

    #[test]
    fn gap_param_gradient_relu_requires_fd_mode() {
        let net = DenseNet::random(&[3, 4, 2], Activation::Relu, 0).unwrap();
        let x = array![0.5, 0.2, -0.3];
        assert!(matches!(
            param_gradient_of_gap(&net, &x, 0, 1, 0, GapGradMode::DoubleBackprop),
            Err(Error::Capability(_))
        ));
        // FD mode works.
        param_gradient_of_gap(&net, &x, 0, 1, 0, GapGradMode::FiniteDifference).unwrap();
    }

    #[test]
    fn gap_param_gradient_rejects_bad_pairs() {
        let net = linear_score_net(&[1.0, 2.0], 0.0);
        let x = array![0.0, 0.0];
        assert!(matches!(
            param_gradient_of_gap(&net, &x, 0, 0, 0, GapGradMode::DoubleBackprop),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            param_gradient_of_gap(&net, &x, 0, 5, 0, GapGradMode::DoubleBackprop),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn constructor_rejects_mismatched_layers() {
        let bad = DenseNet::new(
            vec![
                DenseLayer {
                    weights: Array2::zeros((4, 3)),
                    biases: Array1::zeros(4),
                },
                DenseLayer {
                    weights: Array2::zeros((2, 5)),
                    biases: Array1::zeros(2),
                },
            ],
            Activation::Relu,
        );
        assert!(matches!(bad, Err(Error::Shape(_))));
    }

    #[test]
    fn random_net_is_seed_deterministic() {
        let a = DenseNet::random(&[4, 8, 2], Activation::Relu, 42).unwrap();
        let b = DenseNet::random(&[4, 8, 2], Activation::Relu, 42).unwrap();
        assert_eq!(a, b);
        let c = DenseNet::random(&[4, 8, 2], Activation::Relu, 43).unwrap();
        assert_ne!(a, c);
    }
}
