//! Fully connected networks with a Jacobian-augmented forward pass.
//!
//! Alongside the activations `a_i = rho_i(W_i a_{i-1} + b_i)` the forward pass
//! can carry the input Jacobian `J_i = diag(rho_i'(z_i)) W_i J_{i-1}` with
//! `J_0 = I`. [`MlpNetwork::backward`] differentiates that whole recursion, so
//! losses that depend on input gradients of the network (not only on its
//! output) get exact parameter gradients.
//!
//! Matrices are stored row-major in flat `Vec<f64>` buffers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use crate::error::{CaeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: ActivationKind,
}

impl LayerSpec {
    pub fn new(in_width: usize, out_width: usize, activation: ActivationKind) -> Self {
        Self {
            in_width,
            out_width,
            activation,
        }
    }
}

/// Builds the layer list `widths[0] -> widths[1] -> ...` with one activation
/// per affine map.
pub fn chain_specs(widths: &[usize], activations: &[ActivationKind]) -> Result<Vec<LayerSpec>> {
    if widths.len() < 2 {
        return Err(CaeError::Shape("a network needs at least two widths".into()));
    }
    if activations.len() != widths.len() - 1 {
        return Err(CaeError::Shape(format!(
            "{} activations given for {} layers",
            activations.len(),
            widths.len() - 1
        )));
    }
    Ok(widths
        .windows(2)
        .zip(activations)
        .map(|(w, &act)| LayerSpec::new(w[0], w[1], act))
        .collect())
}

pub fn validate_specs(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(CaeError::Shape("empty layer list".into()));
    }
    for (i, layer) in spec.iter().enumerate() {
        if layer.in_width == 0 || layer.out_width == 0 {
            return Err(CaeError::Shape(format!("layer {i} has a zero width")));
        }
    }
    for (i, pair) in spec.windows(2).enumerate() {
        if pair[0].out_width != pair[1].in_width {
            return Err(CaeError::Shape(format!(
                "layer {} outputs {} values but layer {} expects {}",
                i,
                pair[0].out_width,
                i + 1,
                pair[1].in_width
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// Row-major, `out_width x in_width`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.spec.in_width + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
    seed: u64,
}

/// Samples every weight and bias uniformly on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_params(spec: &[LayerSpec], seed: u64) -> Result<MlpNetwork> {
    init_params_scaled(spec, seed, 1.0)
}

/// Same as [`init_params`] with the bound multiplied by `scale`.
pub fn init_params_scaled(spec: &[LayerSpec], seed: u64, scale: f64) -> Result<MlpNetwork> {
    validate_specs(spec)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CaeError::Argument(format!("init scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .iter()
        .map(|&s| {
            let bound = scale / (s.in_width as f64).sqrt();
            let weights = (0..s.in_width * s.out_width)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            let bias = (0..s.out_width)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Layer {
                spec: s,
                weights,
                bias,
            }
        })
        .collect();
    Ok(MlpNetwork { layers, seed })
}

/// Output value and input Jacobian of a network at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBundle {
    pub value: Vec<f64>,
    /// Row-major, `value.len() x input width`.
    pub jacobian: Vec<f64>,
    pub cols: usize,
}

impl JacobianBundle {
    pub fn rows(&self) -> usize {
        self.value.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.jacobian[row * self.cols + col]
    }

    /// Gradient of output component `row` with respect to the input.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.jacobian[row * self.cols..(row + 1) * self.cols]
    }

    /// Derivative of every output with respect to input `col`.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }
}

/// Per-layer weight and bias gradients, shaped like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrad {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkGrad {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.weights.iter_mut().flatten().for_each(|v| *v = 0.0);
        self.biases.iter_mut().flatten().for_each(|v| *v = 0.0);
    }

    pub fn add_assign(&mut self, other: &NetworkGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten()
            .for_each(|v| *v *= factor);
    }

    /// Flattened in layer order: all of layer 0's weights, then its biases, ...
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Default)]
struct LayerRecord {
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// `W_i J_{i-1}`, row-major `out x seed`.
    pre_jac: Vec<f64>,
}

/// Intermediate state of one forward pass, reused across points to avoid
/// reallocating.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    with_jacobian: bool,
    seed_width: usize,
    /// `acts[0]` is the input, `acts[i]` the output of layer `i - 1`.
    acts: Vec<Vec<f64>>,
    /// `jacs[0]` is the identity seed, `jacs[i]` the Jacobian after layer `i - 1`.
    jacs: Vec<Vec<f64>>,
    records: Vec<LayerRecord>,
    adj: Vec<f64>,
    adj_next: Vec<f64>,
    jadj: Vec<f64>,
    jadj_next: Vec<f64>,
    pre_adj: Vec<f64>,
    zadj: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Output Jacobian, row-major `out x input width`. Empty when the pass ran
    /// without Jacobian propagation.
    pub fn jacobian(&self) -> &[f64] {
        if self.with_jacobian {
            self.jacs.last().map(Vec::as_slice).unwrap_or(&[])
        } else {
            &[]
        }
    }

    pub fn input_width(&self) -> usize {
        self.seed_width
    }

    /// Input adjoint produced by the last [`MlpNetwork::backward`] call.
    pub fn input_adjoint(&self) -> &[f64] {
        &self.adj
    }
}

impl MlpNetwork {
    pub fn from_layers(layers: Vec<Layer>, seed: u64) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_specs(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.spec.in_width * l.spec.out_width || l.bias.len() != l.spec.out_width {
                return Err(CaeError::Shape(format!(
                    "layer {i}: parameter shapes do not match {}x{}",
                    l.spec.out_width, l.spec.in_width
                )));
            }
        }
        Ok(Self { layers, seed })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].spec.in_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_width
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened in the same order as [`NetworkGrad::flatten`].
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Mutable access to the `index`-th parameter in flattened order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if index < layer.weights.len() {
                return &mut layer.weights[index];
            }
            index -= layer.weights.len();
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(CaeError::Shape(format!(
                "input has length {} but the network expects {}",
                x.len(),
                self.input_width()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            let s = layer.spec;
            let next = (0..s.out_width)
                .map(|r| {
                    let row = &layer.weights[r * s.in_width..(r + 1) * s.in_width];
                    let z = layer.bias[r] + dot(row, &a);
                    s.activation.apply(z)
                })
                .collect();
            a = next;
        }
        Ok(a)
    }

    pub fn forward_jacobian(&self, x: &[f64]) -> Result<JacobianBundle> {
        let mut tape = Tape::default();
        self.forward_tape(x, true, &mut tape)?;
        Ok(JacobianBundle {
            value: tape.output().to_vec(),
            jacobian: tape.jacobian().to_vec(),
            cols: x.len(),
        })
    }

    /// Forward pass recording everything [`MlpNetwork::backward`] needs.
    pub fn forward_tape(&self, x: &[f64], with_jacobian: bool, tape: &mut Tape) -> Result<()> {
        self.check_input(x)?;
        let n_layers = self.layers.len();
        let m = x.len();
        tape.with_jacobian = with_jacobian;
        tape.seed_width = m;
        tape.acts.resize_with(n_layers + 1, Vec::new);
        tape.jacs.resize_with(n_layers + 1, Vec::new);
        tape.records.resize_with(n_layers, LayerRecord::default);

        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(x);
        if with_jacobian {
            let seed = &mut tape.jacs[0];
            seed.clear();
            seed.resize(m * m, 0.0);
            for i in 0..m {
                seed[i * m + i] = 1.0;
            }
        }

        for (i, layer) in self.layers.iter().enumerate() {
            let s = layer.spec;
            let (lo, hi) = tape.acts.split_at_mut(i + 1);
            let input = &lo[i];
            let out = &mut hi[0];
            let rec = &mut tape.records[i];
            out.clear();
            rec.d1.clear();
            rec.d2.clear();
            for r in 0..s.out_width {
                let row = &layer.weights[r * s.in_width..(r + 1) * s.in_width];
                let z = layer.bias[r] + dot(row, input);
                let (a, d1, d2) = s.activation.eval(z);
                out.push(a);
                rec.d1.push(d1);
                rec.d2.push(d2);
            }
            if with_jacobian {
                let (jlo, jhi) = tape.jacs.split_at_mut(i + 1);
                let jprev = &jlo[i];
                let jout = &mut jhi[0];
                rec.pre_jac.clear();
                rec.pre_jac.resize(s.out_width * m, 0.0);
                for r in 0..s.out_width {
                    let mrow = &mut rec.pre_jac[r * m..(r + 1) * m];
                    for k in 0..s.in_width {
                        let w = layer.weights[r * s.in_width + k];
                        if w == 0.0 {
                            continue;
                        }
                        let jrow = &jprev[k * m..(k + 1) * m];
                        for c in 0..m {
                            mrow[c] += w * jrow[c];
                        }
                    }
                }
                jout.clear();
                jout.extend(
                    rec.pre_jac
                        .chunks_exact(m)
                        .zip(&rec.d1)
                        .flat_map(|(mrow, &d)| mrow.iter().map(move |v| d * v)),
                );
            }
        }
        Ok(())
    }

    /// Reverse pass through a recorded forward pass.
    ///
    /// `out_adj` is the loss adjoint of the output value and `jac_adj` (row-major
    /// `out x input width`) the adjoint of the output Jacobian; it must be
    /// `None` when the tape was recorded without a Jacobian. Parameter
    /// gradients are accumulated into `grads`; the input adjoint is left in
    /// [`Tape::input_adjoint`].
    pub fn backward(
        &self,
        tape: &mut Tape,
        out_adj: &[f64],
        jac_adj: Option<&[f64]>,
        grads: &mut NetworkGrad,
    ) -> Result<()> {
        if out_adj.len() != self.output_width() {
            return Err(CaeError::Shape("output adjoint has the wrong length".into()));
        }
        let m = tape.seed_width;
        let use_jac = match jac_adj {
            Some(j) => {
                if !tape.with_jacobian {
                    return Err(CaeError::Shape(
                        "Jacobian adjoint given for a tape recorded without Jacobians".into(),
                    ));
                }
                if j.len() != self.output_width() * m {
                    return Err(CaeError::Shape("Jacobian adjoint has the wrong shape".into()));
                }
                tape.jadj.clear();
                tape.jadj.extend_from_slice(j);
                true
            }
            None => false,
        };
        tape.adj.clear();
        tape.adj.extend_from_slice(out_adj);

        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let s = layer.spec;
            let rec = &tape.records[i];
            let input = &tape.acts[i];

            tape.zadj.clear();
            tape.zadj
                .extend(tape.adj.iter().zip(&rec.d1).map(|(a, d)| a * d));
            if use_jac {
                tape.pre_adj.clear();
                tape.pre_adj.resize(s.out_width * m, 0.0);
                for r in 0..s.out_width {
                    let jrow = &tape.jadj[r * m..(r + 1) * m];
                    let mrow = &rec.pre_jac[r * m..(r + 1) * m];
                    tape.zadj[r] += rec.d2[r] * dot(jrow, mrow);
                    let d = rec.d1[r];
                    for (p, j) in tape.pre_adj[r * m..(r + 1) * m].iter_mut().zip(jrow) {
                        *p = d * j;
                    }
                }
            }

            let gw = &mut grads.weights[i];
            let gb = &mut grads.biases[i];
            for r in 0..s.out_width {
                let zr = tape.zadj[r];
                gb[r] += zr;
                let grow = &mut gw[r * s.in_width..(r + 1) * s.in_width];
                for (g, a) in grow.iter_mut().zip(input) {
                    *g += zr * a;
                }
                if use_jac {
                    let jprev = &tape.jacs[i];
                    let prow = &tape.pre_adj[r * m..(r + 1) * m];
                    for (k, g) in grow.iter_mut().enumerate() {
                        *g += dot(prow, &jprev[k * m..(k + 1) * m]);
                    }
                }
            }

            tape.adj_next.clear();
            tape.adj_next.resize(s.in_width, 0.0);
            for r in 0..s.out_width {
                let zr = tape.zadj[r];
                let wrow = &layer.weights[r * s.in_width..(r + 1) * s.in_width];
                for (a, w) in tape.adj_next.iter_mut().zip(wrow) {
                    *a += w * zr;
                }
            }
            std::mem::swap(&mut tape.adj, &mut tape.adj_next);

            if use_jac && i > 0 {
                tape.jadj_next.clear();
                tape.jadj_next.resize(s.in_width * m, 0.0);
                for r in 0..s.out_width {
                    let prow = &tape.pre_adj[r * m..(r + 1) * m];
                    for k in 0..s.in_width {
                        let w = layer.weights[r * s.in_width + k];
                        if w == 0.0 {
                            continue;
                        }
                        for (j, p) in tape.jadj_next[k * m..(k + 1) * m].iter_mut().zip(prow) {
                            *j += w * p;
                        }
                    }
                }
                std::mem::swap(&mut tape.jadj, &mut tape.jadj_next);
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivationKind::*;

    fn identity_layer(n: usize, act: ActivationKind) -> MlpNetwork {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        MlpNetwork::from_layers(
            vec![Layer {
                spec: LayerSpec::new(n, n, act),
                weights,
                bias: vec![0.0; n],
            }],
            0,
        )
        .unwrap()
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = init_params(&[LayerSpec::new(1, 1, Identity)], 17).unwrap();
        let l = &net.layers()[0];
        assert!(l.weights[0].abs() <= 1.0 && l.bias[0].abs() <= 1.0);

        let net = init_params(&[LayerSpec::new(9, 4, Tanh)], 3).unwrap();
        assert!(net.flat_params().iter().all(|v| v.abs() <= 1.0 / 3.0));
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let spec = [LayerSpec::new(3, 10, Tanh), LayerSpec::new(10, 3, Identity)];
        let a = init_params(&spec, 0).unwrap();
        let b = init_params(&spec, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers()[0].weights.len(), 10 * 3);
        assert_eq!(a.layers()[1].weights.len(), 3 * 10);
        assert_ne!(a, init_params(&spec, 1).unwrap());
    }

    #[test]
    fn inconsistent_widths_are_rejected() {
        let spec = [LayerSpec::new(3, 10, Tanh), LayerSpec::new(9, 3, Identity)];
        assert!(matches!(init_params(&spec, 0), Err(CaeError::Shape(_))));
    }

    #[test]
    fn identity_and_tanh_layers() {
        let net = identity_layer(2, Identity);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let bundle = net.forward_jacobian(&[0.3, -4.0]).unwrap();
        assert_eq!(bundle.jacobian, vec![1.0, 0.0, 0.0, 1.0]);

        let net = identity_layer(2, Tanh);
        assert_eq!(net.forward(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let bundle = net.forward_jacobian(&[0.0, 0.0]).unwrap();
        assert_eq!(bundle.jacobian, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn wrong_input_length_is_a_shape_error() {
        let net = identity_layer(2, Tanh);
        assert!(matches!(net.forward(&[1.0]), Err(CaeError::Shape(_))));
        assert!(matches!(net.forward_jacobian(&[1.0, 2.0, 3.0]), Err(CaeError::Shape(_))));
    }

    #[test]
    fn two_layer_forward_matches_manual_composition() {
        let spec = [LayerSpec::new(3, 4, Tanh), LayerSpec::new(4, 2, Identity)];
        let net = init_params(&spec, 9).unwrap();
        let x = [0.2, -0.7, 1.1];
        let l0 = &net.layers()[0];
        let h: Vec<f64> = (0..4)
            .map(|r| (l0.bias[r] + (0..3).map(|c| l0.weight(r, c) * x[c]).sum::<f64>()).tanh())
            .collect();
        let l1 = &net.layers()[1];
        let y: Vec<f64> = (0..2)
            .map(|r| l1.bias[r] + (0..4).map(|c| l1.weight(r, c) * h[c]).sum::<f64>())
            .collect();
        let out = net.forward(&x).unwrap();
        for (a, b) in out.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_network_jacobian_is_constant() {
        let spec = [LayerSpec::new(3, 5, Identity), LayerSpec::new(5, 2, Identity)];
        let net = init_params(&spec, 4).unwrap();
        let a = net.forward_jacobian(&[0.1, 0.2, 0.3]).unwrap();
        let b = net.forward_jacobian(&[-5.0, 2.0, 9.0]).unwrap();
        for (x, y) in a.jacobian.iter().zip(&b.jacobian) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn param_index_order_matches_flatten() {
        let spec = [LayerSpec::new(2, 3, Tanh), LayerSpec::new(3, 1, Identity)];
        let mut net = init_params(&spec, 2).unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.param_count());
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(*net.param_mut(i), *v);
        }
    }
}
