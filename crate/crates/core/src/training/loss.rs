//! The conformal autoencoder objective and its exact parameter gradient.
//!
//! Per point `x` with latent `nu = e(x)` and reconstruction `d(nu)`:
//!
//! * reconstruction: `|x - d(e(x))|^2`
//! * orthogonality: `sum_{j<k} phi(<g_j, g_k>)` where the `g_j` are the
//!   encoder input gradients (optionally projected onto a tangent frame) or
//!   the decoder Jacobian columns, and `phi` is `|s|` or `s^2`
//! * supervised: `(y - nu_j)^2` for one chosen latent and label column
//!
//! Each term is averaged over the batch and the total is
//! `reconstruction + alpha * orthogonality + weight * supervised`.
//!
//! [`cae_loss`] evaluates the terms directly from Jacobian bundles and
//! [`pairwise_orthogonality`]; [`loss_gradients`] runs the taped forward pass
//! and the reverse sweep through the Jacobian recursion.

use serde::{Deserialize, Serialize};

use super::model::CaeModel;
use crate::data::Dataset;
use crate::error::{CaeError, Result};
use crate::geometry::{pairwise_orthogonality, OrthoMode, TangentFrameSet};
use crate::nn::{dot, NetworkGrad, Tape};

/// Which vectors the orthogonality term compares.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum GradientSpace {
    /// Encoder input gradients in the ambient space.
    #[default]
    Ambient,
    /// Encoder input gradients projected onto per-point tangent frames,
    /// indexed like the dataset.
    TangentProjected(TangentFrameSet),
    /// Columns of the decoder Jacobian at `nu = e(x)`.
    DecoderJacobian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Supervised {
    /// Latent component tied to the label.
    pub latent: usize,
    /// Label column of the dataset.
    pub label: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum PairSet {
    #[default]
    All,
    /// Unordered latent index pairs.
    Explicit(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub alpha: f64,
    pub ortho_mode: OrthoMode,
    pub gradient_space: GradientSpace,
    pub supervised: Option<Supervised>,
    pub pairs: PairSet,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            ortho_mode: OrthoMode::L2,
            gradient_space: GradientSpace::Ambient,
            supervised: None,
            pairs: PairSet::All,
        }
    }
}

impl LossSpec {
    pub fn reconstruction_only() -> Self {
        Self {
            alpha: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, model: &CaeModel, data: &Dataset) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(CaeError::config("loss.alpha", "alpha must be a finite value >= 0"));
        }
        if data.dim() != model.ambient() {
            return Err(CaeError::Shape(format!(
                "data has dimension {} but the model expects {}",
                data.dim(),
                model.ambient()
            )));
        }
        let l = model.latent_width();
        if let PairSet::Explicit(pairs) = &self.pairs {
            if pairs.iter().any(|&(a, b)| a >= l || b >= l || a == b) {
                return Err(CaeError::config("loss.pairs", "pairs must name two distinct latents"));
            }
        }
        if let Some(s) = &self.supervised {
            if s.latent >= l {
                return Err(CaeError::config("loss.supervised.latent", "latent index out of range"));
            }
            if s.label >= data.label_count() {
                return Err(CaeError::config("loss.supervised.label", "dataset has no such label column"));
            }
            if !(s.weight >= 0.0) {
                return Err(CaeError::config("loss.supervised.weight", "weight must be >= 0"));
            }
        }
        if let GradientSpace::TangentProjected(frames) = &self.gradient_space {
            if frames.len() != data.len() {
                return Err(CaeError::config(
                    "loss.gradient_space",
                    format!("{} tangent frames for {} points", frames.len(), data.len()),
                ));
            }
            if frames.dimension == 0 {
                return Err(CaeError::config("loss.gradient_space", "tangent frames are zero-dimensional"));
            }
            if frames.ambient != data.dim() {
                return Err(CaeError::config("loss.gradient_space", "frame ambient dimension mismatch"));
            }
        }
        Ok(())
    }

    /// Symmetric `l x l` indicator of the penalized pairs.
    fn pair_mask(&self, l: usize) -> Vec<bool> {
        let mut mask = vec![false; l * l];
        match &self.pairs {
            PairSet::All => {
                for a in 0..l {
                    for b in 0..l {
                        mask[a * l + b] = a != b;
                    }
                }
            }
            PairSet::Explicit(pairs) => {
                for &(a, b) in pairs {
                    mask[a * l + b] = true;
                    mask[b * l + a] = true;
                }
            }
        }
        mask
    }
}

/// Batch-mean loss terms. `orthogonality` and `supervised` are unweighted;
/// `total` applies `alpha` and the supervised weight.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub orthogonality: f64,
    pub supervised: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.reconstruction.is_finite()
            && self.orthogonality.is_finite()
            && self.supervised.is_finite()
    }
}

fn compose(spec: &LossSpec, recon: f64, ortho: f64, sup: f64) -> LossBreakdown {
    let w = spec.supervised.map(|s| s.weight).unwrap_or(0.0);
    LossBreakdown {
        total: recon + spec.alpha * ortho + w * sup,
        reconstruction: recon,
        orthogonality: ortho,
        supervised: sup,
    }
}

fn check_batch(data: &Dataset, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(CaeError::Argument("empty batch".into()));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(CaeError::Argument(format!("batch index {i} out of range")));
    }
    Ok(())
}

/// Vectors compared by the orthogonality term at point `index`.
pub fn orthogonality_vectors(
    model: &CaeModel,
    data: &Dataset,
    index: usize,
    space: &GradientSpace,
) -> Result<Vec<Vec<f64>>> {
    let x = data.point(index);
    let enc = model.encoder.forward_jacobian(x)?;
    let l = model.latent_width();
    Ok(match space {
        GradientSpace::Ambient => (0..l).map(|j| enc.row(j).to_vec()).collect(),
        GradientSpace::TangentProjected(frames) => {
            let f = frames.frame(index);
            (0..l).map(|j| f.project(enc.row(j))).collect()
        }
        GradientSpace::DecoderJacobian => {
            let dec = model.decoder.forward_jacobian(&enc.value)?;
            (0..l).map(|j| dec.column(j)).collect()
        }
    })
}

/// Loss value on the points at `indices`.
pub fn cae_loss(model: &CaeModel, data: &Dataset, indices: &[usize], spec: &LossSpec) -> Result<LossBreakdown> {
    spec.validate(model, data)?;
    check_batch(data, indices)?;
    let l = model.latent_width();
    let mut recon = 0.0;
    let mut ortho = 0.0;
    let mut sup = 0.0;
    for &i in indices {
        let x = data.point(i);
        let nu = model.encode(x)?;
        let xhat = model.decode(&nu)?;
        recon += x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();

        let vectors = orthogonality_vectors(model, data, i, &spec.gradient_space)?;
        ortho += match &spec.pairs {
            PairSet::All => pairwise_orthogonality(&vectors, spec.ortho_mode),
            PairSet::Explicit(pairs) => pairs
                .iter()
                .map(|&(a, b)| spec.ortho_mode.penalty(dot(&vectors[a], &vectors[b])))
                .sum(),
        };
        debug_assert_eq!(vectors.len(), l);

        if let Some(s) = &spec.supervised {
            let r = data.label(i, s.label) - nu[s.latent];
            sup += r * r;
        }
    }
    let count = indices.len() as f64;
    Ok(compose(spec, recon / count, ortho / count, sup / count))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaeGrad {
    pub encoder: NetworkGrad,
    pub decoder: NetworkGrad,
}

impl CaeGrad {
    pub fn zeros_like(model: &CaeModel) -> Self {
        Self {
            encoder: NetworkGrad::zeros_like(&model.encoder),
            decoder: NetworkGrad::zeros_like(&model.decoder),
        }
    }

    /// Encoder parameters first, then decoder, each in flattened order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.encoder.flatten();
        v.extend(self.decoder.flatten());
        v
    }
}

/// Everything one pass over a batch produces.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub loss: LossBreakdown,
    /// Sum over the batch of `|grad nu_j|` (projected when the loss projects).
    pub grad_norm_sums: Vec<f64>,
    pub latent_sums: Vec<f64>,
    pub count: usize,
}

/// Reusable buffers for [`Evaluator`].
#[derive(Debug, Default)]
struct Scratch {
    enc: Tape,
    dec: Tape,
    xhat_adj: Vec<f64>,
    nu_adj: Vec<f64>,
    gvecs: Vec<f64>,
    sbar: Vec<f64>,
    jac_adj: Vec<f64>,
    dec_jac_adj: Vec<f64>,
}

/// Evaluates the loss and, optionally, its gradient over batches.
#[derive(Debug)]
pub struct Evaluator<'a> {
    spec: &'a LossSpec,
    mask: Vec<bool>,
    scratch: Scratch,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &CaeModel, data: &Dataset, spec: &'a LossSpec) -> Result<Self> {
        spec.validate(model, data)?;
        Ok(Self {
            spec,
            mask: spec.pair_mask(model.latent_width()),
            scratch: Scratch::default(),
        })
    }

    /// One pass over `indices`. With `grads`, the exact gradient of the
    /// batch-mean loss is added to it. `epoch` only labels numerical errors.
    pub fn run(
        &mut self,
        model: &CaeModel,
        data: &Dataset,
        indices: &[usize],
        mut grads: Option<&mut CaeGrad>,
        epoch: usize,
    ) -> Result<BatchEval> {
        check_batch(data, indices)?;
        let spec = self.spec;
        let n = model.ambient();
        let l = model.latent_width();
        let count = indices.len() as f64;
        let inv = 1.0 / count;
        let alpha = spec.alpha;
        let want_grads = grads.is_some();
        let ortho_active = want_grads && alpha > 0.0;
        let decoder_mode = matches!(spec.gradient_space, GradientSpace::DecoderJacobian);

        let mut recon = 0.0;
        let mut ortho = 0.0;
        let mut sup = 0.0;
        let mut grad_norm_sums = vec![0.0; l];
        let mut latent_sums = vec![0.0; l];
        let s = &mut self.scratch;

        for &i in indices {
            let x = data.point(i);
            model.encoder.forward_tape(x, true, &mut s.enc)?;
            let nu = s.enc.output();
            let jac = s.enc.jacobian();
            latent_sums.iter_mut().zip(nu).for_each(|(a, b)| *a += b);
            model.decoder.forward_tape(nu, decoder_mode, &mut s.dec)?;
            let xhat = s.dec.output();

            let mut r_i = 0.0;
            s.xhat_adj.clear();
            for (a, b) in xhat.iter().zip(x) {
                let d = a - b;
                r_i += d * d;
                s.xhat_adj.push(2.0 * d * inv);
            }

            // Compared vectors, row-major `l x width`.
            let (width, frame) = match &spec.gradient_space {
                GradientSpace::TangentProjected(frames) => {
                    let f = frames.frame(i);
                    s.gvecs.clear();
                    for j in 0..l {
                        let row = &jac[j * n..(j + 1) * n];
                        s.gvecs.extend(f.basis.iter().map(|e| dot(row, e)));
                    }
                    (f.basis.len(), Some(f))
                }
                GradientSpace::DecoderJacobian => {
                    let k = s.dec.jacobian();
                    s.gvecs.clear();
                    for j in 0..l {
                        s.gvecs.extend((0..n).map(|r| k[r * l + j]));
                    }
                    (n, None)
                }
                GradientSpace::Ambient => {
                    s.gvecs.clear();
                    s.gvecs.extend_from_slice(jac);
                    (n, None)
                }
            };

            // Gradient norms for the trace are taken on the encoder, projected
            // when the loss projects.
            match &spec.gradient_space {
                GradientSpace::DecoderJacobian => {
                    for j in 0..l {
                        let row = &jac[j * n..(j + 1) * n];
                        grad_norm_sums[j] += dot(row, row).sqrt();
                    }
                }
                _ => {
                    for j in 0..l {
                        let row = &s.gvecs[j * width..(j + 1) * width];
                        grad_norm_sums[j] += dot(row, row).sqrt();
                    }
                }
            }

            // Orthogonality value and dL/dS.
            let mut o_i = 0.0;
            s.sbar.clear();
            s.sbar.resize(l * l, 0.0);
            for a in 0..l {
                for b in a + 1..l {
                    if !self.mask[a * l + b] {
                        continue;
                    }
                    let ga = &s.gvecs[a * width..(a + 1) * width];
                    let gb = &s.gvecs[b * width..(b + 1) * width];
                    let sab = dot(ga, gb);
                    o_i += spec.ortho_mode.penalty(sab);
                    let d = spec.ortho_mode.penalty_derivative(sab);
                    s.sbar[a * l + b] = d;
                    s.sbar[b * l + a] = d;
                }
            }

            let mut sup_i = 0.0;
            s.nu_adj.clear();
            s.nu_adj.resize(l, 0.0);
            if let Some(sv) = &spec.supervised {
                let r = data.label(i, sv.label) - nu[sv.latent];
                sup_i = r * r;
                s.nu_adj[sv.latent] = -2.0 * sv.weight * r * inv;
            }

            if !(r_i.is_finite() && o_i.is_finite() && sup_i.is_finite()) {
                return Err(CaeError::Numerical {
                    epoch,
                    point: i,
                    message: "non-finite loss term".into(),
                });
            }
            recon += r_i;
            ortho += o_i;
            sup += sup_i;

            let Some(g) = grads.as_deref_mut() else {
                continue;
            };

            // Adjoint of the compared vectors: (alpha / N) * Sbar * G.
            let scale = alpha * inv;
            let mut gbar = vec![0.0; l * width];
            if ortho_active {
                for a in 0..l {
                    let out = &mut gbar[a * width..(a + 1) * width];
                    for b in 0..l {
                        let c = s.sbar[a * l + b];
                        if c == 0.0 {
                            continue;
                        }
                        let gb = &s.gvecs[b * width..(b + 1) * width];
                        out.iter_mut().zip(gb).for_each(|(o, v)| *o += scale * c * v);
                    }
                }
            }

            let dec_jac_adj = if ortho_active && decoder_mode {
                // gbar rows are columns of the decoder Jacobian (n x l).
                s.dec_jac_adj.clear();
                s.dec_jac_adj.resize(n * l, 0.0);
                for j in 0..l {
                    for r in 0..n {
                        s.dec_jac_adj[r * l + j] = gbar[j * n + r];
                    }
                }
                Some(s.dec_jac_adj.as_slice())
            } else {
                None
            };
            model.decoder.backward(&mut s.dec, &s.xhat_adj, dec_jac_adj, &mut g.decoder)?;
            s.nu_adj
                .iter_mut()
                .zip(s.dec.input_adjoint())
                .for_each(|(a, b)| *a += b);

            let enc_jac_adj = if ortho_active && !decoder_mode {
                match frame {
                    Some(f) => {
                        // d/dJ of G = J F^T is gbar F.
                        s.jac_adj.clear();
                        s.jac_adj.resize(l * n, 0.0);
                        for j in 0..l {
                            let out = &mut s.jac_adj[j * n..(j + 1) * n];
                            for (c, e) in f.basis.iter().enumerate() {
                                let w = gbar[j * width + c];
                                out.iter_mut().zip(e).for_each(|(o, v)| *o += w * v);
                            }
                        }
                    }
                    None => {
                        s.jac_adj.clear();
                        s.jac_adj.extend_from_slice(&gbar);
                    }
                }
                Some(s.jac_adj.as_slice())
            } else {
                None
            };
            model.encoder.backward(&mut s.enc, &s.nu_adj, enc_jac_adj, &mut g.encoder)?;
        }

        if let Some(g) = grads.as_deref() {
            if !(g.encoder.is_finite() && g.decoder.is_finite()) {
                return Err(CaeError::Numerical {
                    epoch,
                    point: indices[0],
                    message: "non-finite gradient".into(),
                });
            }
        }

        Ok(BatchEval {
            loss: compose(spec, recon * inv, ortho * inv, sup * inv),
            grad_norm_sums,
            latent_sums,
            count: indices.len(),
        })
    }
}

/// Loss and exact gradient of the batch-mean loss over `indices`.
pub fn loss_gradients(
    model: &CaeModel,
    data: &Dataset,
    indices: &[usize],
    spec: &LossSpec,
) -> Result<(LossBreakdown, CaeGrad)> {
    let mut grads = CaeGrad::zeros_like(model);
    let mut ev = Evaluator::new(model, data, spec)?;
    let out = ev.run(model, data, indices, Some(&mut grads), 0)?;
    Ok((out.loss, grads))
}

/// Mean `|grad nu_j|` over the whole dataset for every latent component.
pub fn mean_gradient_norms(model: &CaeModel, data: &Dataset, space: &GradientSpace) -> Result<Vec<f64>> {
    let spec = LossSpec {
        gradient_space: space.clone(),
        ..LossSpec::default()
    };
    let mut ev = Evaluator::new(model, data, &spec)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let out = ev.run(model, data, &idx, None, 0)?;
    Ok(out.grad_norm_sums.iter().map(|s| s / out.count as f64).collect())
}
