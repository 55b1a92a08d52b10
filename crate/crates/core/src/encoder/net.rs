//! Fully connected trunk with one affine head per degradation type.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::DegradationType;

use super::features::FEATURE_LEN;
use super::EncoderError;

pub const HEADS: usize = DegradationType::ALL.len();

/// Layer widths. The trunk maps `input -> hidden.. -> d` with a rectifier
/// after every hidden layer; each head maps `d -> d + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub d: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            input: FEATURE_LEN,
            hidden: vec![256, 256],
            d: crate::ordspace::DEFAULT_DIM,
        }
    }
}

impl Arch {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.input == 0 || self.d == 0 || self.hidden.contains(&0) {
            return Err(EncoderError::ShapeMismatch(format!(
                "degenerate arch {self:?}"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for each trunk layer.
    pub fn trunk_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input];
        widths.extend(&self.hidden);
        widths.push(self.d);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        let trunk: usize = self.trunk_dims().iter().map(|(i, o)| i * o + o).sum();
        trunk + HEADS * (self.d * (self.d + 1) + self.d + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `fan_in x fan_out`, applied as `x W + b` to row-vector batches.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, bound: f64) -> Self {
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
        Self {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub arch: Arch,
    pub trunk: Vec<Linear>,
    pub heads: Vec<Linear>,
}

/// Fan-in scaled uniform weights and zero biases. Layers feeding a
/// rectifier use bound `sqrt(6 / fan_in)`, linear outputs `sqrt(3 / fan_in)`.
pub fn init_params(seed: u64, arch: &Arch) -> Result<EncoderParams, EncoderError> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = arch.trunk_dims();
    let last = dims.len() - 1;
    let trunk = dims
        .iter()
        .enumerate()
        .map(|(i, &(fi, fo))| {
            let gain = if i < last { 6.0 } else { 3.0 };
            Linear::uniform(&mut rng, fi, fo, (gain / fi as f64).sqrt())
        })
        .collect();
    let heads = (0..HEADS)
        .map(|_| Linear::uniform(&mut rng, arch.d, arch.d + 1, (3.0 / arch.d as f64).sqrt()))
        .collect();
    Ok(EncoderParams {
        arch: arch.clone(),
        trunk,
        heads,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    /// `acts[0]` is the input, `acts[l + 1]` the output of trunk layer `l`.
    pub acts: Vec<Array2<f64>>,
    /// Raw head outputs, `batch x (d + 1)`, in `DegradationType` order.
    pub heads: Vec<Array2<f64>>,
}

impl BatchForward {
    pub fn shared(&self) -> &Array2<f64> {
        self.acts.last().expect("input is always present")
    }

    pub fn emb(&self, kind: DegradationType, row: usize) -> ArrayView1<'_, f64> {
        let d = self.heads[kind.index()].ncols() - 1;
        self.heads[kind.index()]
            .row(row)
            .slice_move(ndarray::s![..d])
    }

    pub fn conf(&self, kind: DegradationType, row: usize) -> f64 {
        let h = &self.heads[kind.index()];
        sigmoid(h[[row, h.ncols() - 1]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeOutput {
    pub emb: Vec<f64>,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub shared: Vec<f64>,
    /// Indexed by `DegradationType::index`.
    pub per_type: Vec<TypeOutput>,
}

impl EncoderParams {
    pub fn zeros(arch: &Arch) -> Self {
        Self {
            arch: arch.clone(),
            trunk: arch
                .trunk_dims()
                .iter()
                .map(|&(i, o)| Linear::zeros(i, o))
                .collect(),
            heads: (0..HEADS)
                .map(|_| Linear::zeros(arch.d, arch.d + 1))
                .collect(),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.trunk.iter().chain(&self.heads)
    }

    /// Every weight and bias buffer in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| {
                [
                    l.w.as_slice().expect("standard layout"),
                    l.b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.trunk
            .iter_mut()
            .chain(self.heads.iter_mut())
            .flat_map(|l| {
                [
                    l.w.as_slice_mut().expect("standard layout"),
                    l.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks layer shapes against the arch and that every value is finite.
    pub fn validate(&self) -> Result<(), EncoderError> {
        self.arch.validate()?;
        let dims = self.arch.trunk_dims();
        let shape_ok = self.trunk.len() == dims.len()
            && self.heads.len() == HEADS
            && self
                .trunk
                .iter()
                .zip(&dims)
                .all(|(l, &(i, o))| l.w.dim() == (i, o) && l.b.len() == o)
            && self.heads.iter().all(|l| {
                l.w.dim() == (self.arch.d, self.arch.d + 1) && l.b.len() == self.arch.d + 1
            });
        if !shape_ok {
            return Err(EncoderError::ShapeMismatch(
                "layer shapes disagree with arch".into(),
            ));
        }
        if self
            .layers()
            .any(|l| l.w.as_slice().is_none() || l.b.as_slice().is_none())
        {
            return Err(EncoderError::ShapeMismatch("non-contiguous weights".into()));
        }
        if self.param_count() != self.arch.param_count() {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} parameters, arch implies {}",
                self.param_count(),
                self.arch.param_count()
            )));
        }
        if self
            .tensors()
            .iter()
            .any(|t| t.iter().any(|v| !v.is_finite()))
        {
            return Err(EncoderError::NonFinite);
        }
        Ok(())
    }

    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<BatchForward, EncoderError> {
        self.forward_inner(x, None)
    }

    /// Forward pass that computes the full output only for the head of
    /// `kind`; the other heads get their confidence column and zeros
    /// elsewhere. Pair with [`EncoderParams::backward_focused`].
    pub fn forward_focused(
        &self,
        x: &Array2<f64>,
        kind: DegradationType,
    ) -> Result<BatchForward, EncoderError> {
        self.forward_inner(x, Some(kind))
    }

    fn forward_inner(
        &self,
        x: &Array2<f64>,
        focus: Option<DegradationType>,
    ) -> Result<BatchForward, EncoderError> {
        if x.ncols() != self.arch.input {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} features, expected {}",
                x.ncols(),
                self.arch.input
            )));
        }
        let last = self.trunk.len() - 1;
        let mut acts = vec![x.clone()];
        for (i, layer) in self.trunk.iter().enumerate() {
            let mut z = layer.forward(acts.last().expect("non-empty"));
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let shared = acts.last().expect("non-empty");
        let d = self.arch.d;
        let heads = self
            .heads
            .iter()
            .enumerate()
            .map(|(k, h)| {
                if focus.is_none_or(|f| f.index() == k) {
                    h.forward(shared)
                } else {
                    let mut out = Array2::zeros((shared.nrows(), d + 1));
                    let conf = shared.dot(&h.w.column(d)) + h.b[d];
                    out.column_mut(d).assign(&conf);
                    out
                }
            })
            .collect();
        Ok(BatchForward { acts, heads })
    }

    pub fn forward(&self, feat: &[f64]) -> Result<EncoderOutput, EncoderError> {
        let x = Array2::from_shape_vec((1, feat.len()), feat.to_vec())
            .expect("row vector shape matches");
        let fwd = self.forward_batch(&x)?;
        let per_type = DegradationType::ALL
            .iter()
            .map(|&t| TypeOutput {
                emb: fwd.emb(t, 0).to_vec(),
                conf: fwd.conf(t, 0),
            })
            .collect();
        Ok(EncoderOutput {
            shared: fwd.shared().row(0).to_vec(),
            per_type,
        })
    }

    /// Parameter gradients given the upstream gradient of every raw head
    /// output (`batch x (d + 1)` each).
    pub fn backward(&self, fwd: &BatchForward, d_heads: &[Array2<f64>]) -> EncoderParams {
        self.backward_inner(fwd, d_heads, None)
    }

    /// Backward pass for [`EncoderParams::forward_focused`]: upstream
    /// gradients of heads other than `kind` must be zero outside the
    /// confidence column.
    pub fn backward_focused(
        &self,
        fwd: &BatchForward,
        d_heads: &[Array2<f64>],
        kind: DegradationType,
    ) -> EncoderParams {
        self.backward_inner(fwd, d_heads, Some(kind))
    }

    fn backward_inner(
        &self,
        fwd: &BatchForward,
        d_heads: &[Array2<f64>],
        focus: Option<DegradationType>,
    ) -> EncoderParams {
        let shared = fwd.shared();
        let d = self.arch.d;
        let mut grads = EncoderParams::zeros(&self.arch);
        let mut d_out = Array2::<f64>::zeros(shared.raw_dim());
        for (k, ((head, g), dy)) in self
            .heads
            .iter()
            .zip(grads.heads.iter_mut())
            .zip(d_heads)
            .enumerate()
        {
            if focus.is_none_or(|f| f.index() == k) {
                g.w = shared.t().dot(dy);
                g.b = dy.sum_axis(Axis(0));
                d_out = d_out + dy.dot(&head.w.t());
            } else {
                let dc = dy.column(d);
                g.w.column_mut(d).assign(&shared.t().dot(&dc));
                g.b[d] = dc.sum();
                let wc = head.w.column(d);
                for (mut row, &c) in d_out.rows_mut().into_iter().zip(dc) {
                    row.scaled_add(c, &wc);
                }
            }
        }
        let last = self.trunk.len() - 1;
        for l in (0..self.trunk.len()).rev() {
            let mut dz = d_out;
            if l < last {
                dz.zip_mut_with(&fwd.acts[l + 1], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let input = &fwd.acts[l];
            grads.trunk[l].w = input.t().dot(&dz);
            grads.trunk[l].b = dz.sum_axis(Axis(0));
            d_out = if l > 0 {
                dz.dot(&self.trunk[l].w.t())
            } else {
                Array2::zeros((0, 0))
            };
        }
        // dot() on transposed views can produce Fortran-order results
        for l in grads.trunk.iter_mut().chain(grads.heads.iter_mut()) {
            if !l.w.is_standard_layout() {
                l.w = l.w.as_standard_layout().into_owned();
            }
        }
        grads
    }
}
