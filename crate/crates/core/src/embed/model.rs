//! Feedforward embedding model with explicit parameters and hand-written
//! backward passes: an encoder stack producing the representation f, a
//! one-layer rectifier projector producing the embedding z, and an affine
//! policy head producing action logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major n_out x n_in.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn init(rng: &mut Rng, n_in: usize, n_out: usize) -> Self {
        let scale = 1.0 / (n_in as f64).sqrt();
        Dense {
            n_in,
            n_out,
            w: (0..n_in * n_out)
                .map(|_| rng.range_f64(-scale, scale))
                .collect(),
            b: vec![0.0; n_out],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let mut out = self.b.clone();
        for (o, row) in out.iter_mut().zip(self.w.chunks_exact(self.n_in)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    /// Accumulate parameter gradients for output gradient `dout` at input
    /// `x`, and add the input gradient into `dx`.
    fn backward(&self, x: &[f64], dout: &[f64], grad: &mut DenseGrad, dx: &mut [f64]) {
        for (i, &g) in dout.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad.w[i * self.n_in..(i + 1) * self.n_in];
            for (r, &v) in row.iter_mut().zip(x) {
                *r += g * v;
            }
            grad.b[i] += g;
            let wrow = &self.w[i * self.n_in..(i + 1) * self.n_in];
            for (d, &w) in dx.iter_mut().zip(wrow) {
                *d += g * w;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseGrad {
    fn zeros_like(layer: &Dense) -> Self {
        DenseGrad {
            w: vec![0.0; layer.w.len()],
            b: vec![0.0; layer.b.len()],
        }
    }
}

/// Architecture description, stored alongside parameter dumps. The
/// downsample factor records how observations were pooled before
/// flattening, so a dumped model can be re-driven on fresh renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArch {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub embed_dim: usize,
    pub n_actions: usize,
    #[serde(default = "default_downsample")]
    pub downsample: usize,
}

fn default_downsample() -> usize {
    1
}

/// Encoder f, projector h (one rectifier layer), policy head W, b.
///
/// Pixel observations are overwhelmingly exact zeros, so the first encoder
/// layer keeps a column-major mirror of its weights and the forward pass
/// walks only the nonzero inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelDump")]
pub struct EmbeddingModel {
    pub arch: ModelArch,
    pub encoder: Vec<Dense>,
    pub projector: Dense,
    pub head: Dense,
    /// Transposed weights of `encoder[0]`, kept in sync by every parameter
    /// update; n_in x n_out so each input's weight column is contiguous.
    #[serde(skip)]
    first_cols: Vec<f64>,
}

/// Wire format of a parameter dump; rebuilds the weight mirror on load.
#[derive(Deserialize)]
struct ModelDump {
    arch: ModelArch,
    encoder: Vec<Dense>,
    projector: Dense,
    head: Dense,
}

impl From<ModelDump> for EmbeddingModel {
    fn from(dump: ModelDump) -> Self {
        let mut model = EmbeddingModel {
            arch: dump.arch,
            encoder: dump.encoder,
            projector: dump.projector,
            head: dump.head,
            first_cols: Vec::new(),
        };
        model.refresh_first_cols();
        model
    }
}

/// Cached activations of one forward pass, enough to run the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// acts[0] is the input; acts[l + 1] the rectified output of encoder
    /// layer l. The last entry is the representation f.
    pub acts: Vec<Vec<f64>>,
    /// Embedding z = relu(projector(f)).
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn representation(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

impl EmbeddingModel {
    pub fn new(arch: ModelArch, seed: u64) -> Result<Self> {
        if arch.encoder_widths.is_empty() {
            return Err(Error::InvalidArgument("encoder needs at least one layer".into()));
        }
        let mut rng = Rng::seed_from_u64(seed);
        let mut encoder = Vec::new();
        let mut n_in = arch.input_dim;
        for &width in &arch.encoder_widths {
            encoder.push(Dense::init(&mut rng, n_in, width));
            n_in = width;
        }
        let projector = Dense::init(&mut rng, n_in, arch.embed_dim);
        let head = Dense::init(&mut rng, n_in, arch.n_actions);
        let mut model = EmbeddingModel {
            arch,
            encoder,
            projector,
            head,
            first_cols: Vec::new(),
        };
        model.refresh_first_cols();
        Ok(model)
    }

    fn refresh_first_cols(&mut self) {
        let first = &self.encoder[0];
        self.first_cols.resize(first.w.len(), 0.0);
        for i in 0..first.n_out {
            for j in 0..first.n_in {
                self.first_cols[j * first.n_out + i] = first.w[i * first.n_in + j];
            }
        }
    }

    /// First layer applied by walking only the nonzero inputs.
    fn first_layer_forward(&self, x: &[f64]) -> Vec<f64> {
        let first = &self.encoder[0];
        let mut out = first.b.clone();
        for (j, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let col = &self.first_cols[j * first.n_out..(j + 1) * first.n_out];
            for (o, &w) in out.iter_mut().zip(col) {
                *o += v * w;
            }
        }
        out
    }

    pub fn forward(&self, obs: &[f64]) -> Result<ForwardTrace> {
        if obs.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "input has {} values, model expects {}",
                obs.len(),
                self.arch.input_dim
            )));
        }
        let mut acts = Vec::with_capacity(self.encoder.len() + 1);
        acts.push(obs.to_vec());
        for (l, layer) in self.encoder.iter().enumerate() {
            let mut h = if l == 0 {
                self.first_layer_forward(acts.last().unwrap())
            } else {
                layer.forward(acts.last().unwrap())
            };
            for v in h.iter_mut() {
                *v = v.max(0.0);
            }
            acts.push(h);
        }
        let f = acts.last().unwrap();
        let mut z = self.projector.forward(f);
        for v in z.iter_mut() {
            *v = v.max(0.0);
        }
        let logits = self.head.forward(f);
        Ok(ForwardTrace {
            acts,
            embedding: z,
            logits,
        })
    }

    /// Backward pass for one state: `d_embedding` and `d_logits` are the
    /// loss gradients at the trace's outputs; parameter gradients accumulate
    /// into `grads`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        d_embedding: Option<&[f64]>,
        d_logits: Option<&[f64]>,
        d_representation: Option<&[f64]>,
        grads: &mut ModelGrads,
    ) {
        let f = trace.representation();
        let mut df = vec![0.0; f.len()];
        if let Some(dz) = d_embedding {
            let dpre: Vec<f64> = dz
                .iter()
                .zip(&trace.embedding)
                .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                .collect();
            self.projector.backward(f, &dpre, &mut grads.projector, &mut df);
        }
        if let Some(dl) = d_logits {
            self.head.backward(f, dl, &mut grads.head, &mut df);
        }
        if let Some(dr) = d_representation {
            for (a, b) in df.iter_mut().zip(dr) {
                *a += b;
            }
        }
        // Encoder chain: every layer is rectified, including the last. The
        // input layer needs no dx, and its dW walks the nonzero pixels.
        let mut dout = df;
        for (l, layer) in self.encoder.iter().enumerate().rev() {
            let post = &trace.acts[l + 1];
            for (g, &p) in dout.iter_mut().zip(post) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            if l == 0 {
                let x = &trace.acts[0];
                let grad = &mut grads.encoder[0];
                for (i, &g) in dout.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    grad.b[i] += g;
                }
                for (j, &v) in x.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    for (i, &g) in dout.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        grad.w[i * layer.n_in + j] += g * v;
                    }
                }
                break;
            }
            let mut dx = vec![0.0; layer.n_in];
            layer.backward(&trace.acts[l], &dout, &mut grads.encoder[l], &mut dx);
            dout = dx;
        }
    }

    pub fn n_params(&self) -> usize {
        self.encoder
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum::<usize>()
            + self.projector.w.len()
            + self.projector.b.len()
            + self.head.w.len()
            + self.head.b.len()
    }

    pub fn params_to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.encoder {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out.extend_from_slice(&self.projector.w);
        out.extend_from_slice(&self.projector.b);
        out.extend_from_slice(&self.head.w);
        out.extend_from_slice(&self.head.b);
        out
    }

    pub fn set_params_from_vec(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch("parameter vector size".into()));
        }
        let mut at = 0;
        let take = |dst: &mut [f64], at: &mut usize| {
            dst.copy_from_slice(&params[*at..*at + dst.len()]);
            *at += dst.len();
        };
        for l in &mut self.encoder {
            take(&mut l.w, &mut at);
            take(&mut l.b, &mut at);
        }
        take(&mut self.projector.w, &mut at);
        take(&mut self.projector.b, &mut at);
        take(&mut self.head.w, &mut at);
        take(&mut self.head.b, &mut at);
        self.refresh_first_cols();
        Ok(())
    }

    /// Gradient step: params -= lr * grads.
    pub fn apply_gradients(&mut self, grads: &ModelGrads, lr: f64) {
        let apply = |layer: &mut Dense, g: &DenseGrad| {
            for (w, gw) in layer.w.iter_mut().zip(&g.w) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                *b -= lr * gb;
            }
        };
        for (l, g) in self.encoder.iter_mut().zip(&grads.encoder) {
            apply(l, g);
        }
        apply(&mut self.projector, &grads.projector);
        apply(&mut self.head, &grads.head);
        self.refresh_first_cols();
    }
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: Vec<DenseGrad>,
    pub projector: DenseGrad,
    pub head: DenseGrad,
}

impl ModelGrads {
    pub fn zeros_like(model: &EmbeddingModel) -> Self {
        ModelGrads {
            encoder: model.encoder.iter().map(DenseGrad::zeros_like).collect(),
            projector: DenseGrad::zeros_like(&model.projector),
            head: DenseGrad::zeros_like(&model.head),
        }
    }

    pub fn scale(&mut self, s: f64) {
        let scale_one = |g: &mut DenseGrad| {
            g.w.iter_mut().for_each(|v| *v *= s);
            g.b.iter_mut().for_each(|v| *v *= s);
        };
        self.encoder.iter_mut().for_each(scale_one);
        scale_one(&mut self.projector);
        scale_one(&mut self.head);
    }

    pub fn to_vec(&self, model: &EmbeddingModel) -> Vec<f64> {
        let mut out = Vec::with_capacity(model.n_params());
        for g in &self.encoder {
            out.extend_from_slice(&g.w);
            out.extend_from_slice(&g.b);
        }
        out.extend_from_slice(&self.projector.w);
        out.extend_from_slice(&self.projector.b);
        out.extend_from_slice(&self.head.w);
        out.extend_from_slice(&self.head.b);
        out
    }
}
