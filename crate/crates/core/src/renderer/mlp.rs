//! Density and color networks with batched forward and reverse passes.
//!
//! All weights and biases live in one flat vector so the optimizer and the
//! checkpoint writer can treat them uniformly. A layer with `i` inputs and
//! `o` outputs stores its weight matrix input-major (`w[a * o + b]` connects
//! input `a` to output `b`) followed by its bias, if any.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// `σ = exp(clamp(raw, -DENSITY_CLAMP, DENSITY_CLAMP))`
pub const DENSITY_CLAMP: f64 = 15.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpConfig {
    /// Width of the encoded feature vector `y`.
    pub input_dim: usize,
    pub density_hidden: Vec<usize>,
    /// Width of `f_c`; entry 0 carries the raw density.
    pub feature_dim: usize,
    pub color_hidden: Vec<usize>,
    /// Width of the direction encoding appended to `f_c` (0 disables it).
    pub direction_dim: usize,
}

impl MlpConfig {
    /// 64-wide density network and two 128-wide color layers.
    pub fn standard(input_dim: usize, direction_dim: usize) -> Self {
        Self {
            input_dim,
            density_hidden: vec![64],
            feature_dim: 16,
            color_hidden: vec![128, 128],
            direction_dim,
        }
    }

    fn validate(&self) -> Result<()> {
        let widths = self.density_hidden.iter().chain(&self.color_hidden);
        if self.input_dim == 0 || self.feature_dim == 0 || widths.into_iter().any(|&w| w == 0) {
            return Err(Error::config("network layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub bias: bool,
    pub relu: bool,
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + if self.bias { self.outputs } else { 0 }
    }

    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.weight_len()
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.weight_len();
        start..start + if self.bias { self.outputs } else { 0 }
    }
}

/// Density `σ`, color `c` and the color features `f_c` of one point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointRadiance<R> {
    pub sigma: R,
    pub color: [R; 3],
    pub features: Vec<R>,
}

/// Weights of both networks, `Φ = [Φ_d; Φ_c]`, as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParameters<R> {
    config: MlpConfig,
    layers: Vec<LayerShape>,
    density_layers: usize,
    pub params: Vec<R>,
}

/// Activations kept from a batched forward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache<R> {
    rows: usize,
    /// `inputs[i]` is the input matrix of layer `i` (rows x inputs).
    inputs: Vec<Vec<R>>,
    /// `outputs[i]` is the post-activation output of layer `i`.
    outputs: Vec<Vec<R>>,
    pub sigma: Vec<R>,
    /// rows x 3, after the logistic.
    pub colors: Vec<R>,
}

impl<R: Real> MlpCache<R> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `f_c` of row `r`.
    pub fn features(&self, r: usize, density_layers: usize) -> &[R] {
        let out = &self.outputs[density_layers - 1];
        let width = out.len() / self.rows;
        &out[r * width..(r + 1) * width]
    }

    pub fn color(&self, r: usize) -> [R; 3] {
        [self.colors[3 * r], self.colors[3 * r + 1], self.colors[3 * r + 2]]
    }
}

impl<R: Real> MlpParameters<R> {
    /// All-zero parameters.
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |inputs: usize, outputs: usize, hidden: bool| {
            let shape = LayerShape {
                inputs,
                outputs,
                bias: hidden,
                relu: hidden,
                offset,
            };
            offset += shape.param_len();
            layers.push(shape);
        };
        let mut width = config.input_dim;
        for &h in &config.density_hidden {
            push(width, h, true);
            width = h;
        }
        push(width, config.feature_dim, false);
        let density_layers = config.density_hidden.len() + 1;
        width = config.feature_dim + config.direction_dim;
        for &h in &config.color_hidden {
            push(width, h, true);
            width = h;
        }
        push(width, 3, false);
        let total = layers.last().map(|l| l.offset + l.param_len()).unwrap_or(0);
        Ok(Self {
            config,
            layers,
            density_layers,
            params: vec![R::zero(); total],
        })
    }

    /// Weights drawn from `U[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`, biases 0.
    pub fn init<G: Rng>(config: MlpConfig, rng: &mut G) -> Result<Self> {
        let mut mlp = Self::zeros(config)?;
        for layer in mlp.layers.clone() {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut mlp.params[layer.weight_range()] {
                *w = R::lit(rng.gen_range(-bound..bound));
            }
        }
        Ok(mlp)
    }

    /// Rebuilds parameters from explicit layer shapes, as read from a checkpoint.
    pub fn from_parts(config: MlpConfig, params: Vec<R>) -> Result<Self> {
        let mut mlp = Self::zeros(config)?;
        if params.len() != mlp.params.len() {
            return Err(Error::ShapeMismatch {
                expected: mlp.params.len(),
                got: params.len(),
            });
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn density_layers(&self) -> usize {
        self.density_layers
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn weights(&self, layer: usize) -> &[R] {
        &self.params[self.layers[layer].weight_range()]
    }

    pub fn bias(&self, layer: usize) -> &[R] {
        &self.params[self.layers[layer].bias_range()]
    }

    /// Single-point forward pass.
    pub fn forward(&self, y: &[R], direction: &[R]) -> Result<(PointRadiance<R>, MlpCache<R>)> {
        let mut cache = MlpCache::default();
        self.forward_batch(y, direction, 1, &mut cache)?;
        let radiance = PointRadiance {
            sigma: cache.sigma[0],
            color: cache.color(0),
            features: cache.features(0, self.density_layers).to_vec(),
        };
        Ok((radiance, cache))
    }

    /// Forward pass over `rows` points. `y` is rows x input_dim and
    /// `directions` rows x direction_dim, both row-major.
    pub fn forward_batch(&self, y: &[R], directions: &[R], rows: usize, cache: &mut MlpCache<R>) -> Result<()> {
        let cfg = &self.config;
        if y.len() != rows * cfg.input_dim {
            return Err(Error::ShapeMismatch {
                expected: rows * cfg.input_dim,
                got: y.len(),
            });
        }
        if directions.len() != rows * cfg.direction_dim {
            return Err(Error::ShapeMismatch {
                expected: rows * cfg.direction_dim,
                got: directions.len(),
            });
        }
        let n_layers = self.layers.len();
        cache.rows = rows;
        cache.inputs.resize_with(n_layers, Vec::new);
        cache.outputs.resize_with(n_layers, Vec::new);
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(y);

        for li in 0..n_layers {
            if li == self.density_layers {
                // color input = [f_c ; γ(d)]
                let fd = cfg.feature_dim;
                let dd = cfg.direction_dim;
                let features = &cache.outputs[li - 1];
                let input = &mut cache.inputs[li];
                input.clear();
                input.reserve(rows * (fd + dd));
                for r in 0..rows {
                    input.extend_from_slice(&features[r * fd..(r + 1) * fd]);
                    input.extend_from_slice(&directions[r * dd..(r + 1) * dd]);
                }
            } else if li > 0 {
                let input = &mut cache.inputs[li];
                input.clear();
                input.extend_from_slice(&cache.outputs[li - 1]);
            }
            let shape = self.layers[li];
            let mut out = std::mem::take(&mut cache.outputs[li]);
            self.layer_forward(li, &cache.inputs[li], rows, &mut out);
            if shape.relu {
                for v in out.iter_mut() {
                    if *v < R::zero() {
                        *v = R::zero();
                    }
                }
            }
            cache.outputs[li] = out;
        }

        let clamp = R::lit(DENSITY_CLAMP);
        let fd = cfg.feature_dim;
        let features = &cache.outputs[self.density_layers - 1];
        cache.sigma.clear();
        cache
            .sigma
            .extend((0..rows).map(|r| features[r * fd].max(-clamp).min(clamp).exp()));
        let logits = &cache.outputs[n_layers - 1];
        cache.colors.clear();
        cache.colors.extend(logits.iter().map(|&v| crate::scalar::logistic(v)));

        if cache.sigma.iter().any(|v| !v.is_finite()) || features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation("density network"));
        }
        if cache.colors.iter().any(|v| !v.is_finite()) || logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation("color network"));
        }
        Ok(())
    }

    fn layer_forward(&self, li: usize, input: &[R], rows: usize, out: &mut Vec<R>) {
        let shape = self.layers[li];
        let (ni, no) = (shape.inputs, shape.outputs);
        let w = self.weights(li);
        let b = self.bias(li);
        out.clear();
        out.resize(rows * no, R::zero());
        for r in 0..rows {
            let x = &input[r * ni..(r + 1) * ni];
            let o = &mut out[r * no..(r + 1) * no];
            if shape.bias {
                o.copy_from_slice(b);
            }
            for (a, &xa) in x.iter().enumerate() {
                if xa == R::zero() {
                    continue;
                }
                let wa = &w[a * no..(a + 1) * no];
                for (ob, &wab) in o.iter_mut().zip(wa) {
                    *ob += xa * wab;
                }
            }
        }
    }

    /// Reverse pass for the batch held in `cache`.
    ///
    /// `d_sigma` is rows long, `d_color` rows x 3. Parameter gradients are
    /// added into `grad` (same layout as [`Self::params`]); the gradient with
    /// respect to `y` is written into `d_input` (rows x input_dim). The
    /// gradient reaching the direction encoding is dropped.
    pub fn backward_batch(
        &self,
        cache: &MlpCache<R>,
        d_sigma: &[R],
        d_color: &[R],
        grad: &mut [R],
        d_input: &mut Vec<R>,
    ) -> Result<()> {
        let rows = cache.rows;
        let n_layers = self.layers.len();
        if cache.outputs.len() != n_layers || cache.sigma.len() != rows || rows == 0 {
            return Err(Error::MissingCache);
        }
        if d_sigma.len() != rows {
            return Err(Error::ShapeMismatch {
                expected: rows,
                got: d_sigma.len(),
            });
        }
        if d_color.len() != rows * 3 {
            return Err(Error::ShapeMismatch {
                expected: rows * 3,
                got: d_color.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }

        // logistic'(z) = c (1 - c)
        let mut g: Vec<R> = d_color
            .iter()
            .zip(&cache.colors)
            .map(|(&dc, &c)| dc * c * (R::one() - c))
            .collect();
        let mut d_in = Vec::new();
        let clamp = R::lit(DENSITY_CLAMP);
        let fd = self.config.feature_dim;

        for li in (0..n_layers).rev() {
            let shape = self.layers[li];
            if shape.relu {
                for (gv, &ov) in g.iter_mut().zip(&cache.outputs[li]) {
                    if ov <= R::zero() {
                        *gv = R::zero();
                    }
                }
            }
            self.layer_backward(li, &cache.inputs[li], &g, rows, grad, &mut d_in);

            if li == self.density_layers {
                // split [d f_c ; d γ(d)] and add the density path into f_c[0]
                let width = shape.inputs;
                let features = &cache.outputs[li - 1];
                let mut next = Vec::with_capacity(rows * fd);
                for r in 0..rows {
                    next.extend_from_slice(&d_in[r * width..r * width + fd]);
                    let raw = features[r * fd];
                    if raw > -clamp && raw < clamp {
                        next[r * fd] += d_sigma[r] * cache.sigma[r];
                    }
                }
                g = next;
            } else {
                std::mem::swap(&mut g, &mut d_in);
            }
        }
        *d_input = g;
        Ok(())
    }

    fn layer_backward(&self, li: usize, input: &[R], g: &[R], rows: usize, grad: &mut [R], d_in: &mut Vec<R>) {
        let shape = self.layers[li];
        let (ni, no) = (shape.inputs, shape.outputs);
        let w = self.weights(li);
        d_in.clear();
        d_in.resize(rows * ni, R::zero());
        {
            let gw = &mut grad[shape.weight_range()];
            for r in 0..rows {
                let x = &input[r * ni..(r + 1) * ni];
                let gr = &g[r * no..(r + 1) * no];
                for (a, &xa) in x.iter().enumerate() {
                    if xa == R::zero() {
                        continue;
                    }
                    for (gwab, &gb) in gw[a * no..(a + 1) * no].iter_mut().zip(gr) {
                        *gwab += xa * gb;
                    }
                }
            }
        }
        if shape.bias {
            let gb = &mut grad[shape.bias_range()];
            for r in 0..rows {
                for (gbv, &gv) in gb.iter_mut().zip(&g[r * no..(r + 1) * no]) {
                    *gbv += gv;
                }
            }
        }
        for r in 0..rows {
            let gr = &g[r * no..(r + 1) * no];
            if gr.iter().all(|&v| v == R::zero()) {
                continue;
            }
            let di = &mut d_in[r * ni..(r + 1) * ni];
            for (a, dia) in di.iter_mut().enumerate() {
                *dia = dot(gr, &w[a * no..(a + 1) * no]);
            }
        }
    }
}
