//! Joint optimization of feature tables and network weights.

pub mod adam;
pub mod checkpoint;
pub mod pipeline;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoding::{FeatureTableBank, SparseTableGrads};
use crate::error::{Error, Result};
use crate::grid::EncodingConfig;
use crate::metrics::{format_sig9, psnr_from_mse};
use crate::raster::Raster;
use crate::renderer::composite::EARLY_STOP_TRANSMITTANCE;
use crate::renderer::mlp::{MlpConfig, MlpParameters};
use crate::renderer::sh::SH_COEFFS;
use crate::scalar::Real;
use crate::scene::camera::{generate_ray, Camera, SceneTransform};
use crate::scene::dataset::{Background, RayDataset};
use crate::scene::image2d::ImageFitTask;
use crate::scene::sampling::sample_ray_with_offsets;

pub use adam::{adam_step, sparse_adam_step, AdamConfig, Moments};
pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use pipeline::{SampledRay, Workspace};

/// Rays (or pixels) handled by one work item on the parallel path.
pub const CHUNK_RAYS: usize = 32;
pub const CHUNK_PIXELS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// Volume rendering of posed images.
    Rays,
    /// Direct regression of a single image over `[0, 1]^2`.
    Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub batch_size: usize,
    pub total_steps: u64,
    pub lr_init: f64,
    pub lr_final: f64,
    pub seed: u64,
    pub samples_per_ray: usize,
    pub adam: AdamConfig,
    pub background: Background,
    /// Near/far planes in scene units, used when rendering new poses.
    pub near: f64,
    pub far: f64,
    pub transform: SceneTransform,
    /// Target resolution in image mode.
    pub image_size: (u32, u32),
    pub density_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub color_hidden: Vec<usize>,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Rays,
            batch_size: 256,
            total_steps: 1000,
            lr_init: 2e-2,
            lr_final: 2e-4,
            seed: 1337,
            samples_per_ray: 64,
            adam: AdamConfig::default(),
            background: Background::White,
            near: 2.0,
            far: 6.0,
            transform: SceneTransform::identity(),
            image_size: (0, 0),
            density_hidden: vec![64],
            feature_dim: 16,
            color_hidden: vec![128, 128],
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch must be at least 1"));
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr_init) {
            return Err(Error::config("learning rates must satisfy 0 < lr_final <= lr"));
        }
        if self.samples_per_ray == 0 {
            return Err(Error::config("samples must be at least 1"));
        }
        if !(self.near < self.far) {
            return Err(Error::config("near must be less than far"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be at least 1"));
        }
        Ok(())
    }

    pub fn mlp_config(&self, encoding: &EncodingConfig) -> MlpConfig {
        MlpConfig {
            input_dim: encoding.output_dim(),
            density_hidden: self.density_hidden.clone(),
            feature_dim: self.feature_dim,
            color_hidden: self.color_hidden.clone(),
            direction_dim: match self.task {
                TaskKind::Rays => SH_COEFFS,
                TaskKind::Image => 0,
            },
        }
    }
}

/// `lr(t) = lr_final + (lr_init - lr_final) (1 + cos(π t / total)) / 2`
pub fn lr_schedule(step: u64, config: &TrainConfig) -> Result<f64> {
    let total = config.total_steps;
    if step > total {
        return Err(Error::StepOutOfRange { step, total });
    }
    if step == 0 {
        return Ok(config.lr_init);
    }
    if step == total {
        return Ok(config.lr_final);
    }
    let phase = std::f64::consts::PI * step as f64 / total as f64;
    Ok(config.lr_final + (config.lr_init - config.lr_final) * 0.5 * (1.0 + phase.cos()))
}

/// `Σ_r ||Ĉ(r) - C(r)||²` and its gradient `2 (Ĉ - C)` per ray.
pub fn l2_loss<R: Real>(rendered: &[[R; 3]], target: &[[R; 3]]) -> Result<(R, Vec<[R; 3]>)> {
    if rendered.len() != target.len() {
        return Err(Error::ShapeMismatch {
            expected: rendered.len(),
            got: target.len(),
        });
    }
    let two = R::lit(2.0);
    let mut loss = R::zero();
    let grads = rendered
        .iter()
        .zip(target)
        .map(|(c, t)| {
            let d = [c[0] - t[0], c[1] - t[1], c[2] - t[2]];
            loss += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            d.map(|v| two * v)
        })
        .collect();
    Ok((loss, grads))
}

/// Training data for [`train`].
#[derive(Clone, Copy, Debug)]
pub enum Task<'a> {
    Rays(&'a RayDataset),
    Image(&'a ImageFitTask),
}

impl Task<'_> {
    fn kind(&self) -> TaskKind {
        match self {
            Task::Rays(_) => TaskKind::Rays,
            Task::Image(_) => TaskKind::Image,
        }
    }

    fn examples(&self) -> usize {
        match self {
            Task::Rays(d) => d.total_pixels(),
            Task::Image(t) => t.len(),
        }
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<R> {
    pub encoding: EncodingConfig,
    pub config: TrainConfig,
    pub bank: FeatureTableBank<R>,
    pub mlp: MlpParameters<R>,
    pub table_moments: Vec<Moments<R>>,
    pub mlp_moments: Moments<R>,
    /// Completed updates.
    pub step: u64,
    /// Batch and jitter generator.
    pub rng: ChaCha8Rng,
}

const MLP_STREAM: u64 = 1 << 32;
const BATCH_STREAM: u64 = (1 << 32) + 1;

impl<R: Real> TrainState<R> {
    /// Fresh parameters. Tables, network and batch sampling draw from
    /// separate streams of the same seed.
    pub fn new(encoding: EncodingConfig, config: TrainConfig) -> Result<Self> {
        encoding.validate()?;
        config.validate()?;
        let want_dims = match config.task {
            TaskKind::Rays => 3,
            TaskKind::Image => 2,
        };
        if encoding.dims != want_dims {
            return Err(Error::config(format!(
                "{:?} task needs a {want_dims}D encoding, got {}D",
                config.task, encoding.dims
            )));
        }
        let bank = FeatureTableBank::init(&encoding, config.seed)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        init_rng.set_stream(MLP_STREAM);
        let mlp = MlpParameters::init(config.mlp_config(&encoding), &mut init_rng)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(BATCH_STREAM);
        Ok(Self {
            table_moments: bank.tables.iter().map(|t| Moments::zeros(t.len())).collect(),
            mlp_moments: Moments::zeros(mlp.len()),
            encoding,
            config,
            bank,
            mlp,
            step: 0,
            rng,
        })
    }

    /// Draws a batch, accumulates its gradients and applies one Adam update.
    /// Returns the summed batch loss. On error the parameters are untouched.
    pub fn step_once(&mut self, task: Task<'_>, ws: &mut Workspace<R>, pool: Option<&rayon::ThreadPool>) -> Result<f64> {
        if task.kind() != self.config.task {
            return Err(Error::config("task does not match the training configuration"));
        }
        let total = task.examples();
        if total == 0 {
            return Err(Error::config("empty dataset"));
        }
        let batch = self.config.batch_size;
        let indices: Vec<usize> = (0..batch).map(|_| self.rng.gen_range(0..total)).collect();
        let mut mlp_grad = vec![R::zero(); self.mlp.len()];
        let result = match task {
            Task::Rays(data) => {
                let s = self.config.samples_per_ray;
                let offsets: Vec<f64> = (0..batch * s).map(|_| self.rng.gen()).collect();
                let rays = indices
                    .iter()
                    .enumerate()
                    .map(|(i, &idx)| {
                        let (ray, near, far, target) = data.unit_ray(idx)?;
                        let samples = sample_ray_with_offsets(&ray, near, far, &offsets[i * s..(i + 1) * s])?;
                        Ok(SampledRay {
                            samples,
                            dir: ray.dir,
                            target,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.accumulate_rays(&rays, data.background.rgb(), ws, &mut mlp_grad, pool)
            }
            Task::Image(img) => {
                let coords: Vec<[f64; 2]> = indices.iter().map(|&i| img.coord(i)).collect();
                let targets: Vec<[f32; 3]> = indices.iter().map(|&i| img.color(i)).collect();
                self.accumulate_pixels(&coords, &targets, ws, &mut mlp_grad, pool)
            }
        };
        let loss = match result {
            Ok(l) if l.is_finite() => l,
            Ok(l) => {
                self.bank.grads.clear();
                return Err(Error::Diverged { step: self.step, loss: l });
            }
            Err(Error::NonFiniteActivation(_)) => {
                self.bank.grads.clear();
                return Err(Error::Diverged {
                    step: self.step,
                    loss: f64::NAN,
                });
            }
            Err(e) => {
                self.bank.grads.clear();
                return Err(e);
            }
        };
        let update = self.apply_update(&mlp_grad);
        self.bank.grads.clear();
        match update {
            Ok(()) => {
                self.step += 1;
                Ok(loss)
            }
            Err(Error::NonFiniteGradient) => Err(Error::Diverged { step: self.step, loss }),
            Err(e) => Err(e),
        }
    }

    fn accumulate_rays(
        &mut self,
        rays: &[SampledRay],
        background: [f32; 3],
        ws: &mut Workspace<R>,
        mlp_grad: &mut [R],
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<f64> {
        let mlp = &self.mlp;
        let (view, grads) = self.bank.split_grads();
        match pool {
            None => pipeline::ray_batch_gradients(view, mlp, rays, background, ws, mlp_grad, grads),
            Some(pool) => {
                let features = view.layout.config().features;
                let parts = pool.install(|| {
                    rays.par_chunks(CHUNK_RAYS)
                        .map(|chunk| {
                            let mut local_ws = Workspace::new();
                            let mut g = vec![R::zero(); mlp.len()];
                            let mut sparse = SparseTableGrads::new(features);
                            let loss = pipeline::ray_batch_gradients(view, mlp, chunk, background, &mut local_ws, &mut g, &mut sparse)?;
                            Ok((loss, g, sparse))
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                Ok(reduce_parts(parts, mlp_grad, grads))
            }
        }
    }

    fn accumulate_pixels(
        &mut self,
        coords: &[[f64; 2]],
        targets: &[[f32; 3]],
        ws: &mut Workspace<R>,
        mlp_grad: &mut [R],
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<f64> {
        let mlp = &self.mlp;
        let (view, grads) = self.bank.split_grads();
        match pool {
            None => pipeline::pixel_batch_gradients(view, mlp, coords, targets, ws, mlp_grad, grads),
            Some(pool) => {
                let features = view.layout.config().features;
                let parts = pool.install(|| {
                    coords
                        .par_chunks(CHUNK_PIXELS)
                        .zip(targets.par_chunks(CHUNK_PIXELS))
                        .map(|(c, t)| {
                            let mut local_ws = Workspace::new();
                            let mut g = vec![R::zero(); mlp.len()];
                            let mut sparse = SparseTableGrads::new(features);
                            let loss = pipeline::pixel_batch_gradients(view, mlp, c, t, &mut local_ws, &mut g, &mut sparse)?;
                            Ok((loss, g, sparse))
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                Ok(reduce_parts(parts, mlp_grad, grads))
            }
        }
    }

    fn apply_update(&mut self, mlp_grad: &[R]) -> Result<()> {
        // check everything first so a bad gradient leaves no partial update
        if mlp_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        for t in 0..self.bank.tables.len() {
            for &e in self.bank.grads.touched(t) {
                if self.bank.grads.entry(t, e).iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteGradient);
                }
            }
        }
        let lr = lr_schedule(self.step, &self.config)?;
        let t = self.step + 1;
        let cfg = self.config.adam;
        adam_step(&mut self.mlp.params, mlp_grad, &mut self.mlp_moments, lr, t, &cfg)?;
        for (i, (table, moments)) in self.bank.tables.iter_mut().zip(&mut self.table_moments).enumerate() {
            sparse_adam_step(table, &self.bank.grads, i, moments, lr, t, &cfg)?;
        }
        Ok(())
    }
}

fn reduce_parts<R: Real>(parts: Vec<(f64, Vec<R>, SparseTableGrads<R>)>, mlp_grad: &mut [R], grads: &mut crate::encoding::TableGrads<R>) -> f64 {
    let mut loss = 0.0;
    for (l, g, sparse) in parts {
        loss += l;
        for (a, b) in mlp_grad.iter_mut().zip(&g) {
            *a += *b;
        }
        sparse.merge_into(grads);
    }
    loss
}

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    /// Summed batch loss.
    pub loss: f64,
    /// PSNR of the batch, from its mean squared error.
    pub psnr: f64,
    pub lr: f64,
    /// Zero when timing is disabled.
    pub rays_per_sec: f64,
}

pub const METRICS_HEADER: &str = "step,loss,psnr,lr,rays_per_sec";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step,
            format_sig9(r.loss),
            format_sig9(r.psnr),
            format_sig9(r.lr),
            format_sig9(r.rays_per_sec)
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// `None` runs the serial, bit-deterministic path.
    pub threads: Option<usize>,
    /// Measure throughput; off keeps the metric log reproducible.
    pub timing: bool,
}

/// Runs updates until `state.step == total_steps`, logging a row whenever
/// the step about to run is a multiple of `log_every`.
///
/// On divergence the state still holds the last good parameters.
pub fn train<R: Real>(state: &mut TrainState<R>, task: Task<'_>, options: &TrainOptions, mut on_row: impl FnMut(&MetricRow)) -> Result<Vec<MetricRow>> {
    let pool = match options.threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let mut ws = Workspace::new();
    let mut rows = Vec::new();
    let batch = state.config.batch_size;
    let mut since = Instant::now();
    let mut steps_since = 0u64;
    while state.step < state.config.total_steps {
        let step = state.step;
        let loss = state.step_once(task, &mut ws, pool.as_ref())?;
        steps_since += 1;
        if step % state.config.log_every == 0 {
            let rays_per_sec = if options.timing {
                let secs = since.elapsed().as_secs_f64();
                (steps_since * batch as u64) as f64 / secs.max(1e-9)
            } else {
                0.0
            };
            let row = MetricRow {
                step,
                loss,
                psnr: psnr_from_mse(loss / (3 * batch) as f64, 1.0),
                lr: lr_schedule(step, &state.config)?,
                rays_per_sec,
            };
            on_row(&row);
            rows.push(row);
            since = Instant::now();
            steps_since = 0;
        }
    }
    Ok(rows)
}

/// Renders `camera` (in scene units) with midpoint samples and early ray
/// termination. Returns colors and per-pixel opacity.
pub fn render_view<R: Real>(state: &TrainState<R>, camera: &Camera) -> Result<(Raster, Vec<f32>)> {
    let cfg = &state.config;
    let (w, h) = (camera.width as usize, camera.height as usize);
    let mut img = Raster::new(w, h);
    let mut alpha = vec![0.0f32; w * h];
    let mut ws = Workspace::new();
    let view = state.bank.view();
    let n = cfg.samples_per_ray;
    let mid = vec![0.5; n];
    let near = cfg.transform.distance(camera.near);
    let far = cfg.transform.distance(camera.far);
    let pixels: Vec<(usize, usize)> = (0..h).flat_map(|v| (0..w).map(move |u| (u, v))).collect();
    for chunk in pixels.chunks(256) {
        let rays = chunk
            .iter()
            .map(|&(u, v)| {
                let ray = cfg.transform.ray(&generate_ray(camera, u as u32, v as u32)?);
                Ok(SampledRay {
                    samples: sample_ray_with_offsets(&ray, near, far, &mid)?,
                    dir: ray.dir,
                    target: [0.0; 3],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out = pipeline::render_rays(view, &state.mlp, &rays, cfg.background.rgb(), Some(EARLY_STOP_TRANSMITTANCE), &mut ws)?;
        for (&(u, v), (c, a)) in chunk.iter().zip(out) {
            img.set(u, v, c.map(|x| x.to_f64_lossy() as f32));
            alpha[v * w + u] = a.to_f64_lossy() as f32;
        }
    }
    Ok((img, alpha))
}

/// Renders the fitted image at `width` x `height` pixel centers.
pub fn render_image<R: Real>(state: &TrainState<R>, width: usize, height: usize) -> Result<Raster> {
    let grid = ImageFitTask {
        target: Raster::new(width, height),
    };
    let coords: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.coord(i)).collect();
    let mut ws = Workspace::new();
    let mut img = Raster::new(width, height);
    for (ci, chunk) in coords.chunks(4096).enumerate() {
        let colors = pipeline::render_pixels(state.bank.view(), &state.mlp, chunk, &mut ws)?;
        for (i, c) in colors.into_iter().enumerate() {
            img.data[ci * 4096 + i] = c.map(|x| x.to_f64_lossy() as f32);
        }
    }
    Ok(img)
}
