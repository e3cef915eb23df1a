//! Fused forward and reverse passes over a batch: encode, network, composite,
//! loss, then gradients back into the network and the tables.

use crate::encoding::{scatter, BankView, GradSink, LevelLookup};
use crate::error::Result;
use crate::renderer::composite::{composite, composite_backward, SampleSpan};
use crate::renderer::mlp::{MlpCache, MlpParameters};
use crate::renderer::sh::{encode_direction, SH_COEFFS};
use crate::scalar::Real;
use crate::scene::camera::Vec3;
use crate::scene::sampling::RaySamples;

/// One ray ready for rendering: samples in unit-cube coordinates, its unit
/// direction and its target color.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledRay {
    pub samples: RaySamples,
    pub dir: Vec3,
    pub target: [f32; 3],
}

/// Scratch buffers reused across batches.
#[derive(Debug, Default)]
pub struct Workspace<R> {
    lookups: Vec<LevelLookup<R>>,
    y: Vec<R>,
    dirs: Vec<R>,
    cache: MlpCache<R>,
    d_sigma: Vec<R>,
    d_color: Vec<R>,
    d_input: Vec<R>,
    t: Vec<R>,
    delta: Vec<R>,
    rgb: Vec<[R; 3]>,
}

impl<R: Real> Workspace<R> {
    pub fn new() -> Self {
        Self {
            lookups: Vec::new(),
            y: Vec::new(),
            dirs: Vec::new(),
            cache: MlpCache::default(),
            d_sigma: Vec::new(),
            d_color: Vec::new(),
            d_input: Vec::new(),
            t: Vec::new(),
            delta: Vec::new(),
            rgb: Vec::new(),
        }
    }
}

fn cast3<R: Real>(v: [f32; 3]) -> [R; 3] {
    v.map(|c| R::lit(c as f64))
}

/// Encodes `points` (each `dims` long) into `ws.y`, keeping the lookups.
fn encode_points<R: Real>(view: BankView<'_, R>, points: impl Iterator<Item = [f64; 3]>, rows: usize, ws: &mut Workspace<R>) -> Result<()> {
    let cfg = view.layout.config();
    let (levels, width, dims) = (cfg.levels, cfg.output_dim(), cfg.dims);
    ws.lookups.resize(rows * levels, LevelLookup::default());
    ws.y.resize(rows * width, R::zero());
    for (r, p) in points.enumerate() {
        let x: [R; 3] = p.map(R::lit);
        view.encode_into(
            &x[..dims],
            &mut ws.lookups[r * levels..(r + 1) * levels],
            &mut ws.y[r * width..(r + 1) * width],
        )?;
    }
    Ok(())
}

fn scatter_rows<R: Real, S: GradSink<R>>(view: BankView<'_, R>, rows: usize, ws: &Workspace<R>, sink: &mut S) -> Result<()> {
    let cfg = view.layout.config();
    let (levels, width) = (cfg.levels, cfg.output_dim());
    for r in 0..rows {
        scatter(
            view.layout,
            &ws.lookups[r * levels..(r + 1) * levels],
            &ws.d_input[r * width..(r + 1) * width],
            sink,
        )?;
    }
    Ok(())
}

fn fill_directions<R: Real>(rays: &[SampledRay], rows: usize, ws: &mut Workspace<R>) -> Result<()> {
    ws.dirs.clear();
    ws.dirs.reserve(rows * SH_COEFFS);
    for ray in rays {
        let enc = encode_direction(ray.dir.map(R::lit))?;
        for _ in 0..ray.samples.len() {
            ws.dirs.extend_from_slice(&enc);
        }
    }
    Ok(())
}

/// Renders `rays`, adds `Σ ||Ĉ - C||²` gradients into `mlp_grad` and `sink`,
/// and returns the summed loss.
pub fn ray_batch_gradients<R: Real, S: GradSink<R>>(
    view: BankView<'_, R>,
    mlp: &MlpParameters<R>,
    rays: &[SampledRay],
    background: [f32; 3],
    ws: &mut Workspace<R>,
    mlp_grad: &mut [R],
    sink: &mut S,
) -> Result<f64> {
    let bg = cast3::<R>(background);
    let rows: usize = rays.iter().map(|r| r.samples.len()).sum();
    let mut loss = 0.0f64;
    if rows == 0 {
        for ray in rays {
            loss += squared_error(bg, ray.target);
        }
        return Ok(loss);
    }
    encode_points(view, rays.iter().flat_map(|r| r.samples.positions.iter().copied()), rows, ws)?;
    fill_directions(rays, rows, ws)?;
    mlp.forward_batch(&ws.y, &ws.dirs, rows, &mut ws.cache)?;

    ws.d_sigma.clear();
    ws.d_sigma.resize(rows, R::zero());
    ws.d_color.clear();
    ws.d_color.resize(rows * 3, R::zero());
    let mut start = 0;
    for ray in rays {
        let n = ray.samples.len();
        if n == 0 {
            loss += squared_error(bg, ray.target);
            continue;
        }
        ws.t.clear();
        ws.t.extend(ray.samples.t.iter().map(|&v| R::lit(v)));
        ws.delta.clear();
        ws.delta.extend(ray.samples.delta.iter().map(|&v| R::lit(v)));
        ws.rgb.clear();
        ws.rgb.extend((start..start + n).map(|r| ws.cache.color(r)));
        let span = SampleSpan {
            t: &ws.t,
            delta: &ws.delta,
            sigma: &ws.cache.sigma[start..start + n],
            color: &ws.rgb,
        };
        let fwd = composite(span, bg, None)?;
        loss += squared_error(fwd.color, ray.target);
        let target = cast3::<R>(ray.target);
        let two = R::lit(2.0);
        let g = [0, 1, 2].map(|k| two * (fwd.color[k] - target[k]));
        let (ds, dc) = composite_backward(span, &fwd, g)?;
        ws.d_sigma[start..start + n].copy_from_slice(&ds);
        for (i, c) in dc.iter().enumerate() {
            ws.d_color[3 * (start + i)..3 * (start + i) + 3].copy_from_slice(c);
        }
        start += n;
    }
    mlp.backward_batch(&ws.cache, &ws.d_sigma, &ws.d_color, mlp_grad, &mut ws.d_input)?;
    scatter_rows(view, rows, ws, sink)?;
    Ok(loss)
}

/// Image-fit counterpart of [`ray_batch_gradients`]: each coordinate maps
/// straight to a color, without compositing.
pub fn pixel_batch_gradients<R: Real, S: GradSink<R>>(
    view: BankView<'_, R>,
    mlp: &MlpParameters<R>,
    coords: &[[f64; 2]],
    targets: &[[f32; 3]],
    ws: &mut Workspace<R>,
    mlp_grad: &mut [R],
    sink: &mut S,
) -> Result<f64> {
    let rows = coords.len();
    if rows == 0 {
        return Ok(0.0);
    }
    encode_points(view, coords.iter().map(|c| [c[0], c[1], 0.0]), rows, ws)?;
    ws.dirs.clear();
    mlp.forward_batch(&ws.y, &ws.dirs, rows, &mut ws.cache)?;
    ws.d_sigma.clear();
    ws.d_sigma.resize(rows, R::zero());
    ws.d_color.clear();
    let two = R::lit(2.0);
    let mut loss = 0.0;
    for (r, target) in targets.iter().enumerate() {
        let c = ws.cache.color(r);
        loss += squared_error(c, *target);
        let t = cast3::<R>(*target);
        ws.d_color.extend((0..3).map(|k| two * (c[k] - t[k])));
    }
    mlp.backward_batch(&ws.cache, &ws.d_sigma, &ws.d_color, mlp_grad, &mut ws.d_input)?;
    scatter_rows(view, rows, ws, sink)?;
    Ok(loss)
}

fn squared_error<R: Real>(c: [R; 3], target: [f32; 3]) -> f64 {
    (0..3)
        .map(|k| (c[k].to_f64_lossy() - target[k] as f64).powi(2))
        .sum()
}

/// Forward-only rendering of `rays` with early termination; returns color
/// and opacity per ray.
pub fn render_rays<R: Real>(
    view: BankView<'_, R>,
    mlp: &MlpParameters<R>,
    rays: &[SampledRay],
    background: [f32; 3],
    early_stop: Option<f64>,
    ws: &mut Workspace<R>,
) -> Result<Vec<([R; 3], R)>> {
    let bg = cast3::<R>(background);
    let rows: usize = rays.iter().map(|r| r.samples.len()).sum();
    if rows == 0 {
        return Ok(vec![(bg, R::zero()); rays.len()]);
    }
    encode_points(view, rays.iter().flat_map(|r| r.samples.positions.iter().copied()), rows, ws)?;
    fill_directions(rays, rows, ws)?;
    mlp.forward_batch(&ws.y, &ws.dirs, rows, &mut ws.cache)?;
    let mut out = Vec::with_capacity(rays.len());
    let mut start = 0;
    for ray in rays {
        let n = ray.samples.len();
        if n == 0 {
            out.push((bg, R::zero()));
            continue;
        }
        ws.t.clear();
        ws.t.extend(ray.samples.t.iter().map(|&v| R::lit(v)));
        ws.delta.clear();
        ws.delta.extend(ray.samples.delta.iter().map(|&v| R::lit(v)));
        ws.rgb.clear();
        ws.rgb.extend((start..start + n).map(|r| ws.cache.color(r)));
        let span = SampleSpan {
            t: &ws.t,
            delta: &ws.delta,
            sigma: &ws.cache.sigma[start..start + n],
            color: &ws.rgb,
        };
        let fwd = composite(span, bg, early_stop.map(R::lit))?;
        out.push((fwd.color, R::one() - fwd.final_transmittance));
        start += n;
    }
    Ok(out)
}

/// Forward-only colors of image-fit coordinates.
pub fn render_pixels<R: Real>(view: BankView<'_, R>, mlp: &MlpParameters<R>, coords: &[[f64; 2]], ws: &mut Workspace<R>) -> Result<Vec<[R; 3]>> {
    let rows = coords.len();
    if rows == 0 {
        return Ok(Vec::new());
    }
    encode_points(view, coords.iter().map(|c| [c[0], c[1], 0.0]), rows, ws)?;
    ws.dirs.clear();
    mlp.forward_batch(&ws.y, &ws.dirs, rows, &mut ws.cache)?;
    Ok((0..rows).map(|r| ws.cache.color(r)).collect())
}
