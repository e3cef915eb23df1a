//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use mfnerf::encoding::FeatureTableBank;
use mfnerf::renderer::mlp::{MlpConfig, MlpParameters, DENSITY_CLAMP};
use mfnerf::renderer::sh::eval_unchecked;
use mfnerf::scene::camera::Ray;
use mfnerf::scene::sampling::sample_ray;
use mfnerf::trainer::pipeline::{ray_batch_gradients, SampledRay, Workspace};
use mfnerf::EncodingConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Output of the reference network plus the activation pattern (ReLU signs
/// and whether the raw density sits inside the clamp) that finite
/// differences must not cross.
pub struct RefOut {
    pub sigma: f64,
    pub color: [f64; 3],
    pub pattern: Vec<bool>,
}

fn dense(params: &[f64], offset: usize, inputs: usize, outputs: usize, bias: bool, x: &[f64]) -> Vec<f64> {
    (0..outputs)
        .map(|b| {
            let mut acc = if bias { params[offset + inputs * outputs + b] } else { 0.0 };
            for a in 0..inputs {
                acc += x[a] * params[offset + a * outputs + b];
            }
            acc
        })
        .collect()
}

/// Straightforward matrix-multiply evaluation of the density and color
/// networks from the flat parameter vector.
pub fn reference_forward(mlp: &MlpParameters<f64>, y: &[f64], dir: &[f64]) -> RefOut {
    let layers = mlp.layers();
    let split = mlp.density_layers();
    let mut pattern = Vec::new();
    let mut x = y.to_vec();
    let mut features = Vec::new();
    for (li, l) in layers.iter().enumerate() {
        if li == split {
            features = x.clone();
            x.extend_from_slice(dir);
        }
        let mut out = dense(&mlp.params, l.offset, l.inputs, l.outputs, l.bias, &x);
        if l.relu {
            for v in out.iter_mut() {
                pattern.push(*v > 0.0);
                *v = v.max(0.0);
            }
        }
        x = out;
    }
    let raw = features[0];
    pattern.push(raw.abs() < DENSITY_CLAMP);
    let sigma = raw.clamp(-DENSITY_CLAMP, DENSITY_CLAMP).exp();
    let color = [0, 1, 2].map(|k| 1.0 / (1.0 + (-x[k]).exp()));
    RefOut { sigma, color, pattern }
}

/// Sequential compositing in f64.
pub fn reference_composite(delta: &[f64], sigma: &[f64], color: &[[f64; 3]], bg: [f64; 3]) -> ([f64; 3], f64) {
    let mut trans = 1.0f64;
    let mut out = [0.0; 3];
    for i in 0..delta.len() {
        let alpha = 1.0 - (-sigma[i] * delta[i]).exp();
        for k in 0..3 {
            out[k] += trans * alpha * color[i][k];
        }
        trans *= 1.0 - alpha;
    }
    for k in 0..3 {
        out[k] += trans * bg[k];
    }
    (out, trans)
}

/// Loss `Σ ||Ĉ - C||²` over `rays`, recomputed from scratch, with the
/// concatenated activation pattern of every sample.
pub fn reference_loss(bank: &FeatureTableBank<f64>, mlp: &MlpParameters<f64>, rays: &[SampledRay], bg: [f64; 3]) -> (f64, Vec<bool>) {
    let mut loss = 0.0;
    let mut pattern = Vec::new();
    for ray in rays {
        let dir = eval_unchecked(ray.dir);
        let (mut sig, mut col) = (Vec::new(), Vec::new());
        for p in &ray.samples.positions {
            let y = bank.encode(p).unwrap().y;
            let out = reference_forward(mlp, &y, &dir);
            sig.push(out.sigma);
            col.push(out.color);
            pattern.extend(out.pattern);
        }
        let (c, _) = reference_composite(&ray.samples.delta, &sig, &col, bg);
        loss += (0..3).map(|k| (c[k] - ray.target[k] as f64).powi(2)).sum::<f64>();
    }
    (loss, pattern)
}

/// Random rays entering the unit cube from outside, 8 midpoint samples each.
pub fn random_rays(rng: &mut ChaCha8Rng, count: usize) -> Vec<SampledRay> {
    (0..count)
        .map(|_| {
            let origin: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(-1.0..2.0));
            let origin = [origin[0], origin[1], 2.5];
            let target: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(0.2..0.8));
            let d: [f64; 3] = [0, 1, 2].map(|k| target[k] - origin[k]);
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let dir = d.map(|v| v / n);
            let ray = Ray { origin, dir };
            let samples = sample_ray::<ChaCha8Rng>(&ray, 0.0, 10.0, 8, None).unwrap();
            SampledRay {
                samples,
                dir,
                target: [0, 1, 2].map(|_| rng.gen_range(0.0..1.0)),
            }
        })
        .collect()
}

pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

fn relative(a: f64, n: f64) -> f64 {
    // values below 1e-8 are at the finite-difference noise floor
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Analytic gradients of the fused pipeline (tables and network weights)
/// against central differences of [`reference_loss`] with step `h`.
/// Perturbations that flip any activation pattern are skipped.
pub fn full_pipeline_check(seed: u64, h: f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = rng.gen_range(2..=4);
    let divisors: Vec<usize> = (1..=levels).filter(|d| levels % d == 0).collect();
    let tables = divisors[rng.gen_range(0..divisors.len())];
    let n_min = rng.gen_range(2..5);
    let n_max = n_min * rng.gen_range(1..6);
    let cfg = EncodingConfig::new(levels, tables, 1 << 14, 2, n_min, n_max).unwrap();
    let mut bank = FeatureTableBank::<f64>::zeros(&cfg).unwrap();
    for t in bank.tables.iter_mut() {
        for v in t.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let mlp_cfg = MlpConfig {
        input_dim: cfg.output_dim(),
        density_hidden: vec![8],
        feature_dim: 4,
        color_hidden: vec![8],
        direction_dim: 16,
    };
    let mut mlp = MlpParameters::<f64>::init(mlp_cfg, &mut rng).unwrap();
    for b in mlp.params.iter_mut() {
        *b += rng.gen_range(-0.1..0.1);
    }
    let rays = random_rays(&mut rng, 3);
    let bg = [1.0f32, 1.0, 1.0];
    let bg64 = [1.0; 3];

    let mut ws = Workspace::new();
    let mut mlp_grad = vec![0.0; mlp.len()];
    let (view, grads) = bank.split_grads();
    let loss = ray_batch_gradients(view, &mlp, &rays, bg, &mut ws, &mut mlp_grad, grads).unwrap();
    let (ref_loss, base_pattern) = reference_loss(&bank, &mlp, &rays, bg64);
    assert!((loss - ref_loss).abs() <= 1e-10 * ref_loss.max(1.0), "loss {loss} vs {ref_loss}");

    let mut out = GradCheck { checked: 0, skipped: 0, worst: 0.0 };
    let mut record = |a: f64, up: (f64, Vec<bool>), down: (f64, Vec<bool>)| {
        if up.1 != base_pattern || down.1 != base_pattern {
            out.skipped += 1;
            return;
        }
        let n = (up.0 - down.0) / (2.0 * h);
        out.worst = out.worst.max(relative(a, n));
        out.checked += 1;
    };
    for i in 0..mlp.len() {
        let a = mlp_grad[i];
        let orig = mlp.params[i];
        mlp.params[i] = orig + h;
        let up = reference_loss(&bank, &mlp, &rays, bg64);
        mlp.params[i] = orig - h;
        let down = reference_loss(&bank, &mlp, &rays, bg64);
        mlp.params[i] = orig;
        record(a, up, down);
    }
    for t in 0..cfg.tables {
        for e in bank.grads.touched(t).to_vec() {
            for k in 0..2 {
                let a = bank.grads.entry(t, e)[k];
                let idx = e as usize * 2 + k;
                let orig = bank.tables[t][idx];
                bank.tables[t][idx] = orig + h;
                let up = reference_loss(&bank, &mlp, &rays, bg64);
                bank.tables[t][idx] = orig - h;
                let down = reference_loss(&bank, &mlp, &rays, bg64);
                bank.tables[t][idx] = orig;
                record(a, up, down);
            }
        }
    }
    out
}

/// Worst relative error of `encode_backward` against central differences
/// (step 1e-3) over every touched entry, for one random small config.
pub fn encode_fd_worst(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = rng.gen_range(2..=4);
    let divisors: Vec<usize> = (1..=levels).filter(|d| levels % d == 0).collect();
    let tables = divisors[rng.gen_range(0..divisors.len())];
    let n_min = rng.gen_range(2..6);
    let n_max = n_min * rng.gen_range(1..10);
    let cfg = EncodingConfig::new(levels, tables, 1 << 14, 2, n_min, n_max).unwrap();
    let mut bank = FeatureTableBank::<f64>::zeros(&cfg).unwrap();
    for t in bank.tables.iter_mut() {
        for v in t.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let x: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let dy: Vec<f64> = (0..cfg.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    bank.encode_backward(&x, &dy).unwrap();
    let loss = |b: &FeatureTableBank<f64>| -> f64 { b.encode(&x).unwrap().y.iter().zip(&dy).map(|(a, g)| a * g).sum() };
    let h = 1e-3;
    let mut worst = 0.0f64;
    for t in 0..cfg.tables {
        for e in bank.grads.touched(t).to_vec() {
            for k in 0..2 {
                let idx = e as usize * 2 + k;
                let a = bank.grads.entry(t, e)[k];
                let orig = bank.tables[t][idx];
                bank.tables[t][idx] = orig + h;
                let up = loss(&bank);
                bank.tables[t][idx] = orig - h;
                let down = loss(&bank);
                bank.tables[t][idx] = orig;
                worst = worst.max(relative(a, (up - down) / (2.0 * h)));
            }
        }
    }
    worst
}

/// Worst relative error of `composite_backward` against central differences
/// (step 1e-3) for one random 16-sample ray.
pub fn composite_fd_worst(seed: u64) -> f64 {
    use mfnerf::renderer::composite::{composite, composite_backward, SampleSpan};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 16;
    let delta: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..0.1)).collect();
    let t: Vec<f64> = delta.iter().scan(0.0, |acc, d| { *acc += d; Some(*acc) }).collect();
    let mut sigma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..20.0)).collect();
    let mut color: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.gen_range(0.0..1.0))).collect();
    let bg = [0.3, 0.5, 0.9];
    let g = [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0));
    let span = SampleSpan { t: &t, delta: &delta, sigma: &sigma, color: &color };
    let fwd = composite(span, bg, None).unwrap();
    let (ds, dc) = composite_backward(span, &fwd, g).unwrap();
    let loss = |s: &[f64], c: &[[f64; 3]]| {
        let (out, _) = reference_composite(&delta, s, c, bg);
        out[0] * g[0] + out[1] * g[1] + out[2] * g[2]
    };
    let h = 1e-3;
    let mut worst = 0.0f64;
    for i in 0..n {
        let orig = sigma[i];
        sigma[i] = orig + h;
        let up = loss(&sigma, &color);
        sigma[i] = orig - h;
        let down = loss(&sigma, &color);
        sigma[i] = orig;
        worst = worst.max(relative(ds[i], (up - down) / (2.0 * h)));
        for k in 0..3 {
            let orig = color[i][k];
            color[i][k] = orig + h;
            let up = loss(&sigma, &color);
            color[i][k] = orig - h;
            let down = loss(&sigma, &color);
            color[i][k] = orig;
            worst = worst.max(relative(dc[i][k], (up - down) / (2.0 * h)));
        }
    }
    worst
}
