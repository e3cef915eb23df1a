//! End-to-end acceptance criteria. Each test prints one `criterion N [PASS]`
//! or `[FAIL]` line on stderr (outside the test harness capture) and they run
//! one at a time.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use mfnerf::encoding::{spatial_hash, FeatureTableBank};
use mfnerf::grid::{index_transform, voxel_corners};
use mfnerf::metrics::psnr;
use mfnerf::raster::Raster;
use mfnerf::renderer::composite::{composite, SampleSpan};
use mfnerf::scene::camera::{Camera, SceneTransform};
use mfnerf::scene::dataset::{Background, RayDataset};
use mfnerf::scene::image2d::make_image2d_dataset;
use mfnerf::scene::oracle::{oracle_rig, render_oracle, OracleScene};
use mfnerf::trainer::{render_image, render_view, train, Task, TaskKind, TrainConfig, TrainOptions};
use mfnerf::{EncodingConfig, TrainState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n} [{verdict}] {detail}");
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mfnerf")
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

/// "# Features" cells of the ablation table, rows N = 1, 2, 4, 8, 16
/// (the last row is the single-table-per-level baseline), columns
/// T = 2^20..2^23, in millions.
const PAPER_TABLE2: [(usize, [&str; 4]); 5] = [
    (1, ["2.10", "4.19", "8.39", "16.78"]),
    (2, ["4.19", "7.00", "11.20", "19.59"]),
    (4, ["6.39", "11.30", "19.69", "36.47"]),
    (8, ["11.16", "20.26", "37.04", "68.64"]),
    (16, ["21.06", "38.55", "70.20", "126.97"]),
];

/// One-table column of the first table, exact scalars for T = 2^20..2^23.
const PAPER_TABLE1: [u64; 4] = [2_097_152, 4_194_304, 8_388_608, 16_777_216];

/// Cells whose printed value disagrees with round-to-nearest of the exact
/// count: 126,975,616 scalars is 126.98 M, printed as 126.97 M, while every
/// other cell (e.g. 2,097,152 -> 2.10) needs round-to-nearest.
const KNOWN_CONFLICTS: [(usize, u32); 1] = [(16, 23)];

#[test]
fn criterion_01_parameter_counts() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "L=16\nF=2\nN_min=16\nN_max=1024\n");
    let out = Command::new(bin()).args(["count-params", "--config"]).arg(&cfg).arg("--table").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut mismatches = Vec::new();
    let mut cells = 0;
    let mut table1_ok = true;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let n: usize = f[0].parse().unwrap();
        let k: u32 = f[1].trim_start_matches("2^").parse().unwrap();
        let scalars: u64 = f[3].parse().unwrap();
        let want = PAPER_TABLE2.iter().find(|r| r.0 == n).unwrap().1[(k - 20) as usize];
        cells += 1;
        if f[4] != want {
            mismatches.push((n, k, f[4].to_string(), want));
        }
        if n == 1 && scalars != PAPER_TABLE1[(k - 20) as usize] {
            table1_ok = false;
        }
    }
    assert_eq!(cells, 20);
    let pass = mismatches.is_empty() && table1_ok;
    let detail = if pass {
        "20/20 table cells and 4/4 single-table counts reproduced".to_string()
    } else {
        let list: Vec<String> = mismatches
            .iter()
            .map(|(n, k, got, want)| format!("N={n} T=2^{k}: computed {got} M, paper {want} M"))
            .collect();
        format!(
            "{}/20 table cells reproduced, single-table counts {}; mismatches: {}",
            20 - mismatches.len(),
            if table1_ok { "4/4" } else { "WRONG" },
            list.join("; ")
        )
    };
    report(1, pass, &detail);
    // anything beyond the documented printing conflict is a regression
    assert!(table1_ok);
    let keys: Vec<(usize, u32)> = mismatches.iter().map(|m| (m.0, m.1)).collect();
    assert_eq!(keys, KNOWN_CONFLICTS.to_vec(), "{detail}");
}

#[test]
fn criterion_02_hash_golden_vectors() {
    let _g = serial();
    let mut total = 0;
    let mut bad = 0;
    for line in include_str!("../../core/tests/fixtures/hash_golden.txt").lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let v: Vec<u64> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        total += 1;
        if spatial_hash([v[0] as u32, v[1] as u32, v[2] as u32], v[3] as u32) != v[4] as u32 {
            bad += 1;
        }
    }
    let pass = total == 64 && bad == 0;
    report(2, pass, &format!("{}/{total} golden vectors bit-exact", total - bad));
    assert!(pass);
}

#[test]
fn criterion_03_index_transformation() {
    let _g = serial();
    let t0 = Instant::now();
    let fig2 = index_transform([2, 2, 0], 2, 4);
    let fig2_ok = fig2[0] == 4 && fig2[1] == 4;
    let mut identity_ok = true;
    for r in 1..=64u32 {
        for i in 0..=r {
            identity_ok &= index_transform([i, r - i, i / 2], r, r) == [i, r - i, i / 2];
        }
    }
    let (mut configs, mut shared, mut broken) = (0u64, 0u64, 0u64);
    for n_max in 2..=32u32 {
        for n_min in 1..=n_max {
            for levels in 2..=4usize {
                for tables in (1..=levels).filter(|t| levels % t == 0) {
                    let Ok(cfg) = EncodingConfig::new(levels, tables, 1 << 14, 2, n_min, n_max) else {
                        continue;
                    };
                    configs += 1;
                    let res = cfg.level_set().unwrap().resolutions;
                    let caps = cfg.table_capacities().unwrap();
                    let w = cfg.levels_per_table();
                    for g in 0..tables {
                        let finest = res[g * w + w - 1];
                        for a in g * w..(g + 1) * w {
                            for b in a + 1..(g + 1) * w {
                                let (ra, rb) = (res[a], res[b]);
                                for i in 0..=ra {
                                    if (i * rb) % ra != 0 {
                                        continue;
                                    }
                                    let j = i * rb / ra;
                                    for corner in [[i, 0, 0], [0, i, 0], [0, 0, i], [i, i, i]] {
                                        let other = corner.map(|c| if c == i { j } else { 0 });
                                        let pa = index_transform(corner, ra, finest);
                                        let pb = index_transform(other, rb, finest);
                                        shared += 1;
                                        if spatial_hash(pa, caps[g] as u32) != spatial_hash(pb, caps[g] as u32) {
                                            broken += 1;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = fig2_ok && identity_ok && broken == 0 && secs < 10.0;
    report(
        3,
        pass,
        &format!(
            "(2,2)->(4,4) {}, identity {}, {shared} shared points over {configs} configs with {broken} inconsistent, {secs:.2} s",
            if fig2_ok { "ok" } else { "WRONG" },
            if identity_ok { "ok" } else { "WRONG" }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_gradient_correctness() {
    let _g = serial();
    let t0 = Instant::now();
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0usize, 0usize);
    for seed in 0..100 {
        let r = support::full_pipeline_check(1000 + seed, 1e-4);
        worst = worst.max(r.worst);
        checked += r.checked;
        skipped += r.skipped;
    }
    let encode_worst = (0..100).map(|s| support::encode_fd_worst(2000 + s)).fold(0.0, f64::max);
    let composite_worst = (0..100).map(|s| support::composite_fd_worst(3000 + s)).fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-3 && encode_worst <= 1e-4 && composite_worst <= 1e-4 && skipped * 20 < checked && secs < 120.0;
    report(
        4,
        pass,
        &format!(
            "full pipeline worst rel {worst:.2e} over {checked} derivatives ({skipped} skipped at ReLU kinks), encode {encode_worst:.2e}, composite {composite_worst:.2e}, {secs:.1} s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_compositing_oracle() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut mass) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = 64;
        let delta: Vec<f32> = (0..n).map(|_| rng.gen_range(1e-3..0.1)).collect();
        let t: Vec<f32> = delta.iter().scan(0.0, |acc, d| { *acc += d; Some(*acc) }).collect();
        let sigma: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..50.0)).collect();
        let color: Vec<[f32; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.gen_range(0.0..1.0))).collect();
        let bg = [1.0f32, 1.0, 1.0];
        let got = composite(SampleSpan { t: &t, delta: &delta, sigma: &sigma, color: &color }, bg, None).unwrap();
        let wide = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        let c64: Vec<[f64; 3]> = color.iter().map(|c| c.map(f64::from)).collect();
        let (want, _) = support::reference_composite(&wide(&delta), &wide(&sigma), &c64, [1.0; 3]);
        for k in 0..3 {
            worst = worst.max((got.color[k] as f64 - want[k]).abs());
        }
        mass = mass.max((got.total_mass() as f64 - 1.0).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && mass <= 1e-5 && secs < 10.0;
    report(5, pass, &format!("1000 rays: max channel error {worst:.2e}, max |sum w + T - 1| {mass:.2e}, {secs:.2} s"));
    assert!(pass);
}

#[test]
fn criterion_06_degenerate_grouping() {
    let _g = serial();
    let cfg = EncodingConfig::new(16, 16, 1 << 19, 2, 16, 1024).unwrap();
    let mut bank = FeatureTableBank::<f32>::init(&cfg, 1337).unwrap();
    for t in bank.tables.iter_mut() {
        for v in t.iter_mut() {
            *v *= 1e4;
        }
    }
    let res = cfg.level_set().unwrap().resolutions;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut equal = 0;
    for _ in 0..1000 {
        let x: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let got = bank.encode(&x).unwrap().y;
        // per-level tables hashed directly, no index transformation
        let mut want = vec![0.0f32; 32];
        for l in 0..16 {
            let size = (bank.tables[l].len() / 2) as u32;
            for (corner, w) in voxel_corners(&x, res[l]).unwrap().iter() {
                let e = spatial_hash(corner, size) as usize;
                for k in 0..2 {
                    want[l * 2 + k] += w * bank.tables[l][e * 2 + k];
                }
            }
        }
        if got.iter().map(|v| v.to_bits()).eq(want.iter().map(|v| v.to_bits())) {
            equal += 1;
        }
    }
    let pass = equal == 1000;
    report(6, pass, &format!("{equal}/1000 points bit-equal to the per-level reference"));
    assert!(pass);
}

fn fit_config() -> (EncodingConfig, TrainConfig) {
    let enc = EncodingConfig::new(8, 2, 1 << 14, 2, 16, 128).unwrap().with_dims(2).unwrap();
    let cfg = TrainConfig {
        task: TaskKind::Image,
        batch_size: 512,
        total_steps: 2000,
        ..TrainConfig::default()
    };
    (enc, cfg)
}

#[test]
fn criterion_07_image_fit() {
    let _g = serial();
    let img = Raster::load_png(&fixture("astronaut128.png"), [0.0; 3]).unwrap();
    assert_eq!((img.width, img.height), (128, 128));
    let task = make_image2d_dataset(img.clone());
    let (enc, cfg) = fit_config();
    let t0 = Instant::now();
    let mut state = TrainState::new(enc, cfg).unwrap();
    train(&mut state, Task::Image(&task), &TrainOptions::default(), |_| {}).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let out = render_image(&state, 128, 128).unwrap();
    let p = psnr(&out, &img, 1.0).unwrap();
    let pass = p >= 30.0 && secs < 60.0;
    report(7, pass, &format!("128x128 fit after 2000 steps: PSNR {p:.2} dB (>= 30), {secs:.1} s single-threaded (< 60)"));
    assert!(pass);
}

fn oracle_run(tables: usize, log2_t: u64, train_set: &RayDataset, test: &[(Camera, Raster)]) -> (f64, u64) {
    let enc = EncodingConfig::new(8, tables, 1 << log2_t, 2, 4, 128).unwrap();
    let entries = mfnerf::encoding::count_parameters(&enc).unwrap().entries;
    let cfg = TrainConfig {
        batch_size: 64,
        total_steps: 5000,
        samples_per_ray: 64,
        color_hidden: vec![64, 64],
        near: 0.05,
        far: 10.0,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(enc, cfg).unwrap();
    train(&mut state, Task::Rays(train_set), &TrainOptions::default(), |_| {}).unwrap();
    let total: f64 = test
        .iter()
        .map(|(cam, img)| psnr(&render_view(&state, cam).unwrap().0, img, 1.0).unwrap())
        .sum();
    (total / test.len() as f64, entries)
}

#[test]
fn criterion_08_toy_oracle_scene() {
    let _g = serial();
    let t0 = Instant::now();
    let scene = OracleScene::standard();
    let (train_cams, test_cams) = oracle_rig(16, 4, 64, 64).unwrap();
    let render = |c: &Camera| render_oracle(&scene, c, &SceneTransform::identity(), 512).unwrap().0;
    let train_imgs: Vec<Raster> = train_cams.iter().map(render).collect();
    let test: Vec<(Camera, Raster)> = test_cams.iter().map(|c| (c.clone(), render(c))).collect();
    let data = RayDataset::new(train_cams, train_imgs, Background::White, SceneTransform::identity()).unwrap();
    let (grouped, grouped_entries) = oracle_run(2, 16, &data, &test);
    let (per_level, per_level_entries) = oracle_run(8, 14, &data, &test);
    let secs = t0.elapsed().as_secs_f64();
    let pass = grouped >= 25.0 && grouped >= per_level - 1.0 && secs < 900.0;
    report(
        8,
        pass,
        &format!(
            "held-out PSNR N=2 {grouped:.2} dB ({grouped_entries} entries) vs N=L=8 {per_level:.2} dB ({per_level_entries} entries), gap {:.2} dB, {secs:.0} s",
            per_level - grouped
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "L=8\nN=2\nT=2^14\nF=2\nN_min=16\nN_max=128\nbatch=512\niters=2000\n",
    );
    let run = |name: &str| {
        let ckpt = dir.path().join(format!("{name}.ckpt"));
        let status = Command::new(bin())
            .args(["train", "--mode", "image2d", "--deterministic", "--seed", "1337", "--config"])
            .arg(&cfg)
            .arg("--data")
            .arg(fixture("astronaut128.png"))
            .arg("--out")
            .arg(&ckpt)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        (std::fs::read(&ckpt).unwrap(), std::fs::read(ckpt.with_extension("csv")).unwrap())
    };
    let (ca, ma) = run("a");
    let (cb, mb) = run("b");
    let pass = ca == cb && ma == mb;
    report(
        9,
        pass,
        &format!(
            "two --deterministic runs: checkpoints {} ({} bytes), metric CSVs {}",
            if ca == cb { "identical" } else { "DIFFER" },
            ca.len(),
            if ma == mb { "identical" } else { "DIFFER" }
        ),
    );
    assert!(pass);
}
