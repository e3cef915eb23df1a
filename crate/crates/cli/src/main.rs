//! `mfnerf` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use mfnerf::config::{OracleViews, RunConfig};
use mfnerf::encoding::{collision_stats, count_parameters};
use mfnerf::metrics::{format_sig9, psnr, ssim};
use mfnerf::raster::Raster;
use mfnerf::scene::camera::{Camera, SceneTransform};
use mfnerf::scene::dataset::{load_nerf_synthetic, write_nerf_synthetic, Background, RayDataset};
use mfnerf::scene::oracle::{oracle_rig, render_oracle, OracleScene};
use mfnerf::scene::image2d::make_image2d_dataset;
use mfnerf::trainer::{
    load_checkpoint, metrics_csv, render_image, render_view, save_checkpoint, train, MetricRow, Task, TaskKind,
    TrainOptions,
};
use mfnerf::{Error, TrainState};

/// Default half-extent of synthetic benchmark scenes.
const SYNTHETIC_SCALE: f64 = 1.5;

#[derive(Parser)]
#[command(name = "mfnerf", version, about = "Mixed-feature hash encoding for radiance fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Nerf3d,
    Image2d,
    Oracle3d,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a metrics CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory (nerf3d), image file (image2d) or scene file (oracle3d).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Serial execution and no timing columns; bit-reproducible output.
        #[arg(long)]
        deterministic: bool,
        /// Metrics CSV path (default: the checkpoint path with a .csv extension).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Render one view of a trained model to PNG.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        /// Camera index into --data, or a JSON file with camera_angle_x,
        /// transform_matrix, width and height. Ignored for image models.
        #[arg(long)]
        pose: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// PSNR and SSIM per image of a split, plus means.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entries, scalars and bytes per table and in total.
    CountParams {
        #[arg(long)]
        config: PathBuf,
        /// Print the grid N in {1,2,4,8,16} x T in {2^20..2^23} instead.
        #[arg(long)]
        table: bool,
    },
    /// Occupancy histograms from hashing a probe lattice.
    HashStats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        probe: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render train/test splits of a procedural scene in the transforms layout.
    OracleViews {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        views: usize,
        #[arg(long, default_value_t = 4)]
        held_out: usize,
        #[arg(long, default_value_t = 64)]
        size: u32,
        #[arg(long, default_value_t = 512)]
        samples: usize,
    },
}

enum Failure {
    Data(Error),
    Diverged(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } => Failure::Diverged(e),
            other => Failure::Data(other),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", single_line(&e));
            ExitCode::from(2)
        }
        Err(Failure::Diverged(e)) => {
            eprintln!("error: {}", single_line(&e));
            ExitCode::from(3)
        }
    }
}

fn single_line(e: &Error) -> String {
    e.to_string().replace('\n', " ")
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Train {
            config,
            data,
            mode,
            out,
            seed,
            deterministic,
            metrics,
        } => cmd_train(&config, &data, mode, &out, seed, deterministic, metrics),
        Command::Render {
            ckpt,
            pose,
            out,
            data,
            split,
        } => cmd_render(&ckpt, pose.as_deref(), &out, data.as_deref(), &split),
        Command::Eval { ckpt, data, split, out } => cmd_eval(&ckpt, &data, &split, &out),
        Command::CountParams { config, table } => cmd_count(&config, table),
        Command::HashStats { config, probe, out } => cmd_hash_stats(&config, probe, &out),
        Command::OracleViews {
            scene,
            out,
            views,
            held_out,
            size,
            samples,
        } => cmd_oracle_views(&scene, &out, views, held_out, size, samples),
    }
}

fn threads_from_env(deterministic: bool) -> CliResult<Option<usize>> {
    if deterministic {
        return Ok(None);
    }
    match std::env::var("MF_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("MF_THREADS: cannot parse {v:?}")))?;
            Ok((n > 0).then_some(n))
        }
        Err(_) => Ok(Some(0)),
    }
}

fn file_in(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

fn load_scene(path: &Path) -> CliResult<OracleScene> {
    let path = file_in(path, "scene.txt");
    if !path.exists() {
        return Err(Error::MissingFile(path).into());
    }
    Ok(OracleScene::parse(&fs::read_to_string(&path).map_err(Error::from)?)?)
}

fn oracle_dataset(scene: &OracleScene, views: &OracleViews, held_out: bool) -> CliResult<RayDataset> {
    let (train, test) = oracle_rig(views.views, views.held_out, views.width, views.height)?;
    let cams = if held_out { test } else { train };
    let images = cams
        .iter()
        .map(|c| render_oracle(scene, c, &SceneTransform::identity(), views.samples).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RayDataset::new(cams, images, scene.background, SceneTransform::identity())?)
}

fn cmd_train(
    config: &Path,
    data: &Path,
    mode: Mode,
    out: &Path,
    seed: Option<u64>,
    deterministic: bool,
    metrics: Option<PathBuf>,
) -> CliResult {
    let run = RunConfig::load(config)?;
    let mut cfg = run.train.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut encoding = run.encoding.clone();
    let image_task;
    let ray_task;
    let task = match mode {
        Mode::Image2d => {
            cfg.task = TaskKind::Image;
            cfg.background = run.background.unwrap_or(Background::Black);
            encoding = encoding.with_dims(2)?;
            let img = Raster::load_png(&file_in(data, "image.png"), cfg.background.rgb())?;
            cfg.image_size = (img.width as u32, img.height as u32);
            image_task = make_image2d_dataset(img);
            Task::Image(&image_task)
        }
        Mode::Nerf3d => {
            cfg.background = run.background.unwrap_or(Background::White);
            cfg.transform = SceneTransform::centered(run.scale.unwrap_or(SYNTHETIC_SCALE));
            ray_task = load_nerf_synthetic(data, "train", cfg.background, cfg.transform)?;
            if let Some(cam) = ray_task.cameras.first() {
                cfg.near = cam.near;
                cfg.far = cam.far;
            }
            Task::Rays(&ray_task)
        }
        Mode::Oracle3d => {
            let scene = load_scene(data)?;
            cfg.background = scene.background;
            ray_task = oracle_dataset(&scene, &run.oracle, false)?;
            if let Some(cam) = ray_task.cameras.first() {
                cfg.near = cam.near;
                cfg.far = cam.far;
            }
            Task::Rays(&ray_task)
        }
    };
    let options = TrainOptions {
        threads: threads_from_env(deterministic)?,
        timing: !deterministic,
    };
    let mut state = TrainState::new(encoding, cfg)?;
    let mut rows: Vec<MetricRow> = Vec::new();
    let result = train(&mut state, task, &options, |r| rows.push(r.clone()));
    let metrics_path = metrics.unwrap_or_else(|| out.with_extension("csv"));
    // on divergence the state holds the last good parameters; keep them
    save_checkpoint(&state, out)?;
    fs::write(&metrics_path, metrics_csv(&rows)).map_err(Error::from)?;
    result?;
    if let Some(last) = rows.last() {
        println!(
            "trained {} steps; step {} loss {} psnr {}",
            state.step,
            last.step,
            format_sig9(last.loss),
            format_sig9(last.psnr)
        );
    } else {
        println!("trained {} steps", state.step);
    }
    Ok(())
}

fn camera_from_pose_file(path: &Path, state: &TrainState) -> CliResult<Camera> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()).into());
    }
    let v: Value = serde_json::from_str(&fs::read_to_string(path).map_err(Error::from)?).map_err(Error::from)?;
    let num = |k: &str| {
        v[k].as_f64()
            .ok_or_else(|| Error::Parse(format!("{}: missing {k}", path.display())))
    };
    let mut m = [[0.0; 4]; 4];
    let rows = v["transform_matrix"]
        .as_array()
        .filter(|r| r.len() == 4)
        .ok_or_else(|| Error::MalformedTransform("transform_matrix must be 4x4".into()))?;
    for (i, row) in rows.iter().enumerate() {
        for j in 0..4 {
            m[i][j] = row[j]
                .as_f64()
                .ok_or_else(|| Error::MalformedTransform("transform_matrix must be 4x4 numbers".into()))?;
        }
    }
    let near = v["near"].as_f64().unwrap_or(state.config.near);
    let far = v["far"].as_f64().unwrap_or(state.config.far);
    Ok(Camera::new(m, num("camera_angle_x")?, num("width")? as u32, num("height")? as u32, near, far)?)
}

fn cmd_render(ckpt: &Path, pose: Option<&str>, out: &Path, data: Option<&Path>, split: &str) -> CliResult {
    let state = load_checkpoint(ckpt)?;
    if state.config.task == TaskKind::Image {
        let (w, h) = state.config.image_size;
        render_image(&state, w as usize, h as usize)?.save_png(out)?;
        return Ok(());
    }
    let pose = pose.ok_or_else(|| Error::Parse("--pose is required for 3D models".into()))?;
    let camera = match pose.parse::<usize>() {
        Ok(index) => {
            let dir = data.ok_or_else(|| Error::Parse("--pose <index> needs --data".into()))?;
            let ds = load_nerf_synthetic(dir, split, state.config.background, state.config.transform)?;
            ds.cameras
                .get(index)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("pose index {index} out of range (split has {})", ds.len())))?
        }
        Err(_) => camera_from_pose_file(Path::new(pose), &state)?,
    };
    render_view(&state, &camera)?.0.save_png(out)?;
    Ok(())
}

fn cmd_eval(ckpt: &Path, data: &Path, split: &str, out: &Path) -> CliResult {
    let state = load_checkpoint(ckpt)?;
    let mut pairs: Vec<(String, Raster, Raster)> = Vec::new();
    match state.config.task {
        TaskKind::Image => {
            let target = Raster::load_png(&file_in(data, "image.png"), state.config.background.rgb())?;
            let rendered = render_image(&state, target.width, target.height)?;
            pairs.push(("0".into(), rendered, target));
        }
        TaskKind::Rays => {
            let ds = if data.is_file() {
                let scene = load_scene(data)?;
                oracle_dataset(&scene, &OracleViews::default(), split == "test")?
            } else {
                load_nerf_synthetic(data, split, state.config.background, state.config.transform)?
            };
            for (i, (cam, target)) in ds.cameras.iter().zip(&ds.images).enumerate() {
                pairs.push((i.to_string(), render_view(&state, cam)?.0, target.clone()));
            }
        }
    }
    let mut csv = String::from("image,psnr,ssim\n");
    let (mut sum_p, mut sum_s, mut n_s) = (0.0, 0.0, 0usize);
    for (name, rendered, target) in &pairs {
        let p = psnr(rendered, target, 1.0)?;
        let s = match ssim(rendered, target, 1.0) {
            Ok(v) => Some(v),
            Err(Error::ImageTooSmall { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        sum_p += p;
        if let Some(v) = s {
            sum_s += v;
            n_s += 1;
        }
        csv.push_str(&format!(
            "{name},{},{}\n",
            format_sig9(p),
            s.map(format_sig9).unwrap_or_default()
        ));
    }
    let mean_p = sum_p / pairs.len().max(1) as f64;
    let mean_s = if n_s > 0 { format_sig9(sum_s / n_s as f64) } else { String::new() };
    csv.push_str(&format!("mean,{},{}\n", format_sig9(mean_p), mean_s));
    fs::write(out, &csv).map_err(Error::from)?;
    println!("mean psnr {} over {} images", format_sig9(mean_p), pairs.len());
    Ok(())
}

/// `scalars / 10^6` rounded half-up to two decimals, in integer arithmetic.
fn millions(scalars: u64) -> String {
    let hundredths = (scalars + 5_000) / 10_000;
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

fn cmd_count(config: &Path, table: bool) -> CliResult {
    let run = RunConfig::load(config)?;
    if table {
        println!("N,T,entries,scalars,millions");
        for n in [1usize, 2, 4, 8, 16] {
            for k in 20..=23u32 {
                let mut enc = run.encoding.clone();
                enc.tables = n;
                enc.table_size = 1 << k;
                let count = count_parameters(&enc)?;
                println!("{n},2^{k},{},{},{}", count.entries, count.scalars, millions(count.scalars));
            }
        }
        return Ok(());
    }
    let count = count_parameters(&run.encoding)?;
    let f = run.encoding.features as u64;
    println!("table,entries,scalars,bytes");
    for (i, &entries) in count.per_table.iter().enumerate() {
        println!("{},{},{},{}", i + 1, entries, entries * f, entries * f * 4);
    }
    println!("total,{},{},{}", count.entries, count.scalars, count.bytes());
    Ok(())
}

fn cmd_hash_stats(config: &Path, probe: u32, out: &Path) -> CliResult {
    let run = RunConfig::load(config)?;
    let stats = collision_stats(&run.encoding, probe)?;
    let mut csv = String::from("table,capacity,probes,hits,entries\n");
    for s in &stats {
        for (hits, entries) in &s.histogram {
            csv.push_str(&format!("{},{},{},{},{}\n", s.table + 1, s.capacity, s.probes, hits, entries));
        }
        println!(
            "table {}: capacity {} probes {} occupied {} multi-hit {} load {}",
            s.table + 1,
            s.capacity,
            s.probes,
            s.occupied(),
            s.multi_hit_entries(),
            format_sig9(s.load_factor())
        );
    }
    fs::write(out, csv).map_err(Error::from)?;
    Ok(())
}

fn cmd_oracle_views(scene: &Path, out: &Path, views: usize, held_out: usize, size: u32, samples: usize) -> CliResult {
    let scene = load_scene(scene)?;
    let (train_cams, test_cams) = oracle_rig(views, held_out, size, size)?;
    for (split, cams) in [("train", train_cams), ("test", test_cams)] {
        let mut images = Vec::with_capacity(cams.len());
        let mut centered = Vec::with_capacity(cams.len());
        for cam in &cams {
            images.push(render_oracle(&scene, cam, &SceneTransform::identity(), samples)?.0);
            // store poses centered on the origin so `scale=0.5` maps them back
            let mut c = cam.clone();
            for row in c.c2w.iter_mut().take(3) {
                row[3] -= 0.5;
            }
            centered.push(c);
        }
        write_nerf_synthetic(out, split, &centered, &images, None)?;
    }
    fs::write(out.join("scene.txt"), scene.to_text()).map_err(Error::from)?;
    println!("wrote {} train and {} test views to {}", views, held_out, out.display());
    Ok(())
}
