//! Flat `key=value` run configuration files.
//!
//! ```text
//! # comments start with '#'
//! L=16
//! N=8
//! T=2^19
//! F=2
//! N_min=16
//! N_max=1024
//! lr=2e-2
//! decay=1e-2
//! iters=20000
//! batch=4096
//! ```
//!
//! Encoding keys: `L`, `N`, `T` (integer or `2^k`), `F`, `N_min`, `N_max`.
//! Training keys: `lr`, `lr_final` or `decay` (`lr_final = lr * decay`),
//! `iters`, `batch`, `samples`, `seed`, `log_every`. Scene keys: `scale`
//! (half-extent of the scene box mapped onto the unit cube), `background`,
//! `near`, `far`. Network keys: `density_hidden`, `feature_dim`,
//! `color_hidden` (comma-separated widths). Oracle-scene keys: `views`,
//! `held_out`, `width`, `height`, `oracle_samples`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::EncodingConfig;
use crate::scene::dataset::Background;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub encoding: EncodingConfig,
    pub train: TrainConfig,
    pub scale: Option<f64>,
    pub background: Option<Background>,
    pub oracle: OracleViews,
}

/// Camera rig used when training directly on the procedural scene.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleViews {
    pub views: usize,
    pub held_out: usize,
    pub width: u32,
    pub height: u32,
    pub samples: usize,
}

impl Default for OracleViews {
    fn default() -> Self {
        Self {
            views: 16,
            held_out: 4,
            width: 64,
            height: 64,
            samples: 512,
        }
    }
}

const KEYS: &[&str] = &[
    "L",
    "N",
    "T",
    "F",
    "N_min",
    "N_max",
    "lr",
    "lr_final",
    "decay",
    "iters",
    "batch",
    "samples",
    "seed",
    "log_every",
    "scale",
    "background",
    "near",
    "far",
    "density_hidden",
    "feature_dim",
    "color_hidden",
    "views",
    "held_out",
    "width",
    "height",
    "oracle_samples",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parse(format!("{key}: cannot parse {v:?}")))
}

/// Integer, or `2^k`.
fn parse_table_size(v: &str) -> Result<u64> {
    if let Some(exp) = v.strip_prefix("2^") {
        let k: u32 = parse_num("T", exp)?;
        return 1u64
            .checked_shl(k)
            .filter(|_| k < 64)
            .ok_or_else(|| Error::Parse(format!("T: 2^{k} overflows")));
    }
    parse_num("T", v)
}

fn parse_widths(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|w| parse_num(key, w.trim())).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Parse(format!("line {}: unknown key {k:?}", i + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);

        let d = EncodingConfig::default();
        let encoding = EncodingConfig::new(
            get("L").map(|v| parse_num("L", v)).transpose()?.unwrap_or(d.levels),
            get("N").map(|v| parse_num("N", v)).transpose()?.unwrap_or(d.tables),
            get("T").map(parse_table_size).transpose()?.unwrap_or(d.table_size),
            get("F").map(|v| parse_num("F", v)).transpose()?.unwrap_or(d.features),
            get("N_min").map(|v| parse_num("N_min", v)).transpose()?.unwrap_or(d.min_resolution),
            get("N_max").map(|v| parse_num("N_max", v)).transpose()?.unwrap_or(d.max_resolution),
        )?;

        let mut train = TrainConfig::default();
        if let Some(v) = get("lr") {
            train.lr_init = parse_num("lr", v)?;
        }
        match (get("lr_final"), get("decay")) {
            (Some(_), Some(_)) => return Err(Error::Parse("give either lr_final or decay, not both".into())),
            (Some(v), None) => train.lr_final = parse_num("lr_final", v)?,
            (None, Some(v)) => train.lr_final = train.lr_init * parse_num::<f64>("decay", v)?,
            (None, None) => train.lr_final = train.lr_init * 1e-2,
        }
        if let Some(v) = get("iters") {
            train.total_steps = parse_num("iters", v)?;
        }
        if let Some(v) = get("batch") {
            train.batch_size = parse_num("batch", v)?;
        }
        if let Some(v) = get("samples") {
            train.samples_per_ray = parse_num("samples", v)?;
        }
        if let Some(v) = get("seed") {
            train.seed = parse_num("seed", v)?;
        }
        if let Some(v) = get("log_every") {
            train.log_every = parse_num("log_every", v)?;
        }
        if let Some(v) = get("near") {
            train.near = parse_num("near", v)?;
        }
        if let Some(v) = get("far") {
            train.far = parse_num("far", v)?;
        }
        if let Some(v) = get("density_hidden") {
            train.density_hidden = parse_widths("density_hidden", v)?;
        }
        if let Some(v) = get("feature_dim") {
            train.feature_dim = parse_num("feature_dim", v)?;
        }
        if let Some(v) = get("color_hidden") {
            train.color_hidden = parse_widths("color_hidden", v)?;
        }
        let background = get("background").map(Background::parse).transpose()?;
        if let Some(bg) = background {
            train.background = bg;
        }
        train.validate()?;

        let scale = get("scale").map(|v| parse_num::<f64>("scale", v)).transpose()?;
        if scale.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::config("scale must be positive"));
        }
        let mut oracle = OracleViews::default();
        if let Some(v) = get("views") {
            oracle.views = parse_num("views", v)?;
        }
        if let Some(v) = get("held_out") {
            oracle.held_out = parse_num("held_out", v)?;
        }
        if let Some(v) = get("width") {
            oracle.width = parse_num("width", v)?;
        }
        if let Some(v) = get("height") {
            oracle.height = parse_num("height", v)?;
        }
        if let Some(v) = get("oracle_samples") {
            oracle.samples = parse_num("oracle_samples", v)?;
        }
        Ok(Self {
            encoding,
            train,
            scale,
            background,
            oracle,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_encoding_and_training_keys() {
        let cfg = RunConfig::parse("L=8\nN=2\nT=2^14 # small\nF=2\nN_min=16\nN_max=128\nlr=1e-2\ndecay=0.5\niters=7\nbatch=3\ncolor_hidden=32, 32\n").unwrap();
        assert_eq!(cfg.encoding, EncodingConfig::new(8, 2, 1 << 14, 2, 16, 128).unwrap());
        assert_eq!(cfg.train.lr_final, 5e-3);
        assert_eq!(cfg.train.total_steps, 7);
        assert_eq!(cfg.train.batch_size, 3);
        assert_eq!(cfg.train.color_hidden, vec![32, 32]);
    }

    #[test]
    fn defaults_follow_the_paper_settings() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.train.lr_init, 2e-2);
        assert!((cfg.train.lr_final - 2e-4).abs() < 1e-18);
        assert_eq!(cfg.train.seed, 1337);
    }

    #[test]
    fn invalid_inputs() {
        let err = RunConfig::parse("L=16\nN=3\n").unwrap_err();
        assert_eq!(err.to_string(), "L must be divisible by N");
        assert!(RunConfig::parse("bogus=1").is_err());
        assert!(RunConfig::parse("L").is_err());
        assert!(RunConfig::parse("L=4\nL=4").is_err());
        assert!(RunConfig::parse("T=2^99").is_err());
    }
}
