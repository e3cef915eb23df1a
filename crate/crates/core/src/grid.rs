//! Grid geometry: level resolutions, voxel corners and the cross-level index
//! transformation.
//!
//! Levels and tables are numbered from 1 in the free functions that mirror the
//! textbook definitions ([`level_resolution`], [`group_capacity`]); the cached
//! vectors on [`GridLevelSet`] and [`EncodingConfig`] are 0-based.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MIN_TABLE_SIZE: u64 = 1 << 14;
pub const MAX_TABLE_SIZE: u64 = 1 << 24;

/// Relative nudge applied before flooring `N_min * b^(l-1)` so that values
/// like 63.999999 land on the analytically exact integer.
const RESOLUTION_EPS: f64 = 1e-9;

/// Points may sit this far outside `[0, 1]` and still be clamped in.
const DOMAIN_TOLERANCE: f64 = 1e-9;

/// Encoding hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingConfig {
    /// `L`, number of grid levels.
    pub levels: usize,
    /// `N`, number of shared hash tables.
    pub tables: usize,
    /// `T`, maximum entries per table.
    pub table_size: u64,
    /// `F`, features per entry.
    pub features: usize,
    /// `N_min`, resolution of the coarsest level.
    pub min_resolution: u32,
    /// `N_max`, resolution of the finest level.
    pub max_resolution: u32,
    /// Spatial dimension of the query domain, 2 or 3.
    pub dims: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            levels: 16,
            tables: 8,
            table_size: 1 << 19,
            features: 2,
            min_resolution: 16,
            max_resolution: 1024,
            dims: 3,
        }
    }
}

impl EncodingConfig {
    pub fn new(
        levels: usize,
        tables: usize,
        table_size: u64,
        features: usize,
        min_resolution: u32,
        max_resolution: u32,
    ) -> Result<Self> {
        let config = Self {
            levels,
            tables,
            table_size,
            features,
            min_resolution,
            max_resolution,
            dims: 3,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_dims(mut self, dims: usize) -> Result<Self> {
        self.dims = dims;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::config("L must be at least 2"));
        }
        if self.tables < 1 || self.tables > self.levels {
            return Err(Error::config("N must be in 1..=L"));
        }
        if self.levels % self.tables != 0 {
            return Err(Error::config("L must be divisible by N"));
        }
        if !self.table_size.is_power_of_two()
            || self.table_size < MIN_TABLE_SIZE
            || self.table_size > MAX_TABLE_SIZE
        {
            return Err(Error::config("T must be a power of two in 2^14..=2^24"));
        }
        if self.features < 1 {
            return Err(Error::config("F must be at least 1"));
        }
        if self.min_resolution < 1 {
            return Err(Error::config("N_min must be at least 1"));
        }
        if self.max_resolution < self.min_resolution {
            return Err(Error::config("N_max must be at least N_min"));
        }
        if self.dims != 2 && self.dims != 3 {
            return Err(Error::config("dims must be 2 or 3"));
        }
        Ok(())
    }

    /// `W = L / N`, levels sharing one table.
    pub fn levels_per_table(&self) -> usize {
        self.levels / self.tables
    }

    /// Length of the concatenated feature vector, `L * F`.
    pub fn output_dim(&self) -> usize {
        self.levels * self.features
    }

    pub fn level_set(&self) -> Result<GridLevelSet> {
        self.validate()?;
        GridLevelSet::new(self.min_resolution, self.max_resolution, self.levels)
    }

    /// 0-based table that level `level` (0-based) writes into.
    pub fn table_of_level(&self, level: usize) -> usize {
        level / self.levels_per_table()
    }

    /// 0-based finest level of 0-based table `table`.
    pub fn finest_level_of_table(&self, table: usize) -> usize {
        (table + 1) * self.levels_per_table() - 1
    }

    /// Entry counts of every table, in table order.
    pub fn table_capacities(&self) -> Result<Vec<u64>> {
        let set = self.level_set()?;
        Ok((0..self.tables)
            .map(|t| capacity_for(self, set.resolutions[self.finest_level_of_table(t)]))
            .collect())
    }
}

fn capacity_for(config: &EncodingConfig, finest_resolution: u32) -> u64 {
    let side = finest_resolution as u64 + 1;
    // side <= 2^32, so checked math keeps the cube honest for any u32 resolution
    let cube = (0..config.dims).try_fold(1u64, |acc, _| acc.checked_mul(side));
    match cube {
        Some(c) => c.min(config.table_size),
        None => config.table_size,
    }
}

/// Growth factor `b = (N_max / N_min)^(1 / (L - 1))`.
pub fn compute_growth_factor(min_resolution: u32, max_resolution: u32, levels: usize) -> Result<f64> {
    if levels < 2 {
        return Err(Error::config("L must be at least 2"));
    }
    if min_resolution < 1 || max_resolution < min_resolution {
        return Err(Error::config("N_max must be at least N_min"));
    }
    let ratio = max_resolution as f64 / min_resolution as f64;
    Ok(ratio.powf(1.0 / (levels as f64 - 1.0)))
}

/// `N_l = floor(N_min * b^(l-1))` for 1-based `level` in `1..=levels`.
pub fn level_resolution(level: usize, levels: usize, min_resolution: u32, growth: f64) -> Result<u32> {
    if level < 1 || level > levels {
        return Err(Error::InvalidLevel { level, levels });
    }
    let raw = min_resolution as f64 * growth.powi(level as i32 - 1);
    Ok((raw * (1.0 + RESOLUTION_EPS)).floor() as u32)
}

/// Growth factor and per-level resolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLevelSet {
    pub growth: f64,
    pub resolutions: Vec<u32>,
}

impl GridLevelSet {
    pub fn new(min_resolution: u32, max_resolution: u32, levels: usize) -> Result<Self> {
        let growth = compute_growth_factor(min_resolution, max_resolution, levels)?;
        let resolutions = (1..=levels)
            .map(|l| level_resolution(l, levels, min_resolution, growth))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { growth, resolutions })
    }
}

/// Integer corner coordinates within one level's grid. Unused axes are 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridIndex {
    /// 1-based level.
    pub level: usize,
    pub coords: [u32; 3],
}

/// The `2^dims` corners of the voxel containing a query point and their
/// multilinear weights.
///
/// Corner `c` offsets axis `a` by `(c >> a) & 1` from the base corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CornerSet<R> {
    pub corners: [[u32; 3]; 8],
    pub weights: [R; 8],
    pub len: usize,
}

impl<R: Real> CornerSet<R> {
    pub fn iter(&self) -> impl Iterator<Item = ([u32; 3], R)> + '_ {
        self.corners[..self.len]
            .iter()
            .copied()
            .zip(self.weights[..self.len].iter().copied())
    }
}

/// Corners and interpolation weights of the voxel containing `x` on a grid of
/// resolution `resolution`. `x` has 2 or 3 components in `[0, 1]`.
///
/// Corner coordinates range over `0..=resolution`; a point on the upper
/// boundary is assigned to the last voxel with its full weight on the upper
/// corner.
pub fn voxel_corners<R: Real>(x: &[R], resolution: u32) -> Result<CornerSet<R>> {
    let dims = x.len();
    if !(2..=3).contains(&dims) || resolution < 1 {
        return Err(Error::ShapeMismatch { expected: 3, got: dims });
    }
    let tol = R::lit(DOMAIN_TOLERANCE);
    let mut base = [0u32; 3];
    let mut frac = [R::zero(); 3];
    let res = R::from_u32(resolution).expect("resolution fits");
    for a in 0..dims {
        let xa = x[a];
        if !(xa >= -tol && xa <= R::one() + tol) {
            return Err(Error::OutOfDomain(x.iter().map(|v| v.to_f64_lossy()).collect()));
        }
        let xa = xa.max(R::zero()).min(R::one());
        let scaled = xa * res;
        let cell = scaled.floor().to_u32().unwrap_or(0).min(resolution - 1);
        base[a] = cell;
        frac[a] = scaled - R::from_u32(cell).expect("cell fits");
    }
    let len = 1usize << dims;
    let mut out = CornerSet {
        corners: [[0; 3]; 8],
        weights: [R::zero(); 8],
        len,
    };
    for c in 0..len {
        let mut w = R::one();
        for a in 0..dims {
            let upper = (c >> a) & 1 == 1;
            out.corners[c][a] = base[a] + upper as u32;
            w = w * if upper { frac[a] } else { R::one() - frac[a] };
        }
        out.weights[c] = w;
    }
    Ok(out)
}

/// Rescales corner coordinates from a grid of resolution `from` into a grid
/// of resolution `to`: `floor(I * to / from)`, in exact integer arithmetic.
#[inline]
pub fn index_transform(coords: [u32; 3], from: u32, to: u32) -> [u32; 3] {
    if from == to {
        return coords;
    }
    let scale = |c: u32| ((c as u64 * to as u64) / from as u64) as u32;
    [scale(coords[0]), scale(coords[1]), scale(coords[2])]
}

/// Entry count of 1-based table `table`: `min(T, (N_{table * W} + 1)^dims)`.
pub fn group_capacity(config: &EncodingConfig, table: usize) -> Result<u64> {
    config.validate()?;
    if table < 1 || table > config.tables {
        return Err(Error::config(format!("table {table} out of range 1..={}", config.tables)));
    }
    let set = config.level_set()?;
    Ok(capacity_for(config, set.resolutions[config.finest_level_of_table(table - 1)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard(tables: usize) -> EncodingConfig {
        EncodingConfig::new(16, tables, 1 << 20, 2, 16, 1024).unwrap()
    }

    #[test]
    fn growth_factor_examples() {
        let b = compute_growth_factor(16, 1024, 16).unwrap();
        // 64^(1/15), checked against a 30-digit evaluation
        assert!((b - 1.319_507_910_772_894_2).abs() < 1e-12);
        assert_eq!(compute_growth_factor(16, 16, 2).unwrap(), 1.0);
        assert_eq!(compute_growth_factor(2, 8, 3).unwrap(), 2.0);
        assert!(compute_growth_factor(16, 8, 4).is_err());
        assert!(compute_growth_factor(16, 32, 1).is_err());
    }

    #[test]
    fn standard_resolutions() {
        let set = GridLevelSet::new(16, 1024, 16).unwrap();
        assert_eq!(
            set.resolutions,
            vec![16, 21, 27, 36, 48, 64, 84, 111, 147, 194, 256, 337, 445, 588, 776, 1024]
        );
        assert_eq!(level_resolution(1, 16, 16, set.growth).unwrap(), 16);
        assert_eq!(level_resolution(8, 16, 16, set.growth).unwrap(), 111);
        assert_eq!(level_resolution(16, 16, 16, set.growth).unwrap(), 1024);
        assert!(matches!(
            level_resolution(17, 16, 16, set.growth),
            Err(Error::InvalidLevel { level: 17, .. })
        ));
        assert!(level_resolution(0, 16, 16, set.growth).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EncodingConfig::new(16, 3, 1 << 20, 2, 16, 1024)
            .unwrap_err()
            .to_string()
            .contains("L must be divisible by N"));
        assert!(EncodingConfig::new(16, 17, 1 << 20, 2, 16, 1024).is_err());
        assert!(EncodingConfig::new(16, 4, 1 << 13, 2, 16, 1024).is_err());
        assert!(EncodingConfig::new(16, 4, 1 << 25, 2, 16, 1024).is_err());
        assert!(EncodingConfig::new(16, 4, 3 << 14, 2, 16, 1024).is_err());
        assert!(EncodingConfig::new(1, 1, 1 << 14, 2, 16, 1024).is_err());
        assert!(EncodingConfig::new(4, 1, 1 << 14, 0, 16, 1024).is_err());
        assert!(EncodingConfig::new(4, 1, 1 << 14, 2, 0, 1024).is_err());
        assert!(EncodingConfig::new(4, 1, 1 << 14, 2, 64, 32).is_err());
        assert_eq!(standard(8).levels_per_table(), 2);
    }

    #[test]
    fn corners_at_exact_grid_point() {
        let cs = voxel_corners(&[0.0f64, 0.0, 0.0], 4).unwrap();
        assert_eq!(cs.corners[0], [0, 0, 0]);
        assert_eq!(cs.weights[0], 1.0);
        assert!(cs.weights[1..].iter().all(|&w| w == 0.0));
    }

    #[test]
    fn corners_at_voxel_center() {
        let cs = voxel_corners(&[0.5f64, 0.5, 0.5], 1).unwrap();
        assert_eq!(cs.len, 8);
        assert!(cs.weights.iter().all(|&w| w == 0.125));
        assert_eq!(cs.corners[7], [1, 1, 1]);
    }

    #[test]
    fn corners_brute_force_weights() {
        let x = [0.3f64, 0.7, 0.1];
        let cs = voxel_corners(&x, 16).unwrap();
        // s = (4.8, 11.2, 1.6) -> base (4, 11, 1), fractions (0.8, 0.2, 0.6)
        assert_eq!(cs.corners[0], [4, 11, 1]);
        let f = [0.8, 0.2, 0.6];
        for (corner, w) in cs.iter() {
            let mut expect = 1.0;
            for a in 0..3 {
                let off = corner[a] - cs.corners[0][a];
                expect *= if off == 1 { f[a] } else { 1.0 - f[a] };
            }
            assert!((w - expect).abs() < 1e-12, "{corner:?}");
        }
        let total: f64 = cs.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upper_boundary_stays_in_range() {
        let cs = voxel_corners(&[1.0f32, 1.0, 1.0], 8).unwrap();
        assert!(cs.iter().all(|(c, _)| c.iter().all(|&v| v <= 8)));
        assert_eq!(cs.weights[7], 1.0);
        assert_eq!(cs.corners[7], [8, 8, 8]);
    }

    #[test]
    fn out_of_domain_rejected_but_tolerance_clamped() {
        assert!(matches!(
            voxel_corners(&[1.1f64, 0.0, 0.0], 4),
            Err(Error::OutOfDomain(_))
        ));
        assert!(voxel_corners(&[-1e-3f64, 0.0, 0.0], 4).is_err());
        assert!(voxel_corners(&[f64::NAN, 0.0, 0.0], 4).is_err());
        let cs = voxel_corners(&[-5e-10f64, 1.0 + 5e-10, 0.0], 4).unwrap();
        assert_eq!(cs.corners[0], [0, 3, 0]);
    }

    #[test]
    fn two_dimensional_corners() {
        let cs = voxel_corners(&[0.25f64, 0.75], 2).unwrap();
        assert_eq!(cs.len, 4);
        assert_eq!(cs.corners[0], [0, 1, 0]);
        assert_eq!(cs.weights[..4], [0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn index_transform_examples() {
        assert_eq!(index_transform([2, 2, 0], 2, 4), [4, 4, 0]);
        assert_eq!(index_transform([9, 3, 7], 37, 37), [9, 3, 7]);
        assert_eq!(index_transform([3, 5, 7], 111, 1024), [27, 46, 64]);
        // large resolutions must not overflow
        assert_eq!(index_transform([u32::MAX, 0, 1], u32::MAX, u32::MAX - 1), [u32::MAX - 1, 0, 0]);
    }

    #[test]
    fn capacities() {
        let config = standard(8);
        assert_eq!(group_capacity(&config, 1).unwrap(), 10_648);
        assert_eq!(group_capacity(&config, 4).unwrap(), 1 << 20);
        assert_eq!(group_capacity(&standard(1), 1).unwrap(), 1 << 20);
        assert!(group_capacity(&config, 0).is_err());
        assert!(group_capacity(&config, 9).is_err());
        let two_d = EncodingConfig::new(8, 2, 1 << 14, 2, 4, 32).unwrap().with_dims(2).unwrap();
        assert_eq!(two_d.table_capacities().unwrap()[1], 33 * 33);
    }
}
