//! Mixed-feature hash tables: spatial hashing, feature lookup, multilinear
//! blending, gradient scatter and parameter accounting.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{index_transform, voxel_corners, EncodingConfig};
use crate::scalar::Real;

/// Per-axis multipliers of the spatial hash. The products wrap modulo 2^32.
pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Half-width of the uniform initialization range of table features.
pub const INIT_RANGE: f64 = 1e-4;

/// `((i * p1) ^ (j * p2) ^ (k * p3)) mod table_size` with wrapping 32-bit
/// products. 2D callers pass `k = 0`.
#[inline]
pub fn spatial_hash(coords: [u32; 3], table_size: u32) -> u32 {
    let h = coords[0].wrapping_mul(HASH_PRIMES[0])
        ^ coords[1].wrapping_mul(HASH_PRIMES[1])
        ^ coords[2].wrapping_mul(HASH_PRIMES[2]);
    h % table_size
}

/// Scalar and entry totals of an encoding, plus the per-table entry counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterCount {
    pub per_table: Vec<u64>,
    pub entries: u64,
    pub scalars: u64,
}

impl ParameterCount {
    /// Storage footprint with 32-bit features.
    pub fn bytes(&self) -> u64 {
        self.scalars * 4
    }
}

pub fn count_parameters(config: &EncodingConfig) -> Result<ParameterCount> {
    let per_table = config.table_capacities()?;
    let entries: u64 = per_table.iter().sum();
    Ok(ParameterCount {
        per_table,
        entries,
        scalars: entries * config.features as u64,
    })
}

/// Precomputed level-to-table routing derived from an [`EncodingConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayout {
    config: EncodingConfig,
    resolutions: Vec<u32>,
    level_table: Vec<usize>,
    /// Resolution of the finest level in each level's group.
    target_resolution: Vec<u32>,
    capacities: Vec<u32>,
}

impl EncoderLayout {
    pub fn new(config: &EncodingConfig) -> Result<Self> {
        let set = config.level_set()?;
        let level_table: Vec<usize> = (0..config.levels).map(|l| config.table_of_level(l)).collect();
        let target_resolution = level_table
            .iter()
            .map(|&t| set.resolutions[config.finest_level_of_table(t)])
            .collect();
        let capacities = config
            .table_capacities()?
            .into_iter()
            .map(|c| c as u32)
            .collect();
        Ok(Self {
            config: config.clone(),
            resolutions: set.resolutions,
            level_table,
            target_resolution,
            capacities,
        })
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn table_of_level(&self, level: usize) -> usize {
        self.level_table[level]
    }

    pub fn corners_per_level(&self) -> usize {
        1 << self.config.dims
    }

    /// Resolves the table entries and weights every level reads for `x`.
    ///
    /// Weights come from the level's own voxel; only the corner indices are
    /// moved into the group's finest grid before hashing.
    pub fn lookup<R: Real>(&self, x: &[R], out: &mut [LevelLookup<R>]) -> Result<()> {
        if x.len() != self.config.dims {
            return Err(Error::ShapeMismatch {
                expected: self.config.dims,
                got: x.len(),
            });
        }
        if out.len() != self.config.levels {
            return Err(Error::ShapeMismatch {
                expected: self.config.levels,
                got: out.len(),
            });
        }
        for (level, slot) in out.iter_mut().enumerate() {
            let res = self.resolutions[level];
            let target = self.target_resolution[level];
            let size = self.capacities[self.level_table[level]];
            let corners = voxel_corners(x, res)?;
            for c in 0..corners.len {
                let moved = index_transform(corners.corners[c], res, target);
                slot.entries[c] = spatial_hash(moved, size);
            }
            slot.weights = corners.weights;
        }
        Ok(())
    }

    pub fn empty_lookups<R: Real>(&self) -> Vec<LevelLookup<R>> {
        vec![LevelLookup::default(); self.config.levels]
    }
}

/// Table entries and blend weights one level reads for one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelLookup<R> {
    pub entries: [u32; 8],
    pub weights: [R; 8],
}

impl<R: Real> Default for LevelLookup<R> {
    fn default() -> Self {
        Self {
            entries: [0; 8],
            weights: [R::zero(); 8],
        }
    }
}

/// Concatenated per-level features `y = [f_1; ...; f_L]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedFeature<R> {
    pub y: Vec<R>,
    pub features: usize,
}

impl<R: Real> EncodedFeature<R> {
    /// Feature vector of 0-based level `level`.
    pub fn level(&self, level: usize) -> &[R] {
        &self.y[level * self.features..(level + 1) * self.features]
    }
}

/// Destination for per-entry feature gradients.
pub trait GradSink<R> {
    /// Adds `weight * grad` to the gradient of `entry` in `table`.
    fn add_scaled(&mut self, table: usize, entry: u32, weight: R, grad: &[R]);
}

/// Dense gradient accumulators shaped like the tables, with a list of the
/// entries touched since the last [`TableGrads::clear`].
#[derive(Clone, Debug, PartialEq)]
pub struct TableGrads<R> {
    pub values: Vec<Vec<R>>,
    touched: Vec<Vec<u32>>,
    marks: Vec<Vec<bool>>,
    features: usize,
}

impl<R: Real> TableGrads<R> {
    fn new(capacities: &[u32], features: usize) -> Self {
        Self {
            values: capacities
                .iter()
                .map(|&c| vec![R::zero(); c as usize * features])
                .collect(),
            touched: vec![Vec::new(); capacities.len()],
            marks: capacities.iter().map(|&c| vec![false; c as usize]).collect(),
            features,
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Entries of `table` touched since the last clear, in first-touch order.
    pub fn touched(&self, table: usize) -> &[u32] {
        &self.touched[table]
    }

    pub fn entry(&self, table: usize, entry: u32) -> &[R] {
        let f = self.features;
        &self.values[table][entry as usize * f..(entry as usize + 1) * f]
    }

    /// Zeroes only the touched entries.
    pub fn clear(&mut self) {
        let f = self.features;
        for ((values, touched), marks) in self
            .values
            .iter_mut()
            .zip(self.touched.iter_mut())
            .zip(self.marks.iter_mut())
        {
            for &e in touched.iter() {
                values[e as usize * f..(e as usize + 1) * f].fill(R::zero());
                marks[e as usize] = false;
            }
            touched.clear();
        }
    }
}

impl<R: Real> GradSink<R> for TableGrads<R> {
    #[inline]
    fn add_scaled(&mut self, table: usize, entry: u32, weight: R, grad: &[R]) {
        let e = entry as usize;
        if !self.marks[table][e] {
            self.marks[table][e] = true;
            self.touched[table].push(entry);
        }
        let f = self.features;
        for (g, &d) in self.values[table][e * f..(e + 1) * f].iter_mut().zip(grad) {
            *g += weight * d;
        }
    }
}

/// Hash-map backed accumulator for per-thread partial gradients; merged into
/// [`TableGrads`] in first-touch order so the reduction is reproducible.
#[derive(Clone, Debug, Default)]
pub struct SparseTableGrads<R> {
    slots: HashMap<(u32, u32), usize>,
    keys: Vec<(u32, u32)>,
    values: Vec<R>,
    features: usize,
}

impl<R: Real> SparseTableGrads<R> {
    pub fn new(features: usize) -> Self {
        Self {
            slots: HashMap::new(),
            keys: Vec::new(),
            values: Vec::new(),
            features,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn merge_into(&self, dense: &mut TableGrads<R>) {
        let f = self.features;
        for (i, &(table, entry)) in self.keys.iter().enumerate() {
            dense.add_scaled(table as usize, entry, R::one(), &self.values[i * f..(i + 1) * f]);
        }
    }
}

impl<R: Real> GradSink<R> for SparseTableGrads<R> {
    fn add_scaled(&mut self, table: usize, entry: u32, weight: R, grad: &[R]) {
        let f = self.features;
        let key = (table as u32, entry);
        let slot = *self.slots.entry(key).or_insert_with(|| {
            self.keys.push(key);
            self.values.extend(std::iter::repeat(R::zero()).take(f));
            self.keys.len() - 1
        });
        for (g, &d) in self.values[slot * f..(slot + 1) * f].iter_mut().zip(grad) {
            *g += weight * d;
        }
    }
}

/// `N` flat feature tables (entry-major, feature-minor) and their gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTableBank<R> {
    layout: EncoderLayout,
    pub tables: Vec<Vec<R>>,
    pub grads: TableGrads<R>,
}

impl<R: Real> FeatureTableBank<R> {
    pub fn zeros(config: &EncodingConfig) -> Result<Self> {
        let layout = EncoderLayout::new(config)?;
        let f = config.features;
        let tables = layout
            .capacities
            .iter()
            .map(|&c| vec![R::zero(); c as usize * f])
            .collect();
        let grads = TableGrads::new(&layout.capacities, f);
        Ok(Self { layout, tables, grads })
    }

    /// Features drawn i.i.d. from `U[-1e-4, 1e-4]`. Each table reads its own
    /// ChaCha stream, so the result depends only on `(config, seed)`.
    pub fn init(config: &EncodingConfig, seed: u64) -> Result<Self> {
        let mut bank = Self::zeros(config)?;
        for (t, table) in bank.tables.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            for v in table.iter_mut() {
                let u: f64 = rng.gen_range(-1.0..=1.0);
                *v = R::lit(u * INIT_RANGE);
            }
        }
        Ok(bank)
    }

    pub fn layout(&self) -> &EncoderLayout {
        &self.layout
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.layout.config
    }

    pub fn scalar_count(&self) -> usize {
        self.tables.iter().map(Vec::len).sum()
    }

    /// Feature vector stored at `entry` of `table`.
    pub fn entry(&self, table: usize, entry: u32) -> &[R] {
        let f = self.layout.config.features;
        &self.tables[table][entry as usize * f..(entry as usize + 1) * f]
    }

    pub fn encode(&self, x: &[R]) -> Result<EncodedFeature<R>> {
        let mut lookups = self.layout.empty_lookups();
        let mut y = vec![R::zero(); self.layout.config.output_dim()];
        self.encode_into(x, &mut lookups, &mut y)?;
        Ok(EncodedFeature {
            y,
            features: self.layout.config.features,
        })
    }

    /// Encodes `x` into `y`, leaving the resolved lookups in `lookups` for a
    /// later [`scatter`].
    pub fn encode_into(&self, x: &[R], lookups: &mut [LevelLookup<R>], y: &mut [R]) -> Result<()> {
        self.view().encode_into(x, lookups, y)
    }

    /// Blends the looked-up entries of every level into `y`.
    pub fn gather(&self, lookups: &[LevelLookup<R>], y: &mut [R]) -> Result<()> {
        self.view().gather(lookups, y)
    }

    pub fn view(&self) -> BankView<'_, R> {
        BankView {
            layout: &self.layout,
            tables: &self.tables,
        }
    }

    /// Read-only tables next to mutable gradients, for a fused
    /// forward/backward pass.
    pub fn split_grads(&mut self) -> (BankView<'_, R>, &mut TableGrads<R>) {
        (
            BankView {
                layout: &self.layout,
                tables: &self.tables,
            },
            &mut self.grads,
        )
    }

    /// Accumulates `dL/dy` for the point `x` into [`Self::grads`].
    pub fn encode_backward(&mut self, x: &[R], dy: &[R]) -> Result<()> {
        let mut lookups = self.layout.empty_lookups();
        self.layout.lookup(x, &mut lookups)?;
        scatter(&self.layout, &lookups, dy, &mut self.grads)
    }
}

/// Borrowed tables of a [`FeatureTableBank`].
#[derive(Clone, Copy, Debug)]
pub struct BankView<'a, R> {
    pub layout: &'a EncoderLayout,
    pub tables: &'a [Vec<R>],
}

impl<'a, R: Real> BankView<'a, R> {
    pub fn encode_into(&self, x: &[R], lookups: &mut [LevelLookup<R>], y: &mut [R]) -> Result<()> {
        self.layout.lookup(x, lookups)?;
        self.gather(lookups, y)
    }

    pub fn gather(&self, lookups: &[LevelLookup<R>], y: &mut [R]) -> Result<()> {
        let cfg = &self.layout.config;
        let f = cfg.features;
        if y.len() != cfg.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: cfg.output_dim(),
                got: y.len(),
            });
        }
        let corners = self.layout.corners_per_level();
        for (level, lk) in lookups.iter().enumerate() {
            let table = &self.tables[self.layout.level_table[level]];
            let out = &mut y[level * f..(level + 1) * f];
            out.fill(R::zero());
            for c in 0..corners {
                let w = lk.weights[c];
                let e = lk.entries[c] as usize * f;
                for (o, &v) in out.iter_mut().zip(&table[e..e + f]) {
                    *o += w * v;
                }
            }
        }
        Ok(())
    }
}

/// Scatters `dL/dy` back onto the entries named by `lookups`. Entries reached
/// by several `(level, corner)` pairs receive the sum.
pub fn scatter<R: Real, S: GradSink<R>>(
    layout: &EncoderLayout,
    lookups: &[LevelLookup<R>],
    dy: &[R],
    sink: &mut S,
) -> Result<()> {
    let f = layout.config.features;
    if dy.len() != layout.config.output_dim() {
        return Err(Error::ShapeMismatch {
            expected: layout.config.output_dim(),
            got: dy.len(),
        });
    }
    let corners = layout.corners_per_level();
    for (level, lk) in lookups.iter().enumerate() {
        let table = layout.level_table[level];
        let grad = &dy[level * f..(level + 1) * f];
        for c in 0..corners {
            sink.add_scaled(table, lk.entries[c], lk.weights[c], grad);
        }
    }
    Ok(())
}

/// Occupancy of one table after hashing a probe lattice through its group.
#[derive(Clone, Debug, PartialEq)]
pub struct TableOccupancy {
    pub table: usize,
    pub capacity: u64,
    pub probes: u64,
    /// hit count -> number of entries with exactly that many hits (0 included)
    pub histogram: BTreeMap<u32, u64>,
}

impl TableOccupancy {
    pub fn occupied(&self) -> u64 {
        self.histogram
            .iter()
            .filter(|(&hits, _)| hits > 0)
            .map(|(_, &n)| n)
            .sum()
    }

    pub fn load_factor(&self) -> f64 {
        self.occupied() as f64 / self.capacity as f64
    }

    pub fn multi_hit_entries(&self) -> u64 {
        self.histogram
            .iter()
            .filter(|(&hits, _)| hits > 1)
            .map(|(_, &n)| n)
            .sum()
    }
}

/// Hashes the `(R + 1)^dims` lattice points `p / R` through the lookup path of
/// every level: lattice point to level corner, corner to the group's finest
/// grid, then the table hash. Each (level, lattice point) pair is one probe.
pub fn collision_stats(config: &EncodingConfig, probe_resolution: u32) -> Result<Vec<TableOccupancy>> {
    if probe_resolution < 1 {
        return Err(Error::config("probe resolution must be at least 1"));
    }
    let layout = EncoderLayout::new(config)?;
    let side = probe_resolution + 1;
    let k_range = if config.dims == 3 { side } else { 1 };
    let mut stats = Vec::with_capacity(config.tables);
    for table in 0..config.tables {
        let capacity = layout.capacities[table];
        let mut hits = vec![0u32; capacity as usize];
        let mut probes = 0u64;
        for level in (0..config.levels).filter(|&l| layout.level_table[l] == table) {
            let res = layout.resolutions[level];
            let target = layout.target_resolution[level];
            for k in 0..k_range {
                for j in 0..side {
                    for i in 0..side {
                        let corner = index_transform([i, j, k], probe_resolution, res);
                        let moved = index_transform(corner, res, target);
                        hits[spatial_hash(moved, capacity) as usize] += 1;
                        probes += 1;
                    }
                }
            }
        }
        let mut histogram = BTreeMap::new();
        for h in hits {
            *histogram.entry(h).or_insert(0u64) += 1;
        }
        stats.push(TableOccupancy {
            table,
            capacity: capacity as u64,
            probes,
            histogram,
        });
    }
    Ok(stats)
}
