//! Procedural map generators, start/goal sampling, mixed datasets and their
//! on-disk layout.
//!
//! A dataset directory holds `manifest.json` and one binary graymap per
//! instance under `maps/` (0 = obstacle, 255 = free).

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{heuristic, validate_instance, GridError, GridMap, Node, ProblemInstance};

pub const DEFAULT_FOREST_DENSITY: f64 = 0.3;
const MAX_SAMPLING_TRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("map size must be even and at least 8, got {0}")]
    InvalidSize(usize),
    #[error("unknown map kind `{0}`")]
    UnknownKind(String),
    #[error("forest density must lie in [0, 1), got {0}")]
    InvalidDensity(f64),
    #[error("no valid start/goal pair found after {0} tries")]
    SamplingExhausted(usize),
    #[error("per-kind count must be at least 1")]
    EmptyRequest,
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("missing or unreadable map file {0}")]
    MissingMapFile(String),
    #[error("instance {id}: {source}")]
    InvalidInstance { id: String, source: GridError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapKind {
    Maze,
    Forest { density: f64 },
    Bugtrap,
    Gaps,
}

impl MapKind {
    pub const ALL: [MapKind; 4] = [
        MapKind::Maze,
        MapKind::Forest {
            density: DEFAULT_FOREST_DENSITY,
        },
        MapKind::Bugtrap,
        MapKind::Gaps,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MapKind::Maze => "maze",
            MapKind::Forest { .. } => "forest",
            MapKind::Bugtrap => "bugtrap",
            MapKind::Gaps => "gaps",
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MapKind::Forest { density } if density != DEFAULT_FOREST_DENSITY => {
                write!(f, "forest:{density}")
            }
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for MapKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.trim() {
            "maze" => MapKind::Maze,
            "forest" => MapKind::Forest {
                density: DEFAULT_FOREST_DENSITY,
            },
            "bugtrap" => MapKind::Bugtrap,
            "gaps" => MapKind::Gaps,
            other => {
                let density = other
                    .strip_prefix("forest:")
                    .and_then(|d| d.parse::<f64>().ok())
                    .ok_or_else(|| DatasetError::UnknownKind(other.to_string()))?;
                if !(0.0..1.0).contains(&density) {
                    return Err(DatasetError::InvalidDensity(density));
                }
                MapKind::Forest { density }
            }
        };
        Ok(kind)
    }
}

impl Serialize for MapKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MapKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_size(size: usize) -> Result<(), DatasetError> {
    if size < 8 || !size.is_multiple_of(2) {
        return Err(DatasetError::InvalidSize(size));
    }
    Ok(())
}

/// Component label of every free cell (8-connected), `usize::MAX` on obstacles.
pub fn component_labels(map: &GridMap) -> (Vec<usize>, Vec<usize>) {
    let mut label = vec![usize::MAX; map.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..map.len() {
        if !map.cells()[seed] || label[seed] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut count = 0;
        label[seed] = id;
        queue.push_back(seed);
        while let Some(u) = queue.pop_front() {
            count += 1;
            map.for_each_neighbor(u, |w| {
                if label[w] == usize::MAX {
                    label[w] = id;
                    queue.push_back(w);
                }
            });
        }
        sizes.push(count);
    }
    (label, sizes)
}

/// Turns every free cell outside the largest component into an obstacle.
fn keep_largest_component(map: &mut GridMap) {
    let (label, sizes) = component_labels(map);
    let Some(largest) = (0..sizes.len()).max_by_key(|&i| (sizes[i], usize::MAX - i)) else {
        return;
    };
    for (i, &l) in label.iter().enumerate() {
        if l != usize::MAX && l != largest {
            let n = map.node(i);
            map.set(n, false);
        }
    }
}

fn maze(size: usize, rng: &mut ChaCha8Rng) -> GridMap {
    let mut map = GridMap::new(size, size, vec![false; size * size]).expect("size checked");
    let cells = size / 2;
    let mut visited = vec![false; cells * cells];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    map.set(Node::new(0, 0), true);
    while let Some(&(r, c)) = stack.last() {
        let mut options = Vec::with_capacity(4);
        if r > 0 && !visited[(r - 1) * cells + c] {
            options.push((r - 1, c));
        }
        if c > 0 && !visited[r * cells + c - 1] {
            options.push((r, c - 1));
        }
        if c + 1 < cells && !visited[r * cells + c + 1] {
            options.push((r, c + 1));
        }
        if r + 1 < cells && !visited[(r + 1) * cells + c] {
            options.push((r + 1, c));
        }
        match options.choose(rng) {
            None => {
                stack.pop();
            }
            Some(&(nr, nc)) => {
                visited[nr * cells + nc] = true;
                map.set(Node::new(nr * 2, nc * 2), true);
                map.set(Node::new(r + nr, c + nc), true);
                stack.push((nr, nc));
            }
        }
    }
    // knock out a few walls between cells so that shortest paths are not unique
    for r in 0..size - 1 {
        for c in 0..size - 1 {
            let between_rows = r % 2 == 1 && c % 2 == 0;
            let between_cols = r % 2 == 0 && c % 2 == 1;
            if (between_rows || between_cols) && !map.is_free(Node::new(r, c)) && rng.gen_bool(0.1)
            {
                map.set(Node::new(r, c), true);
            }
        }
    }
    map
}

fn forest(size: usize, density: f64, rng: &mut ChaCha8Rng) -> GridMap {
    let cells = (0..size * size).map(|_| !rng.gen_bool(density)).collect();
    GridMap::new(size, size, cells).expect("size checked")
}

fn fill_rect(map: &mut GridMap, r0: usize, c0: usize, r1: usize, c1: usize) {
    for r in r0..=r1 {
        for c in c0..=c1 {
            map.set(Node::new(r, c), false);
        }
    }
}

fn bugtrap(size: usize, rng: &mut ChaCha8Rng) -> GridMap {
    let mut map = GridMap::empty(size, size).expect("size checked");
    let traps = if size >= 24 { rng.gen_range(1..=2) } else { 1 };
    let mut placed: Vec<(usize, usize, usize, usize)> = Vec::new();
    for _ in 0..traps {
        let h = rng.gen_range(size / 4..=size / 2).max(4);
        let w = rng.gen_range(size / 4..=size / 2).max(4);
        let r0 = rng.gen_range(1..size - h);
        let c0 = rng.gen_range(1..size - w);
        let (r1, c1) = (r0 + h - 1, c0 + w - 1);
        // keep a free ring of width 2 between enclosures
        if placed
            .iter()
            .any(|&(a0, b0, a1, b1)| r0 <= a1 + 2 && a0 <= r1 + 2 && c0 <= b1 + 2 && b0 <= c1 + 2)
        {
            continue;
        }
        placed.push((r0, c0, r1, c1));
        // C shape: three walls, the fourth side open
        let open = rng.gen_range(0..4);
        if open != 0 {
            fill_rect(&mut map, r0, c0, r0, c1);
        }
        if open != 1 {
            fill_rect(&mut map, r1, c0, r1, c1);
        }
        if open != 2 {
            fill_rect(&mut map, r0, c0, r1, c0);
        }
        if open != 3 {
            fill_rect(&mut map, r0, c1, r1, c1);
        }
        if open < 2 {
            // lips narrowing the mouth
            let r = if open == 0 { r0 } else { r1 };
            map.set(Node::new(r, c0 + 1), false);
            map.set(Node::new(r, c1 - 1), false);
        } else {
            let c = if open == 2 { c0 } else { c1 };
            map.set(Node::new(r0 + 1, c), false);
            map.set(Node::new(r1 - 1, c), false);
        }
    }
    map
}

fn gaps(size: usize, rng: &mut ChaCha8Rng) -> GridMap {
    let mut map = GridMap::empty(size, size).expect("size checked");
    let vertical = rng.gen_bool(0.5);
    let walls = (size / 8).max(1);
    let spacing = size / (walls + 1);
    for k in 1..=walls {
        let line = k * spacing;
        let gap = rng.gen_range(0..size - 1);
        for t in 0..size {
            if t == gap || t == gap + 1 {
                continue;
            }
            let node = if vertical {
                Node::new(t, line)
            } else {
                Node::new(line, t)
            };
            map.set(node, false);
        }
    }
    map
}

/// Generates a `size x size` map of the given kind. Deterministic in `seed`;
/// the free cells always form a single connected component.
pub fn generate_map(kind: MapKind, size: usize, seed: u64) -> Result<GridMap, DatasetError> {
    check_size(size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = match kind {
        MapKind::Maze => maze(size, &mut rng),
        MapKind::Forest { density } => {
            if !(0.0..1.0).contains(&density) {
                return Err(DatasetError::InvalidDensity(density));
            }
            forest(size, density, &mut rng)
        }
        MapKind::Bugtrap => bugtrap(size, &mut rng),
        MapKind::Gaps => gaps(size, &mut rng),
    };
    keep_largest_component(&mut map);
    if map.free_count() < 2 {
        // a forest this dense has nothing left; clear a corridor
        for c in 0..size {
            map.set(Node::new(0, c), true);
        }
        keep_largest_component(&mut map);
    }
    Ok(map)
}

/// Rejection-samples a reachable start/goal pair at Chebyshev distance at
/// least `max(width, height) / 4` and attaches the oracle path length.
pub fn sample_instance(map: &GridMap, seed: u64) -> Result<ProblemInstance, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<usize> = (0..map.len()).filter(|&i| map.cells()[i]).collect();
    if free.len() < 2 {
        return Err(DatasetError::SamplingExhausted(0));
    }
    let (label, _) = component_labels(map);
    let min_dist = map.width().max(map.height()) / 4;
    for _ in 0..MAX_SAMPLING_TRIES {
        let s = free[rng.gen_range(0..free.len())];
        let g = free[rng.gen_range(0..free.len())];
        let (start, goal) = (map.node(s), map.node(g));
        if s == g || label[s] != label[g] || heuristic(start, goal) < min_dist {
            continue;
        }
        return Ok(ProblemInstance::solve(map.clone(), start, goal)?);
    }
    Err(DatasetError::SamplingExhausted(MAX_SAMPLING_TRIES))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub id: String,
    pub instance: ProblemInstance,
    pub kind: MapKind,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&DatasetEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    /// Entries of one kind, compared by name (forest densities are not distinguished).
    pub fn of_kind(&self, kind: &str) -> Vec<&DatasetEntry> {
        self.entries
            .iter()
            .filter(|e| e.kind.name() == kind)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSetConfig {
    pub kinds: Vec<MapKind>,
    pub size: usize,
    pub per_kind: usize,
    pub instances_per_map: usize,
    pub seed: u64,
}

impl MixedSetConfig {
    pub fn new(kinds: Vec<MapKind>, size: usize, per_kind: usize, seed: u64) -> Self {
        Self {
            kinds,
            size,
            per_kind,
            instances_per_map: 1,
            seed,
        }
    }
}

/// SplitMix64 finalizer, used to derive independent per-map seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Split of every position in a dataset of `n` instances: a seeded
/// permutation, first 80% train, next 10% validation, rest test.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed ^ 0x5f11_7000)));
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

/// `per_kind` maps of every kind, interleaved round-robin across kinds and
/// split 80/10/10.
pub fn build_mixed_set(config: &MixedSetConfig) -> Result<Dataset, DatasetError> {
    check_size(config.size)?;
    if config.per_kind == 0 || config.kinds.is_empty() || config.instances_per_map == 0 {
        return Err(DatasetError::EmptyRequest);
    }
    let jobs: Vec<(usize, MapKind)> = (0..config.per_kind)
        .flat_map(|j| {
            config
                .kinds
                .iter()
                .enumerate()
                .map(move |(k, &kind)| (j * config.kinds.len() + k, kind))
        })
        .collect();
    let maps = jobs
        .par_iter()
        .map(|&(slot, kind)| {
            let seed = mix(config
                .seed
                .wrapping_mul(0x1000_0001)
                .wrapping_add(slot as u64));
            let map = generate_map(kind, config.size, seed)?;
            let instances = (0..config.instances_per_map)
                .map(|q| sample_instance(&map, mix(seed ^ (q as u64 + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((kind, seed, instances))
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    let total = maps.len() * config.instances_per_map;
    let splits = assign_splits(total, config.seed);
    let mut entries = Vec::with_capacity(total);
    for (kind, seed, instances) in maps {
        for instance in instances {
            let i = entries.len();
            entries.push(DatasetEntry {
                id: format!("{i:05}"),
                instance,
                kind,
                seed,
                split: splits[i],
            });
        }
    }
    let name = config
        .kinds
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join("+");
    Ok(Dataset { name, entries })
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    name: String,
    count: usize,
    instances: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    map: String,
    start: [usize; 2],
    goal: [usize; 2],
    optimal_length: usize,
    kind: MapKind,
    seed: u64,
    split: Split,
    checksum: String,
}

pub fn encode_pgm(map: &GridMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.cells().iter().map(|&free| if free { 255u8 } else { 0 }));
    out
}

/// Parses a binary graymap; any pixel above half intensity is free.
/// `None` if the data is not a complete P5 image.
pub fn decode_pgm(bytes: &[u8]) -> Option<GridMap> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let begin = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if begin == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[begin..pos]).ok()?);
    }
    pos += 1;
    if fields[0] != "P5" {
        return None;
    }
    let width: usize = fields[1].parse().ok()?;
    let height: usize = fields[2].parse().ok()?;
    let maxval: usize = fields[3].parse().ok()?;
    if maxval == 0 || maxval > 255 {
        return None;
    }
    let pixels = bytes.get(pos..pos + width * height)?;
    let cells = pixels.iter().map(|&p| p as usize * 2 > maxval).collect();
    GridMap::new(width, height, cells).ok()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    let maps_dir = dir.join("maps");
    fs::create_dir_all(&maps_dir)?;
    let mut instances = Vec::with_capacity(dataset.len());
    for e in &dataset.entries {
        let bytes = encode_pgm(&e.instance.map);
        let rel = format!("maps/{}.pgm", e.id);
        fs::write(dir.join(&rel), &bytes)?;
        instances.push(ManifestEntry {
            id: e.id.clone(),
            map: rel,
            start: [e.instance.start.row, e.instance.start.col],
            goal: [e.instance.goal.row, e.instance.goal.col],
            optimal_length: e.instance.optimal_length,
            kind: e.kind,
            seed: e.seed,
            split: e.split,
            checksum: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        name: dataset.name.clone(),
        count: instances.len(),
        instances,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Loads and re-validates every instance of a saved dataset.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| DatasetError::MalformedManifest(format!("manifest.json: {e}")))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::MalformedManifest(e.to_string()))?;
    if manifest.count != manifest.instances.len() {
        return Err(DatasetError::MalformedManifest(format!(
            "count {} but {} instances listed",
            manifest.count,
            manifest.instances.len()
        )));
    }
    let present = fs::read_dir(dir.join("maps"))
        .map(|rd| {
            rd.filter_map(Result::ok)
                .filter(|f| f.path().extension().is_some_and(|x| x == "pgm"))
                .count()
        })
        .unwrap_or(0);
    if present != manifest.count {
        return Err(DatasetError::MalformedManifest(format!(
            "count {} but {present} map files present",
            manifest.count
        )));
    }
    let entries = manifest
        .instances
        .into_par_iter()
        .map(|m| {
            let bytes = fs::read(dir.join(&m.map))
                .map_err(|_| DatasetError::MissingMapFile(m.map.clone()))?;
            let map =
                decode_pgm(&bytes).ok_or_else(|| DatasetError::MissingMapFile(m.map.clone()))?;
            if sha256_hex(&bytes) != m.checksum {
                return Err(DatasetError::ChecksumMismatch(m.map.clone()));
            }
            let instance = ProblemInstance {
                map,
                start: Node::new(m.start[0], m.start[1]),
                goal: Node::new(m.goal[0], m.goal[1]),
                optimal_length: m.optimal_length,
            };
            let instance =
                validate_instance(instance).map_err(|source| DatasetError::InvalidInstance {
                    id: m.id.clone(),
                    source,
                })?;
            Ok(DatasetEntry {
                id: m.id,
                instance,
                kind: m.kind,
                seed: m.seed,
                split: m.split,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        name: manifest.name,
        entries,
    })
}
