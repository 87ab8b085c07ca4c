//! Scenes, pools and dataset ingestion.
//!
//! A [`Scene`] is a point-annotated image domain: only its extent and head
//! positions are kept, pixel data is never loaded. Datasets come either from a
//! manifest of per-scene point files ([`load_dataset`]) or from a seeded band
//! mixture ([`synth_dataset`]).

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// File name of the manifest written by [`write_dataset`].
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SceneId(pub String);

impl SceneId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SceneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SceneId {
    fn from(s: &str) -> Self {
        SceneId(s.to_owned())
    }
}

impl From<String> for SceneId {
    fn from(s: String) -> Self {
        SceneId(s)
    }
}

/// A head center in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPoint {
    pub x: f64,
    pub y: f64,
}

impl HeadPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn in_bounds(&self, width: u32, height: u32) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < width as f64 && self.y < height as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: SceneId,
    pub width: u32,
    pub height: u32,
    pub points: Vec<HeadPoint>,
}

impl Scene {
    /// Builds a scene, rejecting empty extents and points outside `[0, width) x [0, height)`.
    pub fn new(
        id: impl Into<SceneId>,
        width: u32,
        height: u32,
        points: Vec<HeadPoint>,
    ) -> Result<Self> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("scene {id}: extent must be positive")));
        }
        if let Some(p) = points.iter().find(|p| !p.in_bounds(width, height)) {
            return Err(Error::OutOfBounds {
                scene: id.0,
                x: p.x,
                y: p.y,
                width,
                height,
            });
        }
        Ok(Self {
            id,
            width,
            height,
            points,
        })
    }

    /// Ground-truth crowd count.
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

/// Labeled / unlabeled split of a dataset's scene ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    labeled: BTreeSet<SceneId>,
    unlabeled: BTreeSet<SceneId>,
}

impl Pool {
    /// All ids start unlabeled.
    pub fn new<I>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = SceneId>,
    {
        let mut unlabeled = BTreeSet::new();
        for id in ids {
            if !unlabeled.insert(id.clone()) {
                return Err(Error::Pool(format!("duplicate scene id {id}")));
            }
        }
        Ok(Self {
            labeled: BTreeSet::new(),
            unlabeled,
        })
    }

    pub fn labeled(&self) -> &BTreeSet<SceneId> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<SceneId> {
        &self.unlabeled
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Moves `ids` from the unlabeled to the labeled set. Revealing the
    /// annotation itself is a lookup of the stored ground truth.
    pub fn annotate(&self, ids: &[SceneId]) -> Result<Pool> {
        let mut next = self.clone();
        for id in ids {
            if next.labeled.contains(id) {
                return Err(Error::Pool(format!("scene {id} is already labeled")));
            }
            if !next.unlabeled.remove(id) {
                return Err(Error::Pool(format!("unknown scene id {id}")));
            }
            next.labeled.insert(id.clone());
        }
        Ok(next)
    }
}

/// One component of the count mixture: a weight and an inclusive count range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountBand {
    pub weight: f64,
    pub min_count: usize,
    pub max_count: usize,
}

impl CountBand {
    pub fn new(weight: f64, min_count: usize, max_count: usize) -> Self {
        Self {
            weight,
            min_count,
            max_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_scenes: usize,
    pub width: u32,
    pub height: u32,
    pub bands: Vec<CountBand>,
    /// Probability that a point is drawn around a cluster center rather than uniformly.
    pub clustering: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("synth: width and height must be positive"));
        }
        if self.bands.is_empty() {
            return Err(Error::invalid("synth: at least one count band is required"));
        }
        let mut total = 0.0;
        for (i, b) in self.bands.iter().enumerate() {
            if !(b.weight.is_finite() && b.weight >= 0.0) {
                return Err(Error::invalid(format!("synth: band {i} has invalid weight")));
            }
            if b.min_count > b.max_count {
                return Err(Error::invalid(format!(
                    "synth: band {i} has min_count > max_count"
                )));
            }
            total += b.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "synth: band weights sum to {total}, expected 1"
            )));
        }
        if !(0.0..=1.0).contains(&self.clustering) {
            return Err(Error::invalid("synth: clustering must lie in [0, 1]"));
        }
        Ok(())
    }
}

// Per-scene cluster layout: 1..=MAX_CLUSTERS centers, isotropic spread drawn as
// a fraction of the shorter side.
const MAX_CLUSTERS: usize = 4;
const SPREAD_RANGE: (f64, f64) = (0.04, 0.15);
const MAX_REJECTIONS: usize = 32;

/// Generates a dataset from `spec`. Pure in `spec`: the same spec always yields
/// bitwise-identical scenes.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<Scene>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let band_pick = WeightedIndex::new(spec.bands.iter().map(|b| b.weight))
        .map_err(|e| Error::invalid(format!("synth: {e}")))?;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let short = w.min(h);
    let width_digits = spec.n_scenes.saturating_sub(1).to_string().len().max(4);

    let mut scenes = Vec::with_capacity(spec.n_scenes);
    for i in 0..spec.n_scenes {
        let band = spec.bands[band_pick.sample(&mut rng)];
        let count = rng.random_range(band.min_count..=band.max_count);
        let n_clusters = rng.random_range(1..=MAX_CLUSTERS);
        let clusters: Vec<(f64, f64, f64)> = (0..n_clusters)
            .map(|_| {
                let cx = rng.random_range(0.1 * w..0.9 * w);
                let cy = rng.random_range(0.1 * h..0.9 * h);
                let spread = short * rng.random_range(SPREAD_RANGE.0..SPREAD_RANGE.1);
                (cx, cy, spread)
            })
            .collect();

        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            let clustered = rng.random::<f64>() < spec.clustering;
            let p = if clustered {
                let (cx, cy, spread) = clusters[rng.random_range(0..n_clusters)];
                sample_around(&mut rng, cx, cy, spread, spec.width, spec.height)
            } else {
                None
            };
            points.push(p.unwrap_or_else(|| {
                HeadPoint::new(rng.random_range(0.0..w), rng.random_range(0.0..h))
            }));
        }
        let id = format!("scene_{i:0width_digits$}");
        scenes.push(Scene::new(id, spec.width, spec.height, points)?);
    }
    Ok(scenes)
}

fn sample_around(
    rng: &mut ChaCha8Rng,
    cx: f64,
    cy: f64,
    spread: f64,
    width: u32,
    height: u32,
) -> Option<HeadPoint> {
    let normal = Normal::new(0.0, spread).ok()?;
    (0..MAX_REJECTIONS)
        .map(|_| HeadPoint::new(cx + normal.sample(rng), cy + normal.sample(rng)))
        .find(|p| p.in_bounds(width, height))
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    scene_id: String,
    width: u32,
    height: u32,
    points_file: String,
}

/// Reads a manifest CSV (`scene_id,width,height,points_file`) and the point
/// files it references. Point-file paths are relative to the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<Scene>> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let file = fs::File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);

    let mut seen = HashSet::new();
    let mut scenes = Vec::new();
    for (row_idx, row) in reader.deserialize::<ManifestRow>().enumerate() {
        // header is line 1
        let line = row_idx + 2;
        let row = row.map_err(|e| Error::Parse {
            scene: "<manifest>".into(),
            path: manifest_path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        if !seen.insert(row.scene_id.clone()) {
            return Err(Error::Parse {
                scene: row.scene_id,
                path: manifest_path.to_path_buf(),
                line,
                msg: "duplicate scene id".into(),
            });
        }
        let points_path = base.join(&row.points_file);
        let points = read_points(&row.scene_id, &points_path, row.width, row.height)?;
        scenes.push(Scene::new(row.scene_id, row.width, row.height, points)?);
    }
    Ok(scenes)
}

fn read_points(scene: &str, path: &Path, width: u32, height: u32) -> Result<Vec<HeadPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        scene: scene.to_owned(),
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        let [xs, ys] = fields[..] else {
            return Err(parse_err(line, format!("expected `x y`, got {raw:?}")));
        };
        let coord = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("bad coordinate {s:?}")))
        };
        let p = HeadPoint::new(coord(xs)?, coord(ys)?);
        if !p.in_bounds(width, height) {
            return Err(parse_err(
                line,
                format!(
                    "point ({}, {}) out of bounds for {width}x{height} scene",
                    p.x, p.y
                ),
            ));
        }
        points.push(p);
    }
    Ok(points)
}

/// Writes `scenes` as `dir/manifest.csv` plus one point file per scene under
/// `dir/points/`. Returns the manifest path.
pub fn write_dataset(scenes: &[Scene], dir: &Path) -> Result<PathBuf> {
    let points_dir = dir.join("points");
    fs::create_dir_all(&points_dir).map_err(|e| Error::io(&points_dir, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut writer = csv::Writer::from_path(&manifest_path).map_err(|e| csv_io(&manifest_path, e))?;
    for scene in scenes {
        let rel = format!("points/{}.txt", scene.id);
        let mut body = String::with_capacity(scene.points.len() * 16);
        for p in &scene.points {
            body.push_str(&format!("{} {}\n", p.x, p.y));
        }
        let path = dir.join(&rel);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        writer
            .serialize(ManifestRow {
                scene_id: scene.id.0.clone(),
                width: scene.width,
                height: scene.height,
                points_file: rel,
            })
            .map_err(|e| csv_io(&manifest_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}
