use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BBox, Category, Color, Scene, SceneObject, SizeClass};
use crate::error::{Error, Result};
use crate::numkernel::mix_seed;

pub const MIN_BOX_SIDE: f64 = 0.05;
pub const MAX_OBJECTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_objects_min: usize,
    pub n_objects_max: usize,
    /// How many lexicon categories scenes draw from (prefix of [`Category::ALL`]).
    pub n_categories: usize,
    pub n_colors: usize,
    /// Force at least two objects to share a category.
    pub force_duplicate_category: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            n_objects_min: 3,
            n_objects_max: 8,
            n_categories: Category::ALL.len(),
            n_colors: Color::ALL.len(),
            force_duplicate_category: true,
        }
    }
}

impl SceneSpec {
    pub fn fixed(n: usize) -> Self {
        SceneSpec {
            n_objects_min: n,
            n_objects_max: n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_objects_min < 2 || self.n_objects_max > MAX_OBJECTS {
            return Err(Error::InvalidSpec(format!(
                "object count must lie in 2..={MAX_OBJECTS}, got {}..={}",
                self.n_objects_min, self.n_objects_max
            )));
        }
        if self.n_objects_min > self.n_objects_max {
            return Err(Error::InvalidSpec("n_objects_min > n_objects_max".into()));
        }
        if !(1..=Category::ALL.len()).contains(&self.n_categories)
            || !(1..=Color::ALL.len()).contains(&self.n_colors)
        {
            return Err(Error::InvalidSpec("lexicon size out of range".into()));
        }
        Ok(())
    }
}

fn side_range(size: SizeClass) -> (f64, f64) {
    match size {
        SizeClass::Small => (MIN_BOX_SIDE, 0.15),
        SizeClass::Medium => (0.15, 0.30),
        SizeClass::Large => (0.30, 0.45),
    }
}

/// Deterministic per seed; the scene id is the seed.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(spec.n_objects_min..=spec.n_objects_max);
    let mut categories: Vec<Category> = (0..n)
        .map(|_| Category::ALL[rng.gen_range(0..spec.n_categories)])
        .collect();
    if spec.force_duplicate_category {
        let mut seen = categories.clone();
        seen.sort();
        seen.dedup();
        if seen.len() == n {
            let idx: Vec<usize> = (0..n).collect();
            let pair: Vec<usize> = idx.choose_multiple(&mut rng, 2).copied().collect();
            categories[pair[1]] = categories[pair[0]];
        }
    }
    let objects = categories
        .into_iter()
        .enumerate()
        .map(|(id, category)| {
            let color = Color::ALL[rng.gen_range(0..spec.n_colors)];
            let size_class = SizeClass::ALL[rng.gen_range(0..SizeClass::ALL.len())];
            let (lo, hi) = side_range(size_class);
            let w = rng.gen_range(lo..hi);
            let h = rng.gen_range(lo..hi);
            let x_min = rng.gen_range(0.0..(1.0 - w));
            let y_min = rng.gen_range(0.0..(1.0 - h));
            SceneObject {
                id,
                category,
                color,
                size_class,
                bbox: BBox {
                    x_min,
                    y_min,
                    x_max: x_min + w,
                    y_max: y_min + h,
                },
            }
        })
        .collect();
    Ok(Scene {
        scene_id: seed,
        objects,
    })
}

/// `count` scenes with ids `0..count`, each from an independent seed stream.
pub fn generate_world(spec: &SceneSpec, count: usize, seed: u64) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| {
            let mut s = generate_scene(spec, mix_seed(seed, i as u64))?;
            s.scene_id = i as u64;
            Ok(s)
        })
        .collect()
}

pub fn write_scenes(scenes: &[Scene], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in scenes {
        let line = serde_json::to_string(s).expect("scene serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let scene: Scene = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        scene.validate().map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(scene);
    }
    Ok(out)
}

/// One line per object: `id category color size at (cx, cy)`.
pub fn render_scene_text(scene: &Scene) -> String {
    let mut out = String::new();
    for o in &scene.objects {
        let (cx, cy) = o.bbox.center();
        let _ = writeln!(
            out,
            "{} {} {} {} at ({:.2}, {:.2})",
            o.id, o.category, o.color, o.size_class, cx, cy
        );
    }
    out
}
