//! Seeded phantom datasets: train and test lesioned splits plus a healthy
//! pool, optionally persisted as PGM images with a text manifest per split.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::manifest::OutputDir;
use super::pgm;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::morphology::Mask;
use crate::phantom::{generate, stratify, PhantomParams, Side, Stratification};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Healthy,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Healthy];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Healthy => "healthy",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
            Split::Healthy => 3,
        }
    }

    fn lesioned(self) -> bool {
        self != Split::Healthy
    }
}

/// Independent rng stream for item `index` of a labelled family.
pub fn stream(seed: u64, tag: u64, index: u64) -> SeededRng {
    SeededRng::derive(seed, (tag << 40) | index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: usize,
    pub image: Image,
    pub brain: Mask,
    pub pathology: Mask,
    pub side: Option<Side>,
    pub ventricle_area: usize,
}

impl Record {
    pub fn lesion_area(&self) -> usize {
        self.pathology.area()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Record>,
    pub test: Vec<Record>,
    pub healthy: Vec<Record>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Record] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::Healthy => &self.healthy,
        }
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        Split::ALL
            .iter()
            .flat_map(|&s| self.split(s).first())
            .map(|r| r.image.shape())
            .next()
    }
}

fn generate_split(params: &PhantomParams, split: Split, n: usize, seed: u64) -> Result<Vec<Record>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, split.stream_tag(), i as u64);
            let s = generate(params, split.lesioned(), &mut rng)?;
            Ok(Record {
                id: i,
                image: s.image,
                brain: s.brain,
                pathology: s.pathology,
                side: s.lesion_side,
                ventricle_area: s.true_ventricle_area,
            })
        })
        .collect()
}

/// Generates all three splits; runs on the current rayon pool and is
/// independent of its size.
pub fn generate_dataset(config: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    let p = &config.phantom;
    Ok(Dataset {
        train: generate_split(p, Split::Train, config.train_size, seed)?,
        test: generate_split(p, Split::Test, config.test_size, seed)?,
        healthy: generate_split(p, Split::Healthy, config.healthy_size, seed)?,
    })
}

fn join_runs(runs: &[usize]) -> String {
    runs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_runs(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|t| t.parse().ok()).collect()
}

/// Writes images, masks, per-split manifests and the stratification report.
pub fn write_dataset(out: &mut OutputDir, prefix: &str, dataset: &Dataset, config_text: &str) -> Result<()> {
    let shape = dataset.shape().unwrap_or((0, 0));
    out.write(&format!("{prefix}config.txt"), config_text.as_bytes())?;
    for split in Split::ALL {
        let name = split.as_str();
        let mut manifest = format!("# height={} width={}\n", shape.0, shape.1);
        for r in dataset.split(split) {
            let stem = format!("{prefix}{name}/{:04}", r.id);
            out.write(&format!("{stem}.pgm"), &pgm::encode(&r.image))?;
            out.write(&format!("{stem}_brain.pgm"), &pgm::encode_mask(&r.brain))?;
            out.write(&format!("{stem}_lesion.pgm"), &pgm::encode_mask(&r.pathology))?;
            let _ = writeln!(
                manifest,
                "id={:04} side={} lesion_area={} ventricle_area={} brain={} pathology={}",
                r.id,
                r.side.map_or("none", Side::as_str),
                r.lesion_area(),
                r.ventricle_area,
                join_runs(&r.brain.to_rle()),
                join_runs(&r.pathology.to_rle()),
            );
        }
        out.write(&format!("{prefix}{name}/manifest.txt"), manifest.as_bytes())?;
    }
    out.write(
        &format!("{prefix}stratification.csv"),
        stratification_report(dataset)?.as_bytes(),
    )?;
    Ok(())
}

/// Small / medium / large partition of each lesioned split.
pub fn stratification_report(dataset: &Dataset) -> Result<String> {
    let mut out = String::from("split,stratum,count,min_area,max_area,q25,q75\n");
    for split in [Split::Train, Split::Test] {
        let records = dataset.split(split);
        if records.is_empty() {
            continue;
        }
        let areas: Vec<usize> = records.iter().map(Record::lesion_area).collect();
        let Stratification {
            small,
            medium,
            large,
            q25,
            q75,
        } = stratify(&areas)?;
        for (name, idx) in [("small", small), ("medium", medium), ("large", large)] {
            let a: Vec<usize> = idx.iter().map(|&i| areas[i]).collect();
            let _ = writeln!(
                out,
                "{},{name},{},{},{},{q25},{q75}",
                split.as_str(),
                a.len(),
                a.iter().min().map_or(String::new(), |v| v.to_string()),
                a.iter().max().map_or(String::new(), |v| v.to_string()),
            );
        }
    }
    Ok(out)
}

fn read_split(dir: &Path, split: Split) -> Result<Vec<Record>> {
    let split_dir = dir.join(split.as_str());
    let manifest_path = split_dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let bad = |line: usize, why: &str| Error::format(&manifest_path, format!("line {line}: {why}"));
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = |key: &str| -> Result<&str> {
            line.split_whitespace()
                .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| bad(n, &format!("missing `{key}`")))
        };
        let id: usize = field("id")?.parse().map_err(|_| bad(n, "bad id"))?;
        let side = match field("side")? {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            "none" => None,
            _ => return Err(bad(n, "bad side")),
        };
        let lesion_area: usize = field("lesion_area")?.parse().map_err(|_| bad(n, "bad lesion_area"))?;
        let ventricle_area = field("ventricle_area")?
            .parse()
            .map_err(|_| bad(n, "bad ventricle_area"))?;
        let image = pgm::read(split_dir.join(format!("{id:04}.pgm")))?;
        let (h, w) = image.shape();
        let runs = |key: &str| -> Result<Mask> {
            let r = parse_runs(field(key)?).ok_or_else(|| bad(n, &format!("bad `{key}` runs")))?;
            Mask::from_rle(h, w, &r).map_err(|e| bad(n, &e.to_string()))
        };
        let brain = runs("brain")?;
        let pathology = runs("pathology")?;
        if pathology.area() != lesion_area {
            return Err(bad(n, "lesion_area disagrees with the pathology mask"));
        }
        records.push(Record {
            id,
            image,
            brain,
            pathology,
            side,
            ventricle_area,
        });
    }
    Ok(records)
}

/// Reads a dataset written by [`write_dataset`]. Images carry the 8-bit
/// quantisation of the PGM files.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    Ok(Dataset {
        train: read_split(dir, Split::Train)?,
        test: read_split(dir, Split::Test)?,
        healthy: read_split(dir, Split::Healthy)?,
    })
}

/// The configured dataset: read from `dataset.dir` when set, otherwise
/// generated in memory from `seed`.
pub fn load_or_generate(config: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    let ds = match &config.dataset_dir {
        Some(dir) => read_dataset(dir)?,
        None => return generate_dataset(config, seed),
    };
    let want = (config.phantom.height, config.phantom.width);
    if let Some(shape) = ds.shape() {
        if shape != want {
            return Err(Error::Shape {
                expected: want,
                found: shape,
            });
        }
    }
    Ok(ds)
}
