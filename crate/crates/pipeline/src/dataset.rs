//! Synthetic low-dose datasets.
//!
//! Each sample is a random-ellipse phantom, its noiseless sinogram, a
//! Poisson-noisy log-normalised sinogram and the FBP reconstruction of the
//! noisy data, all stored as CTR1 rasters. `manifest.jsonl` holds a header
//! record with the geometry, dose and seed, then one record per sample with
//! its split and the SHA-256 of every file.
//!
//! Images cover the square `[-1, 1]^2`, so the pixel size is `2 / N` and
//! phantoms drawn from the same seed have the same shapes at any resolution.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ctkit::geometry::default_detector_count;
use ctkit::io::{read_image, read_sinogram, write_image, write_sinogram};
use ctkit::phantom::RandomEllipseSpec;
use ctkit::{
    fbp_reconstruct, forward_project, log_normalize, simulate_intensity, FilterSpec, GridShape, ImageGrid,
    ParallelGeometry, Sinogram,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::seeds::{stage_rng, stage_seed, Stage};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Side length of the imaged square.
pub const FIELD_OF_VIEW: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub min_ellipses: usize,
    pub max_ellipses: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub clip_max: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        let d = RandomEllipseSpec::default();
        PhantomParams {
            min_ellipses: d.min_ellipses,
            max_ellipses: d.max_ellipses,
            min_value: d.min_value,
            max_value: d.max_value,
            clip_max: d.clip_max,
        }
    }
}

impl PhantomParams {
    fn spec(&self) -> RandomEllipseSpec {
        RandomEllipseSpec {
            min_ellipses: self.min_ellipses,
            max_ellipses: self.max_ellipses,
            min_value: self.min_value,
            max_value: self.max_value,
            clip_max: self.clip_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub image_size: usize,
    pub n_angles: usize,
    /// `None` covers the image diagonal.
    pub n_detectors: Option<usize>,
    /// Photons per detector bin.
    pub i0: f64,
    pub seed: u64,
    pub phantom: PhantomParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_train: 200,
            n_val: 20,
            n_test: 20,
            image_size: 128,
            n_angles: 20,
            n_detectors: None,
            i0: 1e4,
            seed: 0,
            phantom: PhantomParams::default(),
        }
    }
}

impl DatasetConfig {
    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    pub fn image_shape(&self) -> Result<GridShape> {
        let n = self.image_size;
        Ok(GridShape::new(n, n, FIELD_OF_VIEW / n as f64)?)
    }

    pub fn geometry(&self) -> Result<ParallelGeometry> {
        let shape = self.image_shape()?;
        let nd = self.n_detectors.unwrap_or_else(|| default_detector_count(shape.width, shape.height));
        Ok(ParallelGeometry::new(ctkit::geometry::equispaced_angles(self.n_angles), nd, shape.pixel_size, shape)?)
    }

    pub fn split_of(&self, index: usize) -> Split {
        if index < self.n_train {
            Split::Train
        } else if index < self.n_train + self.n_val {
            Split::Val
        } else {
            Split::Test
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(PipelineError::Config("a dataset needs at least one train and one test sample".into()));
        }
        if self.n_angles == 0 {
            return Err(PipelineError::Config("at least one projection angle is required".into()));
        }
        if self.image_size < ctkit::phantom::MIN_PHANTOM_SIZE {
            return Err(PipelineError::Config(format!("image size must be >= {}", ctkit::phantom::MIN_PHANTOM_SIZE)));
        }
        self.phantom.spec().validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub image_size: usize,
    pub pixel_size: f64,
    pub n_angles: usize,
    pub angles: Vec<f64>,
    pub n_detectors: usize,
    pub detector_spacing: f64,
    pub i0: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub phantom: PhantomParams,
    pub filter: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub split: Split,
    pub phantom: FileEntry,
    pub clean: FileEntry,
    pub noisy: FileEntry,
    pub fbp: FileEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header(DatasetHeader),
    Sample(SampleRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub header: DatasetHeader,
    pub samples: Vec<SampleRecord>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn entry(dir: &Path, rel: String) -> Result<FileEntry> {
    let sha256 = sha256_file(&dir.join(&rel))?;
    Ok(FileEntry { path: rel, sha256 })
}

/// Everything derived from one phantom.
pub struct SampleData {
    pub phantom: ImageGrid,
    pub clean: Sinogram,
    pub noisy: Sinogram,
    pub fbp: ImageGrid,
}

/// Simulate sample `index` of a dataset without touching the disk.
pub fn simulate_sample(config: &DatasetConfig, geom: &ParallelGeometry, index: usize) -> Result<SampleData> {
    let mut rng = stage_rng(config.seed, Stage::Phantom, index as u64);
    let raw = config.phantom.spec().generate(config.image_size, &mut rng)?;
    let phantom = ImageGrid::from_vec(geom.image(), raw.into_vec())?;
    let clean = forward_project(&phantom, geom)?;
    let counts = simulate_intensity(&clean, config.i0, true, stage_seed(config.seed, Stage::Noise, index as u64))?;
    let noisy = log_normalize(&counts)?;
    let fbp = fbp_reconstruct(&noisy, &FilterSpec::ram_lak())?;
    Ok(SampleData { phantom, clean, noisy, fbp })
}

fn write_sample(dir: &Path, config: &DatasetConfig, geom: &ParallelGeometry, index: usize) -> Result<SampleRecord> {
    let s = simulate_sample(config, geom, index)?;
    let name = format!("{index:06}.ctr");
    let rel = |sub: &str| format!("{sub}/{name}");
    write_image(&dir.join(rel("phantom")), &s.phantom)?;
    write_sinogram(&dir.join(rel("clean")), &s.clean)?;
    write_sinogram(&dir.join(rel("noisy")), &s.noisy)?;
    write_image(&dir.join(rel("fbp")), &s.fbp)?;
    Ok(SampleRecord {
        index,
        split: config.split_of(index),
        phantom: entry(dir, rel("phantom"))?,
        clean: entry(dir, rel("clean"))?,
        noisy: entry(dir, rel("noisy"))?,
        fbp: entry(dir, rel("fbp"))?,
    })
}

/// Generate every sample in parallel and write the manifest.
pub fn build_dataset(dir: &Path, config: &DatasetConfig) -> Result<Manifest> {
    config.validate()?;
    let geom = config.geometry()?;
    for sub in ["phantom", "clean", "noisy", "fbp"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
    }
    let samples =
        (0..config.total()).into_par_iter().map(|i| write_sample(dir, config, &geom, i)).collect::<Result<Vec<_>>>()?;
    let header = DatasetHeader {
        image_size: config.image_size,
        pixel_size: geom.image().pixel_size,
        n_angles: geom.n_angles(),
        angles: geom.angles().to_vec(),
        n_detectors: geom.n_detectors(),
        detector_spacing: geom.detector_spacing(),
        i0: config.i0,
        seed: config.seed,
        n_train: config.n_train,
        n_val: config.n_val,
        n_test: config.n_test,
        phantom: config.phantom.clone(),
        filter: "ram-lak".into(),
    };
    let manifest = Manifest { dir: dir.to_path_buf(), header, samples };
    manifest.save()?;
    Ok(manifest)
}

impl Manifest {
    pub fn path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Record::Header(self.header.clone())).expect("serialisable");
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(&Record::Sample(s.clone())).expect("serialisable"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self) -> Result<()> {
        let path = self.path();
        let mut f = fs::File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| PipelineError::io(&path, e))
    }

    /// Load from a manifest file or the directory holding one.
    pub fn load(path: &Path) -> Result<Manifest> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = fs::read_to_string(&file).map_err(|e| PipelineError::io(&file, e))?;
        let bad = |msg: String| PipelineError::Manifest { path: file.clone(), msg };
        let mut header = None;
        let mut samples = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: Record = serde_json::from_str(line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
            match record {
                Record::Header(h) if header.is_none() && samples.is_empty() => header = Some(h),
                Record::Header(_) => return Err(bad(format!("line {}: unexpected header", n + 1))),
                Record::Sample(s) => samples.push(s),
            }
        }
        let header = header.ok_or_else(|| bad("no header record".into()))?;
        if samples.len() != header.n_train + header.n_val + header.n_test {
            return Err(bad(format!(
                "{} samples listed but the header declares {}",
                samples.len(),
                header.n_train + header.n_val + header.n_test
            )));
        }
        Ok(Manifest { dir, header, samples })
    }

    pub fn geometry(&self) -> Result<ParallelGeometry> {
        let n = self.header.image_size;
        let shape = GridShape::new(n, n, self.header.pixel_size)?;
        Ok(ParallelGeometry::new(
            self.header.angles.clone(),
            self.header.n_detectors,
            self.header.detector_spacing,
            shape,
        )?)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn file(&self, entry: &FileEntry) -> PathBuf {
        self.dir.join(&entry.path)
    }

    pub fn read_phantom(&self, s: &SampleRecord) -> Result<ImageGrid> {
        Ok(read_image(&self.file(&s.phantom), self.header.pixel_size)?)
    }

    pub fn read_fbp(&self, s: &SampleRecord) -> Result<ImageGrid> {
        Ok(read_image(&self.file(&s.fbp), self.header.pixel_size)?)
    }

    pub fn read_noisy(&self, s: &SampleRecord) -> Result<Sinogram> {
        Ok(read_sinogram(&self.file(&s.noisy), Some(self.geometry()?))?)
    }

    pub fn read_clean(&self, s: &SampleRecord) -> Result<Sinogram> {
        Ok(read_sinogram(&self.file(&s.clean), Some(self.geometry()?))?)
    }

    /// Paths of files whose current hash differs from the manifest.
    pub fn verify(&self) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for s in &self.samples {
            for e in [&s.phantom, &s.clean, &s.noisy, &s.fbp] {
                let p = self.file(e);
                if sha256_file(&p)? != e.sha256 {
                    bad.push(p);
                }
            }
        }
        Ok(bad)
    }
}
