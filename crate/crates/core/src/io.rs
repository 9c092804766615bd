//! On-disk formats.
//!
//! `CTR1` rasters: the magic `CTR1`, little-endian `u32` width, height and
//! channel count, then `channels * height * width` little-endian `f32`
//! values, channel-major then row-major.
//!
//! Sinograms are stored as single-channel rasters with `width = n_detectors`
//! and `height = n_angles`, next to a `<file>.hdr` text sidecar of
//! `key=value` lines carrying the geometry (and `i0` for photon counts).
//!
//! PGM export writes binary `P5` with a 16-bit max value, min-max windowed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::acquisition::IntensityRecord;
use crate::error::{CtError, Result};
use crate::geometry::ParallelGeometry;
use crate::grid::{GridShape, ImageGrid};
use crate::sinogram::Sinogram;

pub const CTR1_MAGIC: &[u8; 4] = b"CTR1";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(CtError::DimensionMismatch(format!(
                "raster {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Raster { width, height, channels, data })
    }

    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        Raster::new(width, height, 1, values.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

pub fn encode_ctr1(raster: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * raster.data.len());
    out.extend_from_slice(CTR1_MAGIC);
    for dim in [raster.width, raster.height, raster.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in &raster.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_ctr1(bytes: &[u8]) -> std::result::Result<Raster, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("file too short for a CTR1 header ({} bytes)", bytes.len()));
    }
    if &bytes[0..4] != CTR1_MAGIC {
        return Err("missing CTR1 magic".into());
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let (width, height, channels) = (word(0), word(1), word(2));
    let count = width.checked_mul(height).and_then(|n| n.checked_mul(channels)).ok_or("raster dimensions overflow")?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * count {
        return Err(format!(
            "{width}x{height}x{channels} raster needs {} payload bytes, found {}",
            4 * count,
            payload.len()
        ));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Raster { width, height, channels, data })
}

pub fn write_ctr1(path: &Path, raster: &Raster) -> Result<()> {
    fs::write(path, encode_ctr1(raster)).map_err(|e| CtError::io(path, e))
}

pub fn read_ctr1(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| CtError::io(path, e))?;
    decode_ctr1(&bytes).map_err(|msg| CtError::format(path, msg))
}

pub fn write_image(path: &Path, image: &ImageGrid) -> Result<()> {
    write_ctr1(path, &Raster::from_f64(image.width(), image.height(), image.data())?)
}

/// Read a single-channel raster as an image with the given pixel size.
pub fn read_image(path: &Path, pixel_size: f64) -> Result<ImageGrid> {
    let raster = read_ctr1(path)?;
    if raster.channels != 1 {
        return Err(CtError::format(
            path,
            format!("expected a single-channel image, found {} channels", raster.channels),
        ));
    }
    ImageGrid::from_vec(GridShape::new(raster.width, raster.height, pixel_size)?, raster.to_f64())
}

/// Geometry and acquisition metadata stored next to a sinogram raster.
#[derive(Debug, Clone, PartialEq)]
pub struct SinogramHeader {
    pub angles: Vec<f64>,
    pub detector_spacing: f64,
    pub pixel_size: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub i0: Option<f64>,
    pub noisy: Option<bool>,
}

impl SinogramHeader {
    pub fn from_geometry(geom: &ParallelGeometry) -> Self {
        let image = geom.image();
        SinogramHeader {
            angles: geom.angles().to_vec(),
            detector_spacing: geom.detector_spacing(),
            pixel_size: image.pixel_size,
            image_width: image.width,
            image_height: image.height,
            i0: None,
            noisy: None,
        }
    }

    pub fn geometry(&self, n_detectors: usize) -> Result<ParallelGeometry> {
        let image = GridShape::new(self.image_width, self.image_height, self.pixel_size)?;
        ParallelGeometry::new(self.angles.clone(), n_detectors, self.detector_spacing, image)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let angles: Vec<String> = self.angles.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "angles={}", angles.join(","));
        let _ = writeln!(out, "detector_spacing={}", self.detector_spacing);
        let _ = writeln!(out, "pixel_size={}", self.pixel_size);
        let _ = writeln!(out, "image_width={}", self.image_width);
        let _ = writeln!(out, "image_height={}", self.image_height);
        if let Some(i0) = self.i0 {
            let _ = writeln!(out, "i0={i0}");
        }
        if let Some(noisy) = self.noisy {
            let _ = writeln!(out, "noisy={noisy}");
        }
        out
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut angles = None;
        let mut detector_spacing = None;
        let mut pixel_size = None;
        let mut image_width = None;
        let mut image_height = None;
        let mut i0 = None;
        let mut noisy = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1));
            let int = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("line {}: {e}", n + 1));
            match key.trim() {
                "angles" => {
                    angles = Some(
                        value
                            .split(',')
                            .filter(|s| !s.trim().is_empty())
                            .map(num)
                            .collect::<std::result::Result<Vec<_>, _>>()?,
                    )
                }
                "detector_spacing" => detector_spacing = Some(num(value)?),
                "pixel_size" => pixel_size = Some(num(value)?),
                "image_width" => image_width = Some(int(value)?),
                "image_height" => image_height = Some(int(value)?),
                "i0" => i0 = Some(num(value)?),
                "noisy" => noisy = Some(value.trim().parse::<bool>().map_err(|e| format!("line {}: {e}", n + 1))?),
                other => return Err(format!("line {}: unknown key `{other}`", n + 1)),
            }
        }
        let missing = |k: &str| format!("missing `{k}`");
        Ok(SinogramHeader {
            angles: angles.ok_or_else(|| missing("angles"))?,
            detector_spacing: detector_spacing.ok_or_else(|| missing("detector_spacing"))?,
            pixel_size: pixel_size.ok_or_else(|| missing("pixel_size"))?,
            image_width: image_width.ok_or_else(|| missing("image_width"))?,
            image_height: image_height.ok_or_else(|| missing("image_height"))?,
            i0,
            noisy,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".hdr");
    PathBuf::from(name)
}

pub fn write_header(path: &Path, header: &SinogramHeader) -> Result<()> {
    let side = sidecar_path(path);
    fs::write(&side, header.to_text()).map_err(|e| CtError::io(side, e))
}

pub fn read_header(path: &Path) -> Result<SinogramHeader> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| CtError::io(&side, e))?;
    SinogramHeader::parse(&text).map_err(|msg| CtError::format(side, msg))
}

pub fn write_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    let raster = Raster::from_f64(sino.n_detectors(), sino.n_angles(), sino.data())?;
    write_ctr1(path, &raster)?;
    write_header(path, &SinogramHeader::from_geometry(sino.geometry()))
}

/// Read a sinogram raster. The geometry comes from `geometry` when given,
/// otherwise from the sidecar header.
pub fn read_sinogram(path: &Path, geometry: Option<ParallelGeometry>) -> Result<Sinogram> {
    let raster = read_ctr1(path)?;
    if raster.channels != 1 {
        return Err(CtError::format(path, "sinogram raster must have one channel"));
    }
    let geom = match geometry {
        Some(g) => g,
        None => read_header(path)?.geometry(raster.width)?,
    };
    if geom.n_detectors() != raster.width || geom.n_angles() != raster.height {
        return Err(CtError::format(
            path,
            format!(
                "raster is {} detectors x {} angles but geometry has {} x {}",
                raster.width,
                raster.height,
                geom.n_detectors(),
                geom.n_angles()
            ),
        ));
    }
    Sinogram::from_vec(geom, raster.to_f64())
}

pub fn write_intensity(path: &Path, rec: &IntensityRecord) -> Result<()> {
    let geom = rec.geometry();
    let raster = Raster::from_f64(geom.n_detectors(), geom.n_angles(), rec.counts())?;
    write_ctr1(path, &raster)?;
    let mut header = SinogramHeader::from_geometry(geom);
    header.i0 = Some(rec.i0());
    header.noisy = Some(rec.is_noisy());
    write_header(path, &header)
}

pub fn read_intensity(path: &Path) -> Result<IntensityRecord> {
    let raster = read_ctr1(path)?;
    let header = read_header(path)?;
    let i0 = header.i0.ok_or_else(|| CtError::format(sidecar_path(path), "photon-count header lacks i0"))?;
    let geom = header.geometry(raster.width)?;
    if geom.n_angles() != raster.height {
        return Err(CtError::format(path, "angle count does not match raster height"));
    }
    IntensityRecord::new(geom, i0, raster.to_f64(), header.noisy.unwrap_or(false))
}

/// Parse an angle list: one radian value per line, `#` comments allowed.
pub fn parse_angles(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| l.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

pub fn read_angles(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CtError::io(path, e))?;
    parse_angles(&text).map_err(|msg| CtError::format(path, msg))
}

/// Encode values as a 16-bit binary PGM, linearly windowed from the data
/// minimum (black) to maximum (white). Constant images come out black.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "pixel count must match dimensions");
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        let level = if span > 0.0 { ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    fs::write(path, encode_pgm(width, height, values)).map_err(|e| CtError::io(path, e))
}
