//! Test-split metrics and side-by-side panels.

use std::fmt::Write as _;
use std::path::Path;

use ctkit::io::{write_image, write_pgm};
use ctkit::metrics::{psnr, rmse};
use ctkit_nn::{Network, Tensor};
use rayon::prelude::*;

use crate::dataset::{Manifest, SampleRecord, Split, FIELD_OF_VIEW};
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Fbp,
    Denoised,
    EndToEnd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::Denoised => "fbp+denoiser",
            Method::EndToEnd => "end-to-end",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: Method,
    /// Sample index, `None` for the per-method mean.
    pub index: Option<usize>,
    pub rmse: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,sample,rmse,psnr_db\n");
        for r in &self.rows {
            let sample = r.index.map(|i| i.to_string()).unwrap_or_else(|| "mean".into());
            let _ = writeln!(out, "{},{},{:.9e},{:.6}", r.method.name(), sample, r.rmse, r.psnr);
        }
        out
    }

    pub fn summary(&self, method: Method) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.method == method && r.index.is_none())
    }

    pub fn mean_rmse(&self, method: Method) -> Option<f64> {
        self.summary(method).map(|r| r.rmse)
    }
}

/// An end-to-end model with the dataset it reads sinograms from. Its test
/// split is matched to the main dataset's by sample index.
pub struct EndToEndModel<'a> {
    pub network: &'a Network<f32>,
    pub manifest: &'a Manifest,
}

/// Nearest-neighbour resampling of a square image to `size`.
fn resample(values: &[f64], from: usize, size: usize) -> Vec<f64> {
    if from == size {
        return values.to_vec();
    }
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        let sr = r * from / size;
        for c in 0..size {
            out.push(values[sr * from + c * from / size]);
        }
    }
    out
}

struct ItemResult {
    index: usize,
    truth: Vec<f64>,
    fbp: Vec<f64>,
    denoised: Option<Vec<f64>>,
    /// At the end-to-end dataset's resolution, with its own phantom.
    end_to_end: Option<(Vec<f64>, Vec<f64>, usize)>,
}

fn predict_image(net: &Network<f32>, input: Tensor<f32>) -> Result<Vec<f64>> {
    Ok(net.predict(&input)?.to_f64_vec())
}

fn run_item(
    manifest: &Manifest,
    sample: &SampleRecord,
    denoiser: Option<&Network<f32>>,
    e2e: Option<&EndToEndModel>,
) -> Result<ItemResult> {
    let n = manifest.header.image_size;
    let truth = manifest.read_phantom(sample)?.into_vec();
    let fbp = manifest.read_fbp(sample)?.into_vec();
    let denoised = denoiser.map(|net| predict_image(net, Tensor::from_f64(vec![1, 1, n, n], &fbp)?)).transpose()?;
    let end_to_end = match e2e {
        None => None,
        Some(m) => {
            let other =
                m.manifest.samples.iter().find(|s| s.index == sample.index && s.split == Split::Test).ok_or_else(
                    || PipelineError::MissingModel(format!("end-to-end dataset has no test sample {}", sample.index)),
                )?;
            let h = &m.manifest.header;
            let sino = m.manifest.read_noisy(other)?;
            let pred = predict_image(m.network, Tensor::from_f64(vec![1, 1, h.n_angles, h.n_detectors], sino.data())?)?;
            Some((pred, m.manifest.read_phantom(other)?.into_vec(), h.image_size))
        }
    };
    Ok(ItemResult { index: sample.index, truth, fbp, denoised, end_to_end })
}

fn row(method: Method, index: usize, estimate: &[f64], truth: &[f64]) -> MetricRow {
    let range = truth.iter().copied().fold(0.0, f64::max);
    let e = rmse(estimate, truth);
    MetricRow { method, index: Some(index), rmse: e, psnr: psnr(e, if range > 0.0 { range } else { 1.0 }) }
}

/// Score FBP, the denoiser and the end-to-end model over the test split.
///
/// Rows are one per method and test sample, followed by one mean row per
/// method. The end-to-end model is scored against the phantom of its own
/// dataset. With `out_dir`, writes `metrics.csv`, the restored images as
/// CTR1 and one PGM panel per sample laid out FBP | denoised | end-to-end |
/// ground truth (missing methods are left black).
pub fn evaluate(
    manifest: &Manifest,
    denoiser: Option<&Network<f32>>,
    e2e: Option<&EndToEndModel>,
    out_dir: Option<&Path>,
) -> Result<MetricsTable> {
    let tests: Vec<&SampleRecord> = manifest.split(Split::Test).collect();
    if tests.is_empty() {
        return Err(PipelineError::Config("the dataset has no test samples".into()));
    }
    let items = tests.par_iter().map(|s| run_item(manifest, s, denoiser, e2e)).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for item in &items {
        rows.push(row(Method::Fbp, item.index, &item.fbp, &item.truth));
        if let Some(d) = &item.denoised {
            rows.push(row(Method::Denoised, item.index, d, &item.truth));
        }
        if let Some((pred, truth, _)) = &item.end_to_end {
            rows.push(row(Method::EndToEnd, item.index, pred, truth));
        }
    }
    rows.sort_by_key(|r| (r.method, r.index));
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.dedup();
    for m in methods {
        let of: Vec<&MetricRow> = rows.iter().filter(|r| r.method == m).collect();
        let k = of.len() as f64;
        rows.push(MetricRow {
            method: m,
            index: None,
            rmse: of.iter().map(|r| r.rmse).sum::<f64>() / k,
            psnr: of.iter().map(|r| r.psnr).sum::<f64>() / k,
        });
    }
    let table = MetricsTable { rows };

    if let Some(dir) = out_dir {
        write_outputs(dir, manifest, &items, &table)?;
    }
    Ok(table)
}

fn write_outputs(dir: &Path, manifest: &Manifest, items: &[ItemResult], table: &MetricsTable) -> Result<()> {
    let n = manifest.header.image_size;
    for sub in ["panels", "denoised", "end_to_end"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
    }
    let csv = dir.join("metrics.csv");
    std::fs::write(&csv, table.to_csv()).map_err(|e| PipelineError::io(&csv, e))?;
    let shape = manifest.geometry()?.image();
    for item in items {
        let name = format!("{:06}", item.index);
        if let Some(d) = &item.denoised {
            let img = ctkit::ImageGrid::from_vec(shape, d.clone())?;
            write_image(&dir.join("denoised").join(format!("{name}.ctr")), &img)?;
        }
        let e2e_up = match &item.end_to_end {
            Some((pred, _, side)) => {
                let s = ctkit::GridShape::new(*side, *side, FIELD_OF_VIEW / *side as f64)?;
                let img = ctkit::ImageGrid::from_vec(s, pred.clone())?;
                write_image(&dir.join("end_to_end").join(format!("{name}.ctr")), &img)?;
                Some(resample(pred, *side, n))
            }
            None => None,
        };
        let blank = vec![0.0; n * n];
        let panels: [&[f64]; 4] =
            [&item.fbp, item.denoised.as_deref().unwrap_or(&blank), e2e_up.as_deref().unwrap_or(&blank), &item.truth];
        let mut strip = Vec::with_capacity(4 * n * n);
        for r in 0..n {
            for p in panels {
                strip.extend_from_slice(&p[r * n..(r + 1) * n]);
            }
        }
        write_pgm(&dir.join("panels").join(format!("{name}.pgm")), 4 * n, n, &strip)?;
    }
    Ok(())
}
