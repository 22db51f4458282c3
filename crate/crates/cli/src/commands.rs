use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use featboot_core::bootstrap::{
    align, confidence_ellipses, coverage, replicates, split, Method, SplitSpec,
};
use featboot_core::ellipse::{ConfidenceEllipseSet, Ellipse};
use featboot_core::image::Image;
use featboot_core::io::{
    feature_header, matrix_to_csv, parse_matrix_csv, read_matrix_csv, read_tensor, write_atomic,
    write_json, write_matrix_csv, write_tensor, write_vector_csv,
};
use featboot_core::linalg::{Matrix, Vector};
use featboot_core::procrustes::{DEFAULT_MAX_CYCLES, DEFAULT_TOL};
use featboot_core::SeededRng;
use featboot_rcf::RcfModel;
use featboot_sim::lowrank::run_lowrank_experiment_full;
use featboot_sim::pointprocess::generate_image;
use featboot_sim::{generate_lowrank, LowRankConfig, PointProcessDraw};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{locate, RunConfig};

/// Everything a command needs from the resolved configuration.
pub struct Ctx {
    pub cfg: RunConfig,
    pub text: Option<String>,
}

impl Ctx {
    fn out(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.cfg.out)
            .with_context(|| format!("creating output directory {}", self.cfg.out.display()))?;
        Ok(&self.cfg.out)
    }

    fn check(&self, section: &str, r: featboot_core::Result<()>) -> Result<()> {
        r.map_err(|e| locate(e, section, self.text.as_deref()))
    }

    fn manifest<T: Serialize>(&self, command: &str, outputs: T) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a, T> {
            command: &'a str,
            version: &'a str,
            config: &'a RunConfig,
            outputs: T,
        }
        let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), config: &self.cfg, outputs };
        Ok(write_json(&self.out()?.join("manifest.json"), &m)?)
    }
}

fn numbered_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn simulate_lowrank(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg.lowrank;
    ctx.check("lowrank", cfg.validate())?;
    let mut rng = SeededRng::labelled(cfg.seed, featboot_sim::lowrank::DATA_STREAMS, 0);
    let data = generate_lowrank(cfg, &mut rng)?;
    let out = ctx.out()?;
    write_matrix_csv(&out.join("X.csv"), &data.x, &numbered_header("x", cfg.dim))?;
    write_vector_csv(&out.join("y.csv"), "y", data.y.as_slice())?;
    write_matrix_csv(&out.join("truth_coords.csv"), &data.truth(), &numbered_header("dim", cfg.rank))?;
    ctx.manifest("simulate-lowrank", ["X.csv", "y.csv", "truth_coords.csv"])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub file: String,
    pub y: f64,
    pub params: PointProcessDraw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImageManifest {
    command: String,
    version: String,
    config: RunConfig,
    outputs: Vec<ImageRecord>,
}

fn write_png(path: &Path, img: &Image) -> Result<()> {
    let (h, w, c) = img.shape();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        for ch in 0..3 {
            let v = if ch < c { img.get(y as usize, x as usize, ch) } else { 0.0 };
            px.0[ch] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    let mut bytes = Vec::new();
    buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    Ok(write_atomic(path, &bytes)?)
}

pub fn simulate_images(ctx: &Ctx) -> Result<()> {
    let icfg = &ctx.cfg.images;
    ctx.check("images.simulation", icfg.simulation.validate())?;
    if icfg.count == 0 {
        ctx.check("images", Err(featboot_core::Error::invalid("count", "need at least one image")))?;
    }
    let out = ctx.out()?;
    let dir = out.join("images");
    std::fs::create_dir_all(&dir)?;
    let seed = ctx.cfg.seed();
    let records = (0..icfg.count)
        .into_par_iter()
        .map(|i| -> Result<ImageRecord> {
            let sample = generate_image(i, seed, &icfg.simulation)?;
            let file = format!("images/img_{i:05}.f32");
            write_tensor(&out.join(&file), &sample.image)?;
            if icfg.png {
                write_png(&out.join(format!("images/img_{i:05}.png")), &sample.image)?;
            }
            Ok(ImageRecord { file, y: sample.y, params: sample.params })
        })
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = records.iter().map(|r| r.y).collect();
    write_vector_csv(&out.join("y.csv"), "y", &y)?;
    ctx.manifest("simulate-images", records)
}

fn load_image_dataset(dir: &Path) -> Result<(Vec<Image>, Vec<f64>)> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: ImageManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if manifest.command != "simulate-images" {
        bail!("{} was written by `{}`, not `simulate-images`", path.display(), manifest.command);
    }
    let images = manifest
        .outputs
        .par_iter()
        .map(|r| read_tensor(&dir.join(&r.file)).with_context(|| format!("reading {}", r.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((images, manifest.outputs.iter().map(|r| r.y).collect()))
}

pub enum FeatureSource {
    Rcf { data: PathBuf, split: Option<PathBuf> },
    Files(Vec<PathBuf>),
}

pub fn extract(ctx: &Ctx, source: &FeatureSource) -> Result<()> {
    match source {
        FeatureSource::Rcf { data, split: split_file } => extract_rcf(ctx, data, split_file.as_deref()),
        FeatureSource::Files(files) => ingest_files(ctx, files),
    }
}

const KERNEL_STREAMS: &str = "rcf-kernels";
const RESAMPLE_STREAMS: &str = "rcf-resample";
const SPLIT_STREAMS: &str = "split";

fn extract_rcf(ctx: &Ctx, data: &Path, split_file: Option<&Path>) -> Result<()> {
    let ecfg = &ctx.cfg.extract;
    ctx.check("extract.model", ecfg.model.validate())?;
    if ecfg.replicates == 0 {
        ctx.check("extract", Err(featboot_core::Error::invalid("replicates", "need at least one extractor")))?;
    }
    let (images, y) = load_image_dataset(data)?;
    let seed = ctx.cfg.seed();
    let spec: SplitSpec = match split_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => split(images.len(), ecfg.learn_fraction, &mut SeededRng::labelled(seed, SPLIT_STREAMS, 0))?,
    };
    let n = images.len();
    if let Some(bad) = spec.learn_indices.iter().chain(&spec.infer_indices).find(|&&i| i >= n) {
        bail!("split index {bad} out of range for {n} images");
    }
    if spec.learn_indices.is_empty() || spec.infer_indices.is_empty() {
        bail!("split needs non-empty learning and inference sets");
    }
    let infer: Vec<Image> = spec.infer_indices.iter().map(|&i| images[i].clone()).collect();
    let out = ctx.out()?;
    let mut files = Vec::with_capacity(ecfg.replicates);
    for r in 0..ecfg.replicates {
        let learn: Vec<usize> = if ecfg.resample && ecfg.replicates > 1 {
            let mut rng = SeededRng::labelled(seed, RESAMPLE_STREAMS, r as u64);
            (0..spec.learn_indices.len()).map(|_| spec.learn_indices[rng.index(spec.learn_indices.len())]).collect()
        } else {
            spec.learn_indices.clone()
        };
        let train: Vec<Image> = learn.iter().map(|&i| images[i].clone()).collect();
        let train_y: Vec<f64> = learn.iter().map(|&i| y[i]).collect();
        let stream = if ecfg.resample { r as u64 } else { 0 };
        let model = RcfModel::train(&ecfg.model, &train, &train_y, &mut SeededRng::labelled(seed, KERNEL_STREAMS, stream))?;
        let z = model.features(&infer)?;
        let file = format!("features_{r:03}.csv");
        write_matrix_csv(&out.join(&file), &z, &feature_header(z.ncols()))?;
        if ecfg.save_models {
            model.save(&out.join(format!("model_{r:03}")))?;
        }
        files.push(file);
    }
    write_json(&out.join("split.json"), &spec)?;
    let y_infer: Vec<f64> = spec.infer_indices.iter().map(|&i| y[i]).collect();
    write_vector_csv(&out.join("y.csv"), "y", &y_infer)?;
    ctx.manifest("extract", files)
}

fn ingest_files(ctx: &Ctx, files: &[PathBuf]) -> Result<()> {
    if files.is_empty() {
        bail!("--features file needs at least one --inputs CSV");
    }
    let out = ctx.out()?;
    let mut shape = None;
    let mut written = Vec::with_capacity(files.len());
    for (r, path) in files.iter().enumerate() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let (_, m) = parse_matrix_csv(&text, &path.display().to_string())?;
        match shape {
            None => shape = Some(m.shape()),
            Some(s) if s != m.shape() => bail!(
                "{} is {}x{}, expected {}x{} like the first input",
                path.display(),
                m.nrows(),
                m.ncols(),
                s.0,
                s.1
            ),
            _ => {}
        }
        let file = format!("features_{r:03}.csv");
        write_atomic(&out.join(&file), text.as_bytes())?;
        written.push(file);
    }
    ctx.manifest("extract", written)
}

/// Expands directories into their `features_*.csv` files, sorted by name.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("features_") && n.ends_with(".csv"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

#[derive(Serialize, Deserialize)]
struct EllipseRecord {
    sample: usize,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    regularization: f64,
    area: f64,
}

#[derive(Serialize, Deserialize)]
struct EllipsesFile {
    level: f64,
    quantile: f64,
    rank: usize,
    ellipses: Vec<EllipseRecord>,
}

fn ellipses_to_file(set: &ConfidenceEllipseSet) -> EllipsesFile {
    EllipsesFile {
        level: set.level,
        quantile: set.quantile,
        rank: set.dim(),
        ellipses: set
            .ellipses
            .iter()
            .enumerate()
            .map(|(i, e)| EllipseRecord {
                sample: i,
                mean: e.mean.iter().copied().collect(),
                covariance: e.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
                regularization: e.regularization,
                area: set.area(i),
            })
            .collect(),
    }
}

fn ellipses_from_file(path: &Path) -> Result<ConfidenceEllipseSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let f: EllipsesFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if f.ellipses.is_empty() {
        bail!("{} contains no ellipses", path.display());
    }
    let ellipses = f
        .ellipses
        .iter()
        .map(|r| {
            let k = r.mean.len();
            if r.covariance.len() != k || r.covariance.iter().any(|row| row.len() != k) {
                bail!("ellipse {} has a covariance that is not {k}x{k}", r.sample);
            }
            let cov = Matrix::from_fn(k, k, |i, j| r.covariance[i][j]);
            Ok(Ellipse::new(Vector::from_vec(r.mean.clone()), cov, r.regularization)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = ConfidenceEllipseSet::new(ellipses, 1.0 - f.level)?;
    // The stored quantile is authoritative; `level` only labels it.
    set.quantile = f.quantile;
    Ok(set)
}

#[derive(Serialize)]
struct CoverageFile {
    method: Method,
    n: usize,
    #[serde(rename = "B")]
    replicates: usize,
    alpha: f64,
    coverage: f64,
    mean_area: f64,
}

pub fn bootstrap(ctx: &Ctx, inputs: &[PathBuf], truth: Option<&Path>) -> Result<()> {
    let files = expand_inputs(inputs)?;
    if files.is_empty() {
        bail!("no feature CSVs given");
    }
    let mut cfg = ctx.cfg.bootstrap.clone();
    match cfg.method {
        Method::Parametric if files.len() != 1 => {
            bail!("parametric bootstrap takes exactly one feature CSV, got {}", files.len())
        }
        Method::Nonparametric => cfg.replicates = files.len(),
        Method::Compromise => cfg.extractors = files.len(),
        _ => {}
    }
    ctx.check("bootstrap", cfg.validate())?;
    let sets = files
        .iter()
        .map(|f| Ok(read_matrix_csv(f).with_context(|| format!("reading {}", f.display()))?.1))
        .collect::<Result<Vec<_>>>()?;
    let reps = align(replicates(&sets, &cfg)?, DEFAULT_TOL, DEFAULT_MAX_CYCLES)?;
    let set = confidence_ellipses(&reps, cfg.alpha)?;
    let out = ctx.out()?;
    let mut outputs = vec!["ellipses.json"];
    if ctx.cfg.emit.csv {
        let aligned = reps.aligned_coords().expect("aligned above");
        let mut text = String::from("replicate,sample,dim,value\n");
        for (b, m) in aligned.iter().enumerate() {
            for i in 0..m.nrows() {
                for k in 0..m.ncols() {
                    text.push_str(&format!("{b},{i},{k},{}\n", m[(i, k)]));
                }
            }
        }
        write_atomic(&out.join("aligned_coords.csv"), text.as_bytes())?;
        outputs.push("aligned_coords.csv");
    }
    write_json(&out.join("ellipses.json"), &ellipses_to_file(&set))?;
    if let Some(t) = truth {
        let (_, truth) = read_matrix_csv(t).with_context(|| format!("reading {}", t.display()))?;
        let cov = coverage(&set, &truth)?;
        let report = CoverageFile {
            method: cfg.method,
            n: set.len(),
            replicates: reps.replicates(),
            alpha: cfg.alpha,
            coverage: cov,
            mean_area: set.mean_area(),
        };
        write_json(&out.join("coverage.json"), &report)?;
        outputs.push("coverage.json");
    }
    let mut effective = ctx.cfg.clone();
    effective.bootstrap = cfg;
    Ctx { cfg: effective, text: None }.manifest("bootstrap", outputs)
}

pub fn report(ctx: &Ctx, ellipses: &Path, shade: Option<&Path>) -> Result<()> {
    let set = ellipses_from_file(ellipses)?;
    let shade = match shade {
        Some(p) => {
            let (_, m) = read_matrix_csv(p).with_context(|| format!("reading {}", p.display()))?;
            if m.nrows() != set.len() || m.ncols() != 1 {
                bail!("{} must have one column and {} rows", p.display(), set.len());
            }
            Some(m.column(0).iter().copied().collect::<Vec<_>>())
        }
        None => None,
    };
    let summary = Matrix::from_fn(set.len(), 3, |i, j| match j {
        0 => i as f64,
        1 => set.area(i),
        _ => set.ellipses[i].eccentricity(),
    });
    let csv = matrix_to_csv(&summary, &["sample".into(), "area".into(), "eccentricity".into()])?;
    let svg = ctx.cfg.emit.svg.then(|| crate::svg::render(&set, shade.as_deref()));
    let out = ctx.out()?;
    write_atomic(&out.join("ellipse_summary.csv"), csv.as_bytes())?;
    let mut outputs = vec!["ellipse_summary.csv"];
    if let Some(svg) = svg {
        write_atomic(&out.join("figure.svg"), svg.as_bytes())?;
        outputs.push("figure.svg");
    }
    ctx.manifest("report", outputs)
}

pub fn experiment_lowrank(ctx: &Ctx) -> Result<()> {
    let lcfg: &LowRankConfig = &ctx.cfg.lowrank;
    ctx.check("lowrank", lcfg.validate())?;
    ctx.check("bootstrap", ctx.cfg.bootstrap.validate())?;
    let exp = run_lowrank_experiment_full(lcfg, &ctx.cfg.bootstrap)?;
    let out = ctx.out()?;
    write_json(&out.join("report.json"), &exp.report)?;
    let mut outputs = vec!["report.json"];
    if ctx.cfg.emit.json {
        write_json(&out.join("ellipses.json"), &ellipses_to_file(&exp.ellipses))?;
        outputs.push("ellipses.json");
    }
    if ctx.cfg.emit.csv {
        write_matrix_csv(&out.join("truth_aligned.csv"), &exp.aligned_truth, &numbered_header("dim", exp.aligned_truth.ncols()))?;
        write_vector_csv(&out.join("y.csv"), "y", exp.dataset.y.as_slice())?;
        outputs.extend(["truth_aligned.csv", "y.csv"]);
    }
    eprintln!(
        "{}: coverage {:.4}, mean area {:.4e}, {:.1?}",
        exp.report.method, exp.report.coverage, exp.report.mean_area, exp.report.runtime
    );
    ctx.manifest("experiment-lowrank", outputs)
}
