//! `openlogo` command-line interface.
//!
//! Exit codes: 0 on success, 1 for bad input or failed validation, 2 when an
//! internal invariant breaks.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{
    exclude_brands, holdout_split, import_voc_xml, load_dataset, merge, save_dataset,
    stats_with_thresholds, Dataset, DEFAULT_BRAND_THRESHOLDS,
};
use crate::error::{Error, Result};
use crate::eval::{
    detection_froc, run_open_set_protocol, write_curve_csv, ApMode, ProtocolConfig, QuerySet,
    DEFAULT_FPPI_GRID,
};
use crate::features::{load_embeddings, BaselineDescriptor, FeatureExtractor, RegionRef};
use crate::geometry::{BBox, DEFAULT_IOU_THRESHOLD};
use crate::retrieval::{
    build_index, load_detections, load_index, oracle_detections, query, query_from_region,
    save_index, Detection, ImageDir, IndexOptions, QueryOptions, RankedMatch,
};

#[derive(Debug, Parser)]
#[command(name = "openlogo", version, about = "Open-set logo retrieval and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print dataset statistics as JSON.
    Stats(StatsArgs),
    /// Convert a directory of VOC XML files to the JSONL format.
    ImportVoc(ImportVocArgs),
    /// Remove brands, then hold out a validation fraction of images.
    Split(SplitArgs),
    /// Concatenate two datasets.
    Merge(MergeArgs),
    /// Detect, describe and index logos of a dataset.
    Index(IndexArgs),
    /// Rank indexed logos against one query example.
    Query(QueryArgs),
    /// Run the open-set query protocol and write report and curves.
    Evaluate(EvaluateArgs),
    /// Class-agnostic detection FROC of a detections file.
    Froc(FrocArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub dataset: PathBuf,
    /// Thresholds for the "brands with at least N RoIs" counts.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct ImportVocArgs {
    pub directory: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub dataset: PathBuf,
    /// File with one brand per line; blank lines and `#` comments ignored.
    #[arg(long)]
    pub exclude_brands: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub holdout_fraction: f64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub val_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
}

/// `oracle` or a path to a detections CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectionSource {
    Oracle,
    File(PathBuf),
}

impl FromStr for DetectionSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "oracle" {
            Self::Oracle
        } else {
            Self::File(PathBuf::from(s))
        })
    }
}

/// `baseline` or a path to an embeddings file.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorSource {
    Baseline,
    Embeddings(PathBuf),
}

impl FromStr for ExtractorSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "baseline" {
            Self::Baseline
        } else {
            Self::Embeddings(PathBuf::from(s))
        })
    }
}

impl ExtractorSource {
    fn load(&self) -> Result<Box<dyn FeatureExtractor>> {
        Ok(match self {
            Self::Baseline => Box::new(BaselineDescriptor),
            Self::Embeddings(path) => Box::new(load_embeddings(path)?),
        })
    }
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    pub dataset: PathBuf,
    #[arg(long, default_value = "oracle")]
    pub detections: DetectionSource,
    #[arg(long, default_value = "baseline")]
    pub extractor: ExtractorSource,
    /// Directory image paths are relative to; defaults to the dataset's directory.
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// Skip detections scoring below this.
    #[arg(long)]
    pub min_detector_score: Option<f64>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub index: PathBuf,
    /// Image holding the query logo.
    #[arg(long, requires = "region", conflicts_with = "query_embeddings")]
    pub image: Option<PathBuf>,
    /// Query region as `x,y,w,h`.
    #[arg(long)]
    pub region: Option<BoxArg>,
    /// Embeddings file holding the query feature.
    #[arg(long)]
    pub query_embeddings: Option<PathBuf>,
    /// Row of `--query-embeddings` to use, as `image_id#roi_index`; defaults to the first.
    #[arg(long, requires = "query_embeddings")]
    pub query_key: Option<String>,
    #[arg(long, default_value = "baseline")]
    pub extractor: ExtractorSource,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub min_similarity: f64,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Write CSV here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxArg(pub BBox);

impl FromStr for BoxArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<u32> = s
            .split(',')
            .map(|p| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match parts[..] {
            [x, y, w, h] => BBox::new(x, y, w, h)
                .map(BoxArg)
                .ok_or_else(|| "width and height must be positive".to_string()),
            _ => Err("expected x,y,w,h".to_string()),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Annotated test dataset the index was built over.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Dataset whose RoIs are the query examples.
    #[arg(long)]
    pub queries: PathBuf,
    /// Image root of the query dataset; defaults to its directory.
    #[arg(long)]
    pub query_image_root: Option<PathBuf>,
    #[arg(long, default_value = "baseline")]
    pub extractor: ExtractorSource,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    #[arg(long, value_delimiter = ',')]
    pub fppi_grid: Option<Vec<f64>>,
    /// Query rounds; defaults to the smallest per-brand query count.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, value_enum, default_value_t = ApModeArg::Uninterpolated)]
    pub ap_mode: ApModeArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ApModeArg {
    Uninterpolated,
    ElevenPoint,
}

impl From<ApModeArg> for ApMode {
    fn from(m: ApModeArg) -> Self {
        match m {
            ApModeArg::Uninterpolated => ApMode::Uninterpolated,
            ApModeArg::ElevenPoint => ApMode::ElevenPoint,
        }
    }
}

#[derive(Debug, Args)]
pub struct FrocArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub detections: DetectionSource,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Internal(_) => 2,
        _ => 1,
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats(a) => cmd_stats(a),
        Command::ImportVoc(a) => cmd_import_voc(a),
        Command::Split(a) => cmd_split(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Index(a) => cmd_index(a),
        Command::Query(a) => cmd_query(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Froc(a) => cmd_froc(a),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Internal(e.to_string()))?;
    writeln!(out).map_err(|e| Error::io("<stdout>", e))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn dataset_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn check_unit_range(name: &'static str, value: f64, lo: f64, hi: f64, range: &'static str) -> Result<()> {
    if value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    require_file(&args.dataset, "dataset")?;
    let dataset = load_dataset(&args.dataset)?;
    let thresholds = args
        .thresholds
        .unwrap_or_else(|| DEFAULT_BRAND_THRESHOLDS.to_vec());
    print_json(&stats_with_thresholds(&dataset, &thresholds))
}

fn cmd_import_voc(args: ImportVocArgs) -> Result<()> {
    let dataset = import_voc_xml(&args.directory)?;
    save_dataset(&dataset, &args.output)?;
    eprintln!(
        "imported {} images, {} RoIs",
        dataset.len(),
        dataset.n_rois()
    );
    Ok(())
}

#[derive(Serialize)]
struct PartSummary {
    images: usize,
    brands: usize,
    rois: usize,
}

impl PartSummary {
    fn of(d: &Dataset) -> Self {
        Self {
            images: d.len(),
            brands: d.brands().len(),
            rois: d.n_rois(),
        }
    }
}

fn read_brand_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(crate::dataset::normalize_brand)
        .collect())
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    check_unit_range("holdout_fraction", args.holdout_fraction, 0.0, 1.0, "[0, 1]")?;
    require_file(&args.dataset, "dataset")?;
    let dataset = load_dataset(&args.dataset)?;
    let excluded = match &args.exclude_brands {
        Some(p) => read_brand_list(p)?,
        None => BTreeSet::new(),
    };
    let kept = exclude_brands(&dataset, &excluded);
    let (train, validation) = holdout_split(&kept, args.holdout_fraction)?;
    if dataset.n_rois() > 0 && kept.n_rois() == 0 {
        eprintln!("warning: every brand was excluded; outputs contain no RoIs");
    }
    save_dataset(&train, &args.train_out)?;
    save_dataset(&validation, &args.val_out)?;

    #[derive(Serialize)]
    struct SplitSummary {
        input: PartSummary,
        excluded_brands: usize,
        train: PartSummary,
        validation: PartSummary,
    }
    print_json(&SplitSummary {
        input: PartSummary::of(&dataset),
        excluded_brands: excluded.len(),
        train: PartSummary::of(&train),
        validation: PartSummary::of(&validation),
    })
}

fn cmd_merge(args: MergeArgs) -> Result<()> {
    require_file(&args.first, "dataset")?;
    require_file(&args.second, "dataset")?;
    let merged = merge(&load_dataset(&args.first)?, &load_dataset(&args.second)?)?;
    save_dataset(&merged, &args.output)?;
    print_json(&PartSummary::of(&merged))
}

fn load_detection_source(source: &DetectionSource, dataset: &Dataset) -> Result<Vec<Detection>> {
    match source {
        DetectionSource::Oracle => Ok(oracle_detections(dataset)),
        DetectionSource::File(path) => {
            require_file(path, "detections file")?;
            load_detections(path)
        }
    }
}

fn cmd_index(args: IndexArgs) -> Result<()> {
    require_file(&args.dataset, "dataset")?;
    if let Some(s) = args.min_detector_score {
        check_unit_range("min_detector_score", s, 0.0, 1.0, "[0, 1]")?;
    }
    let dataset = load_dataset(&args.dataset)?;
    let detections = load_detection_source(&args.detections, &dataset)?;
    let extractor = args.extractor.load()?;
    let root = args.image_root.unwrap_or_else(|| dataset_dir(&args.dataset));
    let index = build_index(
        &dataset,
        &detections,
        &ImageDir::new(root),
        extractor.as_ref(),
        IndexOptions {
            min_detector_score: args.min_detector_score,
        },
    )?;
    save_index(&index, &args.output)?;
    eprintln!("indexed {} detections (dim {})", index.len(), index.dim());
    Ok(())
}

fn parse_query_key(key: &str) -> Result<(String, usize)> {
    key.rsplit_once('#')
        .and_then(|(id, idx)| Some((id.to_string(), idx.parse().ok()?)))
        .ok_or_else(|| Error::Usage(format!("query key {key:?} is not `image_id#roi_index`")))
}

fn write_ranked(matches: &[RankedMatch<'_>], out: impl Write) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let internal = |e: csv::Error| Error::Internal(e.to_string());
    wtr.write_record(["image_id", "x", "y", "w", "h", "similarity"])
        .map_err(internal)?;
    for m in matches {
        let d = &m.entry.detection;
        wtr.write_record([
            d.image_id.clone(),
            d.bbox.x.to_string(),
            d.bbox.y.to_string(),
            d.bbox.w.to_string(),
            d.bbox.h.to_string(),
            m.similarity.to_string(),
        ])
        .map_err(internal)?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))
}

fn cmd_query(args: QueryArgs) -> Result<()> {
    check_unit_range("min_similarity", args.min_similarity, -1.0, 1.0, "[-1, 1]")?;
    require_file(&args.index, "index")?;
    let index = load_index(&args.index)?;
    let options = QueryOptions {
        min_similarity: args.min_similarity,
        top_k: args.top_k,
    };

    let matches = match (&args.image, args.region, &args.query_embeddings) {
        (Some(image_path), Some(BoxArg(region)), None) => {
            require_file(image_path, "query image")?;
            let pixels = image::open(image_path)
                .map_err(|e| Error::Image {
                    path: image_path.clone(),
                    message: e.to_string(),
                })?
                .to_rgb8();
            let extractor = args.extractor.load()?;
            let region = RegionRef {
                image_id: "query",
                roi_index: 0,
                region,
            };
            query_from_region(&index, &region, Some(&pixels), extractor.as_ref(), options)?
        }
        (None, _, Some(path)) => {
            require_file(path, "query embeddings")?;
            let table = load_embeddings(path)?;
            let feature = match &args.query_key {
                Some(key) => {
                    let (id, idx) = parse_query_key(key)?;
                    table.get(&id, idx).cloned().ok_or(Error::MissingEmbedding {
                        image_id: id,
                        roi_index: idx,
                    })?
                }
                None => table
                    .iter()
                    .next()
                    .map(|(_, f)| f.clone())
                    .ok_or_else(|| Error::Usage("query embeddings file is empty".into()))?,
            };
            query(&index, &feature, options)?
        }
        _ => {
            return Err(Error::Usage(
                "give either --image with --region, or --query-embeddings".into(),
            ))
        }
    };

    match &args.output {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write_ranked(&matches, BufWriter::new(file))
        }
        None => write_ranked(&matches, io::stdout().lock()),
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    check_unit_range("iou_threshold", args.iou_threshold, f64::MIN_POSITIVE, 1.0, "(0, 1]")?;
    require_file(&args.index, "index")?;
    require_file(&args.dataset, "dataset")?;
    require_file(&args.queries, "query set")?;

    let index = load_index(&args.index)?;
    let test = load_dataset(&args.dataset)?;
    let query_dataset = load_dataset(&args.queries)?;
    if index.dataset_name != test.name {
        eprintln!(
            "warning: index was built over {:?}, evaluating against {:?}",
            index.dataset_name, test.name
        );
    }
    let queries = QuerySet::from_dataset(&query_dataset);
    let extractor = args.extractor.load()?;
    let query_root = args
        .query_image_root
        .unwrap_or_else(|| dataset_dir(&args.queries));
    let config = ProtocolConfig {
        iou_threshold: args.iou_threshold,
        iterations: args.iterations,
        fppi_grid: args.fppi_grid.unwrap_or_else(|| DEFAULT_FPPI_GRID.to_vec()),
        ap_mode: args.ap_mode.into(),
    };
    let report = run_open_set_protocol(
        &index,
        &test,
        &queries,
        &ImageDir::new(query_root),
        extractor.as_ref(),
        &config,
    )?;

    let out = &args.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let report_path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;

    let curve_path = out.join("mean_curve.csv");
    let file = fs::File::create(&curve_path).map_err(|e| Error::io(&curve_path, e))?;
    write_curve_csv(&report.mean_curve, Some(&report.curve_std), BufWriter::new(file))
        .map_err(|e| Error::io(&curve_path, e))?;

    let ap_path = out.join("per_brand_ap.csv");
    let mut ap_csv = String::from("brand,ap\n");
    for (brand, ap) in &report.per_brand_ap {
        let brand = if brand.contains([',', '"', '\n']) {
            format!("\"{}\"", brand.replace('"', "\"\""))
        } else {
            brand.clone()
        };
        ap_csv.push_str(&format!("{brand},{ap}\n"));
    }
    fs::write(&ap_path, ap_csv).map_err(|e| Error::io(&ap_path, e))?;

    #[derive(Serialize)]
    struct Summary {
        map: f64,
        map_std: f64,
        n_iterations: usize,
        n_brands: usize,
    }
    print_json(&Summary {
        map: report.map,
        map_std: report.map_std,
        n_iterations: report.n_iterations,
        n_brands: report.per_brand_ap.len(),
    })
}

fn cmd_froc(args: FrocArgs) -> Result<()> {
    require_file(&args.dataset, "dataset")?;
    let dataset = load_dataset(&args.dataset)?;
    let detections = load_detection_source(&args.detections, &dataset)?;
    let curve = detection_froc(&detections, &dataset, args.iou_threshold)?;
    let io_err = |p: &Path, e| Error::io(p, e);
    match &args.output {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
            write_curve_csv(&curve, None, BufWriter::new(file)).map_err(|e| io_err(path, e))
        }
        None => write_curve_csv(&curve, None, io::stdout().lock())
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}
