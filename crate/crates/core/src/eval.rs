//! OTB-layout sequence loading, one-pass evaluation and precision/success metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use serde::Serialize;

use crate::error::{Error, ParseErrorKind, Result};
use crate::scalar::Scalar;
use crate::tracker::{make_provider, BoundingBox, StepReport, Tracker, TrackerConfig};

pub const PRECISION_THRESHOLDS: usize = 51;
pub const SUCCESS_THRESHOLDS: usize = 21;
const IMAGE_EXTENSIONS: [&str; 5] = ["jpg", "jpeg", "png", "ppm", "pnm"];
const GROUND_TRUTH_FILES: [&str; 2] = ["groundtruth_rect.txt", "groundtruth.txt"];

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub name: String,
    pub frame_paths: Vec<PathBuf>,
    /// One entry per frame; `None` where the annotation is missing or degenerate.
    pub ground_truth: Vec<Option<BoundingBox>>,
    pub attributes: Vec<String>,
}

impl SequenceSpec {
    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }

    pub fn load_frame(&self, index: usize) -> Result<RgbImage> {
        load_frame(&self.frame_paths[index])
    }
}

pub fn load_frame(path: &Path) -> Result<RgbImage> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn parse_error(path: &Path, line: usize, kind: ParseErrorKind) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        kind,
    }
}

/// Parses `x,y,w,h` records (comma, tab or space separated). Blank lines are skipped.
/// Records with a non-positive size yield `None`.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<Option<BoundingBox>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(parse_error(path, i + 1, ParseErrorKind::WrongArity(fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| parse_error(path, i + 1, ParseErrorKind::NonNumeric(f.to_string())))?;
        }
        out.push(if v[2] > 0.0 && v[3] > 0.0 && v.iter().all(|x| x.is_finite()) {
            Some(BoundingBox::from_top_left(v[0], v[1], v[2], v[3])?)
        } else {
            None
        });
    }
    Ok(out)
}

/// Loads `dir/img/*` frames (sorted by file name) and `dir/groundtruth_rect.txt`.
pub fn load_sequence(dir: &Path) -> Result<SequenceSpec> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let img_dir = dir.join("img");
    if !img_dir.is_dir() {
        return Err(parse_error(&img_dir, 0, ParseErrorKind::MissingFile));
    }
    let mut frame_paths: Vec<PathBuf> = fs::read_dir(&img_dir)
        .map_err(|e| Error::io(&img_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    frame_paths.sort();
    if frame_paths.is_empty() {
        return Err(parse_error(&img_dir, 0, ParseErrorKind::NoFrames));
    }
    let gt_path = GROUND_TRUTH_FILES
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
        .ok_or_else(|| parse_error(&dir.join(GROUND_TRUTH_FILES[0]), 0, ParseErrorKind::MissingFile))?;
    let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let ground_truth = parse_boxes(&text, &gt_path)?;
    if ground_truth.len() != frame_paths.len() {
        return Err(parse_error(
            &gt_path,
            ground_truth.len(),
            ParseErrorKind::CountMismatch {
                ground_truth: ground_truth.len(),
                frames: frame_paths.len(),
            },
        ));
    }
    let attr_path = dir.join("attributes.txt");
    let attributes = if attr_path.is_file() {
        fs::read_to_string(&attr_path)
            .map_err(|e| Error::io(&attr_path, e))?
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };
    Ok(SequenceSpec {
        name,
        frame_paths,
        ground_truth,
        attributes,
    })
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.extent();
    let (bx0, by0, bx1, by1) = b.extent();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    // areas from the same extents, so identical boxes score exactly 1
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn center_error(a: &BoundingBox, b: &BoundingBox) -> f64 {
    ((a.center.0 - b.center.0).powi(2) + (a.center.1 - b.center.1).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub name: String,
    pub trajectory: Vec<BoundingBox>,
    /// Fraction of frames with center error at most `t` pixels, `t = 0..=50`.
    pub precision_curve: Vec<f64>,
    /// Fraction of frames with IoU at least `t`, `t = 0, 0.05, ..., 1`.
    pub success_curve: Vec<f64>,
    pub auc: f64,
    pub precision_at_20: f64,
    /// Frames whose estimate does not overlap the ground truth at all.
    pub failures: usize,
    pub mean_iou: f64,
    /// Frames with a valid annotation.
    pub evaluated_frames: usize,
    pub fps: f64,
}

pub fn success_threshold(i: usize) -> f64 {
    i as f64 / (SUCCESS_THRESHOLDS - 1) as f64
}

/// Metrics of `trajectory` against `ground_truth`; unannotated frames are skipped.
pub fn evaluate(
    name: &str,
    trajectory: &[BoundingBox],
    ground_truth: &[Option<BoundingBox>],
) -> Result<EvalResult> {
    if trajectory.len() != ground_truth.len() {
        return Err(Error::shape(format!(
            "{} estimates for {} ground-truth frames",
            trajectory.len(),
            ground_truth.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = trajectory
        .iter()
        .zip(ground_truth)
        .filter_map(|(t, g)| g.as_ref().map(|g| (center_error(t, g), iou(t, g))))
        .collect();
    let n = pairs.len();
    let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    let precision_curve: Vec<f64> = (0..PRECISION_THRESHOLDS)
        .map(|t| frac(pairs.iter().filter(|(d, _)| *d <= t as f64).count()))
        .collect();
    let success_curve: Vec<f64> = (0..SUCCESS_THRESHOLDS)
        .map(|i| {
            let t = success_threshold(i);
            frac(pairs.iter().filter(|(_, o)| *o >= t).count())
        })
        .collect();
    let auc = success_curve.iter().sum::<f64>() / SUCCESS_THRESHOLDS as f64;
    Ok(EvalResult {
        name: name.to_string(),
        trajectory: trajectory.to_vec(),
        precision_at_20: precision_curve[20],
        precision_curve,
        success_curve,
        auc,
        failures: pairs.iter().filter(|(_, o)| *o == 0.0).count(),
        mean_iou: if n == 0 {
            0.0
        } else {
            pairs.iter().map(|(_, o)| o).sum::<f64>() / n as f64
        },
        evaluated_frames: n,
        fps: 0.0,
    })
}

/// Anything that can be driven frame by frame over a sequence.
pub trait SequenceTracker {
    fn init(&mut self, frame: &RgbImage, bbox: BoundingBox) -> Result<()>;
    fn step(&mut self, frame: &RgbImage) -> Result<BoundingBox>;
}

/// [`Tracker`] behind the [`SequenceTracker`] interface, built on `init`.
pub struct TrackerRunner<T: Scalar> {
    config: TrackerConfig,
    server: Option<String>,
    tracker: Option<Tracker<T>>,
}

impl<T: Scalar> TrackerRunner<T> {
    pub fn new(config: TrackerConfig, server: Option<String>) -> Self {
        Self {
            config,
            server,
            tracker: None,
        }
    }

    pub fn tracker(&self) -> Option<&Tracker<T>> {
        self.tracker.as_ref()
    }

    pub fn reports(&self) -> &[StepReport] {
        self.tracker.as_ref().map_or(&[], |t| t.reports())
    }
}

impl<T: Scalar> SequenceTracker for TrackerRunner<T> {
    fn init(&mut self, frame: &RgbImage, bbox: BoundingBox) -> Result<()> {
        let provider = make_provider(&self.config, self.server.as_deref())?;
        self.tracker = Some(Tracker::init(frame, bbox, self.config.clone(), provider)?);
        Ok(())
    }

    fn step(&mut self, frame: &RgbImage) -> Result<BoundingBox> {
        let t = self
            .tracker
            .as_mut()
            .ok_or_else(|| Error::State("tracker stepped before init".into()))?;
        Ok(t.step(frame)?.bbox)
    }
}

/// One-pass evaluation: initialize on the first frame's annotation, then step
/// through every remaining frame. A failed step returns [`Error::Tracking`]
/// carrying the boxes produced so far.
pub fn run_ope_with(tracker: &mut dyn SequenceTracker, seq: &SequenceSpec) -> Result<EvalResult> {
    let first_box = seq
        .ground_truth
        .first()
        .copied()
        .flatten()
        .ok_or_else(|| Error::input(format!("sequence {} has no valid first annotation", seq.name)))?;
    let started = Instant::now();
    let mut trajectory = Vec::with_capacity(seq.len());
    let wrap = |frame: usize, trajectory: &Vec<BoundingBox>, e: Error| Error::Tracking {
        frame,
        trajectory: trajectory.clone(),
        source: Box::new(e),
    };
    let first = seq.load_frame(0).map_err(|e| wrap(1, &trajectory, e))?;
    tracker.init(&first, first_box).map_err(|e| wrap(1, &trajectory, e))?;
    trajectory.push(first_box);
    for i in 1..seq.len() {
        let frame = seq.load_frame(i).map_err(|e| wrap(i + 1, &trajectory, e))?;
        let b = tracker.step(&frame).map_err(|e| wrap(i + 1, &trajectory, e))?;
        trajectory.push(b);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let mut result = evaluate(&seq.name, &trajectory, &seq.ground_truth)?;
    result.fps = if elapsed > 0.0 {
        seq.len() as f64 / elapsed
    } else {
        0.0
    };
    Ok(result)
}

/// One-pass evaluation of the full tracker (`f64` core).
pub fn run_ope(config: &TrackerConfig, seq: &SequenceSpec, server: Option<&str>) -> Result<EvalResult> {
    let mut runner = TrackerRunner::<f64>::new(config.clone(), server.map(str::to_string));
    run_ope_with(&mut runner, seq)
}

pub fn format_trajectory(trajectory: &[BoundingBox]) -> String {
    let mut s = String::new();
    for b in trajectory {
        let (x, y, w, h) = b.top_left();
        let _ = writeln!(s, "{x},{y},{w},{h}");
    }
    s
}

pub fn format_curves(result: &EvalResult) -> String {
    let mut s = String::from("curve,threshold,value\n");
    for (t, v) in result.precision_curve.iter().enumerate() {
        let _ = writeln!(s, "precision,{t},{v}");
    }
    for (i, v) in result.success_curve.iter().enumerate() {
        let _ = writeln!(s, "success,{:.2},{v}", success_threshold(i));
    }
    s
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    name: &'a str,
    frames: usize,
    evaluated_frames: usize,
    auc: f64,
    precision_at_20: f64,
    mean_iou: f64,
    failures: usize,
}

/// Summary record as TOML. Timing is kept out so that reruns are byte-identical.
pub fn format_summary(result: &EvalResult, config: Option<&toml::Table>) -> Result<String> {
    let summary = Summary {
        name: &result.name,
        frames: result.trajectory.len(),
        evaluated_frames: result.evaluated_frames,
        auc: result.auc,
        precision_at_20: result.precision_at_20,
        mean_iou: result.mean_iou,
        failures: result.failures,
    };
    let mut table = toml::Table::try_from(&summary).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(cfg) = config {
        table.insert("config".into(), toml::Value::Table(cfg.clone()));
    }
    toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `trajectory.txt`, `curves.csv`, `summary.toml` and `timing.toml` into `out_dir`.
pub fn emit_results(result: &EvalResult, out_dir: &Path, config: Option<&toml::Table>) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(out_dir.join("trajectory.txt"), &format_trajectory(&result.trajectory))?;
    write(out_dir.join("curves.csv"), &format_curves(result))?;
    write(out_dir.join("summary.toml"), &format_summary(result, config)?)?;
    write(
        out_dir.join("timing.toml"),
        &format!("name = {:?}\nfps = {}\n", result.name, result.fps),
    )
}

/// Reads a trajectory file written by [`emit_results`].
pub fn parse_trajectory(path: &Path) -> Result<Vec<BoundingBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(&text, path)?
        .into_iter()
        .enumerate()
        .map(|(i, b)| b.ok_or_else(|| parse_error(path, i + 1, ParseErrorKind::NonNumeric("non-positive size".into()))))
        .collect()
}
