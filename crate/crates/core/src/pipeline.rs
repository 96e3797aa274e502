//! Corpus-level plumbing: time splits, training samples, checkpoints,
//! per-frame detection, evaluation reports and forecast runs.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dominant_set::{partition_at, peel, DsConfig};
use crate::error::{Error, Result};
use crate::eval::{auc, group_f1, mean_std, scene_dynamics, GroupMatchConfig};
use crate::features::{build_features, slot_of, FeatureScaler, CHANNELS, N_CHANNELS};
use crate::forecast::{forecast_groups, score_forecast, EdgeSeries, ForecastConfig};
use crate::net::{forward, ModelParams, Sample};
use crate::scene::{AffinityMatrix, GroupPartition, PersonId, SceneSequence};
use crate::train::{train, EpochLog, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Contiguous time segments of every scene: the first 60% of frames train,
/// the next 20% validate, the last 20% test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for Segment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Segment::Train),
            "val" => Ok(Segment::Val),
            "test" => Ok(Segment::Test),
            "all" => Ok(Segment::All),
            _ => Err(format!("unknown segment {s:?}; expected train, val, test or all")),
        }
    }
}

pub fn segment_range(frames: usize, segment: Segment) -> Range<usize> {
    let train_end = frames * 6 / 10;
    let val_end = frames * 8 / 10;
    match segment {
        Segment::Train => 0..train_end,
        Segment::Val => train_end..val_end,
        Segment::Test => val_end..frames,
        Segment::All => 0..frames,
    }
}

/// Window of at most `seq_len` frames ending at `end`; earlier frames are
/// used even if they belong to a previous segment.
pub fn window(end: usize, seq_len: usize) -> (usize, usize) {
    let start = (end + 1).saturating_sub(seq_len.max(1));
    (start, end + 1 - start)
}

fn labels_at(seq: &SceneSequence, frame: usize) -> Result<&GroupPartition> {
    seq.frames[frame].groups.as_ref().ok_or_else(|| {
        Error::invariant(
            "groups",
            format!("scene {} frame {frame} has no ground-truth groups", seq.scene_id),
        )
    })
}

/// Training example for `focal` with the window ending at `frame`.
pub fn focal_sample(
    seq: &SceneSequence,
    frame: usize,
    focal: PersonId,
    seq_len: usize,
    scaler: &FeatureScaler,
) -> Result<Sample> {
    let (start, len) = window(frame, seq_len);
    let (features, mask) = build_features(seq, focal, start, len, scaler)?;
    let gt = labels_at(seq, frame)?;
    let labels = (0..seq.n - 1)
        .map(|slot| {
            let other = crate::features::person_at_slot(focal, slot);
            if gt.same_group(focal, other) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(Sample { features, mask, labels })
}

/// One sample per present focal person for every `stride`-th frame of the segment.
pub fn build_samples(
    seqs: &[SceneSequence],
    segment: Segment,
    seq_len: usize,
    stride: usize,
    scaler: &FeatureScaler,
) -> Result<Vec<Sample>> {
    let per_scene: Vec<Vec<Sample>> = seqs
        .par_iter()
        .map(|seq| {
            let mut out = Vec::new();
            for frame in segment_range(seq.frames.len(), segment).step_by(stride.max(1)) {
                for focal in seq.frames[frame].ids() {
                    out.push(focal_sample(seq, frame, focal, seq_len, scaler)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}

/// Trained model plus everything needed to apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub channels: Vec<String>,
    pub train: TrainConfig,
    pub scaler: FeatureScaler,
    pub ds: DsConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(train: TrainConfig, scaler: FeatureScaler, ds: DsConfig, params: ModelParams) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            channels: CHANNELS.iter().map(|c| c.to_string()).collect(),
            train,
            scaler,
            ds,
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.channels.len() != N_CHANNELS || self.channels.iter().zip(CHANNELS).any(|(a, b)| a != b) {
            return Err(Error::Checkpoint(format!(
                "feature layout {:?} does not match this build's {:?}",
                self.channels, CHANNELS
            )));
        }
        if self.params.input_size != N_CHANNELS {
            return Err(Error::Checkpoint(format!(
                "model expects {} input channels, features have {N_CHANNELS}",
                self.params.input_size
            )));
        }
        if self.params.hidden_size != self.train.hidden_size {
            return Err(Error::Checkpoint(
                "hidden size disagrees with the training config".into(),
            ));
        }
        self.params
            .check_layout()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        self.ds.validate().map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}

/// Directed affinities among everyone present at `frame`.
pub fn frame_affinities(ckpt: &Checkpoint, seq: &SceneSequence, frame: usize) -> Result<AffinityMatrix> {
    let ids = seq.frames[frame].ids();
    let (start, len) = window(frame, ckpt.train.seq_len);
    let rows: Vec<Vec<f64>> = ids
        .iter()
        .map(|&focal| {
            let (features, mask) = build_features(seq, focal, start, len, &ckpt.scaler)?;
            let out = forward(&ckpt.params, &features, &mask)?;
            Ok(ids
                .iter()
                .map(|&other| {
                    if other == focal {
                        0.0
                    } else {
                        out.affinities[slot_of(focal, other)]
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    AffinityMatrix::new(ids, rows.concat())
}

/// Affinities for the listed frames of one scene, computed in parallel.
pub fn scene_affinities(ckpt: &Checkpoint, seq: &SceneSequence, frames: &[usize]) -> Result<Vec<AffinityMatrix>> {
    frames.par_iter().map(|&f| frame_affinities(ckpt, seq, f)).collect()
}

/// Candidate thresholds tried when tuning on validation data.
pub fn threshold_grid() -> Vec<f64> {
    (0..=36).map(|k| 0.05 + 0.025 * k as f64).collect()
}

/// Threshold from the grid with the best mean F1 at Thr = 1; the first wins ties.
pub fn tune_threshold(frames: &[(AffinityMatrix, GroupPartition)], ds: &DsConfig) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::Degenerate("no frames to tune the threshold on".into()));
    }
    let peels: Vec<_> = frames.par_iter().map(|(a, _)| peel(a, ds)).collect::<Result<_>>()?;
    let mut best = (f64::NEG_INFINITY, ds.affinity_threshold);
    for thr in threshold_grid() {
        let mut total = 0.0;
        for (p, (_, gt)) in peels.iter().zip(frames) {
            total += group_f1(&partition_at(p, thr)?, gt, GroupMatchConfig::FULL).f1;
        }
        let mean = total / frames.len() as f64;
        if mean > best.0 {
            best = (mean, thr);
        }
    }
    Ok(best.1)
}

/// Affinities and ground truth for every `stride`-th frame of a segment.
pub fn labelled_affinities(
    ckpt: &Checkpoint,
    seqs: &[SceneSequence],
    segment: Segment,
    stride: usize,
) -> Result<Vec<(AffinityMatrix, GroupPartition)>> {
    let mut out = Vec::new();
    for seq in seqs {
        let frames: Vec<usize> = segment_range(seq.frames.len(), segment)
            .step_by(stride.max(1))
            .collect();
        let mats = scene_affinities(ckpt, seq, &frames)?;
        for (f, m) in frames.into_iter().zip(mats) {
            out.push((m, labels_at(seq, f)?.clone()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub train: TrainConfig,
    /// Every `sample_stride`-th frame ends a training window.
    pub sample_stride: usize,
    pub ds: DsConfig,
    /// Pick the DS threshold on validation frames instead of using `ds`'s.
    pub tune_threshold: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            sample_stride: 1,
            ds: DsConfig::default(),
            tune_threshold: true,
        }
    }
}

/// Fits scaling bounds on the training segment, trains, and (optionally)
/// tunes the clustering threshold on the validation segment.
pub fn train_model(seqs: &[SceneSequence], opts: &TrainOptions) -> Result<(Checkpoint, Vec<EpochLog>)> {
    if seqs.is_empty() {
        return Err(Error::Degenerate("no scenes to train on".into()));
    }
    let ranges: Vec<Range<usize>> = seqs
        .iter()
        .map(|s| segment_range(s.frames.len(), Segment::Train))
        .collect();
    let scaler = FeatureScaler::fit_frames(seqs, &ranges)?;
    let cfg = &opts.train;
    let train_set = build_samples(seqs, Segment::Train, cfg.seq_len, opts.sample_stride, &scaler)?;
    let val_set = build_samples(seqs, Segment::Val, cfg.seq_len, opts.sample_stride, &scaler)?;
    let (params, log) = train(&train_set, &val_set, cfg)?;
    let mut ckpt = Checkpoint::new(cfg.clone(), scaler, opts.ds.clone(), params);
    if opts.tune_threshold {
        let val = labelled_affinities(&ckpt, seqs, Segment::Val, 1)?;
        if !val.is_empty() {
            ckpt.ds.affinity_threshold = tune_threshold(&val, &ckpt.ds)?;
        }
    }
    Ok((ckpt, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetection {
    pub frame: usize,
    pub t: f64,
    pub affinities: Option<AffinityMatrix>,
    pub partition: GroupPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDetection {
    pub scene_id: String,
    pub frames: Vec<FrameDetection>,
}

/// Affinities and partitions for every frame of the segment.
pub fn detect(
    ckpt: &Checkpoint,
    seqs: &[SceneSequence],
    segment: Segment,
    ds: &DsConfig,
) -> Result<Vec<SceneDetection>> {
    seqs.iter()
        .map(|seq| {
            let frames: Vec<usize> = segment_range(seq.frames.len(), segment).collect();
            let mats = scene_affinities(ckpt, seq, &frames)?;
            let frames = frames
                .into_iter()
                .zip(mats)
                .map(|(f, a)| {
                    let partition = crate::dominant_set::cluster(&a, ds)?;
                    Ok(FrameDetection {
                        frame: f,
                        t: seq.frames[f].t,
                        affinities: Some(a),
                        partition,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(SceneDetection {
                scene_id: seq.scene_id.clone(),
                frames,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub scene_id: String,
    pub frame: usize,
    pub t: f64,
    pub tp_thr23: usize,
    pub fp_thr23: usize,
    pub fn_thr23: usize,
    pub f1_thr23: f64,
    pub tp_thr1: usize,
    pub fp_thr1: usize,
    pub fn_thr1: usize,
    pub f1_thr1: f64,
    /// Formations, breaks and reformations in the ground truth at this frame.
    pub dynamics: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub scene_id: String,
    pub frames: usize,
    pub mean_f1_thr23: f64,
    pub mean_f1_thr1: f64,
    /// Ground-truth events over the evaluated frames; the opening frame of a
    /// sequence is not counted.
    pub dynamics: usize,
}

/// Scenes sharing one dynamics count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub dynamics: usize,
    pub scenes: usize,
    pub mean_f1_thr23: f64,
    pub mean_f1_thr1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub mean_f1_thr23: f64,
    pub mean_f1_thr1: f64,
    pub tp_thr23: usize,
    pub fp_thr23: usize,
    pub fn_thr23: usize,
    pub tp_thr1: usize,
    pub fp_thr1: usize,
    pub fn_thr1: usize,
    /// Over all directed pairs; absent when affinities are missing or one class is empty.
    pub auc: Option<f64>,
    pub scenes: Vec<SceneScore>,
    pub f1_by_dynamics: Vec<DynamicsRow>,
    pub per_frame: Vec<FrameScore>,
}

/// Scores detections against the ground truth of the matching scenes.
pub fn evaluate(dets: &[SceneDetection], seqs: &[SceneSequence]) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &SceneSequence> = seqs.iter().map(|s| (s.scene_id.as_str(), s)).collect();
    let mut per_frame = Vec::new();
    let mut scenes = Vec::new();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut have_affinities = true;
    for det in dets {
        let seq = by_id
            .get(det.scene_id.as_str())
            .ok_or_else(|| Error::invariant("scene_id", format!("{} not in the ground-truth data", det.scene_id)))?;
        let gts: Vec<GroupPartition> = (0..seq.frames.len())
            .map(|f| labels_at(seq, f).cloned())
            .collect::<Result<_>>()?;
        let dyn_scores = scene_dynamics(&gts);
        let (mut f23, mut f1, mut d_total) = (Vec::new(), Vec::new(), 0);
        for fd in &det.frames {
            let gt = gts.get(fd.frame).ok_or_else(|| {
                Error::invariant("frame", format!("scene {} has no frame {}", det.scene_id, fd.frame))
            })?;
            if seq.frames[fd.frame].t != fd.t {
                return Err(Error::invariant(
                    "t",
                    format!(
                        "scene {} frame {}: detection at t={}, data at t={}",
                        det.scene_id, fd.frame, fd.t, seq.frames[fd.frame].t
                    ),
                ));
            }
            let a = group_f1(&fd.partition, gt, GroupMatchConfig::TWO_THIRDS);
            let b = group_f1(&fd.partition, gt, GroupMatchConfig::FULL);
            let d = if fd.frame == 0 { 0 } else { dyn_scores[fd.frame].total() };
            d_total += d;
            f23.push(a.f1);
            f1.push(b.f1);
            per_frame.push(FrameScore {
                scene_id: det.scene_id.clone(),
                frame: fd.frame,
                t: fd.t,
                tp_thr23: a.tp,
                fp_thr23: a.fp,
                fn_thr23: a.fn_,
                f1_thr23: a.f1,
                tp_thr1: b.tp,
                fp_thr1: b.fp,
                fn_thr1: b.fn_,
                f1_thr1: b.f1,
                dynamics: d,
            });
            match &fd.affinities {
                Some(m) => {
                    let ids = m.person_ids();
                    for i in 0..ids.len() {
                        for j in 0..ids.len() {
                            if i != j {
                                scores.push(m.get(i, j));
                                labels.push(gt.same_group(ids[i], ids[j]));
                            }
                        }
                    }
                }
                None => have_affinities = false,
            }
        }
        scenes.push(SceneScore {
            scene_id: det.scene_id.clone(),
            frames: det.frames.len(),
            mean_f1_thr23: mean_std(&f23).0,
            mean_f1_thr1: mean_std(&f1).0,
            dynamics: d_total,
        });
    }
    let mut rows: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for s in scenes.iter().filter(|s| s.frames > 0) {
        let r = rows.entry(s.dynamics).or_default();
        r.0 += 1;
        r.1 += s.mean_f1_thr23;
        r.2 += s.mean_f1_thr1;
    }
    let f1_by_dynamics = rows
        .into_iter()
        .map(|(d, (n, a, b))| DynamicsRow {
            dynamics: d,
            scenes: n,
            mean_f1_thr23: a / n as f64,
            mean_f1_thr1: b / n as f64,
        })
        .collect();
    let sum = |f: fn(&FrameScore) -> usize| per_frame.iter().map(f).sum::<usize>();
    let f23: Vec<f64> = per_frame.iter().map(|f| f.f1_thr23).collect();
    let f1: Vec<f64> = per_frame.iter().map(|f| f.f1_thr1).collect();
    Ok(EvalReport {
        frames: per_frame.len(),
        mean_f1_thr23: mean_std(&f23).0,
        mean_f1_thr1: mean_std(&f1).0,
        tp_thr23: sum(|f| f.tp_thr23),
        fp_thr23: sum(|f| f.fp_thr23),
        fn_thr23: sum(|f| f.fn_thr23),
        tp_thr1: sum(|f| f.tp_thr1),
        fp_thr1: sum(|f| f.fp_thr1),
        fn_thr1: sum(|f| f.fn_thr1),
        auc: if have_affinities {
            auc(&scores, &labels).ok()
        } else {
            None
        },
        scenes,
        f1_by_dynamics,
        per_frame,
    })
}

/// Deterministic sub-seed for one (scene, frame) pair.
pub fn derive_seed(seed: u64, scene: usize, frame: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scene as u64) << 32) | frame as u64);
    rng.next_u64()
}

/// Averaged edge series over the `history` frames ending at `end`, for the
/// persons present in all of them. `affinities[k]` belongs to frame
/// `end + 1 - history + k`.
pub fn edge_series(
    seq: &SceneSequence,
    affinities: &[AffinityMatrix],
    end: usize,
) -> Result<(Vec<PersonId>, Vec<EdgeSeries>)> {
    let history = affinities.len();
    if history < 2 || end + 1 < history {
        return Err(Error::Shape(format!(
            "need at least 2 history frames ending at {end}, got {history}"
        )));
    }
    let start = end + 1 - history;
    let mut persons = seq.frames[end].ids();
    persons.retain(|&p| seq.frames[start..=end].iter().all(|f| f.is_present(p)));
    let times: Vec<f64> = seq.frames[start..=end].iter().map(|f| f.t).collect();
    let mut out = Vec::new();
    for (x, &a) in persons.iter().enumerate() {
        for &b in &persons[x + 1..] {
            let values = affinities
                .iter()
                .map(|m| {
                    let ids = m.person_ids();
                    let i = ids.binary_search(&a).expect("present person");
                    let j = ids.binary_search(&b).expect("present person");
                    0.5 * (m.get(i, j) + m.get(j, i))
                })
                .collect();
            out.push(EdgeSeries::new(a, b, times.clone(), values)?);
        }
    }
    Ok((persons, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowForecast {
    pub scene_id: String,
    pub end_frame: usize,
    pub person_ids: Vec<PersonId>,
    pub mean_f1_thr23: Vec<f64>,
    pub mean_f1_thr1: Vec<f64>,
    pub std_f1_thr23: Vec<f64>,
    pub std_f1_thr1: Vec<f64>,
}

/// Summary at one horizon. "Across windows" is the spread of per-window
/// mean F1; "across samples" is the mean of per-window spreads over draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: usize,
    pub mean_f1_thr23: f64,
    pub mean_f1_thr1: f64,
    pub std_windows_thr23: f64,
    pub std_windows_thr1: f64,
    pub std_samples_thr23: f64,
    pub std_samples_thr1: f64,
    pub n_samples: usize,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub history: usize,
    pub horizons: Vec<HorizonSummary>,
    pub windows: Vec<WindowForecast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastOptions {
    /// Observed frames per edge series.
    pub history: usize,
    /// Frames between consecutive forecast windows of a scene.
    pub stride: usize,
    pub forecast: ForecastConfig,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            history: 10,
            stride: 10,
            forecast: ForecastConfig::default(),
        }
    }
}

/// Forecasts from every window whose horizon stays inside its scene and
/// scores each horizon against the ground truth there.
pub fn forecast_corpus(ckpt: &Checkpoint, seqs: &[SceneSequence], opts: &ForecastOptions) -> Result<ForecastReport> {
    let z = opts.forecast.horizon;
    if opts.history < 2 {
        return Err(Error::invariant("history", "need at least 2 observed frames"));
    }
    let mut jobs = Vec::new();
    for (k, seq) in seqs.iter().enumerate() {
        let mut end = opts.history - 1;
        while end + z < seq.frames.len() {
            jobs.push((k, end));
            end += opts.stride.max(1);
        }
    }
    let windows: Vec<WindowForecast> = jobs
        .par_iter()
        .map(|&(k, end)| {
            let seq = &seqs[k];
            let frames: Vec<usize> = (end + 1 - opts.history..=end).collect();
            let mats: Vec<AffinityMatrix> = frames
                .iter()
                .map(|&f| frame_affinities(ckpt, seq, f))
                .collect::<Result<_>>()?;
            let (persons, series) = edge_series(seq, &mats, end)?;
            let step = if end > 0 {
                seq.frames[end].t - seq.frames[end - 1].t
            } else {
                1.0
            };
            let cfg = ForecastConfig {
                seed: derive_seed(opts.forecast.seed, k, end),
                ..opts.forecast.clone()
            };
            let mut fc = forecast_groups(&persons, &series, step, &cfg)?;
            let mut gts = Vec::with_capacity(z + 1);
            for h in 0..=z {
                let frame = &seq.frames[end + h];
                let present: std::collections::BTreeSet<PersonId> =
                    persons.iter().copied().filter(|&p| frame.is_present(p)).collect();
                gts.push(labels_at(seq, end + h)?.restrict(&present));
                for p in &mut fc[h].partitions {
                    *p = p.restrict(&present);
                }
            }
            let scores = score_forecast(&fc, &gts)?;
            Ok(WindowForecast {
                scene_id: seq.scene_id.clone(),
                end_frame: end,
                person_ids: persons,
                mean_f1_thr23: scores.iter().map(|s| s.mean_f1_thr23).collect(),
                mean_f1_thr1: scores.iter().map(|s| s.mean_f1_thr1).collect(),
                std_f1_thr23: scores.iter().map(|s| s.std_f1_thr23).collect(),
                std_f1_thr1: scores.iter().map(|s| s.std_f1_thr1).collect(),
            })
        })
        .collect::<Result<_>>()?;
    if windows.is_empty() {
        return Err(Error::Degenerate(format!(
            "no scene has {} frames for a history of {} and horizon {z}",
            opts.history + z,
            opts.history
        )));
    }
    let horizons = (0..=z)
        .map(|h| {
            let col = |f: fn(&WindowForecast) -> &Vec<f64>| windows.iter().map(|w| f(w)[h]).collect::<Vec<f64>>();
            let (m23, s23) = mean_std(&col(|w| &w.mean_f1_thr23));
            let (m1, s1) = mean_std(&col(|w| &w.mean_f1_thr1));
            HorizonSummary {
                horizon: h,
                mean_f1_thr23: m23,
                mean_f1_thr1: m1,
                std_windows_thr23: s23,
                std_windows_thr1: s1,
                std_samples_thr23: mean_std(&col(|w| &w.std_f1_thr23)).0,
                std_samples_thr1: mean_std(&col(|w| &w.std_f1_thr1)).0,
                n_samples: if h == 0 { 1 } else { opts.forecast.n_samples },
                windows: windows.len(),
            }
        })
        .collect();
    Ok(ForecastReport {
        history: opts.history,
        horizons,
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn segments_tile_the_frames() {
        for n in [1, 5, 10, 61] {
            let (a, b, c) = (
                segment_range(n, Segment::Train),
                segment_range(n, Segment::Val),
                segment_range(n, Segment::Test),
            );
            assert_eq!((a.start, a.end, b.end, c.end), (0, b.start, c.start, n));
        }
        assert_eq!(window(3, 10), (0, 4));
        assert_eq!(window(20, 10), (11, 10));
    }

    #[test]
    fn samples_carry_group_labels() {
        let seqs = generate(&SynthConfig {
            n_scenes: 2,
            steps_per_scene: 20,
            ..SynthConfig::default()
        })
        .unwrap();
        let ranges: Vec<_> = seqs.iter().map(|s| 0..s.frames.len()).collect();
        let scaler = FeatureScaler::fit_frames(&seqs, &ranges).unwrap();
        let s = focal_sample(&seqs[0], 5, seqs[0].frames[5].ids()[0], 4, &scaler).unwrap();
        assert_eq!(s.features.steps, 4);
        let focal = seqs[0].frames[5].ids()[0];
        let gt = seqs[0].frames[5].groups.as_ref().unwrap();
        for slot in s.valid_slots() {
            let other = crate::features::person_at_slot(focal, slot);
            assert_eq!(s.labels[slot] == 1.0, gt.same_group(focal, other));
        }
    }

    #[test]
    fn checkpoint_layout_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = TrainConfig {
            hidden_size: 3,
            ..TrainConfig::default()
        };
        let scaler = FeatureScaler {
            min: [0.0; N_CHANNELS],
            max: [1.0; N_CHANNELS],
        };
        let ck = Checkpoint::new(
            cfg,
            scaler,
            DsConfig::default(),
            ModelParams::init(N_CHANNELS, 3, &mut rng),
        );
        ck.validate().unwrap();
        let mut bad = ck.clone();
        bad.channels[2] = "range".into();
        assert!(matches!(bad.validate(), Err(Error::Checkpoint(_))));
        let mut bad = ck.clone();
        bad.params.w_out.pop();
        assert!(bad.validate().is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
