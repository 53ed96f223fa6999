//! Threshold sweep, per-image accumulation, and ODS/OIS.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{BBox, Dataset, ImageRecord, InstanceAnnotation};
use crate::error::{Error, Result};
use crate::grid::{BitMap, GrayMap};
use crate::metrics::matching::{match_within, max_distance, MatchResult};
use crate::metrics::thin::thin;
use crate::raster::rasterize_polyline;

/// Matching gate and binarization thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Maximum match distance as a fraction of the image diagonal.
    pub lambda: f64,
    pub thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0075,
            thresholds: (0..20).map(|k| f64::from(k) / 20.0).collect(),
        }
    }
}

impl EvalConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Argument(format!(
                "lambda must be in (0, 1), got {}",
                self.lambda
            )));
        }
        if self.thresholds.is_empty() {
            return Err(Error::Argument("at least one threshold is required".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(Error::Argument(format!("threshold {t} outside [0, 1)")));
        }
        Ok(())
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn fscore(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Image-level precision and recall from per-instance matches.
///
/// With no predicted pixels precision is 1; with no ground-truth pixels
/// recall is 1. An image with neither therefore scores F = 1.
pub fn image_pr(per_instance: &[MatchResult]) -> (f64, f64) {
    let matched: usize = per_instance.iter().map(MatchResult::matched).sum();
    let pred: usize = per_instance.iter().map(|m| m.pred_total).sum();
    let gt: usize = per_instance.iter().map(|m| m.gt_total).sum();
    let precision = if pred == 0 {
        1.0
    } else {
        matched as f64 / pred as f64
    };
    let recall = if gt == 0 {
        1.0
    } else {
        matched as f64 / gt as f64
    };
    (precision, recall)
}

/// One point of the dataset precision/recall curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    /// Mean of per-image precision.
    pub precision: f64,
    /// Mean of per-image recall.
    pub recall: f64,
    /// `2pr / (p + r)` of the two means above.
    pub fscore: f64,
    /// Mean of per-image F at this threshold; ODS maximizes this.
    pub mean_image_fscore: f64,
}

/// Best threshold for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageBest {
    pub image_id: u64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub curve: Vec<PRPoint>,
    pub ods: f64,
    pub ods_threshold: f64,
    pub ois: f64,
    pub per_image: Vec<ImageBest>,
}

impl EvalSummary {
    /// `threshold,precision,recall,fscore` table with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall,fscore\n");
        for p in &self.curve {
            out.push_str(&format!(
                "{:.4},{:.10},{:.10},{:.10}\n",
                p.threshold, p.precision, p.recall, p.fscore
            ));
        }
        out
    }
}

/// A predicted instance: class, box, and edge probability map.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedInstance {
    pub category_id: u64,
    pub bbox: BBox,
    pub map: GrayMap,
}

/// Predictions for one image plus their pairing to ground-truth instances.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePredictions {
    pub image_id: u64,
    pub instances: Vec<PredictedInstance>,
    /// `(prediction index, gt instance index)` pairs, one-to-one.
    pub pairs: Vec<(usize, usize)>,
}

impl ImagePredictions {
    /// Pairs `instances` to the image's ground truth with [`pair_instances`].
    pub fn paired(image: &ImageRecord, instances: Vec<PredictedInstance>) -> Self {
        let pairs = pair_instances(&instances, image.instances());
        Self {
            image_id: image.image_id(),
            instances,
            pairs,
        }
    }
}

/// Greedy one-to-one pairing by descending box IoU within equal categories.
///
/// Ties are broken by prediction index, then ground-truth index. Pairs with
/// zero IoU are never formed. Returns `(prediction index, gt index)` pairs
/// sorted by prediction index.
pub fn pair_instances(
    predictions: &[PredictedInstance],
    gts: &[InstanceAnnotation],
) -> Vec<(usize, usize)> {
    let mut scored = Vec::new();
    for (i, p) in predictions.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            if p.category_id != g.category_id() {
                continue;
            }
            let iou = p.bbox.iou(&g.bbox());
            if iou > 0.0 {
                scored.push((iou, i, j));
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; predictions.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in scored {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Binarization used by the sweep: `v >= t`, and never a zero-probability pixel.
pub fn binarize(map: &GrayMap, threshold: f64) -> BitMap {
    let bits = map.values().iter().map(|&v| v > 0.0 && v >= threshold).collect();
    BitMap::from_bits(map.height(), map.width(), bits).expect("same shape as the source map")
}

/// Per-threshold `(precision, recall)` for one image.
fn score_image(
    image: &ImageRecord,
    preds: Option<&ImagePredictions>,
    cfg: &EvalConfig,
) -> Result<Vec<(f64, f64)>> {
    let (h, w) = (image.height(), image.width());
    let gate = max_distance(h, w, cfg.lambda);
    let gt_edges = image
        .instances()
        .iter()
        .map(|inst| rasterize_polyline(inst, h, w).map(|m| thin(&m)))
        .collect::<Result<Vec<_>>>()?;

    let (instances, pairs): (&[PredictedInstance], &[(usize, usize)]) = match preds {
        Some(p) => (&p.instances, &p.pairs),
        None => (&[], &[]),
    };
    let mut gt_partner = vec![None; gt_edges.len()];
    let mut pred_partner = vec![None; instances.len()];
    for &(i, j) in pairs {
        if i >= instances.len() || j >= gt_edges.len() {
            return Err(Error::Validation(format!(
                "image {}: pair ({i}, {j}) refers to a missing instance",
                image.image_id()
            )));
        }
        if pred_partner[i].is_some() || gt_partner[j].is_some() {
            return Err(Error::Validation(format!(
                "image {}: pairing is not one-to-one at ({i}, {j})",
                image.image_id()
            )));
        }
        pred_partner[i] = Some(j);
        gt_partner[j] = Some(i);
    }
    for p in instances {
        if p.map.height() != h || p.map.width() != w {
            return Err(Error::Validation(format!(
                "image {}: prediction is {}x{}, image is {h}x{w}",
                image.image_id(),
                p.map.height(),
                p.map.width()
            )));
        }
    }

    cfg.thresholds
        .iter()
        .map(|&t| {
            let thinned: Vec<BitMap> = instances.iter().map(|p| thin(&binarize(&p.map, t))).collect();
            let mut results = Vec::with_capacity(instances.len() + gt_edges.len());
            for (i, pred) in thinned.iter().enumerate() {
                results.push(match pred_partner[i] {
                    Some(j) => match_within(pred, &gt_edges[j], gate)?,
                    None => MatchResult::unmatched_prediction(pred.count_ones()),
                });
            }
            for (j, gt) in gt_edges.iter().enumerate() {
                if gt_partner[j].is_none() {
                    results.push(MatchResult::missed_ground_truth(gt.count_ones()));
                }
            }
            Ok(image_pr(&results))
        })
        .collect()
}

/// Scores `predictions` against `gts` over every threshold of `cfg`.
///
/// Images without an entry in `predictions` are scored as if nothing was
/// predicted. ODS is the best mean per-image F over thresholds; OIS is the
/// mean over images of each image's best F.
pub fn evaluate(
    predictions: &[ImagePredictions],
    gts: &Dataset,
    cfg: &EvalConfig,
) -> Result<EvalSummary> {
    evaluate_with_workers(predictions, gts, cfg, 1)
}

/// [`evaluate`] on a pool of `workers` threads. The result does not depend
/// on the worker count.
pub fn evaluate_with_workers(
    predictions: &[ImagePredictions],
    gts: &Dataset,
    cfg: &EvalConfig,
    workers: usize,
) -> Result<EvalSummary> {
    cfg.validate()?;
    if gts.images().is_empty() {
        return Err(Error::Validation("dataset has no images".into()));
    }
    let mut by_image: Vec<Option<&ImagePredictions>> = vec![None; gts.images().len()];
    for p in predictions {
        let idx = gts
            .images()
            .binary_search_by_key(&p.image_id, ImageRecord::image_id)
            .map_err(|_| {
                Error::Validation(format!("predictions for unknown image {}", p.image_id))
            })?;
        if by_image[idx].replace(p).is_some() {
            return Err(Error::Validation(format!(
                "duplicate predictions for image {}",
                p.image_id
            )));
        }
    }

    let work = || -> Result<Vec<Vec<(f64, f64)>>> {
        gts.images()
            .par_iter()
            .zip(by_image.par_iter())
            .map(|(img, preds)| score_image(img, *preds, cfg))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    let per_image = pool.install(work)?;
    Ok(summarize(gts, cfg, &per_image))
}

fn summarize(gts: &Dataset, cfg: &EvalConfig, per_image: &[Vec<(f64, f64)>]) -> EvalSummary {
    let n = per_image.len() as f64;
    let curve: Vec<PRPoint> = cfg
        .thresholds
        .iter()
        .enumerate()
        .map(|(k, &threshold)| {
            let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
            for scores in per_image {
                let (pi, ri) = scores[k];
                p += pi;
                r += ri;
                f += fscore(pi, ri);
            }
            let (precision, recall) = (p / n, r / n);
            PRPoint {
                threshold,
                precision,
                recall,
                fscore: fscore(precision, recall),
                mean_image_fscore: f / n,
            }
        })
        .collect();

    let best = curve
        .iter()
        .fold(None::<&PRPoint>, |best, p| match best {
            Some(b) if b.mean_image_fscore >= p.mean_image_fscore => Some(b),
            _ => Some(p),
        })
        .expect("at least one threshold");

    let per_image: Vec<ImageBest> = gts
        .images()
        .iter()
        .zip(per_image)
        .map(|(img, scores)| {
            let mut best = ImageBest {
                image_id: img.image_id(),
                threshold: cfg.thresholds[0],
                precision: scores[0].0,
                recall: scores[0].1,
                fscore: fscore(scores[0].0, scores[0].1),
            };
            for (&t, &(p, r)) in cfg.thresholds.iter().zip(scores).skip(1) {
                let f = fscore(p, r);
                if f > best.fscore {
                    best = ImageBest {
                        image_id: img.image_id(),
                        threshold: t,
                        precision: p,
                        recall: r,
                        fscore: f,
                    };
                }
            }
            best
        })
        .collect();
    let ois = per_image.iter().map(|b| b.fscore).sum::<f64>() / n;

    EvalSummary {
        ods: best.mean_image_fscore,
        ods_threshold: best.threshold,
        ois,
        curve,
        per_image,
    }
}
