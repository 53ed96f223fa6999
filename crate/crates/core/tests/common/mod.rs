#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use instedge::annotations::{BBox, Dataset, ImageRecord, InstanceAnnotation, Keypoint};
use instedge::metrics::{thin, ImagePredictions, PredictedInstance};
use instedge::raster::rasterize_polyline;
use instedge::{BitMap, GrayMap};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bbox_of(rings: &[Vec<Keypoint>]) -> BBox {
    let pts = rings.iter().flatten();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for k in pts {
        x0 = x0.min(k.x);
        y0 = y0.min(k.y);
        x1 = x1.max(k.x);
        y1 = y1.max(k.y);
    }
    BBox::new(x0, y0, (x1 - x0).max(1.0), (y1 - y0).max(1.0)).unwrap()
}

pub fn instance(id: u64, category: u64, rings: Vec<Vec<Keypoint>>) -> InstanceAnnotation {
    let bbox = bbox_of(&rings);
    InstanceAnnotation::new(id, category, rings, bbox).unwrap()
}

pub fn ring(points: &[(f64, f64)]) -> Vec<Keypoint> {
    points.iter().map(|&(x, y)| Keypoint::new(x, y)).collect()
}

/// Axis-aligned square with corners at integer pixel coordinates.
pub fn square(x0: f64, y0: f64, side: f64) -> Vec<Keypoint> {
    ring(&[(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)])
}

/// Star-shaped polygon around a random center, vertices at increasing angles,
/// all inside `[0, w-1] x [0, h-1]`.
pub fn star_polygon(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<Keypoint> {
    let (hf, wf) = ((h - 1) as f64, (w - 1) as f64);
    let cx = rng.random_range(wf * 0.3..wf * 0.7);
    let cy = rng.random_range(hf * 0.3..hf * 0.7);
    let rmax = cx.min(wf - cx).min(cy).min(hf - cy);
    let n = rng.random_range(3..12usize);
    // Jitter below 0.4 of a slot keeps every angular gap under half a turn.
    let angles: Vec<f64> = (0..n)
        .map(|i| (i as f64 + rng.random_range(0.0..0.4)) / n as f64 * TAU)
        .collect();
    angles
        .into_iter()
        .map(|a| {
            let r = rng.random_range(rmax * 0.3..rmax);
            Keypoint::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

/// Union of random filled rectangles and disks with a sprinkling of single pixels.
pub fn random_blob(rng: &mut ChaCha8Rng) -> BitMap {
    let h = rng.random_range(6..32usize);
    let w = rng.random_range(6..32usize);
    let mut map = BitMap::new(h, w);
    for _ in 0..rng.random_range(1..5) {
        let r0 = rng.random_range(0..h);
        let c0 = rng.random_range(0..w);
        if rng.random_bool(0.5) {
            let r1 = (r0 + rng.random_range(1..h)).min(h - 1);
            let c1 = (c0 + rng.random_range(1..w)).min(w - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    map.set(r, c, true);
                }
            }
        } else {
            let rad = rng.random_range(1.0..(h.min(w) as f64 / 2.0));
            for r in 0..h {
                for c in 0..w {
                    if (r as f64 - r0 as f64).hypot(c as f64 - c0 as f64) <= rad {
                        map.set(r, c, true);
                    }
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..6) {
        let r = rng.random_range(0..h);
        let c = rng.random_range(0..w);
        map.set(r, c, true);
    }
    map
}

/// Exhaustive maximum-cardinality, then minimum-cost assignment over pairs
/// strictly closer than `gate`.
pub fn brute_force_match(pred: &[(usize, usize)], gt: &[(usize, usize)], gate: f64) -> (usize, f64) {
    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        pred: &[(usize, usize)],
        gt: &[(usize, usize)],
        gate: f64,
        used: &mut Vec<bool>,
        count: usize,
        cost: f64,
        best: &mut (usize, f64),
    ) {
        if i == pred.len() {
            if count > best.0 || (count == best.0 && cost < best.1) {
                *best = (count, cost);
            }
            return;
        }
        go(i + 1, pred, gt, gate, used, count, cost, best);
        for j in 0..gt.len() {
            if used[j] {
                continue;
            }
            let d = (pred[i].0 as f64 - gt[j].0 as f64).hypot(pred[i].1 as f64 - gt[j].1 as f64);
            if d < gate {
                used[j] = true;
                go(i + 1, pred, gt, gate, used, count + 1, cost + d, best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, f64::INFINITY);
    go(0, pred, gt, gate, &mut vec![false; gt.len()], 0, 0.0, &mut best);
    if best.0 == 0 {
        best.1 = 0.0;
    }
    best
}

/// Even-odd point-in-polygon test at `(x, y)`, counting points within
/// `1e-9` of an edge as inside.
pub fn inside_or_on(rings: &[Vec<Keypoint>], x: f64, y: f64) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            if (a.x + t * dx - x).hypot(a.y + t * dy - y) <= 1e-9 {
                return true;
            }
            if (a.y > y) != (b.y > y) {
                let xi = a.x + (y - a.y) * dx / dy;
                if x < xi {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

pub fn categories() -> BTreeMap<u64, String> {
    BTreeMap::from([(1, "thing".to_string()), (2, "stuff".to_string())])
}

/// Thinned ground-truth edge map of an instance.
pub fn gt_edges(inst: &InstanceAnnotation, h: usize, w: usize) -> BitMap {
    thin(&rasterize_polyline(inst, h, w).unwrap())
}

pub fn prediction(inst: &InstanceAnnotation, map: GrayMap) -> PredictedInstance {
    PredictedInstance {
        category_id: inst.category_id(),
        bbox: inst.bbox(),
        map,
    }
}

/// Random dataset of star polygons, one to three per image.
pub fn random_dataset(rng: &mut ChaCha8Rng, images: usize) -> Dataset {
    let records = (0..images)
        .map(|i| {
            let h = rng.random_range(24..48usize);
            let w = rng.random_range(24..48usize);
            let count = rng.random_range(1..4u64);
            let instances = (0..count)
                .map(|k| instance(k + 1, 1 + k % 2, vec![star_polygon(rng, h, w)]))
                .collect();
            ImageRecord::new(i as u64 + 1, h, w, instances).unwrap()
        })
        .collect();
    Dataset::new(records, categories()).unwrap()
}

/// Two 64×64 images, one square each. In each image the ground-truth edge is
/// predicted at `true_p` and a grid of far-away false pixels at `false_p`.
pub struct TwoImageFixture {
    pub dataset: Dataset,
    pub predictions: Vec<ImagePredictions>,
    /// `(true_p, false_p, true pixel count, false pixel count)` per image.
    pub levels: Vec<(f64, f64, usize, usize)>,
}

pub fn two_image_fixture() -> TwoImageFixture {
    let (h, w) = (64, 64);
    let levels_in = [(0.32, 0.27), (0.82, 0.77)];
    let mut records = Vec::new();
    let mut predictions = Vec::new();
    let mut levels = Vec::new();
    for (i, &(tp, fp)) in levels_in.iter().enumerate() {
        let inst = instance(1, 1, vec![square(8.0 + 4.0 * i as f64, 10.0, 20.0)]);
        let edges = gt_edges(&inst, h, w);
        let mut map = GrayMap::zeros(h, w).unwrap();
        for (r, c) in edges.ones() {
            map.set(r, c, tp);
        }
        let mut false_count = 0;
        for r in (44..62).step_by(2) {
            for c in (36..62).step_by(3) {
                map.set(r, c, fp);
                false_count += 1;
            }
        }
        let record = ImageRecord::new(i as u64 + 1, h, w, vec![inst.clone()]).unwrap();
        predictions.push(ImagePredictions::paired(&record, vec![prediction(&inst, map)]));
        levels.push((tp, fp, edges.count_ones(), false_count));
        records.push(record);
    }
    TwoImageFixture {
        dataset: Dataset::new(records, categories()).unwrap(),
        predictions,
        levels,
    }
}

/// F-measure of one fixture image at threshold `t`, counted by hand.
pub fn fixture_fscore(level: (f64, f64, usize, usize), t: f64) -> f64 {
    let (tp, fp, nt, nf) = level;
    let kept_true = if t <= tp { nt } else { 0 };
    let kept_false = if t <= fp { nf } else { 0 };
    let predicted = kept_true + kept_false;
    let p = if predicted == 0 { 1.0 } else { kept_true as f64 / predicted as f64 };
    let r = kept_true as f64 / nt as f64;
    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
}

/// Noisy predictions for every instance of `dataset`: ground-truth edges with
/// random confidences, occasionally shifted by a pixel, plus random clutter.
pub fn noisy_predictions(rng: &mut ChaCha8Rng, dataset: &Dataset) -> Vec<ImagePredictions> {
    dataset
        .images()
        .iter()
        .map(|img| {
            let (h, w) = (img.height(), img.width());
            let instances = img
                .instances()
                .iter()
                .filter_map(|inst| {
                    if !rng.random_bool(0.9) {
                        return None;
                    }
                    let mut map = GrayMap::zeros(h, w).unwrap();
                    let (dr, dc) = if rng.random_bool(0.3) { (1, 0) } else { (0, 0) };
                    for (r, c) in gt_edges(inst, h, w).ones() {
                        if rng.random_bool(0.85) {
                            map.set((r + dr).min(h - 1), (c + dc).min(w - 1), rng.random_range(0.05..1.0));
                        }
                    }
                    for _ in 0..rng.random_range(0..30) {
                        map.set(rng.random_range(0..h), rng.random_range(0..w), rng.random_range(0.0..1.0));
                    }
                    Some(prediction(inst, map))
                })
                .collect();
            ImagePredictions::paired(img, instances)
        })
        .collect()
}

/// Writes `dataset` and `predictions` in the layout the `eval` command reads.
/// Returns `(annotation file, prediction directory)`.
pub fn write_eval_inputs(
    root: &std::path::Path,
    dataset: &Dataset,
    predictions: &[ImagePredictions],
) -> (std::path::PathBuf, std::path::PathBuf) {
    use instedge::cli::{instance_file_name, PredictionEntry, PredictionManifest};
    let ann = root.join("annotations.json");
    std::fs::write(&ann, instedge::annotations::serialize_dataset(dataset)).unwrap();
    let dir = root.join("predictions");
    std::fs::create_dir_all(&dir).unwrap();
    let mut manifest = PredictionManifest::default();
    for p in predictions {
        for (k, inst) in p.instances.iter().enumerate() {
            let id = k as u64 + 1;
            instedge::pgm::write_graymap(&dir.join(instance_file_name(p.image_id, id)), &inst.map).unwrap();
            let b = inst.bbox;
            manifest.predictions.push(PredictionEntry {
                image_id: p.image_id,
                instance_id: id,
                category_id: inst.category_id,
                bbox: [b.x, b.y, b.width, b.height],
            });
        }
    }
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    (ann, dir)
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_instedge"))
}
