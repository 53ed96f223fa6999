//! Keypoint-polygon instance annotations in a COCO-instances-compatible subset.
//!
//! Each polygon ring of an annotation becomes a closed sequence of boundary
//! keypoints. Coordinates are pixel indices: a keypoint at `(x, y)` refers to
//! the pixel in column `x`, row `y`, and is clamped into the image on ingest.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
}

impl Keypoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Nearest pixel as `(row, col)`, clamped into a `height`×`width` grid.
    pub fn pixel(&self, height: usize, width: usize) -> (usize, usize) {
        let col = self.x.round().clamp(0.0, (width - 1) as f64) as usize;
        let row = self.y.round().clamp(0.0, (height - 1) as f64) as usize;
        (row, col)
    }
}

/// Axis-aligned box `(x, y, width, height)` in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        let b = Self {
            x,
            y,
            width,
            height,
        };
        if ![x, y, width, height].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!("non-finite bbox {b:?}")));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(Error::Validation(format!(
                "bbox must have positive extent, got {width}x{height}"
            )));
        }
        Ok(b)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.width).min(other.x + other.width) - self.x.max(other.x);
        let iy = (self.y + self.height).min(other.y + other.height) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }

    fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.width, self.height]
    }
}

/// One object instance: category, boundary keypoint rings and box.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceAnnotation {
    instance_id: u64,
    category_id: u64,
    rings: Vec<Vec<Keypoint>>,
    bbox: BBox,
}

impl InstanceAnnotation {
    /// Every ring needs at least three keypoints; an instance with no rings is
    /// allowed here but rejected by target construction.
    pub fn new(
        instance_id: u64,
        category_id: u64,
        rings: Vec<Vec<Keypoint>>,
        bbox: BBox,
    ) -> Result<Self> {
        for (i, ring) in rings.iter().enumerate() {
            if ring.len() < 3 {
                return Err(Error::Validation(format!(
                    "instance {instance_id}: ring {i} has {} keypoints, need at least 3",
                    ring.len()
                )));
            }
            if ring.iter().any(|k| !k.x.is_finite() || !k.y.is_finite()) {
                return Err(Error::Validation(format!(
                    "instance {instance_id}: ring {i} has a non-finite keypoint"
                )));
            }
        }
        Ok(Self {
            instance_id,
            category_id,
            rings,
            bbox,
        })
    }

    pub fn instance_id(&self) -> u64 {
        self.instance_id
    }

    pub fn category_id(&self) -> u64 {
        self.category_id
    }

    pub fn rings(&self) -> &[Vec<Keypoint>] {
        &self.rings
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn keypoint_count(&self) -> usize {
        self.rings.iter().map(Vec::len).sum()
    }

    pub fn keypoints(&self) -> impl Iterator<Item = &Keypoint> {
        self.rings.iter().flatten()
    }

    fn clamp_into(&mut self, height: usize, width: usize) {
        let (xmax, ymax) = ((width - 1) as f64, (height - 1) as f64);
        for k in self.rings.iter_mut().flatten() {
            k.x = k.x.clamp(0.0, xmax);
            k.y = k.y.clamp(0.0, ymax);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    image_id: u64,
    height: usize,
    width: usize,
    instances: Vec<InstanceAnnotation>,
}

impl ImageRecord {
    /// Keypoints are clamped into the image and instances sorted by id.
    pub fn new(
        image_id: u64,
        height: usize,
        width: usize,
        mut instances: Vec<InstanceAnnotation>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "image {image_id}: dimensions must be positive, got {height}x{width}"
            )));
        }
        instances.sort_by_key(|i| i.instance_id);
        if let Some(w) = instances
            .windows(2)
            .find(|w| w[0].instance_id == w[1].instance_id)
        {
            return Err(Error::Validation(format!(
                "image {image_id}: duplicate instance id {}",
                w[0].instance_id
            )));
        }
        for inst in &mut instances {
            inst.clamp_into(height, width);
        }
        Ok(Self {
            image_id,
            height,
            width,
            instances,
        })
    }

    pub fn image_id(&self) -> u64 {
        self.image_id
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn instances(&self) -> &[InstanceAnnotation] {
        &self.instances
    }

    pub fn instance(&self, instance_id: u64) -> Option<&InstanceAnnotation> {
        self.instances
            .binary_search_by_key(&instance_id, |i| i.instance_id)
            .ok()
            .map(|idx| &self.instances[idx])
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    images: Vec<ImageRecord>,
    categories: BTreeMap<u64, String>,
}

impl Dataset {
    pub fn new(mut images: Vec<ImageRecord>, categories: BTreeMap<u64, String>) -> Result<Self> {
        images.sort_by_key(|i| i.image_id);
        if let Some(w) = images.windows(2).find(|w| w[0].image_id == w[1].image_id) {
            return Err(Error::Validation(format!(
                "duplicate image id {}",
                w[0].image_id
            )));
        }
        for img in &images {
            for inst in &img.instances {
                if !categories.contains_key(&inst.category_id) {
                    return Err(Error::Validation(format!(
                        "image {}: instance {} has unknown category {}",
                        img.image_id, inst.instance_id, inst.category_id
                    )));
                }
            }
        }
        Ok(Self { images, categories })
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn categories(&self) -> &BTreeMap<u64, String> {
        &self.categories
    }

    pub fn image(&self, image_id: u64) -> Option<&ImageRecord> {
        self.images
            .binary_search_by_key(&image_id, |i| i.image_id)
            .ok()
            .map(|idx| &self.images[idx])
    }

    pub fn instance_count(&self) -> usize {
        self.images.iter().map(|i| i.instances.len()).sum()
    }
}

#[derive(Deserialize, Serialize)]
struct RawImage {
    id: u64,
    height: usize,
    width: usize,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    segmentation: Value,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Serialize)]
struct RawAnnotationOut {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    segmentation: Vec<Vec<f64>>,
}

#[derive(Deserialize, Serialize)]
struct RawCategory {
    id: u64,
    name: String,
}

#[derive(Serialize)]
struct RawDocument {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotationOut>,
    categories: Vec<RawCategory>,
}

fn records<'a>(doc: &'a Value, key: &str) -> Result<&'a [Value]> {
    match doc.get(key) {
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(Error::parse(key, "expected an array")),
        None => Err(Error::parse(key, "missing field")),
    }
}

fn decode<T: for<'de> Deserialize<'de>>(key: &str, idx: usize, v: &Value) -> Result<T> {
    T::deserialize(v).map_err(|e| {
        let id = v.get("id").map(|id| format!(" (id {id})")).unwrap_or_default();
        Error::parse(format!("{key}[{idx}]{id}"), e)
    })
}

fn decode_rings(record: &str, seg: &Value) -> Result<Vec<Vec<Keypoint>>> {
    let flat: Vec<Vec<f64>> =
        Vec::<Vec<f64>>::deserialize(seg).map_err(|e| Error::parse(record, e))?;
    flat.into_iter()
        .enumerate()
        .map(|(i, ring)| {
            if ring.len() % 2 != 0 {
                return Err(Error::parse(
                    record,
                    format!("ring {i} has an odd number of coordinates"),
                ));
            }
            Ok(ring
                .chunks_exact(2)
                .map(|xy| Keypoint::new(xy[0], xy[1]))
                .collect())
        })
        .collect()
}

/// Parses an annotation document.
///
/// Crowd annotations (`iscrowd = 1`) carry run-length masks rather than
/// polygons and are skipped.
pub fn parse_dataset(raw: &str) -> Result<Dataset> {
    let doc: Value = serde_json::from_str(raw).map_err(|e| Error::parse("document", e))?;

    let mut categories = BTreeMap::new();
    for (i, v) in records(&doc, "categories")?.iter().enumerate() {
        let c: RawCategory = decode("categories", i, v)?;
        if categories.insert(c.id, c.name).is_some() {
            return Err(Error::Validation(format!("duplicate category id {}", c.id)));
        }
    }

    let mut dims = BTreeMap::new();
    for (i, v) in records(&doc, "images")?.iter().enumerate() {
        let img: RawImage = decode("images", i, v)?;
        if dims.insert(img.id, (img.height, img.width)).is_some() {
            return Err(Error::Validation(format!("duplicate image id {}", img.id)));
        }
    }

    let mut per_image: BTreeMap<u64, Vec<InstanceAnnotation>> =
        dims.keys().map(|&id| (id, Vec::new())).collect();
    for (i, v) in records(&doc, "annotations")?.iter().enumerate() {
        let a: RawAnnotation = decode("annotations", i, v)?;
        let record = format!("annotations[{i}] (id {})", a.id);
        if a.iscrowd != 0 {
            continue;
        }
        let Some(bucket) = per_image.get_mut(&a.image_id) else {
            return Err(Error::parse(
                record,
                format!("unknown image_id {}", a.image_id),
            ));
        };
        let rings = decode_rings(&record, &a.segmentation)?;
        let [x, y, w, h] = a.bbox;
        let bbox = BBox::new(x, y, w, h)
            .map_err(|e| Error::Validation(format!("{record}: {e}")))?;
        let inst = InstanceAnnotation::new(a.id, a.category_id, rings, bbox)
            .map_err(|e| Error::Validation(format!("{record}: {e}")))?;
        bucket.push(inst);
    }

    let images = per_image
        .into_iter()
        .map(|(id, instances)| {
            let (h, w) = dims[&id];
            ImageRecord::new(id, h, w, instances)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(images, categories)
}

/// Writes a dataset back into the annotation format accepted by [`parse_dataset`].
pub fn serialize_dataset(dataset: &Dataset) -> String {
    let doc = RawDocument {
        images: dataset
            .images
            .iter()
            .map(|i| RawImage {
                id: i.image_id,
                height: i.height,
                width: i.width,
            })
            .collect(),
        annotations: dataset
            .images
            .iter()
            .flat_map(|img| {
                img.instances.iter().map(move |inst| RawAnnotationOut {
                    id: inst.instance_id,
                    image_id: img.image_id,
                    category_id: inst.category_id,
                    bbox: inst.bbox.to_array(),
                    segmentation: inst
                        .rings
                        .iter()
                        .map(|r| r.iter().flat_map(|k| [k.x, k.y]).collect())
                        .collect(),
                })
            })
            .collect(),
        categories: dataset
            .categories
            .iter()
            .map(|(&id, name)| RawCategory {
                id,
                name: name.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("annotation document serializes")
}

/// Keeps `ceil(ratio * len)` keypoints of every ring (at least 3), chosen
/// uniformly without replacement from a generator seeded with `seed`, in
/// their original cyclic order.
pub fn subsample_keypoints(
    inst: &InstanceAnnotation,
    ratio: f64,
    seed: u64,
) -> Result<InstanceAnnotation> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Argument(format!(
            "subsampling ratio must be in (0, 1], got {ratio}"
        )));
    }
    if ratio == 1.0 {
        return Ok(inst.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rings = inst
        .rings
        .iter()
        .map(|ring| {
            let keep = ((ratio * ring.len() as f64).ceil() as usize).clamp(3, ring.len());
            let picked: BTreeSet<usize> =
                rand::seq::index::sample(&mut rng, ring.len(), keep).into_iter().collect();
            picked.into_iter().map(|i| ring[i]).collect()
        })
        .collect();
    InstanceAnnotation::new(inst.instance_id, inst.category_id, rings, inst.bbox)
}
