//! C ABI over the `instedge` library.
//!
//! Objects cross the boundary as opaque handles created by `ie_*_new` /
//! `ie_*_parse` / producer functions and released with the matching
//! `ie_*_free`. Every fallible function returns an [`IeStatus`]; on failure
//! the message is available from [`ie_last_error_message`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use instedge::annotations::{parse_dataset, Dataset, InstanceAnnotation};
use instedge::kernels::cross_attention_cost;
use instedge::losses::{dice_loss, gradient_ratio, penalty_reduced_focal, FocalConfig, LossResult};
use instedge::metrics::{match_instance, thin, EvalConfig};
use instedge::raster::{build_tunnel_target, mask_to_edge, rasterize_mask, rasterize_polyline, TunnelTarget};
use instedge::{BitMap, Error, GrayMap};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IeStatus {
    Ok = 0,
    InvalidArgument = 1,
    Parse = 2,
    Validation = 3,
    UndefinedLoss = 4,
    Overflow = 5,
    Io = 6,
    NullPointer = 7,
    Panic = 8,
}

/// Real-valued map with values in [0, 1].
pub struct IeGrayMap {
    inner: GrayMap,
}

/// Binary map.
pub struct IeBitMap {
    inner: BitMap,
}

/// Parsed annotation dataset.
pub struct IeDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> IeStatus {
    match err {
        Error::Parse { .. } => IeStatus::Parse,
        Error::Validation(_) => IeStatus::Validation,
        Error::Argument(_) => IeStatus::InvalidArgument,
        Error::UndefinedLoss => IeStatus::UndefinedLoss,
        Error::Overflow(_) => IeStatus::Overflow,
        Error::Io { .. } | Error::Graymap { .. } => IeStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> IeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => IeStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            let status = status_of(&e);
            set_last_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is NULL"));
            IeStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(msg);
            IeStatus::InvalidArgument
        }
        Err(_) => {
            set_last_error("panic inside instedge".into());
            IeStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn write_gradient(result: &LossResult, grad: *mut f64, grad_len: usize) -> Result<(), Failure> {
    if grad.is_null() {
        return Ok(());
    }
    let values = result.gradient.values();
    if grad_len != values.len() {
        return Err(Failure::Arg(format!(
            "gradient buffer holds {grad_len} values, need {}",
            values.len()
        )));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), grad, values.len());
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ie_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ie_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a gray map from `height * width` row-major values in [0, 1].
///
/// # Safety
/// `values` must point to `height * width` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_graymap_new(
    height: usize,
    width: usize,
    values: *const f64,
    out: *mut *mut IeGrayMap,
) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        let len = height
            .checked_mul(width)
            .ok_or_else(|| Failure::Arg("dimensions overflow".into()))?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        *out = boxed(IeGrayMap {
            inner: GrayMap::from_values(height, width, data)?,
        });
        Ok(())
    })
}

/// # Safety
/// `map` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ie_graymap_free(map: *mut IeGrayMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ie_graymap_height(map: *const IeGrayMap) -> usize {
    map.as_ref().map_or(0, |m| m.inner.height())
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ie_graymap_width(map: *const IeGrayMap) -> usize {
    map.as_ref().map_or(0, |m| m.inner.width())
}

/// Copies the map's values into `dst`, which must hold exactly `len` doubles.
///
/// # Safety
/// `map` must be a live handle; `dst` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ie_graymap_copy_values(
    map: *const IeGrayMap,
    dst: *mut f64,
    len: usize,
) -> IeStatus {
    guard(|| {
        let map = deref(map, "map")?;
        let dst = out_ref(dst, "dst")?;
        let values = map.inner.values();
        if len != values.len() {
            return Err(Failure::Arg(format!("buffer holds {len}, need {}", values.len())));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), dst, len);
        Ok(())
    })
}

/// Creates a bit map from `height * width` row-major bytes (nonzero = set).
///
/// # Safety
/// `bits` must point to `height * width` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_bitmap_new(
    height: usize,
    width: usize,
    bits: *const u8,
    out: *mut *mut IeBitMap,
) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if bits.is_null() {
            return Err(Failure::Null("bits"));
        }
        let len = height
            .checked_mul(width)
            .ok_or_else(|| Failure::Arg("dimensions overflow".into()))?;
        let data = std::slice::from_raw_parts(bits, len).iter().map(|&b| b != 0).collect();
        *out = boxed(IeBitMap {
            inner: BitMap::from_bits(height, width, data)?,
        });
        Ok(())
    })
}

/// # Safety
/// `map` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ie_bitmap_free(map: *mut IeBitMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ie_bitmap_height(map: *const IeBitMap) -> usize {
    map.as_ref().map_or(0, |m| m.inner.height())
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ie_bitmap_width(map: *const IeBitMap) -> usize {
    map.as_ref().map_or(0, |m| m.inner.width())
}

/// Number of set pixels.
///
/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ie_bitmap_count(map: *const IeBitMap) -> usize {
    map.as_ref().map_or(0, |m| m.inner.count_ones())
}

/// Copies the bits as 0/1 bytes into `dst`, which must hold exactly `len` bytes.
///
/// # Safety
/// `map` must be a live handle; `dst` must be writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ie_bitmap_copy_bits(map: *const IeBitMap, dst: *mut u8, len: usize) -> IeStatus {
    guard(|| {
        let map = deref(map, "map")?;
        if dst.is_null() {
            return Err(Failure::Null("dst"));
        }
        let bits = map.inner.bits();
        if len != bits.len() {
            return Err(Failure::Arg(format!("buffer holds {len}, need {}", bits.len())));
        }
        let dst = std::slice::from_raw_parts_mut(dst, len);
        for (d, &b) in dst.iter_mut().zip(bits) {
            *d = u8::from(b);
        }
        Ok(())
    })
}

/// Parses an annotation document from a NUL-terminated UTF-8 string.
///
/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_dataset_parse(json: *const c_char, out: *mut *mut IeDataset) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if json.is_null() {
            return Err(Failure::Null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure::Arg(format!("document is not UTF-8: {e}")))?;
        *out = boxed(IeDataset {
            inner: parse_dataset(text)?,
        });
        Ok(())
    })
}

/// # Safety
/// `dataset` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ie_dataset_free(dataset: *mut IeDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ie_dataset_image_count(dataset: *const IeDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.images().len())
}

/// Image id, height, width and instance count of the `image_index`-th image
/// (images are ordered by id).
///
/// # Safety
/// `dataset` must be a live handle; every out pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_dataset_image_info(
    dataset: *const IeDataset,
    image_index: usize,
    out_image_id: *mut u64,
    out_height: *mut usize,
    out_width: *mut usize,
    out_instance_count: *mut usize,
) -> IeStatus {
    guard(|| {
        let d = deref(dataset, "dataset")?;
        let img = d
            .inner
            .images()
            .get(image_index)
            .ok_or_else(|| Failure::Arg(format!("image index {image_index} out of range")))?;
        *out_ref(out_image_id, "out_image_id")? = img.image_id();
        *out_ref(out_height, "out_height")? = img.height();
        *out_ref(out_width, "out_width")? = img.width();
        *out_ref(out_instance_count, "out_instance_count")? = img.instances().len();
        Ok(())
    })
}

unsafe fn instance_at<'a>(
    dataset: *const IeDataset,
    image_index: usize,
    instance_index: usize,
) -> Result<(&'a InstanceAnnotation, usize, usize), Failure> {
    let d = deref(dataset, "dataset")?;
    let img = d
        .inner
        .images()
        .get(image_index)
        .ok_or_else(|| Failure::Arg(format!("image index {image_index} out of range")))?;
    let inst = img
        .instances()
        .get(instance_index)
        .ok_or_else(|| Failure::Arg(format!("instance index {instance_index} out of range")))?;
    Ok((inst, img.height(), img.width()))
}

/// Builds the `{0, 0.7, 1}` tunnel target of one instance.
///
/// # Safety
/// `dataset` must be a live handle; `out_map` and `out_keypoint_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_tunnel_target(
    dataset: *const IeDataset,
    image_index: usize,
    instance_index: usize,
    out_map: *mut *mut IeGrayMap,
    out_keypoint_count: *mut usize,
) -> IeStatus {
    guard(|| {
        let out_map = out_ref(out_map, "out_map")?;
        let out_count = out_ref(out_keypoint_count, "out_keypoint_count")?;
        let (inst, h, w) = instance_at(dataset, image_index, instance_index)?;
        let target = build_tunnel_target(inst, h, w)?;
        *out_count = target.keypoint_count();
        *out_map = boxed(IeGrayMap {
            inner: target.map().clone(),
        });
        Ok(())
    })
}

/// Rasterizes the closed keypoint polylines of one instance.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_polyline_edges(
    dataset: *const IeDataset,
    image_index: usize,
    instance_index: usize,
    out: *mut *mut IeBitMap,
) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let (inst, h, w) = instance_at(dataset, image_index, instance_index)?;
        *out = boxed(IeBitMap {
            inner: rasterize_polyline(inst, h, w)?,
        });
        Ok(())
    })
}

/// Fills the polygon rings of one instance.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_instance_mask(
    dataset: *const IeDataset,
    image_index: usize,
    instance_index: usize,
    out: *mut *mut IeBitMap,
) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let (inst, h, w) = instance_at(dataset, image_index, instance_index)?;
        *out = boxed(IeBitMap {
            inner: rasterize_mask(inst, h, w)?,
        });
        Ok(())
    })
}

/// Inner boundary of a binary mask.
///
/// # Safety
/// `mask` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_mask_to_edge(mask: *const IeBitMap, out: *mut *mut IeBitMap) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let mask = deref(mask, "mask")?;
        *out = boxed(IeBitMap {
            inner: mask_to_edge(&mask.inner),
        });
        Ok(())
    })
}

/// Penalty-reduced focal loss. `target` must hold only 0, 0.7 and 1 with
/// exactly `keypoint_count` ones. When `grad` is not NULL it receives the
/// gradient and must hold exactly `grad_len` = height * width doubles.
///
/// # Safety
/// Handles must be live; `out_value` writable; `grad` NULL or writable for `grad_len`.
#[no_mangle]
pub unsafe extern "C" fn ie_focal_loss(
    pred: *const IeGrayMap,
    target: *const IeGrayMap,
    keypoint_count: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    out_value: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> IeStatus {
    guard(|| {
        let pred = deref(pred, "pred")?;
        let target = deref(target, "target")?;
        let out_value = out_ref(out_value, "out_value")?;
        let target = TunnelTarget::new(target.inner.clone(), keypoint_count)?;
        let cfg = FocalConfig { alpha, beta, gamma };
        let result = penalty_reduced_focal(&pred.inner, &target, &cfg)?;
        write_gradient(&result, grad, grad_len)?;
        *out_value = result.value;
        Ok(())
    })
}

/// Dice loss `1 - 2 Σ p y / (Σ p² + Σ y²)`; gradient as in [`ie_focal_loss`].
///
/// # Safety
/// Handles must be live; `out_value` writable; `grad` NULL or writable for `grad_len`.
#[no_mangle]
pub unsafe extern "C" fn ie_dice_loss(
    pred: *const IeGrayMap,
    gt: *const IeGrayMap,
    out_value: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> IeStatus {
    guard(|| {
        let pred = deref(pred, "pred")?;
        let gt = deref(gt, "gt")?;
        let out_value = out_ref(out_value, "out_value")?;
        let result = dice_loss(&pred.inner, &gt.inner)?;
        write_gradient(&result, grad, grad_len)?;
        *out_value = result.value;
        Ok(())
    })
}

/// Mask-to-edge dice gradient ratio.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_gradient_ratio(
    mask_pred: *const IeGrayMap,
    mask_gt: *const IeGrayMap,
    edge_pred: *const IeGrayMap,
    edge_gt: *const IeGrayMap,
    out: *mut f64,
) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = gradient_ratio(
            &deref(mask_pred, "mask_pred")?.inner,
            &deref(mask_gt, "mask_gt")?.inner,
            &deref(edge_pred, "edge_pred")?.inner,
            &deref(edge_gt, "edge_gt")?.inner,
        )?;
        Ok(())
    })
}

/// Morphological thinning.
///
/// # Safety
/// `edges` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_thin(edges: *const IeBitMap, out: *mut *mut IeBitMap) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let edges = deref(edges, "edges")?;
        *out = boxed(IeBitMap {
            inner: thin(&edges.inner),
        });
        Ok(())
    })
}

/// Distance-gated bipartite matching of two thinned edge maps with gate
/// `sqrt(H² + W²) * lambda`.
///
/// # Safety
/// Handles must be live; every out pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_match_instance(
    pred: *const IeBitMap,
    gt: *const IeBitMap,
    lambda: f64,
    out_matched: *mut usize,
    out_pred_total: *mut usize,
    out_gt_total: *mut usize,
    out_total_cost: *mut f64,
) -> IeStatus {
    guard(|| {
        let cfg = EvalConfig::with_lambda(lambda);
        cfg.validate()?;
        let m = match_instance(&deref(pred, "pred")?.inner, &deref(gt, "gt")?.inner, &cfg)?;
        *out_ref(out_matched, "out_matched")? = m.matched();
        *out_ref(out_pred_total, "out_pred_total")? = m.pred_total;
        *out_ref(out_gt_total, "out_gt_total")? = m.gt_total;
        *out_ref(out_total_cost, "out_total_cost")? = m.total_cost;
        Ok(())
    })
}

/// `n·d·(hw)² + n·d²·(hw)`; reports `IE_STATUS_OVERFLOW` instead of wrapping.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ie_cross_attention_cost(
    n: u64,
    d: u64,
    h: u64,
    w: u64,
    out: *mut u64,
) -> IeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = cross_attention_cost(n, d, h, w)?;
        Ok(())
    })
}
