use std::ffi::{CStr, CString};
use std::ptr;

use instedge_ffi::*;

fn last_error() -> String {
    let p = ie_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const DOC: &str = r#"{
    "images": [{"id": 1, "height": 10, "width": 10}],
    "annotations": [{"id": 5, "image_id": 1, "category_id": 3, "bbox": [2, 2, 5, 5],
                     "segmentation": [[2, 2, 7, 2, 7, 7, 2, 7]]}],
    "categories": [{"id": 3, "name": "box"}]
}"#;

fn dataset() -> *mut IeDataset {
    let json = CString::new(DOC).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { ie_dataset_parse(json.as_ptr(), &mut ds) }, IeStatus::Ok);
    ds
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ie_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn dataset_targets_and_masks() {
    let ds = dataset();
    unsafe {
        assert_eq!(ie_dataset_image_count(ds), 1);
        let (mut id, mut h, mut w, mut n) = (0u64, 0usize, 0usize, 0usize);
        assert_eq!(ie_dataset_image_info(ds, 0, &mut id, &mut h, &mut w, &mut n), IeStatus::Ok);
        assert_eq!((id, h, w, n), (1, 10, 10, 1));
        assert_eq!(
            ie_dataset_image_info(ds, 3, &mut id, &mut h, &mut w, &mut n),
            IeStatus::InvalidArgument
        );

        let mut target = ptr::null_mut();
        let mut count = 0usize;
        assert_eq!(ie_tunnel_target(ds, 0, 0, &mut target, &mut count), IeStatus::Ok);
        assert_eq!(count, 4);
        let mut values = vec![0.0; 100];
        assert_eq!(ie_graymap_copy_values(target, values.as_mut_ptr(), 100), IeStatus::Ok);
        assert!(values.iter().all(|&v| v == 0.0 || v == 0.7 || v == 1.0));
        assert_eq!(values.iter().filter(|&&v| v == 1.0).count(), 4);
        assert_eq!(ie_graymap_copy_values(target, values.as_mut_ptr(), 5), IeStatus::InvalidArgument);

        let mut edges = ptr::null_mut();
        assert_eq!(ie_polyline_edges(ds, 0, 0, &mut edges), IeStatus::Ok);
        assert_eq!(ie_bitmap_count(edges), 20);
        let mut mask = ptr::null_mut();
        assert_eq!(ie_instance_mask(ds, 0, 0, &mut mask), IeStatus::Ok);
        assert_eq!(ie_bitmap_count(mask), 36);
        let mut boundary = ptr::null_mut();
        assert_eq!(ie_mask_to_edge(mask, &mut boundary), IeStatus::Ok);
        assert_eq!(ie_bitmap_count(boundary), 20);
        let mut thinned = ptr::null_mut();
        assert_eq!(ie_thin(boundary, &mut thinned), IeStatus::Ok);

        let (mut matched, mut np, mut ng, mut cost) = (0usize, 0usize, 0usize, 0.0f64);
        assert_eq!(
            ie_match_instance(thinned, thinned, 0.0075, &mut matched, &mut np, &mut ng, &mut cost),
            IeStatus::Ok
        );
        assert_eq!(matched, np);
        assert_eq!(np, ng);
        assert_eq!(cost, 0.0);
        assert_eq!(
            ie_match_instance(thinned, thinned, 5.0, &mut matched, &mut np, &mut ng, &mut cost),
            IeStatus::InvalidArgument
        );

        ie_bitmap_free(thinned);
        ie_bitmap_free(boundary);
        ie_bitmap_free(mask);
        ie_bitmap_free(edges);
        ie_graymap_free(target);
        ie_dataset_free(ds);
    }
}

#[test]
fn losses_through_the_abi() {
    unsafe {
        let mut pred = ptr::null_mut();
        let mut target = ptr::null_mut();
        assert_eq!(ie_graymap_new(1, 1, [0.6].as_ptr(), &mut pred), IeStatus::Ok);
        assert_eq!(ie_graymap_new(1, 1, [1.0].as_ptr(), &mut target), IeStatus::Ok);
        let mut value = 0.0;
        let mut grad = [0.0];
        assert_eq!(
            ie_focal_loss(pred, target, 1, 2.0, 4.0, 0.7, &mut value, grad.as_mut_ptr(), 1),
            IeStatus::Ok
        );
        assert!((value - 0.08173).abs() < 1e-5);
        assert!(grad[0] < 0.0);
        assert_eq!(
            ie_focal_loss(pred, target, 2, 2.0, 4.0, 0.7, &mut value, ptr::null_mut(), 0),
            IeStatus::Validation
        );

        let mut p2 = ptr::null_mut();
        let mut y2 = ptr::null_mut();
        assert_eq!(ie_graymap_new(1, 2, [0.5, 0.5].as_ptr(), &mut p2), IeStatus::Ok);
        assert_eq!(ie_graymap_new(1, 2, [1.0, 0.0].as_ptr(), &mut y2), IeStatus::Ok);
        assert_eq!(ie_dice_loss(p2, y2, &mut value, ptr::null_mut(), 0), IeStatus::Ok);
        assert!((value - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(ie_dice_loss(p2, pred, &mut value, ptr::null_mut(), 0), IeStatus::InvalidArgument);

        let mut zero = ptr::null_mut();
        assert_eq!(ie_graymap_new(1, 2, [0.0, 0.0].as_ptr(), &mut zero), IeStatus::Ok);
        assert_eq!(ie_dice_loss(zero, zero, &mut value, ptr::null_mut(), 0), IeStatus::UndefinedLoss);
        let mut ratio = 0.0;
        assert_eq!(ie_gradient_ratio(p2, y2, p2, y2, &mut ratio), IeStatus::Ok);
        assert_eq!(ratio, 1.0);
        assert_eq!(ie_gradient_ratio(p2, y2, zero, zero, &mut ratio), IeStatus::InvalidArgument);

        for h in [pred, target, p2, y2, zero] {
            ie_graymap_free(h);
        }
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(ie_graymap_new(1, 1, [1.5].as_ptr(), &mut out), IeStatus::Validation);
        assert!(out.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(ie_graymap_new(1, 1, ptr::null(), &mut out), IeStatus::NullPointer);
        assert!(last_error().contains("values"));

        let bad = CString::new("{\"images\": []}").unwrap();
        let mut ds = ptr::null_mut();
        assert_eq!(ie_dataset_parse(bad.as_ptr(), &mut ds), IeStatus::Parse);
        assert!(ds.is_null());

        let mut cost = 0u64;
        assert_eq!(ie_cross_attention_cost(2, 4, 3, 1, &mut cost), IeStatus::Ok);
        assert_eq!(cost, 168);
        assert_eq!(ie_cross_attention_cost(u64::MAX, 2, 2, 2, &mut cost), IeStatus::Overflow);
        assert_eq!(ie_cross_attention_cost(1, 1, 1, 1, ptr::null_mut()), IeStatus::NullPointer);

        let mut bits = ptr::null_mut();
        assert_eq!(ie_bitmap_new(2, 2, [1u8, 0, 0, 1].as_ptr(), &mut bits), IeStatus::Ok);
        assert_eq!((ie_bitmap_height(bits), ie_bitmap_width(bits)), (2, 2));
        let mut copy = [9u8; 4];
        assert_eq!(ie_bitmap_copy_bits(bits, copy.as_mut_ptr(), 4), IeStatus::Ok);
        assert_eq!(copy, [1, 0, 0, 1]);
        ie_bitmap_free(bits);
        ie_bitmap_free(ptr::null_mut());
        ie_graymap_free(ptr::null_mut());
        ie_dataset_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/instedge.h")).unwrap();
    for name in [
        "IE_STATUS_OK",
        "IE_STATUS_PANIC",
        "typedef struct IeGrayMap IeGrayMap",
        "ie_last_error_message",
        "ie_dataset_parse",
        "ie_tunnel_target",
        "ie_focal_loss",
        "ie_dice_loss",
        "ie_match_instance",
        "ie_cross_attention_cost",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
