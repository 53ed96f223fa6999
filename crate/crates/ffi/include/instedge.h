/* Generated by cbindgen from the instedge-ffi crate. Do not edit. */

#ifndef INSTEDGE_H
#define INSTEDGE_H



#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum IeStatus {
    IE_STATUS_OK = 0,
    IE_STATUS_INVALID_ARGUMENT = 1,
    IE_STATUS_PARSE = 2,
    IE_STATUS_VALIDATION = 3,
    IE_STATUS_UNDEFINED_LOSS = 4,
    IE_STATUS_OVERFLOW = 5,
    IE_STATUS_IO = 6,
    IE_STATUS_NULL_POINTER = 7,
    IE_STATUS_PANIC = 8,
} IeStatus;

// Binary map.
typedef struct IeBitMap IeBitMap;

// Parsed annotation dataset.
typedef struct IeDataset IeDataset;

// Real-valued map with values in [0, 1].
typedef struct IeGrayMap IeGrayMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *ie_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ie_version(void);

// Creates a gray map from `height * width` row-major values in [0, 1].
//
// # Safety
// `values` must point to `height * width` readable doubles; `out` must be writable.
enum IeStatus ie_graymap_new(size_t height,
                             size_t width,
                             const double *values,
                             struct IeGrayMap **out);

// # Safety
// `map` must be NULL or a handle from this library that has not been freed.
void ie_graymap_free(struct IeGrayMap *map);

// # Safety
// `map` must be a live handle.
size_t ie_graymap_height(const struct IeGrayMap *map);

// # Safety
// `map` must be a live handle.
size_t ie_graymap_width(const struct IeGrayMap *map);

// Copies the map's values into `dst`, which must hold exactly `len` doubles.
//
// # Safety
// `map` must be a live handle; `dst` must be writable for `len` doubles.
enum IeStatus ie_graymap_copy_values(const struct IeGrayMap *map, double *dst, size_t len);

// Creates a bit map from `height * width` row-major bytes (nonzero = set).
//
// # Safety
// `bits` must point to `height * width` readable bytes; `out` must be writable.
enum IeStatus ie_bitmap_new(size_t height,
                            size_t width,
                            const uint8_t *bits,
                            struct IeBitMap **out);

// # Safety
// `map` must be NULL or a handle from this library that has not been freed.
void ie_bitmap_free(struct IeBitMap *map);

// # Safety
// `map` must be a live handle.
size_t ie_bitmap_height(const struct IeBitMap *map);

// # Safety
// `map` must be a live handle.
size_t ie_bitmap_width(const struct IeBitMap *map);

// Number of set pixels.
//
// # Safety
// `map` must be a live handle.
size_t ie_bitmap_count(const struct IeBitMap *map);

// Copies the bits as 0/1 bytes into `dst`, which must hold exactly `len` bytes.
//
// # Safety
// `map` must be a live handle; `dst` must be writable for `len` bytes.
enum IeStatus ie_bitmap_copy_bits(const struct IeBitMap *map, uint8_t *dst, size_t len);

// Parses an annotation document from a NUL-terminated UTF-8 string.
//
// # Safety
// `json` must be a valid C string; `out` must be writable.
enum IeStatus ie_dataset_parse(const char *json, struct IeDataset **out);

// # Safety
// `dataset` must be NULL or a handle from this library that has not been freed.
void ie_dataset_free(struct IeDataset *dataset);

// # Safety
// `dataset` must be a live handle.
size_t ie_dataset_image_count(const struct IeDataset *dataset);

// Image id, height, width and instance count of the `image_index`-th image
// (images are ordered by id).
//
// # Safety
// `dataset` must be a live handle; every out pointer must be writable.
enum IeStatus ie_dataset_image_info(const struct IeDataset *dataset,
                                    size_t image_index,
                                    uint64_t *out_image_id,
                                    size_t *out_height,
                                    size_t *out_width,
                                    size_t *out_instance_count);

// Builds the `{0, 0.7, 1}` tunnel target of one instance.
//
// # Safety
// `dataset` must be a live handle; `out_map` and `out_keypoint_count` must be writable.
enum IeStatus ie_tunnel_target(const struct IeDataset *dataset,
                               size_t image_index,
                               size_t instance_index,
                               struct IeGrayMap **out_map,
                               size_t *out_keypoint_count);

// Rasterizes the closed keypoint polylines of one instance.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum IeStatus ie_polyline_edges(const struct IeDataset *dataset,
                                size_t image_index,
                                size_t instance_index,
                                struct IeBitMap **out);

// Fills the polygon rings of one instance.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum IeStatus ie_instance_mask(const struct IeDataset *dataset,
                               size_t image_index,
                               size_t instance_index,
                               struct IeBitMap **out);

// Inner boundary of a binary mask.
//
// # Safety
// `mask` must be a live handle; `out` must be writable.
enum IeStatus ie_mask_to_edge(const struct IeBitMap *mask, struct IeBitMap **out);

// Penalty-reduced focal loss. `target` must hold only 0, 0.7 and 1 with
// exactly `keypoint_count` ones. When `grad` is not NULL it receives the
// gradient and must hold exactly `grad_len` = height * width doubles.
//
// # Safety
// Handles must be live; `out_value` writable; `grad` NULL or writable for `grad_len`.
enum IeStatus ie_focal_loss(const struct IeGrayMap *pred,
                            const struct IeGrayMap *target,
                            size_t keypoint_count,
                            double alpha,
                            double beta,
                            double gamma,
                            double *out_value,
                            double *grad,
                            size_t grad_len);

// Dice loss `1 - 2 Σ p y / (Σ p² + Σ y²)`; gradient as in [`ie_focal_loss`].
//
// # Safety
// Handles must be live; `out_value` writable; `grad` NULL or writable for `grad_len`.
enum IeStatus ie_dice_loss(const struct IeGrayMap *pred,
                           const struct IeGrayMap *gt,
                           double *out_value,
                           double *grad,
                           size_t grad_len);

// Mask-to-edge dice gradient ratio.
//
// # Safety
// Handles must be live; `out` must be writable.
enum IeStatus ie_gradient_ratio(const struct IeGrayMap *mask_pred,
                                const struct IeGrayMap *mask_gt,
                                const struct IeGrayMap *edge_pred,
                                const struct IeGrayMap *edge_gt,
                                double *out);

// Morphological thinning.
//
// # Safety
// `edges` must be a live handle; `out` must be writable.
enum IeStatus ie_thin(const struct IeBitMap *edges, struct IeBitMap **out);

// Distance-gated bipartite matching of two thinned edge maps with gate
// `sqrt(H² + W²) * lambda`.
//
// # Safety
// Handles must be live; every out pointer must be writable.
enum IeStatus ie_match_instance(const struct IeBitMap *pred,
                                const struct IeBitMap *gt,
                                double lambda,
                                size_t *out_matched,
                                size_t *out_pred_total,
                                size_t *out_gt_total,
                                double *out_total_cost);

// `n·d·(hw)² + n·d²·(hw)`; reports `IE_STATUS_OVERFLOW` instead of wrapping.
//
// # Safety
// `out` must be writable.
enum IeStatus ie_cross_attention_cost(uint64_t n,
                                      uint64_t d,
                                      uint64_t h,
                                      uint64_t w,
                                      uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INSTEDGE_H */
