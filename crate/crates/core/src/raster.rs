//! Rasterization of keypoint annotations: polyline edges, tunnel targets,
//! filled masks, and mask-derived edges.

use crate::annotations::{InstanceAnnotation, Keypoint};
use crate::error::{Error, Result};
use crate::grid::{BitMap, GrayMap};

/// Value assigned to the band around the keypoint polyline.
pub const TUNNEL_VALUE: f64 = 0.7;
/// Value assigned to annotated keypoint pixels.
pub const KEYPOINT_VALUE: f64 = 1.0;

const EPS: f64 = 1e-9;

/// Training target for one instance: `{0, 0.7, 1.0}`-valued map plus the
/// number of distinct keypoint pixels used to normalize the focal loss.
#[derive(Clone, Debug, PartialEq)]
pub struct TunnelTarget {
    map: GrayMap,
    keypoint_count: usize,
}

impl TunnelTarget {
    pub fn new(map: GrayMap, keypoint_count: usize) -> Result<Self> {
        if keypoint_count == 0 {
            return Err(Error::Validation("tunnel target needs at least one keypoint".into()));
        }
        let mut ones = 0;
        for &v in map.values() {
            if v == KEYPOINT_VALUE {
                ones += 1;
            } else if v != TUNNEL_VALUE && v != 0.0 {
                return Err(Error::Validation(format!(
                    "tunnel target value {v} not in {{0, 0.7, 1}}"
                )));
            }
        }
        if ones != keypoint_count {
            return Err(Error::Validation(format!(
                "tunnel target has {ones} keypoint pixels but keypoint_count = {keypoint_count}"
            )));
        }
        Ok(Self {
            map,
            keypoint_count,
        })
    }

    pub fn map(&self) -> &GrayMap {
        &self.map
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoint_count
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Argument(format!(
            "raster dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

/// 8-connected Bresenham segment between two `(row, col)` pixels, inclusive.
pub fn draw_line(map: &mut BitMap, from: (usize, usize), to: (usize, usize)) {
    let (mut r, mut c) = (from.0 as i64, from.1 as i64);
    let (r1, c1) = (to.0 as i64, to.1 as i64);
    let dc = (c1 - c).abs();
    let dr = -(r1 - r).abs();
    let sc = if c < c1 { 1 } else { -1 };
    let sr = if r < r1 { 1 } else { -1 };
    let mut err = dc + dr;
    loop {
        map.set(r as usize, c as usize, true);
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dr {
            err += dr;
            c += sc;
        }
        if e2 <= dc {
            err += dc;
            r += sr;
        }
    }
}

/// Union of the closed, 8-connected polylines through each ring's keypoints
/// (rounded to the nearest pixel).
pub fn rasterize_polyline(
    inst: &InstanceAnnotation,
    height: usize,
    width: usize,
) -> Result<BitMap> {
    check_dims(height, width)?;
    let mut map = BitMap::new(height, width);
    for ring in inst.rings() {
        let pixels: Vec<_> = ring.iter().map(|k| k.pixel(height, width)).collect();
        for (i, &p) in pixels.iter().enumerate() {
            draw_line(&mut map, p, pixels[(i + 1) % pixels.len()]);
        }
    }
    Ok(map)
}

/// Polyline edges widened by a 3×3 box support to 0.7, with keypoint pixels at 1.0.
pub fn build_tunnel_target(
    inst: &InstanceAnnotation,
    height: usize,
    width: usize,
) -> Result<TunnelTarget> {
    if inst.keypoint_count() == 0 {
        return Err(Error::Validation(format!(
            "instance {} has no keypoints",
            inst.instance_id()
        )));
    }
    let edges = rasterize_polyline(inst, height, width)?;
    let mut values = vec![0.0; height * width];
    for (r, c) in edges.ones() {
        for rr in r.saturating_sub(1)..=(r + 1).min(height - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(width - 1) {
                values[rr * width + cc] = TUNNEL_VALUE;
            }
        }
    }
    let mut keypoint_count = 0;
    for k in inst.keypoints() {
        let (r, c) = k.pixel(height, width);
        let v = &mut values[r * width + c];
        if *v != KEYPOINT_VALUE {
            *v = KEYPOINT_VALUE;
            keypoint_count += 1;
        }
    }
    let map = GrayMap::from_values(height, width, values)?;
    Ok(TunnelTarget {
        map,
        keypoint_count,
    })
}

fn cross(o: Keypoint, a: Keypoint, b: Keypoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Keypoint, a: Keypoint, b: Keypoint) -> bool {
    cross(a, b, p).abs() <= EPS
        && p.x >= a.x.min(b.x) - EPS
        && p.x <= a.x.max(b.x) + EPS
        && p.y >= a.y.min(b.y) - EPS
        && p.y <= a.y.max(b.y) + EPS
}

fn segments_touch(a: Keypoint, b: Keypoint, c: Keypoint, d: Keypoint) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS))
        && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS))
    {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Ring with consecutive duplicates removed, or `None` if it encloses no area.
fn normalized_ring(ring: &[Keypoint]) -> Option<Vec<Keypoint>> {
    let mut pts: Vec<Keypoint> = Vec::with_capacity(ring.len());
    for &k in ring {
        if pts.last() != Some(&k) {
            pts.push(k);
        }
    }
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() < 3 {
        return None;
    }
    let collinear = pts.iter().all(|&p| cross(pts[0], pts[1], p).abs() <= EPS);
    (!collinear).then_some(pts)
}

fn is_simple(pts: &[Keypoint]) -> bool {
    let n = pts.len();
    let edge = |i: usize| (pts[i], pts[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        // Adjacent edges may only share their common vertex.
        let (_, next) = edge((i + 1) % n);
        if cross(a, b, next).abs() <= EPS && on_segment(next, a, b) {
            return false;
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = edge(j);
            if segments_touch(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Even-odd fill of all rings, sampled at pixel centers.
///
/// Keypoints use pixel-index coordinates, so the center of pixel `(row, col)`
/// sits at `(x, y) = (col, row)`. Centers lying exactly on a ring's boundary
/// are included. Rings enclosing zero area contribute nothing.
pub fn rasterize_mask(inst: &InstanceAnnotation, height: usize, width: usize) -> Result<BitMap> {
    check_dims(height, width)?;
    let mut rings = Vec::new();
    for (i, ring) in inst.rings().iter().enumerate() {
        let Some(pts) = normalized_ring(ring) else {
            continue;
        };
        if !is_simple(&pts) {
            return Err(Error::Validation(format!(
                "instance {}: ring {i} is self-intersecting",
                inst.instance_id()
            )));
        }
        rings.push(pts);
    }

    let mut mask = BitMap::new(height, width);
    let edges: Vec<(Keypoint, Keypoint)> = rings
        .iter()
        .flat_map(|pts| (0..pts.len()).map(move |i| (pts[i], pts[(i + 1) % pts.len()])))
        .collect();
    let max_col = (width - 1) as f64;
    let mut crossings = Vec::new();
    for row in 0..height {
        let y = row as f64;
        crossings.clear();
        for &(a, b) in &edges {
            if a.y == b.y {
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
            if y >= lo.y && y < hi.y {
                crossings.push(lo.x + (y - lo.y) * (hi.x - lo.x) / (hi.y - lo.y));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            let start = (span[0] - EPS).ceil().max(0.0);
            let end = (span[1] + EPS).floor().min(max_col);
            if start > end {
                continue;
            }
            for col in start as usize..=end as usize {
                mask.set(row, col, true);
            }
        }
    }

    // Boundary pixels whose centers lie exactly on an edge.
    for &(a, b) in &edges {
        let r0 = (a.y.min(b.y) - EPS).ceil().max(0.0) as usize;
        let r1 = ((a.y.max(b.y) + EPS).floor() as usize).min(height - 1);
        for row in r0..=r1 {
            let y = row as f64;
            if a.y == b.y {
                let c0 = (a.x.min(b.x) - EPS).ceil().max(0.0) as usize;
                let c1 = ((a.x.max(b.x) + EPS).floor() as usize).min(width - 1);
                for col in c0..=c1 {
                    mask.set(row, col, true);
                }
            } else {
                let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                let xr = x.round();
                if (x - xr).abs() <= EPS && xr >= 0.0 && xr <= max_col {
                    mask.set(row, xr as usize, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Inner boundary of a binary mask: set pixels whose 4-neighbor Laplacian
/// (zero-padded) is nonzero.
pub fn mask_to_edge(mask: &BitMap) -> BitMap {
    let mut edge = BitMap::new(mask.height(), mask.width());
    for (r, c) in mask.ones() {
        let (r, c) = (r as isize, c as isize);
        let neighbors = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
            .iter()
            .filter(|&&(nr, nc)| mask.get_signed(nr, nc))
            .count();
        if neighbors != 4 {
            edge.set(r as usize, c as usize, true);
        }
    }
    edge
}
