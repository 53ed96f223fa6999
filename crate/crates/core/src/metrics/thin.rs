//! Two-subiteration parallel thinning.
//!
//! Each pass deletes border pixels that satisfy the Guo–Hall / Lam–Lee–Suen
//! conditions, alternating between the south-east and north-west
//! subiterations until neither removes anything. Any 2×2 block that survives
//! is then reduced by deleting one simple pixel at a time, and the parallel
//! passes are resumed. The result is a fixed point of every step, so
//! thinning a thinned map changes nothing.

use crate::grid::BitMap;

/// Neighbors `x1..x8` counter-clockwise from east.
#[inline]
fn neighborhood(map: &BitMap, r: usize, c: usize) -> [bool; 8] {
    let (r, c) = (r as isize, c as isize);
    [
        map.get_signed(r, c + 1),
        map.get_signed(r - 1, c + 1),
        map.get_signed(r - 1, c),
        map.get_signed(r - 1, c - 1),
        map.get_signed(r, c - 1),
        map.get_signed(r + 1, c - 1),
        map.get_signed(r + 1, c),
        map.get_signed(r + 1, c + 1),
    ]
}

/// Hilditch crossing number: the number of 8-connected foreground runs
/// around the pixel. A foreground pixel with value 1 is simple.
#[inline]
fn crossing_number(x: &[bool; 8]) -> u32 {
    (0..4)
        .filter(|&i| !x[2 * i] && (x[2 * i + 1] || x[(2 * i + 2) % 8]))
        .count() as u32
}

#[inline]
fn deletable(x: &[bool; 8], first: bool) -> bool {
    if crossing_number(x) != 1 {
        return false;
    }
    let n1 = (0..4).filter(|&k| x[2 * k] || x[2 * k + 1]).count();
    let n2 = (0..4).filter(|&k| x[2 * k + 1] || x[(2 * k + 2) % 8]).count();
    if !(2..=3).contains(&n1.min(n2)) {
        return false;
    }
    // x1..x8 live at indices 0..7.
    if first {
        !((x[1] || x[2] || !x[7]) && x[0])
    } else {
        !((x[5] || x[6] || !x[3]) && x[4])
    }
}

fn subiteration(map: &mut BitMap, first: bool, scratch: &mut Vec<(usize, usize)>) -> bool {
    scratch.clear();
    scratch.extend(
        map.ones()
            .filter(|&(r, c)| deletable(&neighborhood(map, r, c), first)),
    );
    for &(r, c) in scratch.iter() {
        map.set(r, c, false);
    }
    !scratch.is_empty()
}

/// Deletes one simple pixel from each remaining 2×2 block, scanning in
/// raster order. Returns whether anything changed.
fn break_blocks(map: &mut BitMap) -> bool {
    let (h, w) = (map.height(), map.width());
    let mut changed = false;
    for r in 0..h.saturating_sub(1) {
        for c in 0..w.saturating_sub(1) {
            let block = [(r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)];
            if !block.iter().all(|&(br, bc)| map.get(br, bc)) {
                continue;
            }
            if let Some(&(br, bc)) = block
                .iter()
                .find(|&&(br, bc)| crossing_number(&neighborhood(map, br, bc)) == 1)
            {
                map.set(br, bc, false);
                changed = true;
            }
        }
    }
    changed
}

/// Reduces edges to (near) single-pixel width without changing 8-connectivity.
pub fn thin(edges: &BitMap) -> BitMap {
    let mut map = edges.clone();
    let mut scratch = Vec::new();
    loop {
        loop {
            let a = subiteration(&mut map, true, &mut scratch);
            let b = subiteration(&mut map, false, &mut scratch);
            if !a && !b {
                break;
            }
        }
        if !break_blocks(&mut map) {
            return map;
        }
    }
}

/// Number of 8-connected components of set pixels.
pub fn count_components(map: &BitMap) -> usize {
    let (h, w) = (map.height(), map.width());
    let mut seen = vec![false; h * w];
    let mut stack = Vec::new();
    let mut count = 0;
    for (r, c) in map.ones() {
        if seen[r * w + c] {
            continue;
        }
        count += 1;
        seen[r * w + c] = true;
        stack.push((r, c));
        while let Some((r, c)) = stack.pop() {
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if map.get_signed(nr, nc) {
                        let idx = nr as usize * w + nc as usize;
                        if !seen[idx] {
                            seen[idx] = true;
                            stack.push((nr as usize, nc as usize));
                        }
                    }
                }
            }
        }
    }
    count
}

/// `true` if some 2×2 window is entirely set.
pub fn has_full_2x2(map: &BitMap) -> bool {
    let (h, w) = (map.height(), map.width());
    (0..h.saturating_sub(1)).any(|r| {
        (0..w.saturating_sub(1)).any(|c| {
            map.get(r, c) && map.get(r, c + 1) && map.get(r + 1, c) && map.get(r + 1, c + 1)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(h: usize, w: usize, r0: usize, c0: usize, rh: usize, cw: usize) -> BitMap {
        BitMap::from_points(
            h,
            w,
            (r0..r0 + rh).flat_map(|r| (c0..c0 + cw).map(move |c| (r, c))),
        )
        .unwrap()
    }

    #[test]
    fn diagonal_line_is_unchanged() {
        let line = BitMap::from_points(8, 8, (0..8).map(|i| (i, i))).unwrap();
        assert_eq!(thin(&line), line);
    }

    #[test]
    fn empty_map() {
        let empty = BitMap::new(5, 7);
        assert_eq!(thin(&empty), empty);
    }

    #[test]
    fn solid_bar_becomes_a_path() {
        let bar = solid(7, 14, 2, 2, 3, 10);
        let out = thin(&bar);
        assert!(out.is_subset_of(&bar));
        assert!(!has_full_2x2(&out));
        assert_eq!(count_components(&out), 1);
        // Spans most of the bar's length.
        let cols: Vec<usize> = out.ones().map(|(_, c)| c).collect();
        let span = cols.iter().max().unwrap() - cols.iter().min().unwrap() + 1;
        assert!(span >= 8, "span {span}");
        assert_eq!(thin(&out), out);
    }

    #[test]
    fn two_by_two_block_keeps_one_pixel() {
        let block = solid(4, 4, 1, 1, 2, 2);
        let out = thin(&block);
        assert_eq!(out.count_ones(), 1);
        assert!(out.is_subset_of(&block));
    }

    #[test]
    fn ring_keeps_its_hole() {
        let mut ring = solid(9, 9, 1, 1, 7, 7);
        for r in 3..6 {
            for c in 3..6 {
                ring.set(r, c, false);
            }
        }
        let out = thin(&ring);
        assert_eq!(count_components(&out), 1);
        assert!(!has_full_2x2(&out));
        // Background inside the ring stays enclosed.
        assert!(!out.get(4, 4));
        assert!(out.count_ones() >= 8);
    }

    #[test]
    fn isolated_pixels_survive() {
        let dots = BitMap::from_points(5, 5, [(0, 0), (2, 2), (4, 4)]).unwrap();
        assert_eq!(thin(&dots), dots);
        assert_eq!(count_components(&dots), 3);
    }
}
