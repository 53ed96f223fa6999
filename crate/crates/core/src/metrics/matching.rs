//! Distance-gated bipartite matching between ground-truth and predicted edge
//! pixels.
//!
//! A predicted pixel is a candidate for a ground-truth pixel when their
//! euclidean distance is strictly below the gate. Among all one-to-one
//! assignments over candidates we take one of maximum cardinality and,
//! among those, minimum total distance. The candidate graph is split into
//! connected components and each is solved by successive shortest paths
//! with Dijkstra on reduced costs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::BitMap;
use crate::metrics::EvalConfig;

/// Outcome of matching one predicted instance against its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchResult {
    /// `(gt node, pred node)` indices into the row-major lists of set pixels.
    pub matched_pairs: Vec<(usize, usize)>,
    pub pred_total: usize,
    pub gt_total: usize,
    /// Sum of euclidean distances over matched pairs.
    pub total_cost: f64,
}

impl MatchResult {
    pub fn matched(&self) -> usize {
        self.matched_pairs.len()
    }

    /// Prediction with no ground-truth partner.
    pub fn unmatched_prediction(pred_total: usize) -> Self {
        Self {
            matched_pairs: Vec::new(),
            pred_total,
            gt_total: 0,
            total_cost: 0.0,
        }
    }

    /// Ground truth with no predicted partner.
    pub fn missed_ground_truth(gt_total: usize) -> Self {
        Self {
            matched_pairs: Vec::new(),
            pred_total: 0,
            gt_total,
            total_cost: 0.0,
        }
    }
}

/// Maximum matching distance `√(H² + W²) · λ` for an `H × W` image.
pub fn max_distance(height: usize, width: usize, lambda: f64) -> f64 {
    (height as f64).hypot(width as f64) * lambda
}

#[inline]
fn dist(a: (usize, usize), b: (usize, usize)) -> f64 {
    (a.0 as f64 - b.0 as f64).hypot(a.1 as f64 - b.1 as f64)
}

/// Matches two already-thinned edge maps of equal size, gating candidates at
/// [`max_distance`] for the map's dimensions.
pub fn match_instance(pred: &BitMap, gt: &BitMap, cfg: &EvalConfig) -> Result<MatchResult> {
    match_within(pred, gt, max_distance(gt.height(), gt.width(), cfg.lambda))
}

/// Like [`match_instance`] with an explicit distance gate.
pub fn match_within(pred: &BitMap, gt: &BitMap, max_dist: f64) -> Result<MatchResult> {
    if !pred.same_shape(gt) {
        return Err(Error::Argument(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let gt_nodes: Vec<_> = gt.ones().collect();
    let pred_nodes: Vec<_> = pred.ones().collect();

    // Pixel index -> pred node index, for windowed candidate lookup.
    let (h, w) = (pred.height(), pred.width());
    let mut pred_at = vec![usize::MAX; h * w];
    for (i, &(r, c)) in pred_nodes.iter().enumerate() {
        pred_at[r * w + c] = i;
    }
    let reach = if max_dist.is_finite() {
        max_dist.max(0.0).ceil() as usize
    } else {
        h.max(w)
    };
    let mut candidates = vec![Vec::new(); gt_nodes.len()];
    for (g, &(r, c)) in gt_nodes.iter().enumerate() {
        for rr in r.saturating_sub(reach)..=(r + reach).min(h - 1) {
            for cc in c.saturating_sub(reach)..=(c + reach).min(w - 1) {
                let p = pred_at[rr * w + cc];
                if p != usize::MAX {
                    let d = dist((r, c), (rr, cc));
                    if d < max_dist {
                        candidates[g].push((p, d));
                    }
                }
            }
        }
    }
    let (matched_pairs, total_cost) = assign(&candidates, pred_nodes.len());
    Ok(MatchResult {
        matched_pairs,
        pred_total: pred_nodes.len(),
        gt_total: gt_nodes.len(),
        total_cost,
    })
}

/// Maximum-cardinality, minimum-cost assignment.
///
/// `candidates[g]` lists `(pred, cost)` for left node `g`; costs must be
/// non-negative. Returns `(g, pred)` pairs sorted by `g` and the total cost.
pub fn assign(candidates: &[Vec<(usize, f64)>], pred_count: usize) -> (Vec<(usize, usize)>, f64) {
    let gt_count = candidates.len();
    // Union-find over gt nodes [0, G) and pred nodes [G, G + P).
    let mut parent: Vec<usize> = (0..gt_count + pred_count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (g, cands) in candidates.iter().enumerate() {
        for &(p, _) in cands {
            let (a, b) = (find(&mut parent, g), find(&mut parent, gt_count + p));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); gt_count + pred_count];
    for (g, cands) in candidates.iter().enumerate() {
        if !cands.is_empty() {
            let root = find(&mut parent, g);
            groups[root].push(g);
        }
    }

    let mut pairs = Vec::new();
    let mut total = 0.0;
    for group in groups.into_iter().filter(|g| !g.is_empty()) {
        let (p, c) = solve_component(candidates, &group);
        pairs.extend(p);
        total += c;
    }
    pairs.sort_unstable();
    (pairs, total)
}

#[derive(Clone, Copy)]
struct Edge {
    to: usize,
    cap: u8,
    cost: f64,
    rev: usize,
}

#[derive(PartialEq)]
struct Visit(f64, usize);

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Successive shortest paths on one connected component.
fn solve_component(candidates: &[Vec<(usize, f64)>], gts: &[usize]) -> (Vec<(usize, usize)>, f64) {
    // Local node numbering: source 0, gts 1..=G, preds G+1.., sink last.
    let mut pred_local = std::collections::BTreeMap::new();
    for &g in gts {
        for &(p, _) in &candidates[g] {
            let next = pred_local.len();
            pred_local.entry(p).or_insert(next);
        }
    }
    let n_g = gts.len();
    let n_p = pred_local.len();
    let source = 0;
    let sink = n_g + n_p + 1;
    let n = sink + 1;
    let mut graph: Vec<Vec<Edge>> = vec![Vec::new(); n];
    let add = |graph: &mut Vec<Vec<Edge>>, from: usize, to: usize, cost: f64| {
        let (rf, rt) = (graph[to].len(), graph[from].len());
        graph[from].push(Edge {
            to,
            cap: 1,
            cost,
            rev: rf,
        });
        graph[to].push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
            rev: rt,
        });
    };
    for (i, &g) in gts.iter().enumerate() {
        add(&mut graph, source, 1 + i, 0.0);
        for &(p, cost) in &candidates[g] {
            add(&mut graph, 1 + i, 1 + n_g + pred_local[&p], cost);
        }
    }
    for j in 0..n_p {
        add(&mut graph, 1 + n_g + j, sink, 0.0);
    }

    let mut potential = vec![0.0; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); n];
    let mut heap = BinaryHeap::new();
    loop {
        dist.fill(f64::INFINITY);
        dist[source] = 0.0;
        heap.push(Visit(0.0, source));
        while let Some(Visit(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (ei, e) in graph[u].iter().enumerate() {
                if e.cap == 0 {
                    continue;
                }
                let reduced = (e.cost + potential[u] - potential[e.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    prev[e.to] = (u, ei);
                    heap.push(Visit(nd, e.to));
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        // Capping at the sink distance keeps reduced costs non-negative for
        // nodes this round did not reach.
        let cap = dist[sink];
        for (p, &d) in potential.iter_mut().zip(&dist) {
            *p += d.min(cap);
        }
        let mut v = sink;
        while v != source {
            let (u, ei) = prev[v];
            let rev = graph[u][ei].rev;
            graph[u][ei].cap -= 1;
            graph[v][rev].cap += 1;
            v = u;
        }
    }

    let local_to_pred: Vec<usize> = {
        let mut v = vec![0; n_p];
        for (&p, &j) in &pred_local {
            v[j] = p;
        }
        v
    };
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (i, &g) in gts.iter().enumerate() {
        for e in &graph[1 + i] {
            if e.to > n_g && e.to < sink && e.cap == 0 {
                pairs.push((g, local_to_pred[e.to - 1 - n_g]));
                total += e.cost;
            }
        }
    }
    (pairs, total)
}
