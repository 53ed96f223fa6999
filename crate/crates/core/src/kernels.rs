//! Forward-only reference kernels for the query-based dense prediction head.
//!
//! Object queries cross-attend to image features through
//! [`scaled_dot_attention`], a linear projection turns each query into
//! per-channel coefficients ([`coef_head`]), and [`dense_head`] applies those
//! coefficients as a per-query 1×1 convolution over a shared feature map.

use crate::error::{Error, Result};
use crate::grid::GrayMap;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Argument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::Argument(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows.saturating_mul(cols)])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// `n` object queries of dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySet(Matrix);

impl QuerySet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        Matrix::new(n, d, data).map(Self)
    }

    pub fn n(&self) -> usize {
        self.0.rows
    }

    pub fn d(&self) -> usize {
        self.0.cols
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Per-query channel coefficients, every entry in `[0, 1]`.
///
/// [`coef_head`] always produces entries strictly inside `(0, 1)`; the closed
/// interval is accepted so selector rows can be supplied directly.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefSet(Matrix);

impl CoefSet {
    pub fn new(n: usize, f: usize, data: Vec<f64>) -> Result<Self> {
        let m = Matrix::new(n, f, data)?;
        if m.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Argument("coefficients must lie in [0, 1]".into()));
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.rows
    }

    pub fn f(&self) -> usize {
        self.0.cols
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }
}

/// `channels × height × width` feature tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "feature map dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        let len = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or(Error::Overflow("feature map size"))?;
        if len != data.len() {
            return Err(Error::Argument(format!(
                "{channels}x{height}x{width} feature map needs {len} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("feature map has non-finite entries".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Plane of channel `c` in row-major order.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Largest `f64` below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function kept inside the open unit interval. In `f64` the logistic
/// rounds to exactly 0 or 1 once `|x|` exceeds roughly 37 or 745.
fn sigmoid_open(x: f64) -> f64 {
    sigmoid(x).clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// Single-head scaled dot-product attention.
///
/// Returns `(softmax(Q Kᵀ / √d) V, softmax(Q Kᵀ / √d))`.
pub fn scaled_dot_attention(
    queries: &Matrix,
    keys: &Matrix,
    values: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let d = queries.cols;
    if keys.cols != d {
        return Err(Error::Argument(format!(
            "queries have dimension {d} but keys have {}",
            keys.cols
        )));
    }
    if values.rows != keys.rows {
        return Err(Error::Argument(format!(
            "{} keys but {} values",
            keys.rows, values.rows
        )));
    }
    let (n, m, dv) = (queries.rows, keys.rows, values.cols);
    let scale = 1.0 / (d as f64).sqrt();

    let mut weights = vec![0.0; n * m];
    for i in 0..n {
        let q = queries.row(i);
        let row = &mut weights[i * m..(i + 1) * m];
        for (j, w) in row.iter_mut().enumerate() {
            *w = q.iter().zip(keys.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for w in row.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        for w in row.iter_mut() {
            *w /= total;
        }
    }

    let mut out = vec![0.0; n * dv];
    for i in 0..n {
        for j in 0..m {
            let w = weights[i * m + j];
            for (o, v) in out[i * dv..(i + 1) * dv].iter_mut().zip(values.row(j)) {
                *o += w * v;
            }
        }
    }
    Ok((Matrix::new(n, dv, out)?, Matrix::new(n, m, weights)?))
}

/// Projects queries to per-channel coefficients: `sigmoid(Q W + b)`.
pub fn coef_head(queries: &QuerySet, weight: &Matrix, bias: &[f64]) -> Result<CoefSet> {
    let (n, d) = (queries.n(), queries.d());
    if weight.rows != d {
        return Err(Error::Argument(format!(
            "weight has {} rows, queries have dimension {d}",
            weight.rows
        )));
    }
    let f = weight.cols;
    if bias.len() != f {
        return Err(Error::Argument(format!(
            "bias has {} entries, weight has {f} columns",
            bias.len()
        )));
    }
    let mut data = Vec::with_capacity(n * f);
    for i in 0..n {
        let q = queries.0.row(i);
        for (c, &b) in bias.iter().enumerate() {
            let z: f64 = q.iter().enumerate().map(|(k, &qk)| qk * weight.get(k, c)).sum();
            data.push(sigmoid_open(z + b));
        }
    }
    Ok(CoefSet(Matrix::new(n, f, data)?))
}

/// Per-query 1×1 convolution: `O_i[y, x] = sigmoid(Σ_c Q′[i, c] F[c, y, x])`.
pub fn dense_head(coefs: &CoefSet, features: &FeatureMap) -> Result<Vec<GrayMap>> {
    if coefs.f() != features.channels {
        return Err(Error::Argument(format!(
            "coefficients have {} channels, features have {}",
            coefs.f(),
            features.channels
        )));
    }
    let plane = features.height * features.width;
    (0..coefs.n())
        .map(|i| {
            let mut acc = vec![0.0; plane];
            for (c, &k) in coefs.0.row(i).iter().enumerate() {
                for (a, &v) in acc.iter_mut().zip(features.channel(c)) {
                    *a += k * v;
                }
            }
            let values = acc.into_iter().map(sigmoid_open).collect();
            GrayMap::from_values(features.height, features.width, values)
        })
        .collect()
}

/// Downsampling factor of the feature map each decoder layer attends to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderSchedule {
    downsample_factors: Vec<u32>,
}

impl DecoderSchedule {
    pub fn new(downsample_factors: Vec<u32>) -> Result<Self> {
        if downsample_factors.is_empty() {
            return Err(Error::Argument("schedule needs at least one layer".into()));
        }
        if let Some(f) = downsample_factors.iter().find(|f| ![32, 16, 8, 4].contains(*f)) {
            return Err(Error::Argument(format!(
                "downsample factor {f} not in {{32, 16, 8, 4}}"
            )));
        }
        if downsample_factors.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Argument(
                "schedule must go from coarse to fine".into(),
            ));
        }
        Ok(Self { downsample_factors })
    }

    pub fn factors(&self) -> &[u32] {
        &self.downsample_factors
    }

    pub fn len(&self) -> usize {
        self.downsample_factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.downsample_factors.is_empty()
    }
}

/// Six decoder layers: four at 1/32, then 1/16 and 1/8.
pub fn default_schedule() -> DecoderSchedule {
    DecoderSchedule {
        downsample_factors: vec![32, 32, 32, 32, 16, 8],
    }
}

/// Dominant-term cost of cross attention between `n` queries of dimension `d`
/// and an `h × w` feature map: `n·d·(hw)² + n·d²·(hw)`.
pub fn cross_attention_cost(n: u64, d: u64, h: u64, w: u64) -> Result<u64> {
    if n == 0 || d == 0 || h == 0 || w == 0 {
        return Err(Error::Argument(
            "cross attention cost needs positive arguments".into(),
        ));
    }
    let overflow = || Error::Overflow("cross attention cost");
    let hw = h.checked_mul(w).ok_or_else(overflow)?;
    let nd = n.checked_mul(d).ok_or_else(overflow)?;
    let first = nd
        .checked_mul(hw)
        .and_then(|v| v.checked_mul(hw))
        .ok_or_else(overflow)?;
    let second = nd
        .checked_mul(d)
        .and_then(|v| v.checked_mul(hw))
        .ok_or_else(overflow)?;
    first.checked_add(second).ok_or_else(overflow)
}

/// Feature-map side length at `factor` for an image side of `size` (rounded up).
pub fn downsampled(size: u64, factor: u32) -> u64 {
    size.div_ceil(u64::from(factor)).max(1)
}
