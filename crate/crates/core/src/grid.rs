//! Row-major 2-D grids shared by every stage of the pipeline.
//!
//! [`BitMap`] carries binary edges and masks, [`GrayMap`] carries
//! probabilities and soft targets in `[0, 1]`, and [`Field`] carries
//! unconstrained reals such as loss gradients.

use crate::error::{Error, Result};

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Argument(format!(
            "grid dimensions must be positive, got {height}x{width}"
        )));
    }
    match height.checked_mul(width) {
        Some(n) if n == len => Ok(()),
        _ => Err(Error::Argument(format!(
            "grid of {height}x{width} needs {} values, got {len}",
            height.saturating_mul(width)
        ))),
    }
}

/// Binary grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitMap {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BitMap {
    /// All-zero map.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(height, width, bits.len())?;
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    /// Builds a map from `(row, col)` coordinates; out-of-range points are an error.
    pub fn from_points(
        height: usize,
        width: usize,
        points: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        check_dims(height, width, height.saturating_mul(width))?;
        let mut map = Self::new(height, width);
        for (r, c) in points {
            if r >= height || c >= width {
                return Err(Error::Argument(format!(
                    "point ({r}, {c}) outside {height}x{width} grid"
                )));
            }
            map.set(r, c, true);
        }
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Like [`get`](Self::get) but returns `false` outside the grid.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.bits[row as usize * self.width + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixels as `(row, col)` in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn same_shape<T: Shape>(&self, other: &T) -> bool {
        self.height == other.height() && self.width == other.width()
    }

    /// `true` iff every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMap) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn union_with(&mut self, other: &BitMap) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }
}

/// Anything with a height and width.
pub trait Shape {
    fn height(&self) -> usize;
    fn width(&self) -> usize;

    fn same_shape(&self, other: &impl Shape) -> bool {
        self.height() == other.height() && self.width() == other.width()
    }
}

impl Shape for BitMap {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
}

/// Real grid with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl GrayMap {
    /// Constant map.
    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_values(height, width, vec![value; height.saturating_mul(width)])
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "gray value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// Lifts a binary map to `{0.0, 1.0}` values.
    pub fn from_bitmap(map: &BitMap) -> Self {
        Self {
            height: map.height,
            width: map.width,
            values: map.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// # Panics
    /// If `value` is outside `[0, 1]`.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!((0.0..=1.0).contains(&value), "gray value {value} outside [0, 1]");
        self.values[row * self.width + col] = value;
    }

    /// Pixels with value `>= threshold`.
    pub fn threshold(&self, threshold: f64) -> BitMap {
        BitMap {
            height: self.height,
            width: self.width,
            bits: self.values.iter().map(|&v| v >= threshold).collect(),
        }
    }

    pub fn same_shape<T: Shape>(&self, other: &T) -> bool {
        self.height == other.height() && self.width == other.width()
    }
}

impl Shape for GrayMap {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
}

/// Unconstrained real grid, used for gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

impl Shape for Field {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
}
