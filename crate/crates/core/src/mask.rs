//! Binary pixel masks and bounding boxes.
//!
//! Coordinate convention throughout the crate: `x` is the column, `y` is the
//! row, origin at the top-left corner.

/// Binary mask over one slice. The foreground pixel count is cached and kept
/// consistent by every constructor and mutator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
    area: usize,
}

impl Mask {
    /// All-background mask of the given dimensions.
    pub fn empty(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "mask dimensions must be >= 1");
        Mask {
            height,
            width,
            bits: vec![false; height * width],
            area: 0,
        }
    }

    /// All-foreground mask of the given dimensions.
    pub fn full(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "mask dimensions must be >= 1");
        Mask {
            height,
            width,
            bits: vec![true; height * width],
            area: height * width,
        }
    }

    /// Build from a row-major bit vector.
    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Self {
        assert!(height >= 1 && width >= 1, "mask dimensions must be >= 1");
        assert_eq!(bits.len(), height * width, "bit vector length mismatch");
        let area = bits.iter().filter(|&&b| b).count();
        Mask {
            height,
            width,
            bits,
            area,
        }
    }

    /// Build by evaluating `f(x, y)` over every pixel.
    pub fn from_fn<F: Fn(usize, usize) -> bool>(height: usize, width: usize, f: F) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask::from_bits(height, width, bits)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// (height, width)
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> usize {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let idx = y * self.width + x;
        if self.bits[idx] != value {
            self.bits[idx] = value;
            if value {
                self.area += 1;
            } else {
                self.area -= 1;
            }
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Pixel-wise union. Panics on dimension mismatch (programmer error).
    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!(self.dims(), other.dims(), "mask dimension mismatch");
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        Mask::from_bits(self.height, self.width, bits)
    }

    /// Foreground pixels of `self` that lie inside `bbox` (inclusive bounds).
    pub fn intersect_box(&self, bbox: &BoundingBox) -> Mask {
        Mask::from_fn(self.height, self.width, |x, y| {
            self.get(x, y) && bbox.contains(x, y)
        })
    }

    /// Iterator over foreground pixel coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }
}

/// Inclusive axis-aligned bounding box, `x` horizontal and `y` vertical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        assert!(x_min <= x_max && y_min <= y_max, "degenerate bounding box");
        BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }
}
