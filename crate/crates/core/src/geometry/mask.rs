use crate::grid::Grid;

/// A set of pixels stored as a bit grid over its bounding box.
///
/// `origin` is the `(row, col)` of the top-left cell. Masks built through
/// [`PixelMask::from_pixels`] or the rasterizer have a tight bounding box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    origin: (i64, i64),
    height: usize,
    width: usize,
    bits: Vec<bool>,
    count: usize,
}

impl PixelMask {
    pub fn empty() -> Self {
        PixelMask {
            origin: (0, 0),
            height: 0,
            width: 0,
            bits: Vec::new(),
            count: 0,
        }
    }

    pub fn from_pixels(pixels: impl IntoIterator<Item = (i64, i64)>) -> Self {
        let pixels: Vec<(i64, i64)> = pixels.into_iter().collect();
        if pixels.is_empty() {
            return Self::empty();
        }
        let r0 = pixels.iter().map(|p| p.0).min().unwrap();
        let r1 = pixels.iter().map(|p| p.0).max().unwrap();
        let c0 = pixels.iter().map(|p| p.1).min().unwrap();
        let c1 = pixels.iter().map(|p| p.1).max().unwrap();
        let height = (r1 - r0 + 1) as usize;
        let width = (c1 - c0 + 1) as usize;
        let mut bits = vec![false; height * width];
        let mut count = 0;
        for (r, c) in pixels {
            let idx = (r - r0) as usize * width + (c - c0) as usize;
            if !bits[idx] {
                bits[idx] = true;
                count += 1;
            }
        }
        PixelMask {
            origin: (r0, c0),
            height,
            width,
            bits,
            count,
        }
    }

    /// Builds a mask from an untrimmed bit box, shrinking it to the set bits.
    pub(crate) fn from_box(origin: (i64, i64), height: usize, width: usize, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), height * width);
        let mut rmin = usize::MAX;
        let mut rmax = 0;
        let mut cmin = usize::MAX;
        let mut cmax = 0;
        let mut count = 0;
        for r in 0..height {
            for c in 0..width {
                if bits[r * width + c] {
                    rmin = rmin.min(r);
                    rmax = rmax.max(r);
                    cmin = cmin.min(c);
                    cmax = cmax.max(c);
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Self::empty();
        }
        if rmin == 0 && cmin == 0 && rmax + 1 == height && cmax + 1 == width {
            return PixelMask {
                origin,
                height,
                width,
                bits,
                count,
            };
        }
        let h = rmax - rmin + 1;
        let w = cmax - cmin + 1;
        let mut trimmed = Vec::with_capacity(h * w);
        for r in rmin..=rmax {
            trimmed.extend_from_slice(&bits[r * width + cmin..r * width + cmax + 1]);
        }
        PixelMask {
            origin: (origin.0 + rmin as i64, origin.1 + cmin as i64),
            height: h,
            width: w,
            bits: trimmed,
            count,
        }
    }

    /// Extracts the pixels of `grid` for which `pred` holds.
    pub fn from_grid<T>(grid: &Grid<T>, pred: impl Fn(&T) -> bool) -> Self {
        let bits: Vec<bool> = (0..grid.height())
            .flat_map(|r| (0..grid.width()).map(move |c| (r, c)))
            .map(|(r, c)| pred(grid.get(r, c)))
            .collect();
        Self::from_box((0, 0), grid.height(), grid.width(), bits)
    }

    #[inline]
    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    /// `(height, width)` of the bounding box.
    #[inline]
    pub fn bbox_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn contains(&self, row: i64, col: i64) -> bool {
        let r = row - self.origin.0;
        let c = col - self.origin.1;
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            return false;
        }
        self.bits[r as usize * self.width + c as usize]
    }

    /// Member pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let (r0, c0) = self.origin;
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (r0 + (i / w) as i64, c0 + (i % w) as i64))
    }

    /// Number of pixels present in both masks.
    pub fn intersection_count(&self, other: &PixelMask) -> usize {
        if self.is_empty() || other.is_empty() {
            return 0;
        }
        let r0 = self.origin.0.max(other.origin.0);
        let r1 = (self.origin.0 + self.height as i64).min(other.origin.0 + other.height as i64);
        let c0 = self.origin.1.max(other.origin.1);
        let c1 = (self.origin.1 + self.width as i64).min(other.origin.1 + other.width as i64);
        if r0 >= r1 || c0 >= c1 {
            return 0;
        }
        let span = (c1 - c0) as usize;
        let mut n = 0;
        for r in r0..r1 {
            let a = (r - self.origin.0) as usize * self.width + (c0 - self.origin.1) as usize;
            let b = (r - other.origin.0) as usize * other.width + (c0 - other.origin.1) as usize;
            n += self.bits[a..a + span]
                .iter()
                .zip(&other.bits[b..b + span])
                .filter(|(x, y)| **x && **y)
                .count();
        }
        n
    }

    /// Pixel-set IoU; 0 when both masks are empty.
    pub fn iou(&self, other: &PixelMask) -> f64 {
        let inter = self.intersection_count(other);
        let union = self.count + other.count - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn translated(&self, d_row: i64, d_col: i64) -> PixelMask {
        PixelMask {
            origin: (self.origin.0 + d_row, self.origin.1 + d_col),
            ..self.clone()
        }
    }
}
