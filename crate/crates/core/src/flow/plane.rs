//! Real-valued single-channel rasters with half-sample symmetric boundaries.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

/// Reflect an integer index into `0..n` (…, 1, 0 | 0, 1, …, n-1 | n-1, …).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

/// Continuous counterpart of [`reflect`]: mirror about -0.5 and n-0.5.
#[inline]
fn reflect_coord(x: f64, n: usize) -> f64 {
    let period = 2.0 * n as f64;
    let mut k = (x + 0.5).rem_euclid(period);
    if k >= n as f64 {
        k = period - k;
    }
    (k - 0.5).clamp(0.0, n as f64 - 1.0)
}

impl Plane {
    pub fn new(w: usize, h: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), w * h);
        Plane { w, h, data }
    }

    pub fn zeros(w: usize, h: usize) -> Self {
        Plane::new(w, h, vec![0.0; w * h])
    }

    #[inline]
    pub fn at(&self, x: isize, y: isize) -> f64 {
        self.data[reflect(y, self.h) * self.w + reflect(x, self.w)]
    }

    /// Bilinear sample at a continuous position, reflecting outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = reflect_coord(x, self.w);
        let y = reflect_coord(y, self.h);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as usize, y0 as usize);
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let row0 = y0 * self.w;
        let row1 = y1 * self.w;
        let top = self.data[row0 + x0] * (1.0 - fx) + self.data[row0 + x1] * fx;
        let bottom = self.data[row1 + x0] * (1.0 - fx) + self.data[row1 + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn gaussian_blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);

        let mut tmp = Plane::zeros(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                tmp.data[y * self.w + x] = kernel
                    .iter()
                    .zip(-radius..)
                    .map(|(k, d)| k * self.at(x as isize + d, y as isize))
                    .sum();
            }
        }
        let mut out = Plane::zeros(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                out.data[y * self.w + x] = kernel
                    .iter()
                    .zip(-radius..)
                    .map(|(k, d)| k * tmp.at(x as isize, y as isize + d))
                    .sum();
            }
        }
        out
    }

    /// Resample to `w x h` with pixel centers aligned.
    pub fn resize(&self, w: usize, h: usize) -> Plane {
        let sx = self.w as f64 / w as f64;
        let sy = self.h as f64 / h as f64;
        let mut out = Plane::zeros(w, h);
        for y in 0..h {
            let fy = (y as f64 + 0.5) * sy - 0.5;
            for x in 0..w {
                let fx = (x as f64 + 0.5) * sx - 0.5;
                out.data[y * w + x] = self.sample(fx, fy);
            }
        }
        out
    }
}
