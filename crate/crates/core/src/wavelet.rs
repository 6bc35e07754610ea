//! Separable 2-D discrete wavelet transform with the 8-tap Daubechies filter
//! bank (four vanishing moments).
//!
//! The transform is periodized, which keeps it orthonormal: coefficient
//! energy equals signal energy and synthesis is the exact transpose of
//! analysis. Odd lengths at any level are padded by replicating the last
//! row/column; synthesis crops the padding back off.

use crate::error::{Error, Result};

/// Daubechies D8 scaling filter.
pub const D8_LOW: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

/// Quadrature mirror of [`D8_LOW`]: `g[n] = (-1)^n h[7 - n]`.
pub const D8_HIGH: [f64; 8] = [
    -0.010_597_401_784_997_278,
    -0.032_883_011_666_982_945,
    0.030_841_381_835_986_965,
    0.187_034_811_718_881_14,
    -0.027_983_769_416_983_85,
    -0.630_880_767_929_590_4,
    0.714_846_570_552_541_5,
    -0.230_377_813_308_855_23,
];

/// A coefficient plane (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Subband {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Subband {
    fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }
}

/// Detail subbands of one decomposition level plus the size of the plane
/// that was decomposed at this level (before padding).
#[derive(Clone, Debug, PartialEq)]
pub struct DetailLevel {
    pub source_width: usize,
    pub source_height: usize,
    /// Horizontal high-pass, vertical low-pass.
    pub hl: Subband,
    /// Horizontal low-pass, vertical high-pass.
    pub lh: Subband,
    pub hh: Subband,
}

impl DetailLevel {
    pub fn bands(&self) -> [&Subband; 3] {
        [&self.hl, &self.lh, &self.hh]
    }

    pub fn bands_mut(&mut self) -> [&mut Subband; 3] {
        [&mut self.hl, &mut self.lh, &mut self.hh]
    }
}

/// Multi-level decomposition. `details[0]` is the finest level.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    pub approx: Subband,
    pub details: Vec<DetailLevel>,
}

impl Pyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Sum of squared coefficients over every subband.
    pub fn energy(&self) -> f64 {
        let sq = |b: &Subband| b.data.iter().map(|v| v * v).sum::<f64>();
        sq(&self.approx)
            + self
                .details
                .iter()
                .flat_map(|d| d.bands())
                .map(sq)
                .sum::<f64>()
    }
}

fn analyze_1d(x: &[f64], lo: &mut [f64], hi: &mut [f64]) {
    let n = x.len();
    for k in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for t in 0..8 {
            let v = x[(2 * k + t) % n];
            a += D8_LOW[t] * v;
            d += D8_HIGH[t] * v;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

fn synthesize_1d(lo: &[f64], hi: &[f64], x: &mut [f64]) {
    let n = x.len();
    x.fill(0.0);
    for k in 0..n / 2 {
        for t in 0..8 {
            x[(2 * k + t) % n] += D8_LOW[t] * lo[k] + D8_HIGH[t] * hi[k];
        }
    }
}

/// Pads a plane to even dimensions by replicating the last column/row.
fn pad_even(data: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (pw, ph) = (w + w % 2, h + h % 2);
    if (pw, ph) == (w, h) {
        return (data.to_vec(), w, h);
    }
    let mut out = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        let row = &data[y.min(h - 1) * w..][..w];
        out.extend_from_slice(row);
        if pw > w {
            out.push(row[w - 1]);
        }
    }
    (out, pw, ph)
}

fn analyze_2d(data: &[f64], w: usize, h: usize) -> (Subband, DetailLevel) {
    let (x, pw, ph) = pad_even(data, w, h);
    let (hw, hh) = (pw / 2, ph / 2);

    // rows: [L | H] halves
    let mut rows = vec![0.0; pw * ph];
    let (mut lo, mut hi) = (vec![0.0; hw], vec![0.0; hw]);
    for y in 0..ph {
        analyze_1d(&x[y * pw..(y + 1) * pw], &mut lo, &mut hi);
        rows[y * pw..y * pw + hw].copy_from_slice(&lo);
        rows[y * pw + hw..(y + 1) * pw].copy_from_slice(&hi);
    }

    let mut ll = Subband::zeros(hw, hh);
    let mut hl = Subband::zeros(hw, hh);
    let mut lh = Subband::zeros(hw, hh);
    let mut hhb = Subband::zeros(hw, hh);
    let mut col = vec![0.0; ph];
    let (mut clo, mut chi) = (vec![0.0; hh], vec![0.0; hh]);
    for c in 0..pw {
        for y in 0..ph {
            col[y] = rows[y * pw + c];
        }
        analyze_1d(&col, &mut clo, &mut chi);
        let (low_dst, high_dst, cx) = if c < hw {
            (&mut ll, &mut lh, c)
        } else {
            (&mut hl, &mut hhb, c - hw)
        };
        for y in 0..hh {
            low_dst.data[y * hw + cx] = clo[y];
            high_dst.data[y * hw + cx] = chi[y];
        }
    }
    (
        ll,
        DetailLevel {
            source_width: w,
            source_height: h,
            hl,
            lh,
            hh: hhb,
        },
    )
}

fn synthesize_2d(ll: &Subband, level: &DetailLevel) -> Vec<f64> {
    let (hw, hh) = (ll.width, ll.height);
    let (pw, ph) = (hw * 2, hh * 2);

    let mut rows = vec![0.0; pw * ph];
    let mut col = vec![0.0; ph];
    let (mut clo, mut chi) = (vec![0.0; hh], vec![0.0; hh]);
    for c in 0..pw {
        let (low_src, high_src, cx) = if c < hw {
            (ll, &level.lh, c)
        } else {
            (&level.hl, &level.hh, c - hw)
        };
        for y in 0..hh {
            clo[y] = low_src.data[y * hw + cx];
            chi[y] = high_src.data[y * hw + cx];
        }
        synthesize_1d(&clo, &chi, &mut col);
        for y in 0..ph {
            rows[y * pw + c] = col[y];
        }
    }

    let (w, h) = (level.source_width, level.source_height);
    let mut out = Vec::with_capacity(w * h);
    let mut line = vec![0.0; pw];
    for y in 0..h {
        let r = &rows[y * pw..(y + 1) * pw];
        synthesize_1d(&r[..hw], &r[hw..], &mut line);
        out.extend_from_slice(&line[..w]);
    }
    out
}

/// Checks that a `width x height` plane supports `levels` decompositions.
pub fn check_depth(width: usize, height: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(crate::error::invalid("levels", "must be at least 1"));
    }
    let min = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    if width < min || height < min {
        return Err(Error::PlaneTooSmall {
            width,
            height,
            levels,
        });
    }
    Ok(())
}

/// Forward transform of a row-major plane.
pub fn dwt2(data: &[f64], width: usize, height: usize, levels: usize) -> Result<Pyramid> {
    check_depth(width, height, levels)?;
    if data.len() != width * height {
        return Err(Error::SizeMismatch {
            expected: width * height,
            found: data.len(),
        });
    }
    let mut details = Vec::with_capacity(levels);
    let mut current = Subband {
        width,
        height,
        data: data.to_vec(),
    };
    for _ in 0..levels {
        let (ll, detail) = analyze_2d(&current.data, current.width, current.height);
        details.push(detail);
        current = ll;
    }
    Ok(Pyramid {
        approx: current,
        details,
    })
}

/// Inverse transform. Returns the plane and its `(width, height)`.
pub fn idwt2(pyramid: &Pyramid) -> (Vec<f64>, usize, usize) {
    let mut current = pyramid.approx.clone();
    for level in pyramid.details.iter().rev() {
        let data = synthesize_2d(&current, level);
        current = Subband {
            width: level.source_width,
            height: level.source_height,
            data,
        };
    }
    (current.data, current.width, current.height)
}
