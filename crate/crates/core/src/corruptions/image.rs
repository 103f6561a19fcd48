//! Grid corruptions: patch randomization, ROI masking, frequency and
//! intensity filtering, plus the random-crop and gaussian-noise baselines.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::covariate::Grid;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Rearranges the `(H/patch)·(W/patch)` non-overlapping patches of `g` by a
/// uniform permutation.
///
/// Patches are numbered row-major over the patch grid. The permutation is
/// [`SplitMix64::permutation`] seeded with `seed`; output patch `p` is
/// source patch `perm[p]`. All channels of a pixel move together.
pub fn patch_randomize(g: &Grid, patch: usize, seed: u64) -> Result<Grid> {
    if patch == 0 {
        return Err(Error::InvalidParameter("patch size must be >= 1".into()));
    }
    let (h, w, c) = (g.height(), g.width(), g.channels());
    if h % patch != 0 || w % patch != 0 {
        return Err(Error::Sizing(format!(
            "patch size {patch} does not divide {h}x{w}"
        )));
    }
    let (ph, pw) = (h / patch, w / patch);
    let perm = SplitMix64::new(seed).permutation(ph * pw);
    let src = g.values();
    let mut out = vec![0f32; src.len()];
    let row_len = patch * c;
    for (dst_p, &src_p) in perm.iter().enumerate() {
        let (dr, dc) = (dst_p / pw * patch, dst_p % pw * patch);
        let (sr, sc) = (src_p / pw * patch, src_p % pw * patch);
        for i in 0..patch {
            let d = g.index(dr + i, dc, 0);
            let s = g.index(sr + i, sc, 0);
            out[d..d + row_len].copy_from_slice(&src[s..s + row_len]);
        }
    }
    Ok(Grid::from_raw(h, w, c, out))
}

/// Zeroes the centered `size×size` square; the top-left corner sits at
/// `((H - size) / 2, (W - size) / 2)` rounded down.
pub fn roi_mask(g: &Grid, size: usize) -> Result<Grid> {
    let (h, w, c) = (g.height(), g.width(), g.channels());
    if size > h.min(w) {
        return Err(Error::Sizing(format!(
            "mask size {size} exceeds {h}x{w}"
        )));
    }
    let (r0, c0) = ((h - size) / 2, (w - size) / 2);
    let mut out = g.values().to_vec();
    for r in r0..r0 + size {
        let start = g.index(r, c0, 0);
        out[start..start + size * c].fill(0.0);
    }
    Ok(Grid::from_raw(h, w, c, out))
}

/// True when DFT index `u` (of an axis of length `n`) falls inside the
/// centered window of width `cutoff` of the zero-frequency-centered spectrum.
///
/// With signed frequency `k = ((u + n/2) mod n) - n/2`, the window is
/// `-floor(cutoff/2) <= k < cutoff - floor(cutoff/2)`.
fn in_window(u: usize, n: usize, cutoff: usize) -> bool {
    let k = ((u + n / 2) % n) as i64 - (n / 2) as i64;
    let lo = -((cutoff / 2) as i64);
    let hi = cutoff as i64 - (cutoff / 2) as i64;
    k >= lo && k < hi
}

/// Whether coefficient `(u, v)` of an `h×w` spectrum is removed by the
/// high-pass filter: it lies in the centered `cutoff×cutoff` square, or its
/// conjugate partner `(-u, -v)` does. Closing the square under conjugation
/// keeps the filtered spectrum Hermitian, so the linear stage is an exact
/// real projection.
pub fn frequency_removed(u: usize, v: usize, h: usize, w: usize, cutoff: usize) -> bool {
    let direct = in_window(u, h, cutoff) && in_window(v, w, cutoff);
    let mirror = in_window((h - u) % h, h, cutoff) && in_window((w - v) % w, w, cutoff);
    direct || mirror
}

/// In-place unnormalized 2D DFT of a row-major `h×w` buffer.
fn fft2(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex::default(); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = buf[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            buf[r * w + c] = col[r];
        }
    }
}

/// Linear stage of the frequency filter on raw channel-interleaved values:
/// per channel, DFT, zero the removed coefficients (see
/// [`frequency_removed`]), inverse DFT, real part. No clamping.
pub fn high_pass(
    height: usize,
    width: usize,
    channels: usize,
    values: &[f64],
    cutoff: usize,
) -> Result<Vec<f64>> {
    if values.len() != height * width * channels {
        return Err(Error::Shape("value count does not match shape".into()));
    }
    if cutoff > height.min(width) {
        return Err(Error::Sizing(format!(
            "cutoff {cutoff} exceeds {height}x{width}"
        )));
    }
    let mut planner = FftPlanner::new();
    let n = height * width;
    let mut out = vec![0f64; values.len()];
    let mut buf = vec![Complex::default(); n];
    for ch in 0..channels {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(values[i * channels + ch], 0.0);
        }
        fft2(&mut planner, &mut buf, height, width, false);
        for u in 0..height {
            for v in 0..width {
                if frequency_removed(u, v, height, width, cutoff) {
                    buf[u * width + v] = Complex::default();
                }
            }
        }
        fft2(&mut planner, &mut buf, height, width, true);
        let scale = 1.0 / n as f64;
        for (i, b) in buf.iter().enumerate() {
            out[i * channels + ch] = b.re * scale;
        }
    }
    Ok(out)
}

/// Removes the lowest `cutoff×cutoff` frequencies of every channel and clamps
/// the result back into `[0, 1]`.
pub fn freq_filter(g: &Grid, cutoff: usize) -> Result<Grid> {
    let values: Vec<f64> = g.values().iter().map(|&v| v as f64).collect();
    let filtered = high_pass(g.height(), g.width(), g.channels(), &values, cutoff)?;
    let out = filtered
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0) as f32)
        .collect();
    Ok(Grid::from_raw(g.height(), g.width(), g.channels(), out))
}

/// Zeroes every pixel whose channel-mean intensity is strictly above
/// `threshold` (an absolute intensity in `[0, 1]`).
pub fn intensity_filter(g: &Grid, threshold: f64) -> Result<Grid> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let c = g.channels();
    let mut out = g.values().to_vec();
    for px in out.chunks_exact_mut(c) {
        let mean = px.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        if mean > threshold {
            px.fill(0.0);
        }
    }
    Ok(Grid::from_raw(g.height(), g.width(), c, out))
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub(crate) fn resize_bilinear(
    src: &[f32],
    src_h: usize,
    src_w: usize,
    channels: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f32> {
    let axis = |i: usize, src_n: usize, dst_n: usize| -> (usize, usize, f64) {
        let pos = (i as f64 + 0.5) * src_n as f64 / dst_n as f64 - 0.5;
        let pos = pos.clamp(0.0, (src_n - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(src_n - 1);
        (i0, i1, pos - i0 as f64)
    };
    let at = |r: usize, c: usize, ch: usize| src[(r * src_w + c) * channels + ch] as f64;
    let mut out = Vec::with_capacity(dst_h * dst_w * channels);
    for i in 0..dst_h {
        let (y0, y1, wy) = axis(i, src_h, dst_h);
        for j in 0..dst_w {
            let (x0, x1, wx) = axis(j, src_w, dst_w);
            for ch in 0..channels {
                let top = (1.0 - wx) * at(y0, x0, ch) + wx * at(y0, x1, ch);
                let bottom = (1.0 - wx) * at(y1, x0, ch) + wx * at(y1, x1, ch);
                let v = (1.0 - wy) * top + wy * bottom;
                out.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    out
}

/// Random crop of area fraction in `[min_frac, 1]`, resized back to `H×W`.
///
/// Draws, in order: `frac = min_frac + (1 - min_frac)·u`; crop sides
/// `round(H·sqrt(frac))`, `round(W·sqrt(frac))` (at least 1); then
/// `top = below(H - ch + 1)` and `left = below(W - cw + 1)`.
pub fn rand_crop(g: &Grid, min_frac: f64, seed: u64) -> Result<Grid> {
    if !(min_frac > 0.0 && min_frac <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "min_frac {min_frac} outside (0, 1]"
        )));
    }
    let (h, w, c) = (g.height(), g.width(), g.channels());
    let mut rng = SplitMix64::new(seed);
    let frac = min_frac + (1.0 - min_frac) * rng.next_f64();
    let scale = frac.sqrt();
    let ch = ((h as f64 * scale).round() as usize).clamp(1, h);
    let cw = ((w as f64 * scale).round() as usize).clamp(1, w);
    let top = rng.below((h - ch + 1) as u64) as usize;
    let left = rng.below((w - cw + 1) as u64) as usize;
    let mut crop = Vec::with_capacity(ch * cw * c);
    for r in top..top + ch {
        let s = g.index(r, left, 0);
        crop.extend_from_slice(&g.values()[s..s + cw * c]);
    }
    Ok(Grid::from_raw(h, w, c, resize_bilinear(&crop, ch, cw, c, h, w)))
}

/// Adds i.i.d. `N(0, variance)` noise to every value (in storage order, one
/// [`SplitMix64::standard_normal`] draw each) and clamps to `[0, 1]`.
pub fn gauss_noise(g: &Grid, variance: f64, seed: u64) -> Result<Grid> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "variance {variance} must be finite and >= 0"
        )));
    }
    let sd = variance.sqrt();
    let mut rng = SplitMix64::new(seed);
    let out = g
        .values()
        .iter()
        .map(|&v| (v as f64 + sd * rng.standard_normal()).clamp(0.0, 1.0) as f32)
        .collect();
    Ok(Grid::from_raw(g.height(), g.width(), g.channels(), out))
}
