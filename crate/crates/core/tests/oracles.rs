//! Library routines checked against independent reference implementations.

use semcorr::corruptions::{frequency_removed, gauss_noise, high_pass, patch_randomize, rand_crop};
use semcorr::rng::SplitMix64;
use semcorr::Grid;

/// Reference SplitMix64 written from the published algorithm.
struct RefSplitMix(u64);

impl RefSplitMix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self) -> f64 {
        (self.next() >> 11) as f64 / 9007199254740992.0
    }

    fn below(&mut self, n: u64) -> u64 {
        // drop the 2^64 mod n smallest draws so every residue is equally likely
        let reject_under = (u64::MAX - n + 1) % n;
        loop {
            let r = self.next();
            if r >= reject_under {
                return r % n;
            }
        }
    }
}

fn random_grid(rng: &mut SplitMix64, h: usize, w: usize, c: usize) -> Grid {
    Grid::new(h, w, c, (0..h * w * c).map(|_| rng.next_f64() as f32).collect()).unwrap()
}

#[test]
fn splitmix_stream_matches_reference() {
    for seed in [0u64, 1, 42, u64::MAX, 0xdead_beef] {
        let (mut a, mut b) = (SplitMix64::new(seed), RefSplitMix(seed));
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next());
        }
        let (mut a, mut b) = (SplitMix64::new(seed), RefSplitMix(seed));
        for n in 1..500u64 {
            assert_eq!(a.below(n), b.below(n));
            assert_eq!(a.next_f64(), b.uniform());
        }
    }
}

#[test]
fn permutation_matches_textbook_fisher_yates() {
    for seed in 0..200u64 {
        let n = 1 + (seed as usize % 37);
        let mut rng = RefSplitMix(seed);
        let mut want: Vec<usize> = (0..n).collect();
        let mut i = n;
        while i > 1 {
            i -= 1;
            let j = rng.below(i as u64 + 1) as usize;
            want.swap(i, j);
        }
        assert_eq!(SplitMix64::new(seed).permutation(n), want);
    }
}

#[test]
fn permutation_is_uniform_on_small_n() {
    // all 6 permutations of 3 items, each within 0.006 of 1/6 (4 sd)
    let mut counts = std::collections::HashMap::new();
    let trials = 60_000;
    for seed in 0..trials {
        *counts.entry(SplitMix64::new(seed).permutation(3)).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 6);
    for c in counts.values() {
        assert!((*c as f64 / trials as f64 - 1.0 / 6.0).abs() < 0.006);
    }
}

#[test]
fn box_muller_matches_reference_formula() {
    let mut a = SplitMix64::new(9);
    let mut b = RefSplitMix(9);
    for _ in 0..1000 {
        let u1 = 1.0 - b.uniform();
        let u2 = b.uniform();
        let want = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        assert_eq!(a.standard_normal(), want);
    }
}

#[test]
fn gauss_noise_matches_reference_draws() {
    let mut rng = SplitMix64::new(3);
    let g = random_grid(&mut rng, 5, 7, 2);
    let out = gauss_noise(&g, 0.04, 11).unwrap();
    let mut b = RefSplitMix(11);
    for (&x, &y) in g.values().iter().zip(out.values()) {
        let u1 = 1.0 - b.uniform();
        let u2 = b.uniform();
        let n = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        assert_eq!(y, (x as f64 + 0.2 * n).clamp(0.0, 1.0) as f32);
    }
}

/// O(n²m²) 2D DFT; `sign` −1 forward, +1 inverse, no normalization.
fn naive_dft2(re: &[f64], im: &[f64], h: usize, w: usize, sign: f64) -> (Vec<f64>, Vec<f64>) {
    let mut out_re = vec![0.0; h * w];
    let mut out_im = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let ang = sign
                        * std::f64::consts::TAU
                        * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    let (s, co) = ang.sin_cos();
                    let (a, b) = (re[r * w + c], im[r * w + c]);
                    sr += a * co - b * s;
                    si += a * s + b * co;
                }
            }
            out_re[u * w + v] = sr;
            out_im[u * w + v] = si;
        }
    }
    (out_re, out_im)
}

#[test]
fn high_pass_matches_naive_dft() {
    let mut rng = SplitMix64::new(17);
    for &(h, w, c, cutoff) in &[(6, 8, 1, 3), (8, 8, 2, 4), (5, 7, 3, 2), (9, 6, 1, 6), (4, 4, 1, 0)] {
        let vals: Vec<f64> = (0..h * w * c).map(|_| rng.next_f64()).collect();
        let got = high_pass(h, w, c, &vals, cutoff).unwrap();
        for ch in 0..c {
            let re: Vec<f64> = (0..h * w).map(|i| vals[i * c + ch]).collect();
            let (mut fr, mut fi) = naive_dft2(&re, &vec![0.0; h * w], h, w, -1.0);
            for u in 0..h {
                for v in 0..w {
                    if frequency_removed(u, v, h, w, cutoff) {
                        fr[u * w + v] = 0.0;
                        fi[u * w + v] = 0.0;
                    }
                }
            }
            let (br, bi) = naive_dft2(&fr, &fi, h, w, 1.0);
            for i in 0..h * w {
                let want = br[i] / (h * w) as f64;
                assert!((got[i * c + ch] - want).abs() < 1e-10, "{h}x{w} cutoff {cutoff}");
                // conjugate-closed removal keeps the result real
                assert!(bi[i].abs() / ((h * w) as f64) < 1e-10);
            }
        }
    }
}

/// Bilinear resize written as two interpolation matrices.
fn interp_matrix(src: usize, dst: usize) -> Vec<Vec<f64>> {
    (0..dst)
        .map(|i| {
            let mut row = vec![0.0; src];
            let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).max(0.0).min((src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            row[lo] += 1.0 - (pos - lo as f64);
            row[hi] += pos - lo as f64;
            row
        })
        .collect()
}

#[test]
fn rand_crop_matches_reference_crop_and_bilinear_resize() {
    let mut rng = SplitMix64::new(5);
    for seed in 0..40u64 {
        let (h, w) = (6 + (seed as usize % 5), 5 + (seed as usize % 7));
        let g = random_grid(&mut rng, h, w, 1);
        let out = rand_crop(&g, 0.3, seed).unwrap();

        let mut b = RefSplitMix(seed);
        let frac = 0.3 + 0.7 * b.uniform();
        let ch = ((h as f64 * frac.sqrt()).round() as usize).clamp(1, h);
        let cw = ((w as f64 * frac.sqrt()).round() as usize).clamp(1, w);
        let top = b.below((h - ch + 1) as u64) as usize;
        let left = b.below((w - cw + 1) as u64) as usize;
        let (my, mx) = (interp_matrix(ch, h), interp_matrix(cw, w));
        for i in 0..h {
            for j in 0..w {
                let mut v = 0.0;
                for r in 0..ch {
                    for c in 0..cw {
                        v += my[i][r] * mx[j][c] * g.get(top + r, left + c, 0) as f64;
                    }
                }
                let got = out.get(i, j, 0) as f64;
                assert!((got - v.clamp(0.0, 1.0)).abs() < 1e-6, "seed {seed} ({i},{j})");
            }
        }
    }
}

#[test]
fn patch_randomize_matches_reference_permutation() {
    let mut rng = SplitMix64::new(8);
    let g = random_grid(&mut rng, 8, 12, 2);
    let out = patch_randomize(&g, 4, 99).unwrap();
    let perm = SplitMix64::new(99).permutation(6);
    for (dst, &src) in perm.iter().enumerate() {
        for i in 0..4 {
            for j in 0..4 {
                for ch in 0..2 {
                    let (dr, dc) = (dst / 3 * 4 + i, dst % 3 * 4 + j);
                    let (sr, sc) = (src / 3 * 4 + i, src % 3 * 4 + j);
                    assert_eq!(out.get(dr, dc, ch), g.get(sr, sc, ch));
                }
            }
        }
    }
}
