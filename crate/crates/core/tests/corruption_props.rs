//! Randomized property checks for every corruption, 1000 inputs each.

use proptest::prelude::*;

use semcorr::corruptions::{
    apply, apply_stream, high_pass, intensity_filter, ngram_randomize, patch_randomize,
    premise_mask, roi_mask, CorruptionKind, CorruptionSpec,
};
use semcorr::{Covariate, Grid, SentencePair, TokenSeq, MASK_TOKEN};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 1000, ..ProptestConfig::default() }
}

fn grid_strategy(max_side: usize) -> impl Strategy<Value = Grid> {
    (1..=max_side, 1..=max_side, 1..=3usize).prop_flat_map(|(h, w, c)| {
        prop::collection::vec(0.0f32..=1.0, h * w * c)
            .prop_map(move |v| Grid::new(h, w, c, v).unwrap())
    })
}

/// A grid whose sides are multiples of `patch`, with the patch size.
fn patched_grid() -> impl Strategy<Value = (Grid, usize)> {
    (1..=4usize, 1..=4usize, 1..=4usize, 1..=3usize).prop_flat_map(|(p, kh, kw, c)| {
        let (h, w) = (p * kh, p * kw);
        prop::collection::vec(0.0f32..=1.0, h * w * c)
            .prop_map(move |v| (Grid::new(h, w, c, v).unwrap(), p))
    })
}

fn pixels(g: &Grid) -> Vec<Vec<u32>> {
    let mut px: Vec<Vec<u32>> = g
        .values()
        .chunks_exact(g.channels())
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect();
    px.sort();
    px
}

fn pair_strategy() -> impl Strategy<Value = SentencePair> {
    (prop::collection::vec(2u32..50, 0..20), prop::collection::vec(2u32..50, 0..10))
        .prop_map(|(p, h)| SentencePair::new(p, h))
}

fn kind_strategy() -> impl Strategy<Value = CorruptionKind> {
    prop_oneof![
        Just(CorruptionKind::Identity),
        (1..=2usize).prop_map(|patch| CorruptionKind::PatchRandomize { patch }),
        (0..=4usize).prop_map(|size| CorruptionKind::RoiMask { size }),
        (0..=4usize).prop_map(|cutoff| CorruptionKind::FreqFilter { cutoff }),
        (0.0..=1.0f64).prop_map(|threshold| CorruptionKind::IntensityFilter { threshold }),
        (0.05..=1.0f64).prop_map(|min_frac| CorruptionKind::RandCrop { min_frac }),
        (0.0..=0.5f64).prop_map(|variance| CorruptionKind::GaussNoise { variance }),
    ]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn patch_randomize_preserves_pixel_multiset((g, p) in patched_grid(), seed in any::<u64>()) {
        let out = patch_randomize(&g, p, seed).unwrap();
        prop_assert_eq!(pixels(&out), pixels(&g));
    }

    #[test]
    fn roi_mask_is_idempotent(g in grid_strategy(9), frac in 0.0..=1.0f64) {
        let size = (frac * g.height().min(g.width()) as f64) as usize;
        let once = roi_mask(&g, size).unwrap();
        prop_assert_eq!(roi_mask(&once, size).unwrap(), once);
    }

    #[test]
    fn intensity_filter_is_idempotent(g in grid_strategy(9), t in 0.0..=1.0f64) {
        let once = intensity_filter(&g, t).unwrap();
        prop_assert_eq!(intensity_filter(&once, t).unwrap(), once);
    }

    #[test]
    fn high_pass_is_a_projection(g in grid_strategy(9), frac in 0.0..=1.0f64) {
        let (h, w, c) = (g.height(), g.width(), g.channels());
        let cutoff = (frac * h.min(w) as f64) as usize;
        let v: Vec<f64> = g.values().iter().map(|&x| x as f64).collect();
        let once = high_pass(h, w, c, &v, cutoff).unwrap();
        let twice = high_pass(h, w, c, &once, cutoff).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn ngram_randomize_permutes_blocks(len in 0usize..40, n in 1usize..8, seed in any::<u64>()) {
        // distinct tokens make every input block findable in the output
        let s = TokenSeq::new((0..len as u32).collect());
        let out = ngram_randomize(&s, n, seed).unwrap();
        prop_assert_eq!(out.len(), len);
        let text = out.tokens();
        for block in s.tokens().chunks(n) {
            prop_assert!(text.windows(block.len()).any(|w| w == block));
        }
        if n >= len {
            prop_assert_eq!(&out, &s);
        }
    }

    #[test]
    fn ngram_randomize_keeps_token_multiset(toks in prop::collection::vec(0u32..6, 0..30), n in 1usize..6, seed in any::<u64>()) {
        let out = ngram_randomize(&TokenSeq::new(toks.clone()), n, seed).unwrap();
        let (mut a, mut b) = (toks, out.tokens().to_vec());
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn premise_mask_keeps_hypothesis(p in pair_strategy()) {
        let out = premise_mask(&p);
        prop_assert_eq!(&out.hypothesis, &p.hypothesis);
        prop_assert_eq!(out.premise.len(), p.premise.len());
        prop_assert!(out.premise.tokens().iter().all(|&t| t == MASK_TOKEN));
    }

    #[test]
    fn grid_corruptions_are_deterministic(g in grid_strategy(8), kind in kind_strategy(), seed in any::<u64>(), idx in any::<u64>(), stream in 0u64..4) {
        let x = Covariate::Grid(g);
        let spec = CorruptionSpec::new(kind, seed).unwrap();
        let a = apply_stream(&spec, &x, idx, stream);
        let b = apply_stream(&spec, &x, idx, stream);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "outcomes differ"),
        }
    }

    #[test]
    fn text_corruptions_are_deterministic(p in pair_strategy(), n in 1usize..5, seed in any::<u64>(), idx in any::<u64>()) {
        let x = Covariate::Pair(p);
        for kind in [CorruptionKind::NgramRandomize { n }, CorruptionKind::PremiseMask] {
            let spec = CorruptionSpec::new(kind, seed).unwrap();
            prop_assert_eq!(apply(&spec, &x, idx).unwrap(), apply(&spec, &x, idx).unwrap());
        }
    }
}
