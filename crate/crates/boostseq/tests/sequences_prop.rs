//! Property tests for the temporal machinery.

use boostseq::matrix::{PredictionSequence, SeqMatrix, ValueKind};
use boostseq::sequences::{interleave, median_filter_channel, subsample, subsample_indices};
use proptest::prelude::*;

fn track_of(rows: Vec<Vec<f64>>) -> PredictionSequence {
    PredictionSequence::new(
        SeqMatrix::from_rows(&rows).unwrap(),
        ValueKind::Probabilities,
        "prop",
    )
    .unwrap()
}

proptest! {
    #[test]
    fn subsample_then_interleave_is_identity(len in 1usize..200, m_frac in 0.0f64..1.0) {
        let m = 1 + ((len - 1) as f64 * m_frac) as usize;
        let rows: Vec<Vec<f64>> = (0..len).map(|u| vec![(u as f64) / (len as f64)]).collect();
        let seq = track_of(rows);
        let parts = subsample(&seq, m).unwrap();
        let back = interleave(&parts, len).unwrap();
        prop_assert_eq!(back.values, seq.values);
    }

    #[test]
    fn subsample_partitions_the_index_set(len in 1usize..200, m_frac in 0.0f64..1.0) {
        let m = 1 + ((len - 1) as f64 * m_frac) as usize;
        let idx = subsample_indices(len, m).unwrap();
        let mut all: Vec<usize> = idx.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
        // strided within each subsequence
        for part in &idx {
            prop_assert!(part.windows(2).all(|w| w[1] - w[0] == m));
        }
    }

    #[test]
    fn median_preserves_value_range(values in prop::collection::vec(0.0f64..1.0, 1..80), r in 0usize..9) {
        let out = median_filter_channel(&values, r);
        prop_assert_eq!(out.len(), values.len());
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn median_keeps_interiors_of_long_runs(first in 3usize..10, second in 7usize..20, r in 1usize..4) {
        // runs longer than 2r+1 keep their interior frames
        let second = second.max(2 * r + 2);
        let mut seq = vec![0.0f64; first];
        seq.extend(std::iter::repeat(1.0).take(second));
        seq.extend(std::iter::repeat(0.0).take(first + 4));
        let out = median_filter_channel(&seq, r);
        for t in (first + r)..(first + second - r) {
            prop_assert_eq!(out[t], 1.0, "frame {} inside the run changed", t);
        }
    }

    #[test]
    fn median_idempotent_on_binary_long_runs(r in 1usize..4, blocks in prop::collection::vec(0usize..2, 2..6)) {
        // alternating binary runs, each at least 2r+1 long
        let mut seq = Vec::new();
        for (i, b) in blocks.iter().enumerate() {
            let len = 2 * r + 1 + (i % 3);
            seq.extend(std::iter::repeat(*b as f64).take(len));
        }
        let once = median_filter_channel(&seq, r);
        let twice = median_filter_channel(&once, r);
        prop_assert_eq!(once, twice);
    }
}
