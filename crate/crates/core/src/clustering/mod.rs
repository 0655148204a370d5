//! Sub-sequence bookkeeping, spectral clustering and streaming association.

pub mod kmeans;
pub mod spectral;
pub mod stream;

use std::ops::Range;

pub use spectral::{
    canonical_labels, distances_from_affinity, euclidean_distances, purity, spectral_cluster_fixed,
    spectral_cluster_selftune, SelfTuned,
};
pub use stream::{
    associate_clusters, kl_divergence, Association, ClusterDescriptor, ClusterEntry, ClusterLabel,
    ClusterRegistry, DescriptorOptions,
};

use crate::error::{Error, Result};

/// Frame ranges of length `len` where each range starts on the last frame of
/// the previous one. The final range is cut at the end of the video and always
/// holds at least two frames.
pub fn make_subsequences(frame_count: usize, len: usize) -> Result<Vec<Range<usize>>> {
    if !(2..=8).contains(&len) {
        return Err(Error::param(
            "subseq_len",
            format!("{len} is outside [2, 8]"),
        ));
    }
    if frame_count < 2 {
        return Err(Error::param(
            "frame_count",
            format!("{frame_count} frames; need at least 2"),
        ));
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + len).min(frame_count);
        out.push(start..end);
        if end == frame_count {
            return Ok(out);
        }
        start = end - 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nine_frames_length_three() {
        assert_eq!(
            make_subsequences(9, 3).unwrap(),
            vec![0..3, 2..5, 4..7, 6..9]
        );
        assert_eq!(make_subsequences(3, 3).unwrap(), vec![0..3]);
        assert_eq!(make_subsequences(10, 4).unwrap(), vec![0..4, 3..7, 6..10]);
        assert_eq!(
            make_subsequences(11, 4).unwrap(),
            vec![0..4, 3..7, 6..10, 9..11]
        );
        assert_eq!(make_subsequences(2, 5).unwrap(), vec![0..2]);
    }

    #[test]
    fn invalid_arguments() {
        assert!(make_subsequences(1, 3).is_err());
        assert!(make_subsequences(10, 1).is_err());
        assert!(make_subsequences(10, 9).is_err());
    }

    proptest! {
        #[test]
        fn ranges_cover_and_overlap_by_one(n in 2usize..200, len in 2usize..=8) {
            let r = make_subsequences(n, len).unwrap();
            prop_assert_eq!(r[0].start, 0);
            prop_assert_eq!(r.last().unwrap().end, n);
            for w in r.windows(2) {
                prop_assert_eq!(w[1].start, w[0].end - 1);
            }
            for s in &r {
                prop_assert!(s.len() >= 2 && s.len() <= len);
            }
        }
    }
}
