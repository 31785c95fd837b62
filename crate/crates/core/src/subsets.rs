//! Gray-code enumeration of conditioning subsets.
//!
//! Subsets of `k` candidates are bitmasks visited in binary reflected Gray
//! order, starting from the empty set. Without a size cap consecutive subsets
//! differ by exactly one element; with a cap the masks above the cap are
//! skipped, and consecutive retained masks differ by at most two elements.

/// Maximum number of conditioning candidates a mask can represent.
pub const MAX_CANDIDATES: usize = 63;

/// Upper bound on conditioning-set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetCap {
    #[default]
    Unlimited,
    AtMost(usize),
}

impl SubsetCap {
    pub fn admits(self, size: u32) -> bool {
        match self {
            SubsetCap::Unlimited => true,
            SubsetCap::AtMost(k) => (size as usize) <= k,
        }
    }

    pub fn limit(self) -> Option<usize> {
        match self {
            SubsetCap::Unlimited => None,
            SubsetCap::AtMost(k) => Some(k),
        }
    }
}

/// The `i`-th codeword of the binary reflected Gray code.
#[inline]
pub fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

/// Number of subsets of `n` candidates with at most `cap` elements.
pub fn subset_count(n: usize, cap: SubsetCap) -> u64 {
    let top = cap.limit().map_or(n, |k| k.min(n));
    let mut total = 0u64;
    let mut binom = 1u64;
    for k in 0..=top {
        total += binom;
        binom = binom * (n - k) as u64 / (k + 1) as u64;
    }
    total
}

/// Iterator over subset bitmasks of `n` candidates, empty set first.
#[derive(Debug, Clone)]
pub struct GraySubsets {
    next: u64,
    end: u64,
    cap: SubsetCap,
}

impl GraySubsets {
    /// Masks whose Gray index falls in `[start, end)`.
    pub fn range(start: u64, end: u64, cap: SubsetCap) -> Self {
        Self {
            next: start,
            end,
            cap,
        }
    }
}

impl Iterator for GraySubsets {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        while self.next < self.end {
            let g = gray(self.next);
            self.next += 1;
            if self.cap.admits(g.count_ones()) {
                return Some(g);
            }
        }
        None
    }
}

/// All subsets of `n` candidates up to `cap`, as bitmasks in Gray order.
///
/// # Panics
/// If `n` exceeds [`MAX_CANDIDATES`].
pub fn enumerate_subsets(n: usize, cap: SubsetCap) -> GraySubsets {
    assert!(n <= MAX_CANDIDATES, "at most {MAX_CANDIDATES} candidates");
    GraySubsets::range(0, 1u64 << n, cap)
}

/// Maps a mask over `candidates` to the selected items, in candidate order.
pub fn members<T: Clone>(candidates: &[T], mask: u64) -> Vec<T> {
    candidates
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, c)| c.clone())
        .collect()
}

/// Enumerates subsets of `candidates` directly as item lists.
pub fn enumerate_subsets_of<T: Clone>(
    candidates: &[T],
    cap: SubsetCap,
) -> impl Iterator<Item = Vec<T>> + '_ {
    enumerate_subsets(candidates.len(), cap).map(move |m| members(candidates, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_candidates_in_gray_order() {
        let got: Vec<Vec<char>> = enumerate_subsets_of(&['a', 'b'], SubsetCap::Unlimited).collect();
        assert_eq!(got, vec![vec![], vec!['a'], vec!['a', 'b'], vec!['b']]);
    }

    #[test]
    fn counts() {
        assert_eq!(enumerate_subsets(16, SubsetCap::Unlimited).count(), 65_536);
        assert_eq!(enumerate_subsets(16, SubsetCap::AtMost(2)).count(), 137);
        assert_eq!(enumerate_subsets(16, SubsetCap::AtMost(3)).count(), 697);
        assert_eq!(subset_count(16, SubsetCap::AtMost(2)), 137);
        assert_eq!(subset_count(16, SubsetCap::AtMost(3)), 697);
        assert_eq!(subset_count(16, SubsetCap::Unlimited), 65_536);
        assert_eq!(subset_count(3, SubsetCap::AtMost(10)), 8);
        assert_eq!(subset_count(0, SubsetCap::Unlimited), 1);
        assert_eq!(
            enumerate_subsets(0, SubsetCap::Unlimited).collect::<Vec<_>>(),
            vec![0]
        );
    }

    #[test]
    fn steps_are_small() {
        let full: Vec<u64> = enumerate_subsets(10, SubsetCap::Unlimited).collect();
        assert!(full.windows(2).all(|w| (w[0] ^ w[1]).count_ones() == 1));
        for k in 0..6 {
            let capped: Vec<u64> = enumerate_subsets(10, SubsetCap::AtMost(k)).collect();
            assert_eq!(capped[0], 0);
            assert!(capped.windows(2).all(|w| (w[0] ^ w[1]).count_ones() <= 2));
        }
    }

    #[test]
    fn every_subset_exactly_once() {
        let mut seen: Vec<u64> = enumerate_subsets(8, SubsetCap::Unlimited).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..256).collect::<Vec<_>>());
    }
}
