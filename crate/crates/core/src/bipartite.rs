//! Augmenting-path bipartite matching.

/// Maximum matching of `left` vertices into `right` vertices. Returns, per
/// left vertex, its matched right vertex. Right vertices are tried in
/// increasing order, so the result is deterministic.
pub fn max_matching(left: usize, right: usize, adj: impl Fn(usize, usize) -> bool) -> Vec<Option<usize>> {
    let mut owner: Vec<Option<usize>> = vec![None; right];
    for l in 0..left {
        let mut seen = vec![false; right];
        augment(l, &adj, &mut owner, &mut seen);
    }
    let mut matched = vec![None; left];
    for (r, o) in owner.iter().enumerate() {
        if let Some(l) = o {
            matched[*l] = Some(r);
        }
    }
    matched
}

fn augment(l: usize, adj: &impl Fn(usize, usize) -> bool, owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for r in 0..owner.len() {
        if seen[r] || !adj(l, r) {
            continue;
        }
        seen[r] = true;
        if owner[r].is_none_or(|o| augment(o, adj, owner, seen)) {
            owner[r] = Some(l);
            return true;
        }
    }
    false
}

/// A matching saturating every left vertex, if one exists.
pub fn left_perfect_matching(left: usize, right: usize, adj: impl Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    max_matching(left, right, adj).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(left: usize, right: usize, adj: &[Vec<bool>]) -> usize {
        fn go(l: usize, left: usize, used: &mut Vec<bool>, adj: &[Vec<bool>]) -> usize {
            if l == left {
                return 0;
            }
            let mut best = go(l + 1, left, used, adj);
            for r in 0..used.len() {
                if adj[l][r] && !used[r] {
                    used[r] = true;
                    best = best.max(1 + go(l + 1, left, used, adj));
                    used[r] = false;
                }
            }
            best
        }
        go(0, left, &mut vec![false; right], adj)
    }

    #[test]
    fn needs_augmenting_path() {
        // left 0 -> {0, 1}, left 1 -> {0}
        let adj = [vec![true, true], vec![true, false]];
        let m = left_perfect_matching(2, 2, |l, r| adj[l][r]).unwrap();
        assert_eq!(m, vec![1, 0]);
    }

    proptest! {
        #[test]
        fn maximum_size(left in 0usize..6, right in 0usize..6, bits in any::<u64>()) {
            let adj: Vec<Vec<bool>> =
                (0..left).map(|l| (0..right).map(|r| bits >> (l * 6 + r) & 1 == 1).collect()).collect();
            let m = max_matching(left, right, |l, r| adj[l][r]);
            let used: Vec<usize> = m.iter().flatten().copied().collect();
            let mut dedup = used.clone();
            dedup.sort_unstable();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), used.len());
            for (l, r) in m.iter().enumerate() {
                if let Some(r) = r {
                    prop_assert!(adj[l][*r]);
                }
            }
            prop_assert_eq!(used.len(), brute(left, right, &adj));
        }
    }
}
