//! Rank assignment and mean-rank fusion.

use super::RankError;

/// Converts scores to integer ranks `1..=n`: rank 1 is the highest score,
/// ties break by ascending candidate index. `result[i]` is candidate `i`'s
/// rank.
pub fn ranks_from_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| a.cmp(&b))
    });
    let mut ranks = vec![0usize; scores.len()];
    for (position, &candidate) in order.iter().enumerate() {
        ranks[candidate] = position + 1;
    }
    ranks
}

/// Averages each candidate's rank across rankings. Every ranking must cover
/// the same `n` candidates and be a permutation of `1..=n`.
pub fn fuse_mean_rank(rankings: &[Vec<usize>]) -> Result<Vec<f64>, RankError> {
    let Some(first) = rankings.first() else {
        return Err(RankError::RaggedInput {
            detail: "no rankings given".to_string(),
        });
    };
    let n = first.len();
    for (i, ranking) in rankings.iter().enumerate() {
        if ranking.len() != n {
            return Err(RankError::RaggedInput {
                detail: format!("ranking {i} has length {} but expected {n}", ranking.len()),
            });
        }
        let mut seen = vec![false; n];
        for &rank in ranking {
            if rank == 0 || rank > n || seen[rank - 1] {
                return Err(RankError::RaggedInput {
                    detail: format!("ranking {i} is not a permutation of 1..={n}"),
                });
            }
            seen[rank - 1] = true;
        }
    }

    let mut means = vec![0.0f64; n];
    for ranking in rankings {
        for (candidate, &rank) in ranking.iter().enumerate() {
            means[candidate] += rank as f64;
        }
    }
    let count = rankings.len() as f64;
    for mean in &mut means {
        *mean /= count;
    }
    Ok(means)
}

/// Candidate indices ordered ascending by mean rank, ties by index.
pub fn order_by_mean_rank(means: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then_with(|| a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_follow_descending_score_with_index_ties() {
        assert_eq!(ranks_from_scores(&[0.2, 0.9, 0.5]), vec![3, 1, 2]);
        assert_eq!(ranks_from_scores(&[0.5, 0.5, 0.9]), vec![2, 3, 1]);
    }

    #[test]
    fn single_ranking_fuses_to_itself() {
        let ranking = vec![2, 1, 3];
        let means = fuse_mean_rank(std::slice::from_ref(&ranking)).unwrap();
        assert_eq!(order_by_mean_rank(&means), vec![1, 0, 2]);
    }

    #[test]
    fn full_tie_keeps_input_index_order() {
        let means = fuse_mean_rank(&[vec![1, 3, 2], vec![3, 1, 2]]).unwrap();
        assert_eq!(means, vec![2.0, 2.0, 2.0]);
        assert_eq!(order_by_mean_rank(&means), vec![0, 1, 2]);
    }

    #[test]
    fn three_way_fusion_matches_hand_arithmetic() {
        let means =
            fuse_mean_rank(&[vec![1, 2, 3], vec![2, 1, 3], vec![1, 2, 3]]).unwrap();
        assert!((means[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((means[1] - 5.0 / 3.0).abs() < 1e-12);
        assert!((means[2] - 3.0).abs() < 1e-12);
        assert_eq!(order_by_mean_rank(&means), vec![0, 1, 2]);
    }

    #[test]
    fn ragged_input_is_rejected() {
        assert!(fuse_mean_rank(&[vec![1, 2], vec![1, 2, 3]]).is_err());
        assert!(fuse_mean_rank(&[vec![1, 1, 2]]).is_err());
        assert!(fuse_mean_rank(&[]).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariance_of_rank_permutation(
            scores in prop::collection::vec(-100.0f64..100.0, 1..20),
            factor in 0.001f64..1000.0,
        ) {
            let scaled: Vec<f64> = scores.iter().map(|s| s * factor).collect();
            prop_assert_eq!(ranks_from_scores(&scores), ranks_from_scores(&scaled));
        }

        #[test]
        fn fusion_is_permutation_equivariant(
            a in prop::collection::vec(-10.0f64..10.0, 2..12),
            b in prop::collection::vec(-10.0f64..10.0, 2..12),
            seed in 0u64..1000,
        ) {
            let n = a.len().min(b.len());
            let rankings = vec![ranks_from_scores(&a[..n]), ranks_from_scores(&b[..n])];
            let means = fuse_mean_rank(&rankings).unwrap();

            // permute candidates with a deterministic shuffle
            let mut perm: Vec<usize> = (0..n).collect();
            let mut state = seed.wrapping_add(1);
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let permuted_rankings: Vec<Vec<usize>> = rankings
                .iter()
                .map(|ranking| perm.iter().map(|&old| ranking[old]).collect())
                .collect();
            let permuted_means = fuse_mean_rank(&permuted_rankings).unwrap();

            for (new_idx, &old_idx) in perm.iter().enumerate() {
                prop_assert!((permuted_means[new_idx] - means[old_idx]).abs() < 1e-12);
            }
        }
    }
}
