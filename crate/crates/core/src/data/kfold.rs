use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Fold index per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// Rows held out in `fold`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Rows used for training when `fold` is held out, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

fn check_k(k: usize, units: usize, what: &str) -> Result<()> {
    if k < 2 {
        return Err(Error::Usage(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > units {
        return Err(Error::Usage(format!(
            "k = {k} exceeds the number of {what} ({units})"
        )));
    }
    Ok(())
}

/// Seeded shuffle of the rows followed by round-robin assignment, so fold
/// sizes differ by at most one and the first `rows % k` folds get the extra.
pub fn kfold_split(rows: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_k(k, rows, "rows")?;
    let mut order: Vec<usize> = (0..rows).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut assignment = vec![0; rows];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % k;
    }
    Ok(FoldPlan { k, assignment })
}

/// Whole groups go to folds: groups are shuffled, then taken largest first
/// and each placed in the currently smallest fold (lowest index on ties).
/// Rows without a group form singleton groups.
pub fn kfold_split_grouped(groups: &[Option<&str>], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        // The NUL prefix keeps synthetic singleton keys apart from real ids.
        let key = g.map_or_else(|| format!("\0{i}"), str::to_string);
        members.entry(key).or_default().push(i);
    }
    check_k(k, members.len(), "groups")?;
    let mut blocks: Vec<Vec<usize>> = members.into_values().collect();
    Rng::new(seed).shuffle(&mut blocks);
    // Stable sort keeps the shuffled order among equal sizes.
    blocks.sort_by_key(|b| std::cmp::Reverse(b.len()));
    let mut sizes = vec![0usize; k];
    let mut assignment = vec![0; groups.len()];
    for block in blocks {
        let fold = (0..k).min_by_key(|&f| (sizes[f], f)).expect("k >= 2");
        sizes[fold] += block.len();
        for row in block {
            assignment[row] = fold;
        }
    }
    Ok(FoldPlan { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fold_size_arithmetic() {
        assert_eq!(
            kfold_split(1229, 5, 7).unwrap().fold_sizes(),
            [246, 246, 246, 246, 245]
        );
        assert_eq!(kfold_split(11800, 2, 7).unwrap().fold_sizes(), [5900, 5900]);
    }

    #[test]
    fn usage_errors() {
        assert!(matches!(kfold_split(3, 4, 0), Err(Error::Usage(_))));
        assert!(matches!(kfold_split(10, 1, 0), Err(Error::Usage(_))));
        let groups = [Some("a"), Some("a"), Some("a")];
        assert!(kfold_split_grouped(&groups, 2, 0).is_err());
    }

    #[test]
    fn groups_never_straddle_folds() {
        let names: Vec<String> = (0..1229).map(|i| format!("wsi{}", i % 31)).collect();
        let groups: Vec<Option<&str>> = names.iter().map(|s| Some(s.as_str())).collect();
        let plan = kfold_split_grouped(&groups, 5, 3).unwrap();
        let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            let f = *fold_of.entry(g.unwrap()).or_insert(plan.assignment()[i]);
            assert_eq!(f, plan.assignment()[i]);
        }
        let sizes = plan.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 1229);
        assert!(sizes.iter().all(|&s| s > 0));
    }

    #[test]
    fn ungrouped_rows_are_singletons() {
        let groups = vec![None; 10];
        assert_eq!(
            kfold_split_grouped(&groups, 3, 1).unwrap().fold_sizes(),
            [4, 3, 3]
        );
    }

    proptest! {
        #[test]
        fn folds_partition_rows(rows in 2usize..300, k in 2usize..8, seed in any::<u64>()) {
            prop_assume!(k <= rows);
            let plan = kfold_split(rows, k, seed).unwrap();
            let sizes = plan.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = (0..k).flat_map(|f| plan.test_indices(f)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..rows).collect::<Vec<_>>());
            for f in 0..k {
                prop_assert_eq!(plan.train_indices(f).len() + plan.test_indices(f).len(), rows);
            }
            prop_assert_eq!(plan, kfold_split(rows, k, seed).unwrap());
        }
    }
}
