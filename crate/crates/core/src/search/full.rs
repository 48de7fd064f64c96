use rayon::prelude::*;

use super::{bic_refine, Evaluator, SearchReport, SearchStrategy, Selection, FULL, MAX_EXHAUSTIVE_P};
use crate::error::{Error, Result};

/// All subsets of `items` with at most `max` elements, ordered by size and
/// then lexicographically by position.
pub fn subsets_up_to(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    let p = items.len();
    let mut out = vec![Vec::new()];
    for k in 1..=max.min(p) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.iter().map(|&i| items[i]).collect());
            // advance to the next k-combination
            let mut i = k;
            while i > 0 && idx[i - 1] == p - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FullSearch;

impl SearchStrategy for FullSearch {
    fn name(&self) -> &'static str {
        FULL
    }

    fn search(&self, ev: &Evaluator<'_>) -> Result<SearchReport> {
        let p = ev.covariates.len();
        if p > MAX_EXHAUSTIVE_P && ev.cfg.max_subset_size.is_none() {
            return Err(Error::InfeasibleSearch { p });
        }
        let max = ev.cfg.max_subset_size.unwrap_or(p);
        let subsets = subsets_up_to(&ev.covariates, max);
        // order-preserving parallel map, so the reduce below is schedule-free
        let records: Vec<_> = subsets.par_iter().map(|s| ev.evaluate(s)).collect();

        let candidates = records
            .iter()
            .filter(|r| r.is_candidate)
            .map(|r| r.names.clone())
            .collect::<Vec<_>>();
        let mut trace = vec![format!(
            "evaluated {} subsets, {} accepted",
            records.len(),
            candidates.len()
        )];
        let selected = bic_refine(&records).map(|r| Selection {
            subset: r.subset.clone(),
            names: r.names.clone(),
            fit: r.fit.clone().expect("candidates carry a fit"),
        });
        match &selected {
            Some(s) => trace.push(format!("selected {{{}}} by BIC", s.names.join(","))),
            None => trace.push("no subset survived the dispersion test".to_string()),
        }
        Ok(SearchReport {
            strategy: FULL.to_string(),
            records,
            candidates,
            selected,
            trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_all_subsets_in_canonical_order() {
        let s = subsets_up_to(&[0, 2, 5], 3);
        assert_eq!(
            s,
            vec![
                vec![],
                vec![0],
                vec![2],
                vec![5],
                vec![0, 2],
                vec![0, 5],
                vec![2, 5],
                vec![0, 2, 5]
            ]
        );
        assert_eq!(subsets_up_to(&(0..7).collect::<Vec<_>>(), 7).len(), 128);
        assert_eq!(subsets_up_to(&(0..7).collect::<Vec<_>>(), 2).len(), 1 + 7 + 21);
        assert_eq!(subsets_up_to(&[], 3), vec![Vec::<usize>::new()]);
    }
}
