use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{CandidateRecord, Evaluator, SearchReport, SearchStrategy, Selection, STEPWISE};
use crate::error::Result;

/// Dropped variable, remaining subset, newly fitted record, and its BIC.
type Removal = (usize, Vec<usize>, Option<CandidateRecord>, Option<f64>);

/// Forward phase driven by dispersion p-values, then backward elimination
/// by BIC.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepwiseSearch;

fn with(current: &[usize], j: usize) -> Vec<usize> {
    let mut s = current.to_vec();
    s.push(j);
    s.sort_unstable();
    s
}

fn without(current: &[usize], j: usize) -> Vec<usize> {
    current.iter().copied().filter(|&i| i != j).collect()
}

impl SearchStrategy for StepwiseSearch {
    fn name(&self) -> &'static str {
        STEPWISE
    }

    fn search(&self, ev: &Evaluator<'_>) -> Result<SearchReport> {
        let alpha = ev.cfg.alpha;
        let mut visited: BTreeMap<Vec<usize>, CandidateRecord> = BTreeMap::new();
        let mut order: Vec<Vec<usize>> = Vec::new();
        let mut trace = Vec::new();
        let label = |s: &[usize]| format!("{{{}}}", ev.names(s).join(","));

        let mut current: Vec<usize> = Vec::new();
        let start = ev.evaluate(&current);
        let mut p = start.search_p_value();
        trace.push(format!("phase 1: start {{}} with p = {p:.4}"));
        order.push(current.clone());
        visited.insert(current.clone(), start);

        // phase 1: forward additions
        loop {
            let avail: Vec<usize> = ev
                .covariates
                .iter()
                .copied()
                .filter(|j| !current.contains(j))
                .collect();
            if avail.is_empty() {
                trace.push("phase 1: no variables left".to_string());
                break;
            }
            let trials: Vec<(usize, CandidateRecord)> = avail
                .par_iter()
                .map(|&j| (j, ev.evaluate(&with(&current, j))))
                .collect();
            let mut best: Option<(usize, f64)> = None;
            for (j, rec) in &trials {
                if rec.fit.is_none() {
                    trace.push(format!(
                        "phase 1: skip {} ({})",
                        ev.data.names()[*j],
                        rec.note.as_deref().unwrap_or("fit failed")
                    ));
                    continue;
                }
                let pj = rec.search_p_value();
                // strict comparison keeps the lowest index on ties
                if best.is_none_or(|(_, bp)| pj > bp) {
                    best = Some((*j, pj));
                }
            }
            for (_, rec) in trials {
                if !visited.contains_key(&rec.subset) {
                    order.push(rec.subset.clone());
                    visited.insert(rec.subset.clone(), rec);
                }
            }
            let Some((k, pk)) = best else {
                trace.push("phase 1: every addition failed to fit".to_string());
                break;
            };
            if pk > p || pk > alpha {
                current = with(&current, k);
                trace.push(format!(
                    "phase 1: add {} (p = {pk:.4}, previous {p:.4}) -> {}",
                    ev.data.names()[k],
                    label(&current)
                ));
                p = pk;
            } else {
                trace.push(format!(
                    "phase 1: stop, best addition {} has p = {pk:.4} below {p:.4} and alpha",
                    ev.data.names()[k]
                ));
                break;
            }
        }

        // phase 2: backward BIC elimination
        let mut b = visited
            .get(&current)
            .and_then(|r| r.bic())
            .unwrap_or(f64::INFINITY);
        trace.push(format!("phase 2: start {} with BIC = {b:.3}", label(&current)));
        while !current.is_empty() {
            let trials: Vec<Removal> = current
                .par_iter()
                .map(|&j| {
                    let s = without(&current, j);
                    match visited.get(&s) {
                        Some(r) => (j, s, None, r.bic()),
                        None => {
                            let rec = match ev.fit(&s) {
                                Ok((_, fit)) => CandidateRecord {
                                    names: ev.names(&s),
                                    subset: s.clone(),
                                    fit: Some(fit),
                                    test: None,
                                    is_candidate: false,
                                    note: Some("visited by BIC elimination".to_string()),
                                },
                                Err(e) => CandidateRecord {
                                    names: ev.names(&s),
                                    subset: s.clone(),
                                    fit: None,
                                    test: None,
                                    is_candidate: false,
                                    note: Some(e.to_string()),
                                },
                            };
                            let bic = rec.bic();
                            (j, s, Some(rec), bic)
                        }
                    }
                })
                .collect();
            let mut best: Option<(usize, f64)> = None;
            for (j, s, rec, bic) in trials {
                if let Some(rec) = rec {
                    order.push(s.clone());
                    visited.insert(s, rec);
                }
                if let Some(bj) = bic {
                    if best.is_none_or(|(_, bb)| bj < bb) {
                        best = Some((j, bj));
                    }
                }
            }
            match best {
                Some((k, bk)) if bk < b => {
                    current = without(&current, k);
                    trace.push(format!(
                        "phase 2: remove {} (BIC {bk:.3} < {b:.3}) -> {}",
                        ev.data.names()[k],
                        label(&current)
                    ));
                    b = bk;
                }
                Some((k, bk)) => {
                    trace.push(format!(
                        "phase 2: stop, best removal {} has BIC {bk:.3} >= {b:.3}",
                        ev.data.names()[k]
                    ));
                    break;
                }
                None => {
                    trace.push("phase 2: no removal could be fitted".to_string());
                    break;
                }
            }
        }

        // make sure the terminal model carries a dispersion test
        if visited.get(&current).is_none_or(|r| r.test.is_none() && r.fit.is_some()) {
            let rec = ev.evaluate(&current);
            if !visited.contains_key(&current) {
                order.push(current.clone());
            }
            visited.insert(current.clone(), rec);
        }

        let records: Vec<CandidateRecord> = order
            .iter()
            .map(|s| visited.remove(s).expect("recorded subset"))
            .collect();
        let candidates: Vec<Vec<String>> = records
            .iter()
            .filter(|r| r.is_candidate)
            .map(|r| r.names.clone())
            .collect();
        let terminal = records.iter().find(|r| r.subset == current);
        let selected = match terminal {
            Some(r) if !candidates.is_empty() => r.fit.clone().map(|fit| Selection {
                subset: r.subset.clone(),
                names: r.names.clone(),
                fit,
            }),
            _ => None,
        };
        match &selected {
            Some(s) => trace.push(format!("selected {{{}}}", s.names.join(","))),
            None => trace.push(format!(
                "no visited subset survived the dispersion test; terminal model {}",
                label(&current)
            )),
        }
        Ok(SearchReport {
            strategy: STEPWISE.to_string(),
            records,
            candidates,
            selected,
            trace,
        })
    }
}
