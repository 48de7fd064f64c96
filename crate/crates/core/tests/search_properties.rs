use causal_glm::search::{bic_refine, CandidateRecord};
use causal_glm::{
    bench, discover, full_search, simulate, stepwise_search, BasisSpec, Dataset, Error, Family, FitResult,
    SearchConfig, SearchReport,
};
use rand::SeedableRng;
use rand_distr::{Distribution, Poisson};

fn linear_chisq() -> SearchConfig {
    SearchConfig {
        basis: BasisSpec::linear(),
        ..SearchConfig::default()
    }
}

fn record(subset: Vec<usize>, bic: f64, candidate: bool) -> CandidateRecord {
    CandidateRecord {
        names: subset.iter().map(|i| format!("X{i}")).collect(),
        subset,
        fit: Some(FitResult {
            beta: vec![],
            edf: 1.0,
            loglik: 0.0,
            bic,
            lambda: 0.0,
            converged: candidate,
            separated: false,
            iterations: 1,
            eta: vec![],
            objective_trace: vec![],
        }),
        test: None,
        is_candidate: candidate,
        note: None,
    }
}

#[test]
fn bic_refine_rules() {
    assert!(bic_refine(&[]).is_none());
    let recs = vec![
        record(vec![1, 2, 3], 10.0, true),
        record(vec![2, 3], 10.0, true),
        record(vec![0], 5.0, false),
        record(vec![1, 4], 10.0, true),
    ];
    // the non-candidate has the lowest BIC but is ignored; size breaks the tie,
    // then index order
    assert_eq!(bic_refine(&recs).unwrap().subset, vec![1, 4]);
    assert_eq!(bic_refine(&recs[..3]).unwrap().subset, vec![2, 3]);
    assert!(bic_refine(&recs[2..3]).is_none());
}

fn poisson_counts(n: usize, rate: impl Fn(usize) -> f64, seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| Poisson::new(rate(i)).unwrap().sample(&mut rng)).collect()
}

#[test]
fn no_covariates_gives_a_single_record() {
    let y = poisson_counts(300, |_| 4.0, 1);
    let data = Dataset::new(vec!["Y".into()], vec![y]).unwrap();
    let r = full_search(&data, "Y", Family::Poisson, &linear_chisq()).unwrap();
    assert_eq!(r.records.len(), 1);
    let accepted = r.records[0].is_candidate;
    assert_eq!(r.selected.is_some(), accepted);
    if accepted {
        assert!(r.selected_names().unwrap().is_empty());
    }
}

#[test]
fn full_search_visits_every_subset() {
    let data = simulate::gen_fig3(300, 5).unwrap();
    let r = full_search(&data, "Y", Family::Poisson, &linear_chisq()).unwrap();
    assert_eq!(r.records.len(), 128);
    let capped = SearchConfig {
        max_subset_size: Some(2),
        ..linear_chisq()
    };
    let r = full_search(&data, "Y", Family::Poisson, &capped).unwrap();
    assert_eq!(r.records.len(), 1 + 7 + 21);
    for rec in &r.records {
        if rec.is_candidate {
            assert!(rec.fit.as_ref().unwrap().converged);
            assert!(rec.test.as_ref().unwrap().accepted);
        }
    }
    if let Some(sel) = r.selected_names() {
        assert!(r.candidates.iter().any(|c| c == sel));
    }
}

#[test]
fn searches_are_deterministic() {
    let data = simulate::gen_fig4(400, 8, 0.1).unwrap();
    let cfg = SearchConfig {
        method: causal_glm::disptest::BOOTSTRAP.to_string(),
        bootstrap_reps: 39,
        seed: 3,
        ..linear_chisq()
    };
    let a = full_search(&data, "Y", Family::Bernoulli, &cfg).unwrap();
    let b = full_search(&data, "Y", Family::Bernoulli, &cfg).unwrap();
    assert_eq!(a, b);
    let c = stepwise_search(&data, "Y", Family::Bernoulli, &cfg).unwrap();
    let d = stepwise_search(&data, "Y", Family::Bernoulli, &cfg).unwrap();
    assert_eq!(c, d);
}

#[test]
fn population_search_accepts_only_the_parent() {
    let data = simulate::gen_fig1(100_000, 13).unwrap();
    let r = full_search(&data, "Y", Family::Poisson, &linear_chisq()).unwrap();
    assert_eq!(r.candidates, vec![vec!["X1".to_string()]]);
    assert!(r.selected_is(&["X1"]));
}

#[test]
fn stepwise_stops_at_once_when_additions_hurt() {
    // mean 3 and squared deviations summing to 3n: the intercept-only
    // Pearson statistic is exactly n
    let y: Vec<f64> = [0.0, 6.0, 2.0, 4.0, 2.0, 4.0, 2.0, 4.0].repeat(25);
    let a: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + 0.01 * (i % 7) as f64).collect();
    let b: Vec<f64> = y.iter().enumerate().map(|(i, v)| 2.0 * v - 0.02 * (i % 5) as f64).collect();
    let data = Dataset::new(vec!["A".into(), "B".into(), "Y".into()], vec![a, b, y]).unwrap();
    let r = stepwise_search(&data, "Y", Family::Poisson, &linear_chisq()).unwrap();
    let start = &r.records[0];
    assert!(start.subset.is_empty() && start.search_p_value() > 0.8);
    for rec in &r.records[1..] {
        assert!(rec.search_p_value() < 0.05, "{:?}", rec.names);
    }
    assert!(r.selected_is(&[]));
    assert!(r.trace.iter().any(|t| t.contains("phase 1: stop")));
}

#[test]
fn stepwise_tie_goes_to_the_lower_index() {
    let x: Vec<f64> = (0..400).map(|i| ((i * 37) % 400) as f64 / 200.0 - 1.0).collect();
    let y = poisson_counts(400, |i| x[i].exp(), 23);
    let data = Dataset::new(
        vec!["A".into(), "B".into(), "Y".into()],
        vec![x.clone(), x, y],
    )
    .unwrap();
    let r = stepwise_search(&data, "Y", Family::Poisson, &linear_chisq()).unwrap();
    assert!(r.trace.iter().any(|t| t.starts_with("phase 1: add A")), "{:?}", r.trace);
    assert!(r.trace.iter().any(|t| t.starts_with("phase 1: skip B")), "{:?}", r.trace);
    assert!(r.selected_is(&["A"]));
}

#[test]
fn configuration_errors() {
    let data = simulate::gen_fig4(100, 1, 0.1).unwrap();
    // chisq is Poisson-only unless forced
    assert!(matches!(
        discover(&data, "Y", Family::Bernoulli, &linear_chisq()),
        Err(Error::UnsupportedFamily { .. })
    ));
    let forced = SearchConfig {
        force: true,
        ..linear_chisq()
    };
    assert!(discover(&data, "Y", Family::Bernoulli, &forced).is_ok());
    let unknown = SearchConfig {
        strategy: "annealing".into(),
        ..linear_chisq()
    };
    assert!(matches!(
        discover(&data, "Y", Family::Bernoulli, &unknown),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        discover(&data, "W", Family::Bernoulli, &forced),
        Err(Error::MissingColumn(_))
    ));

    let names: Vec<String> = (0..27).map(|i| format!("V{i}")).chain(["Y".to_string()]).collect();
    let cols: Vec<Vec<f64>> = (0..28).map(|j| (0..30).map(|i| ((i * (j + 3)) % 11) as f64).collect()).collect();
    let wide = Dataset::new(names, cols).unwrap();
    assert!(matches!(
        full_search(&wide, "Y", Family::Poisson, &linear_chisq()),
        Err(Error::InfeasibleSearch { p: 27 })
    ));
}

fn fig3_reports(reps: usize) -> Vec<SearchReport> {
    let cfg = SearchConfig::default();
    (0..reps)
        .map(|r| {
            let data = simulate::gen_fig3(1000, bench::replicate_seed(99, "search-tests", 1000, r)).unwrap();
            full_search(&data, "Y", Family::Poisson, &cfg).unwrap()
        })
        .collect()
}

#[test]
fn fig3_selection_and_markov_blanket() {
    let reports = fig3_reports(5);
    let mut blanket = 0;
    for r in &reports {
        // supersets of the parents never displace them
        let parents = r.records.iter().find(|c| c.names == ["X2", "X3"]).unwrap();
        let parent_bic = parents.bic().unwrap();
        let beaten = r.records.iter().any(|c| {
            c.is_candidate
                && !(c.names.contains(&"X2".to_string()) && c.names.contains(&"X3".to_string()))
                && c.bic().unwrap() < parent_bic
        });
        if parents.is_candidate && !beaten {
            assert!(r.selected_is(&["X2", "X3"]), "{:?}", r.selected_names());
        }
        // without the dispersion test, BIC prefers the Markov blanket
        let best = r
            .records
            .iter()
            .filter(|c| c.fit.is_some())
            .min_by(|a, b| a.bic().unwrap().total_cmp(&b.bic().unwrap()))
            .unwrap();
        if ["X2", "X3", "X5", "X6"].iter().all(|v| best.names.iter().any(|n| n == v)) {
            blanket += 1;
        }
    }
    assert!(blanket * 2 > reports.len(), "{blanket} of {}", reports.len());
}
