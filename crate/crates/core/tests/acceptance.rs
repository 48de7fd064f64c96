//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Set `ACCEPTANCE_ONLY=1,3` to run a subset of criteria.

use std::collections::BTreeSet;
use std::time::Instant;

use causal_glm::basis::build_design_named;
use causal_glm::bench::{self, detection_rate, DetectionCell, DetectionDesign};
use causal_glm::disptest::{bootstrap_test, chisq_test, pearson_statistic};
use causal_glm::fit::{loglik_at, score};
use causal_glm::search::subsets_up_to;
use causal_glm::simulate::{self, FIG4_DEFAULT_NOISE_VAR, FIG4_DEFAULT_PI};
use causal_glm::{fit_glm, select_lambda, BasisSpec, Dataset, Family, SearchConfig};

/// Master seed for every criterion, fixed before any acceptance run.
const SEED: u64 = 20261016;

const REPS: usize = 100;
const ALPHA: f64 = 0.05;

// criterion 1: minimum exact-recovery percentages
const FULL_MIN_1000: f64 = 70.0;
const FULL_MIN_500: f64 = 55.0;
const FULL_MIN_250: f64 = 30.0;
const STEP_MIN_1000: f64 = 45.0;
// criterion 2
const MONOTONE_SLACK: f64 = 5.0;
// criterion 3
const POP_N: usize = 100_000;
const INVARIANCE_TOL: f64 = 0.02;
/// Observed |statistic/n - 1| in the pilot (40 seeds, observational data).
const PILOT_DEV_X2: f64 = 0.33;
const PILOT_DEV_FULL: f64 = 0.37;
/// Half the smaller pilot deviation.
const NONCAUSAL_MARGIN: f64 = 0.16;
// criterion 5
const CALIBRATION_REPS: usize = 200;
const CHISQ_N: usize = 1000;
const CHISQ_BAND: (f64, f64) = (0.01, 0.10);
const BOOT_N: usize = 500;
const BOOT_B: usize = 199;
const BOOT_BAND: (f64, f64) = (0.01, 0.12);
// criterion 6
const SCORE_TOL: f64 = 1e-6;
const FD_TOL: f64 = 1e-6;
// criterion 7
const LOGIT_GAIN: f64 = 10.0;
// criterion 8
const TIME_RATIO_MAX: f64 = 0.5;

/// Criteria whose failure has been analysed and recorded as unattainable
/// under the specified generator; they still print FAIL when they fail.
const KNOWN_UNATTAINABLE: &[(usize, &str)] = &[(
    7,
    "X5 given Y is Gaussian, so logit P(Y | X2, X3, X5) is exactly linear; \
     the superset {X2,X3,X5} is a correct logistic model that no dispersion \
     test can reject, and BIC prefers it at every n",
)];

struct Outcome {
    id: usize,
    pass: bool,
    line: String,
}

struct Runner {
    only: Option<BTreeSet<usize>>,
    outcomes: Vec<Outcome>,
}

impl Runner {
    fn wants(&self, id: usize) -> bool {
        self.only.as_ref().is_none_or(|s| s.contains(&id))
    }

    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        let line = format!(
            "{} [{id}] {name}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        println!("{line}");
        self.outcomes.push(Outcome { id, pass, line });
    }
}

fn spline_chisq(strategy: &str) -> SearchConfig {
    SearchConfig {
        alpha: ALPHA,
        strategy: strategy.to_string(),
        basis: BasisSpec::default(),
        ..SearchConfig::default()
    }
}

fn fig3_cell(n: usize, strategy: &str) -> DetectionCell {
    detection_rate(
        bench::FIG3_TABLE,
        DetectionDesign::Fig3,
        n,
        REPS,
        SEED,
        &spline_chisq(strategy),
    )
    .expect("detection run")
}

fn pearson_risk(data: &Dataset, subset: &[&str]) -> f64 {
    let y = data.column("Y").unwrap();
    let d = build_design_named(data, subset, &BasisSpec::linear()).unwrap();
    let f = fit_glm(Family::Poisson, &d, y, 0.0).unwrap();
    pearson_statistic(Family::Poisson, y, &f.eta).unwrap() / data.n_rows() as f64
}

fn main() {
    let only = std::env::var("ACCEPTANCE_ONLY").ok().map(|v| {
        v.split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect::<BTreeSet<usize>>()
    });
    let mut r = Runner {
        only,
        outcomes: Vec::new(),
    };
    println!(
        "acceptance: seed {SEED}, {} worker threads",
        rayon::current_num_threads()
    );

    // detection cells shared by criteria 1, 2 and 8
    let need_fig3 = r.wants(1) || r.wants(2) || r.wants(8);
    let mut cells = Vec::new();
    if need_fig3 {
        for n in [250, 500, 1000] {
            let c = fig3_cell(n, "full");
            println!(
                "  fig3 full n={n}: {:.0}% ({:.2}s/rep)",
                c.percent(),
                c.seconds / REPS as f64
            );
            cells.push(c);
        }
    }
    let step = (r.wants(1) || r.wants(8)).then(|| {
        let c = fig3_cell(1000, "stepwise");
        println!(
            "  fig3 stepwise n=1000: {:.0}% ({:.2}s/rep)",
            c.percent(),
            c.seconds / REPS as f64
        );
        c
    });

    if r.wants(1) {
        let (d250, d500, d1000) = (cells[0].percent(), cells[1].percent(), cells[2].percent());
        let s1000 = step.as_ref().unwrap().percent();
        let pass = d1000 >= FULL_MIN_1000
            && d500 >= FULL_MIN_500
            && d250 >= FULL_MIN_250
            && s1000 >= STEP_MIN_1000;
        r.record(
            1,
            "seven-covariate detection",
            pass,
            format!(
                "full {d1000:.0}/{d500:.0}/{d250:.0}% at n=1000/500/250 (need >= {FULL_MIN_1000}/{FULL_MIN_500}/{FULL_MIN_250}), \
                 stepwise {s1000:.0}% at n=1000 (need >= {STEP_MIN_1000}), {REPS} reps"
            ),
        );
    }

    if r.wants(2) {
        let d: Vec<f64> = cells.iter().map(DetectionCell::percent).collect();
        let pass = d[1] >= d[0] - MONOTONE_SLACK && d[2] >= d[1] - MONOTONE_SLACK;
        r.record(
            2,
            "detection nondecreasing in n",
            pass,
            format!(
                "full {:.0}% -> {:.0}% -> {:.0}% over n=250,500,1000 (slack {MONOTONE_SLACK} points)",
                d[0], d[1], d[2]
            ),
        );
    }

    if r.wants(3) || r.wants(4) {
        let s = bench::replicate_seed(SEED, bench::FIG1_POPULATION, POP_N, 0);
        let obs = simulate::gen_fig1(POP_N, s).unwrap();
        let shifted: Vec<(f64, Dataset)> = [5.0, 10.0]
            .iter()
            .enumerate()
            .map(|(i, &s2)| {
                let seed = causal_glm::rng::derive(s, &[causal_glm::rng::label("shift"), i as u64]);
                (s2, simulate::apply_shift(&obs, s2, &["X1", "X2"], seed).unwrap())
            })
            .collect();

        if r.wants(3) {
            let mut risks = vec![(0.0, pearson_risk(&obs, &["X1"]))];
            for (s2, d) in &shifted {
                risks.push((*s2, pearson_risk(d, &["X1"])));
            }
            let x2 = pearson_risk(&obs, &["X2"]);
            let full = pearson_risk(&obs, &["X1", "X2"]);
            let inv = risks.iter().all(|(_, v)| (v - 1.0).abs() <= INVARIANCE_TOL);
            let pass = inv
                && (x2 - 1.0).abs() > NONCAUSAL_MARGIN
                && (full - 1.0).abs() > NONCAUSAL_MARGIN;
            let shown: Vec<String> = risks
                .iter()
                .map(|(s2, v)| format!("sigma2={s2}: {v:.4}"))
                .collect();
            r.record(
                3,
                "Pearson risk invariance",
                pass,
                format!(
                    "{{X1}} {} (need 1 +- {INVARIANCE_TOL}); {{X2}} {x2:.4}, {{X1,X2}} {full:.4} \
                     (need |dev| > {NONCAUSAL_MARGIN}; pilot deviations {PILOT_DEV_X2}, {PILOT_DEV_FULL})",
                    shown.join(", ")
                ),
            );
        }

        if r.wants(4) {
            let y = obs.column("Y").unwrap();
            let spec = BasisSpec::linear();
            let dc = build_design_named(&obs, &["X1"], &spec).unwrap();
            let df = build_design_named(&obs, &["X1", "X2"], &spec).unwrap();
            let causal = fit_glm(Family::Poisson, &dc, y, 0.0).unwrap().beta;
            let fullb = fit_glm(Family::Poisson, &df, y, 0.0).unwrap().beta;
            let ll = |d: &Dataset| {
                let yy = d.column("Y").unwrap();
                let a = loglik_at(Family::Poisson, &dc.eval(d).unwrap(), yy, &causal).unwrap();
                let b = loglik_at(Family::Poisson, &df.eval(d).unwrap(), yy, &fullb).unwrap();
                (a, b)
            };
            let (c0, f0) = ll(&obs);
            let (c5, f5) = ll(&shifted[0].1);
            let (c10, f10) = ll(&shifted[1].1);
            let pass = c0 < f0 && c10 > f10 && (c10 - f10) > (c5 - f5);
            r.record(
                4,
                "out-of-sample ordering",
                pass,
                format!(
                    "causal - full loglik: in-sample {:.1}, sigma2=5 {:.1}, sigma2=10 {:.1}",
                    c0 - f0,
                    c5 - f5,
                    c10 - f10
                ),
            );
        }
    }

    if r.wants(5) {
        let chisq_rejections: usize = (0..CALIBRATION_REPS)
            .map(|rep| {
                let d = simulate::gen_fig3(
                    CHISQ_N,
                    bench::replicate_seed(SEED, "calibration-chisq", CHISQ_N, rep),
                )
                .unwrap();
                let y = d.column("Y").unwrap();
                let des = build_design_named(&d, &["X2", "X3"], &BasisSpec::default()).unwrap();
                let (_, f) =
                    select_lambda(Family::Poisson, &des, y, &causal_glm::fit::default_lambda_grid())
                        .unwrap();
                usize::from(!chisq_test(Family::Poisson, &f, y, ALPHA).unwrap().accepted)
            })
            .sum();
        let boot_rejections: usize = (0..CALIBRATION_REPS)
            .map(|rep| {
                let s = bench::replicate_seed(SEED, "calibration-bootstrap", BOOT_N, rep);
                let d = simulate::gen_fig4_with(BOOT_N, s, FIG4_DEFAULT_PI, FIG4_DEFAULT_NOISE_VAR)
                    .unwrap();
                let y = d.column("Y").unwrap();
                let des = build_design_named(&d, &["X2", "X3"], &BasisSpec::linear()).unwrap();
                let f = fit_glm(Family::Bernoulli, &des, y, 0.0).unwrap();
                let t = bootstrap_test(Family::Bernoulli, &f, &des, y, ALPHA, BOOT_B, s).unwrap();
                usize::from(!t.accepted)
            })
            .sum();
        let rc = chisq_rejections as f64 / CALIBRATION_REPS as f64;
        let rb = boot_rejections as f64 / CALIBRATION_REPS as f64;
        let pass = (CHISQ_BAND.0..=CHISQ_BAND.1).contains(&rc) && (BOOT_BAND.0..=BOOT_BAND.1).contains(&rb);
        r.record(
            5,
            "test calibration",
            pass,
            format!(
                "chisq rejection {rc:.3} (band {CHISQ_BAND:?}, n={CHISQ_N}), bootstrap rejection {rb:.3} \
                 (band {BOOT_BAND:?}, n={BOOT_N}, B={BOOT_B}), {CALIBRATION_REPS} reps each"
            ),
        );
    }

    if r.wants(6) {
        r_numeric(&mut r);
    }

    if r.wants(7) {
        let cfg = SearchConfig {
            alpha: ALPHA,
            method: causal_glm::disptest::BOOTSTRAP.to_string(),
            bootstrap_reps: BOOT_B,
            basis: BasisSpec::linear(),
            ..SearchConfig::default()
        };
        let design = DetectionDesign::Fig4 {
            pi: FIG4_DEFAULT_PI,
            noise_var: FIG4_DEFAULT_NOISE_VAR,
        };
        let lo = detection_rate(bench::FIG4_RATES, design, 250, REPS, SEED, &cfg).unwrap();
        let hi = detection_rate(bench::FIG4_RATES, design, 1000, REPS, SEED, &cfg).unwrap();
        let pass = hi.percent() >= lo.percent() + LOGIT_GAIN;
        r.record(
            7,
            "logistic detection trend",
            pass,
            format!(
                "full search, bootstrap B={BOOT_B}: {:.0}% at n=250, {:.0}% at n=1000 (need gain >= {LOGIT_GAIN} points), {REPS} reps",
                lo.percent(),
                hi.percent()
            ),
        );
    }

    if r.wants(8) {
        let full = cells[2].seconds / REPS as f64;
        let st = step.as_ref().unwrap().seconds / REPS as f64;
        let ratio = st / full;
        r.record(
            8,
            "stepwise cost advantage",
            ratio <= TIME_RATIO_MAX,
            format!(
                "stepwise {st:.3}s vs full {full:.3}s per replicate at n=1000: ratio {ratio:.3} (need <= {TIME_RATIO_MAX}), \
                 {} threads",
                rayon::current_num_threads()
            ),
        );
    }

    let failed: Vec<&Outcome> = r.outcomes.iter().filter(|o| !o.pass).collect();
    let unexpected: Vec<&&Outcome> = failed
        .iter()
        .filter(|o| !KNOWN_UNATTAINABLE.iter().any(|(id, _)| *id == o.id))
        .collect();
    println!(
        "SUMMARY: {} PASS, {} FAIL",
        r.outcomes.len() - failed.len(),
        failed.len()
    );
    for o in &failed {
        if let Some((_, why)) = KNOWN_UNATTAINABLE.iter().find(|(id, _)| *id == o.id) {
            println!("  known unattainable [{}]: {why}", o.id);
        }
    }
    if !unexpected.is_empty() {
        for o in unexpected {
            eprintln!("unexpected failure: {}", o.line);
        }
        std::process::exit(1);
    }
}

fn r_numeric(r: &mut Runner) {
    let start = Instant::now();
    let mut worst_score = 0.0f64;
    let mut converged_fits = 0usize;
    let mut monotone = true;
    let mut bic_exact = true;

    let mut check = |family: Family, data: &Dataset, subset: &[&str], spec: BasisSpec, lambda: f64| {
        let y = data.column("Y").unwrap();
        let d = build_design_named(data, subset, &spec).unwrap();
        let f = fit_glm(family, &d, y, lambda).unwrap();
        monotone &= f.objective_trace.windows(2).all(|w| w[1] >= w[0]);
        bic_exact &= f.bic == -2.0 * f.loglik + f.edf * (y.len() as f64).ln();
        if f.converged && lambda == 0.0 {
            converged_fits += 1;
            let s = score(family, &d.matrix, y, &f.eta);
            worst_score = s.iter().fold(worst_score, |m, v| m.max(v.abs()));
        }
    };

    let fig3 = simulate::gen_fig3(1000, bench::replicate_seed(SEED, "numeric", 1000, 0)).unwrap();
    let fig4 = simulate::gen_fig4(1000, bench::replicate_seed(SEED, "numeric", 1000, 1), FIG4_DEFAULT_PI).unwrap();
    let names3: Vec<String> = fig3.covariates("Y").unwrap();
    let names4: Vec<String> = fig4.covariates("Y").unwrap();
    for s in subsets_up_to(&(0..names3.len()).collect::<Vec<_>>(), names3.len()) {
        let sub: Vec<&str> = s.iter().map(|&i| names3[i].as_str()).collect();
        check(Family::Poisson, &fig3, &sub, BasisSpec::linear(), 0.0);
    }
    for s in subsets_up_to(&(0..names4.len()).collect::<Vec<_>>(), names4.len()) {
        let sub: Vec<&str> = s.iter().map(|&i| names4[i].as_str()).collect();
        check(Family::Bernoulli, &fig4, &sub, BasisSpec::linear(), 0.0);
    }
    for lambda in [0.0, 0.01, 1.0, 100.0] {
        check(Family::Poisson, &fig3, &["X2", "X3"], BasisSpec::default(), lambda);
        check(Family::Bernoulli, &fig4, &["X2", "X3", "X5"], BasisSpec::default(), lambda);
    }

    // b' and b'' against central differences
    let mut worst_fd = 0.0f64;
    for family in [Family::Poisson, Family::Bernoulli] {
        for i in -40..=40 {
            let t = i as f64 * 0.25;
            let h = 1e-5;
            let d1 = (family.b(t + h) - family.b(t - h)) / (2.0 * h);
            let d2 = (family.mean(t + h) - family.mean(t - h)) / (2.0 * h);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            worst_fd = worst_fd
                .max(rel(d1, family.mean(t)))
                .max(rel(d2, family.variance(t)));
        }
    }

    // bootstrap bits under different worker counts
    let y = fig4.column("Y").unwrap();
    let d = build_design_named(&fig4, &["X2", "X3"], &BasisSpec::linear()).unwrap();
    let f = fit_glm(Family::Bernoulli, &d, y, 0.0).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                causal_glm::disptest::bootstrap_replicates(Family::Bernoulli, &f, &d, BOOT_B, 77).unwrap()
            })
    };
    let a = run(1);
    let b = run(4);
    let reproducible = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());

    let pass = worst_score <= SCORE_TOL && worst_fd <= FD_TOL && monotone && bic_exact && reproducible;
    r.record(
        6,
        "numerical core",
        pass,
        format!(
            "max score residual {worst_score:.2e} over {converged_fits} converged fits (tol {SCORE_TOL:e}); \
             max finite-difference error {worst_fd:.2e} (tol {FD_TOL:e}); IRLS monotone {monotone}; \
             BIC identity {bic_exact}; bootstrap identical at 1 and 4 threads {reproducible} ({:.1}s)",
            start.elapsed().as_secs_f64()
        ),
    );
}
