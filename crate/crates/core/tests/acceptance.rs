//! Acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL/SKIP line per criterion; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Weibull};

use conjunct_core::analysis::{
    self, paired_t_test, pca, run_virtual_competitions, spearman, weibull_fit, CompetitionOutcome,
    SimulationConfig,
};
use conjunct_core::cdm::{latest_known_risk, Cdm, Event};
use conjunct_core::ingest::{read_dataset_csv, DatasetSchema};
use conjunct_core::predictors::{
    lrp_predict, magpies_rule_predict, naive_forecast, predict_all, sesc_cascade_rule, CascadeConfig,
    CascadeRule, FeatureSet, NeverAnomalous, PredictorSpec, SescCascade, DEFAULT_ANOMALOUS_VALUE,
};
use conjunct_core::scoring::{competition_loss, PredictionSet, ScoreOptions};
use conjunct_core::splitting::{
    crop_eligible, is_eligible, stratified_shuffle_split, EligibilityRule, SplitItem,
};
use conjunct_core::synthetic::{learnable_events, LEARNABLE_FEATURES};
use conjunct_core::{final_risk, Predictor, RiskClass, RiskMap};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

struct Fixture {
    truth: RiskMap,
    preds: PredictionSet,
}

fn fixtures() -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(2019);
    (0..1000)
        .map(|_| {
            let n = rng.random_range(1..=1000usize);
            let frac = rng.random_range(0.0..=0.2);
            let mut truth = RiskMap::new();
            let mut preds = BTreeMap::new();
            for i in 0..n {
                let id = format!("e{i}");
                let r: f64 = if rng.random::<f64>() < frac {
                    match rng.random_range(0..10) {
                        0 => -6.0,
                        _ => rng.random_range(-6.0..-2.0),
                    }
                } else {
                    match rng.random_range(0..4) {
                        0 => -30.0,
                        _ => rng.random_range(-20.0..-6.0),
                    }
                };
                let p: f64 = match rng.random_range(0..5) {
                    0 => -6.0,
                    1 => -30.0,
                    2 => rng.random_range(-6.5..-5.5),
                    _ => rng.random_range(-30.0..0.0),
                };
                truth.insert(id.clone(), r);
                preds.insert(id, p);
            }
            Fixture {
                truth,
                preds: PredictionSet { values: preds, ..Default::default() },
            }
        })
        .collect()
}

/// Direct enumeration: `Some((f2, mse, loss))`, with each piece `None` when
/// undefined.
fn oracle(truth: &RiskMap, preds: &BTreeMap<String, f64>, clip: bool) -> (f64, Option<f64>, Option<f64>) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    let (mut se, mut nh) = (0.0, 0.0);
    for (id, &r) in truth {
        let mut p = preds[id];
        if clip && p < -6.0 {
            p = -6.001;
        }
        let (th, ph) = (r >= -6.0, p >= -6.0);
        match (th, ph) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
        if th {
            se += (r - p) * (r - p);
            nh += 1.0;
        }
    }
    let f2 = if tp == 0.0 {
        0.0
    } else {
        let (pr, rc) = (tp / (tp + fp), tp / (tp + fn_));
        5.0 * pr * rc / (4.0 * pr + rc)
    };
    let mse = (nh > 0.0).then(|| se / nh);
    let loss = mse.filter(|_| f2 > 0.0).map(|m| m / f2);
    (f2, mse, loss)
}

fn metric_oracle(fx: &[Fixture]) -> Outcome {
    let start = Instant::now();
    let mut bad = 0;
    for f in fx {
        let (f2, mse, loss) = oracle(&f.truth, &f.preds.values, true);
        match competition_loss(&f.truth, &f.preds, ScoreOptions::default()) {
            Ok(r) => {
                let ok = rel_close(r.f_beta, f2, 1e-12)
                    && mse.is_some_and(|m| rel_close(r.mse_hr, m, 1e-12))
                    && match (r.loss, loss) {
                        (Some(a), Some(b)) => rel_close(a, b, 1e-12),
                        (None, None) => true,
                        _ => false,
                    };
                bad += usize::from(!ok);
            }
            Err(_) => bad += usize::from(mse.is_some()),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(bad == 0 && secs < 10.0, format!("{} fixtures, {bad} mismatches, {secs:.2}s", fx.len()))
}

fn clipping_theorem(fx: &[Fixture]) -> Outcome {
    let mut violations = 0;
    let mut compared = 0;
    for f in fx {
        let (Ok(c), Ok(r)) = (
            competition_loss(&f.truth, &f.preds, ScoreOptions::default()),
            competition_loss(&f.truth, &f.preds, ScoreOptions::raw()),
        ) else {
            continue;
        };
        if c.f_beta.to_bits() != r.f_beta.to_bits() {
            violations += 1;
        }
        if let (Some(lc), Some(lr)) = (c.loss, r.loss) {
            compared += 1;
            if lc > lr {
                violations += 1;
            }
        }
    }
    check(violations == 0, format!("{compared} defined losses compared, {violations} violations"))
}

fn hand_fixture() -> Outcome {
    let truth: RiskMap = [("a", -5.0), ("b", -7.0), ("c", -5.5), ("d", -8.0)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    let preds: PredictionSet = [("a", -5.0), ("b", -6.001), ("c", -6.001), ("d", -6.001)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    let r = match competition_loss(&truth, &preds, ScoreOptions::default()) {
        Ok(r) => r,
        Err(e) => return Fail(e.to_string()),
    };
    let f2 = 0.55555555555555555556;
    let mse = 0.1255005;
    let loss = 0.2259009;
    let ok = (r.f_beta - f2).abs() < 1e-9
        && (r.mse_hr - mse).abs() < 1e-9
        && r.loss.is_some_and(|l| (l - loss).abs() < 1e-9)
        && (r.counts.tp, r.counts.fp, r.counts.fn_) == (1, 0, 1);
    check(ok, format!("F2={} MSE_HR={} L={:?}", r.f_beta, r.mse_hr, r.loss))
}

fn expected_band(r2: f64) -> (CascadeRule, f64) {
    if r2 >= -3.5 {
        (CascadeRule::ClipUpper, -3.5)
    } else if r2 >= -4.0 {
        (CascadeRule::ClipLower, -4.0)
    } else if r2 >= -6.0 {
        (CascadeRule::PassThrough, r2)
    } else if r2 >= -6.04 {
        (CascadeRule::Promote(0), -5.95)
    } else if r2 >= -6.40 {
        (CascadeRule::Promote(1), -5.60)
    } else if r2 >= -7.30 {
        (CascadeRule::Promote(2), -5.00)
    } else {
        (CascadeRule::Low, -6.00001)
    }
}

fn cascade_bands() -> Outcome {
    let cfg = CascadeConfig::with_steps(&[0, 1, 2, 6]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = 0;
    for _ in 0..100_000 {
        let r2 = rng.random_range(-8.0..=-3.0);
        let got = sesc_cascade_rule(r2, &Cdm::new(2.5, r2), &cfg, "x");
        if got.ok() != Some(expected_band(r2)) {
            bad += 1;
        }
    }
    let up = |x: f64| f64::from_bits(x.to_bits() - 1); // next value towards zero
    let down = |x: f64| f64::from_bits(x.to_bits() + 1); // next value away from zero
    let edges: [(f64, f64); 12] = [
        (-6.04, -5.95),
        (down(-6.04), -5.60),
        (-6.40, -5.60),
        (down(-6.40), -5.00),
        (-7.30, -5.00),
        (down(-7.30), -6.00001),
        (-4.0, -4.0),
        (down(-4.0), down(-4.0)),
        (-3.5, -3.5),
        (down(-3.5), -4.0),
        (-6.0, -6.0),
        (up(-6.0), up(-6.0)),
    ];
    let mut edge_bad = Vec::new();
    for (r2, want) in edges {
        let got = sesc_cascade_rule(r2, &Cdm::new(2.5, r2), &cfg, "x").map(|(_, v)| v);
        if got != Ok(want) {
            edge_bad.push(format!("{r2}->{got:?}"));
        }
    }
    check(
        bad == 0 && edge_bad.is_empty(),
        format!("100000 draws, {bad} misassigned; boundary failures: {edge_bad:?}"),
    )
}

fn random_events(n: usize, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let k = rng.random_range(1..8);
            let mut tcas: Vec<f64> = (0..k).map(|_| (rng.random_range(0.0..7.0) * 1000.0f64).round() / 1000.0).collect();
            tcas.push(rng.random_range(2.0..7.0));
            tcas.sort_by(|a, b| b.total_cmp(a));
            tcas.dedup();
            let cdms = tcas
                .iter()
                .map(|&t| {
                    let r = match rng.random_range(0..6) {
                        0 => -30.0,
                        1 => -6.0,
                        _ => rng.random_range(-12.0..-2.0),
                    };
                    Cdm::new(t, r)
                })
                .collect();
            Event::new(format!("r{i}"), cdms).expect("valid")
        })
        .collect()
}

fn rule_equivalences() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..20 {
        let events = random_events(300, seed);
        let lrp = lrp_predict(&events).expect("cutoff CDM present");
        let magpies = magpies_rule_predict(&events, &NeverAnomalous, DEFAULT_ANOMALOUS_VALUE).expect("ok");
        mismatches += usize::from(lrp.values != magpies.values);
        let naive = naive_forecast(&events).expect("ok");
        let zero = PredictorSpec::ZeroDelta.build().expect("ok");
        let zp = predict_all(zero.as_ref(), &events).expect("ok");
        for e in &events {
            let r2 = latest_known_risk(e, 2.0).expect("ok");
            if naive.values[e.event_id()] != r2 || zp.values[e.event_id()] != r2 {
                mismatches += 1;
            }
        }
    }
    check(mismatches == 0, format!("20 fixtures x 300 events, {mismatches} mismatches"))
}

fn splitter_stratification() -> Outcome {
    let n_high = 216;
    let n = 10_460;
    let items: Vec<SplitItem> = (0..n)
        .map(|i| SplitItem {
            event_id: format!("{i:05}"),
            class: if i < n_high { RiskClass::High } else { RiskClass::Low },
            mission_id: None,
        })
        .collect();
    let high: std::collections::BTreeSet<String> = items[..n_high].iter().map(|i| i.event_id.clone()).collect();
    let mut worst: f64 = 0.0;
    let mut total = 0.0;
    for seed in 0..500 {
        let s = match stratified_shuffle_split(&items, 0.2, seed, false) {
            Ok(s) => s,
            Err(e) => return Fail(e.to_string()),
        };
        let th = s.test.iter().filter(|id| high.contains(*id)).count() as f64;
        let trh = s.train.iter().filter(|id| high.contains(*id)).count() as f64;
        let rate_t = s.test.len() as f64 / n as f64;
        worst = worst
            .max((th - rate_t * n_high as f64).abs())
            .max((trh - (1.0 - rate_t) * n_high as f64).abs());
        total += th;
    }
    let mean = total / 500.0;
    check(
        worst <= 1.0 && (mean - 43.2).abs() <= 0.05 * 43.2,
        format!("max per-side deviation {worst:.3}, mean test high {mean:.2} (target 43.2)"),
    )
}

fn brute_eligible(e: &Event) -> bool {
    let tcas: Vec<f64> = e.cdms().iter().map(|c| c.time_to_tca).collect();
    let clause1 = tcas.len() >= 2;
    let clause2 = tcas.iter().cloned().fold(f64::INFINITY, f64::min) < 1.0;
    let first = tcas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let clause3 = first >= 2.0 && tcas.iter().any(|&t| t >= 2.0);
    clause1 && clause2 && clause3
}

fn eligibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rule = EligibilityRule::default();
    let mut bad = 0;
    for i in 0..10_000 {
        let k = rng.random_range(1..6);
        let mut tcas: Vec<f64> = (0..k)
            .map(|_| match rng.random_range(0..6) {
                0 => 1.0,
                1 => 2.0,
                _ => rng.random_range(0.0..4.0),
            })
            .collect();
        tcas.sort_by(|a, b| b.total_cmp(a));
        tcas.dedup();
        let e = Event::new(format!("{i}"), tcas.iter().map(|&t| Cdm::new(t, -7.0)).collect()).expect("valid");
        bad += usize::from(is_eligible(&e, &rule) != brute_eligible(&e));
    }
    check(bad == 0, format!("10000 events, {bad} disagreements"))
}

fn spearman_ttest() -> Outcome {
    let mut notes = Vec::new();
    let x: Vec<f64> = (0..30).map(|i| (i as f64).powi(3) - 4.0).collect();
    let rev: Vec<f64> = x.iter().rev().copied().collect();
    if spearman(&x, &x).ok() != Some(1.0) || spearman(&x, &rev).ok() != Some(-1.0) {
        notes.push("+-1 cases".to_string());
    }
    let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap_or(f64::NAN);
    if !((r - 0.8).abs() <= 1e-12) {
        notes.push(format!("hand fixture {r}"));
    }
    let cases: [(&[f64], f64, f64); 3] = [
        (&[0.1, -0.2, 0.15, 0.05, -0.1], 0.0, 1.0),
        (&[0.3, -0.1, 0.45, 0.2, 0.05, 0.6], 2.3836564731139807886, 0.062879547811254315436),
        (&[1.2, 0.8, 1.1, 0.9, 1.05, 0.95, 1.0, 1.15], 21.589877420160214046, 1.1531373927052973701e-7),
    ];
    for (d, t, p) in cases {
        match paired_t_test(d, &vec![0.0; d.len()]) {
            Ok(tt) if (tt.t - t).abs() <= 1e-9 && (tt.p - p).abs() <= 1e-6 => {}
            other => notes.push(format!("t-test {d:?}: {other:?}")),
        }
    }
    check(notes.is_empty(), if notes.is_empty() { "rho exact; t within 1e-9, p within 1e-6".into() } else { notes.join("; ") })
}

fn weibull_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1515);
    let d = Weibull::new(3.0, 1.5).expect("valid");
    let s: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
    let start = Instant::now();
    let fit = weibull_fit(&s, 0.0);
    let secs = start.elapsed().as_secs_f64();
    match fit {
        Ok(f) => check(
            (f.shape - 1.5).abs() <= 0.05 && (f.scale - 3.0).abs() <= 0.05 && secs < 5.0,
            format!("k={:.4} lambda={:.4} in {secs:.3}s", f.shape, f.scale),
        ),
        Err(e) => Fail(e.to_string()),
    }
}

fn pca_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let nrm = Normal::new(0.0, 1.0).expect("valid");
    let iso: Vec<Vec<Option<f64>>> =
        (0..20_000).map(|_| (0..3).map(|_| Some(nrm.sample(&mut rng))).collect()).collect();
    let p = match pca(&iso, 3) {
        Ok(p) => p,
        Err(e) => return Fail(e.to_string()),
    };
    let mut ortho: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|t| p.components[i][t] * p.components[j][t]).sum();
            ortho = ortho.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let ratio_err = p.explained_variance_ratio.iter().map(|r| (r - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    let diag: Vec<Vec<Option<f64>>> = (0..1000)
        .map(|_| {
            let t = nrm.sample(&mut rng);
            vec![Some(t), Some(t + 1e-5 * nrm.sample(&mut rng))]
        })
        .collect();
    let dp = match pca(&diag, 1) {
        Ok(p) => p,
        Err(e) => return Fail(e.to_string()),
    };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let diag_err = dp.components[0].iter().map(|c| (c - s).abs()).fold(0.0, f64::max);
    check(
        ortho <= 1e-9 && ratio_err <= 0.02 && diag_err <= 1e-6,
        format!("orthonormality {ortho:.1e}, isotropic ratio error {ratio_err:.4}, diagonal error {diag_err:.1e}"),
    )
}

fn knn_spec() -> PredictorSpec {
    PredictorSpec::Knn {
        k: 15,
        features: FeatureSet::Named(LEARNABLE_FEATURES.iter().map(|s| s.to_string()).collect()),
    }
}

fn jsonl(results: &[CompetitionOutcome]) -> Vec<u8> {
    let mut buf = Vec::new();
    analysis::write_results_jsonl(&mut buf, results).expect("in-memory write");
    buf
}

fn determinism() -> Outcome {
    let cropped = crop_eligible(&learnable_events(800, 5), &EligibilityRule::default());
    let cfg = SimulationConfig {
        n_competitions: 100,
        ..Default::default()
    };
    let specs = [PredictorSpec::Lrp, knn_spec(), PredictorSpec::Sesc { config: CascadeConfig::default() }];
    let a = run_virtual_competitions(&cropped, &specs, &cfg, 42, 1);
    let b = run_virtual_competitions(&cropped, &specs, &cfg, 42, 8);
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let (ja, jb) = (jsonl(&a), jsonl(&b));
            let failed = a.iter().filter(|r| r.result().is_none()).count();
            check(ja == jb && a.len() == 100, format!("{} bytes each, identical: {}, failed splits {failed}", ja.len(), ja == jb))
        }
        (a, b) => Fail(format!("{:?} / {:?}", a.err(), b.err())),
    }
}

fn learnability() -> Outcome {
    let cropped = crop_eligible(&learnable_events(2000, 8), &EligibilityRule::default());
    let cfg = SimulationConfig {
        n_competitions: 100,
        test_sizes: vec![0.2],
        stratify_missions: false,
    };
    let res = match run_virtual_competitions(&cropped, &[knn_spec()], &cfg, 2024, 4) {
        Ok(r) => r,
        Err(e) => return Fail(e.to_string()),
    };
    let mut better = 0;
    let mut ok = 0;
    for r in res.iter().filter_map(CompetitionOutcome::result) {
        ok += 1;
        let m = &r.models[0];
        let beats = |model: Option<f64>, lrp: Option<f64>| match (model, lrp) {
            (Some(a), Some(b)) => a < b,
            (Some(_), None) => true,
            _ => false,
        };
        if beats(m.train.inverse_f_beta(), r.lrp.train.inverse_f_beta())
            && beats(m.test.inverse_f_beta(), r.lrp.test.inverse_f_beta())
        {
            better += 1;
        }
    }
    let frac = better as f64 / 100.0;
    check(ok == 100 && frac > 0.5, format!("knn beats LRP 1/F2 on both sets in {better}/100 splits ({ok} completed)"))
}

/// Loads `train_data.csv` and `test_data.csv` from a directory, or one CSV.
fn load_dataset(path: &Path) -> Result<(Vec<Event>, Option<Vec<Event>>), String> {
    let schema = DatasetSchema::default();
    let read = |p: PathBuf, prefix: &str| -> Result<Vec<Event>, String> {
        let (ev, _) = read_dataset_csv(&p, &schema).map_err(|e| format!("{}: {e}", p.display()))?;
        ev.into_iter()
            .map(|e| Event::new(format!("{prefix}{}", e.event_id()), e.cdms().to_vec()).map_err(|e| e.to_string()))
            .collect()
    };
    if path.is_dir() {
        let train = read(path.join("train_data.csv"), "train:")?;
        let test = read(path.join("test_data.csv"), "test:")?;
        let mut all = train;
        all.extend(test.iter().cloned());
        Ok((all, Some(test)))
    } else {
        Ok((read(path.to_path_buf(), "")?, None))
    }
}

fn dataset_truth() -> Outcome {
    let Some(path) = std::env::var_os("CONJUNCT_DATASET") else {
        return Skip("CONJUNCT_DATASET not set".into());
    };
    let (all, test) = match load_dataset(Path::new(&path)) {
        Ok(d) => d,
        Err(e) => return Fail(e),
    };
    let risks: Vec<f64> = match all.iter().map(final_risk).collect() {
        Ok(r) => r,
        Err(e) => return Fail(e.to_string()),
    };
    let c = analysis::threshold_counts(&risks);
    let mut notes = vec![format!(
        "events {} (15321), >=-4 {} (30), >=-5 {} (131), >=-6 {} (515)",
        c.events, c.at_least_minus4, c.at_least_minus5, c.high_risk
    )];
    let mut ok = (c.events, c.at_least_minus4, c.at_least_minus5, c.high_risk) == (15321, 30, 131, 515);
    let Some(test) = test else {
        notes.push("scores skipped: point CONJUNCT_DATASET at the directory holding train_data.csv and test_data.csv".into());
        return check(ok, notes.join("; "));
    };
    let truth: RiskMap = test.iter().map(|e| (e.event_id().to_string(), final_risk(e).unwrap_or(f64::NAN))).collect();
    let score = |preds: Result<PredictionSet, conjunct_core::PredictError>| {
        preds
            .map_err(|e| e.to_string())
            .and_then(|p| competition_loss(&truth, &p, ScoreOptions::default()).map_err(|e| e.to_string()))
    };
    match score(lrp_predict(&test)) {
        Ok(r) => {
            let l = r.loss.unwrap_or(f64::NAN);
            ok &= (l - 0.694).abs() <= 0.001 && (r.mse_hr - 0.513).abs() <= 0.001 && (r.f_beta - 0.739).abs() <= 0.001;
            notes.push(format!("LRP L={l:.4} MSE_HR={:.4} F2={:.4}", r.mse_hr, r.f_beta));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("LRP: {e}"));
        }
    }
    match score(conjunct_core::predictors::Crp.predict(&test)) {
        Ok(r) => {
            let l = r.loss.unwrap_or(f64::NAN);
            ok &= (l - 2.5).abs() <= 0.01;
            notes.push(format!("CRP L={l:.4}"));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("CRP: {e}"));
        }
    }
    let sesc = SescCascade::new(CascadeConfig::with_steps(&[0, 1, 2, 5, 6])).expect("valid config");
    match score(sesc.predict(&test)) {
        Ok(r) => {
            let l = r.loss.unwrap_or(f64::NAN);
            ok &= (l - 0.578).abs() <= 0.002;
            notes.push(format!("sesc 0+1+2+5+6 L={l:.4}"));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("sesc: {e}"));
        }
    }
    check(ok, notes.join("; "))
}

fn main() {
    let fx = fixtures();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("metric oracle equivalence", Box::new(|| metric_oracle(&fx))),
        ("clipping theorem", Box::new(|| clipping_theorem(&fx))),
        ("hand-computed score fixture", Box::new(hand_fixture)),
        ("cascade bands", Box::new(cascade_bands)),
        ("rule equivalences", Box::new(rule_equivalences)),
        ("splitter stratification", Box::new(splitter_stratification)),
        ("eligibility", Box::new(eligibility)),
        ("spearman / t-test", Box::new(spearman_ttest)),
        ("weibull recovery", Box::new(weibull_recovery)),
        ("pca", Box::new(pca_checks)),
        ("virtual-competition determinism", Box::new(determinism)),
        ("learnability smoke test", Box::new(learnability)),
        ("dataset-truth reproduction", Box::new(dataset_truth)),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let (tag, detail) = match f() {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail}");
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
