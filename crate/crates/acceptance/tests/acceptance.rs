//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=2,7` restricts the run to the listed criteria.

use std::time::Instant;

use msic::data::{dot, norm2, IncidenceLink, MonotoneStepLink, SurvivalDataset};
use msic::fit::{fit, fit_report, FitConfig, Method};
use msic::isotonic::{isotonic_mle_truncated, IsotonicProblem};
use msic::latency::{weighted_breslow, weighted_cox_beta};
use msic::metrics::{coef_bias_variance, mean, TrueIncidence};
use msic::simgen::{generate, generate_stream, link_value, summarize, ExperimentSpec};
use msic::smoothing::{smooth_link, triweight};
use msic::study::{with_workers, Outcome, Study};
use msic::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn bernoulli_objective(prob: &IsotonicProblem, v: &[f64]) -> f64 {
    prob.targets
        .iter()
        .zip(&prob.multiplicities)
        .zip(v)
        .map(|((&t, &m), &y)| m as f64 * (t * y.ln() + (1.0 - t) * (1.0 - y).ln()))
        .sum()
}

/// Exact maximum over nondecreasing sequences on the 1e-3 grid, by dynamic
/// programming over positions.
fn grid_maximum(prob: &IsotonicProblem, lower: f64, upper: f64) -> f64 {
    let mut grid: Vec<f64> = (0..).map(|k| lower + k as f64 * 1e-3).take_while(|&v| v < upper).collect();
    grid.push(upper);
    let mut best = vec![0.0; grid.len()];
    for (j, (&t, &m)) in prob.targets.iter().zip(&prob.multiplicities).enumerate() {
        let mut run = f64::NEG_INFINITY;
        for (g, &v) in grid.iter().enumerate() {
            let prev = if j == 0 { 0.0 } else { best[g] };
            run = run.max(prev);
            best[g] = run + m as f64 * (t * v.ln() + (1.0 - t) * (1.0 - v).ln());
        }
    }
    best.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let m = rng.random_range(1..=4);
        let mut positions = Vec::new();
        let (mut targets, mut mult) = (Vec::new(), Vec::new());
        for j in 0..m {
            positions.push(j as f64);
            let c = rng.random_range(1..=6usize);
            let s = rng.random_range(0..=c);
            targets.push(s as f64 / c as f64);
            mult.push(c);
        }
        let lower = rng.random_range(0.01..0.3);
        let upper = rng.random_range(0.7..0.99);
        let prob = IsotonicProblem::new(positions, targets, mult).unwrap();
        let link = isotonic_mle_truncated(&prob, lower, upper).unwrap();
        let gap = grid_maximum(&prob, lower, upper) - bernoulli_objective(&prob, link.values());
        worst = worst.max(gap);
    }
    verdict(worst <= 1e-6, format!("largest grid-minus-solver objective gap {worst:.3e}"))
}

fn criterion_2() -> Verdict {
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for method in [Method::Msic, Method::Lc] {
        for r in 0..50u64 {
            let mut spec = ExperimentSpec::preset("exptA").unwrap();
            spec.n = 60;
            spec.seed = 7;
            let ds = generate_stream(&spec, r).unwrap().dataset;
            match fit_report(&ds, method, &FitConfig::default()) {
                Ok(rep) => {
                    let path = rep.loglik_path();
                    for w in path.windows(2) {
                        worst = worst.min(w[1] - w[0]);
                    }
                }
                Err(e) => failures.push(format!("{method}#{r}: {e}")),
            }
        }
    }
    verdict(
        worst >= -1e-8 && failures.is_empty(),
        format!("smallest loglik increment {worst:.3e}; fit errors {failures:?}"),
    )
}

fn criterion_3() -> Verdict {
    // (preset, censoring rate, cure, censored, plateau)
    let table = [
        ("exptA", 0.1, 0.2090, 0.2674, 0.1675),
        ("exptA", 0.3, 0.2090, 0.3691, 0.1108),
        ("exptB", 0.1, 0.3352, 0.3792, 0.2734),
        ("exptB", 0.4, 0.3352, 0.4902, 0.1554),
        ("exptC", 0.15, 0.3912, 0.4415, 0.3092),
        ("exptC", 0.5, 0.3912, 0.5390, 0.1867),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    // 10^5 observations as 400 datasets of n = 250: the plateau share
    // depends on the size of each dataset through its largest event time.
    for (name, rate, cure, cens, plateau) in table {
        let mut spec = ExperimentSpec::preset(name).unwrap();
        spec.censor_rate = rate;
        spec.n = 250;
        spec.seed = 31;
        let (mut c, mut r, mut p) = (0.0, 0.0, 0.0);
        for k in 0..400 {
            let s = summarize(&generate_stream(&spec, k).unwrap());
            c += s.cure_prop / 400.0;
            r += s.censor_rate / 400.0;
            p += s.plateau_prop / 400.0;
        }
        let ok = (c - cure).abs() <= 0.01 && (r - cens).abs() <= 0.01 && (p - plateau).abs() <= 0.03;
        pass &= ok;
        detail.push(format!("{name}/{rate}: {c:.4} {r:.4} {p:.4}"));
    }
    verdict(pass, detail.join("; "))
}

fn study(preset: &str, methods: Vec<Method>, replications: usize) -> Study {
    let mut spec = ExperimentSpec::preset(preset).unwrap();
    spec.n = 250;
    spec.censor_rate = 0.1;
    spec.seed = 1;
    Study { label: preset.into(), spec, methods, replications, fit: FitConfig::default() }
}

fn outcomes(method: Method, records: &[msic::study::Record]) -> Vec<Option<Outcome>> {
    records.iter().filter(|r| r.method == method).map(|r| r.outcome.clone().ok()).collect()
}

fn criteria_4_5(run4: bool, run5: bool) -> Vec<(usize, Verdict, f64)> {
    let mut out = Vec::new();
    let t = Instant::now();
    let s = study("exptA", vec![Method::Msic], if run4 { 100 } else { 50 });
    let records = with_workers(workers(), || s.run()).unwrap().unwrap();
    let msic = outcomes(Method::Msic, &records);
    if run4 {
        let row = &s.summarize(&records)[0];
        let pass = row.failed == 0
            && (0.005..=0.015).contains(&row.mse_mean)
            && (0.45..=0.70).contains(&row.gamma_bias)
            && (0.20..=0.37).contains(&row.beta_bias);
        out.push((
            4,
            verdict(
                pass,
                format!(
                    "MSE {:.5}, gamma bias {:.4}, beta bias {:.4}, failures {}",
                    row.mse_mean, row.gamma_bias, row.beta_bias, row.failed
                ),
            ),
            t.elapsed().as_secs_f64(),
        ));
    }
    if run5 {
        let t = Instant::now();
        let s5 = Study { methods: vec![Method::MsicScore], replications: 50, ..s.clone() };
        let rec5 = with_workers(workers(), || s5.run()).unwrap().unwrap();
        let score = outcomes(Method::MsicScore, &rec5);
        let pairs: Vec<(f64, f64)> = msic[..50]
            .iter()
            .zip(&score)
            .filter_map(|(a, b)| Some((a.as_ref()?.mse, b.as_ref()?.mse)))
            .collect();
        let smoothed = mean(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let raw = mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        out.push((
            5,
            verdict(
                raw > smoothed,
                format!("score MSE {raw:.5} vs smoothed {smoothed:.5} over {} paired replications", pairs.len()),
            ),
            t.elapsed().as_secs_f64(),
        ));
    }
    out
}

fn criterion_6() -> Verdict {
    let s = study("exptD", vec![Method::Msic], 50);
    let records = with_workers(workers(), || s.run()).unwrap().unwrap();
    let ok: Vec<Outcome> = outcomes(Method::Msic, &records).into_iter().flatten().collect();
    let converged = ok.iter().filter(|o| o.converged).count();
    let gammas: Vec<Vec<f64>> = ok.iter().map(|o| o.gamma.clone()).collect();
    let bias = coef_bias_variance(&gammas, &s.spec.gamma0).map(|b| b.0).unwrap_or(f64::NAN);
    verdict(
        converged as f64 >= 0.95 * 50.0 && bias.is_finite(),
        format!("converged {converged}/50, gamma bias {bias:.4}"),
    )
}

/// Composite Simpson over `[u-h, u+h]`, split at the knots, 10^4 panels in total.
fn smoothed_by_quadrature(link: &MonotoneStepLink, h: f64, u: f64) -> f64 {
    let (a, b) = (u - h, u + h);
    let mut cuts = vec![a];
    cuts.extend(link.knots().iter().copied().filter(|&k| k > a && k < b));
    cuts.push(b);
    let panels = 10_000usize;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let k = ((panels as f64 * (hi - lo) / (b - a)).ceil() as usize).max(2) & !1;
        let step = (hi - lo) / k as f64;
        // constant on the open piece; take the value at its midpoint
        let phi = link.evaluate(0.5 * (lo + hi));
        let f = |t: f64| triweight((u - t) / h) / h * phi;
        let mut s = f(lo) + f(hi);
        for i in 1..k {
            s += f(lo + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        total += s * step / 3.0;
    }
    total
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut invariants = true;
    for _ in 0..20 {
        let m = rng.random_range(1..=15);
        let mut knots: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut values: Vec<f64> = (0..knots.len()).map(|_| rng.random_range(0.05..0.95)).collect();
        values.sort_by(f64::total_cmp);
        let link = MonotoneStepLink::new(knots, values, 0.01, 0.99).unwrap();
        let h = rng.random_range(0.05..1.5);
        let s = smooth_link(&link, h).unwrap();
        let mut us: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..3.0)).collect();
        for &u in &us {
            worst = worst.max((s.evaluate(u) - smoothed_by_quadrature(&link, h, u)).abs());
        }
        us.sort_by(f64::total_cmp);
        let vals: Vec<f64> = us.iter().map(|&u| s.evaluate(u)).collect();
        invariants &= vals.windows(2).all(|w| w[0] <= w[1]);
        invariants &= vals.iter().all(|&v| (link.lower()..=link.upper()).contains(&v));
    }
    verdict(worst <= 1e-6 && invariants, format!("max abs error {worst:.3e}, invariants hold: {invariants}"))
}

/// Breslow log partial likelihood with one covariate, by direct summation.
fn naive_partial_loglik(y: &[f64], d: &[u8], z: &[f64], b: f64) -> f64 {
    let mut times: Vec<f64> = y.iter().zip(d).filter(|(_, &e)| e == 1).map(|(&t, _)| t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut ll = 0.0;
    for &t in &times {
        let mut num = 0.0;
        let mut count = 0.0;
        let mut risk = 0.0;
        for i in 0..y.len() {
            if y[i] == t && d[i] == 1 {
                num += b * z[i];
                count += 1.0;
            }
            if y[i] >= t {
                risk += (b * z[i]).exp();
            }
        }
        ll += num - count * risk.ln();
    }
    ll
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut na_exact = true;
    for _ in 0..20 {
        let n = rng.random_range(15..40);
        let truth = rng.random_range(-1.0..1.0);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = z
            .iter()
            .map(|&zi: &f64| (-(rng.random::<f64>()).ln() * (-truth * zi).exp() * 10.0).ceil() / 10.0)
            .collect();
        let d: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.7)).collect();
        let ds = SurvivalDataset::new(
            y.clone(),
            d.clone(),
            Matrix::new(n, 1, vec![0.0; n]).unwrap(),
            Matrix::new(n, 1, z.clone()).unwrap(),
        )
        .unwrap();
        let w = vec![1.0; n];
        let beta = match weighted_cox_beta(&ds, &w, &[0.0]) {
            Ok(b) => b[0],
            Err(e) => return verdict(false, format!("cox fit failed: {e}")),
        };
        // golden-section search of the concave partial likelihood
        let (mut a, mut b) = (-10.0f64, 10.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-10 {
            let (c, e) = (b - g * (b - a), a + g * (b - a));
            if naive_partial_loglik(&y, &d, &z, c) > naive_partial_loglik(&y, &d, &z, e) {
                b = e;
            } else {
                a = c;
            }
        }
        worst = worst.max((beta - 0.5 * (a + b)).abs());

        let lat = weighted_breslow(&ds, &w, &[0.0]).unwrap();
        let mut times: Vec<f64> = y.iter().zip(&d).filter(|(_, &e)| e == 1).map(|(&t, _)| t).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut cum = 0.0;
        for &t in &times {
            let events = y.iter().zip(&d).filter(|(&s, &e)| s == t && e == 1).count();
            let at_risk = y.iter().filter(|&&s| s >= t).count();
            cum += events as f64 / at_risk as f64;
            na_exact &= lat.cumulative_hazard(t) == cum;
        }
    }
    verdict(worst <= 1e-4 && na_exact, format!("max |beta - oracle| {worst:.3e}, Nelson-Aalen exact: {na_exact}"))
}

fn criterion_9() -> Verdict {
    let mut passes = 0;
    let mut detail = Vec::new();
    for seed in 1..=5u64 {
        let mut spec = ExperimentSpec::preset("exptA").unwrap();
        spec.n = 2000;
        spec.seed = seed;
        let ds = generate(&spec).unwrap().dataset;
        let p = match fit(&ds, Method::Msic, &FitConfig::default()) {
            Ok(p) => p,
            Err(e) => {
                detail.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let g = p.gamma.as_slice();
        let dg = norm2(&g.iter().zip(&spec.gamma0).map(|(a, b)| a - b).collect::<Vec<_>>());
        let index: Vec<f64> = (0..ds.n()).map(|i| dot(g, ds.x.row(i))).collect();
        let (lo, hi) = index.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &u| (l.min(u), h.max(u)));
        let truth = TrueIncidence { link: spec.link, intercept: spec.intercept, gamma0: spec.gamma0.clone() };
        let sup = (0..=1000)
            .map(|k| lo + (hi - lo) * k as f64 / 1000.0)
            .map(|u| (p.link.evaluate(u) - link_value(truth.link, truth.intercept, u)).abs())
            .fold(0.0, f64::max);
        let ok = dg <= 0.25 && sup <= 0.1;
        passes += usize::from(ok);
        detail.push(format!("seed {seed}: |dgamma| {dg:.3}, sup link error {sup:.3}"));
        assert!(matches!(p.link, IncidenceLink::Smoothed(_)));
    }
    verdict(passes >= 4, format!("{passes}/5 seeds pass ({})", detail.join("; ")))
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));
    let mut results: Vec<(usize, Verdict, f64)> = Vec::new();
    let run = |k: usize, f: fn() -> Verdict, results: &mut Vec<(usize, Verdict, f64)>| {
        if want(k) {
            let t = Instant::now();
            let v = f();
            let secs = t.elapsed().as_secs_f64();
            print_line(k, &v, secs);
            results.push((k, v, secs));
        }
    };
    run(1, criterion_1, &mut results);
    run(2, criterion_2, &mut results);
    run(3, criterion_3, &mut results);
    if want(4) || want(5) {
        for r in criteria_4_5(want(4), want(5)) {
            print_line(r.0, &r.1, r.2);
            results.push(r);
        }
    }
    run(6, criterion_6, &mut results);
    run(7, criterion_7, &mut results);
    run(8, criterion_8, &mut results);
    run(9, criterion_9, &mut results);
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn print_line(k: usize, v: &Verdict, secs: f64) {
    println!("criterion {k}: {} ({secs:.1} s) {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
}
