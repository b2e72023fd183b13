//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use eloran_td::agrnn::{agrnn_predict, loss_and_gradient, params_from_flat, params_to_flat, WlrParams};
use eloran_td::dataset::{build_features, Corpus};
use eloran_td::gridmap::{idw_fill, shepard_interpolate, GridMap, GridSpec};
use eloran_td::lasso::{solve_lasso, train as train_lasso, LassoConfig};
use eloran_td::model::{evaluate, train_model, ModelKind};
use eloran_td::stats::{
    anova_oneway, f_survival, mae, pearson, rmse, select_factors, t_two_sided_p, CorrelationResult,
};
use eloran_td::synth::generate_scenario;
use eloran_td::synth::oracle::{grnn_oracle, kernel_oracle, ols_oracle};
use eloran_td::types::{EpochHour, FactorSet, GeoPoint, MetFactor};
use eloran_td_cli::commands::{sweep_table, SweepKind};
use eloran_td_cli::config::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

// 1. Kernel identity

fn kernel_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let l = rng.random_range(1..=6);
        let t = rng.random_range(1..=40);
        let bank: Vec<Vec<f64>> = (0..t).map(|_| (0..l).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = (0..t).map(|_| rng.random_range(-50.0..50.0)).collect();
        let query: Vec<f64> = (0..l).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma = rng.random_range(0.5..3.0);
        let flat: Vec<f64> = bank.iter().flatten().copied().collect();
        let tied = agrnn_predict(&query, &flat, &y, &vec![sigma; l]).map_err(|e| e.to_string())?;
        let grnn = grnn_oracle(&query, &bank, &y, sigma);
        let naive = kernel_oracle(&query, &bank, &y, &vec![sigma; l]);
        let aniso: Vec<f64> = (0..l).map(|_| rng.random_range(0.5..3.0)).collect();
        let fast = agrnn_predict(&query, &flat, &y, &aniso).map_err(|e| e.to_string())?.value;
        let slow = kernel_oracle(&query, &bank, &y, &aniso);
        for (a, b, what) in [
            (tied.value, grnn, "tied vs GRNN"),
            (tied.value, naive, "tied vs oracle"),
            (fast, slow, "anisotropic vs oracle"),
        ] {
            let d = (a - b).abs();
            worst = worst.max(d);
            ensure(d <= 1e-12, || format!("bank {case}: {what} differ by {d:e}"))?;
        }
    }
    Ok(format!("100 banks, max abs difference {worst:.1e}"))
}

// 2. IDW correctness

fn idw_correctness() -> Check {
    let spec = GridSpec::covering(GeoPoint::new(36.0, 127.0).unwrap(), GeoPoint::new(36.2, 127.5).unwrap(), 0.01, 0.05)
        .map_err(|e| e.to_string())?;
    let epoch = EpochHour::from_ymdh(2024, 10, 1, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..50 {
        let k = rng.random_range(1..=6);
        let mut cells: BTreeMap<usize, f64> = BTreeMap::new();
        while cells.len() < k {
            cells.insert(rng.random_range(0..spec.len()), rng.random_range(-50.0..50.0));
        }
        let cells: Vec<(usize, f64)> = cells.into_iter().collect();
        let fill = |c: &[(usize, f64)]| {
            idw_fill(&GridMap::from_assignments(spec.clone(), MetFactor::TemperatureC, epoch, c))
                .map_err(|e| e.to_string())
        };
        let m = fill(&cells)?;
        for &(c, v) in &cells {
            ensure(m.value(c).to_bits() == v.to_bits(), || format!("case {case}: assigned cell {c} changed"))?;
        }
        let lo = cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let hi = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
        ensure(m.values().iter().all(|&v| v >= lo - slack && v <= hi + slack), || {
            format!("case {case}: value outside [{lo}, {hi}]")
        })?;
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let other: Vec<(usize, f64)> = cells.iter().map(|&(c, _)| (c, rng.random_range(-50.0..50.0))).collect();
        let combo: Vec<(usize, f64)> = cells.iter().zip(&other).map(|(&(c, u), &(_, v))| (c, a * u + b * v)).collect();
        let (mo, mc) = (fill(&other)?, fill(&combo)?);
        for cell in 0..spec.len() {
            let expected = a * m.value(cell) + b * mo.value(cell);
            ensure((mc.value(cell) - expected).abs() <= 1e-9 * (1.0 + expected.abs()), || {
                format!("case {case}: not linear at cell {cell}")
            })?;
        }
    }
    // weights 1, 1/2, 1/4 on values 1, 2, 4: (1 + 1 + 1) / 1.75
    let v = shepard_interpolate([(1.0, 1.0), (2.0, 2.0), (4.0, 4.0)]);
    ensure((v - 12.0 / 7.0).abs() < 1e-9 && (v - 1.7142857).abs() < 1e-7, || format!("3-point example gave {v}"))?;
    Ok(format!("50 random maps; 3-point example {v:.7}"))
}

// 3. LASSO oracle equivalence

fn lasso_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let (n, p) = (rng.random_range(30..80), rng.random_range(2..7));
        let x: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x
            .chunks(p)
            .map(|r| {
                1.5 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + 0.3 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let fit = solve_lasso(&x, p, &y, 0.0, 1e-13, 100_000).map_err(|e| e.to_string())?;
        let with_one: Vec<f64> = x.chunks(p).flat_map(|r| std::iter::once(1.0).chain(r.iter().copied())).collect();
        let ols = ols_oracle(&with_one, p + 1, &y).map_err(|e| e.to_string())?;
        let got = std::iter::once(fit.intercept).chain(fit.coef.iter().copied());
        for (k, (a, b)) in got.zip(&ols).enumerate() {
            let r = rel_err(a, *b);
            worst = worst.max(r);
            ensure(r <= 1e-6, || format!("instance {case} coefficient {k}: {a} vs {b}"))?;
        }
        for alpha in [0.0, 0.5, 5.0, 50.0] {
            let cfg = LassoConfig { degree: 2, alpha, ..LassoConfig::default() };
            let (_, trace) = train_lasso(&x, p, &y, &cfg).map_err(|e| e.to_string())?;
            for w in trace.losses.windows(2) {
                ensure(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), || {
                    format!("instance {case} alpha {alpha}: objective rose from {} to {}", w[0], w[1])
                })?;
            }
        }
    }
    // one column: argmin of Σ(y - b0 - βx)² + α|β| is S(Sxy, α/2) / Sxx
    let x = [-3.0, -1.0, 0.5, 1.5, 2.0, 4.0];
    let y = [1.0, -0.4, 0.9, 2.2, 0.1, 3.0];
    let (xm, ym) = (x.iter().sum::<f64>() / 6.0, y.iter().sum::<f64>() / 6.0);
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    for alpha in [0.0, 0.3, 2.0, 2.0 * sxy.abs(), 100.0] {
        let fit = solve_lasso(&x, 1, &y, alpha, 1e-15, 1000).map_err(|e| e.to_string())?;
        let expected = sxy.signum() * (sxy.abs() - alpha / 2.0).max(0.0) / sxx;
        ensure((fit.coef[0] - expected).abs() < 1e-9, || format!("1-D alpha {alpha}: {} vs {expected}", fit.coef[0]))?;
        ensure((fit.intercept - (ym - expected * xm)).abs() < 1e-9, || format!("1-D alpha {alpha}: intercept"))?;
    }
    Ok(format!("20 instances, max relative error {worst:.1e}; 1-D closed form and monotone objective hold"))
}

// 4. Gradient check

fn gradient_check() -> Check {
    let mut worst = 0.0f64;
    let mut zeros = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (t, l, n) = (3, 2, 3);
        let mut params = WlrParams::init(n, 4, &mut rng);
        params.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        params.b2 = 0.1;
        let z: Vec<f64> = (0..t * l * n).map(|_| rng.sample(StandardNormal)).collect();
        let htilde: Vec<f64> = (0..l).map(|_| rng.random_range(0.5..1.5)).collect();
        let y: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..t).map(|_| rng.random_range(0.5..1.5)).collect();
        let spread: Vec<f64> = (0..l).map(|_| rng.random_range(0.5..2.0)).collect();
        let scale = rng.random_range(0.5..2.0);
        let loss = |p: &WlrParams| loss_and_gradient(p, &z, l, &htilde, &y, &w, &spread, scale);
        let (value, grad) = loss(&params);
        let flat = params_to_flat(&params);
        let eps = 1e-5;
        // The kernel sees only column differences, so the bias gradients
        // vanish exactly; there the central difference is rounding noise.
        let noise = 100.0 * f64::EPSILON * value.abs().max(1.0) / eps;
        for k in 0..flat.len() {
            let shifted = |d: f64| {
                let mut v = flat.clone();
                v[k] += d;
                loss(&params_from_flat(&params, &v)).0
            };
            let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            let size = grad[k].abs().max(fd.abs());
            if size <= noise {
                zeros += 1;
                continue;
            }
            let rel = (grad[k] - fd).abs() / size;
            worst = worst.max(rel);
            ensure(rel < 1e-4, || format!("toy {seed} parameter {k}: analytic {} vs {fd}", grad[k]))?;
        }
    }
    Ok(format!("10 toys, max relative error {worst:.1e}; {zeros} components zero to within rounding"))
}

// 5 and 10. Model recovery and baseline ordering

const DEFAULT_RUN: &str = r#"
seed = 42
[models.wlr_agrnn]
max_iterations = 100
[models.wlr_agrnn.adam]
learning_rate = 0.03
"#;

const CUBIC_RUN: &str = r#"
seed = 42
[scenario]
recipe = "cubic"
[features]
mode = "receiver_only"
[models.lasso_mpr]
degree = 3
alpha = 0.5
"#;

fn corpus_for(cfg: &RunConfig) -> Result<Corpus, String> {
    Ok(generate_scenario(&cfg.scenario()).map_err(|e| e.to_string())?.into())
}

fn test_rmse(cfg: &RunConfig, corpus: &Corpus, kind: ModelKind) -> Result<f64, String> {
    let fs = build_features(corpus, &cfg.features).map_err(|e| e.to_string())?;
    let (artifact, _) = train_model(kind, &cfg.hyperparameters(), &fs, &cfg.split).map_err(|e| e.to_string())?;
    Ok(evaluate(&artifact, &fs, &cfg.split).map_err(|e| e.to_string())?.rmse)
}

fn model_recovery(wlr_rmse: &mut Option<f64>) -> Check {
    let cfg = RunConfig::parse(DEFAULT_RUN).map_err(|e| e.to_string())?;
    let noise = cfg.scenario().noise_sd_ns;
    ensure(noise == 10.0, || format!("default noise sd is {noise}"))?;
    let limit = 1.25 * noise;
    let wlr = test_rmse(&cfg, &corpus_for(&cfg)?, ModelKind::WlrAgrnn)?;
    *wlr_rmse = Some(wlr);
    let cubic = RunConfig::parse(CUBIC_RUN).map_err(|e| e.to_string())?;
    let lasso = test_rmse(&cubic, &corpus_for(&cubic)?, ModelKind::LassoMpr)?;
    ensure(wlr <= limit && lasso <= limit, || {
        format!("WLR-AGRNN {wlr:.3} ns, LASSO-MPR {lasso:.3} ns, limit {limit} ns")
    })?;
    Ok(format!("WLR-AGRNN {wlr:.3} ns, LASSO-MPR (m=3, cubic) {lasso:.3} ns, limit {limit} ns"))
}

fn baseline_ordering(wlr_rmse: Option<f64>) -> Check {
    let cfg = RunConfig::parse(DEFAULT_RUN).map_err(|e| e.to_string())?;
    let corpus = corpus_for(&cfg)?;
    let wlr = match wlr_rmse {
        Some(v) => v,
        None => test_rmse(&cfg, &corpus, ModelKind::WlrAgrnn)?,
    };
    let grnn = test_rmse(&cfg, &corpus, ModelKind::Grnn)?;
    ensure(wlr < grnn, || format!("WLR-AGRNN {wlr:.3} ns is not below GRNN {grnn:.3} ns"))?;
    Ok(format!("WLR-AGRNN {wlr:.3} ns < GRNN {grnn:.3} ns"))
}

// 6. Sweep shapes

const OVERFIT_RUN: &str = r#"
seed = 42
[scenario]
recipe = "cubic"
[features]
mode = "receiver_only"
[models.lasso_mpr]
degree = 4
[split]
train = [{ start = "2024-10-01", end = "2024-10-21" }]
test = [{ start = "2024-12-01", end = "2025-01-14" }]
[sweep]
alphas = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0]
"#;

fn sweep_shapes() -> Check {
    let cfg = RunConfig::parse(OVERFIT_RUN).map_err(|e| e.to_string())?;
    let alpha = sweep_table(&cfg, &corpus_for(&cfg)?, SweepKind::Alpha).map_err(|e| e.to_string())?;
    let best = alpha.argmin().rmse;
    let (first, last) = (alpha.rows[0].rmse, alpha.rows[alpha.rows.len() - 1].rmse);
    ensure(first > best && last > best, || format!("alpha sweep endpoints {first:.3} / {last:.3}, minimum {best:.3}"))?;
    let cubic = RunConfig::parse(CUBIC_RUN).map_err(|e| e.to_string())?;
    let degree = sweep_table(&cubic, &corpus_for(&cubic)?, SweepKind::Degree).map_err(|e| e.to_string())?;
    let m = degree.argmin().value;
    ensure(m == 3.0, || format!("degree sweep argmin at m = {m}"))?;
    Ok(format!(
        "alpha: {first:.2} ns at {}, minimum {best:.2} ns at {}, {last:.2} ns at {}; degree argmin m = {m}",
        alpha.rows[0].value,
        alpha.argmin().value,
        alpha.rows[alpha.rows.len() - 1].value
    ))
}

// 7. Metrics and statistics

fn statistics_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..1000 {
        let n = rng.random_range(1..50);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let (r, m) = (rmse(&a, &p).map_err(|e| e.to_string())?, mae(&a, &p).map_err(|e| e.to_string())?);
        ensure(r >= m * (1.0 - 1e-12), || format!("pair {k}: RMSE {r} < MAE {m}"))?;
    }
    for k in 0..50 {
        let n = rng.random_range(5..40);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-10.0..10.0)).collect();
        let (a, b) = (rng.random_range(0.1..10.0), rng.random_range(-100.0..100.0));
        let (c, d) = (rng.random_range(0.1..10.0), rng.random_range(-100.0..100.0));
        let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let yt: Vec<f64> = y.iter().map(|v| -c * v + d).collect();
        let (r0, _) = pearson(&x, &y).map_err(|e| e.to_string())?;
        let (r1, _) = pearson(&xt, &yt).map_err(|e| e.to_string())?;
        ensure((r0 + r1).abs() < 1e-12, || format!("case {k}: r {r0} vs transformed {r1}"))?;
    }
    let same =
        anova_oneway(&[vec![1.0, 4.0, 2.0], vec![1.0, 4.0, 2.0], vec![1.0, 4.0, 2.0]]).map_err(|e| e.to_string())?;
    ensure(same.f == 0.0 && same.p == 1.0, || format!("identical groups: F {} p {}", same.f, same.p))?;
    // means 2, 3, 4: between SS 6 on 2 df, within SS 6 on 6 df
    let hand =
        anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]]).map_err(|e| e.to_string())?;
    ensure((hand.f - 3.0).abs() < 1e-9, || format!("hand example F {}", hand.f))?;
    let rows: Vec<&str> = include_str!("../../core/tests/data/p_values.csv").lines().skip(1).collect();
    ensure(rows.len() == 64, || format!("{} reference rows", rows.len()))?;
    let mut worst = 0.0f64;
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        let (x, d1, d2, p) = (num(f[1]), num(f[2]), num(f[3]), num(f[4]));
        let got = if f[0] == "t" { t_two_sided_p(x, d1) } else { f_survival(x, d1, d2) };
        worst = worst.max((got - p).abs());
        ensure((got - p).abs() < 1e-6, || format!("{row}: got {got}"))?;
    }
    Ok(format!("64 reference p-values, max abs error {worst:.1e}; hand ANOVA F = {:.9}", hand.f))
}

// 8. Pipeline determinism

const PIPELINE_RUN: &str = r#"
seed = 42
corpus = "run"
out = "run"
[models.lasso_mpr]
degree = 2
[models.wlr_agrnn]
max_iterations = 10
[models.wlr_agrnn.adam]
learning_rate = 0.03
"#;

fn run_pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fs::write(dir.join("run.toml"), PIPELINE_RUN).map_err(|e| e.to_string())?;
    let models = ["grnn", "lasso_mpr", "wlr_agrnn", "mean"];
    let mut steps: Vec<Vec<String>> = vec![vec!["synth".into()], vec!["ingest".into()], vec!["gridmap".into()]];
    steps.extend(models.iter().map(|m| vec!["train".into(), "--model".into(), m.to_string()]));
    let mut eval = vec!["evaluate".to_string()];
    for m in models {
        eval.extend(["--artifact".to_string(), format!("run/{m}.json")]);
    }
    steps.push(eval);
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_eloran-td"))
            .current_dir(dir)
            .args(["--config", "run.toml"])
            .args(&args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim())
        })?;
    }
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir.join("run")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn pipeline_determinism() -> Check {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    ensure(first.keys().eq(second.keys()), || "runs wrote different file sets".into())?;
    for (name, bytes) in &first {
        ensure(second[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    for expected in ["metrics.csv", "rmse_table.csv", "anova.csv", "wlr_agrnn.json", "hourly_td.csv"] {
        ensure(first.contains_key(expected), || format!("{expected} was not written"))?;
    }
    let bytes: usize = first.values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes, identical", first.len()))
}

// 9. Factor selection

fn factor_selection() -> Check {
    let table: Vec<CorrelationResult> = include_str!("../../core/tests/data/screening_correlations.csv")
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            // printed p-value bounds, replaced by a value on the stated side
            let p = match f[2] {
                "<0.001" => 0.0009,
                "<0.05" => 0.04,
                ">0.05" => 0.06,
                other => return Err(format!("unexpected p bound {other}")),
            };
            let factor: MetFactor = f[0].parse().map_err(|e| format!("{e}"))?;
            let r: f64 = f[1].parse().map_err(|e| format!("{e}"))?;
            Ok(CorrelationResult { factor, r, p, n_samples: 720 })
        })
        .collect::<Result<_, String>>()?;
    ensure(table.len() == 11, || format!("{} table rows", table.len()))?;
    let chosen = select_factors(&table, 0.5, 0.05);
    ensure(chosen == FactorSet::seven(), || format!("selected {chosen:?}"))?;
    Ok(format!("{} of 11 factors selected", chosen.len()))
}

struct Criterion {
    name: &'static str,
    limit: Duration,
}

fn report(c: &Criterion, elapsed: Duration, result: Check) -> bool {
    let secs = elapsed.as_secs_f64();
    let (ok, detail) = match result {
        Ok(d) if elapsed <= c.limit => (true, d),
        Ok(d) => (false, format!("{d}; exceeded the {} s limit", c.limit.as_secs())),
        Err(e) => (false, e),
    };
    println!("{} {} ({secs:.2} s, limit {} s): {detail}", if ok { "PASS" } else { "FAIL" }, c.name, c.limit.as_secs());
    ok
}

fn timed(c: Criterion, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = f();
    report(&c, start.elapsed(), result)
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut wlr = None;
    let results = [
        timed(Criterion { name: "1 kernel identity", limit: secs(1) }, kernel_identity),
        timed(Criterion { name: "2 IDW correctness", limit: secs(1) }, idw_correctness),
        timed(Criterion { name: "3 LASSO oracle equivalence", limit: secs(10) }, lasso_oracle),
        timed(Criterion { name: "4 gradient check", limit: secs(10) }, gradient_check),
        timed(Criterion { name: "5 model recovery", limit: secs(300) }, || model_recovery(&mut wlr)),
        timed(Criterion { name: "6 sweep shapes", limit: secs(300) }, sweep_shapes),
        timed(Criterion { name: "7 metrics and statistics", limit: secs(5) }, statistics_suite),
        timed(Criterion { name: "8 pipeline determinism", limit: secs(600) }, pipeline_determinism),
        timed(Criterion { name: "9 factor selection", limit: secs(1) }, factor_selection),
        timed(Criterion { name: "10 baseline ordering", limit: secs(600) }, || baseline_ordering(wlr)),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
