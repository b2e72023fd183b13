//! One function per subcommand. Each writes its files under the output
//! directory and returns a short human-readable summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use eloran_td::dataset::{
    build_features, load_corpus, path_endpoints, receiver_station, write_corpus, Corpus, FeatureSet, FeatureSpec,
};
use eloran_td::gridmap::{assign_observations, elevation_profile, idw_fill, sample_path, write_gridmap_csv, GridSpec};
use eloran_td::ingest::{align_epochs, available_factors};
use eloran_td::lasso::{sweep_alpha, sweep_degree, SplitRows, SweepTable};
use eloran_td::model::{evaluate, mpr_rows, train_model, Artifact, Evaluation, ModelKind, TrainingTrace};
use eloran_td::stats::{anova_oneway, correlate, select_factors, AnovaResult, CorrelationResult};
use eloran_td::synth::generate_scenario;
use eloran_td::types::{haversine_km, EpochHour, MetFactor};

use crate::config::RunConfig;
use crate::svg::line_chart;
use crate::CliError;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Small in-memory CSV builder.
struct Csv(csv::Writer<Vec<u8>>);

impl Csv {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Csv(w)
    }

    fn row(&mut self, fields: &[String]) {
        self.0.write_record(fields).expect("in-memory write");
    }

    fn save(self, path: &Path) -> Result<(), CliError> {
        let bytes = self.0.into_inner().expect("in-memory flush");
        write_file(path, bytes)
    }
}

/// CSV field text. Floats use the shortest round-trip form, switching to
/// exponent notation for very small or large magnitudes.
trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => { $(impl Cell for $t { fn cell(&self) -> String { self.to_string() } })* };
}

display_cell!(usize, bool, str, String, EpochHour, MetFactor);

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

macro_rules! fields {
    ($($x:expr),* $(,)?) => { [$(Cell::cell(&$x)),*] };
}

fn load(cfg: &RunConfig) -> Result<Corpus, CliError> {
    let dir = cfg.corpus_dir()?;
    load_corpus(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn features(corpus: &Corpus, spec: &FeatureSpec) -> Result<FeatureSet, CliError> {
    let fs = build_features(corpus, spec)?;
    log::info!("{} aligned epochs, {} locations, {} factors", fs.len(), fs.n_locations(), fs.n_factors());
    if fs.dropped_hours > 0 {
        log::info!("{} hours dropped for too few timing samples", fs.dropped_hours);
    }
    Ok(fs)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<String, CliError> {
    let scenario_cfg = cfg.scenario();
    let scenario = generate_scenario(&scenario_cfg)?;
    let out = cfg.out_dir()?;
    let corpus: Corpus = scenario.into();
    write_corpus(&out, &corpus).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(format!(
        "corpus {}: {} stations, {} weather hours, {} timing samples, seed {}, path {:.2} km",
        out.display(),
        corpus.registry.len(),
        corpus.weather.epoch_count(),
        corpus.td_raw.len(),
        scenario_cfg.seed,
        haversine_km(scenario_cfg.transmitter, scenario_cfg.receiver),
    ))
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<String, CliError> {
    let corpus = load(cfg)?;
    let out = cfg.out_dir()?;
    let hourly = corpus.hourly_td(cfg.features.min_samples_per_hour);
    let mut csv = Csv::new(&["epoch", "td_ns", "samples"]);
    for (epoch, h) in hourly.iter() {
        csv.row(&fields![epoch, h.mean.value(), h.count]);
    }
    csv.save(&out.join("hourly_td.csv"))?;

    let stations = corpus.registry.ids();
    let factors = &cfg.features.factors;
    let aligned = align_epochs(&corpus.weather, &hourly, factors, &stations)?;
    let mut header = vec!["epoch".to_string(), "station".to_string()];
    header.extend(factors.iter().map(|f| f.name().to_string()));
    header.push("td_ns".into());
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let n = factors.len();
    for t in 0..aligned.len() {
        for (s, id) in stations.iter().enumerate() {
            let mut row = vec![aligned.epochs[t].to_string(), id.clone()];
            row.extend(aligned.epoch_block(t)[s * n..(s + 1) * n].iter().map(Cell::cell));
            row.push(aligned.td[t].cell());
            csv.row(&row);
        }
    }
    csv.save(&out.join("aligned.csv"))?;
    Ok(format!(
        "{} hourly TD values ({} hours dropped), {} aligned epochs over {} stations and {} factors",
        hourly.len(),
        hourly.dropped_hours(),
        aligned.len(),
        stations.len(),
        n
    ))
}

pub fn cmd_gridmap(cfg: &RunConfig) -> Result<String, CliError> {
    let corpus = load(cfg)?;
    let out = cfg.out_dir()?;
    let spec = &cfg.features;
    let (tx, rx) = path_endpoints(&corpus, spec)?;
    let grid =
        GridSpec::covering(tx, rx, spec.cell_deg, spec.padding_deg).map_err(|e| CliError::Config(e.to_string()))?;
    let epoch = match cfg.gridmap.epoch {
        Some(e) => e,
        None => corpus.weather.epochs().next().ok_or_else(|| CliError::Data("weather series is empty".into()))?,
    };
    let factors = cfg.gridmap.factors.clone().unwrap_or_else(|| spec.factors.clone());
    let stamp = epoch.instant().format("%Y%m%dT%H");
    for f in factors.iter() {
        let partial = assign_observations(&grid, &corpus.registry, &corpus.weather, epoch, f)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let full = idw_fill(&partial).map_err(|e| CliError::Data(e.to_string()))?;
        let mut buf = Vec::new();
        write_gridmap_csv(&full, &mut buf).expect("in-memory write");
        write_file(&out.join(format!("gridmap_{}_{stamp}.csv", f.name())), buf)?;
    }
    let path = sample_path(tx, rx, spec.path_points).map_err(|e| CliError::Config(e.to_string()))?;
    let profile = elevation_profile(&corpus.dem, path.points()).map_err(|e| CliError::Data(e.to_string()))?;
    let mut csv = Csv::new(&["point", "lat", "lon", "distance_km", "height_m"]);
    for (j, (p, h)) in path.points().iter().zip(profile.heights()).enumerate() {
        csv.row(&fields![j, p.lat(), p.lon(), haversine_km(tx, *p), h]);
    }
    csv.save(&out.join("elevation_profile.csv"))?;
    Ok(format!(
        "{} grid maps of {}×{} cells at {epoch}, elevation profile over {} points",
        factors.len(),
        grid.nrows(),
        grid.ncols(),
        path.len()
    ))
}

/// Pearson correlation of each available factor at one station with TD.
pub fn correlations(cfg: &RunConfig, corpus: &Corpus) -> Result<(String, Vec<Option<CorrelationResult>>), CliError> {
    let station = match &cfg.correlate.station {
        Some(id) if corpus.registry.contains(id) => id.clone(),
        Some(id) => return Err(CliError::Config(format!("[correlate] station `{id}` is not in the registry"))),
        None => receiver_station(corpus, &cfg.features)?,
    };
    let hourly = corpus.hourly_td(cfg.features.min_samples_per_hour);
    let factors = available_factors(&corpus.weather);
    let mut shared = 0;
    let rows = factors
        .iter()
        .map(|&f| {
            let (x, y): (Vec<f64>, Vec<f64>) = hourly
                .iter()
                .filter_map(|(e, h)| corpus.weather.get(&station, e, f).map(|v| (v, h.mean.value())))
                .unzip();
            shared = shared.max(x.len());
            match correlate(f, &x, &y) {
                Ok(c) => Some(c),
                Err(e) => {
                    log::warn!("{f}: {e}");
                    None
                }
            }
        })
        .collect();
    if shared == 0 {
        return Err(CliError::Data("weather and timing data share no epochs".into()));
    }
    Ok((station, rows))
}

pub fn cmd_correlate(cfg: &RunConfig) -> Result<String, CliError> {
    let corpus = load(cfg)?;
    let out = cfg.out_dir()?;
    let (station, rows) = correlations(cfg, &corpus)?;
    let valid: Vec<CorrelationResult> = rows.iter().flatten().copied().collect();
    let selected = select_factors(&valid, cfg.correlate.r_min, cfg.correlate.p_max);
    let mut csv = Csv::new(&["factor", "r", "p", "samples", "selected"]);
    for (f, row) in available_factors(&corpus.weather).into_iter().zip(&rows) {
        match row {
            Some(c) => csv.row(&fields![f, c.r, c.p, c.n_samples, selected.contains(f)]),
            None => csv.row(&fields![f, "", "", 0, false]),
        }
    }
    csv.save(&out.join("correlation.csv"))?;
    Ok(format!(
        "station {station}: {} of {} factors selected (|r| >= {}, p <= {}): {selected}",
        selected.len(),
        rows.len(),
        cfg.correlate.r_min,
        cfg.correlate.p_max
    ))
}

fn write_trace(path: &Path, trace: &TrainingTrace) -> Result<(), CliError> {
    let mut csv = Csv::new(&["iteration", "loss"]);
    for (i, l) in trace.losses.iter().enumerate() {
        csv.row(&fields![i, l]);
    }
    csv.save(path)
}

/// Trains `model` and returns the artifact path.
pub fn cmd_train(cfg: &RunConfig, model: &str) -> Result<(PathBuf, String), CliError> {
    let kind: ModelKind = model.parse()?;
    let corpus = load(cfg)?;
    let fs = features(&corpus, &cfg.features)?;
    let out = cfg.out_dir()?;
    let (artifact, trace) = train_model(kind, &cfg.hyperparameters(), &fs, &cfg.split)?;
    let path = out.join(format!("{kind}.json"));
    write_file(&path, artifact.to_json())?;
    write_trace(&out.join(format!("{kind}_trace.csv")), &trace)?;
    let summary = format!(
        "{kind}: {} training epochs, {} iterations{}, final loss {:.6}",
        artifact.train_epochs,
        trace.iterations,
        if trace.converged { " (converged)" } else { "" },
        trace.last().unwrap_or(f64::NAN)
    );
    Ok((path, summary))
}

pub fn read_artifact(path: &Path) -> Result<Artifact, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Artifact::from_json(&text).map_err(|e| CliError::Compat(format!("{}: {e}", path.display())))
}

pub fn cmd_predict(
    cfg: &RunConfig,
    artifact_path: &Path,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
) -> Result<String, CliError> {
    let artifact = read_artifact(artifact_path)?;
    let corpus = load(cfg)?;
    let fs = features(&corpus, &cfg.features)?;
    artifact.check_compatible(&fs)?;
    let inside = |e: &EpochHour| {
        let d = e.instant().date_naive();
        from.is_none_or(|f| d >= f) && to.is_none_or(|t| d <= t)
    };
    let rows: Vec<usize> = (0..fs.len()).filter(|&t| inside(&fs.epochs[t])).collect();
    let predicted = artifact.predict_rows(&fs, &rows)?;
    let out = cfg.out_dir()?;
    let mut csv = Csv::new(&["epoch", "predicted_td_ns"]);
    for (&t, p) in rows.iter().zip(&predicted) {
        csv.row(&fields![fs.epochs[t], p]);
    }
    csv.save(&out.join("predictions.csv"))?;
    Ok(format!("{} predictions from {}", rows.len(), artifact.kind_name()))
}

/// Scores artifacts, each on features built with its own factors and
/// location mode.
pub fn evaluations(cfg: &RunConfig, corpus: &Corpus, artifacts: &[Artifact]) -> Result<Vec<Evaluation>, CliError> {
    let mut cache: BTreeMap<String, FeatureSet> = BTreeMap::new();
    artifacts
        .iter()
        .map(|a| {
            let key = format!("{}|{}", a.factors, a.mode.name());
            if !cache.contains_key(&key) {
                let spec = FeatureSpec { factors: a.factors.clone(), mode: a.mode, ..cfg.features.clone() };
                cache.insert(key.clone(), features(corpus, &spec)?);
            }
            Ok(evaluate(a, &cache[&key], &cfg.split)?)
        })
        .collect()
}

/// One-way ANOVA over per-fold RMSE, when there are at least two models
/// and two folds each.
pub fn fold_anova(evals: &[Evaluation]) -> Option<AnovaResult> {
    if evals.len() < 2 || evals.iter().any(|e| e.folds.len() < 2) {
        return None;
    }
    let groups: Vec<Vec<f64>> = evals.iter().map(|e| e.folds.iter().map(|f| f.rmse).collect()).collect();
    anova_oneway(&groups).ok()
}

pub fn cmd_evaluate(cfg: &RunConfig, paths: &[PathBuf]) -> Result<String, CliError> {
    if paths.is_empty() {
        return Err(CliError::Config("evaluate needs at least one --artifact".into()));
    }
    let artifacts = paths.iter().map(|p| read_artifact(p)).collect::<Result<Vec<_>, _>>()?;
    let corpus = load(cfg)?;
    let evals = evaluations(cfg, &corpus, &artifacts)?;
    let out = cfg.out_dir()?;
    let names: Vec<String> = paths
        .iter()
        .zip(&evals)
        .map(|(p, e)| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| e.model.clone()))
        .collect();

    let mut csv = Csv::new(&["model", "setting", "epochs", "rmse_ns", "mae_ns"]);
    for (name, e) in names.iter().zip(&evals) {
        csv.row(&fields![name, e.setting, e.epochs, e.rmse, e.mae]);
    }
    csv.save(&out.join("metrics.csv"))?;

    let mut csv = Csv::new(&["model", "setting", "fold", "epochs", "rmse_ns", "mae_ns"]);
    for (name, e) in names.iter().zip(&evals) {
        for f in &e.folds {
            csv.row(&fields![name, e.setting, f.fold, f.epochs, f.rmse, f.mae]);
        }
    }
    csv.save(&out.join("folds.csv"))?;

    // Rows are models, columns are factor-set / location-mode settings.
    let mut settings: Vec<&str> = evals.iter().map(|e| e.setting.as_str()).collect();
    settings.sort();
    settings.dedup();
    let mut models: Vec<&str> = Vec::new();
    for e in &evals {
        if !models.contains(&e.model.as_str()) {
            models.push(&e.model);
        }
    }
    let mut header = vec!["model"];
    header.extend(&settings);
    let mut csv = Csv::new(&header);
    for m in &models {
        let mut row = vec![m.to_string()];
        for s in &settings {
            let cell = evals.iter().find(|e| e.model == *m && e.setting == *s).map(|e| e.rmse.cell());
            row.push(cell.unwrap_or_default());
        }
        csv.row(&row);
    }
    csv.save(&out.join("rmse_table.csv"))?;

    let mut summary = String::new();
    for (name, e) in names.iter().zip(&evals) {
        let _ = writeln!(summary, "{name:<16} {:<20} RMSE {:>10.4} ns  MAE {:>10.4} ns", e.setting, e.rmse, e.mae);
    }
    if let Some(a) = fold_anova(&evals) {
        let mut csv = Csv::new(&["f", "p", "df_between", "df_within"]);
        csv.row(&fields![a.f, a.p, a.df_between, a.df_within]);
        csv.save(&out.join("anova.csv"))?;
        let _ = writeln!(
            summary,
            "ANOVA over fold RMSE: F({}, {}) = {:.4}, p = {:.4}",
            a.df_between, a.df_within, a.f, a.p
        );
    }
    Ok(summary.trim_end().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Alpha,
    Degree,
}

/// Runs a LASSO-MPR sweep scored on the test ranges.
pub fn sweep_table(cfg: &RunConfig, corpus: &Corpus, kind: SweepKind) -> Result<SweepTable, CliError> {
    let settings =
        cfg.models.lasso_mpr.ok_or_else(|| CliError::Config("sweep needs a [models.lasso_mpr] section".into()))?;
    let fs = features(corpus, &cfg.features)?;
    let train = fs.select(&cfg.split.train_rows(&fs.epochs));
    let test = fs.select(&cfg.split.test_rows(&fs.epochs));
    if train.is_empty() {
        return Err(CliError::Data("no epochs fall in the training ranges".into()));
    }
    if test.is_empty() {
        return Err(CliError::Data("no epochs fall in the test ranges".into()));
    }
    let (train_x, ncols) = mpr_rows(&train, settings.inputs);
    let (val_x, _) = mpr_rows(&test, settings.inputs);
    let split = SplitRows { ncols, train_x: &train_x, train_y: &train.td, val_x: &val_x, val_y: &test.td };
    let table = match kind {
        SweepKind::Alpha => sweep_alpha(&split, &settings.lasso(), &cfg.sweep.alphas),
        SweepKind::Degree => sweep_degree(&split, &settings.lasso(), &cfg.sweep.degrees),
    };
    table.map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_sweep(cfg: &RunConfig, kind: SweepKind) -> Result<String, CliError> {
    let corpus = load(cfg)?;
    let table = sweep_table(cfg, &corpus, kind)?;
    let out = cfg.out_dir()?;
    let name = &table.parameter;
    let mut csv = Csv::new(&[name.as_str(), "rmse_ns", "nonzero_terms"]);
    for r in &table.rows {
        csv.row(&fields![r.value, r.rmse, r.nonzero]);
    }
    csv.save(&out.join(format!("sweep_{name}.csv")))?;
    if cfg.sweep.svg {
        let points: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.value, r.rmse)).collect();
        let svg = line_chart(&format!("Test RMSE versus {name}"), name, "RMSE (ns)", &points, kind == SweepKind::Alpha);
        write_file(&out.join(format!("sweep_{name}.svg")), svg)?;
    }
    let best = table.argmin();
    Ok(format!("{} {name} values; minimum RMSE {:.4} ns at {name} = {}", table.rows.len(), best.rmse, best.value))
}
