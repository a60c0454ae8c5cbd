use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{denormalize_final, load_dataset, normalize_final, read_features, LoadedDataset, SampleRecord};
use crate::distgen::{decode_argmax, target_distribution, ScoreDistribution};
use crate::error::{Error, Result};
use crate::metrics::{cs_curve, default_alphas, fisher_z_average, spearman, EvalReport};
use crate::multipath::{
    infer_musdl, joint_loss, judge_targets, sort_judges, train_musdl, usdl_dd_target, JudgePanel, MultiHeadParams,
    MultiplierSource,
};
use crate::nethead::{
    forward_regression, forward_usdl, loss_regression, loss_usdl, segment_distributions, train_regression, train_usdl,
    FeatureMatrix, HeadParams, Pooling,
};

use super::config::{EvalSplit, Mode, ResolvedSetup, RunConfig};
use super::model::ModelCheckpoint;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const CONFIG_SNAPSHOT_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.txt";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const SCORES_FILE: &str = "scores.tsv";
pub const SCATTER_FILE: &str = "scatter.tsv";
pub const CS_CURVE_FILE: &str = "cs_curve.tsv";
pub const SEGMENT_DIST_FILE: &str = "segment_distributions.tsv";

/// Action name used when a record has no action class.
pub const DEFAULT_ACTION: &str = "all";

/// Files written by [`cmd_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub config_snapshot: PathBuf,
    pub loss_history: Vec<f64>,
}

/// One row of the prediction table.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub action: String,
    pub predicted: f64,
    pub truth: f64,
}

/// Loads the dataset named by the config and resolves the run setup against it.
pub fn load_for(config: &RunConfig) -> Result<(LoadedDataset, ResolvedSetup)> {
    let ds = load_dataset(&config.paths.manifest, &config.paths.features, &config.paths.annotations)?;
    let setup = config.resolve(&ds.manifest)?;
    Ok((ds, setup))
}

/// Records of the requested split. An empty split list selects every record.
pub fn select_split(ds: &LoadedDataset, split: EvalSplit) -> Result<Vec<&SampleRecord>> {
    let ids = match split {
        EvalSplit::Train => &ds.manifest.split.train,
        EvalSplit::Test => &ds.manifest.split.test,
        EvalSplit::All => return Ok(ds.records.iter().collect()),
    };
    if ids.is_empty() {
        log::warn!("split {split:?} is empty; using all {} records", ds.records.len());
        return Ok(ds.records.iter().collect());
    }
    ids.iter()
        .map(|id| {
            ds.records
                .iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| Error::Validation(format!("split references unknown id {id}")))
        })
        .collect()
}

fn panel_of(r: &SampleRecord) -> Result<&JudgePanel> {
    r.judge_panel
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("{}: no judge scores", r.id)))
}

fn loss_column(mode: Mode) -> &'static str {
    match mode {
        Mode::Regression => "l2_loss",
        Mode::Usdl | Mode::UsdlDd | Mode::Musdl => "kl_loss",
        Mode::MusdlStar => "kl_plus_dd_l2_loss",
    }
}

/// Trains the configured mode on the training split of `ds`.
pub fn train_model(config: &RunConfig, ds: &LoadedDataset) -> Result<(ModelCheckpoint, Vec<f64>)> {
    let setup = config.resolve(&ds.manifest)?;
    let records = select_split(ds, EvalSplit::Train)?;
    let (lo, hi) = (setup.score_min, setup.score_max);

    let (params, history) = match setup.mode {
        Mode::Regression => {
            let data = records
                .iter()
                .map(|r| Ok((r.features.clone(), normalize_final(r.final_score, lo, hi)? / 100.0)))
                .collect::<Result<Vec<_>>>()?;
            let out = train_regression(&data, &config.train)?;
            (single(out.params), out.loss_history)
        }
        Mode::Usdl | Mode::UsdlDd => {
            let data = records
                .iter()
                .map(|r| Ok((r.features.clone(), usdl_target(config, &setup, r)?)))
                .collect::<Result<Vec<_>>>()?;
            let out = train_usdl(&data, &config.train)?;
            (single(out.params), out.loss_history)
        }
        Mode::Musdl | Mode::MusdlStar => {
            let data = records
                .iter()
                .map(|r| Ok((r.features.clone(), panel_of(r)?.clone())))
                .collect::<Result<Vec<_>>>()?;
            let js = setup.judge_scale.expect("resolved judge scale");
            let out = train_musdl(&data, &js, &config.judge_distribution, &config.train, &setup.rule)?;
            (out.params, out.loss_history)
        }
    };
    Ok((
        ModelCheckpoint {
            setup,
            config: config.train.clone(),
            params,
        },
        history,
    ))
}

fn single(head: HeadParams) -> MultiHeadParams {
    MultiHeadParams {
        heads: vec![head],
        dd_head: None,
    }
}

/// Soft target of a single-path distribution mode.
fn usdl_target(config: &RunConfig, setup: &ResolvedSetup, r: &SampleRecord) -> Result<ScoreDistribution> {
    match setup.mode {
        Mode::Usdl => {
            let label = normalize_final(r.final_score, setup.score_min, setup.score_max)?;
            target_distribution(&setup.final_scale, label, &config.distribution)
        }
        Mode::UsdlDd => usdl_dd_target(
            panel_of(r)?,
            &setup.rule,
            &setup.sum_scale.expect("resolved sum scale"),
            &config.sum_distribution,
        ),
        other => Err(Error::InvalidConfig(format!("mode {other} has no single soft target"))),
    }
}

/// The checkpoint `train_model` starts from: same seed, same initialisation
/// order, zero optimisation steps.
pub fn untrained_model(config: &RunConfig, ds: &LoadedDataset) -> Result<ModelCheckpoint> {
    config.train.validate()?;
    let setup = config.resolve(&ds.manifest)?;
    let records = select_split(ds, EvalSplit::Train)?;
    let d = records.first().ok_or(Error::EmptyDataset)?.features.dim();
    let t = &config.train;
    let mut rng = ChaCha8Rng::seed_from_u64(t.rng_seed);
    let mut head = |m: usize| HeadParams::init(d, t.hidden1, t.hidden2, m, &mut rng);
    let params = match setup.mode {
        Mode::Regression => single(head(1)),
        Mode::Usdl => single(head(setup.final_scale.num_bins())),
        Mode::UsdlDd => single(head(setup.sum_scale.expect("resolved sum scale").num_bins())),
        Mode::Musdl | Mode::MusdlStar => {
            let bins = setup.judge_scale.expect("resolved judge scale").num_bins();
            let heads = (0..ds.manifest.judge_count).map(|_| head(bins)).collect();
            let dd_head = (setup.rule.multiplier_source == MultiplierSource::PredictedDd).then(|| head(1));
            MultiHeadParams { heads, dd_head }
        }
    };
    Ok(ModelCheckpoint {
        setup,
        config: config.train.clone(),
        params,
    })
}

/// Final score in raw units for one video.
pub fn predict(model: &ModelCheckpoint, features: &FeatureMatrix, dd: Option<f64>) -> Result<f64> {
    let s = &model.setup;
    let pooling = model.config.pooling;
    match s.mode {
        Mode::Regression => {
            let out = forward_regression(features, model.head(), pooling)?;
            denormalize_final(100.0 * out, s.score_min, s.score_max)
        }
        Mode::Usdl => {
            let dist = forward_usdl(features, model.head(), &s.final_scale, pooling)?;
            denormalize_final(decode_argmax(&dist), s.score_min, s.score_max)
        }
        Mode::UsdlDd => {
            let dd = dd.ok_or(Error::MissingDd(None))?;
            let dist = forward_usdl(features, model.head(), &s.sum_scale.expect("resolved sum scale"), pooling)?;
            Ok(decode_argmax(&dist) * dd)
        }
        Mode::Musdl | Mode::MusdlStar => infer_musdl(
            features,
            &model.params,
            &s.judge_scale.expect("resolved judge scale"),
            &s.rule,
            dd,
            pooling,
        ),
    }
}

/// Training objective of one record under `model`.
pub fn sample_loss(config: &RunConfig, model: &ModelCheckpoint, r: &SampleRecord) -> Result<f64> {
    let s = &model.setup;
    let pooling = model.config.pooling;
    match s.mode {
        Mode::Regression => {
            let label = normalize_final(r.final_score, s.score_min, s.score_max)? / 100.0;
            loss_regression(label, &r.features, model.head(), pooling)
        }
        Mode::Usdl | Mode::UsdlDd => loss_usdl(&usdl_target(config, s, r)?, &r.features, model.head(), pooling),
        Mode::Musdl | Mode::MusdlStar => {
            let panel = panel_of(r)?;
            let js = s.judge_scale.expect("resolved judge scale");
            let targets = judge_targets(&sort_judges(panel), &js, &config.judge_distribution)?;
            joint_loss(
                &targets,
                panel.difficulty_degree,
                &r.features,
                &model.params,
                pooling,
                model.config.dd_loss_weight,
            )
        }
    }
}

fn record_dd(r: &SampleRecord) -> Option<f64> {
    r.judge_panel.as_ref().and_then(|p| p.difficulty_degree)
}

/// Scores `records` and builds the evaluation report.
///
/// A group whose predictions (or truths) are all equal has an undefined rank
/// correlation; it is reported as 0 with a warning.
pub fn evaluate(
    config: &RunConfig,
    model: &ModelCheckpoint,
    records: &[&SampleRecord],
) -> Result<(EvalReport, Vec<Prediction>)> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::with_capacity(records.len());
    let mut loss_sum = 0.0;
    for r in records {
        let predicted = predict(model, &r.features, record_dd(r)).map_err(|e| match e {
            Error::MissingDd(None) => Error::MissingDd(Some(r.id.clone())),
            other => other,
        })?;
        loss_sum += sample_loss(config, model, r)?;
        rows.push(Prediction {
            id: r.id.clone(),
            action: r.action_class.clone().unwrap_or_else(|| DEFAULT_ACTION.to_string()),
            predicted,
            truth: r.final_score,
        });
    }

    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in &rows {
        let g = groups.entry(p.action.as_str()).or_default();
        g.0.push(p.predicted);
        g.1.push(p.truth);
    }
    let mut per_action_rho = BTreeMap::new();
    for (action, (pred, truth)) in &groups {
        let rho = match spearman(pred, truth) {
            Ok(rho) => rho,
            Err(Error::DegenerateSeries) => {
                log::warn!("rank correlation undefined for action {action}; reporting 0");
                0.0
            }
            Err(e) => return Err(e),
        };
        per_action_rho.insert(action.to_string(), rho);
    }
    let rhos: Vec<f64> = per_action_rho.values().copied().collect();
    let pred: Vec<f64> = rows.iter().map(|p| p.predicted).collect();
    let truth: Vec<f64> = rows.iter().map(|p| p.truth).collect();
    let s = &model.setup;
    let report = EvalReport {
        fisher_z_average: fisher_z_average(&rhos)?,
        cs_curve: cs_curve(&pred, &truth, &default_alphas(s.score_max - s.score_min))?,
        per_action_rho,
        mean_loss: Some(loss_sum / records.len() as f64),
    };
    Ok((report, rows))
}

fn check_mode(config: &RunConfig, model: &ModelCheckpoint) -> Result<()> {
    if model.setup.mode != config.mode {
        return Err(Error::ModeMismatch {
            expected: config.mode.to_string(),
            found: model.setup.mode.to_string(),
        });
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Trains and writes the checkpoint, the per-epoch loss log and the config
/// snapshot into `config.output_dir`.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    let (ds, _) = load_for(config)?;
    let (model, history) = train_model(config, &ds)?;

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    model.save(&checkpoint)?;

    let log = dir.join(TRAIN_LOG_FILE);
    let mut w = create(&log)?;
    writeln!(w, "epoch\t{}", loss_column(config.mode))?;
    for (epoch, loss) in history.iter().enumerate() {
        writeln!(w, "{}\t{loss:?}", epoch + 1)?;
    }
    w.flush()?;

    let config_snapshot = dir.join(CONFIG_SNAPSHOT_FILE);
    config.save(&config_snapshot)?;
    log::info!(
        "trained {} for {} epochs; final loss {:?}",
        config.mode,
        history.len(),
        history.last()
    );
    Ok(TrainSummary {
        checkpoint,
        log,
        config_snapshot,
        loss_history: history,
    })
}

/// Evaluates `checkpoint` on `split` and writes `report.txt` and
/// `predictions.tsv` into `config.output_dir`.
pub fn cmd_eval(config: &RunConfig, checkpoint: &Path, split: EvalSplit) -> Result<EvalReport> {
    let model = ModelCheckpoint::load(checkpoint)?;
    check_mode(config, &model)?;
    let (ds, _) = load_for(config)?;
    let records = select_split(&ds, split)?;
    let (report, rows) = evaluate(config, &model, &records)?;

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut w = create(&dir.join(REPORT_FILE))?;
    report.write_to(&mut w)?;
    w.flush()?;
    write_predictions(&dir.join(PREDICTIONS_FILE), &rows)?;
    Ok(report)
}

fn write_predictions(path: &Path, rows: &[Prediction]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "id\taction\tpredicted\ttruth")?;
    for p in rows {
        writeln!(w, "{}\t{}\t{:?}\t{:?}", p.id, p.action, p.predicted, p.truth)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by `eval`.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != "id\taction\tpredicted\ttruth" {
                return Err(Error::parse(&name, 1, "unexpected prediction table header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let real = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(&name, i + 1, format!("bad number `{t}`")))
        };
        match fields.as_slice() {
            [id, action, predicted, truth] => rows.push(Prediction {
                id: id.to_string(),
                action: action.to_string(),
                predicted: real(predicted)?,
                truth: real(truth)?,
            }),
            _ => return Err(Error::parse(&name, i + 1, "expected 4 tab-separated fields")),
        }
    }
    Ok(rows)
}

/// Scores every sample in `features_path` and writes `scores.tsv` into
/// `config.output_dir`. DDs, when the mode needs them, come from the
/// config's annotation file.
pub fn cmd_infer(config: &RunConfig, checkpoint: &Path, features_path: &Path) -> Result<Vec<(String, f64)>> {
    let model = ModelCheckpoint::load(checkpoint)?;
    check_mode(config, &model)?;
    let features = read_features(
        BufReader::new(File::open(features_path)?),
        &features_path.display().to_string(),
    )?;
    let needs_dd = match model.setup.mode {
        Mode::UsdlDd => true,
        Mode::Musdl | Mode::MusdlStar => model.setup.rule.multiplier_source == MultiplierSource::GroundTruthDd,
        Mode::Regression | Mode::Usdl => false,
    };
    let dds: BTreeMap<String, f64> = if needs_dd {
        let rows = crate::dataio::read_annotations(
            File::open(&config.paths.annotations)?,
            &config.paths.annotations.display().to_string(),
        )?;
        rows.into_iter().filter_map(|r| r.dd.map(|dd| (r.id, dd))).collect()
    } else {
        BTreeMap::new()
    };

    let mut scores = Vec::with_capacity(features.len());
    for (id, f) in &features {
        let dd = dds.get(id).copied();
        if needs_dd && dd.is_none() {
            return Err(Error::MissingDd(Some(id.clone())));
        }
        scores.push((id.clone(), predict(&model, f, dd)?));
    }

    std::fs::create_dir_all(&config.output_dir)?;
    let mut w = create(&config.output_dir.join(SCORES_FILE))?;
    writeln!(w, "id\tfinal_score")?;
    for (id, s) in &scores {
        writeln!(w, "{id}\t{s:?}")?;
    }
    w.flush()?;
    Ok(scores)
}

/// Files written by [`cmd_plot_data`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub scatter: PathBuf,
    pub cs_curve: PathBuf,
    /// Only for distribution modes with score-level pooling.
    pub segment_distributions: Option<PathBuf>,
}

/// Turns the evaluation outputs in `report_dir` into plot-ready tables in `out_dir`.
///
/// Per-segment distributions are dumped for every evaluated sample when the
/// checkpoint is a distribution model with score-level pooling.
pub fn cmd_plot_data(config: &RunConfig, checkpoint: &Path, report_dir: &Path, out_dir: &Path) -> Result<PlotFiles> {
    let report_path = report_dir.join(REPORT_FILE);
    let predictions_path = report_dir.join(PREDICTIONS_FILE);
    for p in [&report_path, &predictions_path] {
        if !p.exists() {
            return Err(Error::ReportMissing(p.display().to_string()));
        }
    }
    let report = EvalReport::read_from(
        BufReader::new(File::open(&report_path)?),
        &report_path.display().to_string(),
    )?;
    let rows = read_predictions(&predictions_path)?;
    std::fs::create_dir_all(out_dir)?;

    let scatter = out_dir.join(SCATTER_FILE);
    let mut w = create(&scatter)?;
    writeln!(w, "id\ttruth\tpredicted")?;
    for p in &rows {
        writeln!(w, "{}\t{:?}\t{:?}", p.id, p.truth, p.predicted)?;
    }
    w.flush()?;

    let cs_path = out_dir.join(CS_CURVE_FILE);
    let mut w = create(&cs_path)?;
    writeln!(w, "alpha\tpercent")?;
    for (alpha, pct) in &report.cs_curve {
        writeln!(w, "{alpha:?}\t{pct:?}")?;
    }
    w.flush()?;

    let model = ModelCheckpoint::load(checkpoint)?;
    check_mode(config, &model)?;
    let segment_distributions = if model.config.pooling == Pooling::ScoreLevel && model.setup.mode != Mode::Regression {
        let (ds, _) = load_for(config)?;
        let path = out_dir.join(SEGMENT_DIST_FILE);
        write_segment_distributions(&path, &model, &ds, &rows)?;
        Some(path)
    } else {
        None
    };
    Ok(PlotFiles {
        scatter,
        cs_curve: cs_path,
        segment_distributions,
    })
}

fn write_segment_distributions(
    path: &Path,
    model: &ModelCheckpoint,
    ds: &LoadedDataset,
    rows: &[Prediction],
) -> Result<()> {
    let s = &model.setup;
    let scale = match s.mode {
        Mode::Usdl => s.final_scale,
        Mode::UsdlDd => s.sum_scale.expect("resolved sum scale"),
        Mode::Musdl | Mode::MusdlStar => s.judge_scale.expect("resolved judge scale"),
        Mode::Regression => unreachable!("regression has no distributions"),
    };
    let mut w = create(path)?;
    let centers: Vec<String> = scale.bin_centers().iter().map(|c| format!("{c:?}")).collect();
    writeln!(w, "id\thead\tsegment\t{}", centers.join("\t"))?;
    for p in rows {
        let r = ds
            .records
            .iter()
            .find(|r| r.id == p.id)
            .ok_or_else(|| Error::Validation(format!("prediction table references unknown id {}", p.id)))?;
        for (h, head) in model.params.heads.iter().enumerate() {
            for (seg, dist) in segment_distributions(&r.features, head, &scale)?.iter().enumerate() {
                let probs: Vec<String> = dist.probs().iter().map(|v| format!("{v:?}")).collect();
                writeln!(w, "{}\t{h}\t{seg}\t{}", p.id, probs.join("\t"))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
