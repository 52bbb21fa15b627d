use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::*;
use super::{ArtifactWriter, ModelKind, PipelineError, Result, StageOptions};
use crate::attriblab::{attributions_jsonl, block_summary, rank_tokens_gain, rank_tokens_logreg, PathExplainer};
use crate::boostlab::{parse_grid, train_boosted_traced, train_logreg, tune as grid_search, BoostedModel, LogRegModel};
use crate::clusterlab::{run_algorithm, sweep as run_sweep, write_assignments_csv, Algorithm};
use crate::corpus::{generate_synthetic_corpus_with, load_findings, stratified_split, write_findings_jsonl, FindingsFormat, Subset, SynthOptions};
use crate::dimassign::{evaluate, per_label_csv, total_accuracy_csv, AccuracyTable, ClusterLabelProfile, Method};
use crate::embedspace::{hash_embed, write_emb1, EmbeddingMatrix};
use crate::metricsuite::{confusion_indices, report};
use crate::textprep::Vocabulary;
use crate::util::{fmt_f64, stable_hash};

pub(crate) fn ingest(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let path = config
        .data
        .findings
        .as_ref()
        .ok_or_else(|| PipelineError::Config("data.findings is not set; use `synth` for a synthetic corpus".into()))?;
    let findings = load_findings(path, FindingsFormat::from_path(path), &config.severity_scale()?)?;
    if findings.is_empty() {
        return Err(PipelineError::Data(format!("{} holds no findings", path.display())));
    }
    w.write(FINDINGS, write_findings_jsonl(&findings))
}

pub(crate) fn synth(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let opts = SynthOptions { separable: config.synth.separable, ..SynthOptions::default() };
    let findings =
        generate_synthetic_corpus_with(config.synth.n, config.seed, &config.label_profile()?, &opts, &config.severity_scale()?)?;
    w.write(FINDINGS, write_findings_jsonl(&findings))
}

pub(crate) fn split(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let findings = read_findings(config)?;
    let s = stratified_split(&findings, config.split_ratios()?, config.split.stratify, config.seed)?;
    w.write(SPLIT, split_csv(&findings, &s.membership))?;
    let mut notes = String::new();
    for warning in &s.warnings {
        notes.push_str(warning);
        notes.push('\n');
    }
    w.write("split_warnings.txt", notes)
}

pub(crate) fn preprocess(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let findings = read_findings(config)?;
    let subsets = read_split(config, &findings)?;
    let pre = preprocessor(config)?;
    let records: Vec<TokenRecord> = findings
        .iter()
        .map(|f| TokenRecord { id: f.id.clone(), title: pre.tokens(&f.title), description: pre.tokens(&f.description) })
        .collect();
    // vocabularies see the training rows only
    let train: Vec<&TokenRecord> = records.iter().zip(&subsets).filter(|(_, s)| **s == Subset::Train).map(|(r, _)| r).collect();
    let title = Vocabulary::build(train.iter().map(|r| r.title.as_slice()), config.text.min_df)?;
    let description = Vocabulary::build(train.iter().map(|r| r.description.as_slice()), config.text.min_df)?;
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r).expect("serializes"));
        lines.push('\n');
    }
    w.write(TOKENS, lines)?;
    w.write(VOCABULARY, vocabulary_csv(&title, &description))
}

pub(crate) fn embed_hash(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let findings = read_findings(config)?;
    let tokens = read_tokens(config, &findings)?;
    let ids: Vec<String> = tokens.iter().map(|r| r.id.clone()).collect();
    let dim = config.embed.dim;
    for (name, field) in [(TITLE_EMB, 0), (DESCRIPTION_EMB, 1)] {
        let seed = stable_hash(config.seed, [name.as_bytes()]);
        let values: Vec<f64> = tokens
            .iter()
            .flat_map(|r| hash_embed(if field == 0 { &r.title } else { &r.description }, dim, seed))
            .collect();
        let m = EmbeddingMatrix::new(ids.clone(), dim, values, format!("hash-{dim}"))?;
        w.write(name, write_emb1(&m)?)?;
    }
    Ok(())
}

pub(crate) fn cluster(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let ds = build_dataset(config)?;
    let x = cluster_matrix(&ds, config.cluster.features);
    let c = &config.cluster;
    let a = run_algorithm(&x, c.algorithm, c.k, stable_hash(config.seed, [b"cluster".as_slice()]), &c.params())?;
    w.write(&format!("clusters_{}_k{}.csv", c.algorithm, c.k), write_assignments_csv(&ds.ids, &a))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct SweepCellRecord {
    pub algorithm: Algorithm,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silhouette: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct SweepRecord {
    pub features: super::ClusterFeatures,
    pub algorithms: Vec<Algorithm>,
    pub ks: Vec<usize>,
    pub cells: Vec<SweepCellRecord>,
}

pub(crate) fn sweep(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let ds = build_dataset(config)?;
    let x = cluster_matrix(&ds, config.cluster.features);
    let c = &config.cluster;
    if c.k_max > x.rows() {
        return Err(PipelineError::Config(format!("k_max = {} exceeds the {} findings", c.k_max, x.rows())));
    }
    let algorithms = c.algorithm_list()?;
    let result = run_sweep(&x, &algorithms, c.k_min..=c.k_max, config.seed, &c.params())?;
    let record = SweepRecord {
        features: c.features,
        algorithms: result.algorithms.clone(),
        ks: result.ks.clone(),
        cells: result
            .cells
            .iter()
            .map(|cell| SweepCellRecord {
                algorithm: cell.algorithm,
                k: cell.k,
                silhouette: cell.silhouette,
                labels: cell.outcome.as_ref().ok().map(|a| a.labels.clone()),
                error: cell.outcome.as_ref().err().cloned(),
            })
            .collect(),
    };
    w.write(SWEEP, serde_json::to_string(&record).expect("serializes"))?;
    w.write("sweep_silhouette.csv", result.silhouette_csv())
}

pub(crate) fn read_sweep(config: &ExperimentConfig) -> Result<SweepRecord> {
    let text = read(&require(&config.output_dir, SWEEP, "sweep")?)?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{SWEEP}: {e}")))
}

pub(crate) fn assign(config: &ExperimentConfig, options: &StageOptions, w: &mut ArtifactWriter) -> Result<()> {
    let findings = read_findings(config)?;
    let targets = targets_of(config, &findings)?;
    let classes = class_names(config)?;
    let sweep = read_sweep(config)?;
    let methods: Vec<Method> = match options.assign_method {
        Some(m) => vec![m],
        None => config.assign.methods.clone(),
    };
    for method in methods {
        let mut tables: Vec<AccuracyTable> = Vec::new();
        for cell in &sweep.cells {
            let Some(labels) = &cell.labels else { continue };
            if labels.len() != targets.len() {
                return Err(PipelineError::Data(format!("{SWEEP} does not match the corpus; rerun `sweep`")));
            }
            let profile = ClusterLabelProfile::from_points(labels, cell.k, &targets, classes.clone())?;
            let seed = stable_hash(config.seed, [b"assign".as_slice(), cell.algorithm.as_str().as_bytes(), &(cell.k as u64).to_le_bytes()]);
            tables.push(evaluate(&profile, &targets, method, seed, Some(cell.algorithm))?);
        }
        w.write(&format!("accuracy_grid_{method}.csv"), total_accuracy_csv(&tables, &sweep.algorithms, &sweep.ks))?;
        for &a in &sweep.algorithms {
            let mine: Vec<AccuracyTable> = tables.iter().filter(|t| t.algorithm == Some(a)).cloned().collect();
            w.write(&format!("label_accuracy_{method}_{a}.csv"), per_label_csv(&mine))?;
        }
    }
    Ok(())
}

pub(crate) fn train(config: &ExperimentConfig, kind: ModelKind, w: &mut ArtifactWriter) -> Result<()> {
    let ds = build_dataset(config)?;
    let (x, y, _) = ds.rows(Subset::Train);
    match kind {
        ModelKind::Boost => {
            let (model, trace) = train_boosted_traced(&x, &y, &ds.classes, &config.boost)?;
            w.write("model_boost.json", model.to_json())?;
            let mut csv = String::from("round,loss,objective\n");
            for (r, (l, o)) in trace.loss.iter().zip(&trace.objective).enumerate() {
                csv.push_str(&format!("{r},{},{}\n", fmt_f64(*l), fmt_f64(*o)));
            }
            w.write("trace_boost.csv", csv)
        }
        ModelKind::Logreg => {
            let model = train_logreg(&x, &y, &ds.classes, &config.logreg)?;
            w.write("model_logreg.json", model.to_json())
        }
    }
}

pub(crate) fn tune(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let path = config
        .tune
        .grid
        .as_ref()
        .ok_or_else(|| PipelineError::Config("no tuning grid; set tune.grid or pass --grid".into()))?;
    let grid = parse_grid(&read(path)?)?;
    let ds = build_dataset(config)?;
    let (xt, yt, _) = ds.rows(Subset::Train);
    let (xv, yv, _) = ds.rows(Subset::Valid);
    let result = grid_search(&xt, &yt, &xv, &yv, &ds.classes, &config.boost, &grid)?;
    let model = crate::boostlab::train_boosted(&xt, &yt, &ds.classes, result.best_params())?;
    w.write("tuned_params.json", serde_json::to_string_pretty(&result).expect("serializes"))?;
    w.write("model_boost_tuned.json", model.to_json())
}

/// A trained model of either kind.
pub(crate) enum AnyModel {
    Boost(BoostedModel),
    Logreg(LogRegModel),
}

impl AnyModel {
    fn predict(&self, x: &crate::linalg::Matrix) -> Result<Vec<usize>> {
        Ok(match self {
            AnyModel::Boost(m) => m.predict_classes(x)?,
            AnyModel::Logreg(m) => m.predict_classes(x)?,
        })
    }
}

pub(crate) const MODELS: [(&str, &str); 3] =
    [("boost", "model_boost.json"), ("logreg", "model_logreg.json"), ("boost_tuned", "model_boost_tuned.json")];

pub(crate) fn load_model(config: &ExperimentConfig, name: &str, file: &str) -> Result<Option<AnyModel>> {
    let path = config.output_dir.join(file);
    if !path.is_file() {
        return Ok(None);
    }
    let text = read(&path)?;
    Ok(Some(if name == "logreg" { AnyModel::Logreg(LogRegModel::from_json(&text)?) } else { AnyModel::Boost(BoostedModel::from_json(&text)?) }))
}

pub(crate) fn eval(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let ds = build_dataset(config)?;
    let mut any = false;
    for (name, file) in MODELS {
        let Some(model) = load_model(config, name, file)? else { continue };
        any = true;
        for subset in Subset::ALL {
            let (x, y, _) = ds.rows(subset);
            if y.is_empty() {
                continue;
            }
            let predicted = model.predict(&x)?;
            let r = report(&confusion_indices(&y, &predicted, ds.classes.clone())?)?;
            let stem = format!("report_{name}_{}", subset.as_str());
            w.write(&format!("{stem}.txt"), r.render_text())?;
            w.write(&format!("{stem}.csv"), r.render_csv())?;
            w.write(&format!("{stem}.json"), r.render_json())?;
        }
    }
    if !any {
        return Err(PipelineError::MissingArtifact { artifact: "a trained model".into(), stage: "train".into() });
    }
    Ok(())
}

pub(crate) fn attribute(config: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<()> {
    let ds = build_dataset(config)?;
    let top_k = config.attribute.top_k;
    let path = require(&config.output_dir, "model_boost.json", "train --model boost")?;
    let model = BoostedModel::from_json(&read(&path)?)?;
    let ranking = rank_tokens_gain(&model, &ds.layout, top_k)?;
    w.write("rankings_gain.csv", ranking.to_csv())?;
    w.write("rankings_gain.md", ranking.to_markdown())?;
    if let Some(AnyModel::Logreg(lr)) = load_model(config, "logreg", "model_logreg.json")? {
        let ranking = rank_tokens_logreg(&lr, &ds.layout, top_k)?;
        w.write("rankings_logreg.csv", ranking.to_csv())?;
        w.write("rankings_logreg.md", ranking.to_markdown())?;
    }

    // explain the predicted class of every test finding
    let explainer = PathExplainer::new(&model);
    let idx = ds.indices(Subset::Test);
    let mut attributions = Vec::with_capacity(idx.len());
    for &i in &idx {
        let row = ds.x.row(i);
        let margins = model.margins(row)?;
        let class = model.predict_class(row)?;
        let a = explainer.explain(row, class)?;
        let gap = (a.reconstruct() - margins[class]).abs();
        if !(gap <= 1e-9) {
            return Err(PipelineError::Numeric(format!("attribution of {} misses its margin by {gap}", ds.ids[i])));
        }
        attributions.push(a);
    }
    let ids: Vec<String> = idx.iter().map(|&i| ds.ids[i].clone()).collect();
    w.write("attributions.jsonl", attributions_jsonl(&ids, &attributions, &ds.layout, &model.classes))?;
    let mut csv = String::from("block,mean_abs_contribution\n");
    for (block, v) in block_summary(&attributions, &ds.layout) {
        csv.push_str(&format!("{block},{}\n", fmt_f64(v)));
    }
    w.write("block_summary.csv", csv)
}
