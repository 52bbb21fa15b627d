use std::path::Path;

use findingscope::corpus::{generate_synthetic_corpus, write_findings_csv, write_findings_jsonl, LabelProfile};
use findingscope::embedspace::{write_emb1, EmbeddingMatrix};
use findingscope::metricsuite::ClassificationReport;
use findingscope::pipeline::{
    build_dataset, plan, render_report, run_all, run_stage, ExperimentConfig, ModelKind, PipelineError, RunManifest, Stage, Target,
};
use findingscope::util::sha256_hex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig { output_dir: dir.to_path_buf(), ..ExperimentConfig::default() };
    c.synth.n = 120;
    c.embed.dim = 16;
    c.boost.rounds = 10;
    c.boost.max_depth = 3;
    c.logreg.epochs = 50;
    c.cluster.n_init = 2;
    c
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn full_run_writes_every_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = small(dir);
    let manifest = run_all(&config).unwrap();

    // 14 values of k by 5 algorithms
    for method in ["majority", "share", "sampled"] {
        let table = read(dir, &format!("accuracy_grid_{method}.csv"));
        let rows: Vec<&str> = table.lines().collect();
        assert_eq!(rows[0], "k,agglomerative_ward,birch,kmeans,minibatch,spectral");
        assert_eq!(rows.len(), 15);
        assert!(rows[1..].iter().all(|r| r.split(',').count() == 6 && !r.contains(",,")));
        for algo in ["agglomerative_ward", "birch", "kmeans", "minibatch", "spectral"] {
            let per_label = read(dir, &format!("label_accuracy_{method}_{algo}.csv"));
            assert!(per_label.starts_with("k,documentation,model_input,"));
            assert_eq!(per_label.lines().count(), 15);
        }
    }
    for model in ["boost", "logreg"] {
        for subset in ["train", "valid", "test"] {
            for ext in ["txt", "csv", "json"] {
                assert!(dir.join(format!("report_{model}_{subset}.{ext}")).is_file());
            }
        }
    }
    for name in ["rankings_gain.csv", "rankings_gain.md", "rankings_logreg.csv", "attributions.jsonl", "block_summary.csv"] {
        assert!(dir.join(name).is_file(), "{name}");
    }
    assert!(read(dir, "rankings_gain.csv").starts_with("class,rank,token,score\n"));

    let report = read(dir, "report.md");
    for section in [
        "## Clustering sweep",
        "## Cluster-to-label accuracy",
        "## Per-label accuracy",
        "## Classification reports",
        "## Token rankings",
        "## Attribution by feature block",
    ] {
        assert!(report.contains(section), "{section}");
    }
    assert!(!report.contains("stage missing"));

    // every recorded hash matches the file on disk
    for record in manifest.stages.values() {
        for (name, hash) in &record.artifacts {
            assert_eq!(&sha256_hex(&std::fs::read(dir.join(name)).unwrap()), hash, "{name}");
        }
    }
    assert_eq!(manifest.config, config);
}

#[test]
fn csv_cells_parse_back_to_the_same_values() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut config = small(dir);
    config.cluster.algorithms = vec!["kmeans".into()];
    config.cluster.k_max = 4;
    run_all(&config).unwrap();

    let json: ClassificationReport = serde_json::from_str(&read(dir, "report_boost_test.json")).unwrap();
    let csv = read(dir, "report_boost_test.csv");
    let acc_row = csv.lines().find(|l| l.starts_with("accuracy,")).unwrap();
    assert_eq!(acc_row.split(',').nth(3).unwrap().parse::<f64>().unwrap(), json.accuracy);
    for (line, class) in csv.lines().skip(1).zip(&json.classes) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], class.label);
        assert_eq!(cells[1].parse::<f64>().unwrap(), class.precision);
        assert_eq!(cells[2].parse::<f64>().unwrap(), class.recall);
        assert_eq!(cells[3].parse::<f64>().unwrap(), class.f1);
    }

    // totals in the grid equal the last column of the per-label table
    let grid = read(dir, "accuracy_grid_share.csv");
    let per_label = read(dir, "label_accuracy_share_kmeans.csv");
    for (g, p) in grid.lines().skip(1).zip(per_label.lines().skip(1)) {
        let total: f64 = g.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(p.split(',').next_back().unwrap().parse::<f64>().unwrap(), total);
    }
}

#[test]
fn rerun_reproduces_manifest_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small(tmp.path());
    config.cluster.algorithms = vec!["kmeans".into(), "birch".into()];
    config.cluster.k_max = 5;
    let first = run_all(&config).unwrap();
    let second = run_all(&config).unwrap();
    assert_eq!(first.hashes(), second.hashes());
}

#[test]
fn missing_dependency_names_the_stage_to_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small(tmp.path());
    let err = run_stage(&config, Stage::Sweep).unwrap_err();
    assert!(err.to_string().contains("synth"), "{err}");
    assert_eq!(err.exit_code(), 3);

    run_stage(&config, Stage::Synth).unwrap();
    run_stage(&config, Stage::Split).unwrap();
    let err = run_stage(&config, Stage::Train(ModelKind::Boost)).unwrap_err();
    assert!(err.to_string().contains("preprocess"), "{err}");
    let err = run_stage(&config, Stage::Attribute).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn config_violation_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let mut config = small(&out);
    config.cluster.k_min = 6;
    config.cluster.k_max = 3;
    let err = run_stage(&config, Stage::Synth).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists());

    let mut config = small(&out);
    config.boost.learning_rate = 1.5;
    assert_eq!(run_all(&config).unwrap_err().exit_code(), 2);
    assert!(!out.exists());
}

#[test]
fn report_marks_missing_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small(tmp.path());
    config.cluster.algorithms = vec!["kmeans".into()];
    config.cluster.k_max = 3;
    for stage in [Stage::Synth, Stage::Split, Stage::Preprocess, Stage::EmbedHash, Stage::Sweep, Stage::Assign] {
        run_stage(&config, stage).unwrap();
    }
    run_stage(&config, Stage::Report).unwrap();
    let report = read(tmp.path(), "report.md");
    assert!(report.contains("| 2 |"));
    // reports, rankings and block summary are still missing
    assert_eq!(report.matches("stage missing").count(), 3);
    assert_eq!(render_report(tmp.path()).unwrap(), report);
}

fn random_emb(ids: &[String], dim: usize, seed: u64, name: &str) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    for _ in ids {
        let row: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.extend(row.iter().map(|v| v / norm));
    }
    EmbeddingMatrix::new(ids.to_vec(), dim, values, name).unwrap()
}

#[test]
fn external_embeddings_are_aligned_by_id() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let findings = generate_synthetic_corpus(60, 3, &LabelProfile::reference()).unwrap();
    let findings_path = tmp.path().join("findings.jsonl");
    std::fs::write(&findings_path, write_findings_jsonl(&findings)).unwrap();

    // rows deliberately in reverse corpus order
    let mut ids: Vec<String> = findings.iter().map(|f| f.id.clone()).collect();
    ids.reverse();
    let title = random_emb(&ids, 5, 1, "all-MiniLM-L6-v2");
    let description = random_emb(&ids, 7, 2, "all-MiniLM-L6-v2");
    let (tp, dp) = (tmp.path().join("title.emb"), tmp.path().join("description.emb"));
    std::fs::write(&tp, write_emb1(&title).unwrap()).unwrap();
    std::fs::write(&dp, write_emb1(&description).unwrap()).unwrap();

    let mut config = small(&out);
    config.data.findings = Some(findings_path);
    config.data.title_embeddings = Some(tp.clone());
    config.data.description_embeddings = Some(dp);
    config.cluster.k_max = 4;
    let stages = plan(&config);
    assert_eq!(stages[0], Stage::Ingest);
    assert!(!stages.contains(&Stage::EmbedHash));
    run_all(&config).unwrap();
    assert!(!out.join("title.emb").exists());

    let ds = build_dataset(&config).unwrap();
    let emb = ds.layout.range(findingscope::embedspace::Block::TitleEmbedding);
    assert_eq!(emb.len(), 5);
    let first = &findings[0].id;
    let row = title.position(first).unwrap();
    assert_eq!(&ds.x.row(0)[emb], title.row(row));

    // an embedding file that lacks a finding is a data error
    let short = random_emb(&ids[1..], 5, 1, "m");
    std::fs::write(&tp, write_emb1(&short).unwrap()).unwrap();
    let err = run_stage(&config, Stage::Train(ModelKind::Logreg)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("no row for finding"), "{err}");
}

#[test]
fn csv_findings_ingest_to_canonical_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    let findings = generate_synthetic_corpus(30, 9, &LabelProfile::uniform()).unwrap();
    let path = tmp.path().join("findings.csv");
    std::fs::write(&path, write_findings_csv(&findings)).unwrap();
    let mut config = small(&tmp.path().join("out"));
    config.data.findings = Some(path);
    run_stage(&config, Stage::Ingest).unwrap();
    assert_eq!(read(&config.output_dir, "findings.jsonl"), write_findings_jsonl(&findings));
}

#[test]
fn tune_and_evaluate_the_tuned_model() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid.toml");
    std::fs::write(&grid, "learning_rate = [0.1, 0.5]\nmax_depth = [2]\nrounds = [3, 6]\n").unwrap();
    let mut config = small(&tmp.path().join("out"));
    config.tune.grid = Some(grid);
    for stage in [Stage::Synth, Stage::Split, Stage::Preprocess, Stage::EmbedHash, Stage::Tune, Stage::Eval] {
        run_stage(&config, stage).unwrap();
    }
    let tuned: serde_json::Value = serde_json::from_str(&read(&config.output_dir, "tuned_params.json")).unwrap();
    assert_eq!(tuned["records"].as_array().unwrap().len(), 4);
    assert!(config.output_dir.join("report_boost_tuned_test.txt").is_file());
    assert!(!config.output_dir.join("report_boost_test.txt").exists());
}

#[test]
fn severity_target() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small(tmp.path());
    config.target = Target::Severity;
    config.split.stratify = findingscope::corpus::StratifyOn::Severity;
    for stage in [Stage::Synth, Stage::Split, Stage::Preprocess, Stage::EmbedHash, Stage::Train(ModelKind::Logreg), Stage::Eval] {
        run_stage(&config, stage).unwrap();
    }
    let ds = build_dataset(&config).unwrap();
    assert_eq!(ds.classes, config.data.severity_levels);
    assert!(read(tmp.path(), "report_logreg_test.csv").lines().count() > 3);
    let manifest = RunManifest::load(tmp.path()).unwrap();
    assert!(manifest.stages.contains_key("train-logreg"));
}
