//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use findingscope::attriblab::PathExplainer;
use findingscope::boostlab::{leaf_weight, softmax_grad_hess, softmax_loss, train_boosted, train_boosted_traced, BoostParams, BoostedModel};
use findingscope::clusterlab::{jacobi_eigen, kmeans, silhouette, KMeansOptions, WardTree};
use findingscope::corpus::Subset;
use findingscope::dimassign::{majority_accuracy, majority_assign, sampled_share_assign, share_accuracy, ClusterLabelProfile};
use findingscope::linalg::Matrix;
use findingscope::metricsuite::{report, ConfusionMatrix};
use findingscope::pipeline::{build_dataset, run_all, run_stage, ExperimentConfig, ModelKind, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn clustering_oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let opts = KMeansOptions { n_init: 10, ..KMeansOptions::default() };
    let mut worst = 0.0f64;
    let instances = 24;
    for t in 0..instances {
        let n = rng.gen_range(4..=8);
        let x = random_points(&mut rng, n, 2);
        let k = 2 + t % 2;
        let fit = kmeans(&x, k, t as u64, &opts).map_err(|e| e.to_string())?;
        let found = findingscope::clusterlab::within_sse(&x, &fit.assignment.labels, k);
        worst = worst.max(found - exhaustive_min_sse(&x, k));
    }
    let mut ward_ok = true;
    for _ in 0..20 {
        let n = rng.gen_range(2..=6);
        let x = random_points(&mut rng, n, 2);
        let tree = WardTree::build(&x).map_err(|e| e.to_string())?;
        let expected = ward_oracle(&x);
        ward_ok &= tree.merges().len() == expected.len()
            && tree
                .merges()
                .iter()
                .zip(&expected)
                .all(|(m, &(a, b, d))| m.a == a && m.b == b && (m.delta - d).abs() <= 1e-9 * d.abs().max(1.0));
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && ward_ok && secs < 10.0,
        format!("{instances} k-means instances, worst SSE gap {worst:.2e}; Ward merges match: {ward_ok}; {secs:.2}s"),
    )
}

fn silhouette_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(3..=50);
        let k = rng.gen_range(2..=(n - 1).min(6));
        let x = random_points(&mut rng, n, 3);
        let labels = random_labels(&mut rng, n, k);
        let got = silhouette(&x, &labels).map_err(|e| e.to_string())?.mean_score;
        worst = worst.max((got - brute_silhouette(&x, &labels)).abs());
    }
    check(worst <= 1e-9, format!("50 instances, worst difference {worst:.2e}"))
}

fn eigensolver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut residual = 0.0f64;
    for _ in 0..100 {
        let a = random_symmetric(&mut rng, 8);
        let e = jacobi_eigen(&a, 1e-10).map_err(|e| e.to_string())?;
        for j in 0..8 {
            let v: Vec<f64> = (0..8).map(|i| e.vectors.row(i)[j]).collect();
            let av = a.mul_vec(&v);
            for i in 0..8 {
                residual = residual.max((av[i] - e.values[j] * v[i]).abs());
            }
        }
    }
    let mut closed = 0.0f64;
    for _ in 0..100 {
        let (p, q, r) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let e = jacobi_eigen(&Matrix::from_rows(&[[p, q], [q, r]]), 1e-10).map_err(|e| e.to_string())?;
        let mid = (p + r) / 2.0;
        let rad = (((p - r) / 2.0).powi(2) + q * q).sqrt();
        closed = closed.max((e.values[0] - (mid - rad)).abs()).max((e.values[1] - (mid + rad)).abs());
    }
    check(
        residual <= 1e-8 && closed <= 1e-10,
        format!("8x8 worst residual {residual:.2e}; 2x2 worst eigenvalue error {closed:.2e}"),
    )
}

fn profile_of(counts: &[Vec<usize>]) -> (ClusterLabelProfile, Vec<usize>) {
    let (mut clusters, mut targets) = (Vec::new(), Vec::new());
    for (c, row) in counts.iter().enumerate() {
        for (d, &v) in row.iter().enumerate() {
            for _ in 0..v {
                clusters.push(c);
                targets.push(d);
            }
        }
    }
    let names = labels(counts[0].len());
    (ClusterLabelProfile::from_points(&clusters, counts.len(), &targets, names).unwrap(), targets)
}

fn majority_total(p: &ClusterLabelProfile) -> f64 {
    majority_accuracy(p, &majority_assign(p)).unwrap().total
}

fn assignment_methods() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mc_gap = 0.0f64;
    for _ in 0..20 {
        let k = rng.gen_range(2..=10);
        let counts = random_counts(&mut rng, k, 9, 20);
        let (p, targets) = profile_of(&counts);
        let (mut draws, mut hits, mut seed) = (0usize, 0usize, 0u64);
        while draws < 100_000 {
            let pred = sampled_share_assign(&p, seed);
            hits += pred.iter().zip(&targets).filter(|(a, b)| a == b).count();
            draws += pred.len();
            seed += 1;
        }
        mc_gap = mc_gap.max((hits as f64 / draws as f64 - share_accuracy(&p).total).abs());
    }
    let mut refinement_ok = true;
    for _ in 0..100 {
        let k = rng.gen_range(1..=8);
        let counts = random_counts(&mut rng, k, 9, 15);
        let (p, _) = profile_of(&counts);
        let Some(c) = (0..k).filter(|&c| p.cluster_size(c) >= 2).next_back() else { continue };
        let mut refined = counts.clone();
        let (kept, moved): (Vec<usize>, Vec<usize>) = loop {
            let moved: Vec<usize> = counts[c].iter().map(|&v| rng.gen_range(0..=v)).collect();
            let kept: Vec<usize> = counts[c].iter().zip(&moved).map(|(v, m)| v - m).collect();
            if kept.iter().sum::<usize>() > 0 && moved.iter().sum::<usize>() > 0 {
                break (kept, moved);
            }
        };
        refined[c] = kept;
        refined.push(moved);
        refinement_ok &= majority_total(&profile_of(&refined).0) >= majority_total(&p) - 1e-12;
    }
    let mut share_ok = true;
    for _ in 0..100 {
        let k = rng.gen_range(1..=12);
        let (p, _) = profile_of(&random_counts(&mut rng, k, 9, 30));
        share_ok &= share_accuracy(&p).total <= majority_total(&p) + 1e-12;
    }
    check(
        mc_gap <= 0.01 && refinement_ok && share_ok,
        format!("share vs Monte Carlo worst gap {mc_gap:.4}; refinement monotone: {refinement_ok}; share <= majority: {share_ok}"),
    )
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn majority_zero_labels(run: &Path) -> Outcome {
    let majority = read_csv(&run.join("label_accuracy_majority_kmeans.csv"));
    let share = read_csv(&run.join("label_accuracy_share_kmeans.csv"));
    let header = &majority[0];
    for (m, s) in majority[1..].iter().zip(&share[1..]) {
        let zero: Vec<usize> = (1..header.len() - 1).filter(|&j| m[j] == "0.0").collect();
        if zero.len() == 3 {
            let names: Vec<&str> = zero.iter().map(|&j| header[j].as_str()).collect();
            let share_values: Vec<f64> = zero.iter().map(|&j| s[j].parse().unwrap()).collect();
            return check(
                share_values.iter().all(|&v| v > 0.0),
                format!("k-means at k = {}: never modal {names:?}, share accuracy {share_values:.3?}", m[0]),
            );
        }
    }
    Err("no k-means clustering leaves exactly three labels without a modal cluster".into())
}

fn boosting_numerics(run: &Path, config: &ExperimentConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut fd_worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(2..=9);
        let scores: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let label = rng.gen_range(0..k);
        let pairs = softmax_grad_hess(label, &scores);
        for c in 0..k {
            let f = |t: f64| {
                let mut s = scores.clone();
                s[c] += t;
                softmax_loss(label, &s)
            };
            let (g, h) = derivatives(f, 1e-2);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            fd_worst = fd_worst.max(rel(pairs[c].g, g)).max(rel(pairs[c].h, h));
        }
    }

    // replay training of the pipeline model and recompute every leaf
    let ds = build_dataset(config).map_err(|e| e.to_string())?;
    let (x, y, _) = ds.rows(Subset::Train);
    let model = BoostedModel::from_json(&std::fs::read_to_string(run.join("model_boost.json")).unwrap()).map_err(|e| e.to_string())?;
    let lambda = model.params.lambda;
    let mut scores: Vec<Vec<f64>> = vec![model.base_score.clone(); x.rows()];
    let (mut leaves, mut exact) = (0usize, true);
    for r in 0..model.n_rounds() {
        let pairs: Vec<_> = y.iter().zip(&scores).map(|(&l, s)| softmax_grad_hess(l, s)).collect();
        for c in 0..model.classes.len() {
            let tree = &model.trees[c][r];
            let mut sums: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for i in 0..x.rows() {
                let e = sums.entry(tree.leaf_index(x.row(i))).or_insert((0.0, 0.0));
                e.0 += pairs[i][c].g;
                e.1 += pairs[i][c].h;
            }
            for (&leaf, &(g, h)) in &sums {
                leaves += 1;
                let findingscope::boostlab::Node::Leaf { weight, .. } = tree.nodes[leaf] else { unreachable!() };
                exact &= weight == leaf_weight(g, h, lambda).unwrap();
            }
            for (i, s) in scores.iter_mut().enumerate() {
                s[c] += model.params.learning_rate * tree.predict(x.row(i));
            }
        }
    }

    let params = BoostParams { rounds: 50, ..config.boost.clone() };
    let (_, trace) = train_boosted_traced(&x, &y, &ds.classes, &params).map_err(|e| e.to_string())?;
    let increases = trace.objective.windows(2).filter(|w| w[1] > w[0]).count();
    check(
        fd_worst <= 1e-5 && exact && increases == 0,
        format!(
            "finite-difference worst relative error {fd_worst:.2e}; {leaves} leaves exact: {exact}; objective increases in {increases} of 50 rounds"
        ),
    )
}

fn train_saturation(dir: &Path) -> Outcome {
    let mut config = ExperimentConfig { output_dir: dir.to_path_buf(), ..ExperimentConfig::default() };
    config.synth.n = 300;
    config.synth.separable = true;
    config.boost.rounds = 200;
    let started = Instant::now();
    for stage in [Stage::Synth, Stage::Split, Stage::Preprocess, Stage::EmbedHash, Stage::Train(ModelKind::Boost)] {
        run_stage(&config, stage).map_err(|e| e.to_string())?;
    }
    let secs = started.elapsed().as_secs_f64();
    let ds = build_dataset(&config).map_err(|e| e.to_string())?;
    let (x, y, _) = ds.rows(Subset::Train);
    let model = BoostedModel::from_json(&std::fs::read_to_string(dir.join("model_boost.json")).unwrap()).map_err(|e| e.to_string())?;
    let first = (1..=model.n_rounds()).find(|&r| {
        let pred = model.truncated(r).predict_classes(&x).unwrap();
        pred == y
    });
    check(
        first.is_some() && secs < 30.0,
        format!("{} training rows; accuracy 1.000 first reached at round {first:?}; {secs:.1}s", y.len()),
    )
}

fn metrics() -> Outcome {
    let cm = ConfusionMatrix { labels: labels(2), counts: vec![vec![3, 2], vec![1, 4]] };
    let r = report(&cm).map_err(|e| e.to_string())?;
    let c = &r.classes[0];
    let hand = (c.precision - 0.75).abs() <= 1e-9
        && (c.recall - 0.6).abs() <= 1e-9
        && (c.f1 - 2.0 / 3.0).abs() <= 1e-9
        && (r.accuracy - 0.7).abs() <= 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(2..=9);
        let counts = (0..k).map(|_| (0..k).map(|_| rng.gen_range(0..20)).collect()).collect();
        let cm = ConfusionMatrix { labels: labels(k), counts };
        if cm.total() == 0 {
            continue;
        }
        let r = report(&cm).map_err(|e| e.to_string())?;
        worst = worst.max((r.weighted_avg.recall - r.accuracy).abs());
    }
    check(
        hand && worst <= 1e-12,
        format!(
            "binary example P={:.4} R={:.4} F1={:.4} acc={:.4}; weighted recall vs accuracy worst gap {worst:.2e}",
            c.precision, c.recall, c.f1, r.accuracy
        ),
    )
}

fn attribution(config: &ExperimentConfig) -> Outcome {
    let ds = build_dataset(config).map_err(|e| e.to_string())?;
    let (x, y, _) = ds.rows(Subset::Train);
    // two classes keep one tree per round, so three rounds give three trees
    let keep: Vec<usize> = (0..x.rows()).filter(|&i| y[i] < 2).collect();
    let xs = x.select_rows(&keep);
    let ys: Vec<usize> = keep.iter().map(|&i| y[i]).collect();
    let params = BoostParams { rounds: 3, max_depth: 4, ..BoostParams::default() };
    let model = train_boosted(&xs, &ys, &ds.classes[..2], &params).map_err(|e| e.to_string())?;
    let explainer = PathExplainer::new(&model);
    let (xt, _, _) = ds.rows(Subset::Test);
    let mut worst = 0.0f64;
    let instances = 50.min(xt.rows());
    for i in 0..instances {
        let margins = model.margins(xt.row(i)).map_err(|e| e.to_string())?;
        for (c, m) in margins.iter().enumerate() {
            let a = explainer.explain(xt.row(i), c).map_err(|e| e.to_string())?;
            worst = worst.max((a.reconstruct() - m).abs());
        }
    }
    check(
        instances == 50 && worst <= 1e-9,
        format!("{instances} instances, {} trees per class, worst gap {worst:.2e}", model.n_rounds()),
    )
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let started = Instant::now();
    for dir in [a, b] {
        let config = ExperimentConfig { output_dir: dir.to_path_buf(), ..ExperimentConfig::default() };
        run_all(&config).map_err(|e| e.to_string())?;
    }
    let secs = started.elapsed().as_secs_f64();
    let (x, y) = (artifacts(a), artifacts(b));
    let differing: Vec<&String> = x.keys().filter(|k| x.get(*k) != y.get(*k)).collect();
    check(
        x.len() == y.len() && differing.is_empty() && secs < 300.0,
        format!("{} artifacts, differing {differing:?}; two runs took {secs:.1}s", x.len()),
    )
}

fn learnability(run: &Path) -> Outcome {
    let text = std::fs::read_to_string(run.join("report_boost_test.json")).map_err(|e| e.to_string())?;
    let r: findingscope::metricsuite::ClassificationReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    check(r.accuracy >= 0.75, format!("boosted test accuracy {:.4} on {} findings", r.accuracy, r.total))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let (run_a, run_b) = (tmp.path().join("a"), tmp.path().join("b"));
    let config_a = ExperimentConfig { output_dir: run_a.clone(), ..ExperimentConfig::default() };

    let mut results: Vec<(&str, Outcome)> = vec![
        ("clustering-oracles", clustering_oracles()),
        ("silhouette-oracle", silhouette_oracle()),
        ("jacobi-eigensolver", eigensolver()),
        ("assignment-methods", assignment_methods()),
        ("end-to-end-determinism", determinism(&run_a, &run_b)),
    ];
    let have_run = results.last().is_some_and(|(_, r)| r.is_ok()) || run_a.join("report_boost_test.json").is_file();
    let need_run = |f: &dyn Fn() -> Outcome| if have_run { f() } else { Err("full pipeline run failed".into()) };
    results.push(("majority-zero-labels", need_run(&|| majority_zero_labels(&run_a))));
    results.push(("boosting-numerics", need_run(&|| boosting_numerics(&run_a, &config_a))));
    results.push(("train-saturation", train_saturation(&tmp.path().join("separable"))));
    results.push(("metrics", metrics()));
    results.push(("attribution-local-accuracy", need_run(&|| attribution(&config_a))));
    results.push(("end-to-end-learnability", need_run(&|| learnability(&run_a))));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
