use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_boosted, BoostError, BoostParams, Result};
use crate::linalg::Matrix;

/// Candidate values per hyperparameter. A missing list means "use the base
/// value".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneGrid {
    #[serde(default)]
    pub learning_rate: Vec<f64>,
    #[serde(default)]
    pub max_depth: Vec<usize>,
    #[serde(default)]
    pub rounds: Vec<usize>,
    #[serde(default)]
    pub lambda: Vec<f64>,
}

/// Parses a TOML grid such as
///
/// ```toml
/// learning_rate = [0.1, 0.3]
/// max_depth = [3, 6]
/// rounds = [50, 100]
/// lambda = [1.0]
/// ```
pub fn parse_grid(text: &str) -> Result<TuneGrid> {
    let grid: TuneGrid = toml::from_str(text).map_err(|e| BoostError::Grid(e.message().to_string()))?;
    let probe = BoostParams::default();
    for &eta in &grid.learning_rate {
        BoostParams { learning_rate: eta, ..probe.clone() }.validate().map_err(|e| BoostError::Grid(e.to_string()))?;
    }
    for &lambda in &grid.lambda {
        BoostParams { lambda, ..probe.clone() }.validate().map_err(|e| BoostError::Grid(e.to_string()))?;
    }
    if grid.max_depth.contains(&0) {
        return Err(BoostError::Grid("max_depth values must be at least 1".into()));
    }
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub params: BoostParams,
    pub valid_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    /// One record per grid point, ordered by learning rate, depth, lambda,
    /// then rounds.
    pub records: Vec<TuneRecord>,
    pub best: usize,
}

impl TuneResult {
    pub fn best_params(&self) -> &BoostParams {
        &self.records[self.best].params
    }
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Grid search by validation accuracy; ties keep the earliest grid point.
/// Each (learning rate, depth, lambda) combination is trained once with the
/// largest round count and evaluated at every requested count by truncation,
/// which gives the same model as training with fewer rounds.
pub fn tune(
    x_train: &Matrix,
    y_train: &[usize],
    x_valid: &Matrix,
    y_valid: &[usize],
    classes: &[String],
    base: &BoostParams,
    grid: &TuneGrid,
) -> Result<TuneResult> {
    if y_valid.is_empty() || x_valid.rows() != y_valid.len() {
        return Err(BoostError::Grid("validation set is empty or misaligned".into()));
    }
    let mut rounds = or_base(&grid.rounds, base.rounds);
    rounds.sort_unstable();
    rounds.dedup();
    let max_rounds = *rounds.last().expect("nonempty");
    let mut combos = Vec::new();
    for &eta in &or_base(&grid.learning_rate, base.learning_rate) {
        for &depth in &or_base(&grid.max_depth, base.max_depth) {
            for &lambda in &or_base(&grid.lambda, base.lambda) {
                combos.push(BoostParams { learning_rate: eta, max_depth: depth, lambda, rounds: max_rounds, ..base.clone() });
            }
        }
    }
    let per_combo: Vec<Vec<TuneRecord>> = combos
        .par_iter()
        .map(|params| {
            let full = train_boosted(x_train, y_train, classes, params)?;
            rounds
                .iter()
                .map(|&r| {
                    let model = full.truncated(r);
                    let predicted = model.predict_classes(x_valid)?;
                    let hits = predicted.iter().zip(y_valid).filter(|(p, t)| p == t).count();
                    Ok(TuneRecord { params: model.params.clone(), valid_accuracy: hits as f64 / y_valid.len() as f64 })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let records: Vec<TuneRecord> = per_combo.into_iter().flatten().collect();
    let mut best = 0;
    for (i, r) in records.iter().enumerate() {
        if r.valid_accuracy > records[best].valid_accuracy {
            best = i;
        }
    }
    Ok(TuneResult { records, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("learning_rate = [0.1, 0.3]\nrounds = [5, 10]\n").unwrap();
        assert_eq!(g.learning_rate, vec![0.1, 0.3]);
        assert!(g.max_depth.is_empty());
        assert!(parse_grid("eta = [0.1]").is_err());
        assert!(parse_grid("learning_rate = [2.0]").is_err());
        assert!(parse_grid("max_depth = [0]").is_err());
        assert!(parse_grid("rounds = 5").is_err());
    }

    #[test]
    fn truncation_equals_shorter_training() {
        let rows: Vec<[f64; 2]> = (0..30).map(|i| [(i % 6) as f64, (i % 5) as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<usize> = (0..30).map(|i| usize::from(i % 6 > 2)).collect();
        let classes = vec!["a".to_string(), "b".to_string()];
        let long = train_boosted(&x, &y, &classes, &BoostParams { rounds: 8, ..Default::default() }).unwrap();
        let short = train_boosted(&x, &y, &classes, &BoostParams { rounds: 3, ..Default::default() }).unwrap();
        assert_eq!(long.truncated(3), short);

        let grid = TuneGrid { learning_rate: vec![0.1, 0.3], rounds: vec![3, 8], ..Default::default() };
        let r = tune(&x, &y, &x, &y, &classes, &BoostParams::default(), &grid).unwrap();
        assert_eq!(r.records.len(), 4);
        assert!(r.records.iter().all(|rec| rec.valid_accuracy <= r.records[r.best].valid_accuracy));
        assert_eq!(r, tune(&x, &y, &x, &y, &classes, &BoostParams::default(), &grid).unwrap());
    }
}
