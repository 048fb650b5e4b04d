use serde::Serialize;

use super::{
    train_mlp, train_random_forest, BinaryClassifier, Dataset, ForestConfig, MlpConfig, MlpModel,
    ModelError, RandomForestModel,
};

/// Hyperparameters that can train a binary classifier.
pub trait Trainable: Clone {
    type Model: BinaryClassifier;

    fn train(&self, data: &Dataset) -> Result<Self::Model, ModelError>;
}

impl Trainable for MlpConfig {
    type Model = MlpModel;

    fn train(&self, data: &Dataset) -> Result<MlpModel, ModelError> {
        train_mlp(data, self)
    }
}

impl Trainable for ForestConfig {
    type Model = RandomForestModel;

    fn train(&self, data: &Dataset) -> Result<RandomForestModel, ModelError> {
        train_random_forest(data, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult<H> {
    pub best_index: usize,
    pub best: H,
    /// Mean fold accuracy of every grid point, in grid order.
    pub scores: Vec<f64>,
}

/// Mean stratified k-fold accuracy of each grid point. The first point with
/// the highest mean wins.
pub fn grid_search<H: Trainable>(
    data: &Dataset,
    grid: &[H],
    folds: usize,
) -> Result<GridResult<H>, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::InvalidConfig("grid is empty".into()));
    }
    if folds < 2 {
        return Err(ModelError::InvalidConfig("grid search needs at least 2 folds".into()));
    }
    data.check_two_classes()?;
    if data.len() < folds {
        return Err(ModelError::DegenerateDataset(format!(
            "{} rows cannot fill {folds} folds",
            data.len()
        )));
    }
    let fold_rows = data.stratified_folds(folds);
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|k| {
            let train: Vec<usize> = fold_rows
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            (data.subset(&train), data.subset(&fold_rows[k]))
        })
        .collect();

    let mut scores = Vec::with_capacity(grid.len());
    for point in grid {
        let mut total = 0.0;
        for (train, test) in &splits {
            let model = point.train(train)?;
            let correct = test.rows.iter().filter(|(x, y)| model.predict(x) == *y).count();
            total += correct as f64 / test.len().max(1) as f64;
        }
        scores.push(total / folds as f64);
    }
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(GridResult {
        best_index,
        best: grid[best_index].clone(),
        scores,
    })
}
