use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{accuracy, train, Architecture, Example, TrainConfig};
use crate::data::Label;
use crate::error::{Error, Result};
use crate::seed::{self, Stage};

/// One (architecture, hyperparameters) candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hidden: Vec<usize>,
    pub config: TrainConfig,
}

/// Cartesian grid description: every hidden-layer list crossed with every learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub hidden_layers: Vec<Vec<usize>>,
    pub learning_rates: Vec<f64>,
    pub folds: usize,
    /// Base settings shared by every cell.
    pub train: TrainConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            hidden_layers: vec![vec![32], vec![64], vec![64, 32], vec![128, 64]],
            learning_rates: vec![1e-3, 1e-4],
            folds: 3,
            train: TrainConfig::default(),
        }
    }
}

impl GridSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cells(&self) -> Vec<GridCell> {
        self.hidden_layers
            .iter()
            .flat_map(|h| {
                self.learning_rates.iter().map(move |&lr| GridCell {
                    hidden: h.clone(),
                    config: TrainConfig {
                        learning_rate: lr,
                        ..self.train.clone()
                    },
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: GridCell,
    pub parameter_count: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub folds: usize,
    pub results: Vec<CellResult>,
    pub best: usize,
    pub warnings: Vec<String>,
}

impl GridReport {
    pub fn best_cell(&self) -> &GridCell {
        &self.results[self.best].cell
    }
}

fn has_both_classes<'a>(mut labels: impl Iterator<Item = &'a Label>) -> bool {
    let first = match labels.next() {
        Some(l) => *l,
        None => return false,
    };
    labels.any(|l| *l != first)
}

/// k-fold cross-validated selection. Best = highest mean validation accuracy,
/// then fewer parameters, then lower learning rate, then grid order.
pub fn grid_search(
    data: &[Example],
    frames: usize,
    features: usize,
    cells: &[GridCell],
    folds: usize,
    fold_seed: u64,
) -> Result<GridReport> {
    if cells.is_empty() {
        return Err(Error::Config("grid has no cells".into()));
    }
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if data.len() < folds {
        return Err(Error::Data(format!(
            "{} examples cannot fill {folds} folds",
            data.len()
        )));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(fold_seed, Stage::Folds)));
    let mut assignment = vec![0usize; data.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }

    let mut warnings = Vec::new();
    let split = |k: usize| -> (Vec<Example>, Vec<Example>) {
        let (mut tr, mut va) = (Vec::new(), Vec::new());
        for (i, ex) in data.iter().enumerate() {
            if assignment[i] == k {
                va.push(*ex);
            } else {
                tr.push(*ex);
            }
        }
        (tr, va)
    };
    for k in 0..folds {
        let (tr, va) = split(k);
        if !has_both_classes(tr.iter().map(|e| &e.label)) {
            warnings.push(format!("fold {k}: training part has a single class"));
        }
        if !has_both_classes(va.iter().map(|e| &e.label)) {
            warnings.push(format!("fold {k}: validation part has a single class"));
        }
    }

    let mut results = Vec::with_capacity(cells.len());
    for cell in cells {
        let arch = Architecture::new(frames, features, cell.hidden.clone())?;
        let mut fold_accuracies = Vec::with_capacity(folds);
        for k in 0..folds {
            let (tr, va) = split(k);
            let config = TrainConfig {
                seed: seed::derive_indexed(cell.config.seed, k as u64),
                batch_size: cell.config.batch_size.min(tr.len()),
                ..cell.config.clone()
            };
            let model = train(&tr, &arch, &config)?;
            fold_accuracies.push(accuracy(&model.network, &va)?);
        }
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds as f64;
        results.push(CellResult {
            cell: cell.clone(),
            parameter_count: arch.parameter_count(),
            fold_accuracies,
            mean_accuracy,
        });
    }

    let mut best = 0;
    for (i, r) in results.iter().enumerate().skip(1) {
        let b = &results[best];
        let better = r.mean_accuracy > b.mean_accuracy
            || (r.mean_accuracy == b.mean_accuracy
                && (r.parameter_count < b.parameter_count
                    || (r.parameter_count == b.parameter_count
                        && r.cell.config.learning_rate < b.cell.config.learning_rate)));
        if better {
            best = i;
        }
    }
    Ok(GridReport {
        folds,
        results,
        best,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Vec<([f64; 2], Label)> {
        (0..30)
            .map(|i| {
                let s = if i % 3 == 0 { -1.0 } else { 1.0 };
                let x = [s * (1.0 + 0.1 * i as f64), s * 0.5];
                (x, if s > 0.0 { Label::Normal } else { Label::Compensatory })
            })
            .collect()
    }

    fn quick(lr: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            epochs: 20,
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn default_grid_has_eight_cells() {
        let cells = GridSpec::default().cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0].hidden, vec![32]);
        assert_eq!(cells[1].config.learning_rate, 1e-4);
    }

    #[test]
    fn singleton_grid_selects_its_cell() {
        let d = data();
        let ex: Vec<Example> = d.iter().map(|(x, l)| Example { input: x, label: *l }).collect();
        let cells = vec![GridCell {
            hidden: vec![3],
            config: quick(0.05),
        }];
        let r = grid_search(&ex, 1, 2, &cells, 3, 1).unwrap();
        assert_eq!(r.best, 0);
        assert_eq!(r.results[0].fold_accuracies.len(), 3);
    }

    #[test]
    fn identical_cells_pick_the_first() {
        let d = data();
        let ex: Vec<Example> = d.iter().map(|(x, l)| Example { input: x, label: *l }).collect();
        let cell = GridCell {
            hidden: vec![3],
            config: quick(0.05),
        };
        let r = grid_search(&ex, 1, 2, &[cell.clone(), cell], 3, 1).unwrap();
        assert_eq!(r.results[0].mean_accuracy, r.results[1].mean_accuracy);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn ties_prefer_smaller_then_slower() {
        // Zero learning signal: every cell scores the same majority-class accuracy.
        let x = [0.0, 0.0];
        let ex: Vec<Example> = (0..9)
            .map(|_| Example {
                input: &x,
                label: Label::Normal,
            })
            .collect();
        let cells = vec![
            GridCell {
                hidden: vec![4],
                config: quick(1e-3),
            },
            GridCell {
                hidden: vec![2],
                config: quick(1e-3),
            },
            GridCell {
                hidden: vec![2],
                config: quick(1e-4),
            },
        ];
        let r = grid_search(&ex, 1, 2, &cells, 3, 0).unwrap();
        assert_eq!(r.best, 2);
        assert!(!r.warnings.is_empty(), "single-class folds must be reported");
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = data();
        let ex: Vec<Example> = d.iter().map(|(x, l)| Example { input: x, label: *l }).collect();
        assert!(grid_search(&ex, 1, 2, &[], 3, 0).is_err());
        let cells = vec![GridCell {
            hidden: vec![3],
            config: quick(0.05),
        }];
        assert!(grid_search(&ex, 1, 2, &cells, 1, 0).is_err());
    }

    #[test]
    fn grid_toml() {
        let g =
            GridSpec::from_toml_str("hidden_layers = [[8]]\nlearning_rates = [0.01]\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(g.cells().len(), 1);
        assert_eq!(g.cells()[0].config.epochs, 3);
        assert_eq!(g.folds, 3);
    }
}
