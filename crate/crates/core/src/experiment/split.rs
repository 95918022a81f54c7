use serde::{Deserialize, Serialize};

use super::config::SplitStrategy;
use super::dataset::Manifest;
use crate::error::{Error, Result};

/// Inclusive range of 1-based layer indices of one specimen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRange {
    pub specimen_id: String,
    pub first: usize,
    pub last: usize,
}

impl LayerRange {
    pub fn contains(&self, specimen_id: &str, layer_index: usize) -> bool {
        self.specimen_id == specimen_id && (self.first..=self.last).contains(&layer_index)
    }

    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: SplitStrategy,
    pub train: Vec<LayerRange>,
    pub test: Vec<LayerRange>,
}

impl SplitPlan {
    pub fn is_train(&self, specimen_id: &str, layer_index: usize) -> bool {
        self.train.iter().any(|r| r.contains(specimen_id, layer_index))
    }

    pub fn is_test(&self, specimen_id: &str, layer_index: usize) -> bool {
        self.test.iter().any(|r| r.contains(specimen_id, layer_index))
    }

    /// `(specimen, layer)` pairs of a range list in order.
    pub fn expand(ranges: &[LayerRange]) -> Vec<(String, usize)> {
        ranges
            .iter()
            .flat_map(|r| (r.first..=r.last).map(move |n| (r.specimen_id.clone(), n)))
            .collect()
    }
}

/// Training uses the first two cells of the chosen specimen (separate) or
/// the first cell of every specimen (joint); everything after the training
/// cells of every specimen is test data.
pub fn make_splits(manifest: &Manifest, strategy: SplitStrategy, layers_per_cell: usize) -> Result<SplitPlan> {
    if layers_per_cell == 0 {
        return Err(Error::validation("layers_per_cell must be >= 1"));
    }
    let required = 4 * layers_per_cell;
    for id in ["A", "B"] {
        let have = manifest.layer_count(id);
        if have < required {
            return Err(Error::validation(format!(
                "specimen {id} has {have} layers but the split needs {required} (4 cells of {layers_per_cell}); short by {}",
                required - have
            )));
        }
    }
    let (train_cells, train_ids): (usize, Vec<&str>) = match strategy {
        SplitStrategy::SeparateA => (2, vec!["A"]),
        SplitStrategy::SeparateB => (2, vec!["B"]),
        SplitStrategy::Joint => (1, vec!["A", "B"]),
    };
    let boundary = train_cells * layers_per_cell;
    let train = train_ids
        .iter()
        .map(|id| LayerRange {
            specimen_id: id.to_string(),
            first: 1,
            last: boundary,
        })
        .collect();
    let test = manifest
        .specimens
        .iter()
        .map(|s| LayerRange {
            specimen_id: s.specimen_id.clone(),
            first: boundary + 1,
            last: s.layer_count,
        })
        .filter(|r| !r.is_empty())
        .collect();
    Ok(SplitPlan { strategy, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::dataset::SpecimenRecord;
    use crate::render::LocationPreset;

    fn manifest(layers: usize) -> Manifest {
        let rec = |id: &str, preset: LocationPreset| SpecimenRecord {
            specimen_id: id.into(),
            layer_count: layers,
            layers_per_cell: layers / 4,
            photometric: preset.params(0),
        };
        Manifest {
            config_hash: String::new(),
            specimens: vec![rec("A", LocationPreset::A), rec("B", LocationPreset::B)],
            layers: vec![],
        }
    }

    fn range(id: &str, first: usize, last: usize) -> LayerRange {
        LayerRange {
            specimen_id: id.into(),
            first,
            last,
        }
    }

    #[test]
    fn separate_uses_two_cells() {
        let p = make_splits(&manifest(800), SplitStrategy::SeparateA, 200).unwrap();
        assert_eq!(p.train, vec![range("A", 1, 400)]);
        assert_eq!(p.test, vec![range("A", 401, 800), range("B", 401, 800)]);
    }

    #[test]
    fn joint_uses_one_cell_of_each() {
        let p = make_splits(&manifest(800), SplitStrategy::Joint, 200).unwrap();
        assert_eq!(p.train, vec![range("A", 1, 200), range("B", 1, 200)]);
        assert_eq!(p.test, vec![range("A", 201, 800), range("B", 201, 800)]);
    }

    #[test]
    fn desk_scale_separate_b() {
        let p = make_splits(&manifest(200), SplitStrategy::SeparateB, 50).unwrap();
        assert_eq!(p.train, vec![range("B", 1, 100)]);
        assert_eq!(p.test, vec![range("A", 101, 200), range("B", 101, 200)]);
    }

    #[test]
    fn train_and_test_are_disjoint() {
        for s in [SplitStrategy::SeparateA, SplitStrategy::SeparateB, SplitStrategy::Joint] {
            let p = make_splits(&manifest(200), s, 50).unwrap();
            for (id, n) in SplitPlan::expand(&p.train) {
                assert!(!p.is_test(&id, n));
            }
        }
    }

    #[test]
    fn shortfall_is_named() {
        let err = make_splits(&manifest(150), SplitStrategy::Joint, 50).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("short by 50"), "{msg}");
    }
}
