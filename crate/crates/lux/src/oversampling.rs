//! Minimal data generation: upsample only isolated and low-confidence
//! neighborhood rows, interpolating between same-class neighbors so nothing
//! leaves the neighborhood's bounding box.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::blackbox::{confidence_threshold, predict_records, BlackBoxError, BlackBoxModel, PredictionRecord};
use crate::dataset::{scaled_distance, Dataset, Instance, Metric};
use crate::neighborhood::Neighborhood;

#[derive(Debug, Error)]
pub enum OversampleError {
    #[error("danger row {0} has no same-class neighbor in the neighborhood")]
    NoSameClassNeighbor(usize),
    #[error("model error: {0}")]
    Model(#[from] BlackBoxError),
}

/// Provenance of one synthetic row: dataset indices of both endpoints and
/// the interpolation parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOrigin {
    pub parent: usize,
    pub neighbor: usize,
    pub t: f64,
}

/// Real neighborhood rows plus the synthetic rows generated around them.
#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub real_idx: Vec<usize>,
    pub synth_x: Vec<Vec<f64>>,
    /// Black-box predictions for the synthetic rows (not inherited labels).
    pub synth_preds: Vec<PredictionRecord>,
    pub origin: Vec<SynthOrigin>,
}

impl AugmentedSample {
    pub fn n_synthetic(&self) -> usize {
        self.synth_x.len()
    }
}

pub fn interpolate(parent: &[f64], neighbor: &[f64], t: f64) -> Vec<f64> {
    parent.iter().zip(neighbor).map(|(p, q)| p + t * (q - p)).collect()
}

/// Rows that need upsampling: black-box confidence strictly below the
/// neighborhood's δ, or a strict majority of the row's k nearest
/// neighborhood rows carrying a different model label.
pub fn mark_in_danger(
    nbhd: &Neighborhood,
    data: &Dataset,
    k: usize,
    metric: Metric,
) -> Vec<usize> {
    if nbhd.is_empty() {
        return Vec::new();
    }
    let delta = confidence_threshold(&nbhd.preds).expect("non-empty neighborhood");
    let scaled: Vec<Vec<f64>> = nbhd.all_idx.iter().map(|&i| data.scale(data.row(i))).collect();
    let k_eff = k.min(nbhd.len().saturating_sub(1));

    let mut danger = Vec::new();
    for (pos, &row) in nbhd.all_idx.iter().enumerate() {
        let uncertain = nbhd.preds[pos].confidence < delta;
        let isolated = if k_eff == 0 {
            false
        } else {
            let mut dists: Vec<(f64, usize)> = (0..nbhd.len())
                .filter(|&other| other != pos)
                .map(|other| (scaled_distance(&scaled[pos], &scaled[other], metric), other))
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let differing = dists[..k_eff]
                .iter()
                .filter(|&&(_, other)| nbhd.preds[other].label != nbhd.preds[pos].label)
                .count();
            2 * differing > k_eff
        };
        if uncertain || isolated {
            danger.push(row);
        }
    }
    danger
}

/// BorderlineSMOTE-style generation: each synthetic row interpolates between
/// a danger row and one of its k nearest same-class neighborhood rows.
/// With `target_balance` the per-class generation counts equalize the class
/// counts inside the neighborhood; otherwise one row per danger row.
pub fn upsample(
    nbhd: &Neighborhood,
    data: &Dataset,
    danger: &[usize],
    model: &dyn BlackBoxModel,
    target_balance: bool,
    k: usize,
    metric: Metric,
    seed: u64,
) -> Result<AugmentedSample, OversampleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scaled: Vec<Vec<f64>> = nbhd.all_idx.iter().map(|&i| data.scale(data.row(i))).collect();
    let pos_of = |row: usize| nbhd.all_idx.iter().position(|&i| i == row).expect("danger row in neighborhood");

    let n_classes = nbhd.preds.iter().map(|p| p.label).max().unwrap_or(0) + 1;
    let mut class_counts = vec![0usize; n_classes];
    for p in &nbhd.preds {
        class_counts[p.label] += 1;
    }

    // (parent dataset row, how many rows to generate from it)
    let mut plan: Vec<usize> = Vec::new();
    let mut danger_sorted = danger.to_vec();
    danger_sorted.sort_unstable();
    if target_balance {
        let target = class_counts.iter().copied().max().unwrap_or(0);
        for class in 0..n_classes {
            let deficit = target - class_counts[class];
            if deficit == 0 {
                continue;
            }
            let parents: Vec<usize> = danger_sorted
                .iter()
                .copied()
                .filter(|&row| nbhd.preds[pos_of(row)].label == class)
                .collect();
            if parents.is_empty() {
                continue;
            }
            for g in 0..deficit {
                plan.push(parents[g % parents.len()]);
            }
        }
    } else {
        plan.extend(danger_sorted.iter().copied());
    }

    let mut synth_x = Vec::with_capacity(plan.len());
    let mut origin = Vec::with_capacity(plan.len());
    for parent in plan {
        let ppos = pos_of(parent);
        let label = nbhd.preds[ppos].label;
        let mut same: Vec<(f64, usize)> = (0..nbhd.len())
            .filter(|&o| o != ppos && nbhd.preds[o].label == label)
            .map(|o| (scaled_distance(&scaled[ppos], &scaled[o], metric), o))
            .collect();
        if same.is_empty() {
            return Err(OversampleError::NoSameClassNeighbor(parent));
        }
        same.sort_by(|a, b| a.partial_cmp(b).unwrap());
        same.truncate(k.max(1));
        let (_, qpos) = same[rng.random_range(0..same.len())];
        let t: f64 = rng.random_range(0.0..1.0);
        let q_row = nbhd.all_idx[qpos];
        synth_x.push(interpolate(data.row(parent), data.row(q_row), t));
        origin.push(SynthOrigin { parent, neighbor: q_row, t });
    }

    let synth_preds = if synth_x.is_empty() {
        Vec::new()
    } else {
        let instances: Vec<Instance> = synth_x.iter().map(|r| Instance::new(r.clone())).collect();
        predict_records(model, &instances)?
    };

    Ok(AugmentedSample { real_idx: nbhd.all_idx.clone(), synth_x, synth_preds, origin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::knn_model;
    use crate::dataset::{toy_blobs, FeatureSchema};
    use crate::neighborhood::{assemble, NeighborhoodParams, Stratification};

    fn toy_neighborhood() -> (Dataset, crate::blackbox::KnnModel, Neighborhood) {
        let data = toy_blobs();
        let model = knn_model(&data, 3).unwrap();
        let params = NeighborhoodParams {
            k: 8,
            sigma: 3,
            stratification: Stratification::Global,
            metric: Metric::Euclidean,
        };
        let nbhd = assemble(&data, &model, &Instance::new(vec![0.5, 0.5]), &params).unwrap();
        (data, model, nbhd)
    }

    #[test]
    fn well_separated_blobs_have_no_danger() {
        // k=3 neighbors of every blob row are its own blob; confidences all
        // equal so nothing sits strictly below delta
        let (data, _, nbhd) = toy_neighborhood();
        assert!(nbhd.preds.iter().all(|p| p.confidence == 1.0));
        let danger = mark_in_danger(&nbhd, &data, 3, Metric::Euclidean);
        assert!(danger.is_empty());
    }

    #[test]
    fn embedded_row_is_isolated() {
        // a single class-1 row inside the class-0 blob
        let schema = FeatureSchema::numeric(
            vec!["a".into(), "b".into()],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.5, 0.5], // embedded
            vec![9.0, 9.0],
            vec![9.0, 10.0],
            vec![10.0, 9.0],
            vec![10.0, 10.0],
        ];
        let y = vec![0, 0, 0, 0, 1, 1, 1, 1, 1];
        let data = Dataset::new(schema, rows, Some(y)).unwrap();
        let model = knn_model(&data, 1).unwrap(); // 1-NN: embedded row keeps label 1
        let params = NeighborhoodParams {
            k: 9,
            sigma: 3,
            stratification: Stratification::Global,
            metric: Metric::Euclidean,
        };
        let nbhd = assemble(&data, &model, &Instance::new(vec![0.4, 0.4]), &params).unwrap();
        let danger = mark_in_danger(&nbhd, &data, 3, Metric::Euclidean);
        assert!(danger.contains(&4), "embedded row must be isolated, got {danger:?}");
    }

    #[test]
    fn low_confidence_row_is_marked() {
        // confidences {1.0, 1.0, 0.5} -> delta ~= 0.597; the 0.5 row marked
        let (data, _, mut nbhd) = toy_neighborhood();
        nbhd.all_idx.truncate(3);
        nbhd.preds.truncate(3);
        nbhd.preds[0].confidence = 1.0;
        nbhd.preds[1].confidence = 1.0;
        nbhd.preds[2] = PredictionRecord { label: 0, confidence: 0.5, proba: vec![0.5, 0.5] };
        let delta = confidence_threshold(&nbhd.preds).unwrap();
        assert!((delta - 0.5976).abs() < 1e-3);
        let danger = mark_in_danger(&nbhd, &data, 0, Metric::Euclidean);
        assert_eq!(danger, vec![nbhd.all_idx[2]]);
    }

    #[test]
    fn no_danger_means_no_synthetics() {
        let (data, model, nbhd) = toy_neighborhood();
        let aug = upsample(&nbhd, &data, &[], &model, true, 5, Metric::Euclidean, 1).unwrap();
        assert!(aug.synth_x.is_empty());
        assert_eq!(aug.real_idx, nbhd.all_idx);
    }

    #[test]
    fn interpolation_boundary_equals_parent() {
        let p = vec![1.0, 2.0, 3.0];
        let q = vec![4.0, 5.0, 6.0];
        assert_eq!(interpolate(&p, &q, 0.0), p);
        assert_eq!(interpolate(&p, &q, 1.0), q);
    }

    #[test]
    fn balancing_counts_and_segment_membership() {
        // class counts 6 vs 2 -> 4 synthetic rows, every one on the segment
        // between its recorded endpoints
        let schema = FeatureSchema::numeric(
            vec!["a".into(), "b".into()],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..6 {
            rows.push(vec![i as f64 * 0.1, 0.0]);
            y.push(0);
        }
        rows.push(vec![10.0, 10.0]);
        rows.push(vec![10.5, 10.5]);
        y.extend([1, 1]);
        let data = Dataset::new(schema, rows, Some(y)).unwrap();
        let model = knn_model(&data, 1).unwrap();
        let params = NeighborhoodParams {
            k: 8,
            sigma: 2,
            stratification: Stratification::Global,
            metric: Metric::Euclidean,
        };
        let nbhd = assemble(&data, &model, &Instance::new(vec![0.2, 0.0]), &params).unwrap();
        assert_eq!(nbhd.len(), 8);

        // both class-1 rows as danger parents
        let aug = upsample(&nbhd, &data, &[6, 7], &model, true, 5, Metric::Euclidean, 7).unwrap();
        assert_eq!(aug.n_synthetic(), 4);
        for (row, o) in aug.synth_x.iter().zip(&aug.origin) {
            let rebuilt = interpolate(data.row(o.parent), data.row(o.neighbor), o.t);
            for (a, b) in row.iter().zip(&rebuilt) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert!((0.0..=1.0).contains(&o.t));
        }
        // final class counts 6/6 by construction (synthetics between class-1 rows)
        let ones = aug.synth_preds.iter().filter(|p| p.label == 1).count();
        assert_eq!(ones, 4);
    }

    #[test]
    fn no_extrapolation_bounding_box() {
        let (data, model, nbhd) = toy_neighborhood();
        let danger: Vec<usize> = nbhd.all_idx.clone();
        let aug = upsample(&nbhd, &data, &danger, &model, false, 5, Metric::Euclidean, 3).unwrap();
        assert_eq!(aug.n_synthetic(), nbhd.len());
        for j in 0..data.n_features() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &nbhd.all_idx {
                lo = lo.min(data.row(i)[j]);
                hi = hi.max(data.row(i)[j]);
            }
            for row in &aug.synth_x {
                assert!(row[j] >= lo - 1e-12 && row[j] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn seeded_reproducibility() {
        let (data, model, nbhd) = toy_neighborhood();
        let danger: Vec<usize> = nbhd.all_idx[..4].to_vec();
        let a = upsample(&nbhd, &data, &danger, &model, false, 5, Metric::Euclidean, 11).unwrap();
        let b = upsample(&nbhd, &data, &danger, &model, false, 5, Metric::Euclidean, 11).unwrap();
        assert_eq!(a.synth_x, b.synth_x);
        assert_eq!(a.origin, b.origin);
        let c = upsample(&nbhd, &data, &danger, &model, false, 5, Metric::Euclidean, 12).unwrap();
        assert!(a.origin != c.origin || a.synth_x != c.synth_x);
    }

    #[test]
    fn no_same_class_neighbor_is_an_error() {
        let schema = FeatureSchema::numeric(
            vec!["a".into(), "b".into()],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        // one lone class-1 row amid class-0 rows; 1-NN keeps its label
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![5.0, 5.0],
        ];
        let y = vec![0, 0, 0, 1];
        let data = Dataset::new(schema, rows, Some(y)).unwrap();
        let model = knn_model(&data, 1).unwrap();
        let params = NeighborhoodParams {
            k: 4,
            sigma: 2,
            stratification: Stratification::Global,
            metric: Metric::Euclidean,
        };
        let nbhd = assemble(&data, &model, &Instance::new(vec![0.3, 0.3]), &params).unwrap();
        let err = upsample(&nbhd, &data, &[3], &model, false, 5, Metric::Euclidean, 1);
        assert!(matches!(err, Err(OversampleError::NoSameClassNeighbor(3))));
    }
}
