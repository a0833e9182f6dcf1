use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Labels each test column by majority vote among its `k` nearest training
/// columns (Euclidean). Vote ties go to the label whose voters are closer on
/// average, then to the smaller label. Distance ties between neighbours are
/// broken by training index.
pub fn knn_predict(train: &DMatrix<f64>, train_labels: &[i64], test: &DMatrix<f64>, k: usize) -> Result<Vec<i64>> {
    if train.ncols() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if train_labels.len() != train.ncols() {
        return Err(Error::DimensionMismatch {
            context: "training labels",
            expected: train.ncols(),
            found: train_labels.len(),
        });
    }
    if test.nrows() != train.nrows() {
        return Err(Error::DimensionMismatch {
            context: "test feature dimension",
            expected: train.nrows(),
            found: test.nrows(),
        });
    }
    if k == 0 || k > train.ncols() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} must lie in [1, {}]",
            train.ncols()
        )));
    }

    let mut out = Vec::with_capacity(test.ncols());
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(train.ncols());
    for q in test.column_iter() {
        dists.clear();
        dists.extend(train.column_iter().enumerate().map(|(i, t)| ((t - q).norm(), i)));
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        // label -> (votes, summed distance)
        let mut votes: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
        for &(d, i) in &dists[..k] {
            let e = votes.entry(train_labels[i]).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d;
        }
        let best = votes
            .iter()
            .min_by(|(la, (na, sa)), (lb, (nb, sb))| {
                nb.cmp(na)
                    .then((sa / *na as f64).total_cmp(&(sb / *nb as f64)))
                    .then(la.cmp(lb))
            })
            .map(|(l, _)| *l)
            .expect("k >= 1");
        out.push(best);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_with_one_neighbour() {
        let train = DMatrix::from_column_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, 5.0, 5.0]);
        let test = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert_eq!(knn_predict(&train, &[7, 8, 9], &test, 1).unwrap(), vec![8]);
    }

    #[test]
    fn separated_clusters_are_perfect() {
        let train = DMatrix::from_fn(1, 10, |_, j| if j < 5 { j as f64 * 0.1 } else { 10.0 + j as f64 * 0.1 });
        let labels: Vec<i64> = (0..10).map(|j| if j < 5 { 0 } else { 1 }).collect();
        let test = DMatrix::from_row_slice(1, 4, &[0.2, 0.05, 10.7, 11.0]);
        assert_eq!(knn_predict(&train, &labels, &test, 1).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn majority_of_three() {
        // Nearest is label 1, but the next two are label 2.
        let train = DMatrix::from_row_slice(1, 4, &[0.0, 0.5, -0.6, 9.0]);
        let test = DMatrix::from_row_slice(1, 1, &[0.1]);
        assert_eq!(knn_predict(&train, &[1, 2, 2, 1], &test, 3).unwrap(), vec![2]);
        assert_eq!(knn_predict(&train, &[1, 2, 2, 1], &test, 1).unwrap(), vec![1]);
    }

    #[test]
    fn vote_ties_use_mean_distance_then_label() {
        let train = DMatrix::from_row_slice(1, 2, &[1.0, -3.0]);
        let test = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(knn_predict(&train, &[5, 2], &test, 2).unwrap(), vec![5]);
        let train = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert_eq!(knn_predict(&train, &[5, 2], &test, 2).unwrap(), vec![2]);
    }

    #[test]
    fn errors() {
        let empty = DMatrix::<f64>::zeros(2, 0);
        let test = DMatrix::zeros(2, 1);
        assert!(matches!(
            knn_predict(&empty, &[], &test, 1),
            Err(Error::EmptyTrainingSet)
        ));
        let train = DMatrix::zeros(2, 2);
        assert!(knn_predict(&train, &[0, 1], &test, 3).is_err());
    }
}
