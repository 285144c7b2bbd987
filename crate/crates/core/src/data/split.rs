use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

use super::LabeledDataset;

/// Ordered datasets with pairwise-disjoint class sets.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementStream {
    pub increments: Vec<LabeledDataset>,
    /// Classes of each increment, in arrival order.
    pub class_order: Vec<Vec<usize>>,
    pub seed: Option<u64>,
    pub classes_per_increment: usize,
}

impl IncrementStream {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn all_classes(&self) -> Vec<usize> {
        self.class_order.iter().flatten().copied().collect()
    }
}

/// Shuffles the classes with `seed` and cuts them into groups of
/// `classes_per_increment`; when the count does not divide evenly the last
/// increment holds the remainder.
pub fn split_incremental(dataset: &LabeledDataset, classes_per_increment: usize, seed: u64) -> Result<IncrementStream> {
    if classes_per_increment < 1 {
        return Err(Error::invalid("classes_per_increment", "must be >= 1"));
    }
    let mut classes = dataset.class_set().to_vec();
    classes.shuffle(&mut rng::derived_rng(seed, "class-order", 0));
    let order: Vec<Vec<usize>> = classes.chunks(classes_per_increment).map(<[usize]>::to_vec).collect();
    let mut stream = split_with_order(dataset, &order)?;
    stream.seed = Some(seed);
    stream.classes_per_increment = classes_per_increment;
    Ok(stream)
}

/// Splits by an explicit class order, e.g. `[[7, 8], [5, 9], ...]`.
pub fn split_with_order(dataset: &LabeledDataset, order: &[Vec<usize>]) -> Result<IncrementStream> {
    let mut flat: Vec<usize> = order.iter().flatten().copied().collect();
    if order.iter().any(Vec::is_empty) {
        return Err(Error::invalid("class_order", "every increment needs at least one class"));
    }
    let total = flat.len();
    flat.sort_unstable();
    flat.dedup();
    if flat.len() != total {
        return Err(Error::invalid("class_order", "a class appears in more than one increment"));
    }
    if flat != dataset.class_set() {
        return Err(Error::invalid(
            "class_order",
            format!("classes {flat:?} do not match dataset classes {:?}", dataset.class_set()),
        ));
    }
    Ok(IncrementStream {
        increments: order.iter().map(|cls| dataset.restrict(cls)).collect(),
        class_order: order.to_vec(),
        seed: None,
        classes_per_increment: order.iter().map(Vec::len).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Normalization;
    use crate::diffcore::Tensor;

    fn ten_classes() -> LabeledDataset {
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let inputs = labels.iter().map(|&y| Tensor::full(&[1], y as f32)).collect();
        LabeledDataset::new(inputs, labels, &[], Normalization::identity()).unwrap()
    }

    #[test]
    fn five_increments_partition_everything() {
        let d = ten_classes();
        let s = split_incremental(&d, 2, 3).unwrap();
        assert_eq!(s.len(), 5);
        let mut all = s.all_classes();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s.increments.iter().map(LabeledDataset::len).sum::<usize>(), 50);
    }

    #[test]
    fn remainder_goes_last() {
        let s = split_incremental(&ten_classes(), 3, 0).unwrap();
        let sizes: Vec<usize> = s.class_order.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
    }

    #[test]
    fn explicit_order_is_honored() {
        let order = vec![vec![7, 8], vec![5, 9], vec![4, 6], vec![0, 2], vec![1, 3]];
        let s = split_with_order(&ten_classes(), &order).unwrap();
        assert_eq!(s.class_order, order);
        assert_eq!(s.increments[0].class_set(), &[7, 8]);
    }

    #[test]
    fn bad_orders() {
        let d = ten_classes();
        assert!(split_incremental(&d, 0, 0).is_err());
        assert!(split_with_order(&d, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(split_with_order(&d, &[vec![0, 1]]).is_err());
    }
}
