//! CIFAR-10 binary batches: each record is one label byte followed by
//! 3072 pixel bytes (red, green, blue planes of 32x32).

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

use super::{LabeledDataset, Normalization};

const RECORD: usize = 1 + 3 * 32 * 32;

pub fn parse_cifar10_binary(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.is_empty() || bytes.len() % RECORD != 0 {
        return Err(Error::IdxTruncated {
            what: "cifar10 batch",
            needed: bytes.len().div_ceil(RECORD).max(1) * RECORD,
            available: bytes.len(),
        });
    }
    let norm = Normalization::pixels_to_unit_range();
    let mut inputs = Vec::with_capacity(bytes.len() / RECORD);
    let mut labels = Vec::with_capacity(bytes.len() / RECORD);
    for rec in bytes.chunks_exact(RECORD) {
        labels.push(usize::from(rec[0]));
        let data = rec[1..].iter().map(|&p| f32::from(p) * norm.scale + norm.offset).collect();
        inputs.push(Tensor::new(vec![3, 32, 32], data)?);
    }
    LabeledDataset::new(inputs, labels, &[], norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records() {
        let mut b = vec![0u8; 2 * RECORD];
        b[0] = 4;
        b[RECORD] = 9;
        b[RECORD + 1] = 255;
        let d = parse_cifar10_binary(&b).unwrap();
        assert_eq!(d.labels(), &[4, 9]);
        assert_eq!(d.inputs()[1].data()[0], 1.0);
        assert!(parse_cifar10_binary(&b[..RECORD + 5]).is_err());
    }
}
