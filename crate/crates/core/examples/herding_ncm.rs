//! Herded exemplar selection and nearest-class-mean classification on
//! hand-made embeddings.

use acdistill::classify::{
    class_means_from_embeddings, herd_select_embeddings, ncm_classify_embedding, MeanProvenance,
};
use acdistill::error::Result;
use rand::Rng;
use std::collections::BTreeMap;

fn main() -> Result<()> {
    let mut rng = acdistill::rng::rng(7);
    let mut groups: BTreeMap<usize, Vec<Vec<f32>>> = BTreeMap::new();
    for (class, centre) in [(0usize, [1.0f32, 0.0]), (1, [0.0, 1.0]), (2, [-1.0, 0.0])] {
        let pts = (0..50)
            .map(|_| vec![centre[0] + rng.random_range(-0.3..0.3), centre[1] + rng.random_range(-0.3..0.3)])
            .collect();
        groups.insert(class, pts);
    }

    for (class, pts) in &groups {
        let picked = herd_select_embeddings(pts, 5)?;
        println!("class {class}: herded {picked:?}");
    }

    let means = class_means_from_embeddings(&groups, MeanProvenance::TrueMean)?;
    for q in [[0.9f32, 0.1], [0.1, 0.8], [-0.7, -0.2], [0.0, 0.0]] {
        println!("{q:?} -> class {}", ncm_classify_embedding(&means, &q)?);
    }
    Ok(())
}
