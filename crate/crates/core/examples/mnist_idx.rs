//! Loads MNIST from IDX files, checks the byte-exact round trip and writes a
//! grid of the first ten images per class as a PGM file.
//!
//! Usage: `cargo run --example mnist_idx -- [mnist_dir] [out.pgm]`

use std::path::PathBuf;

use acdistill::data::{encode_idx, load_mnist, MnistSplit};
use acdistill::gan::write_sample_grid;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "mnist_grid.pgm".into()));

    let test = load_mnist(&dir, MnistSplit::Test)?;
    println!("{} test images of shape {:?}", test.len(), test.input_shape().unwrap_or(&[]));
    println!("per-class counts {:?}", test.class_counts());

    let (images, labels) = encode_idx(&test)?;
    let (img_name, lbl_name) = MnistSplit::Test.file_names();
    let same = images == std::fs::read(dir.join(img_name))? && labels == std::fs::read(dir.join(lbl_name))?;
    println!("re-encoded bytes identical to the files: {same}");

    let by_class = test.by_class();
    let grid: Vec<_> = by_class.values().flat_map(|xs| xs.iter().take(10).map(|x| (*x).clone())).collect();
    write_sample_grid(&out, &grid, 10)?;
    println!("wrote {}", out.display());
    Ok(())
}
