//! Temperature-softened targets and the two increment losses.

use acdistill::distill::{ac_distillation_loss, cross_entropy, entropy, model_distillation_loss, soften};
use acdistill::error::Result;

fn main() -> Result<()> {
    let logits = [3.0, 1.0, 0.2];
    for t in [0.5, 1.0, 2.0, 5.0, 20.0] {
        let p = soften(&logits, t)?;
        println!("T = {t:>4}: {:.3?}  entropy {:.3} nats", p, entropy(&p));
    }

    // Old classifier knows two classes; the student predicts over three.
    let y_soft = soften(&[2.0, -1.0], 2.0)?;
    let y = [0.0, 0.0, 1.0];
    let predicted = [0.2, 0.1, 0.7];
    println!("\nH(y, p)                = {:.4}", cross_entropy(&y, &predicted)?);
    for alpha in [0.0, 0.5, 1.0] {
        println!(
            "model distillation a={alpha}: {:.4}",
            model_distillation_loss(&y, &y_soft, &predicted, alpha)?
        );
    }

    // The auxiliary classifier already spans every seen class.
    let aux_soft = soften(&[0.5, -0.3, 2.5], 2.0)?;
    println!("ac distillation        = {:.4}", ac_distillation_loss(&aux_soft, &predicted)?);
    Ok(())
}
