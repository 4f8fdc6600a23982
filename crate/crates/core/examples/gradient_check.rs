//! Finite-difference check of the analytic gradients on a tiny random model.

use emograph::training::{gradcheck, tiny_instance, GradcheckConfig, ABLATION_ROWS};

fn main() -> emograph::Result<()> {
    for (slug, _, mode) in ABLATION_ROWS
        .iter()
        .filter(|r| ["full", "gcn-mask-two", "scene-attention"].contains(&r.0))
    {
        let (model, samples) = tiny_instance(0, *mode)?;
        println!("{slug}");
        for r in gradcheck(&model, &samples, &GradcheckConfig::default())? {
            println!(
                "  {:<8} rel {:.2e}  {}",
                r.group,
                r.rel_error,
                if r.passed { "ok" } else { "FAIL" }
            );
        }
    }
    Ok(())
}
