//! Build the emotion graph for one image and run it through the reasoning
//! layers and the scene-guided attention, printing each stage.

use emograph::analytics::render_matrix;
use emograph::fusion::{attend_fuse, scene_attention};
use emograph::gcn::reason;
use emograph::graph::build_graph;
use emograph::ingestion::{generate_synthetic, PlantedRule, SyntheticConfig};
use emograph::training::{AblationMode, ModelConfig, SolverModel};

fn main() -> emograph::Result<()> {
    let syn = SyntheticConfig {
        samples: 4,
        n: 6,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&syn, 3, PlantedRule::ObjectPair)?;
    let sample = &ds.samples()?[0];
    let cfg = ModelConfig {
        d1: syn.d1,
        d2: syn.d2,
        d_a: 8,
        layers: 2,
        classes: syn.classes,
        ..ModelConfig::default()
    };
    let model = SolverModel::new(cfg, AblationMode::FULL, 0)?;

    let graph = build_graph(sample, &model.graph)?;
    println!("concepts   {:?}", sample.concepts);
    println!("active     {:?}", graph.active);
    println!("masked affinity\n{}", render_matrix(&graph.masked_affinity));

    let reasoned = reason(&graph.nodes, &graph.masked_affinity, &model.gcn)?;
    let weights = scene_attention(&sample.scene, &reasoned, &model.fusion)?;
    let f_obj = attend_fuse(&weights, &reasoned)?;
    for (i, a) in weights.iter().enumerate() {
        println!("slot {i} {:>10} attention {a:.3}", sample.concepts[i]);
    }
    println!("fused object feature has {} entries", f_obj.len());
    Ok(())
}
