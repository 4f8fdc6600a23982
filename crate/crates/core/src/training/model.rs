use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionGrads, FusionParams};
use crate::gcn::{Activation, GcnGrads, GcnParams};
use crate::graph::{GraphGrads, GraphOptions, GraphParams, DEFAULT_TAU};
use crate::numerics::{Matrix, ParamTensor, Parameterized};

/// Architecture hyperparameters. Parameter shapes do not depend on the
/// number of object slots, so one model accepts any `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d1: usize,
    pub d2: usize,
    /// Width of the two affinity embeddings.
    pub d_a: usize,
    pub layers: usize,
    pub classes: usize,
    pub tau: f64,
    pub activation: Activation,
    pub normalize_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d1: 2048,
            d2: 300,
            d_a: 512,
            layers: 4,
            classes: 8,
            tau: DEFAULT_TAU,
            activation: Activation::Identity,
            normalize_attention: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 || self.d_a == 0 {
            return Err(Error::Config("d1, d2 and d_a must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("need at least one GCN layer".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Range {
                what: "tau".into(),
                value: self.tau,
            });
        }
        Ok(())
    }
}

/// Pipeline switches used to reproduce the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationMode {
    pub use_scene: bool,
    pub use_objects: bool,
    pub multi_object: bool,
    pub use_gcn: bool,
    pub use_mask: bool,
    pub two_embeddings: bool,
    pub use_attention: bool,
}

impl Default for AblationMode {
    fn default() -> Self {
        AblationMode::FULL
    }
}

const fn mode(
    use_scene: bool,
    use_objects: bool,
    multi_object: bool,
    use_gcn: bool,
    use_mask: bool,
    two_embeddings: bool,
    use_attention: bool,
) -> AblationMode {
    AblationMode {
        use_scene,
        use_objects,
        multi_object,
        use_gcn,
        use_mask,
        two_embeddings,
        use_attention,
    }
}

/// The ablation rows: `(slug, description, mode)`, object-only rows first.
pub const ABLATION_ROWS: [(&str, &str, AblationMode); 14] = [
    (
        "single-object",
        "single object",
        mode(false, true, false, false, false, false, false),
    ),
    (
        "multi-object",
        "multiple objects",
        mode(false, true, true, false, false, false, false),
    ),
    (
        "gcn-one",
        "multiple objects + GCN + one embedding",
        mode(false, true, true, true, false, false, false),
    ),
    (
        "gcn-two",
        "multiple objects + GCN + two embeddings",
        mode(false, true, true, true, false, true, false),
    ),
    (
        "gcn-mask-one",
        "multiple objects + GCN + mask + one embedding",
        mode(false, true, true, true, true, false, false),
    ),
    (
        "gcn-mask-two",
        "multiple objects + GCN + mask + two embeddings",
        mode(false, true, true, true, true, true, false),
    ),
    (
        "scene",
        "scene",
        mode(true, false, false, false, false, false, false),
    ),
    (
        "scene-single-object",
        "scene + single object",
        mode(true, true, false, false, false, false, false),
    ),
    (
        "scene-multi-object",
        "scene + multiple objects",
        mode(true, true, true, false, false, false, false),
    ),
    (
        "scene-attention",
        "scene + multiple objects + scene-based attention",
        mode(true, true, true, false, false, false, true),
    ),
    (
        "scene-gcn-one-attention",
        "scene + multiple objects + GCN + one embedding + scene-based attention",
        mode(true, true, true, true, false, false, true),
    ),
    (
        "scene-gcn-two-attention",
        "scene + multiple objects + GCN + two embeddings + scene-based attention",
        mode(true, true, true, true, false, true, true),
    ),
    (
        "scene-gcn-mask-one-attention",
        "scene + multiple objects + GCN + mask + one embedding + scene-based attention",
        mode(true, true, true, true, true, false, true),
    ),
    (
        "full",
        "scene + multiple objects + GCN + mask + two embeddings + scene-based attention",
        AblationMode::FULL,
    ),
];

impl AblationMode {
    pub const FULL: AblationMode = mode(true, true, true, true, true, true, true);
    pub const SINGLE_OBJECT: AblationMode = ABLATION_ROWS[0].2;
    pub const SCENE_ONLY: AblationMode = ABLATION_ROWS[6].2;

    pub fn validate(&self) -> Result<()> {
        if !self.use_scene && !self.use_objects {
            return Err(Error::Config(
                "ablation mode must use the scene, the objects, or both".into(),
            ));
        }
        if self.use_attention && !(self.use_scene && self.use_objects) {
            return Err(Error::Config(
                "scene-based attention needs both scene and objects".into(),
            ));
        }
        Ok(())
    }

    /// Looks up a row by its slug.
    pub fn from_name(name: &str) -> Result<AblationMode> {
        ABLATION_ROWS
            .iter()
            .find(|(slug, _, _)| *slug == name)
            .map(|(_, _, m)| *m)
            .ok_or_else(|| {
                let names: Vec<&str> = ABLATION_ROWS.iter().map(|r| r.0).collect();
                Error::Config(format!(
                    "unknown mode {name:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            two_embeddings: self.two_embeddings,
            use_mask: self.use_mask,
            single_object: !self.multi_object,
        }
    }

    pub fn classifier_input(&self, d1: usize, d2: usize) -> usize {
        (if self.use_scene { d1 } else { 0 }) + (if self.use_objects { d2 } else { 0 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    /// `C x input`
    pub w: ParamTensor,
}

/// All learnable tensors plus the configuration that shaped them.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverModel {
    pub config: ModelConfig,
    pub mode: AblationMode,
    pub graph: GraphParams,
    pub gcn: GcnParams,
    pub fusion: FusionParams,
    pub classifier: ClassifierParams,
}

impl SolverModel {
    /// Seeded uniform `±1/√fan_in` initialization.
    pub fn new(config: ModelConfig, mode: AblationMode, seed: u64) -> Result<Self> {
        config.validate()?;
        mode.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = GraphParams::init(config.d1, config.d_a, config.tau, &mut rng)?;
        let gcn = GcnParams::init(config.d2, config.layers, config.activation, &mut rng)?;
        let fusion = FusionParams::init(config.d1, config.d2, &mut rng);
        let input = mode.classifier_input(config.d1, config.d2);
        let classifier = ClassifierParams {
            w: ParamTensor::uniform(config.classes, input, input, &mut rng),
        };
        Ok(SolverModel {
            config,
            mode,
            graph,
            gcn,
            fusion,
            classifier,
        })
    }

    /// Display names in `params()` order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["W_e", "b_e", "W_phi", "W_psi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for l in 0..self.gcn.depth() {
            names.push(format!("W_g[{l}]"));
            names.push(format!("W_r[{l}]"));
        }
        names.extend(["W_s", "W_o", "W"].iter().map(|s| s.to_string()));
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Adds `scale · grads` into every parameter's gradient buffer.
    pub fn accumulate(&mut self, grads: &ModelGrads, scale: f64) -> Result<()> {
        for (p, g) in self.params_mut().into_iter().zip(grads.tensors()) {
            p.grad.scaled_add_assign(scale, g)?;
        }
        Ok(())
    }
}

impl Parameterized for SolverModel {
    fn params(&self) -> Vec<&ParamTensor> {
        let mut out = vec![
            &self.graph.w_e,
            &self.graph.b_e,
            &self.graph.w_phi,
            &self.graph.w_psi,
        ];
        for l in &self.gcn.layers {
            out.push(&l.w_g);
            out.push(&l.w_r);
        }
        out.extend([&self.fusion.w_s, &self.fusion.w_o, &self.classifier.w]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = vec![
            &mut self.graph.w_e,
            &mut self.graph.b_e,
            &mut self.graph.w_phi,
            &mut self.graph.w_psi,
        ];
        for l in &mut self.gcn.layers {
            out.push(&mut l.w_g);
            out.push(&mut l.w_r);
        }
        out.extend([
            &mut self.fusion.w_s,
            &mut self.fusion.w_o,
            &mut self.classifier.w,
        ]);
        out
    }
}

/// Gradient buffers for every model parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub graph: GraphGrads,
    pub gcn: GcnGrads,
    pub fusion: FusionGrads,
    pub classifier: Matrix,
}

impl ModelGrads {
    pub fn zeros_like(model: &SolverModel) -> Self {
        let (r, c) = model.classifier.w.shape();
        ModelGrads {
            graph: GraphGrads::zeros_like(&model.graph),
            gcn: GcnGrads::zeros_like(&model.gcn),
            fusion: FusionGrads::zeros_like(&model.fusion),
            classifier: Matrix::zeros(r, c),
        }
    }

    /// Tensors in the same order as [`Parameterized::params`].
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![
            &self.graph.w_e,
            &self.graph.b_e,
            &self.graph.w_phi,
            &self.graph.w_psi,
        ];
        for (g, r) in self.gcn.w_g.iter().zip(&self.gcn.w_r) {
            out.push(g);
            out.push(r);
        }
        out.extend([&self.fusion.w_s, &self.fusion.w_o, &self.classifier]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![
            &mut self.graph.w_e,
            &mut self.graph.b_e,
            &mut self.graph.w_phi,
            &mut self.graph.w_psi,
        ];
        for (g, r) in self.gcn.w_g.iter_mut().zip(self.gcn.w_r.iter_mut()) {
            out.push(g);
            out.push(r);
        }
        out.extend([
            &mut self.fusion.w_s,
            &mut self.fusion.w_o,
            &mut self.classifier,
        ]);
        out
    }

    pub fn add_assign(&mut self, other: &ModelGrads) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}
