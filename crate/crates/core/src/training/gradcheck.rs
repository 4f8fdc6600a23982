//! End-to-end finite-difference check of the analytic backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingestion::Sample;
use crate::numerics::{finite_diff_grad, relative_error, Matrix};

use super::forward::{batch_loss, sample_gradient};
use super::model::{AblationMode, ModelConfig, ModelGrads, SolverModel};

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Report groups. `W_e` and `b_e` share a group, as do all per-layer GCN weights of one kind.
pub const GROUPS: [&str; 8] = [
    "W_e,b_e", "W_phi", "W_psi", "W_g*", "W_r*", "W_s", "W_o", "W",
];

#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    pub h: f64,
    pub tolerance: f64,
    /// Scales the analytic gradient of one group before comparing. Only
    /// useful for testing the checker itself.
    #[doc(hidden)]
    pub corrupt_group: Option<usize>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            h: GRADCHECK_STEP,
            tolerance: GRADCHECK_TOLERANCE,
            corrupt_group: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub passed: bool,
}

fn group_of(name: &str) -> usize {
    match name {
        "W_e" | "b_e" => 0,
        "W_phi" => 1,
        "W_psi" => 2,
        "W_s" => 5,
        "W_o" => 6,
        "W" => 7,
        n if n.starts_with("W_g") => 3,
        _ => 4,
    }
}

fn flatten(parts: &[&Matrix]) -> Matrix {
    let data: Vec<f64> = parts
        .iter()
        .flat_map(|m| m.data().iter().copied())
        .collect();
    let len = data.len();
    Matrix::from_vec(1, len, data).expect("length matches")
}

/// Analytic mean-loss gradient over `samples`, one matrix per parameter.
pub fn analytic_gradient(model: &SolverModel, samples: &[Sample]) -> Result<Vec<Matrix>> {
    if samples.is_empty() {
        return Err(Error::Empty("gradient batch".into()));
    }
    let mut grads = ModelGrads::zeros_like(model);
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        sample_gradient(model, s, scale, &mut grads)?;
    }
    Ok(grads.tensors().into_iter().cloned().collect())
}

pub fn gradcheck(
    model: &SolverModel,
    samples: &[Sample],
    cfg: &GradcheckConfig,
) -> Result<Vec<GroupReport>> {
    let mut analytic = analytic_gradient(model, samples)?;
    let mut probe = model.clone();
    let numeric = finite_diff_grad(
        &mut probe,
        |m| batch_loss(m, samples).unwrap_or(f64::NAN),
        cfg.h,
    )?;
    let names = model.param_names();
    if let Some(g) = cfg.corrupt_group {
        for (name, a) in names.iter().zip(analytic.iter_mut()) {
            if group_of(name) == g {
                *a = a.scale(1.01);
            }
        }
    }
    let mut reports = Vec::with_capacity(GROUPS.len());
    for (g, label) in GROUPS.iter().enumerate() {
        let idx: Vec<usize> = (0..names.len())
            .filter(|&i| group_of(&names[i]) == g)
            .collect();
        let a = flatten(&idx.iter().map(|&i| &analytic[i]).collect::<Vec<_>>());
        let n = flatten(&idx.iter().map(|&i| &numeric[i]).collect::<Vec<_>>());
        let rel_error = relative_error(&a, &n)?;
        reports.push(GroupReport {
            group: label.to_string(),
            rel_error,
            analytic_norm: a.frobenius_norm(),
            passed: rel_error <= cfg.tolerance,
        });
    }
    Ok(reports)
}

/// Tiny fixed-size instance for the self-check: `N=4, d1=8, d2=6, d_a=5, L=2, C=3`.
pub fn tiny_instance(seed: u64, mode: AblationMode) -> Result<(SolverModel, Vec<Sample>)> {
    let cfg = ModelConfig {
        d1: 8,
        d2: 6,
        d_a: 5,
        layers: 2,
        classes: 3,
        ..ModelConfig::default()
    };
    let model = SolverModel::new(cfg.clone(), mode, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let n = 4;
    let rand_matrix = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        Matrix::from_vec(
            r,
            c,
            (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    };
    let mut samples = Vec::new();
    for k in 0..3 {
        // one slot always below the threshold so the mask is exercised
        let confidences = vec![
            rng.random_range(0.3..1.0),
            rng.random_range(0.3..1.0),
            rng.random_range(0.0..0.3),
            rng.random_range(0.0..1.0),
        ];
        samples.push(Sample {
            image_id: format!("tiny_{k}"),
            concepts: (0..n).map(|i| format!("c{i}")).collect(),
            confidences,
            visual: rand_matrix(&mut rng, n, cfg.d1)?,
            semantic: rand_matrix(&mut rng, n, cfg.d2)?,
            scene: (0..cfg.d1).map(|_| rng.random_range(-1.0..1.0)).collect(),
            label: k % cfg.classes,
        });
    }
    Ok((model, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::model::ABLATION_ROWS;

    #[test]
    fn all_groups_pass() {
        let (model, samples) = tiny_instance(1, AblationMode::FULL).unwrap();
        let reports = gradcheck(&model, &samples, &GradcheckConfig::default()).unwrap();
        assert_eq!(reports.len(), 8);
        for r in &reports {
            assert!(r.passed, "{r:?}");
            assert!(r.analytic_norm > 0.0, "{r:?}");
        }
    }

    #[test]
    fn every_ablation_row_passes() {
        for (slug, _, mode) in ABLATION_ROWS {
            let (model, samples) = tiny_instance(2, mode).unwrap();
            for r in gradcheck(&model, &samples, &GradcheckConfig::default()).unwrap() {
                assert!(r.passed, "{slug}: {r:?}");
            }
        }
    }

    #[test]
    fn corrupted_group_fails() {
        let (model, samples) = tiny_instance(1, AblationMode::FULL).unwrap();
        let cfg = GradcheckConfig {
            corrupt_group: Some(3),
            ..GradcheckConfig::default()
        };
        let reports = gradcheck(&model, &samples, &cfg).unwrap();
        assert!(!reports[3].passed);
        assert!(reports.iter().enumerate().all(|(i, r)| i == 3 || r.passed));
    }
}
