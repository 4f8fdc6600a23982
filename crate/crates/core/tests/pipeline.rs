mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{bits, random_sample, small_config, small_model};
use emograph::analytics::{region_report, EMPTY_REPORT_NOTE};
use emograph::ingestion::{generate_synthetic, split_dataset, PlantedRule, SyntheticConfig};
use emograph::numerics::{Matrix, Parameterized};
use emograph::training::{
    adam_step, backward, batch_loss, evaluate, forward, train, AblationMode, AdamConfig,
    ModelConfig, ModelGrads, SolverModel, TrainConfig,
};

fn l2(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 1e-12 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Every step written out with explicit loops.
fn loop_oracle(m: &SolverModel, s: &emograph::ingestion::Sample) -> Vec<f64> {
    let (n, d1, d2, da) = (s.node_count(), m.config.d1, m.config.d2, m.config.d_a);
    let w_e = &m.graph.w_e.value;
    let b_e = &m.graph.b_e.value;
    let ve: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let u: Vec<f64> = (0..d1)
                .map(|r| (0..d1).map(|c| w_e[(r, c)] * s.visual[(i, c)]).sum::<f64>() + b_e[(0, r)])
                .collect();
            l2(&u)
        })
        .collect();
    let proj = |w: &Matrix, i: usize| -> Vec<f64> {
        (0..da)
            .map(|r| (0..d1).map(|c| w[(r, c)] * ve[i][c]).sum())
            .collect()
    };
    let active: Vec<bool> = s.confidences.iter().map(|&p| p >= m.config.tau).collect();
    let mut r = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if active[i] && active[j] {
                let phi = proj(&m.graph.w_phi.value, i);
                let psi = proj(&m.graph.w_psi.value, j);
                r[i][j] = (0..da).map(|k| phi[k] * psi[k]).sum();
            }
        }
    }
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if active[i] {
                s.semantic.row(i).to_vec()
            } else {
                vec![0.0; d2]
            }
        })
        .collect();
    for layer in &m.gcn.layers {
        let (wg, wr) = (&layer.w_g.value, &layer.w_r.value);
        let mut next = x.clone();
        for i in 0..n {
            let p: Vec<f64> = (0..d2)
                .map(|c| (0..n).map(|j| r[i][j] * x[j][c]).sum())
                .collect();
            let t: Vec<f64> = (0..d2)
                .map(|c| (0..d2).map(|k| p[k] * wg[(k, c)]).sum())
                .collect();
            for c in 0..d2 {
                next[i][c] += (0..d2).map(|k| t[k] * wr[(c, k)]).sum::<f64>();
            }
        }
        x = next;
    }
    let ws = &m.fusion.w_s.value;
    let wo = &m.fusion.w_o.value;
    let s_unit = l2(&(0..d2)
        .map(|r| (0..d1).map(|c| ws[(r, c)] * s.scene[c]).sum())
        .collect::<Vec<f64>>());
    let mut f_obj = vec![0.0; d2];
    for i in 0..n {
        let o_unit = l2(&(0..d2)
            .map(|r| (0..d2).map(|c| wo[(r, c)] * x[i][c]).sum())
            .collect::<Vec<f64>>());
        let a = sig((0..d2).map(|k| s_unit[k] * o_unit[k]).sum());
        for c in 0..d2 {
            f_obj[c] += a * x[i][c];
        }
    }
    let f_emo: Vec<f64> = s.scene.iter().chain(&f_obj).copied().collect();
    let w = &m.classifier.w.value;
    (0..m.config.classes)
        .map(|k| (0..f_emo.len()).map(|c| w[(k, c)] * f_emo[c]).sum())
        .collect()
}

#[test]
fn forward_matches_loop_oracle() {
    let cfg = ModelConfig {
        d1: 4,
        d2: 3,
        d_a: 3,
        layers: 2,
        classes: 2,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let model = SolverModel::new(cfg.clone(), AblationMode::FULL, seed).unwrap();
        let s = random_sample(&mut rng, 3, &cfg, seed as usize);
        let got = forward(&model, &s).unwrap().logits;
        let want = loop_oracle(&model, &s);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn zero_classifier_gives_uniform_probs() {
    let mut model = small_model(2, AblationMode::FULL);
    model.classifier.w.value.fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_sample(&mut rng, 5, &small_config(), 0);
    let f = forward(&model, &s).unwrap();
    assert!(f.probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));

    // ∂L/∂W = (p − y) f: the gold row points against f, the others along it
    let mut grads = ModelGrads::zeros_like(&model);
    backward(&model, &s, &f, 1.0, &mut grads).unwrap();
    for k in 0..3 {
        for (c, &x) in f.features.iter().enumerate() {
            let g = grads.classifier[(k, c)];
            let expected = if k == s.label {
                -2.0 / 3.0 * x
            } else {
                x / 3.0
            };
            assert!((g - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn single_object_mode_reads_only_the_top_slot() {
    let model = small_model(4, AblationMode::SINGLE_OBJECT);
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..30 {
        let s = random_sample(&mut rng, 5, &cfg, k);
        let top = (0..5).fold(0, |b, i| {
            if s.confidences[i] > s.confidences[b] {
                i
            } else {
                b
            }
        });
        let mut other = s.clone();
        for i in (0..5).filter(|&i| i != top) {
            other.confidences[i] = rng.random_range(0.0..s.confidences[top].min(0.99));
            for v in other.semantic.row_mut(i) {
                *v = rng.random_range(-3.0..3.0);
            }
        }
        assert_eq!(
            forward(&model, &s).unwrap().logits,
            forward(&model, &other).unwrap().logits
        );
    }
}

#[test]
fn loss_values() {
    let model = small_model(0, AblationMode::FULL);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples: Vec<_> = (0..16)
        .map(|k| random_sample(&mut rng, 4, &small_config(), k))
        .collect();
    let mut total = 0.0;
    for s in &samples {
        let f = forward(&model, s).unwrap();
        total += -f.probs[s.label].ln();
    }
    assert!((batch_loss(&model, &samples).unwrap() - total / 16.0).abs() <= 1e-12);

    let mut f = forward(&model, &samples[0]).unwrap();
    f.probs = vec![0.0, 1.0, 0.0];
    assert_eq!(f.loss(1).unwrap(), 0.0);
    assert!(f.loss(0).unwrap().is_finite());
    f.probs = vec![0.125; 8];
    assert!((f.loss(3).unwrap() - 8f64.ln()).abs() < 1e-15);
    assert!((8f64.ln() - 2.0794).abs() < 1e-4);
}

#[test]
fn backward_is_deterministic() {
    let model = small_model(7, AblationMode::FULL);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = random_sample(&mut rng, 6, &small_config(), 0);
    let run = || {
        let mut g = ModelGrads::zeros_like(&model);
        let f = forward(&model, &s).unwrap();
        backward(&model, &s, &f, 1.0, &mut g).unwrap();
        g.tensors()
            .iter()
            .flat_map(|m| bits(m.data()))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn one_small_step_lowers_the_batch_loss() {
    let syn = SyntheticConfig {
        samples: 64,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&syn, 2, PlantedRule::ObjectPair).unwrap();
    let samples = ds.samples().unwrap();
    let cfg = ModelConfig {
        d1: syn.d1,
        d2: syn.d2,
        d_a: 16,
        classes: syn.classes,
        ..ModelConfig::default()
    };
    let adam = AdamConfig {
        lr: 1e-4,
        ..AdamConfig::default()
    };
    for restart in 0..20 {
        let mut model = SolverModel::new(cfg.clone(), AblationMode::FULL, 100 + restart).unwrap();
        let batch: Vec<&_> = samples[..32].iter().collect();
        let before = batch_loss(&model, &samples[..32]).unwrap();
        emograph::training::batch_gradient(&mut model, &batch).unwrap();
        adam_step(&mut model, &adam, 1).unwrap();
        let after = batch_loss(&model, &samples[..32]).unwrap();
        assert!(after < before, "restart {restart}: {before} -> {after}");
    }
}

#[test]
fn unmasked_equals_masked_when_everything_is_confident() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (masked, unmasked) in [
        ("gcn-mask-two", "gcn-two"),
        ("full", "scene-gcn-two-attention"),
    ] {
        let a = SolverModel::new(cfg.clone(), AblationMode::from_name(masked).unwrap(), 3).unwrap();
        let mut b = a.clone();
        b.mode = AblationMode::from_name(unmasked).unwrap();
        for k in 0..20 {
            let mut s = random_sample(&mut rng, 5, &cfg, k);
            s.confidences
                .iter_mut()
                .for_each(|p| *p = rng.random_range(0.3..1.0));
            assert_eq!(
                forward(&a, &s).unwrap().logits,
                forward(&b, &s).unwrap().logits
            );
        }
    }
}

#[test]
fn evaluation_identities() {
    let syn = SyntheticConfig {
        samples: 120,
        classes: 2,
        noise: 0.0,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&syn, 4, PlantedRule::SceneCluster).unwrap();
    let samples = ds.samples().unwrap();
    let cfg = ModelConfig {
        d1: syn.d1,
        d2: syn.d2,
        d_a: 4,
        classes: 2,
        ..ModelConfig::default()
    };

    // constant predictor: W = 0 ⇒ uniform probs ⇒ always class 0
    let mut constant = SolverModel::new(cfg.clone(), AblationMode::SCENE_ONLY, 0).unwrap();
    constant.classifier.w.value.fill(0.0);
    let ev = evaluate(&constant, &samples).unwrap();
    let zeros = samples.iter().filter(|s| s.label == 0).count();
    assert_eq!(ev.accuracy, zeros as f64 / samples.len() as f64);

    // noiseless scene clusters are linearly separable
    let split = split_dataset(&samples, [1.0, 0.0, 0.0], 0).unwrap();
    let tc = TrainConfig {
        lr: 1e-2,
        epochs: 30,
        decay_every: 0,
        mode: AblationMode::SCENE_ONLY,
        ..TrainConfig::default()
    };
    let out = train(&split, &cfg, &tc).unwrap();
    let ev = evaluate(&out.model, &samples).unwrap();
    assert_eq!(ev.accuracy, 1.0);
    let trace: usize = (0..2).map(|k| ev.confusion[k][k]).sum();
    assert_eq!(trace as f64 / ev.count as f64, ev.accuracy);
    for (k, row) in ev.confusion.iter().enumerate() {
        assert_eq!(
            row.iter().sum::<usize>(),
            samples.iter().filter(|s| s.label == k).count()
        );
    }
}

#[test]
fn region_report_agrees_with_forward() {
    let model = small_model(11, AblationMode::FULL);
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..20 {
        let s = random_sample(&mut rng, 6, &cfg, k);
        let f = forward(&model, &s).unwrap();
        let r = region_report(&model, &s).unwrap();
        assert_eq!(
            r.rows.len(),
            s.confidences.iter().filter(|&&p| p >= 0.3).count()
        );
        for row in &r.rows {
            assert_eq!(row.attention.to_bits(), f.attention[row.slot].to_bits());
        }
        assert!(r.rows.windows(2).all(|w| w[0].attention >= w[1].attention));
    }
}

#[test]
fn region_report_edge_cases() {
    let model = small_model(13, AblationMode::FULL);
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut s = random_sample(&mut rng, 4, &cfg, 0);
    s.confidences = vec![0.1, 0.0, 0.29, 0.2];
    let r = region_report(&model, &s).unwrap();
    assert!(r.rows.is_empty());
    assert!(r.to_text().contains(EMPTY_REPORT_NOTE));

    // duplicated slot: same features, same attention
    let mut d = random_sample(&mut rng, 4, &cfg, 1);
    d.confidences = vec![0.9, 0.9, 0.5, 0.7];
    let (v, o) = (d.visual.row(0).to_vec(), d.semantic.row(0).to_vec());
    d.visual.row_mut(1).copy_from_slice(&v);
    d.semantic.row_mut(1).copy_from_slice(&o);
    d.concepts[1] = d.concepts[0].clone();
    let r = region_report(&model, &d).unwrap();
    let a: Vec<f64> = r
        .rows
        .iter()
        .filter(|x| x.slot < 2)
        .map(|x| x.attention)
        .collect();
    assert_eq!(a[0], a[1]);
    let text = r.to_text();
    assert!(
        text.lines()
            .nth(2)
            .unwrap()
            .split('\t')
            .nth(3)
            .unwrap()
            .len()
            == 5,
        "{text}"
    );
}

#[test]
fn parameters_stay_finite_through_training() {
    let syn = SyntheticConfig {
        samples: 80,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&syn, 5, PlantedRule::ObjectPair).unwrap();
    let split = split_dataset(&ds.samples().unwrap(), [0.8, 0.1, 0.1], 5).unwrap();
    let cfg = ModelConfig {
        d1: syn.d1,
        d2: syn.d2,
        d_a: 8,
        classes: syn.classes,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        lr: 5e-3,
        epochs: 10,
        ..TrainConfig::default()
    };
    let out = train(&split, &cfg, &tc).unwrap();
    assert_eq!(out.metrics.len(), 10);
    assert!(out.model.params().iter().all(|p| p.value.is_finite()));
    // earliest epoch wins ties on validation accuracy
    let best = out.best_epoch.unwrap();
    let best_val = out.metrics[best].val_acc.unwrap();
    assert!(out.metrics.iter().all(|m| m.val_acc.unwrap() <= best_val));
    assert!(out.metrics[..best]
        .iter()
        .all(|m| m.val_acc.unwrap() < best_val));
}
