use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikegpf::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn combine(s: &[Vec<f64>], b: &Tensor) -> Vec<Vec<f64>> {
    s.iter()
        .map(|si| {
            (0..b.cols())
                .map(|j| (0..b.rows()).map(|k| si[k] * b.get(k, j)).sum())
                .collect()
        })
        .collect()
}

fn spiking(
    variant: PromptVariant,
    mu: f64,
    gamma: f64,
    t: usize,
    n: usize,
    k: usize,
    d: usize,
    seed: u64,
) -> (Tensor, PromptModel) {
    let mut r = rng(seed);
    let x = Tensor::uniform(n, d, 1.0, &mut r);
    let cfg = SpikingConfig::new(mu, gamma, t).unwrap();
    let model = PromptModel::new(variant, k, d, Some(cfg), &mut r).unwrap();
    (x, model)
}

#[test]
fn gpf_plus_matches_hand_rolled_oracle() {
    let mut r = rng(3);
    let x = Tensor::uniform(4, 5, 1.0, &mut r);
    let model = PromptModel::new(PromptVariant::GpfPlus, 3, 5, None, &mut r).unwrap();
    let out = gpf_plus_prompt(&x, &model).unwrap();

    let s: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            naive_softmax(
                &(0..3)
                    .map(|k| dot(x.row(i), model.projection().row(k)))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let p = combine(&s, model.atoms());
    for i in 0..4 {
        for k in 0..3 {
            assert!((out.coefficients.get(i, k) - s[i][k]).abs() < 1e-12);
        }
        for j in 0..5 {
            assert!((out.prompts.get(i, j) - p[i][j]).abs() < 1e-12);
            assert!(
                (out.prompted_features.get(i, j) - x.get(i, j) - out.prompts.get(i, j)).abs()
                    < 1e-12
            );
        }
    }
}

#[test]
fn single_atom_gpf_plus_reduces_to_gpf() {
    let mut r = rng(4);
    let x = Tensor::uniform(6, 3, 1.0, &mut r);
    let b = Tensor::uniform(1, 3, 1.0, &mut r);
    let plus = PromptModel::from_parts(
        PromptVariant::GpfPlus,
        b.clone(),
        Tensor::uniform(1, 3, 1.0, &mut r),
        None,
    )
    .unwrap();
    let out = gpf_plus_prompt(&x, &plus).unwrap();
    assert_eq!(out.coefficients, Tensor::ones(6, 1));
    for i in 0..6 {
        assert_eq!(out.prompts.row(i), b.row(0));
    }
}

#[test]
fn spiking_prompt_matches_oracle_composition() {
    let (x, model) = spiking(PromptVariant::SpikingGpf, 0.05, 0.1, 4, 4, 3, 5, 11);
    let out = spiking_prompt(&x, &model).unwrap();

    let h: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            (0..3)
                .map(|k| {
                    let alpha = dot(x.row(i), model.projection().row(k));
                    oracle_simulate(ChainKind::If, alpha, 0.05, 4).average
                })
                .collect()
        })
        .collect();
    let s: Vec<Vec<f64>> = h.iter().map(|row| naive_softmax(row)).collect();
    let sb = combine(&s, model.atoms());
    let pre = out.pre_softmax.as_ref().unwrap();
    for i in 0..4 {
        for k in 0..3 {
            assert_eq!(pre.get(i, k), h[i][k]);
            assert!((out.coefficients.get(i, k) - s[i][k]).abs() < 1e-12);
        }
        for j in 0..5 {
            assert_eq!(
                out.prompts.get(i, j),
                oracle_simulate(ChainKind::SignedIf, sb[i][j], 0.1, 4).average
            );
        }
    }
}

#[test]
fn ablation_variants_follow_their_paths() {
    let (x, s_only) = spiking(PromptVariant::SpikingSOnly, 0.1, 0.1, 4, 5, 3, 4, 12);
    let out = spiking_prompt(&x, &s_only).unwrap();
    let dense = out.coefficients.matmul(s_only.atoms()).unwrap();
    assert_eq!(out.prompts, dense);

    let p_only = PromptModel::from_parts(
        PromptVariant::SpikingPOnly,
        s_only.atoms().clone(),
        s_only.projection().clone(),
        s_only.spiking().copied(),
    )
    .unwrap();
    let plus = PromptModel::from_parts(
        PromptVariant::GpfPlus,
        s_only.atoms().clone(),
        s_only.projection().clone(),
        None,
    )
    .unwrap();
    let p_out = spiking_prompt(&x, &p_only).unwrap();
    let reference = gpf_plus_prompt(&x, &plus).unwrap();
    assert_eq!(p_out.coefficients, reference.coefficients);
    assert_eq!(
        p_out.prompts,
        signed_if_chain(&reference.prompts, s_only.spiking().unwrap()).unwrap()
    );
}

#[test]
fn p_only_below_smallest_drive_is_sign() {
    let (x, model) = spiking(PromptVariant::SpikingPOnly, 0.1, 0.1, 1, 6, 3, 4, 13);
    let sb = gpf_plus_prompt(
        &x,
        &PromptModel::from_parts(
            PromptVariant::GpfPlus,
            model.atoms().clone(),
            model.projection().clone(),
            None,
        )
        .unwrap(),
    )
    .unwrap()
    .prompts;
    let smallest = sb
        .data()
        .iter()
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min);
    let cfg = SpikingConfig::new(0.1, smallest * 0.999, 1).unwrap();
    let boundary = PromptModel::from_parts(
        PromptVariant::SpikingPOnly,
        model.atoms().clone(),
        model.projection().clone(),
        Some(cfg),
    )
    .unwrap();
    let out = spiking_prompt(&x, &boundary).unwrap();
    assert_eq!(out.prompts, sb.map(f64::signum));
}

#[test]
fn tiny_threshold_at_one_step_saturates_positive_scores() {
    let mut r = rng(14);
    let x = Tensor::uniform(8, 4, 1.0, &mut r).map(f64::abs);
    let w = Tensor::uniform(3, 4, 1.0, &mut r).map(|v| v.abs() + 0.01);
    let b = Tensor::uniform(3, 4, 1.0, &mut r);
    let cfg = SpikingConfig::new(1e-12, 0.1, 1).unwrap();
    let model = PromptModel::from_parts(PromptVariant::SpikingGpf, b, w, Some(cfg)).unwrap();
    let out = spiking_prompt(&x, &model).unwrap();
    assert_eq!(out.pre_softmax.unwrap(), Tensor::ones(8, 3));
    assert!(out
        .coefficients
        .data()
        .iter()
        .all(|&s| (s - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn huge_thresholds() {
    let (x, m) = spiking(PromptVariant::SpikingGpf, 1e9, 1e9, 4, 5, 3, 4, 15);
    let out = spiking_prompt(&x, &m).unwrap();
    assert!(out
        .pre_softmax
        .as_ref()
        .unwrap()
        .data()
        .iter()
        .all(|&h| h == 0.0));
    assert_eq!(out.prompted_features, x);
    let report = prompt_sparsity_report(&out);
    assert_eq!(report.sparsity_p, 1.0);
    assert_eq!(report.atoms_active_per_node, 0.0);
}

#[test]
fn sparsity_report_matches_recount() {
    let (x, m) = spiking(PromptVariant::SpikingGpf, 0.05, 0.1, 4, 20, 5, 6, 16);
    let out = spiking_prompt(&x, &m).unwrap();
    let report = prompt_sparsity_report(&out);

    let pre = out.pre_softmax.as_ref().unwrap();
    let mut zeros_h = 0;
    for i in 0..pre.rows() {
        for k in 0..pre.cols() {
            zeros_h += usize::from(pre.get(i, k) == 0.0);
        }
    }
    let mut zeros_p = 0;
    for i in 0..out.prompts.rows() {
        for j in 0..out.prompts.cols() {
            zeros_p += usize::from(out.prompts.get(i, j) == 0.0);
        }
    }
    let mut active = 0;
    for i in 0..20 {
        for k in 0..5 {
            active += usize::from(out.coefficients.get(i, k) > 0.2);
        }
    }
    assert_eq!(report.sparsity_s_pre_softmax, zeros_h as f64 / 100.0);
    assert_eq!(report.sparsity_p, zeros_p as f64 / 120.0);
    assert_eq!(report.atoms_active_per_node, active as f64 / 20.0);
}

#[test]
fn spiking_gradients_reach_atoms_and_projection() {
    let (x, m) = spiking(PromptVariant::SpikingGpf, 0.05, 0.05, 4, 6, 3, 4, 17);
    let targets: Vec<usize> = (0..6).map(|i| i % 4).collect();
    let mut tape = Tape::new();
    let xv = tape.constant(x).unwrap();
    let b = tape.param(m.atoms().clone()).unwrap();
    let w = tape.param(m.projection().clone()).unwrap();
    let vars = m.build(&mut tape, xv, b, w).unwrap();
    let loss = tape.cross_entropy(vars.prompted, &targets).unwrap();
    let grads = tape.backward(loss).unwrap();
    for v in [b, w] {
        let g = grads.get(v).expect("gradient recorded");
        assert!(g.is_finite());
        assert!(g.data().iter().any(|&e| e != 0.0));
    }
}

#[test]
fn gpf_atom_gradient_counts_nodes() {
    let mut r = rng(18);
    let n = 7;
    let x = Tensor::uniform(n, 3, 1.0, &mut r);
    let m = PromptModel::new(PromptVariant::Gpf, 1, 3, None, &mut r).unwrap();
    let mut tape = Tape::new();
    let xv = tape.constant(x).unwrap();
    let b = tape.param(m.atoms().clone()).unwrap();
    let w = tape.constant(m.projection().clone()).unwrap();
    let vars = m.build(&mut tape, xv, b, w).unwrap();
    let loss = tape.sum(vars.prompts).unwrap();
    let g = tape.backward(loss).unwrap();
    assert!(g.get(b).unwrap().data().iter().all(|&v| v == n as f64));
}

proptest! {
    #[test]
    fn coefficient_rows_sum_to_one_and_prompts_quantize(
        seed in any::<u64>(),
        variant_idx in 0usize..5,
        horizon in 1usize..=8,
        threshold in 0.005f64..0.3,
    ) {
        let variant = PromptVariant::ALL[variant_idx];
        let mut r = rng(seed);
        let (n, k, d) = (r.random_range(1..8), r.random_range(1..5), r.random_range(1..6));
        let x = Tensor::uniform(n, d, 1.0, &mut r);
        let cfg = variant.is_spiking().then(|| SpikingConfig::new(threshold, threshold, horizon).unwrap());
        let m = PromptModel::new(variant, k, d, cfg, &mut r).unwrap();
        let out = m.forward(&x).unwrap();
        for i in 0..n {
            let sum: f64 = out.coefficients.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
        if variant.spiking_prompts() {
            for &p in out.prompts.data() {
                let scaled = p * horizon as f64;
                prop_assert!((-1.0..=1.0).contains(&p) && (scaled - scaled.round()).abs() < 1e-9);
            }
        }
        let residual = out.prompted_features.add(&x.scale(-1.0)).unwrap().add(&out.prompts.scale(-1.0)).unwrap();
        prop_assert!(residual.data().iter().all(|v| v.abs() <= 1e-12));
    }
}
