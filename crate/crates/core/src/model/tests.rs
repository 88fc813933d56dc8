use super::*;
use crate::autodiff::finite_diff_grad;
use crate::data::Category;
use crate::mech::{MechKind, UvaReducedParams};

fn zeroed(cfg: &HybridConfig) -> ParamVector {
    cfg.layout().unwrap()
}

fn random(cfg: &HybridConfig, seed: u64) -> ParamVector {
    cfg.init_params(&mut SeededRng::new(seed)).unwrap()
}

fn toy_episode(nx: usize, t_ctx: usize, q: usize, seed: u64) -> Episode {
    let mut r = SeededRng::new(seed);
    Episode {
        id: format!("e{seed}"),
        dt_minutes: 1.0,
        context: (0..t_ctx).map(|_| (0..=nx).map(|_| r.normal(0.0, 1.0)).collect()).collect(),
        y0: r.normal(0.0, 1.0),
        future_x: (0..q).map(|_| (0..nx).map(|_| r.normal(0.0, 1.0)).collect()).collect(),
        targets: (0..q).map(|_| r.normal(0.0, 1.0)).collect(),
    }
}

fn synthetic_truth(dt: f64) -> (HybridConfig, ParamVector) {
    let mut cfg = HybridConfig::synthetic(Variant::Mechanistic);
    cfg.dt = dt;
    let p = zeroed(&cfg);
    (cfg, p)
}

#[test]
fn zero_field_holds_initial_output() {
    let cfg = HybridConfig::synthetic(Variant::Mnode);
    let y = euler_rollout(&cfg, &zeroed(&cfg), &[0.7], &[], &vec![vec![1.0, -2.0]; 10], None).unwrap();
    assert_eq!(y, vec![0.7; 10]);
}

#[test]
fn geometric_decay() {
    // log-rates zero, no inputs: ds = -s
    let (mut cfg, p) = synthetic_truth(0.5);
    cfg.horizon = 3;
    let y = euler_rollout(&cfg, &p, &[1.0], &[], &vec![vec![0.0, 0.0]; 3], None).unwrap();
    assert_eq!(y, vec![0.5, 0.25, 0.125]);
}

#[test]
fn ground_truth_tracks_analytic_solution() {
    let dt = 0.01;
    let (mut cfg, p) = synthetic_truth(dt);
    cfg.horizon = 300;
    let y = euler_rollout(&cfg, &p, &[0.0], &[], &vec![vec![1.0, 0.0]; 300], None).unwrap();
    for (k, v) in y.iter().enumerate() {
        let t = (k + 1) as f64 * dt;
        assert!((v - (1.0 - (-t).exp())).abs() <= 2.0 * dt, "step {k}");
    }
}

#[test]
fn divergence_reports_step() {
    let (mut cfg, mut p) = synthetic_truth(1.0);
    cfg.horizon = 2000;
    // ds = -e^3 s with dt 1 blows up geometrically
    p.values_mut()[0] = 3.0;
    match euler_rollout(&cfg, &p, &[1.0], &[], &vec![vec![0.0, 0.0]; 2000], None) {
        Err(Error::Divergence { step }) => assert!(step > 1 && step < 2000),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn mechanistic_switch_is_the_mech_field() {
    let cfg = HybridConfig::glucose(Variant::Mechanistic);
    let mut p = zeroed(&cfg);
    let beta: Vec<f64> = (0..MechKind::Full.n_params()).map(|i| 0.1 + 0.01 * i as f64).collect();
    p.slice_mut("mech.beta").unwrap().copy_from_slice(&beta);
    let s: Vec<f64> = (0..20).map(|i| 1.0 + i as f64 * 0.1).collect();
    let x = [0.5, 2.0, 0.0, 0.0];
    let f = hybrid_field(&cfg, &p, &s, &[], &x, 3.0).unwrap();
    let direct = MechKind::Full.field(&s, &[2.0, 0.5], &3.0, &beta).unwrap();
    assert_eq!(f.ds, direct);
    assert!(f.z_next.is_empty());
}

#[test]
fn lp_with_silent_f3_is_mechanistic() {
    let cfg = HybridConfig::glucose(Variant::Lp);
    let mut p = random(&cfg, 5);
    for i in p.indices_with_prefix("nn.f3") {
        p.values_mut()[i] = 0.0;
    }
    let beta = UvaReducedParams::resting_default().to_vec();
    p.slice_mut("mech.beta").unwrap().copy_from_slice(&beta);
    let s = UvaReducedParams::resting_default().resting_state();
    let z = vec![0.3; cfg.latent_dim];
    let f = hybrid_field(&cfg, &p, &s, &z, &[0.0, 0.0, 0.1, 0.2], 0.0).unwrap();
    assert_eq!(f.beta, beta);
    assert_eq!(f.ds, MechKind::Reduced.field(&s, &[0.0, 0.0], &0.0, &beta).unwrap());
}

#[test]
fn lpsc_gate_off_equals_lp() {
    let mut lpsc = HybridConfig::synthetic(Variant::Lpsc);
    let p = random(&lpsc, 8);
    let mut lp = lpsc.clone();
    lp.variant = Variant::Lp;
    lp.graph = None;
    let mut p_lp = lp.layout().unwrap();
    for (name, _) in p_lp.clone().segments() {
        p_lp.slice_mut(name).unwrap().copy_from_slice(p.slice(name).unwrap());
    }
    let z = [0.1, -0.2, 0.3, 0.05];
    let a = hybrid_field(&lpsc, &p, &[0.4], &z, &[1.0, 0.5], 0.0).unwrap();
    let b = hybrid_field(&lp, &p_lp, &[0.4], &z, &[1.0, 0.5], 0.0).unwrap();
    assert_eq!(a, b);
    // closure output layer starts at zero, so opening the gate changes nothing yet
    lpsc.closure_w = 1.0;
    assert_eq!(hybrid_field(&lpsc, &p, &[0.4], &z, &[1.0, 0.5], 0.0).unwrap(), b);
}

#[test]
fn zero_weight_mnode_has_zero_field() {
    let cfg = HybridConfig::glucose(Variant::Mnode);
    let ds = masked_nn_field(&cfg, &zeroed(&cfg), &[1.0; 9], &[1.0; 4]).unwrap();
    assert_eq!(ds, vec![0.0; 9]);
}

#[test]
fn masked_field_respects_graph() {
    let cfg = HybridConfig::glucose(Variant::Mnode);
    let g = cfg.graph.clone().unwrap();
    let p = random(&cfg, 11);
    let mut r = SeededRng::new(12);
    for _ in 0..50 {
        let s: Vec<f64> = (0..9).map(|_| r.normal(0.0, 1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| r.normal(0.0, 1.0)).collect();
        for i in 0..9 {
            let probe = |v: &[f64]| masked_nn_field(&cfg, &p, &v[..9], &v[9..]).unwrap()[i];
            let mut pt = s.clone();
            pt.extend(&x);
            let grad = finite_diff_grad(probe, &pt, 1e-5).unwrap();
            for j in 0..9 {
                if !g.a_s[i][j] {
                    assert_eq!(grad[j], 0.0);
                }
            }
            for k in 0..4 {
                if !g.a_x[i][k] {
                    assert_eq!(grad[9 + k], 0.0);
                }
            }
        }
    }
}

#[test]
fn synthetic_mnode_is_one_three_input_mlp() {
    let cfg = HybridConfig::synthetic(Variant::Mnode);
    let p = zeroed(&cfg);
    assert_eq!(p.segment("nn.f1.s0.l0.w").unwrap().len, 3 * 16);
    assert!(!p.has("nn.f1.s1.l0.w"));
}

#[test]
fn latent_step_cases() {
    let mut cfg = HybridConfig::glucose(Variant::Lp);
    cfg.latent_dim = 2;
    let mut p = zeroed(&cfg);
    p.slice_mut("latent.A").unwrap().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(latent_step(&p, &[0.3, -0.4], &[5.0, 6.0]).unwrap(), vec![0.3, -0.4]);
    p.slice_mut("latent.A").unwrap().copy_from_slice(&[0.0; 4]);
    p.slice_mut("latent.B").unwrap().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(latent_step(&p, &[0.3, -0.4], &[1.0, 1.0]).unwrap(), vec![4.0, 6.0]);
    let mut z = vec![0.0, 0.0];
    p.slice_mut("latent.A").unwrap().copy_from_slice(&[0.9, 0.1, -0.2, 1.1]);
    for _ in 0..10 {
        z = latent_step(&p, &z, &[0.0, 0.0]).unwrap();
    }
    assert_eq!(z, vec![0.0, 0.0]);
    assert!(latent_step(&p, &[0.0; 3], &[0.0, 0.0]).is_err());
}

#[test]
fn encode_initial_rules() {
    let cfg = HybridConfig::synthetic(Variant::Mnode);
    let ctx = vec![vec![0.0, 1.0, 2.0]; 5];
    let (s0, z0) = encode_initial(&cfg, &zeroed(&cfg), &ctx, 0.4).unwrap();
    assert_eq!((s0, z0), (vec![0.4], vec![]));

    let cfg = HybridConfig::glucose(Variant::Mnode);
    let ctx = vec![vec![0.1, 0.2, 0.3, 0.4, 0.5]; 6];
    for seed in 0..3 {
        let (s0, _) = encode_initial(&cfg, &random(&cfg, seed), &ctx, -1.25).unwrap();
        assert_eq!(s0.len(), 9);
        assert_eq!(s0[0], -1.25);
    }

    let cfg = HybridConfig::glucose(Variant::Lp);
    let (s0, z0) = encode_initial(&cfg, &random(&cfg, 1), &ctx, 0.5).unwrap();
    assert_eq!(s0.len(), 9);
    assert_eq!(s0[0], 0.5);
    assert_eq!(z0.len(), cfg.latent_dim);
}

fn reference(cfg: &HybridConfig, p: &ParamVector, s: Vec<f64>, z: Vec<f64>, xs: &[Vec<f64>]) -> Vec<f64> {
    // recursive: y(k) = out(s_k+1), s_{k+1} = s_k + dt f(s_k)
    match xs.split_first() {
        None => vec![],
        Some((x, rest)) => {
            let f = hybrid_field(cfg, p, &s, &z, x, 0.0).unwrap();
            let next: Vec<f64> = s.iter().zip(&f.ds).map(|(a, d)| a + cfg.dt * d).collect();
            let mut out = vec![next[cfg.output_state]];
            out.extend(reference(cfg, p, next, f.z_next, rest));
            out
        }
    }
}

#[test]
fn euler_matches_recursive_reference() {
    let variants = [Variant::Mnode, Variant::Bnode, Variant::Lp, Variant::Lpsc, Variant::Mechanistic];
    let mut r = SeededRng::new(99);
    for case in 0..100 {
        let v = variants[case % variants.len()];
        let mut cfg = HybridConfig::synthetic(v);
        cfg.dt = r.uniform(0.05, 0.5);
        cfg.closure_w = 1.0;
        let mut p = random(&cfg, case as u64);
        if v == Variant::Lpsc {
            for i in p.indices_with_prefix("nn.closure") {
                p.values_mut()[i] = r.normal(0.0, 0.3);
            }
        }
        let s0: Vec<f64> = (0..cfg.n_states()).map(|_| r.normal(0.0, 1.0)).collect();
        let z0: Vec<f64> = (0..if v.uses_latent() { cfg.latent_dim } else { 0 }).map(|_| r.normal(0.0, 0.5)).collect();
        let xs: Vec<Vec<f64>> = (0..cfg.horizon).map(|_| vec![r.normal(0.0, 1.0), r.normal(0.0, 1.0)]).collect();
        let y = euler_rollout(&cfg, &p, &s0, &z0, &xs, None).unwrap();
        let want = reference(&cfg, &p, s0, z0, &xs);
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "case {case}: {a} vs {b}");
        }
    }
}

fn batch_for(cfg: &HybridConfig, eps: &[Episode], sets: &[InterventionSet]) -> Batch {
    let e: Vec<&Episode> = eps.iter().collect();
    let s: Vec<Option<&InterventionSet>> = sets.iter().map(Some).collect();
    Batch::new(cfg, &e, &s, true, 0.0).unwrap()
}

fn toy_set(e: &Episode) -> InterventionSet {
    let mut variants = vec![e.future_x.clone(); 3];
    for (i, v) in variants.iter_mut().enumerate() {
        for row in v.iter_mut() {
            row[0] += i as f64;
        }
    }
    InterventionSet { episode_id: e.id.clone(), category: Category::RaiseX1, variants, true_label: 2 }
}

#[test]
fn gradient_flows_to_every_used_segment() {
    for v in Variant::ALL {
        let mut cfg = HybridConfig::synthetic(v);
        if v == Variant::Mechanistic {
            cfg.init = InitMode::Encoded;
            cfg.mech = Some(MechKind::Reduced);
        }
        cfg.closure_w = 1.0;
        let mut p = random(&cfg, 21);
        for i in p.indices_with_prefix("nn.closure") {
            p.values_mut()[i] = 0.1;
        }
        let eps: Vec<Episode> = (0..3).map(|i| toy_episode(2, 6, 10, i)).collect();
        let sets: Vec<InterventionSet> = eps.iter().map(toy_set).collect();
        let batch = batch_for(&cfg, &eps, &sets);
        let tape = Tape::new();
        let obj = objective(&cfg, &p, &tape, &batch, 0.5, 1.0, ScoreFn::Mean, false, None).unwrap();
        let g = tape.gradient(&obj.total, p.len()).unwrap();
        for (name, seg) in p.segments() {
            assert!(seg.len == 0 || g[seg.range()].iter().any(|v| *v != 0.0), "{v:?}: {name} has no gradient");
        }
    }
}

#[test]
fn gated_closure_gets_no_gradient() {
    let cfg = HybridConfig::synthetic(Variant::Lpsc);
    let p = random(&cfg, 2);
    let eps: Vec<Episode> = (0..3).map(|i| toy_episode(2, 4, 10, i)).collect();
    let batch = batch_for(&cfg, &eps, &[]);
    let tape = Tape::new();
    let obj = objective(&cfg, &p, &tape, &batch, 0.0, 1.0, ScoreFn::Mean, false, None).unwrap();
    let g = tape.gradient(&obj.total, p.len()).unwrap();
    for i in p.indices_with_prefix("nn.closure") {
        assert_eq!(g[i], 0.0);
    }
}

#[test]
fn objective_without_sets_is_predictive() {
    let cfg = HybridConfig::synthetic(Variant::Mnode);
    let p = random(&cfg, 4);
    let eps: Vec<Episode> = (0..3).map(|i| toy_episode(2, 4, 10, i)).collect();
    let sets: Vec<InterventionSet> = eps.iter().map(toy_set).collect();
    let batch = batch_for(&cfg, &eps, &sets);
    let tape = Tape::new();
    let o = objective(&cfg, &p, &tape, &batch, 0.0, 1.0, ScoreFn::Mean, false, None).unwrap();
    assert!(o.causal.is_none());
    assert_eq!(o.total.item(), o.predictive);
    let tape = Tape::new();
    let o = objective(&cfg, &p, &tape, &batch, 1.0, 1.0, ScoreFn::Mean, false, None).unwrap();
    assert_eq!(o.total.item(), o.causal.unwrap());
}

fn model(v: Variant, seed: u64) -> TrainedModel {
    let cfg = HybridConfig::synthetic(v);
    let p = random(&cfg, seed);
    TrainedModel::new(cfg, p, Standardizer { mean: vec![0.5, 1.0, -1.0], std: vec![2.0, 0.5, 3.0] }).unwrap()
}

#[test]
fn save_load_predict_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let e = toy_episode(2, 8, 10, 3);
    for v in Variant::ALL {
        let m = model(v, 7);
        let before = m.predict(&e).unwrap();
        assert_eq!(before, m.predict(&e).unwrap());
        let path = dir.path().join(format!("{}.json", v.name()));
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back, m);
        let after = back.predict(&e).unwrap();
        assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn load_rejects_mismatched_layout() {
    let m = model(Variant::Mnode, 1);
    let mut other = m.clone();
    other.config.mlp.hidden_units = 8;
    assert!(TrainedModel::from_json(&other.to_json().unwrap()).is_err());
}

#[test]
fn counterfactual_shapes_and_null_intervention() {
    let e = toy_episode(2, 8, 10, 5);
    for v in Variant::ALL {
        let m = model(v, 9);
        let mut set = toy_set(&e);
        set.variants[1] = e.future_x.clone();
        let cf = m.counterfactual(&e, &set).unwrap();
        assert_eq!(cf.len(), 3);
        assert!(cf.iter().all(|t| t.len() == 10));
        assert_eq!(cf[1], m.predict(&e).unwrap());
    }
}

#[test]
fn truth_model_ranks_raised_x1_higher() {
    let mut cfg = HybridConfig::synthetic(Variant::Mechanistic);
    cfg.dt = 0.01;
    let m = TrainedModel::new(cfg.clone(), zeroed(&cfg), Standardizer::identity(3)).unwrap();
    let e = toy_episode(2, 4, 10, 2);
    let set = toy_set(&e);
    let cf = m.counterfactual(&e, &set).unwrap();
    let means: Vec<f64> = cf.iter().map(|t| t.iter().sum::<f64>() / t.len() as f64).collect();
    assert!(means[0] < means[1] && means[1] < means[2]);
}

#[test]
fn lstm_has_no_field() {
    let cfg = HybridConfig::synthetic(Variant::Lstm);
    assert!(matches!(hybrid_field(&cfg, &zeroed(&cfg), &[0.0; 8], &[], &[0.0, 0.0], 0.0), Err(Error::Contract(_))));
}
