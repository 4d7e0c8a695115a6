use furl_core::align::HeadKind;
use furl_core::env::{PointMassEnv, Task};
use furl_core::experiment::{build, run, summarize, Algo, EvalRow, ExperimentConfig, NullSink, RewardMode, Wiring};
use furl_core::rng::Rng;
use furl_core::sac::VlmReward;
use rand::{Rng as _, SeedableRng};

fn small(algo: Algo, steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(algo, Task::TrapReach);
    cfg.total_steps = steps;
    cfg.eval_every = 500;
    cfg.eval_episodes = 2;
    cfg.sac.hidden = vec![16, 16];
    cfg.sac.batch_size = 16;
    cfg.sac.warmup_steps = 200;
    cfg.heads.hidden = vec![8];
    cfg.heads.out_dim = 8;
    cfg.align.batch_pairs = 8;
    cfg
}

#[test]
fn wiring_matrix() {
    let w = |a| Wiring::for_algo(a, 0.05);
    assert!(!w(Algo::Sac).uses_oracle());
    assert_eq!(w(Algo::Sac).task_weight, 1.0);
    assert_eq!((w(Algo::VlmOnly).task_weight, w(Algo::VlmOnly).vlm_weight), (0.0, 1.0));
    assert_eq!(w(Algo::VlmPlusTask).heads, HeadKind::Identity);
    assert_eq!(w(Algo::RandomProj).heads, HeadKind::Frozen);
    assert!(!w(Algo::RandomProj).aligns());
    assert!(w(Algo::Relay).relay && !w(Algo::Relay).aligns());
    let furl = w(Algo::Furl);
    assert!(furl.relay && furl.stage1 && furl.stage2 && furl.heads == HeadKind::Trainable);
    assert_eq!(w(Algo::FurlNoRelay), Wiring { relay: false, ..furl });
    assert_eq!(w(Algo::FurlNoStage2), Wiring { stage2: false, ..furl });
    assert_eq!(w(Algo::FurlNoGoalImage), Wiring { stage1: false, ..furl });
    assert_eq!(w(Algo::FurlNoStage1), w(Algo::FurlNoGoalImage));
    for a in Algo::ALL {
        assert_eq!(Algo::from_name(a.name()), Some(a));
    }
}

#[test]
fn zero_rho_without_alignment_is_relay_wiring() {
    let furl = Wiring::for_algo(Algo::Furl, 0.0);
    let relay = Wiring::for_algo(Algo::Relay, 0.0);
    assert_eq!(furl, relay);
    assert!(!furl.uses_oracle());
    let b = build(&ExperimentConfig { rho: 0.0, ..small(Algo::Furl, 0) }).unwrap();
    assert!(b.buffers.is_none());
    assert!(b.sac_agent.is_some());
    assert_eq!(b.heads.kind(), HeadKind::Identity);
}

#[test]
fn sac_never_consults_the_oracle() {
    let out = run(&small(Algo::Sac, 600), &mut NullSink).unwrap();
    assert_eq!(out.log.counters.oracle_image_calls, 0);
    assert_eq!(out.log.counters.vlm_reward_batches, 0);
    assert!(out.log.counters.task_reward_batches > 0);
}

#[test]
fn vlm_only_reward_is_a_pure_cosine() {
    let cfg = small(Algo::VlmOnly, 0);
    let b = build(&cfg).unwrap();
    let rf = VlmReward::new(&b.heads, &b.lang, b.wiring.vlm_weight, b.wiring.task_weight).unwrap();
    let mut env = PointMassEnv::new(cfg.env.clone()).unwrap();
    let mut rng = Rng::seed_from_u64(4);
    env.reset(&mut rng);
    let mut seen = 0;
    while seen < 1000 {
        let res = env.step(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).unwrap();
        let img = b.oracle.embed_image(&res.obs.visual_feature).unwrap();
        let r = rf.single(&img, res.r_task).unwrap();
        assert!((-1.0..=1.0).contains(&r), "reward {r}");
        let raw = b.oracle.raw_vlm_reward(&res.obs, cfg.env.task).unwrap();
        assert!((r - raw).abs() < 1e-12);
        seen += 1;
        if res.done {
            env.reset(&mut rng);
        }
    }
    let out = run(&small(Algo::VlmOnly, 400), &mut NullSink).unwrap();
    assert_eq!(out.log.counters.task_reward_batches, 0);
    assert!(out.log.counters.vlm_reward_batches > 0);
}

#[test]
fn zero_steps_gives_one_eval_row() {
    let out = run(&small(Algo::Furl, 0), &mut NullSink).unwrap();
    assert_eq!(out.log.eval.len(), 1);
    assert_eq!(out.log.eval[0].env_step, 0);
    assert!(out.log.relay.is_empty());
}

#[test]
fn identical_seeds_identical_runs() {
    for algo in [Algo::Furl, Algo::Sac] {
        let a = run(&small(algo, 1200), &mut NullSink).unwrap();
        let b = run(&small(algo, 1200), &mut NullSink).unwrap();
        assert_eq!(a.log.eval, b.log.eval);
        assert_eq!(a.log.summary, b.log.summary);
        assert_eq!(a.log.relay, b.log.relay);
        assert_eq!(a.heads.img, b.heads.img);
    }
    let c = run(&ExperimentConfig { seed: 99, ..small(Algo::Sac, 1200) }, &mut NullSink).unwrap();
    let a = run(&small(Algo::Sac, 1200), &mut NullSink).unwrap();
    assert_ne!(a.log.eval, c.log.eval);
}

#[test]
fn eval_rows_increase_and_auc_matches_trapezoid() {
    let out = run(&small(Algo::Relay, 1700), &mut NullSink).unwrap();
    let steps: Vec<usize> = out.log.eval.iter().map(|r| r.env_step).collect();
    assert_eq!(steps, [0, 500, 1000, 1500, 1700]);
    assert!(steps.windows(2).all(|w| w[0] < w[1]));

    let rows = [(0, 0.0), (500, 0.5), (1000, 0.5), (2000, 1.0)].map(|(s, y)| EvalRow {
        env_step: s,
        success_rate: y,
        mean_return: 0.0,
        alpha: 1.0,
        q_loss: 0.0,
    });
    let mut area = 0.0;
    for w in rows.windows(2) {
        area += (w[1].env_step - w[0].env_step) as f64 * 0.5 * (w[0].success_rate + w[1].success_rate);
    }
    let s = summarize(&rows, None, 0);
    assert!((s.auc - area / 2000.0).abs() < 1e-12);
    assert_eq!(s.final_success, 1.0);
}

#[test]
fn relay_rows_cover_each_episode() {
    let out = run(&small(Algo::Relay, 1000), &mut NullSink).unwrap();
    for row in &out.log.relay {
        let total: usize = row.segments.iter().map(|s| s.2 - s.1).sum();
        assert_eq!(row.segments[0].1, 0);
        assert!(total <= 200);
        if row.relay_t > 0 && total > row.relay_t {
            assert!(row.segments.len() >= 2);
            assert_eq!(row.segments[0].2, row.relay_t);
        }
    }
    let no_relay = run(&small(Algo::FurlNoRelay, 600), &mut NullSink).unwrap();
    assert!(no_relay.log.relay.iter().all(|r| r.relay_t == 0 && r.segments.len() == 1));
    assert_eq!(no_relay.log.counters.sac_updates, 0);
}

#[test]
fn training_leaves_the_oracle_untouched() {
    for algo in [Algo::Furl, Algo::RandomProj] {
        let out = run(&small(algo, 800), &mut NullSink).unwrap();
        assert_eq!(out.oracle.checksum(), out.oracle_checksum_before);
    }
    let furl = run(&small(Algo::Furl, 800), &mut NullSink).unwrap();
    assert!(furl.log.counters.stage1_updates > 0);
    let frozen = run(&small(Algo::RandomProj, 800), &mut NullSink).unwrap();
    assert_eq!(frozen.heads.update_count(), 0);
}

#[test]
fn stored_rewards_also_run() {
    let cfg = ExperimentConfig { reward_mode: RewardMode::StoreAtCollect, ..small(Algo::VlmPlusTask, 500) };
    let out = run(&cfg, &mut NullSink).unwrap();
    assert!(out.log.counters.vlm_reward_batches > 0);
}

#[test]
fn invalid_configs_fail_before_compute() {
    assert!(build(&ExperimentConfig { rho: -1.0, ..small(Algo::Furl, 10) }).is_err());
    assert!(build(&ExperimentConfig { eval_every: 0, ..small(Algo::Furl, 10) }).is_err());
    let mut cfg = small(Algo::Furl, 10);
    cfg.oracle.epsilon = 1.5;
    assert!(build(&cfg).is_err());
}

#[test]
fn a_longer_run_extends_a_shorter_one() {
    let short = run(&small(Algo::Furl, 1000), &mut NullSink).unwrap();
    let long = run(&small(Algo::Furl, 2000), &mut NullSink).unwrap();
    assert_eq!(short.log.eval[..], long.log.eval[..short.log.eval.len()]);
    let finished = short.log.relay.len() - 1;
    assert_eq!(short.log.relay[..finished], long.log.relay[..finished]);
}
