mod common;

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use oam_memory::cli::{load_config_str, run};
use oam_memory::dynamics::{
    hamiltonian_entangled, hamiltonian_single, integrate, linear_grid, modes, CollapseChannel, ControlEnvelope,
    IntegratorOptions, LindbladSystem,
};
use oam_memory::hilbert::{
    annihilation, creation, fock_ket, superpose, CompositeSpace, StateMatrix,
};
use oam_memory::metrics::{fidelity, log_negativity, ClassicalBound};
use oam_memory::protocols::{
    build_system, make_entangled_input, run_protocol, sample_times, schedule, InitialState, ScenarioConfig, ScenarioKind, Timing,
};
use proptest::prelude::*;

use common::*;

fn lossy_pair(g: f64, gamma_a: f64, gamma_c: f64, offset: f64, cutoff: usize) -> LindbladSystem {
    let s = CompositeSpace::uniform(&[modes::A_ELL, modes::C], cutoff).unwrap();
    let h = hamiltonian_single(&s, g, offset).unwrap();
    let ch = vec![
        CollapseChannel::damping(&s, modes::A_ELL, gamma_a).unwrap(),
        CollapseChannel::damping(&s, modes::C, gamma_c).unwrap(),
    ];
    LindbladSystem::new(h, ch).unwrap()
}

// ---- operator algebra ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn commutator_deviates_only_on_top_level(cutoff in 2usize..7, which in 0usize..2) {
        let space = CompositeSpace::uniform(&["x", "y"], cutoff).unwrap();
        let label = ["x", "y"][which];
        let a = annihilation(&space, label).unwrap();
        let ad = creation(&space, label).unwrap();
        let comm = &(&a * &ad) - &(&ad * &a);
        let pos = space.position(label).unwrap();
        for i in 0..space.dim() {
            for j in 0..space.dim() {
                let expect = if i != j {
                    0.0
                } else if space.occupations_of(i)[pos] == cutoff - 1 {
                    1.0 - cutoff as f64
                } else {
                    1.0
                };
                prop_assert!((comm.data()[(i, j)] - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn disjoint_mode_operators_commute(cutoff in 2usize..5) {
        let space = CompositeSpace::uniform(&["x", "y", "z"], cutoff).unwrap();
        let a = annihilation(&space, "x").unwrap();
        let b = creation(&space, "z").unwrap();
        let n = &creation(&space, "y").unwrap() * &annihilation(&space, "y").unwrap();
        for (p, q) in [(&a, &b), (&a, &n), (&b, &n)] {
            let c = &(p * q) - &(q * p);
            prop_assert_eq!(c.data().norm(), 0.0);
        }
    }

    #[test]
    fn partial_trace_inverts_tensor(seed in any::<u64>(), cutoff in 2usize..5) {
        let mut r = rng(seed);
        let sa = CompositeSpace::single("a", cutoff).unwrap();
        let sb = CompositeSpace::uniform(&["b", "c"], 2).unwrap();
        let rho = random_state(&mut r, &sa);
        let sigma = random_state(&mut r, &sb);
        let joint = rho.tensor(&sigma).unwrap();
        let back = joint.partial_trace(&["a"]).unwrap();
        prop_assert!((back.data() - rho.data()).norm() < 1e-12);
        let back = joint.partial_trace(&["b", "c"]).unwrap();
        prop_assert!((back.data() - sigma.data()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_keeps_a_valid_state(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = CompositeSpace::uniform(&["a", "b", "c"], 3).unwrap();
        let rho = random_state(&mut r, &s);
        for keep in [vec!["a"], vec!["b"], vec!["a", "c"]] {
            let red = rho.partial_trace(&keep).unwrap();
            prop_assert!((red.trace() - 1.0).abs() < 1e-12);
            prop_assert!((red.data() - red.data().adjoint()).norm() < 1e-12);
            prop_assert!(red.min_eigenvalue() >= -1e-8);
        }
    }

    #[test]
    fn partial_transpose_is_an_involution(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = CompositeSpace::uniform(&["a", "b", "c"], 2).unwrap();
        let rho = random_state(&mut r, &s);
        for sub in [vec!["a"], vec!["b", "c"], vec!["c"]] {
            let pt = rho.partial_transpose(&sub).unwrap();
            prop_assert!((pt.trace().re - 1.0).abs() < 1e-12);
            prop_assert!(pt.is_hermitian(1e-12));
            let twice = pt.partial_transpose(&sub).unwrap();
            prop_assert!((twice.data() - rho.data()).norm() < 1e-14);
        }
    }
}

// ---- dynamics ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lossy_evolution_keeps_trace_and_positivity(
        seed in any::<u64>(),
        g_khz in 1.0f64..8.0,
        loss in 0.05f64..1.5,
        detune in -2.0f64..2.0,
        storage_ms in 0.0f64..2.0,
    ) {
        let g = 2.0 * PI * g_khz * 1e3;
        let sys = lossy_pair(g, loss * g, 0.02 * loss * g, detune * g, 3);
        let rho0 = random_state(&mut rng(seed), sys.space());
        let env = ControlEnvelope::write_store_read(g, storage_ms * 1e-3).unwrap();
        let cps: Vec<f64> = env.segments().iter().map(|s| s.end).collect();
        let opts = IntegratorOptions { checkpoints: cps, ..Default::default() };
        let samples = linear_grid(0.0, env.t_final(), env.t_final() / 40.0);
        let traj = integrate(&sys, &rho0, &env, &samples, &opts).unwrap();
        for t in traj.series("trace").unwrap() {
            prop_assert!((t - 1.0).abs() < 1e-6);
        }
        for cp in &traj.checkpoints {
            prop_assert!(cp.min_eigenvalue >= -1e-6, "{}", cp.min_eigenvalue);
        }
    }

    #[test]
    fn lossless_swap_follows_rabi_formula(g_khz in 0.5f64..20.0) {
        let g = 2.0 * PI * g_khz * 1e3;
        let sys = lossy_pair(g, 0.0, 0.0, 0.0, 2);
        let rho0 = fock_ket(sys.space(), &[1, 0]).unwrap();
        // one write plus one read
        let t_end = PI / g;
        let env = ControlEnvelope::constant(t_end, 1.0, g).unwrap();
        let samples = linear_grid(0.0, t_end, t_end / 61.0);
        let traj = integrate(&sys, &rho0, &env, &samples, &IntegratorOptions::default()).unwrap();
        let na = traj.occupation(modes::A_ELL).unwrap();
        let nc = traj.occupation(modes::C).unwrap();
        for (k, &t) in traj.times.iter().enumerate() {
            let (c, s) = ((g * t).cos(), (g * t).sin());
            prop_assert!((na[k] - c * c).abs() < 1e-7);
            prop_assert!((nc[k] - s * s).abs() < 1e-7);
        }
    }

    #[test]
    fn closed_form_storage_matches_brute_force(
        seed in any::<u64>(),
        gamma_a_khz in 0.1f64..3.0,
        gamma_c_hz in 0.0f64..50.0,
        offset_hz in -500.0f64..500.0,
        duration_ms in 0.01f64..3.0,
    ) {
        let g = 2.0 * PI * 4e3;
        let sys = lossy_pair(g, 2.0 * PI * gamma_a_khz * 1e3, 2.0 * PI * gamma_c_hz, 2.0 * PI * offset_hz, 3);
        let rho0 = random_state(&mut rng(seed), sys.space());
        let t = duration_ms * 1e-3;
        let env = ControlEnvelope::constant(t, 0.0, g).unwrap();
        let run = |analytic| {
            let opts = IntegratorOptions { analytic_storage: analytic, ..Default::default() };
            integrate(&sys, &rho0, &env, &[t], &opts).unwrap().final_state
        };
        let diff = (run(true).data() - run(false).data()).norm();
        prop_assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn excitations_conserved_without_loss(seed in any::<u64>(), detune in -1.0f64..1.0) {
        let g = 2.0 * PI * 3e3;
        let sys = lossy_pair(g, 0.0, 0.0, detune * g, 4);
        let rho0 = random_state(&mut rng(seed), sys.space());
        let env = ControlEnvelope::constant(5.0 / g, 1.0, g).unwrap();
        let samples = linear_grid(0.0, env.t_final(), env.t_final() / 20.0);
        let traj = integrate(&sys, &rho0, &env, &samples, &IntegratorOptions::default()).unwrap();
        let na = traj.occupation(modes::A_ELL).unwrap();
        let nc = traj.occupation(modes::C).unwrap();
        for k in 0..na.len() {
            prop_assert!((na[k] + nc[k] - na[0] - nc[0]).abs() < 1e-8);
        }
    }
}

// ---- metrics ----

#[test]
fn fidelity_and_negativity_match_oracles_on_random_states() {
    let mut r = rng(0x5eed);
    let two = CompositeSpace::uniform(&["a", "b"], 2).unwrap();
    let four = CompositeSpace::uniform(&["a", "b", "c", "d"], 2).unwrap();
    let wide = CompositeSpace::uniform(&["a", "b"], 4).unwrap();
    let mut worst_f: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    for (space, split, dims) in [
        (&two, vec!["a"], (2, 2)),
        (&four, vec!["a", "b"], (4, 4)),
        (&wide, vec!["a"], (4, 4)),
    ] {
        for _ in 0..50 {
            let a = random_state(&mut r, space);
            let b = random_state(&mut r, space);
            let f = fidelity(&a, &b).unwrap();
            worst_f = worst_f.max((f - fidelity_oracle(a.data(), b.data())).abs());
            let e = log_negativity(&a, &split).unwrap();
            worst_e = worst_e.max((e - log_negativity_oracle(a.data(), dims.0, dims.1)).abs());
        }
    }
    assert!(worst_f < 1e-9, "fidelity deviation {worst_f:e}");
    assert!(worst_e < 1e-9, "log-negativity deviation {worst_e:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fidelity_symmetric_and_unitarily_invariant(seed in any::<u64>(), dim_pick in 0usize..2) {
        let mut r = rng(seed);
        let space = if dim_pick == 0 {
            CompositeSpace::uniform(&["a", "b"], 2).unwrap()
        } else {
            CompositeSpace::uniform(&["a", "b"], 3).unwrap()
        };
        let a = random_state(&mut r, &space);
        let b = random_state(&mut r, &space);
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        prop_assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-10);
        let u = random_unitary(&mut r, space.dim());
        let rot = |s: &StateMatrix| {
            let m = &u * s.data() * u.adjoint();
            let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
            StateMatrix::new(space.clone(), m).unwrap()
        };
        let g = fidelity(&rot(&a), &rot(&b)).unwrap();
        prop_assert!((f - g).abs() < 1e-9, "{f} vs {g}");
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn classical_bounds_are_exact() {
    assert_eq!(ClassicalBound::QubitMemory(1).value().unwrap(), 2.0 / 3.0);
    assert_eq!(ClassicalBound::Teleport(4).value().unwrap(), 2.0 / 5.0);
    let mut last = 0.0;
    for n in 1..60 {
        let v = ClassicalBound::QubitMemory(n).value().unwrap();
        assert!(v > last && v < 1.0);
        last = v;
    }
    assert!(1.0 - last < 0.02);
}

#[test]
fn entangled_input_carries_one_ebit() {
    let rho = make_entangled_input().unwrap();
    let labels = rho.space().labels();
    let en = log_negativity(&rho, &labels[..2]).unwrap();
    assert!((en - 1.0).abs() < 1e-9);
    let two = CompositeSpace::uniform(&["x"], 2).unwrap();
    let vac = fock_ket(&two, &[0]).unwrap();
    let product = vac.tensor(&vac.relabeled(&["y"]).unwrap()).unwrap();
    assert!(log_negativity(&product, &["x"]).unwrap().abs() < 1e-12);
}

// ---- protocols ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schedule_identity(ratio in 0.5f64..12.0, storage in 0.0f64..2.0, kind in 0usize..4) {
        let kinds = [ScenarioKind::Single, ScenarioKind::Superposition, ScenarioKind::Entangled, ScenarioKind::FockSeries];
        let mut cfg = ScenarioConfig::new(kinds[kind]);
        cfg.coupling_ratio = Some(ratio);
        cfg.storage_time = storage;
        let g = cfg.coupling().unwrap();
        let t = Timing::of(&schedule(&cfg).unwrap()).unwrap();
        prop_assert!((t.t_off * g - PI / 2.0).abs() < 1e-12);
        prop_assert!(((t.t_read - t.t_on) - t.t_off).abs() <= 1e-12 * t.t_read);
        prop_assert!(((t.t_on - t.t_off) - storage).abs() <= 1e-12 * t.t_read.max(1e-9));
    }
}

#[test]
fn ell_branch_never_feeds_minus_ell_branch() {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Superposition);
    cfg.initial_state = InitialState::Occupations {
        occupations: vec![1, 0],
    };
    cfg.interactions_enabled = true;
    cfg.storage_time = 2e-3;
    let r = run_protocol(&cfg).unwrap();
    for m in [modes::A_MELL, modes::D] {
        let n = r.trajectory.occupation(m).unwrap();
        assert!(n.iter().all(|v| v.abs() < 1e-10), "{m}");
    }
    for cp in &r.trajectory.checkpoints {
        for (i, j) in [
            (modes::A_ELL, modes::A_MELL),
            (modes::A_ELL, modes::D),
            (modes::C, modes::A_MELL),
            (modes::C, modes::D),
        ] {
            assert!(two_point(&cp.state, i, j).norm() < 1e-10, "<{i}+ {j}> at {}", cp.time);
        }
    }
}

#[test]
fn vacuum_is_stationary() {
    for kind in [ScenarioKind::Single, ScenarioKind::Superposition] {
        let mut cfg = ScenarioConfig::new(kind);
        cfg.initial_state = InitialState::Occupations {
            occupations: vec![0; kind.photonic_modes().len()],
        };
        cfg.interactions_enabled = true;
        let r = run_protocol(&cfg).unwrap();
        let start = build_system(&cfg).unwrap().initial;
        let full = r.trajectory.final_state.data();
        assert_eq!((full - start.data()).norm(), 0.0, "{}", kind.name());
    }
}

#[test]
fn cavity_two_frozen_when_decoupled() {
    let kind = ScenarioKind::Entangled;
    let labels: Vec<String> = kind.photonic_modes().into_iter().chain(kind.side_modes()).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let space = CompositeSpace::uniform(&refs, 2).unwrap();
    let g = 2.0 * PI * 4e3;
    let h = hamiltonian_entangled(&space, [[g, g], [0.0, 0.0]], [[2.0 * PI * 100.0; 2], [0.0; 2]]).unwrap();
    let cavity_one: Vec<&str> = refs.iter().copied().filter(|l| l.ends_with("_1")).collect();
    let cavity_two: Vec<&str> = refs.iter().copied().filter(|l| l.ends_with("_2")).collect();
    let channels = cavity_one
        .iter()
        .map(|m| {
            let rate = if m.starts_with("a_") { 2.0 * PI * 1e3 } else { 2.0 * PI * 5.0 };
            CollapseChannel::damping(&space, m, rate).unwrap()
        })
        .collect();
    let sys = LindbladSystem::new(h, channels).unwrap();
    let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let occ = |ell1: usize, mell1: usize, ell2: usize, mell2: usize| {
        let mut v = vec![0; refs.len()];
        v[space.position(&modes::in_cavity(modes::A_ELL, 1)).unwrap()] = ell1;
        v[space.position(&modes::in_cavity(modes::A_MELL, 1)).unwrap()] = mell1;
        v[space.position(&modes::in_cavity(modes::A_ELL, 2)).unwrap()] = ell2;
        v[space.position(&modes::in_cavity(modes::A_MELL, 2)).unwrap()] = mell2;
        v
    };
    let rho0 = superpose(&space, &[(amp, occ(1, 0, 0, 1)), (amp, occ(0, 1, 1, 0))]).unwrap();
    let env = ControlEnvelope::write_store_read(g, 100e-6).unwrap();
    let cps: Vec<f64> = env.segments().iter().map(|s| s.end).collect();
    let opts = IntegratorOptions { checkpoints: cps, ..Default::default() };
    let traj = integrate(&sys, &rho0, &env, &[], &opts).unwrap();
    let before = rho0.partial_trace(&cavity_two).unwrap();
    for cp in &traj.checkpoints {
        let after = cp.state.partial_trace(&cavity_two).unwrap();
        let d = (after.data() - before.data()).norm();
        assert!(d < 1e-8, "drift {d:e} at {}", cp.time);
    }
}

/// Storage grid past the sub-millisecond range, where the write pulse's
/// leftover cavity amplitude has rung down.
const LONG_GRID: [f64; 5] = [2e-3, 1e-2, 5e-2, 0.2, 1.0];

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

#[test]
fn retrieval_fidelity_non_increasing_in_storage_time() {
    for kind in [ScenarioKind::Single, ScenarioKind::Superposition, ScenarioKind::FockSeries] {
        let f: Vec<f64> = LONG_GRID
            .iter()
            .map(|&t| {
                let mut cfg = ScenarioConfig::new(kind);
                cfg.storage_time = t;
                run_protocol(&cfg).unwrap().metrics.fidelity
            })
            .collect();
        assert!(non_increasing(&f), "{}: {f:?}", kind.name());
    }
}

#[test]
fn entangled_metrics_non_increasing_in_storage_time() {
    let configs: Vec<ScenarioConfig> = LONG_GRID
        .iter()
        .map(|&t| {
            let mut cfg = ScenarioConfig::new(ScenarioKind::Entangled);
            cfg.storage_time = t;
            cfg.storage_samples = 2;
            cfg
        })
        .collect();
    let results: Vec<_> = oam_memory::protocols::run_many(&configs)
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
    let en: Vec<f64> = results.iter().map(|r| r.metrics.log_negativity.unwrap()).collect();
    let f: Vec<f64> = results.iter().map(|r| r.metrics.fidelity).collect();
    assert!(non_increasing(&en), "{en:?}");
    assert!(non_increasing(&f), "{f:?}");
}

// ---- batch runner ----

const SMALL_RUN: &str = r#"
[scenario]
kind = "superposition"
storage_samples = 7

[sweep]
coupling_ratio = [3.0, 6.0]
storage_time = { log_start = 1e-4, log_end = 1e-2, per_decade = 2 }

[output]
trajectories = true
density_matrices = true

[output.plot]
x = "storage_time"
y = ["fidelity", "root_fidelity"]
series = "coupling_ratio"
log_x = true
"#;

fn read(dir: &std::path::Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn identical_configs_write_identical_files() {
    let config = load_config_str(SMALL_RUN, None).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run(&config, a.path(), 1, 0).unwrap();
    let mb = run(&config, b.path(), 3, 0).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    for f in &ma.outputs {
        assert!(!read(a.path(), f).is_empty(), "{f}");
        if f != "manifest.json" {
            assert!(read(a.path(), f) == read(b.path(), f), "{f} differs");
        }
    }
    assert_eq!(ma.config_digest, mb.config_digest);
}

#[test]
fn csv_rows_match_declared_grids() {
    let config = load_config_str(SMALL_RUN, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = run(&config, dir.path(), 2, 0).unwrap();
    let points = config.points().unwrap();
    assert_eq!(m.points_total, points.len());
    let runs = String::from_utf8(read(dir.path(), "runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), points.len() + 1);
    for (k, p) in points.iter().enumerate() {
        let cfg = &p.scenario;
        let env = schedule(cfg).unwrap();
        let step = cfg.pulse_sample_step.unwrap_or(1.0 / (50.0 * cfg.coupling().unwrap()));
        let expect = sample_times(&env, step, cfg.storage_samples).len();
        let traj = String::from_utf8(read(dir.path(), &format!("trajectory_{k}.csv"))).unwrap();
        assert_eq!(traj.lines().count(), expect + 1, "point {k}");
    }
}

#[test]
fn digest_changes_iff_resolved_values_change() {
    let base = load_config_str(SMALL_RUN, None).unwrap().digest();
    // same values, different spelling and key order
    let reordered = r#"
[output.plot]
log_x = true
series = "coupling_ratio"
y = ["fidelity", "root_fidelity"]
x = "storage_time"

[output]
density_matrices = true
trajectories = true

[sweep]
storage_time = { log_end = 0.01, log_start = 0.0001, per_decade = 2 }
coupling_ratio = [3.0, 6.0]

[scenario]
storage_samples = 7
kind = "superposition"
"#;
    let same = load_config_str(reordered, None).unwrap();
    assert_eq!(same.digest(), base);
    let changed = load_config_str(&SMALL_RUN.replace("storage_samples = 7", "storage_samples = 8"), None).unwrap();
    assert_ne!(changed.digest(), base);
    let changed = load_config_str(&format!("{SMALL_RUN}\n[scenario.physical]\natom_count = 20001\n"), None).unwrap();
    assert_ne!(changed.digest(), base);
}
