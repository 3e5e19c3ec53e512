//! Acceptance gate: ten end-to-end checks with pinned tolerances. Each test
//! prints a single `criterion NN ...: PASS/FAIL` line (run with
//! `cargo test --test acceptance -- --nocapture` to see them) and then
//! asserts. Names are numbered so the default order is the criterion order.

use std::sync::OnceLock;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use empsn::bench::{qm9like_clouds, run_bench};
use empsn::complex::{
    build_adjacency, vietoris_rips, AdjacencyKind, Simplex, SimplicialComplex,
};
use empsn::geometry::{Point, RigidMotion};
use empsn::harness::{
    check_equivariance, evaluate, nbody_profile, simulate_dataset, train, GeometricPredictor,
    GeometricSample, Metric, ModelPredictor, NBodyConfig, Target,
};
use empsn::invariants::all_invariants;
use empsn::model::{prepare, EmpsnConfig, EmpsnModel};
use empsn::nn::{NodeId, Tape};

fn report(n: u32, what: &str, detail: &str, ok: bool) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {n:02} ({what}): {verdict} — {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<Point<f64>> {
    (0..n)
        .map(|_| Point::new((0..dim).map(|_| rng.random_range(-scale..scale)).collect()))
        .collect()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, width: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn dist(a: &Point<f64>, b: &Point<f64>) -> f64 {
    a.coords()
        .iter()
        .zip(b.coords())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(v + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Which vertex subsets of size ≤ 4 have all pairwise distances ≤ δ,
/// enumerated exhaustively and independently of the lift.
fn oracle_simplices(pts: &[Point<f64>], delta: f64, dim: usize) -> Vec<Simplex> {
    combinations(pts.len(), dim + 1)
        .into_iter()
        .filter(|c| {
            c.iter()
                .enumerate()
                .all(|(i, &a)| c[i + 1..].iter().all(|&b| dist(&pts[a], &pts[b]) <= delta))
        })
        .map(|c| Simplex::new(c).unwrap())
        .collect()
}

#[test]
fn criterion_01_lift_matches_exhaustive_oracle() {
    let started = Instant::now();
    let mut rng = rng(11);
    let mut simplices = 0usize;
    for case in 0..200 {
        let dim = if case % 2 == 0 { 2 } else { 3 };
        let n = rng.random_range(1..=10);
        let pts = random_points(&mut rng, n, dim, 1.0);
        let delta = rng.random_range(0.05..2.3 * (dim as f64).sqrt());
        let complex = vietoris_rips(&pts, delta, 3).unwrap();
        for d in 0..=3 {
            let mut got = complex.simplices(d);
            got.sort_unstable();
            let mut want = oracle_simplices(&pts, delta, d);
            want.sort_unstable();
            assert_eq!(got, want, "dimension {d} differs for n {n}, delta {delta}");
            simplices += got.len();
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let ok = secs < 30.0;
    report(
        1,
        "lift vs exhaustive oracle",
        &format!("200 point sets, {simplices} simplices agree, {secs:.1}s"),
        ok,
    );
    assert!(ok, "oracle comparison took {secs:.1}s (budget 30s)");
}

#[test]
fn criterion_02_complete_clique_counts() {
    let mut rng = rng(13);
    let small = vietoris_rips(&random_points(&mut rng, 5, 3, 1.0), 1e9, 3).unwrap();
    let big = vietoris_rips(&random_points(&mut rng, 30, 3, 1.0), 1e9, 3).unwrap();
    let got_small = [
        small.num_simplices(1),
        small.num_simplices(2),
        small.num_simplices(3),
    ];
    let got_big = [big.num_simplices(1), big.num_simplices(2), big.num_simplices(3)];
    let ok = got_small == [10, 10, 5] && got_big == [435, 4060, 27405];
    report(
        2,
        "complete-graph simplex counts",
        &format!("5 points → {got_small:?}, 30 points → {got_big:?}"),
        ok,
    );
    assert!(ok);
}

#[test]
fn criterion_03_features_invariant_under_rigid_motions() {
    let mut rng = rng(17);
    let mut max_residual = 0.0f64;
    let mut entries = 0usize;
    for case in 0..100 {
        let dim = if case % 2 == 0 { 3 } else { 2 };
        let n = rng.random_range(4..=9);
        let pts = random_points(&mut rng, n, dim, 1.2);
        let delta = rng.random_range(1.0..2.2) * (dim as f64).sqrt();
        let complex = vietoris_rips(&pts, delta, 2).unwrap();
        let adj = build_adjacency(
            &complex,
            &[
                AdjacencyKind::Upper,
                AdjacencyKind::Boundary,
                AdjacencyKind::Coboundary,
            ],
            None,
        )
        .unwrap();
        let vel: Option<Vec<Vec<f64>>> = (case % 2 == 1).then(|| {
            (0..n)
                .map(|_| {
                    (0..dim)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        });
        let base = all_invariants(&complex, &adj, vel.as_deref()).unwrap();
        for _ in 0..10 {
            let g = RigidMotion::<f64>::random(dim, &mut rng);
            let moved_pts: Vec<Point<f64>> = complex
                .positions()
                .iter()
                .map(|p| g.apply_point(p).unwrap())
                .collect();
            let moved = complex.with_positions(moved_pts).unwrap();
            let moved_vel: Option<Vec<Vec<f64>>> = vel
                .as_ref()
                .map(|rows| rows.iter().map(|v| g.apply_vector(v).unwrap()).collect());
            let out = all_invariants(&moved, &adj, moved_vel.as_deref()).unwrap();
            for (key, table) in base.tables() {
                let moved_table = out.table(key).unwrap();
                assert_eq!(table.values.len(), moved_table.values.len());
                for (a, b) in table.values.iter().zip(&moved_table.values) {
                    max_residual = max_residual.max((a - b).abs());
                    entries += 1;
                }
            }
        }
    }
    let ok = max_residual <= 1e-10;
    report(
        3,
        "invariant features under rigid motions",
        &format!("100 complexes × 10 motions, {entries} entries, max |Δ| {max_residual:.2e}"),
        ok,
    );
    assert!(ok, "max residual {max_residual:.3e} exceeds 1e-10");
}

fn base_model_cfg() -> EmpsnConfig {
    EmpsnConfig {
        max_dim: 2,
        comm_type: (1, 2),
        hidden_dim: 8,
        num_layers: 2,
        delta: 2.5,
        update_positions: false,
        use_velocity: false,
        geometry_ablation: false,
        fourier: false,
        fourier_scale: 1.0,
        num_frequencies: 8,
        batch_norm: false,
        relift: false,
        in_features: 2,
        target_width: 3,
    }
}

fn sample_cloud(rng: &mut ChaCha8Rng, n: usize, graph: bool) -> GeometricSample {
    let pos = random_rows(rng, n, 3);
    let feat = random_rows(rng, n, 2);
    let vel = (!graph).then(|| random_rows(rng, n, 3));
    let target = if graph {
        Target::Scalars(vec![0.0; 3])
    } else {
        Target::Positions(pos.clone())
    };
    GeometricSample {
        pos,
        feat,
        vel,
        target,
    }
}

fn permuted_sample(s: &GeometricSample, order: &[usize]) -> GeometricSample {
    GeometricSample {
        pos: order.iter().map(|&i| s.pos[i].clone()).collect(),
        feat: order.iter().map(|&i| s.feat[i].clone()).collect(),
        vel: s
            .vel
            .as_ref()
            .map(|v| order.iter().map(|&i| v[i].clone()).collect()),
        target: match &s.target {
            Target::Scalars(v) => Target::Scalars(v.clone()),
            Target::Positions(rows) => {
                Target::Positions(order.iter().map(|&i| rows[i].clone()).collect())
            }
        },
    }
}

#[test]
fn criterion_04_model_symmetry() {
    let mut rng = rng(41);
    let graph_samples: Vec<GeometricSample> = (0..5)
        .map(|_| {
            let n = rng.random_range(4..=8);
            sample_cloud(&mut rng, n, true)
        })
        .collect();
    let trajectory_samples: Vec<GeometricSample> = (0..5)
        .map(|_| {
            let n = rng.random_range(4..=8);
            sample_cloud(&mut rng, n, false)
        })
        .collect();

    let mut impsn = EmpsnModel::new(base_model_cfg(), 21).unwrap();
    let invariance =
        check_equivariance(&mut ModelPredictor::new(&mut impsn), &graph_samples, 50, 43, 1e-8)
            .unwrap();

    let mut traj_cfg = base_model_cfg();
    traj_cfg.update_positions = true;
    traj_cfg.use_velocity = true;
    traj_cfg.target_width = 0;
    let mut empsn = EmpsnModel::new(traj_cfg, 22).unwrap();
    let equivariance = check_equivariance(
        &mut ModelPredictor::new(&mut empsn),
        &trajectory_samples,
        50,
        44,
        1e-8,
    )
    .unwrap();

    let mut perm_residual = 0.0f64;
    for s in &graph_samples {
        let base = ModelPredictor::new(&mut impsn)
            .predict(s)
            .unwrap()
            .readout
            .unwrap();
        let mut order: Vec<usize> = (0..s.num_points()).collect();
        order.shuffle(&mut rng);
        let out = ModelPredictor::new(&mut impsn)
            .predict(&permuted_sample(s, &order))
            .unwrap()
            .readout
            .unwrap();
        for (a, b) in base.iter().zip(&out) {
            perm_residual = perm_residual.max((a - b).abs());
        }
    }
    for s in &trajectory_samples {
        let base = ModelPredictor::new(&mut empsn)
            .predict(s)
            .unwrap()
            .positions
            .unwrap();
        let mut order: Vec<usize> = (0..s.num_points()).collect();
        order.shuffle(&mut rng);
        let out = ModelPredictor::new(&mut empsn)
            .predict(&permuted_sample(s, &order))
            .unwrap()
            .positions
            .unwrap();
        for (i, row) in out.iter().enumerate() {
            for (a, b) in row.iter().zip(&base[order[i]]) {
                perm_residual = perm_residual.max((a - b).abs());
            }
        }
    }

    let ok = invariance.passed && equivariance.passed && perm_residual <= 1e-9;
    report(
        4,
        "model symmetry",
        &format!(
            "scalar invariance {:.2e}, position equivariance {:.2e} (50 motions each, tol 1e-8), relabeling {perm_residual:.2e} (tol 1e-9)",
            invariance.max_invariance_residual.unwrap_or(0.0),
            equivariance.max_equivariance_residual.unwrap_or(0.0),
        ),
        ok,
    );
    assert!(ok);
}

#[test]
fn criterion_05_gradients_match_finite_differences() {
    let cfg = EmpsnConfig {
        max_dim: 2,
        comm_type: (1, 2),
        hidden_dim: 3,
        num_layers: 1,
        delta: 4.0,
        update_positions: true,
        use_velocity: true,
        geometry_ablation: false,
        fourier: false,
        fourier_scale: 1.0,
        num_frequencies: 8,
        batch_norm: false,
        relift: false,
        in_features: 2,
        target_width: 2,
    };
    let per_model = EmpsnModel::new(cfg.clone(), 0).unwrap().num_trainable_scalars();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in [3u64, 5, 9] {
        let mut model = EmpsnModel::new(cfg.clone(), seed).unwrap();
        let mut rng = rng(100 + seed);
        let pts = random_points(&mut rng, 6, 3, 1.0);
        let complex = vietoris_rips(&pts, cfg.delta, cfg.max_dim).unwrap();
        assert!(complex.num_simplices(2) > 0, "test complex needs triangles");
        let feats = random_rows(&mut rng, 6, 2);
        let vels = random_rows(&mut rng, 6, 3);
        let batch = prepare(&cfg, &[&complex], &[feats], Some(&[vels])).unwrap();
        let loss_of = |m: &mut EmpsnModel| -> (Tape<f64>, NodeId) {
            let mut tape = Tape::new();
            let out = m.forward(&mut tape, &batch, false).unwrap();
            let readout = tape.sum_all(out.readout.unwrap());
            let positions = tape.sum_all(out.positions.unwrap());
            let loss = tape.add(readout, positions);
            (tape, loss)
        };
        model.store_mut().zero_grads();
        let (mut tape, loss) = loss_of(&mut model);
        tape.backward(loss, model.store_mut()).unwrap();

        for name in model.store().names(true) {
            let (rows, cols) = model.store().get(&name).unwrap().shape();
            for i in 0..rows {
                for j in 0..cols {
                    let analytic = model.store().grad(&name).unwrap().get(i, j);
                    let base = model.store().get(&name).unwrap().get(i, j);
                    let mut probe = |v: f64| -> f64 {
                        let mut mat = model.store().get(&name).unwrap().clone();
                        mat.set(i, j, v);
                        model.store_mut().set(&name, mat).unwrap();
                        let (t, l) = loss_of(&mut model);
                        t.value(l).get(0, 0)
                    };
                    let plus = probe(base + h);
                    let minus = probe(base - h);
                    probe(base);
                    let fd = (plus - minus) / (2.0 * h);
                    let denom = fd.abs().max(analytic.abs()).max(1e-4);
                    let rel = ((analytic - fd) / denom).abs();
                    worst = worst.max(rel);
                    checked += 1;
                    assert!(
                        rel <= 1e-4,
                        "{name}[{i},{j}] seed {seed}: analytic {analytic} vs fd {fd} (rel {rel:.2e})"
                    );
                }
            }
        }
    }
    let ok = checked == 3 * per_model;
    report(
        5,
        "gradients vs finite differences",
        &format!("{checked} coordinates over 3 seeds ({per_model} per model), worst rel err {worst:.2e}"),
        ok,
    );
    assert!(ok, "covered {checked} of {} coordinates", 3 * per_model);
}

struct NbodyStudy {
    baseline_static: f64,
    baseline_extrapolation: f64,
    empsn_val: Vec<f64>,
    empsn_test_mse: Vec<f64>,
    ablation_val: Vec<f64>,
    empsn_params: usize,
    ablation_params: usize,
    train_secs: f64,
}

static STUDY: OnceLock<NbodyStudy> = OnceLock::new();

fn nbody_model_cfg(ablation: bool) -> EmpsnConfig {
    EmpsnConfig {
        max_dim: 2,
        comm_type: (1, 2),
        hidden_dim: 32,
        num_layers: 4,
        delta: 1e12,
        update_positions: true,
        use_velocity: true,
        geometry_ablation: ablation,
        fourier: false,
        fourier_scale: 1.0,
        num_frequencies: 8,
        batch_norm: false,
        relift: false,
        in_features: 1,
        target_width: 0,
    }
}

fn baseline_mse(samples: &[GeometricSample], horizon: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in samples {
        let target = match &s.target {
            Target::Positions(rows) => rows,
            Target::Scalars(_) => unreachable!("trajectory targets expected"),
        };
        let vel = s.vel.as_ref().unwrap();
        for (i, row) in target.iter().enumerate() {
            for (d, &y) in row.iter().enumerate() {
                let pred = s.pos[i][d] + horizon * vel[i][d];
                sum += (pred - y) * (pred - y);
                count += 1;
            }
        }
    }
    sum / count as f64
}

/// Shared by criteria 6 and 7: simulates the dataset once, trains the
/// geometric model and its geometry-blind twin on three seeds each.
fn nbody_study() -> &'static NbodyStudy {
    STUDY.get_or_init(|| {
        let nb = NBodyConfig {
            num_train: 500,
            num_val: 200,
            num_test: 200,
            ..NBodyConfig::default()
        };
        let horizon = nb.dt * nb.num_steps as f64;
        let data = simulate_dataset(&nb).unwrap();
        let baseline_static = baseline_mse(&data.test, 0.0);
        let baseline_extrapolation = baseline_mse(&data.test, horizon);

        let dir = tempfile::tempdir().unwrap();
        let mut study = NbodyStudy {
            baseline_static,
            baseline_extrapolation,
            empsn_val: Vec::new(),
            empsn_test_mse: Vec::new(),
            ablation_val: Vec::new(),
            empsn_params: EmpsnModel::new(nbody_model_cfg(false), 0)
                .unwrap()
                .num_trainable_scalars(),
            ablation_params: EmpsnModel::new(nbody_model_cfg(true), 0)
                .unwrap()
                .num_trainable_scalars(),
            train_secs: 0.0,
        };
        for seed in [0u64, 1, 2] {
            let mut tc = nbody_profile(30);
            tc.seed = seed;

            let started = Instant::now();
            let mut model = EmpsnModel::new(nbody_model_cfg(false), seed).unwrap();
            let out = dir.path().join(format!("geometric-{seed}"));
            let rep = train(&mut model, &data.train, &data.val, &tc, &out).unwrap();
            let (mut best, _) = EmpsnModel::load_with_meta(&rep.checkpoint).unwrap();
            let mse = evaluate(&mut best, &data.test, Metric::Mse, None).unwrap();
            study.train_secs += started.elapsed().as_secs_f64();
            study.empsn_val.push(rep.best_val);
            study.empsn_test_mse.push(mse);

            let mut blind = EmpsnModel::new(nbody_model_cfg(true), seed).unwrap();
            let out = dir.path().join(format!("blind-{seed}"));
            let rep = train(&mut blind, &data.train, &data.val, &tc, &out).unwrap();
            study.ablation_val.push(rep.best_val);
        }
        study
    })
}

#[test]
fn criterion_06_nbody_beats_baselines() {
    let s = nbody_study();
    let wins = s
        .empsn_test_mse
        .iter()
        .filter(|&&m| m <= 0.7 * s.baseline_static && m <= 0.9 * s.baseline_extrapolation)
        .count();
    let ok = wins >= 2 && s.train_secs <= 600.0;
    report(
        6,
        "desk-scale n-body vs baselines",
        &format!(
            "baselines static {:.4} / extrapolation {:.4}, test MSE {:?}, {wins}/3 seeds win, training+eval {:.0}s (budget 600s)",
            s.baseline_static, s.baseline_extrapolation, s.empsn_test_mse, s.train_secs
        ),
        ok,
    );
    assert!(ok);
}

#[test]
fn criterion_07_geometry_beats_ablation() {
    let s = nbody_study();
    let wins = s
        .empsn_val
        .iter()
        .zip(&s.ablation_val)
        .filter(|(e, a)| e < a)
        .count();
    let ok = wins >= 2 && s.empsn_params == s.ablation_params;
    report(
        7,
        "geometry vs topology-only ablation",
        &format!(
            "val MSE geometric {:?} vs blind {:?}, {wins}/3 seeds lower, params {} vs {}",
            s.empsn_val, s.ablation_val, s.empsn_params, s.ablation_params
        ),
        ok,
    );
    assert!(ok);
}

#[test]
fn criterion_08_lift_overhead_bounded() {
    let clouds = qm9like_clouds(20, 0);
    let bench = run_bench(&clouds, &[4.0, 8.0, 12.0, 16.0, 20.0], 40, 2).unwrap();
    let ratios: Vec<f64> = bench
        .rows
        .iter()
        .map(|r| r.vr_ms.mean / r.radius_ms.mean)
        .collect();
    let ok = ratios.iter().all(|&r| r <= 5.0);
    let shown: Vec<String> = bench
        .rows
        .iter()
        .zip(&ratios)
        .map(|(r, ratio)| format!("δ={} → {ratio:.2}×", r.delta))
        .collect();
    report(
        8,
        "lift time ≤ 5× radius graph",
        &shown.join(", "),
        ok,
    );
    assert!(ok, "ratios {ratios:?}");
}

#[test]
fn criterion_09_aggregation_order_and_degenerate_complexes() {
    let mut rng = rng(71);
    let cfg = base_model_cfg();
    let mut model = EmpsnModel::new(cfg.clone(), 23).unwrap();

    // feeding the same complex with its simplex lists shuffled
    let sample = sample_cloud(&mut rng, 7, true);
    let pts: Vec<Point<f64>> = sample.pos.iter().map(|r| Point::new(r.clone())).collect();
    let complex = vietoris_rips(&pts, cfg.delta, cfg.max_dim).unwrap();
    let mut shuffled_levels: Vec<Vec<Simplex>> = (0..=complex.max_dim())
        .map(|d| complex.simplices(d))
        .collect();
    for level in &mut shuffled_levels {
        level.shuffle(&mut rng);
    }
    let shuffled = SimplicialComplex::from_parts(pts.clone(), shuffled_levels).unwrap();
    let forward_readout = |m: &mut EmpsnModel, c: &SimplicialComplex<f64>| -> Vec<f64> {
        let batch = prepare(&cfg, &[c], &[sample.feat.clone()], None).unwrap();
        let mut tape = Tape::new();
        let out = m.forward(&mut tape, &batch, false).unwrap();
        tape.value(out.readout.unwrap()).data().to_vec()
    };
    let base = forward_readout(&mut model, &complex);
    let reordered = forward_readout(&mut model, &shuffled);
    let mut residual = 0.0f64;
    for (a, b) in base.iter().zip(&reordered) {
        residual = residual.max((a - b).abs());
    }

    // relabeling the points permutes every sender list
    let mut order: Vec<usize> = (0..sample.num_points()).collect();
    order.shuffle(&mut rng);
    let relabeled = ModelPredictor::new(&mut model)
        .predict(&permuted_sample(&sample, &order))
        .unwrap()
        .readout
        .unwrap();
    let original = ModelPredictor::new(&mut model)
        .predict(&sample)
        .unwrap()
        .readout
        .unwrap();
    for (a, b) in original.iter().zip(&relabeled) {
        residual = residual.max((a - b).abs());
    }

    // degenerate inputs: a path with no triangles, two isolated points, and
    // a zero-area triangle
    let degenerate = [
        vec![vec![0.0, 0.0, 0.0], vec![1.5, 0.0, 0.0], vec![3.0, 0.0, 0.0]],
        vec![vec![0.0, 0.0, 0.0], vec![10.0, 0.0, 0.0]],
        vec![vec![0.0, 0.0, 0.0], vec![0.7, 0.0, 0.0], vec![1.4, 0.0, 0.0]],
    ];
    let mut all_finite = true;
    for (k, pos) in degenerate.iter().enumerate() {
        let n = pos.len();
        let s = GeometricSample {
            pos: pos.clone(),
            feat: random_rows(&mut rng, n, 2),
            vel: None,
            target: Target::Scalars(vec![0.0; 3]),
        };
        let mut m = EmpsnModel::new(cfg.clone(), 29 + k as u64).unwrap();
        let out = ModelPredictor::new(&mut m).predict(&s).unwrap().readout.unwrap();
        all_finite &= out.iter().all(|v| v.is_finite());
    }

    let ok = residual <= 1e-9 && all_finite;
    report(
        9,
        "aggregation order and degenerate complexes",
        &format!("reorder/relabel residual {residual:.2e} (tol 1e-9), degenerate outputs finite: {all_finite}"),
        ok,
    );
    assert!(ok);
}

#[test]
fn criterion_10_pipeline_determinism() {
    let run = |tag: &str| -> (Vec<String>, u64, Vec<u8>) {
        let nb = NBodyConfig {
            num_train: 20,
            num_val: 10,
            num_test: 10,
            seed: 5,
            ..NBodyConfig::default()
        };
        let data = simulate_dataset(&nb).unwrap();
        let mut cfg = nbody_model_cfg(false);
        cfg.hidden_dim = 8;
        cfg.num_layers = 2;
        let mut model = EmpsnModel::new(cfg, 5).unwrap();
        let mut tc = nbody_profile(2);
        tc.seed = 5;
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join(tag);
        let rep = train(&mut model, &data.train, &data.val, &tc, &out).unwrap();
        let (mut best, _) = EmpsnModel::load_with_meta(&rep.checkpoint).unwrap();
        let mse = evaluate(&mut best, &data.test, Metric::Mse, None).unwrap();
        let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
        let checkpoint = std::fs::read(out.join("model.json")).unwrap();
        // wall_seconds is the one column allowed to differ between runs
        let rows: Vec<String> = metrics
            .lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
            .collect();
        (rows, mse.to_bits(), checkpoint)
    };
    let first = run("first");
    let second = run("second");
    let ok = first.0 == second.0 && first.1 == second.1 && first.2 == second.2;
    report(
        10,
        "same-seed pipeline determinism",
        &format!(
            "{} metric rows identical sans wall_seconds, eval MSE bits equal: {}, checkpoints byte-equal: {}",
            first.0.len().saturating_sub(1),
            first.1 == second.1,
            first.2 == second.2
        ),
        ok,
    );
    assert!(ok);
}
