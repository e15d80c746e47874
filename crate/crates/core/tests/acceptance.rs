//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! MNIST is read from `WARP_MNIST_DIR` (default `/root/data/mnist`).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warp_lnn::config::DatasetKind;
use warp_lnn::datasets::{idx_dir, load_idx_dir, synth_heterogeneous};
use warp_lnn::discrete::{import_netlist, random_netlist};
use warp_lnn::encoder::Sharing;
use warp_lnn::network::{Adam, TrainOptions};
use warp_lnn::neurons::{
    convert_dlgn_to_warp, dlgn_residual_c, residual_init, DlgnNeuron, LlnnNeuron, WarpNeuron, GATE_NAMES,
    ID_A, ID_B,
};
use warp_lnn::oracle::{brute_nearest_lut, enumerate_luts, finite_diff, max_relative_error, sigmoid_corner_values, Norm};
use warp_lnn::{
    build_network, lut_to_theta, theta_to_lut, train, Dataset, ForwardMode, LutTable, Network, NetworkConfig,
    Parametrization, ThresholdPlan, TrainMetrics, WalshCoeffs,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str) -> NetworkConfig {
    NetworkConfig::load(&configs_dir().join(name)).expect("preset config parses")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Run {
    net: Network,
    val: Dataset,
    records: Vec<TrainMetrics>,
    secs: f64,
}

/// Trains `cfg` on the first `limit` samples of `source` (all if `None`),
/// split 80/20 with the config's data seed.
fn train_run(mut cfg: NetworkConfig, source: &Dataset, limit: Option<usize>, eval_at_start: bool) -> Result<Run, String> {
    let data = match limit {
        Some(n) => source.take(n),
        None => source.clone(),
    };
    cfg.classes = data.classes;
    let (tr, val) = data.split_80_20(cfg.data.seed);
    let started = Instant::now();
    let mut net = build_network(cfg, &tr).map_err(|e| e.to_string())?;
    let opts = TrainOptions {
        eval_at_start,
        wallclock: true,
        ..TrainOptions::from_config(&net)
    };
    let records = train(&mut net, &tr, &val, &opts, |_| Ok(())).map_err(|e| e.to_string())?;
    Ok(Run { net, val, records, secs: started.elapsed().as_secs_f64() })
}

fn final_record(run: &Run) -> &TrainMetrics {
    run.records.last().expect("training emits a final record")
}

// ---------------------------------------------------------------- 1 .. 6

fn c1_exhaustive_roundtrip() -> Outcome {
    let started = Instant::now();
    let mut cases = 0usize;
    for n in 1..=4 {
        for lut in enumerate_luts(n).map_err(|e| e.to_string())? {
            let back = theta_to_lut(&lut_to_theta(&lut));
            ensure(back == lut, || format!("n = {n}: table {} decodes to {}", lut.to_hex(), back.to_hex()))?;
            cases += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let expected: usize = (1..=4).map(|n| 1usize << (1 << n)).sum();
    ensure(cases == expected, || format!("enumerated {cases} tables, expected {expected}"))?;
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!("{cases} tables exact in {secs:.2} s"))
}

fn c2_nearest_lut_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for (n, count) in [(2usize, 1000usize), (3, 200)] {
        for _ in 0..count {
            let theta: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let theta = WalshCoeffs::new(n, theta).unwrap();
            let tau = rng.random_range(0.25..4.0);
            let ours = theta_to_lut(&theta);
            for norm in Norm::ALL {
                let best = brute_nearest_lut(&theta, norm, tau).map_err(|e| e.to_string())?;
                ensure(best.contains(&ours), || {
                    format!("n = {n}, {norm:?}: {} not among minimizers for {:?}", ours.to_hex(), theta.theta())
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (theta, norm) cases, 0 violations"))
}

/// Walsh column of the standard two-input gate table, doubled to integers,
/// in lexicographic gate order.
const TABLE_WH_TIMES_2: [[i32; 4]; 16] = [
    [2, 0, 0, 0],
    [1, 1, 1, -1],
    [1, -1, 1, 1],
    [0, 0, 2, 0],
    [1, 1, -1, 1],
    [0, 2, 0, 0],
    [0, 0, 0, 2],
    [-1, 1, 1, 1],
    [1, -1, -1, -1],
    [0, 0, 0, -2],
    [0, -2, 0, 0],
    [-1, -1, 1, -1],
    [0, 0, -2, 0],
    [-1, 1, -1, -1],
    [-1, -1, -1, 1],
    [-2, 0, 0, 0],
];

fn c3_gate_table() -> Outcome {
    for (j, wh) in TABLE_WH_TIMES_2.iter().enumerate() {
        let lut = LutTable::from_lex_index(2, j as u64).unwrap();
        let theta = lut_to_theta(&lut);
        let expected: Vec<f64> = wh.iter().map(|&v| -(v as f64) / 2.0).collect();
        ensure(theta.theta() == expected.as_slice(), || {
            format!("{}: {:?} != {:?}", GATE_NAMES[j], theta.theta(), expected)
        })?;
        let mut raw = vec![0.0; 16];
        raw[j] = 60.0;
        let dlgn = DlgnNeuron::new(2, raw).unwrap();
        let converted = convert_dlgn_to_warp(&dlgn);
        ensure(theta_to_lut(&converted) == lut, || format!("{}: DLGN conversion decodes wrongly", GATE_NAMES[j]))?;
        let dev = converted.theta().iter().zip(theta.theta()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(dev < 1e-12, || format!("{}: converted coefficients off by {dev:e}", GATE_NAMES[j]))?;
    }
    Ok("16 gates: coefficients exact, DLGN one-hot conversions recover every table".into())
}

fn c4_gradients() -> Outcome {
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = [0.0f64; 3];
    let x_of = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.02..0.98)).collect() };
    for n in [2usize, 4, 6] {
        let len = 1 << n;
        let tau = (len as f64 / 4.0).max(0.5);
        for draw in 0..100 {
            let mode = if draw % 2 == 0 { ForwardMode::Soft } else { ForwardMode::GumbelSoft };
            let noise: f64 = rng.random_range(-2.0..2.0);
            let x = x_of(&mut rng, n);

            // WARP: coefficients and inputs
            let theta: Vec<f64> = (0..len).map(|_| rng.random_range(-1.5..1.5)).collect();
            let warp = WarpNeuron::new(WalshCoeffs::new(n, theta.clone()).unwrap(), tau).unwrap();
            let g = warp.grad(&x, mode, noise, 1.0).unwrap();
            let point: Vec<f64> = theta.iter().chain(&x).copied().collect();
            let f = |p: &[f64]| {
                let nrn = WarpNeuron::new(WalshCoeffs::new(n, p[..len].to_vec()).unwrap(), tau).unwrap();
                nrn.forward_with_noise(&p[len..], mode, noise).unwrap()
            };
            let num = finite_diff(f, &point, STEP).unwrap();
            let ana: Vec<f64> = g.dtheta.iter().chain(&g.dx).copied().collect();
            let err = max_relative_error(&ana, &num, FLOOR);
            worst[0] = worst[0].max(err);
            ensure(err < 1e-5, || format!("WARP n = {n} draw {draw}: relative error {err:e}"))?;

            // LLNN: raw weights and inputs
            let raw: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
            let llnn = LlnnNeuron::new(n, raw.clone()).unwrap();
            let g = llnn.grad(&x, mode, noise, 1.0).unwrap();
            let point: Vec<f64> = raw.iter().chain(&x).copied().collect();
            let f = |p: &[f64]| LlnnNeuron::new(n, p[..len].to_vec()).unwrap().forward_with_noise(&p[len..], mode, noise).unwrap();
            let num = finite_diff(f, &point, STEP).unwrap();
            let ana: Vec<f64> = g.draw.iter().chain(&g.dx).copied().collect();
            let err = max_relative_error(&ana, &num, FLOOR);
            worst[1] = worst[1].max(err);
            ensure(err < 1e-5, || format!("LLNN n = {n} draw {draw}: relative error {err:e}"))?;

            if n == 2 {
                let raw: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
                let dlgn = DlgnNeuron::new(2, raw.clone()).unwrap();
                let g = dlgn.grad(&x, mode, noise, 1.0).unwrap();
                let point: Vec<f64> = raw.iter().chain(&x).copied().collect();
                let f = |p: &[f64]| DlgnNeuron::new(2, p[..16].to_vec()).unwrap().forward_with_noise(&p[16..], mode, noise).unwrap();
                let num = finite_diff(f, &point, STEP).unwrap();
                let ana: Vec<f64> = g.draw.iter().chain(&g.dx).copied().collect();
                let err = max_relative_error(&ana, &num, FLOOR);
                worst[2] = worst[2].max(err);
                ensure(err < 1e-5, || format!("DLGN draw {draw}: relative error {err:e}"))?;
            }
        }
    }
    Ok(format!(
        "max relative error WARP {:.1e}, LLNN {:.1e}, DLGN {:.1e}",
        worst[0], worst[1], worst[2]
    ))
}

fn c5_residual_init() -> Outcome {
    let mut worst = 0.0f64;
    for p in [0.6, 0.9, 0.95] {
        for n in [2usize, 4, 6] {
            let tau = ((1usize << n) as f64 / 4.0).max(0.5);
            for k in 1..=n {
                let theta = residual_init(n, p, tau, k).map_err(|e| e.to_string())?;
                for (a, q) in sigmoid_corner_values(&theta, tau).iter().enumerate() {
                    let agree = if (a >> (k - 1)) & 1 == 1 { *q } else { 1.0 - q };
                    worst = worst.max((agree - p).abs());
                    ensure((agree - p).abs() < 1e-9, || format!("p = {p}, n = {n}, k = {k}, corner {a}: {agree}"))?;
                }
                ensure(theta_to_lut(&theta) == LutTable::pass_through(n, k).unwrap(), || {
                    format!("p = {p}, n = {n}, k = {k}: initial table is not a pass-through")
                })?;
            }
        }
        let c = dlgn_residual_c(2, p).map_err(|e| e.to_string())?;
        for (gate, input) in [(ID_B, 0usize), (ID_A, 1)] {
            let mut raw = vec![0.0; 16];
            raw[gate] = c;
            let nrn = DlgnNeuron::new(2, raw).unwrap();
            for a in 0..4usize {
                let x = [(a & 1) as f64, (a >> 1) as f64];
                let q = nrn.soft(&x);
                let agree = if x[input] == 1.0 { q } else { 1.0 - q };
                worst = worst.max((agree - p).abs());
                ensure((agree - p).abs() < 1e-9, || format!("DLGN p = {p}, {}: corner {a} agrees with {agree}", GATE_NAMES[gate]))?;
            }
        }
    }
    // a freshly built network decodes to pass-through everywhere
    let mut cfg = NetworkConfig::default();
    cfg.layers[0].neurons = 40;
    let data = synth_heterogeneous(5, 200, 6, 2).unwrap();
    for n in [2usize, 4, 6] {
        cfg.set_arity(n);
        let net = build_network(cfg.clone(), &data).map_err(|e| e.to_string())?;
        let s = net.compile().summary();
        ensure(s.layers.iter().all(|l| l.pass_through_nodes == l.nodes), || format!("n = {n}: non pass-through node at init"))?;
    }
    Ok(format!("max corner deviation {worst:.1e}; initial networks decode to pass-throughs"))
}

fn c6_gumbel_sampling() -> Outcome {
    const DRAWS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_z = 0.0f64;
    for point in 0..20 {
        let n = rng.random_range(1..=4usize);
        let theta: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nrn = WarpNeuron::new(WalshCoeffs::new(n, theta).unwrap(), 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let p = nrn.forward_with_noise(&x, ForwardMode::Soft, 0.0).unwrap();
        let hits = (0..DRAWS)
            .filter(|_| nrn.forward(&x, ForwardMode::GumbelSoft, &mut rng).unwrap() > 0.5)
            .count();
        let mean = hits as f64 / DRAWS as f64;
        let se = (p * (1.0 - p) / DRAWS as f64).sqrt();
        let z = (mean - p).abs() / se;
        worst_z = worst_z.max(z);
        ensure(z <= 3.0, || format!("point {point}: mean {mean} vs p {p} ({z:.2} standard errors)"))?;
    }
    Ok(format!("20 points x 1e5 draws, worst deviation {worst_z:.2} standard errors"))
}

// ---------------------------------------------------------------- MNIST

fn mnist() -> Result<Dataset, String> {
    let dir = idx_dir(DatasetKind::Mnist, None);
    load_idx_dir(&dir, false).map_err(|e| format!("MNIST unavailable at {}: {e}", dir.display()))
}

fn c7_parity(run: &Run) -> Outcome {
    let netlist = run.net.compile();
    let fast = netlist.predict_dataset(&run.val).map_err(|e| e.to_string())?;
    let copy = run.net.discretized_copy();
    let hard = copy.encode_hard(&run.val.features).map_err(|e| e.to_string())?;
    let relaxed = copy.predict_encoded(&hard).map_err(|e| e.to_string())?;
    let mut bits = vec![false; netlist.input_bits()];
    for i in 0..run.val.len() {
        netlist.encoder.encode(run.val.row(i), &mut bits);
        let naive = netlist.eval_naive(&bits).map_err(|e| e.to_string())?;
        ensure(naive == fast[i] && relaxed[i] == fast[i], || {
            format!("sample {i}: bitpacked {} naive {naive} discretized-relaxed {}", fast[i], relaxed[i])
        })?;
    }
    Ok(format!("{} validation samples: bitpacked = naive = discretized relaxed", run.val.len()))
}

fn c8_ste_gap(source: &Dataset) -> Outcome {
    let mut details = Vec::new();
    for mode in [ForwardMode::SoftSte, ForwardMode::GumbelSte] {
        let mut cfg = load_config("mnist_small.toml");
        cfg.set_mode(mode);
        cfg.epochs = 2;
        cfg.eval_every = 125;
        let run = train_run(cfg, source, None, true)?;
        for r in &run.records {
            ensure(r.gap() == 0.0, || format!("{}: gap {} at step {}", mode.name(), r.gap(), r.step))?;
        }
        details.push(format!("{} {} evals (final acc {:.4})", mode.name(), run.records.len(), final_record(&run).acc_discrete));
    }
    Ok(format!("gap exactly 0 at every evaluation: {}", details.join("; ")))
}

const C9_EPOCHS: usize = 4;

fn c9_runs(source: &Dataset) -> Result<Vec<Run>, String> {
    (0..3u64)
        .map(|seed| {
            let mut cfg = load_config("mnist_small.toml");
            cfg.seed = seed;
            cfg.epochs = C9_EPOCHS;
            train_run(cfg, source, None, false)
        })
        .collect()
}

fn c9_desk_scale(runs: &[Run]) -> Outcome {
    let accs: Vec<f64> = runs.iter().map(|r| final_record(r).acc_discrete).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let worst_secs = runs.iter().map(|r| r.secs).fold(0.0, f64::max);
    let net = &runs[0].net;
    let shape = format!(
        "{} layers x {} neurons, n = {}",
        net.layers.len(),
        net.layers[0].neurons,
        net.layers[0].arity
    );
    ensure(net.layers.len() == 4 && net.layers.iter().all(|l| l.neurons == 2000 && l.arity == 2), || format!("unexpected shape {shape}"))?;
    ensure(mean >= 0.90, || format!("seed-mean discrete accuracy {mean:.4} after {C9_EPOCHS} epochs {}", fmt_list(&accs)))?;
    ensure(worst_secs < 1800.0, || format!("slowest seed took {worst_secs:.0} s"))?;
    Ok(format!(
        "{shape}: seed-mean discrete val accuracy {mean:.4} {} after {C9_EPOCHS} epochs; slowest seed {worst_secs:.0} s",
        fmt_list(&accs)
    ))
}

fn n4_config(seed: u64, mode: ForwardMode) -> NetworkConfig {
    let mut cfg = load_config("mnist_n4.toml");
    cfg.seed = seed;
    cfg.set_mode(mode);
    cfg
}

fn c10a_gumbel_gap(source: &Dataset) -> Outcome {
    let mut gaps = [Vec::new(), Vec::new()];
    for seed in 1..=5u64 {
        for (m, mode) in [ForwardMode::Soft, ForwardMode::GumbelSoft].into_iter().enumerate() {
            let cfg = n4_config(seed, mode);
            let limit = cfg.data.limit;
            let run = train_run(cfg, source, limit, false)?;
            gaps[m].push(final_record(&run).gap());
        }
    }
    let (soft, gumbel) = (median(gaps[0].clone()), median(gaps[1].clone()));
    let detail = format!(
        "median gap gumbel-soft {gumbel:.4} {} vs soft {soft:.4} {}",
        fmt_list(&gaps[1]),
        fmt_list(&gaps[0])
    );
    ensure(gumbel <= soft, || detail.clone())?;
    Ok(detail)
}

fn c10b_thresholding() -> Outcome {
    use warp_lnn::config::EncoderKind;
    let kinds = [EncoderKind::Learnable, EncoderKind::Distributive, EncoderKind::Uniform];
    let mut accs = [Vec::new(), Vec::new(), Vec::new()];
    for seed in 1..=5u64 {
        let base = load_config("synth.toml");
        let data = synth_heterogeneous(seed, base.data.synth_samples, base.data.synth_features, base.data.synth_classes)
            .map_err(|e| e.to_string())?;
        for (i, kind) in kinds.into_iter().enumerate() {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.data.seed = seed;
            cfg.encoder.kind = kind;
            cfg.encoder.bits_per_feature = 5;
            let run = train_run(cfg, &data, None, false)?;
            accs[i].push(final_record(&run).acc_discrete);
        }
    }
    let med: Vec<f64> = accs.iter().map(|a| median(a.clone())).collect();
    let detail = format!(
        "median discrete accuracy learnable {:.4} >= distributive {:.4} >= uniform {:.4}",
        med[0], med[1], med[2]
    );
    ensure(med[0] >= med[1] && med[1] >= med[2], || format!("{detail} violated: {accs:?}"))?;
    Ok(detail)
}

fn c10c_high_rank(source: &Dataset) -> (Outcome, String) {
    let mut medians = Vec::new();
    let mut body = || -> Result<(String, String), String> {
        let run_median = |kind: Parametrization, n: usize| -> Result<f64, String> {
            let mut accs = Vec::new();
            for seed in 1..=5u64 {
                let mut cfg = n4_config(seed, ForwardMode::Soft);
                cfg.epochs = 3;
                cfg.set_arity(n);
                for l in &mut cfg.layers {
                    l.kind = kind;
                }
                let limit = cfg.data.limit;
                let run = train_run(cfg, source, limit, false)?;
                accs.push(final_record(&run).acc_discrete);
            }
            Ok(median(accs))
        };
        let warp4 = run_median(Parametrization::Warp, 4)?;
        let warp6 = run_median(Parametrization::Warp, 6)?;
        let dwn: Vec<f64> = [2, 4, 6].iter().map(|&n| run_median(Parametrization::Dwn, n)).collect::<Result<_, _>>()?;
        medians.extend_from_slice(&[warp4, warp6]);
        // chance plus three binomial standard errors on 3000 validation samples
        let chance = 0.1 + 3.0 * (0.09f64 / 3000.0).sqrt();
        ensure(warp4 > chance && warp6 > chance, || format!("WARP n = 4: {warp4:.4}, n = 6: {warp6:.4}; chance bound {chance:.4}"))?;
        let degrades = dwn[1] < dwn[0] && dwn[2] < dwn[0];
        let report = format!(
            "DWN median discrete accuracy n = 2: {:.4}, n = 4: {:.4}, n = 6: {:.4} -> {} relative to n = 2. \
             Caveat: DWN here trains through a per-bit finite-difference surrogate, \
             so this is not evidence about other DWN gradient estimators.",
            dwn[0],
            dwn[1],
            dwn[2],
            if degrades { "degrades" } else { "does not degrade" }
        );
        Ok((format!("WARP median discrete accuracy n = 4: {warp4:.4}, n = 6: {warp6:.4} (above chance)"), report))
    };
    match body() {
        Ok((ok, report)) => (Ok(ok), report),
        Err(e) => (Err(e), String::new()),
    }
}

// ---------------------------------------------------------------- 11, 12

fn c11_thermometer() -> Outcome {
    let data = synth_heterogeneous(11, 2000, 6, 2).unwrap();
    let mut cfg = load_config("synth.toml");
    cfg.layers.truncate(1);
    cfg.layers[0].neurons = 64;
    cfg.optimizer.batch_size = 32;
    cfg.optimizer.lr = 0.05;
    cfg.encoder.lr_scale = Some(1.0);
    for sharing in [Sharing::PerFeature, Sharing::Global] {
        cfg.encoder.sharing = sharing;
        let mut net = build_network(cfg.clone(), &data).map_err(|e| e.to_string())?;
        let mut adam = Adam::new(&net);
        let batch = cfg.optimizer.batch_size;
        let d = data.feature_count;
        let mut prev = net.encoder.realize_thresholds();
        let mut moved = 0.0f64;
        for step in 0..1000u64 {
            let lo = (step as usize * batch) % (data.len() - batch);
            let (_, grads) = net
                .loss_and_grad(
                    &data.features[lo * d..(lo + batch) * d],
                    &data.labels[lo..lo + batch],
                    Some(warp_lnn::network::NoiseKey { seed: 1, step }),
                )
                .map_err(|e| e.to_string())?;
            adam.step(&mut net, &grads);
            let omega = net.encoder.realize_thresholds();
            let l = net.encoder.bits_per_feature();
            for i in 1..l {
                for j in 0..d {
                    ensure(omega[i * d + j] > omega[(i - 1) * d + j], || {
                        format!("{sharing:?} step {step}: feature {j} thresholds not increasing at row {i}")
                    })?;
                }
            }
            moved = moved.max(omega.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            prev = omega;
        }
        ensure(moved > 0.0, || format!("{sharing:?}: thresholds never moved"))?;
        // prefix structure of hard codes
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let l = net.encoder.bits_per_feature();
        for _ in 0..5000 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-500.0..500.0) * rng.random::<f64>().powi(3)).collect();
            let bits = net.encoder.encode_hard(&x).map_err(|e| e.to_string())?;
            ensure(bits.chunks(l).all(|f| f.windows(2).all(|w| w[0] >= w[1])), || format!("non-prefix code at {x:?}"))?;
        }
    }
    // rho -> 0: soft bits converge to hard bits
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let omega: Vec<f64> = (0..4).flat_map(|i| { let b = i as f64; [b - 1.5, 2.0 * b, b * b] }).collect();
    let plan = ThresholdPlan::fixed(4, 3, Sharing::PerFeature, omega, 1e-9).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..10.0)).collect();
        let soft = plan.encode_soft_with(&x, None).map_err(|e| e.to_string())?;
        let hard = plan.encode_hard(&x).map_err(|e| e.to_string())?;
        for (s, h) in soft.iter().zip(&hard) {
            worst = worst.max((s - (*h as u8 as f64)).abs());
        }
    }
    ensure(worst < 1e-6, || format!("soft/hard disagreement {worst:e} at rho = 1e-9"))?;
    Ok(format!("1000 learnable updates x 2 sharing modes keep thresholds increasing; prefix codes; rho -> 0 gap {worst:.1e}"))
}

const BASE_NETLIST: &str = "warp-netlist v1
seed 0
config -
encoder 2 2
omega 0 0.25 0.5
omega 1 0.75 0.5
layers 2
layer 0 4 2
L0 2 0 3 6
L0 2 1 2 8
layer 1 2 2
L1 1 0 2
L1 2 0 1 e
groupsum 2 1 1.0
end
";

fn replace_line(text: &str, line: usize, with: &str) -> String {
    text.lines()
        .enumerate()
        .map(|(i, l)| if i + 1 == line { with.to_string() } else { l.to_string() })
        .filter(|l| !l.is_empty() || line == 0)
        .map(|l| l + "\n")
        .collect()
}

fn c12_netlist_format(compiled: Option<&Network>) -> Outcome {
    let base = import_netlist(BASE_NETLIST).map_err(|e| e.to_string())?;
    ensure(base.to_text() == BASE_NETLIST, || "hand netlist does not re-export byte-identically".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..50 {
        let nl = random_netlist(&mut rng, 5 + trial % 7, &[12, 9, 6], 3, 1 + trial % 6);
        let text = nl.to_text();
        let back = import_netlist(&text).map_err(|e| e.to_string())?;
        ensure(back.to_text() == text && back == nl, || format!("random netlist {trial} does not roundtrip"))?;
    }
    if let Some(net) = compiled {
        let text = net.compile().to_text();
        ensure(import_netlist(&text).map_err(|e| e.to_string())?.to_text() == text, || "MNIST netlist does not roundtrip".into())?;
    }
    let truncated: String = BASE_NETLIST.lines().take(10).map(|l| format!("{l}\n")).collect();
    let cases: Vec<(&str, String, usize)> = vec![
        ("missing header", replace_line(BASE_NETLIST, 1, "netlist"), 1),
        ("unsupported version", replace_line(BASE_NETLIST, 1, "warp-netlist v9"), 1),
        ("bad seed", replace_line(BASE_NETLIST, 2, "seed minus-one"), 2),
        ("non-finite threshold", replace_line(BASE_NETLIST, 5, "omega 0 NaN 0.5"), 5),
        ("decreasing thresholds", replace_line(BASE_NETLIST, 6, "omega 1 0.1 0.5"), 6),
        ("wrong input width", replace_line(BASE_NETLIST, 8, "layer 0 5 2"), 8),
        ("dangling wire", replace_line(BASE_NETLIST, 9, "L0 2 0 4 6"), 9),
        ("bad table", replace_line(BASE_NETLIST, 10, "L0 2 1 2 1z"), 10),
        ("arity out of range", replace_line(BASE_NETLIST, 12, "L1 9 0 2"), 12),
        ("groupsum coverage", replace_line(BASE_NETLIST, 14, "groupsum 3 1 1.0"), 14),
        ("truncated file", truncated, 11),
        ("content after end", format!("{BASE_NETLIST}L1 1 0 2\n"), 16),
    ];
    for (name, text, line) in &cases {
        match import_netlist(text) {
            Ok(_) => return Err(format!("{name}: accepted")),
            Err(e) => {
                ensure(e.line == *line && !e.msg.is_empty(), || format!("{name}: expected line {line}, got `{e}`"))?;
                ensure(e.to_string().starts_with(&format!("line {line}:")), || format!("{name}: message `{e}`"))?;
            }
        }
    }
    Ok(format!("byte-identical roundtrips (hand, 50 random{}); {} malformed files rejected at the right line", if compiled.is_some() { ", MNIST" } else { "" }, cases.len()))
}

// ---------------------------------------------------------------- driver

struct Suite {
    failures: usize,
}

impl Suite {
    fn report(&mut self, id: &str, title: &str, started: Instant, outcome: Outcome) {
        self.report_secs(id, title, started.elapsed().as_secs_f64(), outcome);
    }

    fn report_secs(&mut self, id: &str, title: &str, secs: f64, outcome: Outcome) {
        match outcome {
            Ok(detail) => println!("criterion {id:>3} PASS  {title}: {detail} [{secs:.1} s]"),
            Err(why) => {
                self.failures += 1;
                println!("criterion {id:>3} FAIL  {title}: {why} [{secs:.1} s]");
            }
        }
    }
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes this
    // target's name skips the suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut suite = Suite { failures: 0 };
    macro_rules! criterion {
        ($id:expr, $title:expr, $body:expr) => {{
            let t = Instant::now();
            let outcome = $body;
            suite.report($id, $title, t, outcome);
        }};
    }

    criterion!("1", "exhaustive roundtrip", c1_exhaustive_roundtrip());
    criterion!("2", "nearest-table oracle", c2_nearest_lut_oracle());
    criterion!("3", "two-input gate table", c3_gate_table());
    criterion!("4", "gradient suite", c4_gradients());
    criterion!("5", "residual initialization", c5_residual_init());
    criterion!("6", "Gumbel sampling", c6_gumbel_sampling());

    let source = mnist();
    let t = Instant::now();
    let c9 = source.as_ref().map_err(Clone::clone).and_then(|s| c9_runs(s));
    let c9_secs = t.elapsed().as_secs_f64();
    match &c9 {
        Ok(runs) => criterion!("7", "discrete parity", c7_parity(&runs[0])),
        Err(e) => criterion!("7", "discrete parity", Err(e.clone())),
    }
    criterion!("8", "STE gap identity", source.as_ref().map_err(Clone::clone).and_then(c8_ste_gap));
    let outcome = c9.as_ref().map_err(Clone::clone).and_then(|runs| c9_desk_scale(runs));
    suite.report_secs("9", "desk-scale training", c9_secs, outcome);
    criterion!("10a", "Gumbel reduces the gap", source.as_ref().map_err(Clone::clone).and_then(c10a_gumbel_gap));
    criterion!("10b", "learnable thresholding", c10b_thresholding());
    let t = Instant::now();
    let (outcome, dwn_report) = match &source {
        Ok(s) => c10c_high_rank(s),
        Err(e) => (Err(e.clone()), String::new()),
    };
    suite.report("10c", "high-rank tables", t, outcome);
    if !dwn_report.is_empty() {
        println!("               report: {dwn_report}");
    }
    criterion!("11", "thermometer structure", c11_thermometer());
    criterion!("12", "netlist format", c12_netlist_format(c9.as_ref().ok().map(|r| &r[0].net)));

    if suite.failures > 0 {
        println!("acceptance: {} criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
