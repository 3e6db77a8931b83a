//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when
//! output capture would hide it. Exits non-zero if any criterion fails.

use patchwise_core::analysis::{
    profile, shuffle_experiment, shuffle_modulations, spectral_entropy, EntropyConfig, ShuffleConfig,
    ShuffleDataset, ShuffleMode,
};
use patchwise_core::data::{
    gen_composite, gen_composite_with_info, gen_industrial_with_params, CompositeGenConfig, Corpus,
    IndustrialGenConfig, SeasonalPattern, TimeSeries,
};
use patchwise_core::iarope::{adapt_frequencies, apply_rotation, base_frequencies, theta_node, ModulationSpace};
use patchwise_core::metrics::{aggregate, evaluate, score_task, EvalTask, Forecaster, ModelForecaster, Prediction, SeasonalNaive};
use patchwise_core::model::layers::{Attention, Rotary};
use patchwise_core::model::{Model, ModelConfig, ModulationSource};
use patchwise_core::mosdp::{accumulate_load, affinities, ancestor, decide, PatchConfig, Tokenizer};
use patchwise_core::numerics::{finite_diff_grad, grad, relative_error, ParamGroup, ParamStore, Tape, Tensor, Var};
use patchwise_core::training::{batch_loss, horizon_weights, pinball, LossConfig, Target, TrainConfig, Trainer, QUANTILE_LEVELS};
use patchwise_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> std::result::Result<(), String> {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------

fn ancestor_oracle() -> Outcome {
    let t0 = Instant::now();
    for (m, size, want) in [(3, 32, (3, 3)), (3, 64, (3, 4)), (3, 128, (1, 4))] {
        let got = ancestor(m, 32, size).map_err(|e| e.to_string())?;
        check(got == want, format!("ancestor(3, 32, {size}) = {got:?}, want {want:?}"))?;
    }
    // brute force: the aligned size-p_i block containing finest patch m, as
    // the 1-based range of finest patches inside it
    let sizes = [32usize, 64, 128];
    let coarsest = 128;
    let mut cases = 0;
    for &pk in &sizes {
        for m in 1..=coarsest / pk {
            for &pi in &sizes {
                let got = ancestor(m, pk, pi);
                if pi < pk {
                    check(got.is_err(), format!("ancestor({m}, {pk}, {pi}) must be rejected"))?;
                    continue;
                }
                let start = (m - 1) * pk;
                let block = (0..coarsest).step_by(pi).find(|&b| b <= start && start < b + pi).unwrap();
                let members: Vec<usize> = (1..=coarsest / pk)
                    .filter(|&j| {
                        let s = (j - 1) * pk;
                        s >= block && s + pk <= block + pi
                    })
                    .collect();
                let want = (members[0], *members.last().unwrap());
                check(got.as_ref().ok() == Some(&want), format!("ancestor({m}, {pk}, {pi}) = {got:?}, oracle {want:?}"))?;
                cases += 1;
            }
        }
    }
    within(t0.elapsed(), 1.0)?;
    Ok(format!("worked example exact, {cases} brute-force cases agree"))
}

fn rope_relative_identity() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dh = 2 * rng.random_range(1..=32usize);
        let base = base_frequencies(dh, 10000.0).map_err(|e| e.to_string())?;
        let half = dh / 2;
        let gamma: Vec<f64> = (0..half).map(|_| rng.random_range(0.5..1.5)).collect();
        let beta: Vec<f64> = (0..half).map(|_| rng.random_range(-1.0..1.0)).collect();
        let theta = adapt_frequencies(&base, &gamma, &beta, ModulationSpace::Log);
        let q: Vec<f64> = (0..dh).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..dh).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = rng.random_range(0..2048usize) as f64;
        let n = (m + rng.random_range(-512..=512i64) as f64).max(0.0);
        let rq = apply_rotation(&q, dh, &[m], &theta);
        let rk = apply_rotation(&k, dh, &[n], &theta);
        let rel = apply_rotation(&k, dh, &[n - m], &theta);
        let lhs: f64 = rq.iter().zip(&rk).map(|(a, b)| a * b).sum();
        let rhs: f64 = q.iter().zip(&rel).map(|(a, b)| a * b).sum();
        worst = worst.max((lhs - rhs).abs());
    }
    check(worst <= 1e-6, format!("max |difference| {worst:e}"))?;
    within(t0.elapsed(), 5.0)?;
    Ok(format!("1000 draws, max |difference| {worst:.2e}"))
}

fn small_model_config() -> ModelConfig {
    let mut cfg = ModelConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        heads: 2,
        d_model: 8,
        d_ff: 12,
        d_expert: 6,
        forecast_tokens: 2,
        token_span: 4,
        context: 24,
        ..ModelConfig::default()
    };
    cfg.patch.patch_sizes = vec![2, 4, 8];
    cfg.iarope.fft_dim = 8;
    cfg.iarope.hidden = 6;
    cfg
}

fn wave(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|t| (t as f64 * 0.5).sin() * 2.0 + rng.random_range(-0.3..0.3))
        .collect()
}

fn iarope_identity_reduction() -> Outcome {
    // attention layer: identity (γ, β) through the modulation arithmetic
    // against the plain base frequencies
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ParamStore::new();
    let attn = Attention::new("attn", 16, 2, &mut params, &mut rng);
    let theta = base_frequencies(8, 10000.0).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..5 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let positions: Vec<f64> = (0..5).map(|p| p as f64).collect();
    let run = |adapted: bool| -> Tensor {
        let mut tape = Tape::new(&params);
        let xv = tape.constant(Tensor::matrix(5, 16, x.clone()));
        let th: Var = if adapted {
            let g = tape.constant(Tensor::row(vec![1.0; 4]));
            let b = tape.constant(Tensor::row(vec![0.0; 4]));
            theta_node(&mut tape, &theta, g, b, ModulationSpace::Log)
        } else {
            tape.constant(Tensor::row(theta.clone()))
        };
        let out = attn.forward(&mut tape, xv, xv, None, Some(Rotary { theta: th, positions: &positions }));
        tape.value(out).clone()
    };
    check(run(true) == run(false), "identity modulation changes attention output")?;
    check(
        adapt_frequencies(&theta, &[1.0; 4], &[0.0; 4], ModulationSpace::Log) == theta,
        "identity adaptation is not exact",
    )?;

    // whole model: fixed shuffle condition and given identity against a
    // model built without adaptation
    let cfg = small_model_config();
    let adaptive = Model::new(cfg.clone(), 3).map_err(|e| e.to_string())?;
    let vanilla = Model::new(ModelConfig { iarope: patchwise_core::iarope::IaropeConfig { adaptive: false, ..cfg.iarope.clone() }, ..cfg }, 3)
        .map_err(|e| e.to_string())?;
    let v = wave(40, 4);
    let mask = vec![true; 40];
    let inst = adaptive.modulations(&v, &mask).map_err(|e| e.to_string())?;
    let fixed = shuffle_modulations(&[inst], ShuffleMode::Fixed, &[], &mut rng).map_err(|e| e.to_string())?;
    let want = vanilla.forecast(&v, &mask, 12).map_err(|e| e.to_string())?;
    let a = adaptive.forecast_with(&v, &mask, 12, ModulationSource::Given(&fixed[0])).map_err(|e| e.to_string())?;
    let b = adaptive.forecast_with(&v, &mask, 12, ModulationSource::Fixed).map_err(|e| e.to_string())?;
    check(a.values == want.values, "fixed shuffle condition differs from vanilla rotary inference")?;
    check(b.values == want.values, "fixed modulation source differs from vanilla rotary inference")?;
    Ok("attention and full forecasts bit-identical".into())
}

fn theta_spot_values() -> Outcome {
    let theta = base_frequencies(64, 10000.0).map_err(|e| e.to_string())?;
    // independent evaluation: 10000^(-62/64) = 10^(-3.875)
    let oracle = 10f64.powf(-3.875);
    check(theta[0] == 1.0, format!("theta_0 = {}", theta[0]))?;
    check((theta[31] - oracle).abs() < 1e-15, format!("theta_31 = {} vs {oracle}", theta[31]))?;
    check(((theta[31] - 1.33e-4) / 1.33e-4).abs() < 0.01, format!("theta_31 = {} not within 1% of 1.33e-4", theta[31]))?;
    Ok(format!("theta_0 = 1, theta_31 = {:.4e}", theta[31]))
}

fn load_balance_convergence() -> Outcome {
    let t0 = Instant::now();
    let cfg = PatchConfig::default();
    let tau = cfg.target_load.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // frozen scores skewed toward the expert with the smallest target and
    // away from the one with the largest
    let skew = [-2.0, 0.5, 3.0, 1.0, 0.0];
    let scores: Vec<Vec<f64>> = (0..256)
        .map(|_| skew.iter().map(|s| s + rng.random_range(-0.5..0.5)).collect())
        .collect();
    let freq = |bias: &[f64]| -> Vec<f64> {
        let ds: Vec<_> = scores
            .iter()
            .map(|s| {
                let biased: Vec<f64> = s.iter().zip(bias).map(|(a, b)| a + b).collect();
                decide(&affinities(&biased, &cfg), &cfg)
            })
            .collect();
        let load = accumulate_load(&ds, &cfg);
        let total: f64 = load.iter().sum();
        load.iter().map(|l| l / total).collect()
    };
    let l1 = |f: &[f64]| f.iter().zip(&tau).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let mut bias = vec![0.0; cfg.total_experts()];
    let start = l1(&freq(&bias));
    let mut worst_sum = 0.0f64;
    for _ in 0..5000 {
        let ds: Vec<_> = scores
            .iter()
            .map(|s| {
                let biased: Vec<f64> = s.iter().zip(&bias).map(|(a, b)| a + b).collect();
                decide(&affinities(&biased, &cfg), &cfg)
            })
            .collect();
        let load = accumulate_load(&ds, &cfg);
        let deltas = patchwise_core::mosdp::update_bias(&mut bias, &load, &cfg);
        worst_sum = worst_sum.max(deltas.iter().sum::<f64>().abs());
    }
    let end = l1(&freq(&bias));
    check(worst_sum < 1e-12, format!("bias deltas sum to {worst_sum:e}"))?;
    check(end <= 0.05, format!("L1 to target {end:.4} (started at {start:.4})"))?;
    within(t0.elapsed(), 30.0)?;
    Ok(format!("L1 to target {start:.3} -> {end:.4}, max |sum of deltas| {worst_sum:.1e}"))
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut model = Model::new(small_model_config(), 13).map_err(|e| e.to_string())?;
    // the modulation output layers start at zero; give them values so the
    // modulation path carries gradient
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let wake: Vec<(String, Vec<usize>)> = model
        .params
        .entries()
        .iter()
        .filter(|e| e.group == ParamGroup::Iarope && e.name.ends_with(".w2"))
        .map(|e| (e.name.clone(), e.value.shape().to_vec()))
        .collect();
    for (name, shape) in wake {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
        model.params.set(&name, Tensor::new(shape, data).unwrap()).unwrap();
    }
    let ctx = wave(24, 15);
    let target = wave(8, 16);
    let loss = |m: &Model, tape: &mut Tape| -> Result<Var> {
        let g = m.forward(tape, &ctx, &vec![true; ctx.len()], ModulationSource::Instance)?;
        let w: Vec<f64> = horizon_weights(target.len(), 0.0).iter().map(|x| x / 9.0).collect();
        Ok(tape.pinball(g.quantiles, &target, &w, &m.cfg.quantile_levels))
    };
    let (_, analytic) = grad(&model.params, |tape| loss(&model, tape)).map_err(|e| e.to_string())?;
    let numeric = finite_diff_grad(
        &model.params,
        |p| {
            let mut probe = model.clone();
            probe.params = p.clone();
            let mut tape = Tape::new(&probe.params);
            let l = loss(&probe, &mut tape).unwrap();
            tape.scalar(l)
        },
        1e-4,
    );
    let mut worst = (0.0f64, String::new());
    let mut touched: Vec<String> = Vec::new();
    for id in model.params.ids() {
        let name = model.params.entry(id).name.clone();
        let a = analytic.get_or_zeros(id, &model.params);
        let n = numeric.get_or_zeros(id, &model.params);
        let err = relative_error(a.data(), n.data(), 1e-7);
        if err > worst.0 {
            worst = (err, name.clone());
        }
        if a.data().iter().any(|v| *v != 0.0) {
            touched.push(name);
        }
    }
    check(worst.0 < 1e-3, format!("{}: relative error {:.2e}", worst.1, worst.0))?;
    for part in ["tokenizer.expert", "tokenizer.router", "encoder0.", "decoder0.", "head.", "decoder.forecast_tokens", "iarope.layer"] {
        check(touched.iter().any(|n| n.starts_with(part)), format!("no gradient reached {part}"))?;
    }
    within(t0.elapsed(), 120.0)?;
    Ok(format!("{} tensors, worst relative error {:.2e} ({})", model.params.ids().count(), worst.0, worst.1))
}

fn quantile_loss_values() -> Outcome {
    check(pinball(1.0, 0.0, 0.5) == 0.5, "pinball(1, 0, 0.5)")?;
    check((pinball(0.0, 1.0, 0.1) - 0.9).abs() < 1e-15, "pinball(0, 1, 0.1)")?;
    let w = horizon_weights(2, 0.0);
    check(w[1] == 0.0, format!("omega(H) = {}", w[1]))?;
    check((w[0] - std::f64::consts::LN_2 / 2.0).abs() < 1e-15, format!("omega(1) = {}", w[0]))?;
    let targets = vec![
        Target { values: vec![1.0, -2.0, 0.5], mask: vec![true; 3] },
        Target { values: vec![3.0, 3.0, 3.0], mask: vec![true; 3] },
    ];
    let forecasts: Vec<Vec<f64>> = targets
        .iter()
        .map(|t| t.values.iter().flat_map(|&v| [v; 9]).collect())
        .collect();
    let l = batch_loss(&targets, &forecasts, &LossConfig::default()).map_err(|e| e.to_string())?;
    check(l == 0.0, format!("perfect batch loss {l}"))?;
    Ok("pinball, horizon weights and perfect-forecast loss exact".into())
}

fn tokenizer_bounds() -> Outcome {
    let cfg = PatchConfig { patch_sizes: vec![8, 16, 32], ..PatchConfig::default() };
    let build = |seed: u64| {
        let mut params = ParamStore::new();
        let tok = Tokenizer::new(cfg.clone(), 8, 8, &mut params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (tok, params)
    };
    let (mut tok, params) = build(7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut lo_hits, mut hi_hits) = (0, 0);
    for _ in 0..1000 {
        let len = rng.random_range(1..=400usize);
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        tok.bias = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut tape = Tape::new(&params);
        let seq = tok.tokenize_series(&mut tape, &v, &vec![true; len]).map_err(|e| e.to_string())?;
        let n = len.div_ceil(32);
        let t = seq.len();
        check(n <= t && t <= n * 32 / 8, format!("T' = {t} outside [{n}, {}] for length {len}", n * 4))?;
        lo_hits += usize::from(t == n);
        hi_hits += usize::from(t == n * 4);
    }
    tok.bias = vec![-40.0, -40.0, 40.0, 39.0, 39.0];
    let v: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut tape = Tape::new(&params);
    let seq = tok.tokenize_series(&mut tape, &v, &vec![true; 300]).map_err(|e| e.to_string())?;
    check(seq.len() == 10, format!("coarsest-only routing gave {} tokens for N = 10", seq.len()))?;

    let once = |seed: u64| {
        let (tok, params) = build(seed);
        let mut tape = Tape::new(&params);
        let seq = tok.tokenize_series(&mut tape, &v, &vec![true; 300]).unwrap();
        (tape.value(seq.embeddings).clone(), seq.spans, seq.decisions, seq.padding)
    };
    check(once(21) == once(21), "same seed gave different token sequences")?;
    Ok(format!("1000 series in bounds ({lo_hits} at N, {hi_hits} at N*p_S/p_1), coarsest-only T' = N, deterministic"))
}

fn drifting_cycle(n: usize) -> TimeSeries {
    let pattern = [0.3, -1.2, 2.0, 0.7, -0.4, 1.1];
    TimeSeries::synthetic("cycle", (0..n).map(|t| pattern[t % 6] + 0.25 * t as f64).collect())
}

struct Oracle;
impl Forecaster for Oracle {
    fn name(&self) -> String {
        "oracle".into()
    }
    fn predict(&self, context: &[f64], _: &[bool], horizon: usize, _: usize) -> Result<Prediction> {
        let t0 = context.len();
        let point = drifting_cycle(t0 + horizon).values[t0..].to_vec();
        Ok(Prediction {
            levels: QUANTILE_LEVELS.to_vec(),
            quantiles: point.iter().flat_map(|&v| [v; 9]).collect(),
            point,
        })
    }
}

fn metric_sanity() -> Outcome {
    let task = EvalTask { m_seas: Some(6), windows: 4, ..EvalTask::new("cycle", vec![drifting_cycle(120)], 6) };
    let (raw, _) = score_task(&SeasonalNaive, &task).map_err(|e| e.to_string())?;
    check((raw.mase - 1.0).abs() < 1e-9, format!("seasonal-naive raw MASE {}", raw.mase))?;
    let r = evaluate(&SeasonalNaive, &SeasonalNaive, std::slice::from_ref(&task)).map_err(|e| e.to_string())?;
    let norm = r.tasks[0].normalized.mase;
    check((norm - 1.0).abs() < 1e-9, format!("normalized MASE {norm}"))?;
    let (p, _) = score_task(&Oracle, &task).map_err(|e| e.to_string())?;
    for (name, v) in [("MASE", p.mase), ("CRPS", p.crps), ("MSE", p.mse), ("MAE", p.mae)] {
        check(v.abs() < 1e-12, format!("perfect forecast {name} = {v}"))?;
    }
    let g = aggregate(&[0.5, 2.0]).map_err(|e| e.to_string())?;
    check((g - 1.0).abs() < 1e-15, format!("geometric mean {g}"))?;
    Ok(format!("naive MASE {:.12}, perfect forecast 0 on four metrics, gm(0.5, 2) = {g}", raw.mase))
}

fn entropy_properties() -> Outcome {
    let cfg = EntropyConfig::default();
    check(cfg.window == 128 && cfg.stride == 128, "default window and stride must be 128")?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let bound = 128f64.log2();
    let mut max_seen = 0.0f64;
    let mut windows = 0;
    for seed in 0..50 {
        let s = gen_composite(&CompositeGenConfig { length: 1024, ..CompositeGenConfig::default() }, seed);
        let noise: Vec<f64> = (0..1024).map(|_| StandardNormal.sample(&mut rng)).collect();
        for series in [s.values, noise] {
            let p = profile("x", &series, &cfg).map_err(|e| e.to_string())?;
            check(p.entropies.len() == 8, format!("{} windows over 1024 steps", p.entropies.len()))?;
            for h in p.entropies {
                check((0.0..=bound).contains(&h), format!("entropy {h} outside [0, {bound}]"))?;
                max_seen = max_seen.max(h);
                windows += 1;
            }
        }
    }
    let sine: Vec<f64> = (0..128).map(|t| (2.0 * std::f64::consts::PI * 8.0 * t as f64 / 128.0).sin()).collect();
    let hs = spectral_entropy(&sine, false).map_err(|e| e.to_string())?;
    let mut noise_h: Vec<f64> = (0..100)
        .map(|_| {
            let w: Vec<f64> = (0..128).map(|_| StandardNormal.sample(&mut rng)).collect();
            spectral_entropy(&w, false).unwrap()
        })
        .collect();
    noise_h.sort_by(f64::total_cmp);
    let median = 0.5 * (noise_h[49] + noise_h[50]);
    check(hs < median, format!("sinusoid {hs:.3} not below noise median {median:.3}"))?;
    Ok(format!("{windows} windows within [0, 7] (max {max_seen:.3}), sinusoid {hs:.3} < noise median {median:.3}"))
}

fn generator_contracts() -> Outcome {
    let cfg = CompositeGenConfig::default();
    for seed in 0..10_000 {
        let (s, info) = gen_composite_with_info(&cfg, seed);
        check(s.len() == 4096, format!("seed {seed}: length {}", s.len()))?;
        check(info.seasonal || info.trend, format!("seed {seed}: neither seasonal nor trend"))?;
    }
    let icfg = IndustrialGenConfig { force_noise_free: true, ..IndustrialGenConfig::default() };
    for seed in 0..500 {
        let (s, p) = gen_industrial_with_params(&icfg, seed);
        let v = &s.values;
        check(
            (0..v.len() - p.period).all(|t| v[t] == v[t + p.period]),
            format!("industrial seed {seed} not periodic with period {}", p.period),
        )?;
    }
    let pcfg = CompositeGenConfig {
        periods: vec![24],
        force_seasonal: Some(true),
        force_trend: Some(false),
        force_noise: Some(false),
        force_double: Some(false),
        ..CompositeGenConfig::default()
    };
    let peak_period = |s: &TimeSeries| -> Result<f64> {
        let amp = patchwise_core::numerics::rfft_amplitude(&s.values)?;
        let a = amp.amplitudes();
        let k = (1..a.len()).max_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap();
        Ok(s.len() as f64 / k as f64)
    };
    // the forced single draw; spike trains and many random templates carry
    // more energy in a harmonic than in the fundamental, so recovery is also
    // reported as a rate per pattern
    let (s0, info0) = gen_composite_with_info(&pcfg, 0);
    let p0 = peak_period(&s0).map_err(|e| e.to_string())?;
    check((p0 - 24.0).abs() <= 1.0, format!("seed 0 ({:?}): FFT period {p0:.2}", info0.patterns))?;
    let mut rates = Vec::new();
    for pattern in [SeasonalPattern::Interpolated, SeasonalPattern::Spike] {
        let cfg = CompositeGenConfig { force_pattern: Some(pattern), ..pcfg.clone() };
        let mut hits = 0;
        for seed in 0..200 {
            let p = peak_period(&gen_composite(&cfg, seed)).map_err(|e| e.to_string())?;
            hits += usize::from((p - 24.0).abs() <= 1.0);
        }
        rates.push(format!("{pattern:?} {hits}/200"));
    }
    Ok(format!(
        "10000 composites valid, 500 industrial exactly periodic, seed-0 FFT period {p0:.2} (recovery: {})",
        rates.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// learning runs

struct LearningRun {
    full: f64,
    ablation: f64,
    baseline_raw: f64,
    model: Model,
    elapsed: Duration,
}

fn period24(seed: u64) -> TimeSeries {
    let cfg = CompositeGenConfig {
        periods: vec![24],
        force_seasonal: Some(true),
        force_trend: Some(true),
        force_noise: Some(false),
        force_double: Some(false),
        ..CompositeGenConfig::default()
    };
    gen_composite(&cfg, seed)
}

fn train(model: ModelConfig, corpus: &Corpus) -> Result<Model> {
    let mut cfg = TrainConfig { model, ..TrainConfig::default() };
    cfg.optim.total_steps = 2000;
    cfg.sampler.synthetic_fraction = 1.0;
    let mut trainer = Trainer::new(cfg)?;
    trainer.fit(corpus, None, |_| Ok(()))?;
    Ok(trainer.model)
}

fn learning_run() -> &'static std::result::Result<LearningRun, String> {
    static RUN: OnceLock<std::result::Result<LearningRun, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let t0 = Instant::now();
        let corpus = Corpus::from_series((0..256).map(period24).collect::<Vec<_>>());
        let test: Vec<TimeSeries> = (10_000..10_064).map(period24).collect();
        let task = EvalTask { m_seas: Some(24), context: Some(256), windows: 1, ..EvalTask::new("period24", test, 48) };
        let full_cfg = ModelConfig::default();
        let ablation_cfg = ModelConfig { patch: PatchConfig::fixed(32), ..ModelConfig::default() };
        let go = || -> Result<LearningRun> {
            let full = train(full_cfg, &corpus)?;
            let ablation = train(ablation_cfg, &corpus)?;
            let rf = evaluate(&ModelForecaster::new(&full), &SeasonalNaive, std::slice::from_ref(&task))?;
            let ra = evaluate(&ModelForecaster::new(&ablation), &SeasonalNaive, std::slice::from_ref(&task))?;
            Ok(LearningRun {
                full: rf.tasks[0].normalized.mase,
                ablation: ra.tasks[0].normalized.mase,
                baseline_raw: rf.tasks[0].baseline.mase,
                model: full,
                elapsed: t0.elapsed(),
            })
        };
        go().map_err(|e| e.to_string())
    })
}

fn desk_learning_run() -> Outcome {
    let run = learning_run().as_ref().map_err(|e| e.clone())?;
    let detail = format!(
        "normalized MASE full {:.3}, fixed-32 ablation {:.3} (seasonal naive raw MASE {:.3}), {:.0} s",
        run.full,
        run.ablation,
        run.baseline_raw,
        run.elapsed.as_secs_f64()
    );
    check(run.full < 1.0, format!("full model does not beat seasonal naive: {detail}"))?;
    check(run.full <= run.ablation, format!("full model worse than ablation: {detail}"))?;
    within(run.elapsed, 900.0)?;
    Ok(detail)
}

fn shuffle_ordering() -> Outcome {
    let run = learning_run().as_ref().map_err(|e| e.clone())?;
    let datasets: Vec<ShuffleDataset> = [12usize, 24, 48]
        .iter()
        .map(|&p| {
            let cfg = CompositeGenConfig {
                length: 512,
                periods: vec![p],
                force_seasonal: Some(true),
                force_double: Some(false),
                ..CompositeGenConfig::default()
            };
            ShuffleDataset {
                name: format!("period{p}"),
                series: (0..24).map(|s| gen_composite(&cfg, 20_000 + 100 * p as u64 + s)).collect(),
                m_seas: p,
            }
        })
        .collect();
    let cfg = ShuffleConfig { horizon: 48, batch_size: 8, seed: 0 };
    let report = shuffle_experiment(&run.model, &datasets, None, &cfg).map_err(|e| e.to_string())?;
    check(report.rows.len() == 4, format!("{} conditions reported", report.rows.len()))?;
    let mean = |m| report.mean(m).filter(|v| v.is_finite()).ok_or(format!("no finite mean for {m}"));
    let (iarope, intra, inter, fixed) = (
        mean(ShuffleMode::Iarope)?,
        mean(ShuffleMode::IntraDataset)?,
        mean(ShuffleMode::InterDataset)?,
        mean(ShuffleMode::Fixed)?,
    );
    check(report.iarope_le_intra == (iarope <= intra), "iarope/intra flag inconsistent")?;
    check(report.intra_le_inter == (intra <= inter), "intra/inter flag inconsistent")?;
    let flagged = usize::from(!report.iarope_le_intra) + usize::from(!report.intra_le_inter);
    check(report.violations.len() == flagged, "violations list does not match the flags")?;
    let summary = format!("iarope {iarope:.4}, intra {intra:.4}, inter {inter:.4}, fixed {fixed:.4}");
    if report.violations.is_empty() {
        Ok(format!("{summary}; ordering holds"))
    } else {
        Ok(format!("{summary}; flagged: {}", report.violations.join("; ")))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("ancestor oracle", ancestor_oracle),
        ("rotary relative-position identity", rope_relative_identity),
        ("adaptive rotary identity reduction", iarope_identity_reduction),
        ("base frequency spot values", theta_spot_values),
        ("load-balance convergence", load_balance_convergence),
        ("full-model gradient check", gradient_check),
        ("quantile loss values", quantile_loss_values),
        ("tokenizer bounds and determinism", tokenizer_bounds),
        ("metric sanity", metric_sanity),
        ("spectral entropy properties", entropy_properties),
        ("synthetic generator contracts", generator_contracts),
        ("desk-scale learning run", desk_learning_run),
        ("shuffle harness ordering", shuffle_ordering),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail} ({secs:.2} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail} ({secs:.2} s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
