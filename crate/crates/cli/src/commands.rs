use crate::config::RunConfig;
use crate::{AnalyzeMode, Cli, Command};
use patchwise_core::analysis::{
    profile, shuffle_experiment, write_patch_maps_csv, write_profiles_csv, EntropySummary, PatchSizeMap,
    ShuffleConfig, ShuffleDataset,
};
use patchwise_core::data::{gen_composite, gen_industrial, load_series, write_jsonl, Corpus, TimeSeries};
use patchwise_core::iarope::{Modulation, ModulationRecord};
use patchwise_core::metrics::{evaluate, seasonality, EvalTask, ModelForecaster, SeasonalNaive};
use patchwise_core::model::{Checkpoint, Model};
use patchwise_core::training::{batch_seed, Trainer};
use patchwise_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    cfg.train.optim.seed = cfg.seed;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    fs::create_dir_all(&g.out)?;
    let out = g.out;

    let name = match &cli.command {
        Command::Generate { .. } => "generate",
        Command::Profile { .. } => "profile",
        Command::Train { .. } => "train",
        Command::Forecast { .. } => "forecast",
        Command::Eval { .. } => "eval",
        Command::Analyze { .. } => "analyze",
    };
    match cli.command {
        Command::Generate {
            count,
            industrial_fraction,
            length,
        } => {
            let gc = &mut cfg.generate;
            gc.count = count.unwrap_or(gc.count);
            gc.industrial_fraction = industrial_fraction.unwrap_or(gc.industrial_fraction);
            if let Some(l) = length {
                gc.composite.length = l;
                gc.industrial.length = l;
            }
            write_snapshot(&out, name, &cfg)?;
            generate(&cfg, &out)
        }
        Command::Profile {
            input,
            window,
            stride,
            remove_mean,
        } => {
            let p = &mut cfg.profile;
            p.window = window.unwrap_or(p.window);
            p.stride = stride.unwrap_or(p.stride);
            p.remove_mean |= remove_mean;
            write_snapshot(&out, name, &cfg)?;
            cmd_profile(&cfg, &input, &out)
        }
        Command::Train {
            data,
            synthetic,
            steps,
            batch_size,
            resume,
        } => {
            if let Some(s) = steps {
                cfg.train.optim.total_steps = s;
            }
            if let Some(b) = batch_size {
                cfg.train.optim.batch_size = b;
            }
            write_snapshot(&out, name, &cfg)?;
            train(&cfg, &data, synthetic, resume.as_deref(), &out)
        }
        Command::Forecast {
            checkpoint,
            input,
            horizon,
        } => {
            cfg.forecast_horizon = horizon.unwrap_or(cfg.forecast_horizon);
            write_snapshot(&out, name, &cfg)?;
            forecast(&cfg, &checkpoint, &input, &out)
        }
        Command::Eval {
            checkpoint,
            input,
            horizon,
            m_seas,
            windows,
            stride,
        } => {
            let e = &mut cfg.eval;
            e.horizon = horizon.unwrap_or(e.horizon);
            e.m_seas = m_seas.or(e.m_seas);
            e.windows = windows.unwrap_or(e.windows);
            e.stride = stride.or(e.stride);
            write_snapshot(&out, name, &cfg)?;
            eval(&cfg, checkpoint.as_deref(), &input, &out)
        }
        Command::Analyze {
            checkpoint,
            input,
            mode,
            donors,
            horizon,
            m_seas,
        } => {
            let a = &mut cfg.analyze;
            a.horizon = horizon.unwrap_or(a.horizon);
            a.m_seas = m_seas.or(a.m_seas);
            write_snapshot(&out, name, &cfg)?;
            let model = Checkpoint::load(&checkpoint)?.to_model()?;
            match mode {
                AnalyzeMode::Routing => routing(&model, &input, &out),
                AnalyzeMode::Shuffle => shuffle(&cfg, &model, &input, donors.as_deref(), &out),
            }
        }
    }
}

fn write_snapshot(out: &Path, name: &str, cfg: &RunConfig) -> Result<()> {
    fs::write(out.join(format!("{name}.resolved.conf")), cfg.snapshot()?)?;
    Ok(())
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn synthetic_corpus(cfg: &RunConfig, count: usize) -> Vec<TimeSeries> {
    let g = &cfg.generate;
    (0..count)
        .map(|i| {
            let s = batch_seed(cfg.seed, i as u64);
            let industrial = ChaCha8Rng::seed_from_u64(s).random_bool(g.industrial_fraction.clamp(0.0, 1.0));
            let (kind, mut series) = if industrial {
                ("industrial", gen_industrial(&g.industrial, s))
            } else {
                ("composite", gen_composite(&g.composite, s))
            };
            series.id = format!("{kind}-{i:06}");
            series
        })
        .collect()
}

fn generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let series = synthetic_corpus(cfg, cfg.generate.count);
    write_jsonl(out.join("corpus.jsonl"), &series)?;
    eprintln!("wrote {} series to {}", series.len(), out.join("corpus.jsonl").display());
    Ok(())
}

fn cmd_profile(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let series = load_series(input)?;
    let profiles: Vec<_> = series
        .par_iter()
        .filter_map(|s| match profile(&s.id, &s.values, &cfg.profile) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("{}: {e}; skipped", s.id);
                None
            }
        })
        .collect();
    write_profiles_csv(&profiles, create(out.join("entropy.csv"))?)?;
    let per: Vec<EntropySummary> = profiles.iter().map(EntropySummary::from).collect();
    let n = per.len().max(1) as f64;
    let summary = serde_json::json!({
        "window": cfg.profile.window,
        "stride": cfg.profile.stride,
        "series": per.len(),
        "mean_mu_se": per.iter().map(|p| p.mu_se).sum::<f64>() / n,
        "mean_sigma_se": per.iter().map(|p| p.sigma_se).sum::<f64>() / n,
        "profiles": per,
    });
    write_json(out.join("entropy_summary.json"), &summary)
}

fn train(cfg: &RunConfig, data: &[PathBuf], synthetic: Option<usize>, resume: Option<&Path>, out: &Path) -> Result<()> {
    let mut series = Vec::new();
    for p in data {
        series.extend(load_series(p)?);
    }
    if series.is_empty() {
        series = synthetic_corpus(cfg, synthetic.unwrap_or(cfg.generate.count));
    }
    let corpus = Corpus::from_series(series);

    let mut trainer = match resume {
        Some(p) => {
            let mut t = Trainer::resume(&Checkpoint::load(p)?)?;
            t.cfg.optim.total_steps = cfg.train.optim.total_steps;
            t.cfg.log_every = cfg.train.log_every;
            t.cfg.checkpoint_every = cfg.train.checkpoint_every;
            t
        }
        None => Trainer::new(cfg.train.clone())?,
    };
    let log_path = out.join("train_log.jsonl");
    let log_file = if resume.is_some() {
        OpenOptions::new().create(true).append(true).open(&log_path)?
    } else {
        File::create(&log_path)?
    };
    let mut log = BufWriter::new(log_file);
    let total = trainer.cfg.optim.total_steps;
    let reports = trainer.fit(&corpus, Some(&mut log), |t| {
        let path = if t.step >= total {
            out.join("checkpoint.bin")
        } else {
            out.join(format!("checkpoint-{:06}.bin", t.step))
        };
        t.checkpoint()?.save(path)
    })?;
    log.flush()?;
    if let Some(last) = reports.last() {
        eprintln!("trained to step {} (final loss {:.6})", trainer.step, last.loss);
    }
    Ok(())
}

#[derive(Serialize)]
struct ForecastRecord {
    id: String,
    median: Vec<f64>,
    quantiles: BTreeMap<String, Vec<f64>>,
}

fn forecast(cfg: &RunConfig, checkpoint: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = Checkpoint::load(checkpoint)?.to_model()?;
    let series = load_series(input)?;
    let h = cfg.forecast_horizon;
    let records: Vec<Result<ForecastRecord>> = series
        .par_iter()
        .map(|s| {
            let f = model.forecast(&s.values, &s.mask, h)?;
            let quantiles = f
                .levels
                .iter()
                .enumerate()
                .map(|(k, l)| (l.to_string(), f.level(k)))
                .collect();
            Ok(ForecastRecord {
                id: s.id.clone(),
                median: f.median(),
                quantiles,
            })
        })
        .collect();
    let mut w = create(out.join("forecasts.jsonl"))?;
    for r in records {
        serde_json::to_writer(&mut w, &r?)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let e = &cfg.eval;
    let mut tasks = Vec::new();
    for p in inputs {
        let mut t = EvalTask::new(file_stem(p), load_series(p)?, e.horizon);
        t.m_seas = e.m_seas;
        t.windows = e.windows;
        t.stride = e.stride;
        tasks.push(t);
    }
    let naive = evaluate(&SeasonalNaive, &SeasonalNaive, &tasks)?;
    let mut reports = Vec::new();
    if let Some(p) = checkpoint {
        let model = Checkpoint::load(p)?.to_model()?;
        reports.push(evaluate(&ModelForecaster::new(&model), &SeasonalNaive, &tasks)?);
    }
    reports.push(naive);
    let mut w = create(out.join("scores.csv"))?;
    for (i, r) in reports.iter().enumerate() {
        let mut buf = Vec::new();
        r.write_csv(&mut buf)?;
        // keep a single header
        let text = String::from_utf8_lossy(&buf);
        let body = if i == 0 { &text[..] } else { text.split_once('\n').map_or("", |x| x.1) };
        w.write_all(body.as_bytes())?;
    }
    w.flush()?;
    write_json(out.join("scores.json"), &reports)
}

fn routing(model: &Model, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut series = Vec::new();
    for p in inputs {
        series.extend(load_series(p)?);
    }
    let sizes = &model.cfg.patch.patch_sizes;
    let rows: Vec<Result<(PatchSizeMap, serde_json::Value, ModulationRecord)>> = series
        .par_iter()
        .map(|s| {
            let decisions = model.routing(&s.values, &s.mask)?;
            let map = PatchSizeMap::from_decisions(&s.id, &decisions, sizes);
            let records: Vec<_> = decisions.iter().enumerate().map(|(i, d)| d.record(i)).collect();
            let (ctx, obs) = model.prepare_context(&s.values, &s.mask)?;
            let mods = ModulationRecord {
                id: s.id.clone(),
                layers: model.modulations(&ctx, &obs)?,
            };
            Ok((map, serde_json::json!({"id": s.id, "patches": records}), mods))
        })
        .collect();
    let mut maps = Vec::new();
    let mut routing_w = create(out.join("routing.jsonl"))?;
    let mut mods_w = create(out.join("modulations.jsonl"))?;
    for r in rows {
        let (map, rec, mods) = r?;
        maps.push(map);
        serde_json::to_writer(&mut routing_w, &rec)?;
        routing_w.write_all(b"\n")?;
        serde_json::to_writer(&mut mods_w, &mods)?;
        mods_w.write_all(b"\n")?;
    }
    routing_w.flush()?;
    mods_w.flush()?;
    write_patch_maps_csv(&maps, create(out.join("patch_sizes.csv"))?)
}

fn shuffle(cfg: &RunConfig, model: &Model, inputs: &[PathBuf], donors: Option<&Path>, out: &Path) -> Result<()> {
    let a = &cfg.analyze;
    let mut datasets = Vec::new();
    for p in inputs {
        let series = load_series(p)?;
        let m = a
            .m_seas
            .unwrap_or_else(|| series.first().map_or(1, |s| seasonality(&s.freq)));
        datasets.push(ShuffleDataset {
            name: file_stem(p),
            series,
            m_seas: m,
        });
    }
    let pool: Option<Vec<Vec<Modulation>>> = match donors {
        None => None,
        Some(p) => Some(
            load_series(p)?
                .iter()
                .map(|s| {
                    let (ctx, obs) = model.prepare_context(&s.values, &s.mask)?;
                    model.modulations(&ctx, &obs)
                })
                .collect::<Result<_>>()?,
        ),
    };
    let report = shuffle_experiment(
        model,
        &datasets,
        pool.as_deref(),
        &ShuffleConfig {
            horizon: a.horizon,
            batch_size: a.batch_size,
            seed: cfg.seed,
        },
    )?;
    report.write_csv(create(out.join("shuffle.csv"))?)?;
    write_json(out.join("shuffle.json"), &report)
}
