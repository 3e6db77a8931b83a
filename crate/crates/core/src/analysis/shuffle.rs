//! Causal test of instance-adaptive rotary frequencies: forecast with each
//! instance's own `(γ, β)`, with modulations swapped inside a dataset, with
//! modulations borrowed from another dataset, and with the identity.

use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::iarope::Modulation;
use crate::metrics::mase_masked;
use crate::model::{Model, ModulationSource};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleMode {
    Iarope,
    IntraDataset,
    InterDataset,
    Fixed,
}

impl ShuffleMode {
    pub const ALL: [ShuffleMode; 4] = [
        ShuffleMode::Iarope,
        ShuffleMode::IntraDataset,
        ShuffleMode::InterDataset,
        ShuffleMode::Fixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShuffleMode::Iarope => "iarope",
            ShuffleMode::IntraDataset => "intra_dataset",
            ShuffleMode::InterDataset => "inter_dataset",
            ShuffleMode::Fixed => "fixed",
        }
    }
}

impl fmt::Display for ShuffleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShuffleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown shuffle mode {s:?}")))
    }
}

/// Uniform permutation without fixed points (rejection sampling).
fn derangement(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return p;
        }
    }
}

/// Rewrite one batch of per-instance, per-layer modulations.
///
/// Intra mode permutes whole instances (so layer `l` always receives a layer
/// `l` modulation) with no instance keeping its own; inter mode draws donors
/// uniformly with replacement.
pub fn shuffle_modulations(
    batch: &[Vec<Modulation>],
    mode: ShuffleMode,
    donors: &[Vec<Modulation>],
    rng: &mut impl Rng,
) -> Result<Vec<Vec<Modulation>>> {
    match mode {
        ShuffleMode::Iarope => Ok(batch.to_vec()),
        ShuffleMode::Fixed => Ok(batch
            .iter()
            .map(|layers| layers.iter().map(|m| Modulation::identity(m.gamma.len())).collect())
            .collect()),
        ShuffleMode::IntraDataset => {
            if batch.len() < 2 {
                log::warn!("intra-dataset shuffle of a batch of {}; left unchanged", batch.len());
                return Ok(batch.to_vec());
            }
            let p = derangement(batch.len(), rng);
            Ok(p.iter().map(|&j| batch[j].clone()).collect())
        }
        ShuffleMode::InterDataset => {
            if donors.is_empty() {
                return Err(Error::arg("inter-dataset shuffle needs a non-empty donor pool"));
            }
            batch
                .iter()
                .map(|own| {
                    let d = &donors[rng.random_range(0..donors.len())];
                    let aligned = d.len() == own.len()
                        && d.iter().zip(own).all(|(a, b)| a.gamma.len() == b.gamma.len());
                    if !aligned {
                        return Err(Error::Shape("donor modulation layers do not align".into()));
                    }
                    Ok(d.clone())
                })
                .collect()
        }
    }
}

/// A named group of series evaluated on their final `horizon` steps.
#[derive(Debug, Clone)]
pub struct ShuffleDataset {
    pub name: String,
    pub series: Vec<TimeSeries>,
    pub m_seas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleRow {
    pub mode: ShuffleMode,
    pub mean_mase: f64,
    pub instances: usize,
    /// Instances whose MASE was non-finite and left out of the mean.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleReport {
    pub rows: Vec<ShuffleRow>,
    pub iarope_le_intra: bool,
    pub intra_le_inter: bool,
    /// Human-readable list of violated ordering pairs.
    pub violations: Vec<String>,
}

impl ShuffleReport {
    pub fn mean(&self, mode: ShuffleMode) -> Option<f64> {
        self.rows.iter().find(|r| r.mode == mode).map(|r| r.mean_mase)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mode", "mean_mase", "instances", "skipped"])?;
        for r in &self.rows {
            out.write_record([
                r.mode.to_string(),
                r.mean_mase.to_string(),
                r.instances.to_string(),
                r.skipped.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleConfig {
    pub horizon: usize,
    pub batch_size: usize,
    pub seed: u64,
}

struct Instance<'a> {
    dataset: usize,
    history: (&'a [f64], &'a [bool]),
    target: (&'a [f64], &'a [bool]),
    m_seas: usize,
    own: Vec<Modulation>,
}

/// Mean MASE of `model` under each [`ShuffleMode`]. Without `donors`, each
/// dataset borrows from the instances of all other datasets.
pub fn shuffle_experiment(
    model: &Model,
    datasets: &[ShuffleDataset],
    donors: Option<&[Vec<Modulation>]>,
    cfg: &ShuffleConfig,
) -> Result<ShuffleReport> {
    if cfg.horizon == 0 || cfg.batch_size == 0 {
        return Err(Error::arg("horizon and batch_size must be positive"));
    }
    let mut instances = Vec::new();
    for (d, ds) in datasets.iter().enumerate() {
        for s in &ds.series {
            if s.len() < cfg.horizon + ds.m_seas + 1 {
                log::warn!("series {} too short for the shuffle harness; skipped", s.id);
                continue;
            }
            let cut = s.len() - cfg.horizon;
            let (hv, hm) = (&s.values[..cut], &s.mask[..cut]);
            let (ctx, obs) = model.prepare_context(hv, hm)?;
            instances.push(Instance {
                dataset: d,
                history: (hv, hm),
                target: (&s.values[cut..], &s.mask[cut..]),
                m_seas: ds.m_seas,
                own: model.modulations(&ctx, &obs)?,
            });
        }
    }
    if instances.is_empty() {
        return Err(Error::arg("no usable instances"));
    }

    let mut rows = Vec::new();
    for mode in ShuffleMode::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut assigned: Vec<Option<Vec<Modulation>>> = vec![None; instances.len()];
        for d in 0..datasets.len() {
            let members: Vec<usize> = (0..instances.len()).filter(|&i| instances[i].dataset == d).collect();
            let pool: Vec<Vec<Modulation>> = match donors {
                Some(p) => p.to_vec(),
                None => instances
                    .iter()
                    .filter(|x| x.dataset != d)
                    .map(|x| x.own.clone())
                    .collect(),
            };
            for chunk in members.chunks(cfg.batch_size) {
                let batch: Vec<Vec<Modulation>> = chunk.iter().map(|&i| instances[i].own.clone()).collect();
                let out = shuffle_modulations(&batch, mode, &pool, &mut rng)?;
                for (&i, m) in chunk.iter().zip(out) {
                    assigned[i] = Some(m);
                }
            }
        }
        let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
        for (inst, mods) in instances.iter().zip(&assigned) {
            let mods = mods.as_ref().expect("every instance assigned");
            let f = model.forecast_with(
                inst.history.0,
                inst.history.1,
                cfg.horizon,
                ModulationSource::Given(mods),
            )?;
            let v = mase_masked(
                &f.median(),
                inst.target.0,
                Some(inst.target.1),
                inst.history.0,
                Some(inst.history.1),
                inst.m_seas,
            )?;
            if v.is_finite() {
                sum += v;
                n += 1;
            } else {
                skipped += 1;
            }
        }
        rows.push(ShuffleRow {
            mode,
            mean_mase: if n > 0 { sum / n as f64 } else { f64::NAN },
            instances: n,
            skipped,
        });
    }

    let get = |m: ShuffleMode| rows.iter().find(|r| r.mode == m).map_or(f64::NAN, |r| r.mean_mase);
    let (a, b, c) = (
        get(ShuffleMode::Iarope),
        get(ShuffleMode::IntraDataset),
        get(ShuffleMode::InterDataset),
    );
    let iarope_le_intra = a <= b;
    let intra_le_inter = b <= c;
    let mut violations = Vec::new();
    if !iarope_le_intra {
        violations.push(format!("iarope ({a:.6}) > intra_dataset ({b:.6})"));
    }
    if !intra_le_inter {
        violations.push(format!("intra_dataset ({b:.6}) > inter_dataset ({c:.6})"));
    }
    for v in &violations {
        log::warn!("shuffle ordering violated: {v}");
    }
    Ok(ShuffleReport {
        rows,
        iarope_le_intra,
        intra_le_inter,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mods(tag: f64, layers: usize) -> Vec<Modulation> {
        (0..layers)
            .map(|l| Modulation {
                gamma: vec![tag + l as f64; 2],
                beta: vec![-tag; 2],
            })
            .collect()
    }

    #[test]
    fn iarope_identity_and_fixed_identity() {
        let batch: Vec<_> = (0..3).map(|i| mods(i as f64, 2)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(shuffle_modulations(&batch, ShuffleMode::Iarope, &[], &mut rng).unwrap(), batch);
        let f = shuffle_modulations(&batch, ShuffleMode::Fixed, &[], &mut rng).unwrap();
        assert!(f.iter().flatten().all(|m| *m == Modulation::identity(2)));
    }

    #[test]
    fn intra_is_a_derangement_preserving_the_multiset() {
        let batch: Vec<_> = (0..6).map(|i| mods(i as f64, 2)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let out = shuffle_modulations(&batch, ShuffleMode::IntraDataset, &[], &mut rng).unwrap();
            assert!(out.iter().zip(&batch).all(|(a, b)| a != b));
            for l in 0..2 {
                let mut x: Vec<f64> = out.iter().map(|m| m[l].gamma[0]).collect();
                let mut y: Vec<f64> = batch.iter().map(|m| m[l].gamma[0]).collect();
                x.sort_by(f64::total_cmp);
                y.sort_by(f64::total_cmp);
                assert_eq!(x, y);
            }
        }
        let single = vec![mods(0.0, 2)];
        assert_eq!(shuffle_modulations(&single, ShuffleMode::IntraDataset, &[], &mut rng).unwrap(), single);
    }

    #[test]
    fn inter_draws_from_pool_and_checks_alignment() {
        let batch: Vec<_> = (0..4).map(|i| mods(i as f64, 2)).collect();
        let pool = vec![mods(10.0, 2), mods(20.0, 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = shuffle_modulations(&batch, ShuffleMode::InterDataset, &pool, &mut rng).unwrap();
        assert!(out.iter().all(|m| pool.contains(m)));
        assert!(shuffle_modulations(&batch, ShuffleMode::InterDataset, &[], &mut rng).is_err());
        assert!(shuffle_modulations(&batch, ShuffleMode::InterDataset, &[mods(1.0, 3)], &mut rng).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in ShuffleMode::ALL {
            assert_eq!(m.as_str().parse::<ShuffleMode>().unwrap(), m);
        }
        assert!("nope".parse::<ShuffleMode>().is_err());
    }
}
