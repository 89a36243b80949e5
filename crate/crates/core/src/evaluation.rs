//! Zero-shot errors on held-out systems, sweeps and stability statistics.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::darcy::{greens_kernel, Grid2D};
use crate::dataset::{build_darcy_corpus, sha256_hex, CorpusHeader, SystemRecord, TrainSample};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, NipsModel};
use crate::tensor::Tensor;
use crate::trainer::{relative_l2_loss, TrainConfig, TrainReport, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system_ids: Vec<usize>,
    pub forward_errors: Vec<f64>,
    pub e_forward: f64,
    pub kernel_errors: Vec<f64>,
    pub e_inverse: f64,
    pub d: usize,
    pub grid: usize,
    pub config_digest: String,
    pub model_digest: String,
    pub dataset_digest: String,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// SHA-256 of the model configuration as JSON.
pub fn config_digest(cfg: &ModelConfig) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(cfg)?.as_bytes()))
}

/// SHA-256 of the configuration and the exact bits of every weight.
pub fn model_digest(model: &NipsModel) -> Result<String> {
    let mut bytes = serde_json::to_vec(&model.cfg)?;
    for t in model.tensors() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(sha256_hex(&bytes))
}

fn context(record: &SystemRecord, d: usize) -> Result<(Tensor, Tensor)> {
    if d > record.d_pool() {
        return Err(Error::contract(format!(
            "system {} holds {} pairs, {d} requested",
            record.system_id,
            record.d_pool()
        )));
    }
    TrainSample::in_pool_order(record, d)?.materialize(record)
}

fn check_grid(model: &NipsModel, record: &SystemRecord) -> Result<()> {
    if record.n() != model.cfg.grid {
        return Err(Error::dim(format!("model grid {} but system {} is on {}", model.cfg.grid, record.system_id, record.n())));
    }
    Ok(())
}

/// Relative L² error of each system's first `d` pairs predicted with the
/// kernel built from those same pairs.
pub fn eval_forward(model: &NipsModel, systems: &[SystemRecord], d: usize) -> Result<Vec<f64>> {
    systems
        .iter()
        .map(|r| {
            check_grid(model, r)?;
            let (g, u) = context(r, d)?;
            relative_l2_loss(&model.predict(&g, &u, &g)?, &u).map_err(|e| e.in_system(r.system_id))
        })
        .collect()
}

/// As [`eval_forward`] but through the materialized `N × N` kernel.
pub fn eval_forward_materialized(model: &NipsModel, systems: &[SystemRecord], d: usize) -> Result<Vec<f64>> {
    systems
        .iter()
        .map(|r| {
            check_grid(model, r)?;
            let (g, u) = context(r, d)?;
            let k = model.extract_kernel(&g, &u)?;
            relative_l2_loss(&k.apply(&g)?, &u).map_err(|e| e.in_system(r.system_id))
        })
        .collect()
}

/// Interior relative Frobenius error of the learned kernel against the
/// exact Green's kernel of each system's permeability.
pub fn eval_kernel(model: &NipsModel, systems: &[SystemRecord], d: usize) -> Result<Vec<f64>> {
    systems
        .iter()
        .map(|r| {
            check_grid(model, r)?;
            let (g, u) = context(r, d)?;
            let learned = model.extract_kernel(&g, &u)?;
            let truth = greens_kernel(&r.b, Grid2D::new(r.n())?).map_err(|e| e.in_system(r.system_id))?;
            learned.relative_error(&truth)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn evaluate(model: &NipsModel, systems: &[SystemRecord], d: usize, dataset_digest: &str) -> Result<EvalReport> {
    if systems.is_empty() {
        return Err(Error::contract("no systems to evaluate"));
    }
    let forward_errors = eval_forward(model, systems, d)?;
    let kernel_errors = eval_kernel(model, systems, d)?;
    Ok(EvalReport {
        system_ids: systems.iter().map(|r| r.system_id).collect(),
        e_forward: mean(&forward_errors),
        e_inverse: mean(&kernel_errors),
        forward_errors,
        kernel_errors,
        d,
        grid: model.cfg.grid,
        config_digest: config_digest(&model.cfg)?,
        model_digest: model_digest(model)?,
        dataset_digest: dataset_digest.to_string(),
    })
}

/// Max pairwise Frobenius distance between kernels built from column
/// permutations of one system's first `d` pairs, over their mean norm.
/// The first draw is the identity order.
pub fn permutation_stability(model: &NipsModel, record: &SystemRecord, d: usize, n_perm: usize, seed: u64) -> Result<f64> {
    if n_perm == 0 {
        return Err(Error::contract("n_perm must be positive"));
    }
    check_grid(model, record)?;
    let base = TrainSample::in_pool_order(record, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernels = Vec::with_capacity(n_perm);
    for p in 0..n_perm {
        let mut s = base.clone();
        if p > 0 {
            s.indices.shuffle(&mut rng);
        }
        let (g, u) = s.materialize(record)?;
        kernels.push(model.extract_kernel(&g, &u)?.values);
    }
    let norm = mean(&kernels.iter().map(Tensor::norm).collect::<Vec<_>>());
    let mut spread: f64 = 0.0;
    for i in 0..n_perm {
        for j in i + 1..n_perm {
            spread = spread.max(kernels[i].sub(&kernels[j])?.norm());
        }
    }
    Ok(if spread == 0.0 { 0.0 } else { spread / norm })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    NRand,
    DK,
    Sigma,
    Resolution,
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_rand" | "nrand" | "n-rand" => Ok(SweepAxis::NRand),
            "d_k" | "dk" | "d-k" => Ok(SweepAxis::DK),
            "sigma" | "noise" => Ok(SweepAxis::Sigma),
            "resolution" | "grid" => Ok(SweepAxis::Resolution),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?}"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::NRand => "n_rand",
            SweepAxis::DK => "d_k",
            SweepAxis::Sigma => "sigma",
            SweepAxis::Resolution => "resolution",
        })
    }
}

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub data: CorpusHeader,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub model_seed: u64,
}

#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub model: NipsModel,
    pub report: TrainReport,
    pub eval: EvalReport,
}

impl Experiment {
    /// Generates the corpus, trains on its training split and evaluates
    /// zero-shot on the test split.
    pub fn run(&self) -> Result<TrainedRun> {
        let corpus = build_darcy_corpus(self.data.clone())?;
        let digest = sha256_hex(&crate::dataset::encode(&corpus)?);
        let mut trainer = Trainer::new(NipsModel::init(self.model.clone(), self.model_seed)?, self.train.clone())?;
        let report = trainer.fit(corpus.train(), |_, _| Ok(()))?;
        let eval = evaluate(&trainer.model, corpus.test(), self.model.d, &digest)?;
        Ok(TrainedRun { model: trainer.model, report, eval })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub final_loss: f64,
    pub e_forward: f64,
    pub e_inverse: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,value,final_loss,e_forward,e_inverse\n");
    for r in rows {
        out.push_str(&format!("{},{:.16e},{:.16e},{:.16e},{:.16e}\n", r.axis, r.value, r.final_loss, r.e_forward, r.e_inverse));
    }
    out
}

fn integral(axis: SweepAxis, v: f64) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Config(format!("{axis} takes whole numbers, got {v}")));
    }
    Ok(v as usize)
}

/// Trains one model per value from identical seeds and tabulates test
/// errors. The resolution axis trains once on the base grid and evaluates
/// the regridded model on corpora generated at each listed grid.
pub fn sweep(axis: SweepAxis, values: &[f64], base: &Experiment, mut on_row: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::contract("sweep needs at least one value"));
    }
    let tag = |v: f64| move |e: Error| Error::AtSweepPoint { point: format!("{axis}={v}"), source: Box::new(e) };
    let mut rows = Vec::with_capacity(values.len());
    let shared = if axis == SweepAxis::Resolution { Some(base.run()?) } else { None };
    for &v in values {
        let row = (|| -> Result<SweepRow> {
            let (final_loss, eval) = match (&shared, axis) {
                (Some(run), _) => {
                    let grid = integral(axis, v)?;
                    let mut data = base.data.clone();
                    data.grid = grid;
                    data.micro.grid = (grid, grid);
                    data.load.grid = (grid, grid);
                    let corpus = build_darcy_corpus(data)?;
                    let digest = sha256_hex(&crate::dataset::encode(&corpus)?);
                    let model = run.model.regrid(grid)?;
                    (run.report.final_loss, evaluate(&model, corpus.test(), base.model.d, &digest)?)
                }
                (None, _) => {
                    let mut exp = base.clone();
                    match axis {
                        SweepAxis::NRand => exp.train.n_rand = integral(axis, v)?,
                        SweepAxis::DK => exp.model.d_k = integral(axis, v)?,
                        SweepAxis::Sigma => exp.data.noise_sigma = v,
                        SweepAxis::Resolution => unreachable!(),
                    }
                    let run = exp.run()?;
                    (run.report.final_loss, run.eval)
                }
            };
            Ok(SweepRow { axis, value: v, final_loss, e_forward: eval.e_forward, e_inverse: eval.e_inverse })
        })()
        .map_err(tag(v))?;
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Filter;
    use crate::randfield::GrfSpec;

    fn tiny_corpus() -> crate::dataset::Corpus {
        let n = 7;
        build_darcy_corpus(CorpusHeader {
            format_version: 1,
            grid: n,
            n_systems: 3,
            n_train: 2,
            d_pool: 6,
            seed: 4,
            noise_sigma: 0.0,
            micro: GrfSpec::new(5.0, 4.0, n, 1),
            load: GrfSpec::new(5.0, 1.0, n, 2),
        })
        .unwrap()
    }

    fn tiny_model() -> NipsModel {
        let mut cfg = ModelConfig::new(7, 4, 3, 2);
        cfg.modes = 2;
        NipsModel::init(cfg, 9).unwrap()
    }

    #[test]
    fn zero_filter_gives_unit_error() {
        let c = tiny_corpus();
        let mut m = tiny_model();
        for l in &mut m.layers {
            if let Filter::Fourier(r) = &mut l.filter {
                *r = Tensor::zeros(r.shape());
            }
        }
        for e in eval_forward(&m, c.test(), 4).unwrap() {
            assert!((e - 1.0).abs() < 1e-15);
        }
        for e in eval_kernel(&m, c.test(), 4).unwrap() {
            assert!((e - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn factorized_and_materialized_agree() {
        let c = tiny_corpus();
        let m = tiny_model();
        let a = eval_forward(&m, &c.systems, 4).unwrap();
        let b = eval_forward_materialized(&m, &c.systems, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_pairs_is_contract_error() {
        let c = tiny_corpus();
        let err = eval_forward(&tiny_model(), c.test(), 7).unwrap_err();
        assert!(err.is_contract());
    }

    #[test]
    fn grid_mismatch_is_dimension_error() {
        let c = tiny_corpus();
        let mut cfg = ModelConfig::new(9, 4, 3, 2);
        cfg.modes = 2;
        let m = NipsModel::init(cfg, 1).unwrap();
        assert!(matches!(eval_kernel(&m, c.test(), 4), Err(Error::Dimension(_))));
    }

    #[test]
    fn report_means_and_stability() {
        let c = tiny_corpus();
        let m = tiny_model();
        let r = evaluate(&m, &c.systems, 4, "x").unwrap();
        assert_eq!(r.e_forward, r.forward_errors.iter().sum::<f64>() / 3.0);
        assert!(r.kernel_errors.iter().all(|&e| e >= 0.0));
        assert_eq!(r, evaluate(&m, &c.systems, 4, "x").unwrap());
        assert_eq!(permutation_stability(&m, &c.systems[0], 4, 1, 3).unwrap(), 0.0);
        assert!(permutation_stability(&m, &c.systems[0], 4, 4, 3).unwrap() > 0.0);
    }

    #[test]
    fn sweep_tags_failing_point() {
        let c = tiny_corpus();
        let exp = Experiment { data: c.header.clone(), model: tiny_model().cfg, train: TrainConfig { epochs: 0, ..Default::default() }, model_seed: 1 };
        let err = sweep(SweepAxis::DK, &[0.5], &exp, |_| {}).unwrap_err();
        assert!(matches!(err, Error::AtSweepPoint { .. }));
        let rows = sweep(SweepAxis::NRand, &[1.0, 2.0], &exp, |_| {}).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(sweep_csv(&rows).lines().count() == 3);
    }
}
