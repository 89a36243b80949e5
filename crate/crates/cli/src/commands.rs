use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use nips_core::darcy::{greens_kernel, Grid2D};
use nips_core::dataset::{self, sha256_hex, Corpus, CorpusHeader};
use nips_core::evaluation::{evaluate, permutation_stability, sweep, sweep_csv, Experiment, SweepAxis};
use nips_core::interpret::{
    interior_agreement, kernel_phase_map, recover_permeability, rowsum_map, to_pgm, to_svg, RecoveryOptions,
};
use nips_core::model::{default_modes, Checkpoint, ModelConfig, NipsModel, NormPlacement, Variant};
use nips_core::randfield::GrfSpec;
use nips_core::trainer::{TrainConfig, Trainer};
use nips_core::Tensor;
use serde::Serialize;

use crate::conf::{list, Conf};
use crate::{CliError, Common};

type Res<T> = Result<T, CliError>;

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Res<String> {
    fs::write(path, bytes.as_ref())?;
    Ok(sha256_hex(bytes.as_ref()))
}

/// Writes `checksums.sha256` listing every output of a command.
fn write_checksums(dir: &Path, entries: &[(String, String)]) -> Res<()> {
    let text: String = entries.iter().map(|(name, sum)| format!("{sum}  {name}\n")).collect();
    fs::write(dir.join("checksums.sha256"), text)?;
    Ok(())
}

fn prepare_dir(dir: &Path, force: bool) -> Res<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !force {
        return Err(CliError::Contract(format!("output directory {} is not empty; pass --force to overwrite", dir.display())));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn corpus_header(c: &Conf) -> Res<CorpusHeader> {
    let grid: usize = c.get("grid", 21)?;
    let systems: usize = c.get("systems", 100)?;
    let default_train = ((systems as f64 * 0.9).round() as usize).clamp(1, systems.max(1));
    Ok(CorpusHeader {
        format_version: 1,
        grid,
        n_systems: systems,
        n_train: c.get("train", default_train)?,
        d_pool: c.get("pairs", 100)?,
        seed: c.get("seed", 0)?,
        noise_sigma: c.get("noise", 0.0)?,
        micro: GrfSpec::new(c.get("micro.tau", 5.0)?, c.get("micro.alpha", 4.0)?, grid, c.get("micro.seed", 1)?),
        load: GrfSpec::new(c.get("load.tau", 5.0)?, c.get("load.alpha", 1.0)?, grid, c.get("load.seed", 2)?),
    })
}

fn model_config(c: &Conf, grid: usize, d_pool: usize) -> Res<ModelConfig> {
    let cfg = ModelConfig {
        layers: c.get("layers", 2)?,
        d: c.get("d", d_pool.min(50))?,
        d_k: c.get("dk", 20)?,
        modes: c.get("modes", default_modes(grid))?,
        grid,
        norm_placement: c.get("norm_placement", NormPlacement::FirstLayerBoth)?,
        variant: c.get("variant", Variant::Nips)?,
        normalize_streams: c.get("normalize_streams", true)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(c: &Conf) -> Res<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: c.get("lr", d.learning_rate)?,
        beta1: c.get("beta1", d.beta1)?,
        beta2: c.get("beta2", d.beta2)?,
        eps_adam: c.get("eps_adam", d.eps_adam)?,
        weight_decay: c.get("weight_decay", d.weight_decay)?,
        epochs: c.get("epochs", d.epochs)?,
        batch_size: c.get("batch", d.batch_size)?,
        lr_decay: c.get("lr_decay", d.lr_decay)?,
        lr_decay_every: c.get("lr_decay_every", d.lr_decay_every)?,
        n_rand: c.get("nrand", d.n_rand)?,
        seed: c.get("seed", d.seed)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    /// Output container path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    systems: Option<usize>,
    /// Systems in the training split (default 90%).
    #[arg(long)]
    train: Option<usize>,
    /// Load/solution pairs per system.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gaussian noise on training loadings.
    #[arg(long)]
    noise: Option<f64>,
}

pub fn gen_data(a: GenDataArgs) -> Res<()> {
    let c = Conf::load(
        a.common.config.as_deref(),
        &a.common.set,
        vec![
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
            ("grid", s(&a.grid)),
            ("systems", s(&a.systems)),
            ("train", s(&a.train)),
            ("pairs", s(&a.pairs)),
            ("seed", s(&a.seed)),
            ("noise", s(&a.noise)),
        ],
    )?;
    let out: PathBuf = c.get("out", PathBuf::from("data.bin").display().to_string())?.into();
    let header = corpus_header(&c)?;
    c.finish()?;
    let corpus = dataset::build_darcy_corpus(header)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let m = dataset::save(&corpus, &out)?;
    let mut conf_path = out.clone().into_os_string();
    conf_path.push(".conf");
    fs::write(&conf_path, c.frozen())?;
    println!("{}  {} ({} pairs, {} bytes)", m.sha256, out.display(), m.total_pairs, m.bytes);
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    dk: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    nrand: Option<usize>,
    /// nips, nao-wp or nao-wp-linear.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite a non-empty checkpoint directory.
    #[arg(long)]
    force: bool,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

pub fn train(a: TrainArgs) -> Res<()> {
    let c = Conf::load(
        a.common.config.as_deref(),
        &a.common.set,
        vec![
            ("data", a.data.as_ref().map(|p| p.display().to_string())),
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
            ("layers", s(&a.layers)),
            ("d", s(&a.d)),
            ("dk", s(&a.dk)),
            ("modes", s(&a.modes)),
            ("nrand", s(&a.nrand)),
            ("variant", a.variant.clone()),
            ("epochs", s(&a.epochs)),
            ("lr", s(&a.lr)),
            ("batch", s(&a.batch)),
            ("seed", s(&a.seed)),
        ],
    )?;
    let data: PathBuf = c.require::<String>("data")?.into();
    let out: PathBuf = c.get("out", "run".to_string())?.into();
    let corpus = dataset::load(&data)?;
    let mcfg = model_config(&c, corpus.header.grid, corpus.header.d_pool)?;
    let tcfg = train_config(&c)?;
    let model_seed: u64 = c.get("model_seed", tcfg.seed)?;
    let every: usize = c.get("checkpoint_every", 0)?;
    c.finish()?;

    let ck_path = out.join("checkpoint.bin");
    let mut trainer = if a.resume {
        let ck = Checkpoint::load(&ck_path)?;
        if ck.model.cfg != mcfg {
            return Err(CliError::Contract("checkpoint model settings differ from the resolved config".into()));
        }
        Trainer::from_checkpoint(ck, Some(tcfg))?
    } else {
        prepare_dir(&out, a.force)?;
        Trainer::new(NipsModel::init(mcfg, model_seed)?, tcfg)?
    };
    fs::write(out.join("train.conf"), c.frozen())?;
    eprintln!(
        "training {} params on {} systems ({} samples per epoch)",
        trainer.model.param_count(),
        corpus.train().len(),
        corpus.train().len() * trainer.cfg.n_rand
    );
    let report = trainer.fit(corpus.train(), |t, r| {
        eprintln!("epoch {:>5}  loss {:.6}  lr {:.3e}  {:.2}s", r.epoch, r.loss, r.lr, r.time_s);
        if every > 0 && r.epoch % every == 0 {
            t.to_checkpoint()?.save(&out.join(format!("checkpoint-e{:05}.bin", r.epoch)))?;
        }
        Ok(())
    })?;
    let ck = trainer.to_checkpoint()?.encode()?;
    let mut sums = vec![("checkpoint.bin".to_string(), write(&ck_path, &ck)?)];
    sums.push(("train.csv".into(), write(&out.join("train.csv"), report.to_csv())?));
    sums.push(("train.json".into(), write(&out.join("train.json"), serde_json::to_vec_pretty(&report)?)?));
    sums.push(("train.conf".into(), sha256_hex(c.frozen().as_bytes())));
    write_checksums(&out, &sums)?;
    println!("{}  {} (loss {:.6} -> {:.6})", sums[0].1, ck_path.display(), report.initial_loss, report.final_loss);
    Ok(())
}

fn select_split<'a>(corpus: &'a Corpus, split: &str) -> Res<&'a [nips_core::dataset::SystemRecord]> {
    match split {
        "test" => Ok(corpus.test()),
        "train" => Ok(corpus.train()),
        "all" => Ok(&corpus.systems),
        other => Err(CliError::Usage(format!("split must be test, train or all, got {other:?}"))),
    }
}

fn model_for(ck: &Checkpoint, corpus: &Corpus, regrid: bool) -> Res<NipsModel> {
    let grid = corpus.header.grid;
    if ck.model.cfg.grid == grid {
        return Ok(ck.model.clone());
    }
    if regrid {
        return Ok(ck.model.regrid(grid)?);
    }
    Err(CliError::Core(nips_core::Error::Dimension(format!(
        "grid mismatch: checkpoint is {}×{0} but dataset is {grid}×{grid}; pass --regrid to transfer",
        ck.model.cfg.grid
    ))))
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    /// test, train or all.
    #[arg(long)]
    split: Option<String>,
    /// Column permutations per system for the kernel stability statistic.
    #[arg(long)]
    stability: Option<usize>,
    /// Apply a Fourier model trained on another grid.
    #[arg(long)]
    regrid: bool,
}

#[derive(Serialize)]
struct Stability {
    n_perm: usize,
    seed: u64,
    system_ids: Vec<usize>,
    spread: Vec<f64>,
    mean: f64,
}

pub fn eval(a: EvalArgs) -> Res<()> {
    let c = Conf::load(
        a.common.config.as_deref(),
        &a.common.set,
        vec![
            ("checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string())),
            ("data", a.data.as_ref().map(|p| p.display().to_string())),
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
            ("d", s(&a.d)),
            ("split", a.split.clone()),
            ("stability", s(&a.stability)),
        ],
    )?;
    let ck_path: PathBuf = c.require::<String>("checkpoint")?.into();
    let data: PathBuf = c.require::<String>("data")?.into();
    let out: PathBuf = c.get("out", "eval".to_string())?.into();
    let split: String = c.get("split", "test".to_string())?;
    let n_perm: usize = c.get("stability", 0)?;
    let seed: u64 = c.get("stability_seed", 0)?;
    let ck = Checkpoint::load(&ck_path)?;
    let bytes = fs::read(&data)?;
    let corpus = dataset::decode(&bytes)?;
    let model = model_for(&ck, &corpus, a.regrid)?;
    let d: usize = c.get("d", model.cfg.d)?;
    c.finish()?;
    let systems = select_split(&corpus, &split)?;
    let report = evaluate(&model, systems, d, &sha256_hex(&bytes))?;
    fs::create_dir_all(&out)?;
    let mut sums = vec![("eval.json".to_string(), write(&out.join("eval.json"), report.to_json()?)?)];
    if n_perm > 0 {
        let spread = systems
            .iter()
            .map(|r| permutation_stability(&model, r, d, n_perm, seed ^ r.system_id as u64))
            .collect::<Result<Vec<_>, _>>()?;
        let st = Stability {
            n_perm,
            seed,
            system_ids: systems.iter().map(|r| r.system_id).collect(),
            mean: spread.iter().sum::<f64>() / spread.len().max(1) as f64,
            spread,
        };
        sums.push(("stability.json".into(), write(&out.join("stability.json"), serde_json::to_vec_pretty(&st)?)?));
    }
    sums.push(("eval.conf".into(), write(&out.join("eval.conf"), c.frozen())?));
    write_checksums(&out, &sums)?;
    println!("E_forward {:.6}  E_inverse {:.6}  ({} systems)", report.e_forward, report.e_inverse, systems.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    #[command(flatten)]
    common: Common,
    /// Learned kernel source; omit with --exact.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// System id to invert (default: first test system).
    #[arg(long)]
    system: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Use the exact Green's kernel instead of a learned one.
    #[arg(long)]
    exact: bool,
}

#[derive(Serialize)]
struct InvertReport {
    system_id: usize,
    source: String,
    rowsum_threshold: f64,
    rowsum_agreement: f64,
    recovered_agreement: f64,
    recovery: nips_core::interpret::RecoveryResult,
}

pub fn invert(a: InvertArgs) -> Res<()> {
    let c = Conf::load(
        a.common.config.as_deref(),
        &a.common.set,
        vec![
            ("checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string())),
            ("data", a.data.as_ref().map(|p| p.display().to_string())),
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
            ("system", s(&a.system)),
            ("d", s(&a.d)),
            ("iterations", s(&a.iterations)),
        ],
    )?;
    let data: PathBuf = c.require::<String>("data")?.into();
    let out: PathBuf = c.get("out", "invert".to_string())?.into();
    let corpus = dataset::load(&data)?;
    let default_system = corpus.test().first().or(corpus.systems.first()).map(|r| r.system_id).unwrap_or(0);
    let system: usize = c.get("system", default_system)?;
    let defaults = RecoveryOptions::default();
    let opts = RecoveryOptions {
        learning_rate: c.get("recovery_lr", defaults.learning_rate)?,
        iterations: c.get("iterations", defaults.iterations)?,
        ..defaults
    };
    let record = corpus
        .systems
        .iter()
        .find(|r| r.system_id == system)
        .ok_or_else(|| CliError::Usage(format!("dataset has no system {system}")))?;
    let (kernel, source) = if a.exact {
        (greens_kernel(&record.b, Grid2D::new(record.n())?)?, "exact".to_string())
    } else {
        let ck_path: PathBuf = c.require::<String>("checkpoint")?.into();
        let ck = Checkpoint::load(&ck_path)?;
        let model = model_for(&ck, &corpus, false)?;
        let d: usize = c.get("d", model.cfg.d)?;
        let (g, u) = dataset::TrainSample::in_pool_order(record, d)?.materialize(record)?;
        (model.extract_kernel(&g, &u)?, ck_path.display().to_string())
    };
    c.finish()?;
    fs::create_dir_all(&out)?;
    let s_map = rowsum_map(&kernel);
    let phase = kernel_phase_map(&kernel)?;
    let rec = recover_permeability(&kernel, Some(&record.b), &opts)?;
    let b_star = rec.b_star_tensor();
    let report = InvertReport {
        system_id: system,
        source,
        rowsum_threshold: phase.threshold,
        rowsum_agreement: interior_agreement(&phase.labels, &record.b),
        recovered_agreement: interior_agreement(&rec.phase_map_tensor(), &record.b),
        recovery: rec,
    };
    let n = record.n();
    let b = record.b.clone().reshape(&[n, n])?;
    let phase_range = Some((0.0, 12.0));
    let panels: [(&str, &Tensor, Option<(f64, f64)>, &str); 4] = [
        ("permeability", &b, Some((3.0, 12.0)), "true permeability"),
        ("rowsum", &s_map, None, "kernel row sum"),
        ("rowsum_phase", &phase.labels, phase_range, "thresholded row sum"),
        ("recovered", &b_star, Some((3.0, 12.0)), "recovered permeability"),
    ];
    let mut sums = vec![("invert.json".to_string(), write(&out.join("invert.json"), serde_json::to_vec_pretty(&report)?)?)];
    for (name, field, range, title) in panels {
        let pgm = format!("{name}.pgm");
        sums.push((pgm.clone(), write(&out.join(&pgm), to_pgm(field, range))?));
        let svg = format!("{name}.svg");
        sums.push((svg.clone(), write(&out.join(&svg), to_svg(field, title, 16))?));
    }
    sums.push(("invert.conf".into(), write(&out.join("invert.conf"), c.frozen())?));
    write_checksums(&out, &sums)?;
    println!(
        "system {system}: row-sum agreement {:.3}, microstructure error {:.4}",
        report.rowsum_agreement,
        report.recovery.microstructure_error.unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated token counts (perfect squares).
    #[arg(long)]
    tokens: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    dk: Option<usize>,
    /// Cap on the dense baseline's projection weights, in bytes.
    #[arg(long)]
    mem_cap: Option<usize>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub tokens: usize,
    pub variant: Variant,
    pub time_s: Option<f64>,
    pub peak_bytes: Option<usize>,
    pub status: String,
}

pub fn bench(a: BenchArgs) -> Res<()> {
    let c = Conf::load(
        a.common.config.as_deref(),
        &a.common.set,
        vec![
            ("tokens", a.tokens.clone()),
            ("d", s(&a.d)),
            ("dk", s(&a.dk)),
            ("mem_cap", s(&a.mem_cap)),
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
        ],
    )?;
    let tokens: Vec<usize> = list("tokens", &c.get("tokens", "441,1681".to_string())?)?;
    let d: usize = c.get("d", 10)?;
    let d_k: usize = c.get("dk", 10)?;
    let layers: usize = c.get("layers", 2)?;
    let systems: usize = c.get("systems", 2)?;
    let n_rand: usize = c.get("nrand", 1)?;
    let cap: usize = c.get("mem_cap", 4usize << 30)?;
    let seed: u64 = c.get("seed", 0)?;
    let out: PathBuf = c.get("out", "bench.csv".to_string())?.into();
    c.finish()?;
    if tokens.is_empty() {
        return Err(CliError::Usage("tokens list is empty".into()));
    }
    let mut rows = Vec::new();
    for &nt in &tokens {
        let grid = (nt as f64).sqrt().round() as usize;
        if grid * grid != nt {
            return Err(CliError::Usage(format!("token count {nt} is not a square grid")));
        }
        let corpus = dataset::build_darcy_corpus(CorpusHeader {
            format_version: 1,
            grid,
            n_systems: systems,
            n_train: systems,
            d_pool: d,
            seed,
            noise_sigma: 0.0,
            micro: GrfSpec::new(5.0, 4.0, grid, 1),
            load: GrfSpec::new(5.0, 1.0, grid, 2),
        })?;
        for variant in [Variant::Nips, Variant::NaoWpQuadratic] {
            let mut cfg = ModelConfig::new(grid, d, d_k, layers);
            cfg.variant = variant;
            let dense_bytes = if variant.is_dense() { layers * 2 * nt * nt * 8 } else { 0 };
            if dense_bytes > cap {
                rows.push(BenchRow { tokens: nt, variant, time_s: None, peak_bytes: None, status: "exceeds memory budget".into() });
                continue;
            }
            let tcfg = TrainConfig { epochs: 1, n_rand, seed, ..Default::default() };
            let mut trainer = Trainer::new(NipsModel::init(cfg, seed)?, tcfg)?;
            let report = trainer.fit(corpus.train(), |_, _| Ok(()))?;
            let rec = &report.epochs[0];
            eprintln!("{nt:>6} tokens  {variant:<8} {:.3}s  peak {} bytes", rec.time_s, rec.peak_bytes);
            rows.push(BenchRow { tokens: nt, variant, time_s: Some(rec.time_s), peak_bytes: Some(rec.peak_bytes), status: "ok".into() });
        }
    }
    let csv = bench_csv(&rows);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&out, &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("tokens,variant,time_s,peak_bytes,status\n");
    for r in rows {
        let t = r.time_s.map(|t| format!("{t:.16e}")).unwrap_or_default();
        let p = r.peak_bytes.map(|p| p.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{t},{p},{}\n", r.tokens, r.variant, r.status));
    }
    out
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// n_rand, d_k, sigma or resolution.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated values along the axis.
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

pub fn report(a: ReportArgs) -> Res<()> {
    let c = Conf::load(
        a.common.config.as_deref(),
        &a.common.set,
        vec![
            ("axis", a.axis.clone()),
            ("values", a.values.clone()),
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
        ],
    )?;
    let axis: SweepAxis = c.require::<String>("axis")?.parse().map_err(|e: nips_core::Error| CliError::Usage(e.to_string()))?;
    let values: Vec<f64> = list("values", &c.require::<String>("values")?)?;
    let out: PathBuf = c.get("out", "report".to_string())?.into();
    let data = corpus_header(&c)?;
    let model = model_config(&c, data.grid, data.d_pool)?;
    let train = train_config(&c)?;
    let model_seed: u64 = c.get("model_seed", train.seed)?;
    c.finish()?;
    if values.is_empty() {
        return Err(CliError::Usage("values list is empty".into()));
    }
    prepare_dir(&out, a.force)?;
    fs::write(out.join("report.conf"), c.frozen())?;
    let exp = Experiment { data, model, train, model_seed };
    let rows = sweep(axis, &values, &exp, |r| {
        eprintln!("{}={}  E_forward {:.6}  E_inverse {:.6}", r.axis, r.value, r.e_forward, r.e_inverse)
    })?;
    let csv = sweep_csv(&rows);
    let sums = vec![
        ("sweep.csv".to_string(), write(&out.join("sweep.csv"), &csv)?),
        ("report.conf".into(), sha256_hex(c.frozen().as_bytes())),
    ];
    write_checksums(&out, &sums)?;
    print!("{csv}");
    Ok(())
}
