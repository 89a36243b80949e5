//! Multi-system Darcy corpora, permutation augmentation, and the `NIPSDS1`
//! container.
//!
//! Container layout (all integers and floats little-endian):
//!
//! ```text
//! b"NIPSDS1\0"            8-byte magic
//! u32                     byte length of the JSON header
//! [u8; len]               UTF-8 JSON CorpusHeader
//! f64 blocks, row-major   for each system: b (n²), then per pair: g (n²), p (n²)
//! ```

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::darcy::{DarcyOperator, Grid2D};
use crate::error::{Error, Result};
use crate::randfield::{binarize_microstructure, sample_grf, split_seed, GrfSpec};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"NIPSDS1\0";
const NOISE_SALT: u64 = 0x6E6F_6973_655F_7631;

/// Everything needed to regenerate a corpus bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub format_version: u32,
    /// Grid points per side, boundary included.
    pub grid: usize,
    pub n_systems: usize,
    /// Systems `0..n_train` form the training split, the rest the test split.
    pub n_train: usize,
    pub d_pool: usize,
    pub seed: u64,
    /// Standard deviation of the additive noise on training loadings.
    pub noise_sigma: f64,
    pub micro: GrfSpec,
    pub load: GrfSpec,
}

impl CorpusHeader {
    pub fn validate(&self) -> Result<()> {
        if self.n_systems == 0 || self.d_pool == 0 {
            return Err(Error::Config("corpus needs at least one system and one pair".into()));
        }
        if self.n_train > self.n_systems {
            return Err(Error::Config(format!(
                "training split {} exceeds {} systems",
                self.n_train, self.n_systems
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma must be ≥ 0, got {}", self.noise_sigma)));
        }
        Grid2D::new(self.grid)?;
        for spec in [&self.micro, &self.load] {
            spec.validate()?;
            if spec.grid != (self.grid, self.grid) {
                return Err(Error::Config(format!(
                    "field grid {:?} differs from corpus grid {}",
                    spec.grid, self.grid
                )));
            }
        }
        Ok(())
    }

    pub fn block_len(&self) -> usize {
        self.grid * self.grid
    }

    /// Number of f64 values stored after the header.
    pub fn payload_values(&self) -> usize {
        self.n_systems * (1 + 2 * self.d_pool) * self.block_len()
    }
}

/// One hidden system: a permeability field and its pool of solved pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemRecord {
    pub system_id: usize,
    pub b: Tensor,
    pub loads: Vec<Tensor>,
    pub solutions: Vec<Tensor>,
}

impl SystemRecord {
    pub fn n(&self) -> usize {
        self.b.shape()[0]
    }

    pub fn d_pool(&self) -> usize {
        self.loads.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub header: CorpusHeader,
    pub systems: Vec<SystemRecord>,
}

impl Corpus {
    pub fn train(&self) -> &[SystemRecord] {
        &self.systems[..self.header.n_train]
    }

    pub fn test(&self) -> &[SystemRecord] {
        &self.systems[self.header.n_train..]
    }

    pub fn total_pairs(&self) -> usize {
        self.systems.iter().map(SystemRecord::d_pool).sum()
    }
}

/// Generates one system: `ξ → b`, `d_pool` loadings, and their solutions.
/// Noise, when requested, perturbs the stored loadings after solving.
pub fn build_system(header: &CorpusHeader, system_id: usize) -> Result<SystemRecord> {
    let grid = Grid2D::new(header.grid)?;
    let mut micro_rng = ChaCha8Rng::seed_from_u64(split_seed(header.micro.seed ^ header.seed, system_id as u64));
    let mut load_rng = ChaCha8Rng::seed_from_u64(split_seed(header.load.seed ^ header.seed, system_id as u64));
    let xi = sample_grf(&header.micro, &mut micro_rng)?;
    let b = binarize_microstructure(&xi);
    let op = DarcyOperator::new(&b, grid)?;
    let mut loads = Vec::with_capacity(header.d_pool);
    let mut solutions = Vec::with_capacity(header.d_pool);
    for _ in 0..header.d_pool {
        let g = sample_grf(&header.load, &mut load_rng)?;
        solutions.push(op.solve(&g)?);
        loads.push(g);
    }
    if header.noise_sigma > 0.0 && system_id < header.n_train {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(split_seed(header.seed ^ NOISE_SALT, system_id as u64));
        loads = loads.iter().map(|g| add_noise(g, header.noise_sigma, &mut noise_rng)).collect::<Result<_>>()?;
    }
    Ok(SystemRecord { system_id, b, loads, solutions })
}

/// Builds every system of the corpus described by `header`.
pub fn build_darcy_corpus(header: CorpusHeader) -> Result<Corpus> {
    header.validate()?;
    let systems = (0..header.n_systems)
        .map(|s| build_system(&header, s).map_err(|e| e.in_system(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { header, systems })
}

/// `g + ε` with `ε ~ N(0, σ²)` independently per node.
pub fn add_noise<R: Rng + ?Sized>(g: &Tensor, sigma: f64, rng: &mut R) -> Result<Tensor> {
    if !(sigma >= 0.0) {
        return Err(Error::contract(format!("noise sigma must be ≥ 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(g.clone());
    }
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::contract(e.to_string()))?;
    Ok(Tensor::from_fn(g.shape(), |k| g.data()[k] + dist.sample(rng)))
}

/// `d` pairs of one system in a chosen order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainSample {
    pub system_id: usize,
    /// Pool indices; column `j` of both `G` and `U` is pair `indices[j]`.
    pub indices: Vec<usize>,
    /// Ordinal of the permutation draw within its system.
    pub permutation: usize,
}

impl TrainSample {
    /// The first `d` pairs in pool order.
    pub fn in_pool_order(record: &SystemRecord, d: usize) -> Result<Self> {
        check_d(record, d)?;
        Ok(TrainSample { system_id: record.system_id, indices: (0..d).collect(), permutation: 0 })
    }

    pub fn d(&self) -> usize {
        self.indices.len()
    }

    /// Stacks the selected loadings and solutions as `N × d` matrices.
    pub fn materialize(&self, record: &SystemRecord) -> Result<(Tensor, Tensor)> {
        if record.system_id != self.system_id {
            return Err(Error::contract(format!(
                "sample of system {} materialized from system {}",
                self.system_id, record.system_id
            )));
        }
        Ok((stack_columns(&record.loads, &self.indices)?, stack_columns(&record.solutions, &self.indices)?))
    }
}

fn stack_columns(fields: &[Tensor], indices: &[usize]) -> Result<Tensor> {
    let d = indices.len();
    let nodes = fields.first().map(Tensor::len).unwrap_or(0);
    let mut out = Tensor::zeros(&[nodes, d]);
    for (j, &idx) in indices.iter().enumerate() {
        let f = fields.get(idx).ok_or_else(|| Error::contract(format!("pair index {idx} out of range")))?;
        for (x, v) in f.data().iter().enumerate() {
            out.data_mut()[x * d + j] = *v;
        }
    }
    Ok(out)
}

fn check_d(record: &SystemRecord, d: usize) -> Result<()> {
    if d == 0 || d > record.d_pool() {
        return Err(Error::contract(format!("d = {d} must be in 1..={} pooled pairs", record.d_pool())));
    }
    Ok(())
}

/// `n_rand` samples of `d` pairs each. The first is the leading `d` pairs
/// in pool order; the rest are drawn uniformly without replacement and kept
/// in draw order.
pub fn permute_augment<R: Rng + ?Sized>(
    record: &SystemRecord,
    d: usize,
    n_rand: usize,
    rng: &mut R,
) -> Result<Vec<TrainSample>> {
    check_d(record, d)?;
    let mut pool: Vec<usize> = (0..record.d_pool()).collect();
    Ok((0..n_rand)
        .map(|k| {
            if k == 0 {
                return TrainSample { system_id: record.system_id, indices: (0..d).collect(), permutation: 0 };
            }
            let (chosen, _) = pool.partial_shuffle(rng, d);
            TrainSample { system_id: record.system_id, indices: chosen.to_vec(), permutation: k }
        })
        .collect())
}

/// Augments every system with an independent stream derived from `seed`.
pub fn augment_systems(systems: &[SystemRecord], d: usize, n_rand: usize, seed: u64) -> Result<Vec<TrainSample>> {
    let mut out = Vec::with_capacity(systems.len() * n_rand);
    for rec in systems {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, rec.system_id as u64));
        out.extend(permute_augment(rec, d, n_rand, &mut rng).map_err(|e| e.in_system(rec.system_id))?);
    }
    Ok(out)
}

/// Serializes a corpus into the container format.
pub fn encode(corpus: &Corpus) -> Result<Vec<u8>> {
    let h = &corpus.header;
    let header = serde_json::to_vec(h)?;
    let mut out = Vec::with_capacity(12 + header.len() + 8 * h.payload_values());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    if corpus.systems.len() != h.n_systems {
        return Err(Error::contract(format!(
            "header declares {} systems, corpus holds {}",
            h.n_systems,
            corpus.systems.len()
        )));
    }
    for rec in &corpus.systems {
        if rec.d_pool() != h.d_pool || rec.b.len() != h.block_len() {
            return Err(Error::contract(format!("system {} does not match the header", rec.system_id)));
        }
        let blocks = std::iter::once(&rec.b).chain(rec.loads.iter().zip(&rec.solutions).flat_map(|(g, p)| [g, p]));
        for t in blocks {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Parses the container format.
pub fn decode(bytes: &[u8]) -> Result<Corpus> {
    let fail = |offset: usize, reason: &str| Error::Format { offset, reason: reason.into() };
    if bytes.len() < 8 || &bytes[..8] != DATASET_MAGIC {
        return Err(fail(0, "bad magic, expected NIPSDS1"));
    }
    let len_bytes: [u8; 4] = bytes.get(8..12).ok_or_else(|| fail(8, "truncated header length"))?.try_into().unwrap();
    let hlen = u32::from_le_bytes(len_bytes) as usize;
    let hbytes = bytes.get(12..12 + hlen).ok_or_else(|| fail(12, "truncated JSON header"))?;
    let header: CorpusHeader =
        serde_json::from_slice(hbytes).map_err(|e| fail(12, &format!("invalid JSON header: {e}")))?;
    header.validate()?;
    let start = 12 + hlen;
    let payload = &bytes[start..];
    let expected = header.payload_values() * 8;
    if payload.len() != expected {
        return Err(fail(
            start + payload.len().min(expected),
            &format!("payload holds {} bytes, header implies {expected}", payload.len()),
        ));
    }
    let n = header.grid;
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut next_block = || -> Result<Tensor> { Tensor::new(&[n, n], values.by_ref().take(n * n).collect()) };
    let mut systems = Vec::with_capacity(header.n_systems);
    for system_id in 0..header.n_systems {
        let b = next_block()?;
        let mut loads = Vec::with_capacity(header.d_pool);
        let mut solutions = Vec::with_capacity(header.d_pool);
        for _ in 0..header.d_pool {
            loads.push(next_block()?);
            solutions.push(next_block()?);
        }
        systems.push(SystemRecord { system_id, b, loads, solutions });
    }
    Ok(Corpus { header, systems })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Sidecar manifest written next to each container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
    pub header: CorpusHeader,
    pub total_pairs: usize,
    /// Digest of each system's blocks, in system order.
    pub system_sha256: Vec<String>,
}

pub fn manifest(corpus: &Corpus, file_name: &str, encoded: &[u8]) -> Manifest {
    let hlen = u32::from_le_bytes(encoded[8..12].try_into().unwrap()) as usize;
    let per_system = 8 * (1 + 2 * corpus.header.d_pool) * corpus.header.block_len();
    let payload = &encoded[12 + hlen..];
    Manifest {
        file: file_name.to_string(),
        bytes: encoded.len(),
        sha256: sha256_hex(encoded),
        header: corpus.header.clone(),
        total_pairs: corpus.total_pairs(),
        system_sha256: payload.chunks(per_system.max(1)).map(sha256_hex).collect(),
    }
}

/// Writes the container and its `<file>.manifest.json` sidecar.
pub fn save(corpus: &Corpus, path: &Path) -> Result<Manifest> {
    let bytes = encode(corpus)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let m = manifest(corpus, &name, &bytes);
    std::fs::write(manifest_path(path), serde_json::to_vec_pretty(&m)?)?;
    Ok(m)
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest.json");
    p.into()
}

pub fn load(path: &Path) -> Result<Corpus> {
    decode(&std::fs::read(path)?)
}
