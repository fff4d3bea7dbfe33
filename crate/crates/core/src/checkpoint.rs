//! Binary checkpoints and run manifests.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SWDQ" | version u32 | tensor count u32
//! per tensor: name len u16 | name UTF-8 | dtype u8 (0 f32, 1 f64) | rank u8 | dims u64[rank] | payload
//! optimizer: step u64 | lr f64 | beta1 f64 | beta2 f64 | epsilon f64 | slot count u32
//!            per slot: len u64 | first moment f32[len] | second moment f32[len]
//! frame counter u64
//! manifest len u32 | manifest UTF-8 (`key = value` lines)
//! ```

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swindqn_tensor::{AdamConfig, AdamState, DType, Element, Tensor};
use thiserror::Error;

use crate::agent::Agent;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::persist::write_atomic;
use crate::qnet::{Backbone, QNetwork};

pub const MAGIC: &[u8; 4] = b"SWDQ";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Provenance stored with every checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub code_version: String,
    pub started_unix: u64,
    pub saved_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(config: ExperimentConfig) -> Self {
        let now = unix_now();
        RunManifest { config, code_version: env!("CARGO_PKG_VERSION").to_string(), started_unix: now, saved_unix: now }
    }

    pub fn to_text(&self) -> String {
        format!(
            "{}code_version = {}\nstarted_unix = {}\nsaved_unix = {}\n",
            self.config.to_text(),
            self.code_version,
            self.started_unix,
            self.saved_unix
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest {
            config: ExperimentConfig::default(),
            code_version: String::new(),
            started_unix: 0,
            saved_unix: 0,
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| CheckpointError::Malformed(format!("manifest line `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let num =
                |v: &str| v.parse::<u64>().map_err(|_| CheckpointError::Malformed(format!("manifest value `{v}`")));
            match k {
                "code_version" => m.code_version = v.to_string(),
                "started_unix" => m.started_unix = num(v)?,
                "saved_unix" => m.saved_unix = num(v)?,
                _ => m.config.set(k, v)?,
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<usize>,
    /// Little-endian element bytes.
    pub payload: Vec<u8>,
}

impl StoredTensor {
    pub fn from_tensor<T: Element>(name: &str, t: &Tensor<T>) -> Self {
        let data = t.data();
        let mut payload = Vec::with_capacity(data.len() * T::DTYPE.size_of());
        for v in data.iter() {
            v.write_le(&mut payload);
        }
        StoredTensor { name: name.to_string(), dtype: T::DTYPE, dims: t.shape().to_vec(), payload }
    }

    pub fn values<T: Element>(&self) -> Vec<T> {
        match self.dtype {
            DType::F32 => self.payload.chunks_exact(4).map(|c| T::from_f64_lossy(f64::from(f32::read_le(c)))).collect(),
            DType::F64 => self.payload.chunks_exact(8).map(|c| T::from_f64_lossy(f64::read_le(c))).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<StoredTensor>,
    pub optimizer: AdamState<f32>,
    pub frames: u64,
    pub manifest: RunManifest,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> std::result::Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> std::result::Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &'static str) -> std::result::Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    fn len(&mut self, what: &'static str, elem: usize) -> std::result::Result<usize, CheckpointError> {
        let n = self.u64(what)?;
        // Reject lengths that cannot fit in the rest of the input before allocating.
        let n = usize::try_from(n).map_err(|_| CheckpointError::Truncated(what))?;
        if n.checked_mul(elem).is_none_or(|b| b > self.bytes.len() - self.pos) {
            return Err(CheckpointError::Truncated(what));
        }
        Ok(n)
    }

    fn f32s(&mut self, n: usize, what: &'static str) -> std::result::Result<Vec<f32>, CheckpointError> {
        Ok(self.take(n * 4, what)?.chunks_exact(4).map(f32::read_le).collect())
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dtype.tag());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&t.payload);
        }
        let o = &self.optimizer;
        out.extend_from_slice(&o.step_count.to_le_bytes());
        for v in [o.config.learning_rate, o.config.beta1, o.config.beta2, o.config.epsilon] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(o.first_moment.len() as u32).to_le_bytes());
        for (m, v) in o.first_moment.iter().zip(&o.second_moment) {
            out.extend_from_slice(&(m.len() as u64).to_le_bytes());
            for x in m.iter().chain(v) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.frames.to_le_bytes());
        let manifest = self.manifest.to_text();
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version).into());
        }
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u16("tensor name")?;
            let name = std::str::from_utf8(r.take(name_len.into(), "tensor name")?)
                .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let tag = r.u8("dtype")?;
            let dtype = DType::from_tag(tag).ok_or_else(|| CheckpointError::Malformed(format!("dtype tag {tag}")))?;
            let rank = r.u8("rank")?;
            let dims =
                (0..rank).map(|_| r.u64("dims").map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| CheckpointError::Malformed(format!("dims {dims:?} overflow")))?;
            let n = numel.checked_mul(dtype.size_of()).ok_or(CheckpointError::Truncated("payload"))?;
            let payload = r.take(n, "payload")?.to_vec();
            tensors.push(StoredTensor { name, dtype, dims, payload });
        }
        let step_count = r.u64("optimizer step")?;
        let config = AdamConfig {
            learning_rate: r.f64("optimizer config")?,
            beta1: r.f64("optimizer config")?,
            beta2: r.f64("optimizer config")?,
            epsilon: r.f64("optimizer config")?,
        };
        let slots = r.u32("optimizer slots")?;
        let (mut first_moment, mut second_moment) = (Vec::new(), Vec::new());
        for _ in 0..slots {
            let n = r.len("optimizer moments", 8)?;
            first_moment.push(r.f32s(n, "optimizer moments")?);
            second_moment.push(r.f32s(n, "optimizer moments")?);
        }
        let frames = r.u64("frame counter")?;
        let mlen = r.u32("manifest")?;
        let text = std::str::from_utf8(r.take(mlen as usize, "manifest")?)
            .map_err(|_| CheckpointError::Malformed("manifest is not UTF-8".into()))?;
        let manifest = RunManifest::parse(text)?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)).into());
        }
        Ok(Checkpoint {
            tensors,
            optimizer: AdamState { config, step_count, first_moment, second_moment },
            frames,
            manifest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn tensor(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Snapshot of an agent: `policy.*` and `target.*` parameters,
    /// optimizer state and frame counter.
    pub fn from_agent<N: QNetwork<f32>>(agent: &Agent<N>, manifest: RunManifest) -> Self {
        let mut tensors = Vec::new();
        for (prefix, net) in [("policy.", agent.policy()), ("target.", agent.target())] {
            for (name, t) in net.parameters() {
                tensors.push(StoredTensor::from_tensor(&format!("{prefix}{name}"), &t));
            }
        }
        Checkpoint { tensors, optimizer: agent.optimizer().clone(), frames: agent.frames, manifest }
    }

    /// Copies stored `prefix.*` values into `net`'s parameters.
    pub fn load_into<N: QNetwork<f32>>(&self, net: &N, prefix: &str) -> Result<()> {
        for (name, t) in net.parameters() {
            let key = format!("{prefix}{name}");
            let stored =
                self.tensor(&key).ok_or_else(|| CheckpointError::Malformed(format!("missing tensor `{key}`")))?;
            if stored.dims != t.shape() {
                return Err(CheckpointError::Malformed(format!(
                    "tensor `{key}` has dims {:?}, network expects {:?}",
                    stored.dims,
                    t.shape()
                ))
                .into());
            }
            let values = stored.values::<f32>();
            t.update_data(|d| d.copy_from_slice(&values));
        }
        Ok(())
    }

    /// Number of Q-value outputs, read from the stored policy head.
    pub fn num_actions(&self) -> Result<usize> {
        let head = self
            .tensor("policy.head.weight")
            .ok_or_else(|| CheckpointError::Malformed("missing tensor `policy.head.weight`".into()))?;
        Ok(head.dims[0])
    }

    /// Rebuilds the policy network alone.
    pub fn policy_network(&self) -> Result<Backbone<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Backbone::build(&self.manifest.config, self.num_actions()?, &mut rng)?;
        self.load_into(&net, "policy.")?;
        Ok(net)
    }

    /// Rebuilds the full agent: both networks, optimizer and frame counter.
    pub fn restore_agent(&self) -> Result<Agent<Backbone<f32>>> {
        let cfg = &self.manifest.config;
        let mut agent = Agent::new(self.policy_network()?, cfg.train.clone(), cfg.seed)?;
        self.load_into(agent.target(), "target.")?;
        let params = agent.policy().parameters();
        let o = &self.optimizer;
        if o.first_moment.len() != params.len()
            || o.first_moment.iter().zip(&params).any(|(m, (_, p))| m.len() != p.numel())
        {
            return Err(CheckpointError::Malformed("optimizer state does not match the network".into()).into());
        }
        *agent.optimizer_mut() = o.clone();
        agent.set_frames(self.frames);
        Ok(agent)
    }
}
