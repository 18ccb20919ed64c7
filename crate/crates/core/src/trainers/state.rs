use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::queue::NegativeQueue;
use super::Framework;
use crate::binio::{read_f64_le, write_f64_le, KeyValues};
use crate::encoder::{Architecture, DualRep, EncoderParams, Feature};
use crate::error::{Error, Result};
use crate::losses::Hyperparams;

/// Everything a training loop mutates. Restoring a saved state and taking a
/// step gives the same parameters as taking the step without the round trip.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub framework: Framework,
    pub hyper: Hyperparams,
    pub query: EncoderParams,
    /// Momentum encoder (MoCo only).
    pub key: Option<EncoderParams>,
    /// Optimizer velocity, laid out like `query.values`.
    pub velocity: Vec<f64>,
    pub step: u64,
    pub epoch: u64,
    pub rng: ChaCha8Rng,
    pub clip_queue: Option<NegativeQueue<Feature>>,
    pub dual_queue: Option<NegativeQueue<DualRep>>,
}

fn random_unit<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Feature> {
    let v: Vec<f64> = (0..dim).map(|_| Distribution::<f64>::sample(&StandardNormal, rng)).collect();
    Feature::normalized(&v)
}

impl TrainState {
    /// Fresh state: parameters from `seed`, sampling rng on a separate stream
    /// of the same seed. MoCo additionally copies the query encoder into the
    /// key encoder and fills both queues with random unit vectors.
    pub fn new(framework: Framework, hyper: Hyperparams, arch: Architecture, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if arch.segments != hyper.segments {
            return Err(Error::config(format!(
                "encoder has {} segments but hyper.segments = {}",
                arch.segments, hyper.segments
            )));
        }
        let query = EncoderParams::init(arch, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let (key, clip_queue, dual_queue) = match framework {
            Framework::Simclr => (None, None, None),
            Framework::Moco => {
                let d = arch.proj_dim;
                let mut cq = NegativeQueue::new(hyper.queue_size)?;
                let mut dq = NegativeQueue::new(hyper.queue_size)?;
                let clips = (0..hyper.queue_size).map(|_| random_unit(d, &mut rng)).collect::<Result<Vec<_>>>()?;
                let duals = (0..hyper.queue_size)
                    .map(|_| DualRep::new((0..arch.segments).map(|_| random_unit(d, &mut rng)).collect::<Result<_>>()?))
                    .collect::<Result<Vec<_>>>()?;
                cq.enqueue(&clips)?;
                dq.enqueue(&duals)?;
                (Some(query.clone()), Some(cq), Some(dq))
            }
        };
        let velocity = vec![0.0; query.values.len()];
        Ok(Self { framework, hyper, query, key, velocity, step: 0, epoch: 0, rng, clip_queue, dual_queue })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.query.save(dir, "query")?;
        if let Some(k) = &self.key {
            k.save(dir, "key")?;
        }
        write_f64_le(&dir.join("velocity.bin"), &self.velocity)?;
        let h = &self.hyper;
        let mut kv = KeyValues::default();
        kv.push("format", "dualrep-state-v1");
        kv.push("framework", self.framework.name());
        kv.push("step", self.step);
        kv.push("epoch", self.epoch);
        kv.push("rng_seed", hex(&self.rng.get_seed()));
        kv.push("rng_stream", self.rng.get_stream());
        kv.push("rng_word_pos", self.rng.get_word_pos());
        kv.push("tau", h.tau);
        kv.push("tau_tc", h.tau_tc);
        kv.push("theta", h.theta);
        kv.push("lambda1", h.lambda1);
        kv.push("lambda2", h.lambda2);
        kv.push("segments", h.segments);
        kv.push("queue_size", h.queue_size);
        kv.push("momentum", h.momentum);
        if let (Some(cq), Some(dq)) = (&self.clip_queue, &self.dual_queue) {
            kv.push("clip_queue_len", cq.len());
            kv.push("clip_queue_inserted", cq.inserted());
            kv.push("dual_queue_len", dq.len());
            kv.push("dual_queue_inserted", dq.inserted());
            let flat: Vec<f64> = cq.iter().flat_map(|f| f.as_slice().iter().copied()).collect();
            write_f64_le(&dir.join("clip_queue.bin"), &flat)?;
            let flat: Vec<f64> =
                dq.iter().flat_map(|r| r.parts.iter().flat_map(|p| p.as_slice().iter().copied())).collect();
            write_f64_le(&dir.join("dual_queue.bin"), &flat)?;
        }
        let path = dir.join("state.manifest");
        fs::write(&path, kv.render("training state")).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("state.manifest");
        let kv = KeyValues::read(&path)?;
        let format: String = kv.get(&path, "format")?;
        if format != "dualrep-state-v1" {
            return Err(Error::format(&path, format!("unsupported format `{format}`")));
        }
        let framework = Framework::parse(&kv.get::<String>(&path, "framework")?)
            .ok_or_else(|| Error::format(&path, "unknown framework"))?;
        let hyper = Hyperparams {
            tau: kv.get(&path, "tau")?,
            tau_tc: kv.get(&path, "tau_tc")?,
            theta: kv.get(&path, "theta")?,
            lambda1: kv.get(&path, "lambda1")?,
            lambda2: kv.get(&path, "lambda2")?,
            segments: kv.get(&path, "segments")?,
            queue_size: kv.get(&path, "queue_size")?,
            momentum: kv.get(&path, "momentum")?,
        };
        let query = EncoderParams::load(dir, "query")?;
        let velocity = read_f64_le(&dir.join("velocity.bin"))?;
        if velocity.len() != query.values.len() {
            return Err(Error::format(dir.join("velocity.bin"), "velocity length does not match parameters"));
        }
        let seed = unhex(&kv.get::<String>(&path, "rng_seed")?).ok_or_else(|| Error::format(&path, "bad rng_seed"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(kv.get(&path, "rng_stream")?);
        rng.set_word_pos(kv.get(&path, "rng_word_pos")?);
        let (key, clip_queue, dual_queue) = match framework {
            Framework::Simclr => (None, None, None),
            Framework::Moco => {
                let key = EncoderParams::load(dir, "key")?;
                if key.layout != query.layout {
                    return Err(Error::format(dir, "key and query manifests differ"));
                }
                let d = query.arch.proj_dim;
                let s = query.arch.segments;
                let clips = read_records(&dir.join("clip_queue.bin"), kv.get(&path, "clip_queue_len")?, d)?
                    .into_iter()
                    .map(Feature::from_unit)
                    .collect::<Result<Vec<_>>>()?;
                let duals = read_records(&dir.join("dual_queue.bin"), kv.get(&path, "dual_queue_len")?, d * s)?
                    .into_iter()
                    .map(|flat| {
                        DualRep::new(flat.chunks(d).map(|c| Feature::from_unit(c.to_vec())).collect::<Result<_>>()?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let cq = NegativeQueue::restore(hyper.queue_size, clips, kv.get(&path, "clip_queue_inserted")?)?;
                let dq = NegativeQueue::restore(hyper.queue_size, duals, kv.get(&path, "dual_queue_inserted")?)?;
                (Some(key), Some(cq), Some(dq))
            }
        };
        Ok(Self {
            framework,
            hyper,
            query,
            key,
            velocity,
            step: kv.get(&path, "step")?,
            epoch: kv.get(&path, "epoch")?,
            rng,
            clip_queue,
            dual_queue,
        })
    }
}

fn read_records(path: &Path, count: usize, width: usize) -> Result<Vec<Vec<f64>>> {
    let flat = read_f64_le(path)?;
    if flat.len() != count * width {
        return Err(Error::format(path, format!("expected {count} records of {width} values")));
    }
    Ok(flat.chunks(width).map(<[f64]>::to_vec).collect())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
    }
    Some(out)
}
