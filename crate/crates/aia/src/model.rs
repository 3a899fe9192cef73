//! Versioned little-endian binary model files.
//!
//! Layout: the magic `AIAM`, a `u32` format version, a `u8` kind tag, then
//! the body. Reals are stored as their IEEE-754 bits, so loading returns
//! bit-identical weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use aia_core::predictor::PredictorConfig;
use aia_core::{LossConfig, ModelBundle, Policy, TaskLoss, TaskPredictor, TrainConfig};

use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 4] = b"AIAM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum Kind {
    Predictor = 1,
    Policy = 2,
    Bundle = 3,
}

struct Out<W>(W);

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.0.write_all(b)
    }
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.u64(v.to_bits())
    }
    fn reals(&mut self, v: &[f64]) -> std::io::Result<()> {
        self.u64(v.len() as u64)?;
        v.iter().try_for_each(|&x| self.f64(x))
    }
}

struct In<R>(R);

fn truncated(e: std::io::Error) -> HarnessError {
    HarnessError::Model(format!("truncated or unreadable: {e}"))
}

impl<R: Read> In<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| HarnessError::Model("size overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(HarnessError::Model(format!("bad flag byte {b}"))),
        }
    }
    fn reals(&mut self, limit: usize) -> Result<Vec<f64>> {
        let len = self.usize()?;
        if len > limit {
            return Err(HarnessError::Model(format!(
                "{len} reals where at most {limit} fit"
            )));
        }
        (0..len).map(|_| self.f64()).collect()
    }
}

fn header<W: Write>(out: &mut Out<W>, kind: Kind) -> std::io::Result<()> {
    out.bytes(MAGIC)?;
    out.u32(FORMAT_VERSION)?;
    out.u8(kind as u8)
}

fn expect_header<R: Read>(inp: &mut In<R>, kind: Kind) -> Result<()> {
    if &inp.array::<4>()? != MAGIC {
        return Err(HarnessError::Model("not a model file".into()));
    }
    let version = inp.u32()?;
    if version != FORMAT_VERSION {
        return Err(HarnessError::Model(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let tag = inp.u8()?;
    if tag != kind as u8 {
        return Err(HarnessError::Model(format!(
            "kind tag {tag}, expected {}",
            kind as u8
        )));
    }
    Ok(())
}

fn put_predictor<W: Write>(out: &mut Out<W>, p: &TaskPredictor) -> std::io::Result<()> {
    out.u32(p.hash_bits())?;
    out.u64(p.classes() as u64)?;
    out.u64(p.parts() as u64)?;
    out.f64(p.learn_rate())?;
    out.reals(p.weights())
}

fn get_predictor<R: Read>(inp: &mut In<R>) -> Result<TaskPredictor> {
    let hash_bits = inp.u32()?;
    let classes = inp.usize()?;
    let parts = inp.usize()?;
    let learn_rate = inp.f64()?;
    if hash_bits > aia_core::predictor::MAX_HASH_BITS || classes > 1 << 16 || parts > 64 {
        return Err(HarnessError::Model("implausible predictor shape".into()));
    }
    let limit = ((1usize << hash_bits) + parts + 1) * classes;
    let weights = inp.reals(limit)?;
    Ok(TaskPredictor::from_weights(
        classes,
        parts,
        PredictorConfig {
            hash_bits,
            learn_rate,
        },
        weights,
    )?)
}

fn put_policy<W: Write>(out: &mut Out<W>, p: &Policy) -> std::io::Result<()> {
    out.u64(p.classes() as u64)?;
    out.u64(p.parts() as u64)?;
    out.u8(p.quadratic() as u8)?;
    out.f64(p.learn_rate())?;
    out.u64(p.updates())?;
    out.reals(p.weights())?;
    out.reals(p.accumulators())
}

fn get_policy<R: Read>(inp: &mut In<R>) -> Result<Policy> {
    let classes = inp.usize()?;
    let parts = inp.usize()?;
    let quadratic = inp.bool()?;
    let learn_rate = inp.f64()?;
    let updates = inp.u64()?;
    if classes > 1 << 10 || parts > 64 {
        return Err(HarnessError::Model("implausible policy shape".into()));
    }
    let limit = (parts + 1) * (aia_core::selector::feature_dim(classes, quadratic) + 1);
    let weights = inp.reals(limit)?;
    let accum = inp.reals(limit)?;
    Ok(Policy::from_state(
        classes, parts, quadratic, learn_rate, weights, accum, updates,
    )?)
}

pub fn write_predictor<W: Write>(w: W, p: &TaskPredictor) -> std::io::Result<()> {
    let mut out = Out(w);
    header(&mut out, Kind::Predictor)?;
    put_predictor(&mut out, p)?;
    out.0.flush()
}

pub fn read_predictor<R: Read>(r: R) -> Result<TaskPredictor> {
    let mut inp = In(r);
    expect_header(&mut inp, Kind::Predictor)?;
    let p = get_predictor(&mut inp)?;
    expect_end(&mut inp)?;
    Ok(p)
}

pub fn write_policy<W: Write>(w: W, p: &Policy) -> std::io::Result<()> {
    let mut out = Out(w);
    header(&mut out, Kind::Policy)?;
    put_policy(&mut out, p)?;
    out.0.flush()
}

pub fn read_policy<R: Read>(r: R) -> Result<Policy> {
    let mut inp = In(r);
    expect_header(&mut inp, Kind::Policy)?;
    let p = get_policy(&mut inp)?;
    expect_end(&mut inp)?;
    Ok(p)
}

pub fn write_bundle<W: Write>(w: W, b: &ModelBundle) -> std::io::Result<()> {
    let mut out = Out(w);
    header(&mut out, Kind::Bundle)?;
    put_predictor(&mut out, &b.predictor)?;
    put_policy(&mut out, &b.policy)?;
    out.reals(&b.prior)?;
    out.f64(b.loss.lambda())?;
    out.u8(match b.loss.task_loss() {
        TaskLoss::ZeroOne => 0,
        TaskLoss::LogLoss => 1,
    })?;
    let c = &b.config;
    out.u64(c.passes as u64)?;
    out.u64(c.fine_tune_start_pass as u64)?;
    out.f64(c.policy_learn_rate)?;
    match c.finetune_learn_rate {
        None => out.u8(0)?,
        Some(r) => {
            out.u8(1)?;
            out.f64(r)?;
        }
    }
    out.u8(c.quadratic as u8)?;
    out.u64(c.seed)?;
    out.0.flush()
}

pub fn read_bundle<R: Read>(r: R) -> Result<ModelBundle> {
    let mut inp = In(r);
    expect_header(&mut inp, Kind::Bundle)?;
    let predictor = get_predictor(&mut inp)?;
    let policy = get_policy(&mut inp)?;
    let prior = inp.reals(predictor.classes())?;
    let lambda = inp.f64()?;
    let task_loss = match inp.u8()? {
        0 => TaskLoss::ZeroOne,
        1 => TaskLoss::LogLoss,
        t => return Err(HarnessError::Model(format!("unknown task loss tag {t}"))),
    };
    let config = TrainConfig {
        passes: inp.usize()?,
        fine_tune_start_pass: inp.usize()?,
        policy_learn_rate: inp.f64()?,
        finetune_learn_rate: if inp.bool()? { Some(inp.f64()?) } else { None },
        quadratic: inp.bool()?,
        seed: inp.u64()?,
    };
    expect_end(&mut inp)?;
    Ok(ModelBundle::new(
        predictor,
        policy,
        prior,
        LossConfig::new(lambda, task_loss)?,
        config,
    )?)
}

fn expect_end<R: Read>(inp: &mut In<R>) -> Result<()> {
    let mut extra = [0u8; 1];
    match inp.0.read(&mut extra) {
        Ok(0) => Ok(()),
        Ok(_) => Err(HarnessError::Model("trailing bytes".into())),
        Err(e) => Err(truncated(e)),
    }
}

pub fn save_bundle(path: &Path, b: &ModelBundle) -> Result<()> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_bundle(BufWriter::new(f), b).map_err(|e| HarnessError::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_bundle(BufReader::new(f))
}

pub fn save_predictor(path: &Path, p: &TaskPredictor) -> Result<()> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_predictor(BufWriter::new(f), p).map_err(|e| HarnessError::io(path, e))
}

pub fn load_predictor(path: &Path) -> Result<TaskPredictor> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_predictor(BufReader::new(f))
}
