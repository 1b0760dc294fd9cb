//! Little-endian binary containers for SE parameters, allocations, models and
//! datasets. Each starts with a four-byte magic and a format version.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::learned::{Activation, Dense, LearnedModel, Mlp, ModelKind, RobustScaler};
use crate::precoding::{PowerAllocation, Precoder, SeParameters};
use crate::wmmse::Objective;

pub const VERSION: u32 = 1;
const SE_MAGIC: &[u8; 4] = b"CFSE";
const ALLOC_MAGIC: &[u8; 4] = b"CFPA";
const MODEL_MAGIC: &[u8; 4] = b"CFNN";
const DATASET_MAGIC: &[u8; 4] = b"CFDS";

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.f64(*x));
    }
    /// Row-major.
    fn matrix(&mut self, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.f64(m[(r, c)]);
            }
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Dec { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let data = self.f64s(rows * cols)?;
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!("expected {} file", String::from_utf8_lossy(magic))));
        }
        let v = self.u32()?;
        if v != VERSION as usize {
            return Err(Error::Format(format!("unsupported format version {v}")));
        }
        Ok(())
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn objective_tag(o: Objective) -> u8 {
    match o {
        Objective::SumSe => 0,
        Objective::Pf => 1,
    }
}

fn objective_from(tag: u8) -> Result<Objective> {
    match tag {
        0 => Ok(Objective::SumSe),
        1 => Ok(Objective::Pf),
        _ => Err(Error::Format(format!("unknown objective tag {tag}"))),
    }
}

fn precoder_tag(p: Precoder) -> u8 {
    match p {
        Precoder::Mr => 0,
        Precoder::Rzf => 1,
    }
}

fn precoder_from(tag: u8) -> Result<Precoder> {
    match tag {
        0 => Ok(Precoder::Mr),
        1 => Ok(Precoder::Rzf),
        _ => Err(Error::Format(format!("unknown precoder tag {tag}"))),
    }
}

fn put_params(e: &mut Enc, p: &SeParameters) {
    e.u32(p.num_ues());
    e.u32(p.num_aps());
    e.f64(p.prelog);
    e.f64(p.sigma2);
    e.u64(p.n_real as u64);
    e.matrix(&p.a);
    e.f64s(&p.b);
}

fn get_params(d: &mut Dec) -> Result<SeParameters> {
    let (k, l) = (d.u32()?, d.u32()?);
    let prelog = d.f64()?;
    let sigma2 = d.f64()?;
    let n_real = d.u64()? as usize;
    let a = d.matrix(k, l)?;
    let b = d.f64s(k * k * l * l)?;
    Ok(SeParameters { a, b, sigma2, prelog, n_real, imag_residue: 0.0 })
}

pub fn encode_params(p: &SeParameters) -> Vec<u8> {
    let mut e = Enc::default();
    e.0.extend_from_slice(SE_MAGIC);
    e.u32(VERSION as usize);
    put_params(&mut e, p);
    e.0
}

pub fn decode_params(bytes: &[u8]) -> Result<SeParameters> {
    let mut d = Dec::new(bytes);
    d.header(SE_MAGIC)?;
    let p = get_params(&mut d)?;
    d.finish()?;
    Ok(p)
}

/// Digest of the serialized parameters; equal digests mean identical `a` and `B`.
pub fn params_digest(p: &SeParameters) -> u64 {
    fnv1a(&encode_params(p))
}

pub fn encode_allocation(a: &PowerAllocation) -> Vec<u8> {
    let mut e = Enc::default();
    e.0.extend_from_slice(ALLOC_MAGIC);
    e.u32(VERSION as usize);
    e.u32(a.num_ues());
    e.u32(a.num_aps());
    e.f64(a.budget());
    e.matrix(a.mu());
    e.0
}

pub fn decode_allocation(bytes: &[u8]) -> Result<PowerAllocation> {
    let mut d = Dec::new(bytes);
    d.header(ALLOC_MAGIC)?;
    let (k, l) = (d.u32()?, d.u32()?);
    let budget = d.f64()?;
    let mu = d.matrix(k, l)?;
    d.finish()?;
    PowerAllocation::new(mu, budget)
}

pub fn encode_model(m: &LearnedModel) -> Vec<u8> {
    let mut e = Enc::default();
    e.0.extend_from_slice(MODEL_MAGIC);
    e.u32(VERSION as usize);
    e.u8(m.kind.tag());
    e.u32(m.num_ues);
    e.u32(m.aps.len());
    m.aps.iter().for_each(|a| e.u32(*a));
    e.u32(m.mlp.layers.len());
    for layer in &m.mlp.layers {
        e.u32(layer.inputs());
        e.u32(layer.outputs());
        e.u8(layer.activation.tag());
    }
    e.u32(m.scaler.dim());
    e.f64s(&m.scaler.median);
    e.f64s(&m.scaler.iqr);
    // weights column-major, then bias, layer by layer
    e.f64s(&m.mlp.flat_params());
    e.0
}

pub fn decode_model(bytes: &[u8]) -> Result<LearnedModel> {
    let mut d = Dec::new(bytes);
    d.header(MODEL_MAGIC)?;
    let kind = ModelKind::from_tag(d.u8()?)?;
    let num_ues = d.u32()?;
    let n_aps = d.u32()?;
    let aps = (0..n_aps).map(|_| d.u32()).collect::<Result<Vec<_>>>()?;
    let n_layers = d.u32()?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (inputs, outputs) = (d.u32()?, d.u32()?);
        let act = Activation::from_tag(d.u8()?)?;
        if let Some(prev) = layers.last().map(Dense::outputs) {
            if prev != inputs {
                return Err(Error::Format("layer sizes do not chain".into()));
            }
        }
        layers.push(Dense { weights: DMatrix::zeros(outputs, inputs), bias: DVector::zeros(outputs), activation: act });
    }
    if layers.is_empty() {
        return Err(Error::Format("model without layers".into()));
    }
    let dim = d.u32()?;
    let scaler = RobustScaler { median: d.f64s(dim)?, iqr: d.f64s(dim)? };
    let mut mlp = Mlp { layers };
    if scaler.dim() != mlp.input_dim() {
        return Err(Error::Format("scaler and input layer disagree".into()));
    }
    let params = d.f64s(mlp.param_count())?;
    mlp.set_flat_params(&params)?;
    d.finish()?;
    Ok(LearnedModel { kind, num_ues, aps, scaler, mlp })
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Solver outcome kept per dataset sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_utility: f64,
    pub final_utility: f64,
    /// Largest per-step utility decrease in the trace (zero for a monotone trace).
    pub max_decrease: f64,
    pub backtracks: usize,
    pub subproblem_exhausted: usize,
    pub flipped: usize,
    pub clamp_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub config: ExperimentConfig,
    pub objective: Objective,
    pub precoder: Precoder,
    /// Whether samples carry the full `a`/`B` statistics or only their digest.
    pub full_params: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub index: u64,
    pub seed: u64,
    pub beta: DMatrix<f64>,
    pub pilots: Vec<usize>,
    pub params_digest: u64,
    pub params: Option<SeParameters>,
    pub mu_star: DMatrix<f64>,
    pub summary: SolveSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<DatasetSample>,
}

fn encode_dataset_header(h: &DatasetHeader, count: u64) -> Vec<u8> {
    let mut e = Enc::default();
    e.0.extend_from_slice(DATASET_MAGIC);
    e.u32(VERSION as usize);
    let toml = h.config.to_toml_string();
    e.u32(toml.len());
    e.0.extend_from_slice(toml.as_bytes());
    e.u8(objective_tag(h.objective));
    e.u8(precoder_tag(h.precoder));
    e.u8(h.full_params as u8);
    e.u64(count);
    e.0
}

fn encode_sample(s: &DatasetSample, full: bool) -> Result<Vec<u8>> {
    let (k, l) = s.beta.shape();
    if s.mu_star.shape() != (k, l) || s.pilots.len() != k {
        return Err(Error::Dimension(format!("sample {} has inconsistent shapes", s.index)));
    }
    let mut e = Enc::default();
    e.u64(s.index);
    e.u64(s.seed);
    e.u32(k);
    e.u32(l);
    e.matrix(&s.beta);
    s.pilots.iter().for_each(|p| e.u32(*p));
    e.u64(s.params_digest);
    if full {
        let p = s.params.as_ref().ok_or_else(|| Error::Format(format!("sample {} lacks parameters", s.index)))?;
        put_params(&mut e, p);
    }
    e.matrix(&s.mu_star);
    let m = &s.summary;
    e.u32(m.iterations);
    e.u8(m.converged as u8);
    e.f64(m.initial_utility);
    e.f64(m.final_utility);
    e.f64(m.max_decrease);
    e.u32(m.backtracks);
    e.u32(m.subproblem_exhausted);
    e.u32(m.flipped);
    e.u32(m.clamp_events);
    Ok(e.0)
}

fn decode_sample(d: &mut Dec, full: bool) -> Result<DatasetSample> {
    let index = d.u64()?;
    let seed = d.u64()?;
    let (k, l) = (d.u32()?, d.u32()?);
    let beta = d.matrix(k, l)?;
    let pilots = (0..k).map(|_| d.u32()).collect::<Result<Vec<_>>>()?;
    let params_digest = d.u64()?;
    let params = if full { Some(get_params(d)?) } else { None };
    let mu_star = d.matrix(k, l)?;
    let summary = SolveSummary {
        iterations: d.u32()?,
        converged: d.u8()? != 0,
        initial_utility: d.f64()?,
        final_utility: d.f64()?,
        max_decrease: d.f64()?,
        backtracks: d.u32()?,
        subproblem_exhausted: d.u32()?,
        flipped: d.u32()?,
        clamp_events: d.u32()?,
    };
    Ok(DatasetSample { index, seed, beta, pilots, params_digest, params, mu_star, summary })
}

fn decode_dataset_header(d: &mut Dec) -> Result<(DatasetHeader, u64)> {
    d.header(DATASET_MAGIC)?;
    let len = d.u32()?;
    let text = std::str::from_utf8(d.take(len)?).map_err(|_| Error::Format("config is not UTF-8".into()))?;
    let config = ExperimentConfig::from_toml_str(text)?;
    let objective = objective_from(d.u8()?)?;
    let precoder = precoder_from(d.u8()?)?;
    let full_params = d.u8()? != 0;
    let count = d.u64()?;
    Ok((DatasetHeader { config, objective, precoder, full_params }, count))
}

impl Dataset {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = encode_dataset_header(&self.header, self.samples.len() as u64);
        for s in &self.samples {
            out.extend(encode_sample(s, self.header.full_params)?);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut d = Dec::new(bytes);
        let (header, count) = decode_dataset_header(&mut d)?;
        let samples = (0..count).map(|_| decode_sample(&mut d, header.full_params)).collect::<Result<Vec<_>>>()?;
        d.finish()?;
        Ok(Dataset { header, samples })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Reads only the header and the sample count.
    pub fn read_header(path: impl AsRef<Path>) -> Result<(DatasetHeader, u64)> {
        let mut f = BufReader::new(File::open(path)?);
        let mut fixed = [0u8; 12];
        f.read_exact(&mut fixed)?;
        let len = u32::from_le_bytes(fixed[8..12].try_into().unwrap()) as usize;
        let mut bytes = fixed.to_vec();
        bytes.resize(12 + len + 11, 0);
        f.read_exact(&mut bytes[12..])?;
        decode_dataset_header(&mut Dec::new(&bytes))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.encode()?)
    }
}

/// Appends samples to a dataset file and keeps the header count current, so
/// an interrupted run can be resumed from the last complete sample.
pub struct DatasetWriter {
    file: BufWriter<File>,
    count_offset: u64,
    count: u64,
    full_params: bool,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, header: &DatasetHeader) -> Result<Self> {
        let bytes = encode_dataset_header(header, 0);
        let mut file = BufWriter::new(File::create(path)?);
        file.write_all(&bytes)?;
        file.flush()?;
        Ok(DatasetWriter { file, count_offset: bytes.len() as u64 - 8, count: 0, full_params: header.full_params })
    }

    /// Opens an existing file for appending. Returns the writer and the
    /// samples already present. Fails when the stored header differs.
    pub fn resume(path: impl AsRef<Path>, header: &DatasetHeader) -> Result<(Self, Vec<DatasetSample>)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        let mut d = Dec::new(&bytes);
        let (stored, count) = decode_dataset_header(&mut d)?;
        if &stored != header {
            return Err(Error::Format("existing dataset was generated with different settings".into()));
        }
        let count_offset = d.pos as u64 - 8;
        let mut samples = Vec::with_capacity(count as usize);
        let mut end = d.pos;
        for _ in 0..count {
            samples.push(decode_sample(&mut d, header.full_params)?);
            end = d.pos;
        }
        let mut f = OpenOptions::new().read(true).write(true).open(path)?;
        // drop any partially written record past the last counted sample
        f.set_len(end as u64)?;
        f.seek(SeekFrom::End(0))?;
        Ok((
            DatasetWriter { file: BufWriter::new(f), count_offset, count, full_params: header.full_params },
            samples,
        ))
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn append(&mut self, s: &DatasetSample) -> Result<()> {
        if s.index != self.count {
            return Err(Error::Format(format!("expected sample {}, got {}", self.count, s.index)));
        }
        self.file.write_all(&encode_sample(s, self.full_params)?)?;
        self.count += 1;
        Ok(())
    }

    /// Flushes pending records and rewrites the sample count.
    pub fn commit(&mut self) -> Result<()> {
        self.file.flush()?;
        let f = self.file.get_mut();
        f.seek(SeekFrom::Start(self.count_offset))?;
        f.write_all(&self.count.to_le_bytes())?;
        f.seek(SeekFrom::End(0))?;
        f.sync_data()?;
        Ok(())
    }
}
