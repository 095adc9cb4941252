//! LT fountain coding across row blocks, with a peeling decoder.
//!
//! An information packet is the XOR of the row blocks named by its
//! [`FountainSpec`]; coefficients are implicitly 1 on the listed blocks. The
//! decoder works on the computed products `A_i x`, so its symbols are byte
//! vectors of length `rows_per_block`.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::gf256::FieldMatrix;

/// Robust-soliton spike constant used unless configured otherwise.
pub const DEFAULT_C: f64 = 0.03;
/// Robust-soliton failure parameter used unless configured otherwise.
pub const DEFAULT_DELTA: f64 = 0.5;

/// The set of source blocks combined into one information packet.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FountainSpec {
    indices: Vec<u32>,
}

impl FountainSpec {
    /// Validates that `indices` is non-empty, strictly increasing and `< b`.
    pub fn new(indices: Vec<u32>, b: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(domain("fountain spec must name at least one block"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("fountain spec indices must be strictly increasing"));
        }
        if indices.last().is_some_and(|&i| i as usize >= b) {
            return Err(domain(format!("fountain spec index out of range for b = {b}")));
        }
        Ok(FountainSpec { indices })
    }

    /// Sorts and dedups before validating.
    pub fn from_unsorted(mut indices: Vec<u32>, b: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, b)
    }

    pub fn single(index: u32) -> Self {
        FountainSpec {
            indices: vec![index],
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn degree(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, block: u32) -> bool {
        self.indices.binary_search(&block).is_ok()
    }

    /// u16 BE count, then the indices as u32 BE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + 4 * self.indices.len());
        self.write_bytes(&mut out);
        out
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.indices.len() as u16).to_be_bytes());
        for i in &self.indices {
            out.extend_from_slice(&i.to_be_bytes());
        }
    }

    /// Parse a spec from the front of `buf`; returns it with the bytes used.
    /// Block-range validation is left to the receiver, which knows `b`.
    pub fn read_bytes(buf: &[u8]) -> Result<(FountainSpec, usize)> {
        if buf.len() < 2 {
            return Err(domain("fountain spec truncated"));
        }
        let count = u16::from_be_bytes([buf[0], buf[1]]) as usize;
        let need = 2 + 4 * count;
        if buf.len() < need {
            return Err(domain("fountain spec indices truncated"));
        }
        let indices: Vec<u32> = buf[2..need]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
            .collect();
        let spec = Self::new(indices, u32::MAX as usize)?;
        Ok((spec, need))
    }
}

/// Robust soliton degree distribution over degrees `1..=b`.
#[derive(Clone, Debug)]
pub struct DegreeDistribution {
    b: usize,
    c: f64,
    delta: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl DegreeDistribution {
    pub fn robust_soliton(b: usize, c: f64, delta: f64) -> Result<Self> {
        if b == 0 {
            return Err(domain("degree distribution needs b >= 1"));
        }
        if !(c > 0.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!("invalid robust soliton parameters c={c}, delta={delta}")));
        }
        let k = b as f64;
        let s = c * (k / delta).ln() * k.sqrt();
        let spike = (k / s).floor() as usize;
        let mut weights = vec![0.0; b + 1];
        for d in 1..=b {
            // Ideal soliton.
            weights[d] = if d == 1 { 1.0 / k } else { 1.0 / (d as f64 * (d as f64 - 1.0)) };
            // Robust correction; the spike term is clamped for tiny b where
            // s < delta would make it negative.
            if d < spike {
                weights[d] += s / (k * d as f64);
            } else if d == spike {
                weights[d] += (s * (s / delta).ln() / k).max(0.0);
            }
        }
        let total: f64 = weights.iter().sum();
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(b + 1);
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        // Guard the top of the table against rounding so every draw lands.
        *cdf.last_mut().unwrap() = 1.0;
        Ok(DegreeDistribution { b, c, delta, pmf, cdf })
    }

    pub fn with_defaults(b: usize) -> Result<Self> {
        Self::robust_soliton(b, DEFAULT_C, DEFAULT_DELTA)
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn params(&self) -> (f64, f64) {
        (self.c, self.delta)
    }

    /// Probability of degree `d`; zero outside `1..=b`.
    pub fn pmf(&self, d: usize) -> f64 {
        self.pmf.get(d).copied().unwrap_or(0.0)
    }

    pub fn mean_degree(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(d, p)| d as f64 * p).sum()
    }

    pub fn sample_degree<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let d = self.cdf.partition_point(|&c| c <= u);
        d.clamp(1, self.b)
    }
}

/// Draw a degree, then that many distinct blocks uniformly without replacement.
pub fn sample_spec<R: Rng + ?Sized>(dist: &DegreeDistribution, rng: &mut R) -> FountainSpec {
    let d = dist.sample_degree(rng);
    let mut indices: Vec<u32> = rand::seq::index::sample(rng, dist.b, d)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    indices.sort_unstable();
    FountainSpec { indices }
}

/// XOR of the row blocks selected by `spec`.
pub fn encode(blocks: &[FieldMatrix], spec: &FountainSpec) -> Result<FieldMatrix> {
    let first = blocks.first().ok_or_else(|| domain("no blocks to encode"))?;
    let shape = first.shape();
    let mut out = FieldMatrix::zeros(shape.0, shape.1);
    for &i in spec.indices() {
        let block = blocks
            .get(i as usize)
            .ok_or_else(|| domain(format!("block {i} out of range ({} blocks)", blocks.len())))?;
        if block.shape() != shape {
            return Err(domain(format!(
                "block {i} has shape {:?}, expected {shape:?}",
                block.shape()
            )));
        }
        out.add_assign(block)?;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct Pending {
    indices: Vec<u32>,
    payload: Vec<u8>,
}

/// Peeling decoder state.
#[derive(Clone, Debug)]
pub struct PeelingDecoder {
    b: usize,
    symbol_len: usize,
    recovered: Vec<Option<Vec<u8>>>,
    recovered_count: usize,
    pending: Vec<Option<Pending>>,
    by_block: Vec<Vec<usize>>,
    by_residual: HashMap<Vec<u32>, usize>,
    received: usize,
}

impl PeelingDecoder {
    pub fn new(b: usize, symbol_len: usize) -> Self {
        PeelingDecoder {
            b,
            symbol_len,
            recovered: vec![None; b],
            recovered_count: 0,
            pending: Vec::new(),
            by_block: vec![Vec::new(); b],
            by_residual: HashMap::new(),
            received: 0,
        }
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn symbol_len(&self) -> usize {
        self.symbol_len
    }

    /// Packets handed to [`ingest`](Self::ingest) so far, duplicates included.
    pub fn received(&self) -> usize {
        self.received
    }

    pub fn recovered_count(&self) -> usize {
        self.recovered_count
    }

    pub fn is_recovered(&self, block: usize) -> bool {
        self.recovered.get(block).is_some_and(Option::is_some)
    }

    pub fn is_complete(&self) -> bool {
        self.recovered_count == self.b
    }

    /// Packets received beyond `b`; meaningful once complete.
    pub fn overhead(&self) -> usize {
        self.received.saturating_sub(self.b)
    }

    /// Residual specs still waiting on more blocks.
    pub fn pending_residuals(&self) -> impl Iterator<Item = &[u32]> {
        self.pending.iter().flatten().map(|p| p.indices.as_slice())
    }

    /// Reduce a packet against recovered blocks and peel. Returns how many
    /// source blocks became known as a result.
    pub fn ingest(&mut self, spec: &FountainSpec, payload: &[u8]) -> Result<usize> {
        if payload.len() != self.symbol_len {
            return Err(domain(format!(
                "payload length {} != symbol length {}",
                payload.len(),
                self.symbol_len
            )));
        }
        if spec.indices().last().is_some_and(|&i| i as usize >= self.b) {
            return Err(domain(format!("spec index out of range for b = {}", self.b)));
        }
        self.received += 1;

        let mut payload = payload.to_vec();
        let mut residual = Vec::with_capacity(spec.degree());
        for &i in spec.indices() {
            match &self.recovered[i as usize] {
                Some(block) => xor_into(&mut payload, block),
                None => residual.push(i),
            }
        }

        match residual.len() {
            0 => {
                if payload.iter().any(|&x| x != 0) {
                    return Err(Error::Integrity(format!(
                        "packet {:?} contradicts already-recovered blocks",
                        spec.indices()
                    )));
                }
                Ok(0)
            }
            1 => self.peel_from(residual[0], payload),
            _ => {
                if let Some(&slot) = self.by_residual.get(&residual) {
                    let existing = self.pending[slot].as_ref().expect("indexed pending is live");
                    if existing.payload != payload {
                        return Err(Error::Integrity(format!(
                            "conflicting payloads for combination {residual:?}"
                        )));
                    }
                    return Ok(0);
                }
                let slot = self.pending.len();
                for &i in &residual {
                    self.by_block[i as usize].push(slot);
                }
                self.by_residual.insert(residual.clone(), slot);
                self.pending.push(Some(Pending {
                    indices: residual,
                    payload,
                }));
                Ok(0)
            }
        }
    }

    fn peel_from(&mut self, block: u32, payload: Vec<u8>) -> Result<usize> {
        let mut queue = vec![(block, payload)];
        let mut newly = 0;
        while let Some((block, value)) = queue.pop() {
            if let Some(known) = &self.recovered[block as usize] {
                if *known != value {
                    return Err(Error::Integrity(format!(
                        "block {block} decoded to two different values"
                    )));
                }
                continue;
            }
            let touching = std::mem::take(&mut self.by_block[block as usize]);
            for slot in touching {
                let Some(mut p) = self.pending[slot].take() else {
                    continue;
                };
                self.by_residual.remove(&p.indices);
                let pos = p
                    .indices
                    .binary_search(&block)
                    .expect("pending entry indexed under a block it contains");
                p.indices.remove(pos);
                xor_into(&mut p.payload, &value);
                match p.indices.len() {
                    1 => queue.push((p.indices[0], p.payload)),
                    _ => {
                        if let Some(&other) = self.by_residual.get(&p.indices) {
                            let same = self.pending[other]
                                .as_ref()
                                .is_some_and(|o| o.payload == p.payload);
                            if !same {
                                return Err(Error::Integrity(format!(
                                    "conflicting payloads for combination {:?}",
                                    p.indices
                                )));
                            }
                            // Redundant copy; drop it.
                        } else {
                            self.by_residual.insert(p.indices.clone(), slot);
                            self.pending[slot] = Some(p);
                        }
                    }
                }
            }
            self.recovered[block as usize] = Some(value);
            self.recovered_count += 1;
            newly += 1;
        }
        Ok(newly)
    }

    /// Recovered symbols in block order.
    pub fn decoded(&self) -> Result<Vec<&[u8]>> {
        if !self.is_complete() {
            return Err(Error::State(format!(
                "decoder incomplete: {}/{} blocks recovered",
                self.recovered_count, self.b
            )));
        }
        Ok(self
            .recovered
            .iter()
            .map(|r| r.as_deref().expect("complete decoder"))
            .collect())
    }
}

fn xor_into(dst: &mut [u8], src: &[u8]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s);
}

/// Packets consumed by one encode/decode trial until completion, drawing
/// specs from `dist`. Symbol payloads are irrelevant to when peeling
/// completes, so the trial runs on one-byte symbols derived from each packet spec.
pub fn packets_to_decode<R: Rng + ?Sized>(dist: &DegreeDistribution, rng: &mut R) -> usize {
    let b = dist.b();
    let mut dec = PeelingDecoder::new(b, 1);
    while !dec.is_complete() {
        let spec = sample_spec(dist, rng);
        let parity = spec
            .indices()
            .iter()
            .fold(0u8, |acc, &i| acc ^ (i as u8).wrapping_mul(31).wrapping_add(7));
        dec.ingest(&spec, &[parity])
            .expect("synthetic symbols are consistent");
    }
    dec.received()
}
