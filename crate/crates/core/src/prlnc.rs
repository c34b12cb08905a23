//! Prioritized random linear network coding.
//!
//! Source data is cut into generations. A class-`l` packet is a random
//! GF(2^8) combination of the first `beta(l)` source packets of its
//! generation, i.e. of every packet in layers `0..=l`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::galois::{axpy, mul_row, scale};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrlncError {
    #[error("invalid video profile: {0}")]
    InvalidProfile(String),
    #[error("class {class} out of range for {layers} layers")]
    ClassOutOfRange { class: usize, layers: usize },
    #[error("recode needs at least one input packet")]
    EmptyInput,
    #[error("packet belongs to generation {found}, expected {expected}")]
    GenerationMismatch { expected: u32, found: u32 },
    #[error("input of class {input} cannot be recoded into class {target}")]
    ClassTooHigh { input: usize, target: usize },
    #[error("malformed packet header: {0}")]
    MalformedHeader(&'static str),
}

/// Scalars describing the layered video stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoProfile {
    /// Source packets per generation contributed by each layer.
    pub alpha: Vec<usize>,
    /// Encoding rate of each layer, packets per second.
    pub rates: Vec<f64>,
    /// Cumulative quality (dB) when layers `0..=l` decode.
    pub quality: Vec<f64>,
    /// Seconds per generation.
    pub gen_duration: f64,
    /// Data payload bytes.
    pub payload_size: usize,
    /// Interest message bytes.
    pub interest_size: usize,
}

impl VideoProfile {
    /// Three-layer stream: 38/15/20 packets per one-second GOP.
    pub fn cif_three_layer() -> Self {
        Self {
            alpha: vec![38, 15, 20],
            rates: vec![38.0, 15.0, 20.0],
            quality: vec![36.48, 37.82, 39.09],
            gen_duration: 1.0,
            payload_size: 1600,
            interest_size: 200,
        }
    }

    pub fn layers(&self) -> usize {
        self.alpha.len()
    }

    /// Source packets spanned by class `l`.
    pub fn beta(&self, l: usize) -> usize {
        self.alpha[..=l].iter().sum()
    }

    pub fn betas(&self) -> Vec<usize> {
        (0..self.layers()).map(|l| self.beta(l)).collect()
    }

    /// Packets per generation (all layers).
    pub fn generation_size(&self) -> usize {
        self.alpha.iter().sum()
    }

    /// Cumulative source rate of layers `0..=l`, packets per second.
    pub fn cumulative_rate(&self, l: usize) -> f64 {
        self.rates[..=l].iter().sum()
    }

    /// Bits on the wire per Interest/Data exchange.
    pub fn bits_per_exchange(&self) -> f64 {
        ((self.interest_size + self.payload_size) * 8) as f64
    }

    /// Quality for a decoded layer; 0 dB when nothing decodes.
    pub fn quality_of(&self, layer: Option<usize>) -> f64 {
        layer.map_or(0.0, |l| self.quality[l])
    }

    pub fn validate(&self) -> Result<(), PrlncError> {
        let l = self.layers();
        let bad = |m: &str| Err(PrlncError::InvalidProfile(m.to_string()));
        if l == 0 {
            return bad("no layers");
        }
        if l > u8::MAX as usize {
            return bad("too many layers");
        }
        if self.rates.len() != l || self.quality.len() != l {
            return bad("alpha, rates and quality must have equal length");
        }
        if self.alpha.contains(&0) {
            return bad("every layer needs at least one source packet");
        }
        if self.generation_size() > u16::MAX as usize {
            return bad("generation too large for the packet header");
        }
        if self.rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return bad("rates must be positive");
        }
        if self.quality.windows(2).any(|w| w[1] <= w[0]) || self.quality[0] <= 0.0 {
            return bad("quality must be positive and strictly increasing");
        }
        if !(self.gen_duration > 0.0) {
            return bad("generation duration must be positive");
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<(), PrlncError> {
        if class >= self.layers() {
            Err(PrlncError::ClassOutOfRange { class, layers: self.layers() })
        } else {
            Ok(())
        }
    }
}

/// One generation worth of source packets.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub index: u32,
    pub sources: Vec<Vec<u8>>,
    /// Simulation time after which packets of this generation are useless.
    pub deadline: f64,
}

impl Generation {
    /// Deterministic filler payloads: every byte depends on (generation, packet, offset).
    pub fn synthetic(profile: &VideoProfile, index: u32, payload_len: usize, playback_delay: f64) -> Self {
        let sources = (0..profile.generation_size())
            .map(|i| {
                let mut state = ((index as u64) << 32) ^ (i as u64) ^ 0x5EED_0000_0000_0000;
                (0..payload_len)
                    .map(|_| {
                        state = splitmix64(state);
                        state as u8
                    })
                    .collect()
            })
            .collect();
        Self {
            index,
            sources,
            deadline: (index as f64 + 1.0) * profile.gen_duration + playback_delay,
        }
    }

    /// Source packets of layer `l`.
    pub fn layer<'a>(&'a self, profile: &VideoProfile, l: usize) -> &'a [Vec<u8>] {
        let start = if l == 0 { 0 } else { profile.beta(l - 1) };
        &self.sources[start..profile.beta(l)]
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A network-coded packet of one class and generation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodedPacket {
    pub class: u8,
    pub generation: u32,
    /// Exactly `beta(class)` entries.
    pub coefficients: Vec<u8>,
    pub payload: Vec<u8>,
}

const HEADER_LEN: usize = 1 + 4 + 2;

impl CodedPacket {
    /// Header (class u8, generation u32 LE, coefficient count u16 LE),
    /// then the coefficients, then the payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.coefficients.len() + self.payload.len());
        out.push(self.class);
        out.extend_from_slice(&self.generation.to_le_bytes());
        out.extend_from_slice(&(self.coefficients.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.coefficients);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PrlncError> {
        if bytes.len() < HEADER_LEN {
            return Err(PrlncError::MalformedHeader("truncated header"));
        }
        let class = bytes[0];
        let generation = u32::from_le_bytes(bytes[1..5].try_into().unwrap());
        let n = u16::from_le_bytes(bytes[5..7].try_into().unwrap()) as usize;
        if bytes.len() < HEADER_LEN + n {
            return Err(PrlncError::MalformedHeader("truncated coefficients"));
        }
        Ok(Self {
            class,
            generation,
            coefficients: bytes[HEADER_LEN..HEADER_LEN + n].to_vec(),
            payload: bytes[HEADER_LEN + n..].to_vec(),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0)
    }
}

/// Fresh class-`class` packet from the generation's source packets.
pub fn encode<R: Rng + ?Sized>(
    profile: &VideoProfile,
    gen: &Generation,
    class: usize,
    rng: &mut R,
) -> Result<CodedPacket, PrlncError> {
    profile.check_class(class)?;
    let width = profile.beta(class);
    let mut coefficients = vec![0u8; width];
    // All-zero draws carry nothing; redraw them.
    while coefficients.iter().all(|&c| c == 0) {
        rng.fill(&mut coefficients[..]);
    }
    let len = gen.sources.first().map_or(0, Vec::len);
    let mut payload = vec![0u8; len];
    for (c, src) in coefficients.iter().zip(&gen.sources) {
        axpy(&mut payload, *c, src);
    }
    Ok(CodedPacket { class: class as u8, generation: gen.index, coefficients, payload })
}

/// Random combination of `packets` re-labelled as class `class`.
///
/// Every input gets a nonzero coefficient, so the output always involves
/// each input and is never the zero packet when inputs are independent.
pub fn recode<'a, R, I>(
    profile: &VideoProfile,
    packets: I,
    class: usize,
    generation: u32,
    rng: &mut R,
) -> Result<CodedPacket, PrlncError>
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = &'a CodedPacket>,
{
    profile.check_class(class)?;
    let width = profile.beta(class);
    let mut out: Option<CodedPacket> = None;
    for p in packets {
        if p.generation != generation {
            return Err(PrlncError::GenerationMismatch { expected: generation, found: p.generation });
        }
        if p.class as usize > class || p.coefficients.len() > width {
            return Err(PrlncError::ClassTooHigh { input: p.class as usize, target: class });
        }
        let c: u8 = rng.gen_range(1..=255);
        let acc = out.get_or_insert_with(|| CodedPacket {
            class: class as u8,
            generation,
            coefficients: vec![0; width],
            payload: vec![0; p.payload.len()],
        });
        axpy(&mut acc.coefficients, c, &p.coefficients);
        if acc.payload.len() < p.payload.len() {
            acc.payload.resize(p.payload.len(), 0);
        }
        axpy(&mut acc.payload, c, &p.payload);
    }
    out.ok_or(PrlncError::EmptyInput)
}

/// Incremental reduced row-echelon state for one generation.
///
/// Each stored row is pivoted on its *last* nonzero coefficient and every
/// pivot column is cleared in all other rows. Layer `l` is decodable exactly
/// when `beta(l)` rows pivot inside the first `beta(l)` columns; those rows
/// are then unit vectors and their payloads are the source packets.
#[derive(Debug, Clone)]
pub struct DecoderState {
    generation: u32,
    betas: Vec<usize>,
    width: usize,
    /// `None` until the first packet fixes it; `Some(0)` in rank-only mode.
    payload_len: Option<usize>,
    track_payload: bool,
    /// Row storage: coefficients (`width`) followed by payload.
    rows: Vec<Vec<u8>>,
    /// pivot column -> row index
    pivot_row: Vec<Option<u32>>,
    /// Number of rows pivoted in columns below each beta.
    prefix_counts: Vec<usize>,
}

impl DecoderState {
    pub fn new(profile: &VideoProfile, generation: u32) -> Self {
        let betas = profile.betas();
        let width = *betas.last().unwrap_or(&0);
        Self {
            generation,
            prefix_counts: vec![0; betas.len()],
            betas,
            width,
            payload_len: None,
            track_payload: true,
            rows: Vec::new(),
            pivot_row: vec![None; width],
        }
    }

    /// Tracks rank only; payloads are ignored.
    pub fn rank_only(profile: &VideoProfile, generation: u32) -> Self {
        let mut s = Self::new(profile, generation);
        s.track_payload = false;
        s.payload_len = Some(0);
        s
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Adds `p`; returns whether it raised the rank.
    pub fn absorb(&mut self, p: &CodedPacket) -> Result<bool, PrlncError> {
        if p.generation != self.generation {
            return Err(PrlncError::GenerationMismatch { expected: self.generation, found: p.generation });
        }
        if p.coefficients.len() > self.width {
            return Err(PrlncError::ClassTooHigh { input: p.class as usize, target: self.betas.len() - 1 });
        }
        let plen = if self.track_payload { *self.payload_len.get_or_insert(p.payload.len()) } else { 0 };
        let mut v = vec![0u8; self.width + plen];
        v[..p.coefficients.len()].copy_from_slice(&p.coefficients);
        if plen > 0 {
            let n = plen.min(p.payload.len());
            v[self.width..self.width + n].copy_from_slice(&p.payload[..n]);
        }
        Ok(self.absorb_row(v, p.coefficients.len()))
    }

    fn absorb_row(&mut self, mut v: Vec<u8>, support: usize) -> bool {
        // Reduce from the top column down; the highest surviving nonzero
        // column that has no pivot becomes the new pivot.
        let mut new_pivot = None;
        for c in (0..support).rev() {
            if v[c] == 0 {
                continue;
            }
            match self.pivot_row[c] {
                Some(r) => {
                    let f = v[c];
                    axpy(&mut v, f, &self.rows[r as usize]);
                }
                None => {
                    if new_pivot.is_none() {
                        new_pivot = Some(c);
                    }
                }
            }
        }
        let Some(pc) = new_pivot else {
            return false;
        };
        let inv = crate::galois::Gf256(v[pc]).inv().unwrap().0;
        scale(&mut v, inv);
        // Clear the new pivot column from rows pivoted above it.
        for row in self.rows.iter_mut() {
            let f = row[pc];
            if f != 0 {
                axpy(row, f, &v);
            }
        }
        self.pivot_row[pc] = Some(self.rows.len() as u32);
        self.rows.push(v);
        for (l, &b) in self.betas.iter().enumerate() {
            if pc < b {
                self.prefix_counts[l] += 1;
            }
        }
        true
    }

    /// Would `p` raise the rank? Does not modify the state.
    pub fn is_innovative(&self, p: &CodedPacket) -> bool {
        let mut v = vec![0u8; self.width];
        let n = p.coefficients.len().min(self.width);
        v[..n].copy_from_slice(&p.coefficients[..n]);
        for c in (0..n).rev() {
            if v[c] == 0 {
                continue;
            }
            match self.pivot_row[c] {
                Some(r) => {
                    let f = v[c];
                    let row = mul_row(f);
                    for (d, s) in v[..=c].iter_mut().zip(&self.rows[r as usize][..=c]) {
                        *d ^= row[*s as usize];
                    }
                }
                None => return true,
            }
        }
        false
    }

    /// Rank of the row space restricted to the first `beta(l)` columns.
    pub fn prefix_rank(&self, l: usize) -> usize {
        self.prefix_counts[l]
    }

    pub fn decodable_layer(&self) -> Option<usize> {
        (0..self.betas.len()).rev().find(|&l| self.prefix_counts[l] == self.betas[l])
    }

    /// Source packets of layers `0..=decodable_layer`, if any decode.
    pub fn decoded_sources(&self) -> Option<Vec<Vec<u8>>> {
        let l = self.decodable_layer()?;
        let plen = self.payload_len.unwrap_or(0);
        Some(
            (0..self.betas[l])
                .map(|c| {
                    let r = self.pivot_row[c].expect("prefix fully pivoted") as usize;
                    self.rows[r][self.width..self.width + plen].to_vec()
                })
                .collect(),
        )
    }
}

pub fn decodable_layer(d: &DecoderState) -> Option<usize> {
    d.decodable_layer()
}
