//! Baseline write encodings.
//!
//! Each scheme maps the stored state of a bucket and a new logical value to
//! a new stored state, counting flips in the payload and in the scheme's
//! auxiliary bits (flags, masks, shift field). Auxiliary bits live next to
//! the bucket and their flips are always part of `total_flips`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bitvec::BitBuffer;
use crate::error::{Error, Result};

/// Stored form of a bucket: payload plus scheme metadata. `aux` is `None`
/// for schemes without metadata bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedState {
    pub payload: BitBuffer,
    pub aux: Option<BitBuffer>,
}

impl EncodedState {
    pub fn aux_width(&self) -> usize {
        self.aux.as_ref().map_or(0, BitBuffer::width)
    }

    /// Payload and aux bits as one buffer.
    pub fn joined(&self) -> BitBuffer {
        match &self.aux {
            Some(aux) => self.payload.concat(aux),
            None => self.payload.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodeResult {
    pub new_state: EncodedState,
    pub payload_flips: usize,
    pub aux_flips: usize,
}

impl EncodeResult {
    pub fn total_flips(&self) -> usize {
        self.payload_flips + self.aux_flips
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "scheme")]
pub enum Encoding {
    Conventional,
    Dcw,
    Fnw {
        word_bits: usize,
    },
    #[serde(rename = "minshift")]
    MinShift,
    Captopril {
        segments: usize,
    },
}

pub const CAPTOPRIL_SEGMENTS: usize = 16;

impl Encoding {
    pub fn aux_width(&self, width: usize) -> usize {
        match *self {
            Encoding::Conventional | Encoding::Dcw => 0,
            Encoding::Fnw { word_bits } => width / word_bits,
            Encoding::MinShift => shift_field_bits(width),
            Encoding::Captopril { segments } => segments,
        }
    }

    /// Checks that the scheme's partition fits a payload of `width` bits.
    pub fn validate(&self, width: usize) -> Result<()> {
        let (chunks, what) = match *self {
            Encoding::Fnw { word_bits } => (word_bits, "word_bits"),
            Encoding::Captopril { segments } => {
                if segments == 0 || !width.is_multiple_of(segments) {
                    return Err(Error::Config(format!(
                        "{segments} segments do not divide width {width}"
                    )));
                }
                return Ok(());
            }
            _ => return Ok(()),
        };
        if chunks == 0 || !width.is_multiple_of(chunks) {
            return Err(Error::Config(format!("{what} {chunks} does not divide width {width}")));
        }
        Ok(())
    }

    /// Stored state for raw `payload` with all metadata bits clear.
    pub fn initial_state(&self, payload: BitBuffer) -> EncodedState {
        let aux = match self.aux_width(payload.width()) {
            0 => None,
            n => Some(BitBuffer::zeros(n)),
        };
        EncodedState { payload, aux }
    }

    pub fn encode(&self, old: &EncodedState, value: &BitBuffer) -> Result<EncodeResult> {
        match *self {
            Encoding::Conventional => conventional(old, value),
            Encoding::Dcw => dcw(old, value),
            Encoding::Fnw { word_bits } => fnw(old, value, word_bits),
            Encoding::MinShift => minshift(old, value),
            Encoding::Captopril { segments } => captopril(old, value, segments),
        }
    }

    pub fn decode(&self, state: &EncodedState) -> Result<BitBuffer> {
        match *self {
            Encoding::Conventional | Encoding::Dcw => Ok(state.payload.clone()),
            Encoding::Fnw { word_bits } => decode_inverted(state, word_bits),
            Encoding::Captopril { segments } => decode_inverted(state, state.payload.width() / segments),
            Encoding::MinShift => {
                let r = state.aux.as_ref().map_or(0, |f| f.to_u64() as usize);
                if r >= state.payload.width() {
                    return Err(Error::Format(format!("shift field {r} out of range")));
                }
                state.payload.rotate(r)
            }
        }
    }

    /// Whether writes under this scheme are read-before-write.
    pub fn is_differential(&self) -> bool {
        !matches!(self, Encoding::Conventional)
    }
}

/// Width of the MinShift shift field: `ceil(log2(width))`.
pub fn shift_field_bits(width: usize) -> usize {
    if width <= 1 {
        0
    } else {
        (usize::BITS - (width - 1).leading_zeros()) as usize
    }
}

fn check(old: &EncodedState, value: &BitBuffer) -> Result<()> {
    if old.payload.width() != value.width() {
        return Err(Error::WidthMismatch {
            left: old.payload.width(),
            right: value.width(),
        });
    }
    Ok(())
}

/// Every bit rewritten: flips counted as the full width.
pub fn conventional(old: &EncodedState, value: &BitBuffer) -> Result<EncodeResult> {
    check(old, value)?;
    Ok(EncodeResult {
        new_state: EncodedState {
            payload: value.clone(),
            aux: None,
        },
        payload_flips: value.width(),
        aux_flips: 0,
    })
}

/// Data-comparison write: only differing bits are programmed.
pub fn dcw(old: &EncodedState, value: &BitBuffer) -> Result<EncodeResult> {
    check(old, value)?;
    Ok(EncodeResult {
        payload_flips: old.payload.hamming(value)?,
        new_state: EncodedState {
            payload: value.clone(),
            aux: None,
        },
        aux_flips: 0,
    })
}

/// Flip-N-Write: per word, store the data or its complement, with one flag
/// bit per word.
pub fn fnw(old: &EncodedState, value: &BitBuffer, word_bits: usize) -> Result<EncodeResult> {
    check(old, value)?;
    Encoding::Fnw { word_bits }.validate(value.width())?;
    invert_chunks(old, value, word_bits)
}

/// Captopril best case: the block is split into `segments` equal segments,
/// each stored plain or inverted under one mask bit.
pub fn captopril(old: &EncodedState, value: &BitBuffer, segments: usize) -> Result<EncodeResult> {
    check(old, value)?;
    Encoding::Captopril { segments }.validate(value.width())?;
    invert_chunks(old, value, value.width() / segments)
}

/// Shared core of FNW and Captopril. Ties go to the plain form.
fn invert_chunks(old: &EncodedState, value: &BitBuffer, chunk_bits: usize) -> Result<EncodeResult> {
    let width = value.width();
    let chunks = width / chunk_bits;
    let old_flags = match &old.aux {
        Some(a) if a.width() == chunks => a.clone(),
        Some(a) => {
            return Err(Error::WidthMismatch {
                left: chunks,
                right: a.width(),
            })
        }
        None => BitBuffer::zeros(chunks),
    };
    let diff = old.payload.xor(value)?;
    let inverted = value.complement();
    let mut payload = value.clone();
    let mut flags = BitBuffer::zeros(chunks);
    let mut payload_flips = 0;
    let mut aux_flips = 0;
    for c in 0..chunks {
        let start = c * chunk_bits;
        let h = diff.count_ones_in(start, chunk_bits);
        let was_inverted = old_flags.get(c);
        let plain = h + was_inverted as usize;
        let flipped = (chunk_bits - h) + (!was_inverted) as usize;
        if flipped < plain {
            payload.splice(start, &inverted.slice(start, chunk_bits));
            flags.set(c, true);
            payload_flips += chunk_bits - h;
            aux_flips += (!was_inverted) as usize;
        } else {
            payload_flips += h;
            aux_flips += was_inverted as usize;
        }
    }
    Ok(EncodeResult {
        new_state: EncodedState {
            payload,
            aux: Some(flags),
        },
        payload_flips,
        aux_flips,
    })
}

fn decode_inverted(state: &EncodedState, chunk_bits: usize) -> Result<BitBuffer> {
    let Some(flags) = &state.aux else {
        return Ok(state.payload.clone());
    };
    let mut out = state.payload.clone();
    for c in 0..flags.width() {
        if flags.get(c) {
            let start = c * chunk_bits;
            out.splice(start, &state.payload.slice(start, chunk_bits).complement());
        }
    }
    Ok(out)
}

/// MinShift best case: every rotation is tried.
///
/// The stored payload is `value` rotated right by `r` and the shift field
/// holds `r`, so decoding rotates the payload left by `r`. The chosen `r`
/// minimises payload plus shift-field flips; ties go to the smallest `r`.
pub fn minshift(old: &EncodedState, value: &BitBuffer) -> Result<EncodeResult> {
    check(old, value)?;
    let width = value.width();
    let field_bits = shift_field_bits(width);
    let old_field = match &old.aux {
        Some(f) if f.width() == field_bits => f.to_u64(),
        Some(f) => {
            return Err(Error::WidthMismatch {
                left: field_bits,
                right: f.width(),
            })
        }
        None => 0,
    };
    let mut best: Option<(usize, usize, usize, BitBuffer)> = None;
    for r in 0..width {
        let field_cost = (old_field ^ r as u64).count_ones() as usize;
        if let Some((cost, ..)) = &best {
            if field_cost >= *cost {
                continue;
            }
        }
        let stored = value.rotate((width - r) % width)?;
        let payload_cost = old.payload.hamming(&stored)?;
        let total = payload_cost + field_cost;
        if best.as_ref().is_none_or(|(cost, ..)| total < *cost) {
            best = Some((total, payload_cost, r, stored));
        }
    }
    let (total, payload_flips, r, payload) = best.expect("width is positive");
    let aux = (field_bits > 0).then(|| BitBuffer::from_u64(r as u64, field_bits));
    Ok(EncodeResult {
        new_state: EncodedState { payload, aux },
        payload_flips,
        aux_flips: total - payload_flips,
    })
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encoding::Conventional => f.write_str("conventional"),
            Encoding::Dcw => f.write_str("dcw"),
            Encoding::Fnw { .. } => f.write_str("fnw"),
            Encoding::MinShift => f.write_str("minshift"),
            Encoding::Captopril { segments } => write!(f, "cap{segments}"),
        }
    }
}

/// A write scheme as selected on the command line: one of the baseline
/// encodings applied in place, or predict-and-write placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Conventional,
    Dcw,
    Fnw,
    MinShift,
    Cap16,
    Pnw,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Conventional,
        Scheme::Dcw,
        Scheme::Fnw,
        Scheme::MinShift,
        Scheme::Cap16,
        Scheme::Pnw,
    ];

    /// The in-place encoding for baseline schemes; `None` for PNW.
    pub fn encoding(&self, word_bits: usize) -> Option<Encoding> {
        match self {
            Scheme::Conventional => Some(Encoding::Conventional),
            Scheme::Dcw => Some(Encoding::Dcw),
            Scheme::Fnw => Some(Encoding::Fnw { word_bits }),
            Scheme::MinShift => Some(Encoding::MinShift),
            Scheme::Cap16 => Some(Encoding::Captopril {
                segments: CAPTOPRIL_SEGMENTS,
            }),
            Scheme::Pnw => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Conventional => "conventional",
            Scheme::Dcw => "dcw",
            Scheme::Fnw => "fnw",
            Scheme::MinShift => "minshift",
            Scheme::Cap16 => "cap16",
            Scheme::Pnw => "pnw",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}
