use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bitvec::BitBuffer;
use crate::error::{Error, Result};

/// Mixes a tag into a seed so that independent streams do not overlap.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Source of bucket values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Source {
    Uniform,
    Normal {
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        unique: bool,
    },
    PrototypeMixture {
        prototypes: usize,
        p: f64,
        /// Seed of the prototype set; the workload seed when absent, so
        /// phases naming the same mixture share prototypes.
        #[serde(default)]
        prototype_seed: Option<u64>,
    },
    File {
        path: String,
        record_bytes: usize,
    },
    /// Each value is drawn from one part chosen with probability
    /// proportional to its weight.
    Blend {
        parts: Vec<BlendPart>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendPart {
    pub weight: f64,
    pub source: Source,
}

fn default_mu() -> f64 {
    2f64.powi(31)
}

fn default_sigma() -> f64 {
    2f64.powi(28)
}

impl Source {
    pub fn validate(&self) -> Result<()> {
        match self {
            Source::Uniform => Ok(()),
            Source::Normal { sigma, .. } if sigma.is_nan() || *sigma < 0.0 => {
                Err(Error::Config(format!("normal sigma {sigma} is negative")))
            }
            Source::Normal { .. } => Ok(()),
            Source::PrototypeMixture { prototypes, p, .. } => {
                if *prototypes == 0 {
                    return Err(Error::Config("mixture needs at least one prototype".into()));
                }
                if !(0.0..0.5).contains(p) {
                    return Err(Error::Config(format!("mixture noise {p} not in [0, 0.5)")));
                }
                Ok(())
            }
            Source::File { record_bytes, .. } if *record_bytes == 0 => {
                Err(Error::Config("record_bytes must be positive".into()))
            }
            Source::File { .. } => Ok(()),
            Source::Blend { parts } => {
                if parts.is_empty() || parts.iter().any(|p| p.weight.is_nan() || p.weight < 0.0) {
                    return Err(Error::Config("blend needs parts with non-negative weights".into()));
                }
                if parts.iter().map(|p| p.weight).sum::<f64>() <= 0.0 {
                    return Err(Error::Config("blend weights sum to zero".into()));
                }
                parts.iter().try_for_each(|p| p.source.validate())
            }
        }
    }

    /// Stateful generator for this source. `seed` drives sampling,
    /// `workload_seed` the default prototype set.
    pub fn generator(&self, width: usize, seed: u64, workload_seed: u64) -> Result<ValueGen> {
        self.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = match self {
            Source::Uniform => GenKind::Uniform,
            Source::Normal { mu, sigma, unique } => {
                if width > 64 {
                    return Err(Error::Config(format!(
                        "normal source supports widths up to 64 bits, not {width}"
                    )));
                }
                GenKind::Normal {
                    dist: Normal::new(*mu, *sigma).map_err(|e| Error::Config(e.to_string()))?,
                    seen: unique.then(HashSet::new),
                }
            }
            Source::PrototypeMixture {
                prototypes,
                p,
                prototype_seed,
            } => GenKind::Mixture {
                prototypes: prototypes_for(*prototypes, width, prototype_seed.unwrap_or(workload_seed)),
                p: *p,
            },
            Source::File { path, record_bytes } => {
                let records = load_records(Path::new(path), *record_bytes)?;
                if records.is_empty() {
                    return Err(Error::Format(format!("{path} holds no records")));
                }
                if records[0].width() != width {
                    return Err(Error::WidthMismatch {
                        left: width,
                        right: records[0].width(),
                    });
                }
                GenKind::Records {
                    records: Arc::new(records),
                    pos: 0,
                }
            }
            Source::Blend { parts } => {
                let mut gens = Vec::with_capacity(parts.len());
                for (i, part) in parts.iter().enumerate() {
                    gens.push(
                        part.source
                            .generator(width, derive_seed(seed, i as u64), workload_seed)?,
                    );
                }
                GenKind::Blend {
                    weights: parts.iter().map(|p| p.weight).collect(),
                    gens,
                }
            }
        };
        Ok(ValueGen { width, rng, kind })
    }
}

/// Infinite deterministic stream of values of one width.
#[derive(Debug, Clone)]
pub struct ValueGen {
    width: usize,
    rng: ChaCha8Rng,
    kind: GenKind,
}

#[derive(Debug, Clone)]
enum GenKind {
    Uniform,
    Normal {
        dist: Normal<f64>,
        seen: Option<HashSet<u64>>,
    },
    Mixture {
        prototypes: Vec<BitBuffer>,
        p: f64,
    },
    Records {
        records: Arc<Vec<BitBuffer>>,
        pos: usize,
    },
    Blend {
        weights: Vec<f64>,
        gens: Vec<ValueGen>,
    },
}

impl ValueGen {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn next_value(&mut self) -> Result<BitBuffer> {
        let width = self.width;
        let rng = &mut self.rng;
        match &mut self.kind {
            GenKind::Uniform => Ok(random_bits(rng, width)),
            GenKind::Normal { dist, seen } => {
                let max = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
                let mut draw = || {
                    let x = dist.sample(rng).round();
                    if x <= 0.0 {
                        0
                    } else if x >= max as f64 {
                        max
                    } else {
                        x as u64
                    }
                };
                let Some(seen) = seen else {
                    return Ok(BitBuffer::from_u64(draw(), width));
                };
                if width < 64 && seen.len() as u64 > max {
                    return Err(Error::Config(format!(
                        "all {} distinct {width}-bit values already drawn",
                        max as u128 + 1
                    )));
                }
                for _ in 0..100_000 {
                    let v = draw();
                    if seen.insert(v) {
                        return Ok(BitBuffer::from_u64(v, width));
                    }
                }
                Err(Error::Config(
                    "normal source cannot produce further unique values".into(),
                ))
            }
            GenKind::Mixture { prototypes, p } => {
                let mut v = prototypes[rng.random_range(0..prototypes.len())].clone();
                if *p > 0.0 {
                    for i in 0..width {
                        if rng.random_bool(*p) {
                            v.set(i, !v.get(i));
                        }
                    }
                }
                Ok(v)
            }
            GenKind::Records { records, pos } => {
                let v = records[*pos].clone();
                *pos = (*pos + 1) % records.len();
                Ok(v)
            }
            GenKind::Blend { weights, gens } => {
                let total: f64 = weights.iter().sum();
                let mut x = rng.random::<f64>() * total;
                let mut pick = gens.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if x < *w {
                        pick = i;
                        break;
                    }
                    x -= w;
                }
                gens[pick].next_value()
            }
        }
    }

    pub fn take(&mut self, n: usize) -> Result<Vec<BitBuffer>> {
        (0..n).map(|_| self.next_value()).collect()
    }
}

fn random_bits<R: RngCore>(rng: &mut R, width: usize) -> BitBuffer {
    let mut bytes = vec![0u8; width.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    BitBuffer::from_bytes(&bytes).slice(0, width)
}

fn prototypes_for(c: usize, width: usize, seed: u64) -> Vec<BitBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7072_6f74));
    (0..c).map(|_| random_bits(&mut rng, width)).collect()
}

/// `n` i.i.d. uniform bit patterns.
pub fn gen_uniform(n: usize, width: usize, seed: u64) -> Vec<BitBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_bits(&mut rng, width)).collect()
}

/// `n` integers from N(mu, sigma), rounded, clamped to the width's range
/// and encoded big-endian. With `unique` no value repeats.
pub fn gen_normal(n: usize, mu: f64, sigma: f64, width: usize, unique: bool, seed: u64) -> Result<Vec<BitBuffer>> {
    if unique && width < 64 && n as u128 > 1u128 << width {
        return Err(Error::Config(format!(
            "{n} unique values requested from a {width}-bit range"
        )));
    }
    Source::Normal { mu, sigma, unique }
        .generator(width, seed, seed)?
        .take(n)
}

/// The `c` prototypes of the mixture with this seed.
pub fn mixture_prototypes(c: usize, width: usize, seed: u64) -> Vec<BitBuffer> {
    prototypes_for(c, width, seed)
}

/// `n` samples, each a uniformly chosen prototype with every bit inverted
/// independently with probability `p`.
pub fn gen_prototype_mixture(n: usize, c: usize, p: f64, width: usize, seed: u64) -> Result<Vec<BitBuffer>> {
    Source::PrototypeMixture {
        prototypes: c,
        p,
        prototype_seed: Some(seed),
    }
    .generator(width, derive_seed(seed, 1), seed)?
    .take(n)
}

/// Headerless file of fixed-size records, in file order.
pub fn load_records(path: &Path, record_bytes: usize) -> Result<Vec<BitBuffer>> {
    if record_bytes == 0 {
        return Err(Error::Config("record_bytes must be positive".into()));
    }
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if data.len() % record_bytes != 0 {
        return Err(Error::Format(format!(
            "{}: size {} is not a multiple of {record_bytes}",
            path.display(),
            data.len()
        )));
    }
    Ok(data.chunks_exact(record_bytes).map(BitBuffer::from_bytes).collect())
}
