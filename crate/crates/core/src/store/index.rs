use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bitvec::BitBuffer;
use crate::error::{Error, Result};
use crate::nvm::{NvmDevice, WriteReport};

/// Opaque key bytes.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key(pub Vec<u8>);

impl Key {
    pub fn from_u64(k: u64) -> Self {
        Key(k.to_be_bytes().to_vec())
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if !s.len().is_multiple_of(2) || s.is_empty() {
            return Err(Error::Format(format!("bad hex key {s:?}")));
        }
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| Error::Format(format!("bad hex key {s:?}"))))
            .collect::<Result<Vec<u8>>>()
            .map(Key)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({})", self.to_hex())
    }
}

impl From<&[u8]> for Key {
    fn from(b: &[u8]) -> Self {
        Key(b.to_vec())
    }
}

/// Where the key -> address map lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "placement")]
#[derive(Default)]
pub enum IndexPlacement {
    /// DRAM-resident; costs no device flips.
    #[default]
    Volatile,
    /// Fixed-width `key | address | valid` records written through the
    /// device with open addressing. Keys are zero-padded to `key_bytes`.
    Device {
        key_bytes: usize,
        /// Slots as a multiple of the initial bucket count.
        slots_per_bucket: usize,
    },
}

const ADDR_BITS: usize = 64;

#[derive(Debug, Clone)]
struct Entry {
    addr: usize,
    slot: Option<usize>,
}

/// Key to bucket address map. The device-resident placement keeps a DRAM
/// shadow for lookups and mirrors every mutation into the device's index
/// zone so that its flips are accounted.
#[derive(Debug, Clone)]
pub struct HashIndex {
    placement: IndexPlacement,
    map: HashMap<Key, Entry>,
    slot_live: Vec<bool>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl HashIndex {
    pub fn new(placement: IndexPlacement, device: &mut NvmDevice) -> Result<Self> {
        let mut slot_live = Vec::new();
        if let IndexPlacement::Device {
            key_bytes,
            slots_per_bucket,
        } = placement
        {
            if key_bytes == 0 || slots_per_bucket == 0 {
                return Err(Error::Config("device index needs key_bytes and slots".into()));
            }
            let slots = device.n_buckets() * slots_per_bucket;
            device.attach_index_zone(slots, key_bytes * 8 + ADDR_BITS + 1);
            slot_live = vec![false; slots];
        }
        Ok(HashIndex {
            placement,
            map: HashMap::new(),
            slot_live,
        })
    }

    pub fn placement(&self) -> IndexPlacement {
        self.placement
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, key: &Key) -> Option<usize> {
        self.map.get(key).map(|e| e.addr)
    }

    pub fn contains(&self, key: &Key) -> bool {
        self.map.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, usize)> {
        self.map.iter().map(|(k, e)| (k, e.addr))
    }

    /// Checks that `key` can be inserted, without mutating anything.
    pub fn check_insert(&self, key: &Key) -> Result<()> {
        if self.map.contains_key(key) {
            return Err(Error::DuplicateKey(key.to_hex()));
        }
        if let IndexPlacement::Device { key_bytes, .. } = self.placement {
            if key.0.len() > key_bytes {
                return Err(Error::Config(format!(
                    "key of {} bytes exceeds device index key width {key_bytes}",
                    key.0.len()
                )));
            }
            if self.map.len() >= self.slot_live.len() {
                return Err(Error::IndexFull {
                    slots: self.slot_live.len(),
                });
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, key: Key, addr: usize, device: &mut NvmDevice) -> Result<WriteReport> {
        self.check_insert(&key)?;
        let (slot, report) = match self.placement {
            IndexPlacement::Volatile => (None, WriteReport::default()),
            IndexPlacement::Device { key_bytes, .. } => {
                let slots = self.slot_live.len();
                let start = (fnv1a(&key.0) % slots as u64) as usize;
                let slot = (0..slots)
                    .map(|i| (start + i) % slots)
                    .find(|&s| !self.slot_live[s])
                    .ok_or(Error::IndexFull { slots })?;
                let record = encode_record(&key, addr, key_bytes);
                let report = device.write_index_record(slot, &record)?;
                self.slot_live[slot] = true;
                (Some(slot), report)
            }
        };
        self.map.insert(key, Entry { addr, slot });
        Ok(report)
    }

    /// Removes `key`; a device-resident record has its valid bit cleared.
    pub fn remove(&mut self, key: &Key, device: &mut NvmDevice) -> Result<(usize, WriteReport)> {
        let entry = self.map.remove(key).ok_or_else(|| Error::MissingKey(key.to_hex()))?;
        let report = match entry.slot {
            None => WriteReport::default(),
            Some(slot) => {
                let mut record = device.index_record(slot)?.clone();
                let last = record.width() - 1;
                record.set(last, false);
                self.slot_live[slot] = false;
                device.write_index_record(slot, &record)?
            }
        };
        Ok((entry.addr, report))
    }
}

fn encode_record(key: &Key, addr: usize, key_bytes: usize) -> BitBuffer {
    let mut padded = vec![0u8; key_bytes];
    padded[key_bytes - key.0.len()..].copy_from_slice(&key.0);
    BitBuffer::from_bytes(&padded)
        .concat(&BitBuffer::from_u64(addr as u64, ADDR_BITS))
        .concat(&BitBuffer::ones(1))
}
