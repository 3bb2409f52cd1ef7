use std::collections::{HashMap, VecDeque};

use crate::bitvec::BitBuffer;
use crate::encoders::{EncodedState, Encoding};
use crate::error::{Error, Result};
use crate::nvm::{NvmDevice, WriteMode};

use super::{Key, KvEngine, OpKind, OpRecord, OpReport};

/// Content-oblivious store: a put takes the next free address in FIFO order
/// and encodes the value over whatever the bucket holds. Updates are in
/// place. Scheme metadata is kept beside each bucket and its flips are
/// reported as auxiliary.
#[derive(Debug)]
pub struct InPlaceStore {
    device: NvmDevice,
    encoding: Encoding,
    aux: Vec<Option<BitBuffer>>,
    index: HashMap<Key, usize>,
    free: VecDeque<usize>,
    op_log: Option<Vec<OpRecord>>,
}

impl InPlaceStore {
    pub fn new(device: NvmDevice, encoding: Encoding) -> Result<Self> {
        let width = device.geometry().bucket_bits;
        encoding.validate(width)?;
        let n = device.n_buckets();
        Ok(InPlaceStore {
            aux: vec![encoding.initial_state(BitBuffer::zeros(width)).aux; n],
            free: (0..n).collect(),
            index: HashMap::new(),
            device,
            encoding,
            op_log: None,
        })
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn enable_op_log(&mut self) {
        self.op_log.get_or_insert_with(Vec::new);
    }

    pub fn take_op_log(&mut self) -> Vec<OpRecord> {
        self.op_log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn into_device(self) -> NvmDevice {
        self.device
    }

    fn log(&mut self, kind: OpKind, key: &Key, report: OpReport) {
        if let Some(log) = &mut self.op_log {
            log.push(OpRecord {
                kind,
                key: key.clone(),
                report,
            });
        }
    }

    fn state(&self, addr: usize) -> Result<EncodedState> {
        Ok(EncodedState {
            payload: self.device.content(addr)?.clone(),
            aux: self.aux[addr].clone(),
        })
    }

    fn write(&mut self, addr: usize, value: &BitBuffer) -> Result<OpReport> {
        let width = self.device.geometry().bucket_bits;
        if value.width() != width {
            return Err(Error::WidthMismatch {
                left: width,
                right: value.width(),
            });
        }
        let enc = self.encoding.encode(&self.state(addr)?, value)?;
        let mode = if self.encoding.is_differential() {
            WriteMode::Differential
        } else {
            WriteMode::Full
        };
        let write = self
            .device
            .apply(addr, &enc.new_state.payload, enc.aux_flips as u64, mode)?;
        self.aux[addr] = enc.new_state.aux;
        Ok(OpReport {
            write,
            label: None,
            addr: Some(addr),
        })
    }

    fn addr_of(&self, key: &Key) -> Result<usize> {
        self.index
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingKey(key.to_hex()))
    }
}

impl KvEngine for InPlaceStore {
    fn put(&mut self, key: Key, value: &BitBuffer) -> Result<OpReport> {
        if self.index.contains_key(&key) {
            return Err(Error::DuplicateKey(key.to_hex()));
        }
        let addr = *self.free.front().ok_or(Error::Capacity {
            live: self.index.len(),
            buckets: self.device.n_buckets(),
        })?;
        let report = self.write(addr, value)?;
        self.free.pop_front();
        self.log(OpKind::Put, &key, report);
        self.index.insert(key, addr);
        Ok(report)
    }

    fn get(&self, key: &Key) -> Result<BitBuffer> {
        let addr = self.addr_of(key)?;
        self.encoding.decode(&self.state(addr)?)
    }

    fn delete(&mut self, key: &Key) -> Result<OpReport> {
        let addr = self.addr_of(key)?;
        let write = self.device.reset_flag(addr)?;
        self.index.remove(key);
        self.free.push_back(addr);
        let report = OpReport {
            write,
            label: None,
            addr: Some(addr),
        };
        self.log(OpKind::Del, key, report);
        Ok(report)
    }

    fn update(&mut self, key: &Key, value: &BitBuffer) -> Result<OpReport> {
        let addr = self.addr_of(key)?;
        let report = self.write(addr, value)?;
        self.log(OpKind::Upd, key, report);
        Ok(report)
    }

    fn device(&self) -> &NvmDevice {
        &self.device
    }

    fn live_len(&self) -> usize {
        self.index.len()
    }
}
