//! The predict-and-write key/value store.
//!
//! A put asks the cluster model which group of bucket contents the value
//! resembles, takes the head of that group's free-list and writes the value
//! differentially, so only the bits that differ from the bucket's old
//! content are flipped. A delete clears the bucket's valid flag and
//! recycles the address into the free-list of its residual content.

mod baseline;
mod index;
mod pool;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baseline::InPlaceStore;
pub use index::{HashIndex, IndexPlacement, Key};
pub use pool::AddressPool;

use crate::bitvec::BitBuffer;
use crate::error::{Error, Result};
use crate::ml::{ClusterModel, MlConfig};
use crate::nvm::{NvmDevice, WriteReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Delete then put: the new value is placed by the model.
    #[default]
    Endurance,
    /// Differential write over the key's current bucket.
    Latency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainPolicy {
    Manual,
    /// Extend the data zone and retrain once occupancy reaches the load factor.
    #[default]
    OnLoadFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    pub load_factor: f64,
    pub update_mode: UpdateMode,
    pub index: IndexPlacement,
    pub retrain: RetrainPolicy,
    /// Growth per extension as a fraction of the current bucket count.
    pub extension_fraction: f64,
    /// Configured alongside the store rather than inside its section.
    #[serde(skip)]
    pub ml: MlConfig,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            load_factor: 0.85,
            update_mode: UpdateMode::Endurance,
            index: IndexPlacement::Volatile,
            retrain: RetrainPolicy::OnLoadFactor,
            extension_fraction: 0.25,
            ml: MlConfig::default(),
        }
    }
}

impl StoreConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.ml.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.load_factor > 0.0 && self.load_factor < 1.0) {
            return Err(Error::Config(format!("load_factor {} not in (0, 1)", self.load_factor)));
        }
        if self.extension_fraction.is_nan() || self.extension_fraction <= 0.0 {
            return Err(Error::Config("extension_fraction must be positive".into()));
        }
        if self.ml.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one store operation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OpReport {
    pub write: WriteReport,
    /// Cluster the value (put) or residual content (delete) was filed under.
    pub label: Option<usize>,
    pub addr: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Put,
    Get,
    Del,
    Upd,
}

impl OpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpKind::Put => "PUT",
            OpKind::Get => "GET",
            OpKind::Del => "DEL",
            OpKind::Upd => "UPD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpRecord {
    pub kind: OpKind,
    pub key: Key,
    pub report: OpReport,
}

/// The operations the workload driver needs from an engine.
pub trait KvEngine {
    fn put(&mut self, key: Key, value: &BitBuffer) -> Result<OpReport>;
    fn get(&self, key: &Key) -> Result<BitBuffer>;
    fn delete(&mut self, key: &Key) -> Result<OpReport>;
    fn update(&mut self, key: &Key, value: &BitBuffer) -> Result<OpReport>;
    fn device(&self) -> &NvmDevice;
    fn live_len(&self) -> usize;
    /// Manual retrain; engines without a model do nothing.
    fn retrain(&mut self) -> Result<()> {
        Ok(())
    }
    /// Wall time spent in model inference so far.
    fn predict_time(&self) -> Duration {
        Duration::ZERO
    }
}

/// Bucket contents captured for training off the writer's path.
#[derive(Debug, Clone)]
pub struct TrainingSnapshot {
    pub contents: Vec<BitBuffer>,
    pub config: MlConfig,
}

impl TrainingSnapshot {
    pub fn fit(&self) -> Result<ClusterModel> {
        ClusterModel::train(&self.contents, &self.config)
    }
}

#[derive(Debug)]
pub struct KvStore {
    device: NvmDevice,
    index: HashIndex,
    pool: AddressPool,
    model: Arc<ClusterModel>,
    config: StoreConfig,
    op_log: Option<Vec<OpRecord>>,
    retrains: usize,
    extensions: usize,
    predict_time: Duration,
}

impl KvStore {
    /// Trains the model on the data zone's current contents and files every
    /// bucket under its predicted cluster. Performs no device writes.
    pub fn init(device: NvmDevice, config: StoreConfig) -> Result<Self> {
        config.validate()?;
        let model = ClusterModel::train(device.contents(), &config.ml)?;
        Self::with_model(device, config, model)
    }

    /// Like [`KvStore::init`] with a pre-trained model.
    pub fn with_model(mut device: NvmDevice, config: StoreConfig, model: ClusterModel) -> Result<Self> {
        config.validate()?;
        check_model(&model, &device)?;
        let index = HashIndex::new(config.index, &mut device)?;
        let mut store = KvStore {
            pool: AddressPool::new(model.k, device.n_buckets()),
            device,
            index,
            model: Arc::new(model),
            config,
            op_log: None,
            retrains: 0,
            extensions: 0,
            predict_time: Duration::ZERO,
        };
        store.rebuild_pool()?;
        Ok(store)
    }

    pub fn enable_op_log(&mut self) {
        self.op_log.get_or_insert_with(Vec::new);
    }

    pub fn take_op_log(&mut self) -> Vec<OpRecord> {
        self.op_log.as_mut().map(std::mem::take).unwrap_or_default()
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

    pub fn model(&self) -> &Arc<ClusterModel> {
        &self.model
    }

    pub fn pool(&self) -> &AddressPool {
        &self.pool
    }

    pub fn index(&self) -> &HashIndex {
        &self.index
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn retrain_count(&self) -> usize {
        self.retrains
    }

    pub fn extension_count(&self) -> usize {
        self.extensions
    }

    pub fn occupancy(&self) -> f64 {
        self.index.len() as f64 / self.device.n_buckets() as f64
    }

    pub fn into_device(self) -> NvmDevice {
        self.device
    }

    /// Refiles every free bucket under the current model.
    fn rebuild_pool(&mut self) -> Result<()> {
        let live: Vec<bool> = {
            let mut v = vec![false; self.device.n_buckets()];
            for (_, addr) in self.index.iter() {
                v[addr] = true;
            }
            v
        };
        let model = &self.model;
        let contents = self.device.contents();
        let labels = (0..contents.len())
            .into_par_iter()
            .map(|a| {
                if live[a] {
                    Ok(None)
                } else {
                    model.predict(&contents[a]).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pool = AddressPool::new(self.model.k, self.device.n_buckets());
        for (addr, label) in labels.into_iter().enumerate() {
            if let Some(label) = label {
                pool.push(label, addr);
            }
        }
        self.pool = pool;
        Ok(())
    }

    fn check_value(&self, value: &BitBuffer) -> Result<()> {
        let width = self.device.geometry().bucket_bits;
        if value.width() != width {
            return Err(Error::WidthMismatch {
                left: width,
                right: value.width(),
            });
        }
        Ok(())
    }

    /// Predicted cluster, or the nearest cluster that still has a free
    /// bucket when the predicted one is exhausted.
    fn choose_cluster(&self, value: &BitBuffer) -> Result<usize> {
        let predicted = self.model.predict(value)?;
        if self.pool.len_of(predicted) > 0 {
            return Ok(predicted);
        }
        self.model
            .rank(value)?
            .into_iter()
            .find(|&l| self.pool.len_of(l) > 0)
            .ok_or(Error::Capacity {
                live: self.index.len(),
                buckets: self.device.n_buckets(),
            })
    }

    fn put_inner(&mut self, key: Key, value: &BitBuffer) -> Result<OpReport> {
        self.check_value(value)?;
        self.index.check_insert(&key)?;
        let start = Instant::now();
        let label = self.choose_cluster(value);
        self.predict_time += start.elapsed();
        let label = label?;
        let addr = self.pool.pop(label).expect("cluster has a free bucket");
        let mut write = self.device.apply_diff(addr, value, 0)?;
        write += self.index.insert(key, addr, &mut self.device)?;
        Ok(OpReport {
            write,
            label: Some(label),
            addr: Some(addr),
        })
    }

    fn delete_inner(&mut self, key: &Key) -> Result<OpReport> {
        let addr = self.index.get(key).ok_or_else(|| Error::MissingKey(key.to_hex()))?;
        let mut write = self.device.reset_flag(addr)?;
        let (_, index_write) = self.index.remove(key, &mut self.device)?;
        write += index_write;
        let start = Instant::now();
        let label = self.model.predict(self.device.content(addr)?);
        self.predict_time += start.elapsed();
        let label = label?;
        self.pool.push(label, addr);
        Ok(OpReport {
            write,
            label: Some(label),
            addr: Some(addr),
        })
    }

    fn maybe_grow(&mut self) -> Result<()> {
        if self.config.retrain != RetrainPolicy::OnLoadFactor || self.occupancy() < self.config.load_factor {
            return Ok(());
        }
        let n = self.device.n_buckets();
        let by_fraction = (n as f64 * self.config.extension_fraction).ceil() as usize;
        let needed = (self.index.len() as f64 / self.config.load_factor).floor() as usize + 1 - n;
        self.extend_data_zone(by_fraction.max(needed).max(1))
    }

    /// Appends zeroed buckets and retrains. No existing bucket or index
    /// entry is rewritten.
    pub fn extend_data_zone(&mut self, extra: usize) -> Result<()> {
        self.device.extend(extra);
        self.extensions += 1;
        self.retrain()
    }

    /// Copy of every bucket's content for training elsewhere.
    pub fn training_snapshot(&self) -> TrainingSnapshot {
        TrainingSnapshot {
            contents: self.device.contents().to_vec(),
            config: self.config.ml.clone(),
        }
    }

    /// Swaps in `model` and refiles the free buckets under it in one step.
    /// Buckets allocated or freed since the model's snapshot are handled
    /// because the pool is rebuilt from the current state.
    pub fn install_model(&mut self, model: ClusterModel) -> Result<()> {
        check_model(&model, &self.device)?;
        let previous = std::mem::replace(&mut self.model, Arc::new(model));
        if let Err(e) = self.rebuild_pool() {
            self.model = previous;
            return Err(e);
        }
        self.retrains += 1;
        Ok(())
    }

    /// Refits the model on the current contents and rebuilds the pool.
    pub fn retrain(&mut self) -> Result<()> {
        let model = self.training_snapshot().fit()?;
        self.install_model(model)
    }

    /// Checks pool conservation and the index/pool/device agreement.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.device.n_buckets();
        let live = self.index.len();
        let free = self.pool.total_free();
        if live + free != n {
            return Err(format!("{live} live + {free} free != {n} buckets"));
        }
        let mut seen = vec![false; n];
        for (key, addr) in self.index.iter() {
            if seen[addr] {
                return Err(format!("address {addr} mapped twice"));
            }
            seen[addr] = true;
            if self.pool.contains(addr) {
                return Err(format!("live address {addr} ({key}) is in the pool"));
            }
            if !self.device.is_valid(addr).unwrap_or(false) {
                return Err(format!("live address {addr} has a clear flag"));
            }
        }
        Ok(())
    }
}

fn check_model(model: &ClusterModel, device: &NvmDevice) -> Result<()> {
    if model.feature_width != device.geometry().bucket_bits {
        return Err(Error::DimensionMismatch {
            expected: device.geometry().bucket_bits,
            got: model.feature_width,
        });
    }
    Ok(())
}

impl KvEngine for KvStore {
    fn put(&mut self, key: Key, value: &BitBuffer) -> Result<OpReport> {
        let logged_key = self.op_log.is_some().then(|| key.clone());
        let report = self.put_inner(key, value)?;
        if let Some(k) = logged_key {
            self.log(OpKind::Put, &k, report);
        }
        self.maybe_grow()?;
        Ok(report)
    }

    fn get(&self, key: &Key) -> Result<BitBuffer> {
        let addr = self.index.get(key).ok_or_else(|| Error::MissingKey(key.to_hex()))?;
        Ok(self.device.content(addr)?.clone())
    }

    fn delete(&mut self, key: &Key) -> Result<OpReport> {
        let report = self.delete_inner(key)?;
        self.log(OpKind::Del, key, report);
        Ok(report)
    }

    fn update(&mut self, key: &Key, value: &BitBuffer) -> Result<OpReport> {
        self.check_value(value)?;
        let addr = self.index.get(key).ok_or_else(|| Error::MissingKey(key.to_hex()))?;
        let report = match self.config.update_mode {
            UpdateMode::Latency => OpReport {
                write: self.device.apply_diff(addr, value, 0)?,
                label: None,
                addr: Some(addr),
            },
            UpdateMode::Endurance => {
                let deleted = self.delete_inner(key)?;
                let mut put = self.put_inner(key.clone(), value)?;
                put.write += deleted.write;
                self.maybe_grow()?;
                put
            }
        };
        self.log(OpKind::Upd, key, report);
        Ok(report)
    }

    fn device(&self) -> &NvmDevice {
        &self.device
    }

    fn live_len(&self) -> usize {
        self.index.len()
    }

    fn retrain(&mut self) -> Result<()> {
        KvStore::retrain(self)
    }

    fn predict_time(&self) -> Duration {
        self.predict_time
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nvm::DeviceGeometry;

    const TABLE2: [&str; 6] = ["00000111", "00001011", "00101100", "00111100", "11010000", "01110000"];

    fn b(s: &str) -> BitBuffer {
        s.parse().unwrap()
    }

    /// 32-bit buckets holding the worked example's rows in their last byte.
    fn pad(s: &str) -> BitBuffer {
        BitBuffer::zeros(24).concat(&b(s))
    }

    fn table2_store(config: StoreConfig) -> KvStore {
        let dev = NvmDevice::create(DeviceGeometry::new(32, 6), TABLE2.iter().map(|s| pad(s)).collect()).unwrap();
        KvStore::init(dev, config).unwrap()
    }

    fn manual(k: usize) -> StoreConfig {
        StoreConfig {
            retrain: RetrainPolicy::Manual,
            ..StoreConfig::default().with_k(k)
        }
    }

    #[test]
    fn init_files_pairs_together() {
        let store = table2_store(manual(3));
        let mut groups: Vec<Vec<usize>> = (0..3).map(|l| store.pool().list(l).collect()).collect();
        groups.sort();
        assert_eq!(groups, vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(store.device().total_flips(), 0);
        store.check_invariants().unwrap();
    }

    #[test]
    fn empty_device_single_cluster() {
        let dev = NvmDevice::create(DeviceGeometry::new(32, 5), vec![]).unwrap();
        let store = KvStore::init(dev, manual(1)).unwrap();
        assert_eq!(store.pool().list(0).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn too_many_clusters() {
        let dev = NvmDevice::create(DeviceGeometry::new(32, 5), vec![]).unwrap();
        assert!(matches!(
            KvStore::init(dev, manual(2)),
            Err(Error::TooFewDistinct { .. })
        ));
    }

    #[test]
    fn worked_example_puts_cost_one_bit_each() {
        let mut store = table2_store(manual(3));
        let r1 = store.put(Key::from_u64(1), &pad("00001111")).unwrap();
        let r2 = store.put(Key::from_u64(2), &pad("11110000")).unwrap();
        assert_eq!(r1.write.payload_bits_flipped(), 1);
        assert_eq!(r2.write.payload_bits_flipped(), 1);
        assert!([0, 1].contains(&r1.addr.unwrap()));
        assert!([4, 5].contains(&r2.addr.unwrap()));
        assert_eq!(store.get(&Key::from_u64(1)).unwrap(), pad("00001111"));
        store.check_invariants().unwrap();
    }

    #[test]
    fn identical_value_costs_nothing() {
        let mut store = table2_store(manual(3));
        let r = store.put(Key::from_u64(9), &pad(TABLE2[2])).unwrap();
        assert_eq!(r.write.bits_flipped, 0);
    }

    #[test]
    fn get_and_errors() {
        let mut store = table2_store(manual(3));
        store.put(Key::from_u64(1), &pad("00001111")).unwrap();
        let before = store.device().stats();
        let _ = store.get(&Key::from_u64(1)).unwrap();
        assert_eq!(store.device().stats(), before);
        assert!(matches!(store.get(&Key::from_u64(2)), Err(Error::MissingKey(_))));
        assert!(matches!(
            store.put(Key::from_u64(1), &pad("00001111")),
            Err(Error::DuplicateKey(_))
        ));
        assert!(matches!(store.delete(&Key::from_u64(5)), Err(Error::MissingKey(_))));
        assert!(store.put(Key::from_u64(3), &b("0101")).is_err());
    }

    #[test]
    fn delete_recycles_address() {
        let mut store = table2_store(manual(3));
        let v = pad("00001111");
        let first = store.put(Key::from_u64(1), &v).unwrap();
        let flips = store.device().total_flips();
        let del = store.delete(&Key::from_u64(1)).unwrap();
        assert_eq!(del.write.bits_flipped, 1);
        assert_eq!(store.device().total_flips(), flips + 1);
        let addr = first.addr.unwrap();
        assert!(store.pool().contains(addr));
        assert_eq!(store.pool().owner(addr), del.label);
        store.check_invariants().unwrap();
    }

    #[test]
    fn put_delete_put_same_address_is_free() {
        // single free bucket: FIFO must hand back the same address
        let dev = NvmDevice::create(DeviceGeometry::new(32, 1), vec![]).unwrap();
        let mut store = KvStore::init(dev, manual(1)).unwrap();
        let v = BitBuffer::from_u64(0xabcd_0123, 32);
        store.put(Key::from_u64(1), &v).unwrap();
        store.delete(&Key::from_u64(1)).unwrap();
        let again = store.put(Key::from_u64(2), &v).unwrap();
        assert_eq!(again.write.payload_bits_flipped(), 0);
    }

    #[test]
    fn capacity_error_when_pool_empty() {
        let dev = NvmDevice::create(DeviceGeometry::new(32, 2), vec![]).unwrap();
        let mut store = KvStore::init(dev, manual(1)).unwrap();
        store.put(Key::from_u64(1), &BitBuffer::zeros(32)).unwrap();
        store.put(Key::from_u64(2), &BitBuffer::zeros(32)).unwrap();
        let err = store.put(Key::from_u64(3), &BitBuffer::zeros(32)).unwrap_err();
        assert!(matches!(err, Error::Capacity { live: 2, buckets: 2 }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn fallback_to_next_nearest_cluster() {
        let mut store = table2_store(manual(3));
        let d1 = pad("00001111");
        let a = store.put(Key::from_u64(1), &d1).unwrap();
        let b2 = store.put(Key::from_u64(2), &d1).unwrap();
        assert_eq!(a.label, b2.label);
        let c = store.put(Key::from_u64(3), &d1).unwrap();
        assert_ne!(c.label, a.label);
        assert_eq!(c.label, Some(store.model().rank(&d1).unwrap()[1]));
    }

    #[test]
    fn update_modes() {
        let mut latency = table2_store(StoreConfig {
            update_mode: UpdateMode::Latency,
            ..manual(3)
        });
        let v = pad("00001111");
        let put = latency.put(Key::from_u64(1), &v).unwrap();
        let pool_before = latency.pool().sizes();
        let r = latency.update(&Key::from_u64(1), &v).unwrap();
        assert_eq!(r.write.bits_flipped, 0);
        assert_eq!(r.addr, put.addr);
        assert_eq!(latency.pool().sizes(), pool_before);

        let mut endurance = table2_store(manual(3));
        endurance.put(Key::from_u64(1), &v).unwrap();
        let new = pad("11110001");
        let label = endurance.model().predict(&new).unwrap();
        let target = endurance.pool().list(label).next().unwrap();
        let old = endurance.device().content(target).unwrap().clone();
        let r = endurance.update(&Key::from_u64(1), &new).unwrap();
        assert_eq!(r.addr, Some(target));
        assert_eq!(r.write.bits_flipped, 1 + old.hamming(&new).unwrap() as u64);
        assert_eq!(endurance.get(&Key::from_u64(1)).unwrap(), new);
        endurance.check_invariants().unwrap();
    }

    #[test]
    fn retrain_writes_nothing() {
        let mut store = table2_store(manual(3));
        store.put(Key::from_u64(1), &pad("00001111")).unwrap();
        let flips = store.device().bit_flip_counts().to_vec();
        let aux = store.device().aux_flip_count();
        let sse = store.model().sse;
        store.retrain().unwrap();
        assert_eq!(store.device().bit_flip_counts(), &flips[..]);
        assert_eq!(store.device().aux_flip_count(), aux);
        store.retrain().unwrap();
        let again = store.model().sse;
        store.retrain().unwrap();
        assert_eq!(store.model().sse, again);
        assert!(sse >= 0.0);
        assert_eq!(store.get(&Key::from_u64(1)).unwrap(), pad("00001111"));
        store.check_invariants().unwrap();
    }

    #[test]
    fn load_factor_triggers_extension() {
        let dev = NvmDevice::create(DeviceGeometry::new(32, 4), vec![]).unwrap();
        let mut store = KvStore::init(
            dev,
            StoreConfig {
                load_factor: 0.5,
                ..StoreConfig::default().with_k(1)
            },
        )
        .unwrap();
        store.put(Key::from_u64(1), &BitBuffer::from_u64(1, 32)).unwrap();
        assert_eq!(store.extension_count(), 0);
        let flips = store.device().total_flips();
        store.put(Key::from_u64(2), &BitBuffer::from_u64(2, 32)).unwrap();
        assert_eq!(store.extension_count(), 1);
        assert!(store.occupancy() < 0.5);
        assert_eq!(store.device().n_buckets(), 5);
        // only the second put's bit was flipped
        assert_eq!(store.device().total_flips(), flips + 1);
        assert_eq!(store.get(&Key::from_u64(1)).unwrap(), BitBuffer::from_u64(1, 32));
        store.check_invariants().unwrap();
    }

    #[test]
    fn concurrent_training_then_install() {
        let mut store = table2_store(manual(3));
        let snapshot = store.training_snapshot();
        let handle = std::thread::spawn(move || snapshot.fit());
        store.put(Key::from_u64(1), &pad("00001111")).unwrap();
        store.put(Key::from_u64(2), &pad("11110000")).unwrap();
        store.delete(&Key::from_u64(1)).unwrap();
        let model = handle.join().unwrap().unwrap();
        store.install_model(model).unwrap();
        store.check_invariants().unwrap();
        assert_eq!(store.retrain_count(), 1);
        assert_eq!(store.get(&Key::from_u64(2)).unwrap(), pad("11110000"));
    }

    #[test]
    fn device_index_placement_counts_index_flips() {
        let dev = NvmDevice::create(DeviceGeometry::new(32, 6), TABLE2.iter().map(|s| pad(s)).collect()).unwrap();
        let cfg = StoreConfig {
            index: IndexPlacement::Device {
                key_bytes: 8,
                slots_per_bucket: 2,
            },
            ..manual(3)
        };
        let mut store = KvStore::init(dev, cfg).unwrap();
        let r = store.put(Key::from_u64(1), &pad("00001111")).unwrap();
        assert_eq!(r.write.payload_bits_flipped(), 1);
        assert!(r.write.aux_bits_flipped > 0);
        let d = store.delete(&Key::from_u64(1)).unwrap();
        assert_eq!(d.write.bits_flipped, 2);
    }

    #[test]
    fn op_log_records_operations() {
        let mut store = table2_store(manual(3));
        store.enable_op_log();
        store.put(Key::from_u64(1), &pad("00001111")).unwrap();
        store.update(&Key::from_u64(1), &pad("11110000")).unwrap();
        store.delete(&Key::from_u64(1)).unwrap();
        let log = store.take_op_log();
        let kinds: Vec<OpKind> = log.iter().map(|r| r.kind).collect();
        assert_eq!(kinds, vec![OpKind::Put, OpKind::Upd, OpKind::Del]);
    }
}
