//! C ABI over the flipkv store.
//!
//! A store is created with [`flipkv_store_new`] or
//! [`flipkv_store_from_config`] and released with [`flipkv_store_free`].
//! Every fallible call returns one of the `FLIPKV_*` status codes; the
//! message of the last failure on the calling thread is available from
//! [`flipkv_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use flipkv::encoders::Scheme;
use flipkv::nvm::{DeviceGeometry, NvmDevice};
use flipkv::report::RunConfig;
use flipkv::store::{InPlaceStore, Key, KvEngine, KvStore, OpReport, StoreConfig};
use flipkv::{BitBuffer, Error};

pub const FLIPKV_OK: i32 = 0;
pub const FLIPKV_ERR_NULL: i32 = 1;
pub const FLIPKV_ERR_CONFIG: i32 = 2;
pub const FLIPKV_ERR_CAPACITY: i32 = 3;
pub const FLIPKV_ERR_IO: i32 = 4;
pub const FLIPKV_ERR_MISSING_KEY: i32 = 5;
pub const FLIPKV_ERR_DUPLICATE_KEY: i32 = 6;
pub const FLIPKV_ERR_WIDTH: i32 = 7;
pub const FLIPKV_ERR_BUFFER_TOO_SMALL: i32 = 8;
pub const FLIPKV_ERR_PANIC: i32 = 9;

/// Opaque store handle.
pub struct FlipkvStore {
    engine: Box<dyn KvEngine>,
}

/// Accounting for one operation. `label` and `addr` are -1 when absent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlipkvReport {
    pub bits_flipped: u64,
    pub aux_bits_flipped: u64,
    pub words_touched: u64,
    pub lines_touched: u64,
    pub modeled_latency_ns: f64,
    pub label: i64,
    pub addr: i64,
}

impl From<OpReport> for FlipkvReport {
    fn from(r: OpReport) -> Self {
        let opt = |x: Option<usize>| x.map_or(-1, |v| v as i64);
        FlipkvReport {
            bits_flipped: r.write.bits_flipped,
            aux_bits_flipped: r.write.aux_bits_flipped,
            words_touched: r.write.words_touched,
            lines_touched: r.write.lines_touched,
            modeled_latency_ns: r.write.modeled_latency_ns,
            label: opt(r.label),
            addr: opt(r.addr),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::Capacity { .. } | Error::IndexFull { .. } => FLIPKV_ERR_CAPACITY,
        Error::Io { .. } | Error::Format(_) | Error::Csv(_) => FLIPKV_ERR_IO,
        Error::MissingKey(_) => FLIPKV_ERR_MISSING_KEY,
        Error::DuplicateKey(_) => FLIPKV_ERR_DUPLICATE_KEY,
        Error::WidthMismatch { .. } | Error::DimensionMismatch { .. } => FLIPKV_ERR_WIDTH,
        _ => FLIPKV_ERR_CONFIG,
    }
}

struct Fail(i32, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FLIPKV_OK,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            FLIPKV_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FLIPKV_ERR_NULL, format!("{what} is null"))
}

unsafe fn bytes<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn store_mut<'a>(s: *mut FlipkvStore) -> Result<&'a mut FlipkvStore, Fail> {
    s.as_mut().ok_or_else(|| null("store"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FLIPKV_ERR_CONFIG, format!("{what} is not UTF-8")))
}

fn build(device: NvmDevice, scheme: Scheme, store_cfg: StoreConfig) -> Result<Box<dyn KvEngine>, Error> {
    Ok(match scheme.encoding(device.geometry().word_bits) {
        Some(enc) => Box::new(InPlaceStore::new(device, enc)?),
        None => Box::new(KvStore::init(device, store_cfg)?),
    })
}

/// 32-bit words and 512-bit lines where they fit the bucket width,
/// otherwise the widest word that divides it and one line per bucket.
fn geometry_for(bucket_bits: usize, n_buckets: usize) -> DeviceGeometry {
    let word = [32, 16, 8]
        .into_iter()
        .find(|w| bucket_bits.is_multiple_of(*w))
        .unwrap_or(8);
    let line = if bucket_bits.is_multiple_of(512) || 512 % bucket_bits == 0 {
        512
    } else {
        bucket_bits
    };
    DeviceGeometry::new(bucket_bits, n_buckets)
        .with_word_bits(word)
        .with_line_bits(line)
}

fn emit(out: *mut *mut FlipkvStore, engine: Box<dyn KvEngine>) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(FlipkvStore { engine })) };
}

/// Creates a store of `n_buckets` buckets of `bucket_bytes` bytes each.
/// `initial` holds `initial_len` bytes of old bucket contents laid out
/// back to back from bucket 0; the remaining buckets start zeroed.
/// Words are 32 bits and lines 512 bits when those fit the bucket width.
/// `scheme` is one of `conventional`, `dcw`, `fnw`, `minshift`, `cap16`
/// or `pnw`; `k` and `seed` configure the pnw model.
///
/// # Safety
/// `initial` must point to `initial_len` readable bytes (or be null when
/// `initial_len` is 0), `scheme` must be a NUL-terminated string and `out`
/// a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn flipkv_store_new(
    bucket_bytes: usize,
    n_buckets: usize,
    initial: *const u8,
    initial_len: usize,
    scheme: *const c_char,
    k: usize,
    seed: u64,
    out: *mut *mut FlipkvStore,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scheme: Scheme = c_str(scheme, "scheme")?.parse()?;
        let data = bytes(initial, initial_len, "initial")?;
        if bucket_bytes == 0 || data.len() % bucket_bytes != 0 {
            return Err(Fail(
                FLIPKV_ERR_CONFIG,
                format!("initial data of {initial_len} bytes is not whole buckets"),
            ));
        }
        let contents = data.chunks_exact(bucket_bytes).map(BitBuffer::from_bytes).collect();
        let device = NvmDevice::create(geometry_for(bucket_bytes * 8, n_buckets), contents)?;
        let mut cfg = StoreConfig::default();
        cfg.ml = cfg.ml.with_k(k).with_seed(seed);
        emit(out, build(device, scheme, cfg)?);
        Ok(())
    })
}

/// Creates a store from a JSON run configuration. The device starts with
/// the configuration's warm-up contents.
///
/// # Safety
/// `config_json` and `scheme` must be NUL-terminated strings and `out` a
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn flipkv_store_from_config(
    config_json: *const c_char,
    scheme: *const c_char,
    out: *mut *mut FlipkvStore,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scheme: Scheme = c_str(scheme, "scheme")?.parse()?;
        let cfg: RunConfig = serde_json::from_str(c_str(config_json, "config_json")?)
            .map_err(|e| Fail(FLIPKV_ERR_CONFIG, e.to_string()))?;
        cfg.validate()?;
        emit(out, build(cfg.device()?, scheme, cfg.store_config(None))?);
        Ok(())
    })
}

/// Releases a store. Null is ignored.
///
/// # Safety
/// `store` must come from a constructor in this library and not have been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn flipkv_store_free(store: *mut FlipkvStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

unsafe fn write_report(report: *mut FlipkvReport, r: OpReport) {
    if let Some(slot) = report.as_mut() {
        *slot = r.into();
    }
}

/// Stores `value` (exactly one bucket wide) under `key`. `report` may be
/// null.
///
/// # Safety
/// Pointers must be valid for the given lengths; `store` must be live.
#[no_mangle]
pub unsafe extern "C" fn flipkv_put(
    store: *mut FlipkvStore,
    key: *const u8,
    key_len: usize,
    value: *const u8,
    value_len: usize,
    report: *mut FlipkvReport,
) -> i32 {
    guard(|| {
        let s = store_mut(store)?;
        let k = Key::from(bytes(key, key_len, "key")?);
        let v = BitBuffer::from_bytes(bytes(value, value_len, "value")?);
        write_report(report, s.engine.put(k, &v)?);
        Ok(())
    })
}

/// Replaces the value of a live key. `report` may be null.
///
/// # Safety
/// Pointers must be valid for the given lengths; `store` must be live.
#[no_mangle]
pub unsafe extern "C" fn flipkv_update(
    store: *mut FlipkvStore,
    key: *const u8,
    key_len: usize,
    value: *const u8,
    value_len: usize,
    report: *mut FlipkvReport,
) -> i32 {
    guard(|| {
        let s = store_mut(store)?;
        let k = Key::from(bytes(key, key_len, "key")?);
        let v = BitBuffer::from_bytes(bytes(value, value_len, "value")?);
        write_report(report, s.engine.update(&k, &v)?);
        Ok(())
    })
}

/// Removes a live key. `report` may be null.
///
/// # Safety
/// `key` must be valid for `key_len` bytes; `store` must be live.
#[no_mangle]
pub unsafe extern "C" fn flipkv_delete(
    store: *mut FlipkvStore,
    key: *const u8,
    key_len: usize,
    report: *mut FlipkvReport,
) -> i32 {
    guard(|| {
        let s = store_mut(store)?;
        let k = Key::from(bytes(key, key_len, "key")?);
        write_report(report, s.engine.delete(&k)?);
        Ok(())
    })
}

/// Copies the value of `key` into `out`. `out_len` receives the value size
/// in bytes; when `out_cap` is smaller nothing is copied and
/// `FLIPKV_ERR_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `key` must be valid for `key_len` bytes, `out` writable for `out_cap`
/// bytes and `out_len` writable; `store` must be live.
#[no_mangle]
pub unsafe extern "C" fn flipkv_get(
    store: *mut FlipkvStore,
    key: *const u8,
    key_len: usize,
    out: *mut u8,
    out_cap: usize,
    out_len: *mut usize,
) -> i32 {
    guard(|| {
        let s = store_mut(store)?;
        if out_len.is_null() {
            return Err(null("out_len"));
        }
        let k = Key::from(bytes(key, key_len, "key")?);
        let v = s.engine.get(&k)?.to_bytes();
        *out_len = v.len();
        if out_cap < v.len() {
            return Err(Fail(
                FLIPKV_ERR_BUFFER_TOO_SMALL,
                format!("value needs {} bytes, buffer has {out_cap}", v.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
        Ok(())
    })
}

/// Refits the placement model without writing to the device. A no-op for
/// baseline schemes.
///
/// # Safety
/// `store` must be live.
#[no_mangle]
pub unsafe extern "C" fn flipkv_retrain(store: *mut FlipkvStore) -> i32 {
    guard(|| {
        store_mut(store)?.engine.retrain()?;
        Ok(())
    })
}

/// Device flips so far, metadata included. 0 for a null store.
///
/// # Safety
/// `store` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn flipkv_total_flips(store: *const FlipkvStore) -> u64 {
    store.as_ref().map_or(0, |s| s.engine.device().total_flips())
}

/// Number of live keys. 0 for a null store.
///
/// # Safety
/// `store` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn flipkv_live_count(store: *const FlipkvStore) -> usize {
    store.as_ref().map_or(0, |s| s.engine.live_len())
}

/// Writes the device snapshot (contents and wear counters) to `path`.
///
/// # Safety
/// `store` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn flipkv_save_snapshot(store: *const FlipkvStore, path: *const c_char) -> i32 {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| null("store"))?;
        let path = c_str(path, "path")?;
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        s.engine
            .device()
            .write_snapshot(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    })
}

/// Hamming distance between two `len`-byte buffers; `u64::MAX` if either
/// pointer is null.
///
/// # Safety
/// `a` and `b` must be readable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn flipkv_hamming(a: *const u8, b: *const u8, len: usize) -> u64 {
    match (bytes(a, len, "a"), bytes(b, len, "b")) {
        (Ok(a), Ok(b)) => a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as u64).sum(),
        _ => u64::MAX,
    }
}

/// Message of the last failure on this thread, or null. Free with
/// [`flipkv_string_free`].
#[no_mangle]
pub extern "C" fn flipkv_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .and_then(|m| CString::new(m.replace('\0', " ")).ok())
            .map_or(ptr::null_mut(), CString::into_raw)
    })
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from [`flipkv_last_error_message`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn flipkv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
