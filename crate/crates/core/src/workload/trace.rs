use std::io::{BufRead, Write};

use crate::bitvec::BitBuffer;
use crate::error::{Error, Result};
use crate::store::{Key, KvEngine, OpKind, OpRecord, OpReport};

/// One line of an operation trace.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceOp {
    Put(Key, BitBuffer),
    Get(Key),
    Del(Key),
    Upd(Key, BitBuffer),
}

/// Parses `PUT <key> <value>`, `GET <key>`, `DEL <key>` and
/// `UPD <key> <value>` lines with hex operands. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_trace<R: BufRead>(input: R) -> Result<Vec<TraceOp>> {
    let mut ops = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("trace", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("trace line {}: {what}", n + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let value = |s: &str| Key::from_hex(s).map(|k| BitBuffer::from_bytes(&k.0));
        let op = match fields.as_slice() {
            [op, key] if op.eq_ignore_ascii_case("GET") => TraceOp::Get(Key::from_hex(key)?),
            [op, key] if op.eq_ignore_ascii_case("DEL") => TraceOp::Del(Key::from_hex(key)?),
            [op, key, v] if op.eq_ignore_ascii_case("PUT") => TraceOp::Put(Key::from_hex(key)?, value(v)?),
            [op, key, v] if op.eq_ignore_ascii_case("UPD") => TraceOp::Upd(Key::from_hex(key)?, value(v)?),
            _ => return Err(bad(&format!("cannot parse {line:?}"))),
        };
        ops.push(op);
    }
    Ok(ops)
}

/// Executes `ops` in order, appending one record per completed op to
/// `records`. Stops at the first failing op.
pub fn run_trace<E: KvEngine + ?Sized>(engine: &mut E, ops: &[TraceOp], records: &mut Vec<OpRecord>) -> Result<()> {
    for op in ops {
        let (kind, key, report) = match op {
            TraceOp::Put(k, v) => (OpKind::Put, k, engine.put(k.clone(), v)?),
            TraceOp::Upd(k, v) => (OpKind::Upd, k, engine.update(k, v)?),
            TraceOp::Del(k) => (OpKind::Del, k, engine.delete(k)?),
            TraceOp::Get(k) => {
                engine.get(k)?;
                (OpKind::Get, k, OpReport::default())
            }
        };
        records.push(OpRecord {
            kind,
            key: key.clone(),
            report,
        });
    }
    Ok(())
}

/// Per-op CSV: `op,key,label,bits_flipped,aux_flips,words,lines,latency_ns`.
pub fn write_op_csv<W: Write>(out: W, records: &[OpRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "op",
        "key",
        "label",
        "bits_flipped",
        "aux_flips",
        "words",
        "lines",
        "latency_ns",
    ])?;
    for r in records {
        let wr = &r.report.write;
        w.write_record([
            r.kind.as_str().to_string(),
            r.key.to_hex(),
            r.report.label.map(|l| l.to_string()).unwrap_or_default(),
            wr.bits_flipped.to_string(),
            wr.aux_bits_flipped.to_string(),
            wr.words_touched.to_string(),
            wr.lines_touched.to_string(),
            wr.modeled_latency_ns.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("op csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::Encoding;
    use crate::nvm::{DeviceGeometry, NvmDevice};
    use crate::store::InPlaceStore;

    const TRACE: &str = "\
# sample
PUT 01 0000000f
PUT 02 ffffffff
GET 01
UPD 01 0000000e
DEL 02
";

    #[test]
    fn parse_and_run() {
        let ops = parse_trace(TRACE.as_bytes()).unwrap();
        assert_eq!(ops.len(), 5);
        assert_eq!(ops[2], TraceOp::Get(Key(vec![1])));
        let dev = NvmDevice::create(DeviceGeometry::new(32, 4), vec![]).unwrap();
        let mut store = InPlaceStore::new(dev, Encoding::Dcw).unwrap();
        let mut recs = Vec::new();
        run_trace(&mut store, &ops, &mut recs).unwrap();
        let mut out = Vec::new();
        write_op_csv(&mut out, &recs).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "op,key,label,bits_flipped,aux_flips,words,lines,latency_ns");
        assert_eq!(lines[1], "PUT,01,,4,0,1,1,600");
        assert_eq!(lines[2], "PUT,02,,32,0,1,1,600");
        assert_eq!(lines[3], "GET,01,,0,0,0,0,0");
        assert_eq!(lines[4], "UPD,01,,1,0,1,1,600");
        assert_eq!(lines[5], "DEL,02,,1,1,0,0,0");
    }

    #[test]
    fn malformed_lines() {
        assert!(parse_trace("PUT 01".as_bytes()).is_err());
        assert!(parse_trace("NOP 01".as_bytes()).is_err());
        assert!(parse_trace("GET 0g".as_bytes()).is_err());
    }
}
