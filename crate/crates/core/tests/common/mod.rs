//! Oracles shared by the integration and acceptance tests.

#![allow(dead_code)]

use flipkv::encoders::{EncodedState, Encoding};
use flipkv::BitBuffer;

/// The six 8-bit rows of the worked clustering example.
pub const TABLE2: [&str; 6] = ["00000111", "00001011", "00101100", "00111100", "11010000", "01110000"];

pub fn table2_rows() -> Vec<BitBuffer> {
    TABLE2.iter().map(|s| s.parse().unwrap()).collect()
}

/// Minimum SSE over every assignment of rows to `k` nonempty clusters,
/// each cluster scored against its own mean.
pub fn brute_force_sse(rows: &[Vec<f64>], k: usize) -> f64 {
    let n = rows.len();
    let dim = rows[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (row, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(row) {
                *s += x;
            }
        }
        if counts.iter().all(|&c| c > 0) {
            let mut total = 0.0;
            for (row, &l) in rows.iter().zip(&labels) {
                for (s, x) in sums[l].iter().zip(row) {
                    let d = x - s / counts[l] as f64;
                    total += d * d;
                }
            }
            best = best.min(total);
        }
        // odometer increment over k^n labelings
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

pub fn distinct_rows(rows: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for r in rows {
        if !seen.contains(&r) {
            seen.push(r);
        }
    }
    seen.len()
}

fn bits8(v: u32) -> BitBuffer {
    BitBuffer::from_u64(v as u64, 8)
}

fn state(payload: u32, aux: Option<(u32, usize)>) -> EncodedState {
    EncodedState {
        payload: bits8(payload),
        aux: aux.map(|(a, w)| BitBuffer::from_u64(a as u64, w)),
    }
}

fn aux_value(s: &EncodedState) -> u32 {
    s.aux.as_ref().map_or(0, |a| a.to_u64() as u32)
}

/// Minimum cost over every flag assignment of a chunked inversion scheme
/// on an 8-bit payload with `chunks` chunks, as `(cost, stored, flags)`.
/// Flag bit 0 (MSB) covers the leading chunk. Among optimal assignments
/// the one inverting the fewest chunks wins.
pub fn inversion_oracle(old_p: u32, old_f: u32, v: u32, chunks: usize) -> (usize, u32, u32) {
    let cb = 8 / chunks;
    let mut best = (usize::MAX, 0, 0);
    for flags in 0..(1u32 << chunks) {
        let mut stored = v;
        for c in 0..chunks {
            if flags >> (chunks - 1 - c) & 1 == 1 {
                let shift = 8 - cb * (c + 1);
                stored ^= ((1u32 << cb) - 1) << shift;
            }
        }
        let cost = ((old_p ^ stored).count_ones() + (old_f ^ flags).count_ones()) as usize;
        let better = cost < best.0 || (cost == best.0 && (flags & !best.2) == 0 && flags != best.2);
        if better {
            best = (cost, stored, flags);
        }
    }
    best
}

pub fn rotr8(v: u32, r: u32) -> u32 {
    ((v >> r) | (v << (8 - r))) & 0xff
}

fn expect<T: PartialEq + std::fmt::Debug>(got: T, want: T, what: impl Fn() -> String) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{}: got {got:?}, want {want:?}", what()))
    }
}

/// Every 8-bit (old, new) pair under DCW and conventional writes.
pub fn check_dcw_conventional_exhaustive() -> Result<(), String> {
    for old in 0..256u32 {
        for v in 0..256u32 {
            let s = state(old, None);
            let d = Encoding::Dcw.encode(&s, &bits8(v)).unwrap();
            expect(d.total_flips(), (old ^ v).count_ones() as usize, || {
                format!("dcw {old} -> {v}")
            })?;
            let c = Encoding::Conventional.encode(&s, &bits8(v)).unwrap();
            expect(c.total_flips(), 8, || format!("conventional {old} -> {v}"))?;
            expect(Encoding::Conventional.decode(&c.new_state).unwrap(), bits8(v), || {
                "decode".into()
            })?;
        }
    }
    Ok(())
}

/// FNW and Captopril at every chunking of an 8-bit payload against the
/// flag-assignment oracle.
pub fn check_inversion_exhaustive() -> Result<(), String> {
    let schemes: Vec<(Encoding, usize)> = vec![
        (Encoding::Fnw { word_bits: 8 }, 1),
        (Encoding::Fnw { word_bits: 4 }, 2),
        (Encoding::Fnw { word_bits: 2 }, 4),
        (Encoding::Captopril { segments: 2 }, 2),
        (Encoding::Captopril { segments: 4 }, 4),
        (Encoding::Captopril { segments: 8 }, 8),
    ];
    for (enc, chunks) in schemes {
        let flag_values: Vec<u32> = if chunks <= 4 {
            (0..1 << chunks).collect()
        } else {
            vec![0, 0b1010_0101, 0xff]
        };
        for old in 0..256u32 {
            for &f in &flag_values {
                for v in 0..256u32 {
                    let r = enc.encode(&state(old, Some((f, chunks))), &bits8(v)).unwrap();
                    let (cost, stored, flags) = inversion_oracle(old, f, v, chunks);
                    let what = || format!("{enc:?} old={old} flags={f} v={v}");
                    expect(r.total_flips(), cost, what)?;
                    expect(r.new_state.payload.to_u64() as u32, stored, what)?;
                    expect(aux_value(&r.new_state), flags, what)?;
                    expect(enc.decode(&r.new_state).unwrap(), bits8(v), what)?;
                }
            }
        }
    }
    Ok(())
}

/// MinShift over every old payload, old shift field and new value.
pub fn check_minshift_exhaustive() -> Result<(), String> {
    for old in 0..256u32 {
        for f in 0..8u32 {
            for v in 0..256u32 {
                let r = Encoding::MinShift.encode(&state(old, Some((f, 3))), &bits8(v)).unwrap();
                let (cost, shift) = (0..8u32)
                    .map(|sh| {
                        let c = (old ^ rotr8(v, sh)).count_ones() + (f ^ sh).count_ones();
                        (c as usize, sh)
                    })
                    .min()
                    .unwrap();
                let what = || format!("minshift old={old} field={f} v={v}");
                expect(r.total_flips(), cost, what)?;
                expect(aux_value(&r.new_state), shift, what)?;
                expect(r.new_state.payload.to_u64() as u32, rotr8(v, shift), what)?;
                expect(Encoding::MinShift.decode(&r.new_state).unwrap(), bits8(v), what)?;
            }
        }
    }
    Ok(())
}
