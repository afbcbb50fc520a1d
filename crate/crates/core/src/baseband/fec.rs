//! Parity (5,4) and Hamming (7,4)/(8,4) block codes on 4-bit nibbles.
//!
//! Bits are `u8` values 0/1. Codewords are systematic: the four data bits
//! come first, then parity.

use crate::linkmodel::CodeRate;
use crate::{Error, Result};

/// Decoder output plus per-block statistics.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodeReport {
    pub bits: Vec<u8>,
    /// Codewords in which one bit was corrected.
    pub corrected: usize,
    /// Codewords with a detected error that could not be corrected.
    pub detected: usize,
}

fn hamming_parity(d: &[u8]) -> [u8; 3] {
    [d[0] ^ d[1] ^ d[3], d[0] ^ d[2] ^ d[3], d[1] ^ d[2] ^ d[3]]
}

// Syndrome column of each codeword position of the (7,4) code.
const SYNDROME_POSITION: [(u8, usize); 7] = [
    (0b110, 0),
    (0b101, 1),
    (0b011, 2),
    (0b111, 3),
    (0b100, 4),
    (0b010, 5),
    (0b001, 6),
];

fn syndrome(cw: &[u8]) -> u8 {
    let p = hamming_parity(&cw[..4]);
    ((p[0] ^ cw[4]) << 2) | ((p[1] ^ cw[5]) << 1) | (p[2] ^ cw[6])
}

fn error_position(s: u8) -> Option<usize> {
    SYNDROME_POSITION
        .iter()
        .find(|(col, _)| *col == s)
        .map(|&(_, pos)| pos)
}

pub fn fec_encode(bits: &[u8], cr: CodeRate) -> Result<Vec<u8>> {
    if !bits.len().is_multiple_of(4) {
        return Err(Error::LengthMismatch {
            expected: 4,
            got: bits.len(),
        });
    }
    let mut out = Vec::with_capacity(bits.len() / 4 * cr.codeword_len());
    for d in bits.chunks_exact(4) {
        out.extend_from_slice(d);
        match cr {
            CodeRate::Cr4_5 => out.push(d[0] ^ d[1] ^ d[2] ^ d[3]),
            CodeRate::Cr4_7 => out.extend_from_slice(&hamming_parity(d)),
            CodeRate::Cr4_8 => {
                let p = hamming_parity(d);
                out.extend_from_slice(&p);
                let overall = d.iter().chain(p.iter()).fold(0, |acc, b| acc ^ b);
                out.push(overall);
            }
        }
    }
    Ok(out)
}

pub fn fec_decode(code_bits: &[u8], cr: CodeRate) -> Result<DecodeReport> {
    let n = cr.codeword_len();
    if !code_bits.len().is_multiple_of(n) {
        return Err(Error::LengthMismatch {
            expected: n,
            got: code_bits.len(),
        });
    }
    let mut report = DecodeReport {
        bits: Vec::with_capacity(code_bits.len() / n * 4),
        ..Default::default()
    };
    for cw in code_bits.chunks_exact(n) {
        let mut cw: [u8; 8] = {
            let mut buf = [0u8; 8];
            buf[..n].copy_from_slice(cw);
            buf
        };
        match cr {
            CodeRate::Cr4_5 => {
                if cw[..5].iter().fold(0, |a, b| a ^ b) != 0 {
                    report.detected += 1;
                }
            }
            CodeRate::Cr4_7 => {
                let s = syndrome(&cw);
                if let Some(pos) = error_position(s) {
                    cw[pos] ^= 1;
                    report.corrected += 1;
                }
            }
            CodeRate::Cr4_8 => {
                let s = syndrome(&cw);
                let overall = cw.iter().fold(0, |a, b| a ^ b);
                match (s, overall) {
                    (0, 0) => {}
                    // Only the overall parity bit flipped.
                    (0, _) => report.corrected += 1,
                    (s, 1) => {
                        let pos = error_position(s).expect("non-zero syndrome");
                        cw[pos] ^= 1;
                        report.corrected += 1;
                    }
                    _ => report.detected += 1,
                }
            }
        }
        report.bits.extend_from_slice(&cw[..4]);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nibble(v: u8) -> Vec<u8> {
        (0..4).map(|i| (v >> i) & 1).collect()
    }

    #[test]
    fn zero_nibble_parity_code() {
        assert_eq!(
            fec_encode(&[0, 0, 0, 0], CodeRate::Cr4_5).unwrap(),
            vec![0; 5]
        );
        assert_eq!(
            fec_encode(&[1, 0, 0, 0], CodeRate::Cr4_5).unwrap(),
            vec![1, 0, 0, 0, 1]
        );
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(fec_encode(&[1, 0, 1], CodeRate::Cr4_8).is_err());
        assert!(fec_decode(&[0; 9], CodeRate::Cr4_8).is_err());
        assert!(fec_decode(&[0; 6], CodeRate::Cr4_5).is_err());
    }

    #[test]
    fn round_trip_all_nibbles() {
        for cr in [CodeRate::Cr4_5, CodeRate::Cr4_7, CodeRate::Cr4_8] {
            for v in 0..16 {
                let cw = fec_encode(&nibble(v), cr).unwrap();
                assert_eq!(cw.len(), cr.codeword_len());
                let dec = fec_decode(&cw, cr).unwrap();
                assert_eq!(dec.bits, nibble(v));
                assert_eq!((dec.corrected, dec.detected), (0, 0));
            }
        }
    }

    #[test]
    fn hamming_corrects_every_single_flip() {
        for cr in [CodeRate::Cr4_7, CodeRate::Cr4_8] {
            for v in 0..16 {
                let cw = fec_encode(&nibble(v), cr).unwrap();
                for pos in 0..cw.len() {
                    let mut bad = cw.clone();
                    bad[pos] ^= 1;
                    let dec = fec_decode(&bad, cr).unwrap();
                    assert_eq!(dec.bits, nibble(v), "{cr:?} value {v} flip {pos}");
                    assert_eq!(dec.corrected, 1);
                }
            }
        }
    }

    #[test]
    fn extended_hamming_detects_every_double_flip() {
        // Exhaustive: 16 codewords x 28 two-bit error patterns.
        let mut cases = 0;
        for v in 0..16 {
            let cw = fec_encode(&nibble(v), CodeRate::Cr4_8).unwrap();
            for i in 0..8 {
                for j in i + 1..8 {
                    let mut bad = cw.clone();
                    bad[i] ^= 1;
                    bad[j] ^= 1;
                    let dec = fec_decode(&bad, CodeRate::Cr4_8).unwrap();
                    assert_eq!(dec.detected, 1, "value {v} flips {i},{j}");
                    assert_eq!(dec.corrected, 0);
                    assert_eq!(dec.bits.len(), 4);
                    cases += 1;
                }
            }
        }
        assert_eq!(cases, 16 * 28);
    }

    #[test]
    fn parity_code_detects_single_flip() {
        let cw = fec_encode(&nibble(0b1011), CodeRate::Cr4_5).unwrap();
        for pos in 0..5 {
            let mut bad = cw.clone();
            bad[pos] ^= 1;
            assert_eq!(fec_decode(&bad, CodeRate::Cr4_5).unwrap().detected, 1);
        }
    }
}
