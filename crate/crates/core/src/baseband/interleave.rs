//! Diagonal block interleaver.
//!
//! A block holds `ppm` consecutive codewords of `L` bits. Output word `k`
//! gathers bit position `k` of each codeword, bit `j` of the word coming from
//! codeword `j`. One corrupted word therefore becomes a single-bit error in
//! each of the `ppm` codewords.

use crate::linkmodel::CodeRate;
use crate::{Error, Result};

pub fn interleave(code_bits: &[u8], cr: CodeRate, ppm: usize) -> Result<Vec<u32>> {
    let len = cr.codeword_len();
    let block = len * ppm;
    if ppm == 0 || !code_bits.len().is_multiple_of(block) {
        return Err(Error::LengthMismatch {
            expected: block,
            got: code_bits.len(),
        });
    }
    let mut words = Vec::with_capacity(code_bits.len() / ppm);
    for blk in code_bits.chunks_exact(block) {
        for k in 0..len {
            let word = (0..ppm).fold(0u32, |w, j| w | ((blk[j * len + k] as u32) << j));
            words.push(word);
        }
    }
    Ok(words)
}

pub fn deinterleave(words: &[u32], cr: CodeRate, ppm: usize) -> Result<Vec<u8>> {
    let len = cr.codeword_len();
    if ppm == 0 || !words.len().is_multiple_of(len) {
        return Err(Error::LengthMismatch {
            expected: len,
            got: words.len(),
        });
    }
    let mut bits = vec![0u8; words.len() * ppm];
    for (b, blk) in words.chunks_exact(len).enumerate() {
        let base = b * len * ppm;
        for (k, &word) in blk.iter().enumerate() {
            for j in 0..ppm {
                bits[base + j * len + k] = ((word >> j) & 1) as u8;
            }
        }
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_word_collects_position_zero() {
        let ppm = 7;
        let cr = CodeRate::Cr4_8;
        // Codeword j has a 1 at position 0 only for odd j.
        let mut bits = vec![0u8; ppm * 8];
        for j in 0..ppm {
            bits[j * 8] = (j % 2) as u8;
        }
        let words = interleave(&bits, cr, ppm).unwrap();
        assert_eq!(words.len(), 8);
        assert_eq!(words[0], 0b0101010);
        assert!(words[1..].iter().all(|&w| w == 0));
    }

    #[test]
    fn incomplete_block_rejected() {
        assert!(interleave(&[0; 34], CodeRate::Cr4_5, 7).is_err());
        assert!(deinterleave(&[0; 4], CodeRate::Cr4_5, 7).is_err());
    }

    #[test]
    fn one_bad_word_spreads_to_one_bit_per_codeword() {
        for ppm in 7..=12 {
            for cr in [CodeRate::Cr4_5, CodeRate::Cr4_7, CodeRate::Cr4_8] {
                let len = cr.codeword_len();
                let bits: Vec<u8> = (0..ppm * len)
                    .map(|i| ((i * 13 + 5) % 3 == 0) as u8)
                    .collect();
                let words = interleave(&bits, cr, ppm).unwrap();
                for bad in 0..len {
                    let mut corrupted = words.clone();
                    corrupted[bad] ^= (1 << ppm) - 1;
                    let back = deinterleave(&corrupted, cr, ppm).unwrap();
                    for j in 0..ppm {
                        let errs = (0..len)
                            .filter(|&k| back[j * len + k] != bits[j * len + k])
                            .count();
                        assert_eq!(errs, 1, "ppm {ppm} cw {j}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip(ppm in 7usize..=12, cr_idx in 1u8..=3, blocks in 1usize..4, seed in any::<u64>()) {
            let cr = CodeRate::from_index(cr_idx).unwrap();
            let n = ppm * cr.codeword_len() * blocks;
            let bits: Vec<u8> = (0..n).map(|i| ((seed >> (i % 64)) & 1) as u8 ^ (i % 5 == 0) as u8).collect();
            let words = interleave(&bits, cr, ppm).unwrap();
            prop_assert!(words.iter().all(|&w| w < (1 << ppm)));
            prop_assert_eq!(deinterleave(&words, cr, ppm).unwrap(), bits);
        }
    }
}
