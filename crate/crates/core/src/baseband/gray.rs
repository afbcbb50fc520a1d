//! Binary-reflected Gray code.
//!
//! The transmitter applies the inverse Gray map to each whitened word so that
//! neighbouring chirp offsets (the most likely demodulation errors) differ in
//! a single bit after the receiver's forward Gray map.

/// Symbol value to Gray-coded word.
pub fn gray_map(symbol_value: u32) -> u32 {
    symbol_value ^ (symbol_value >> 1)
}

/// Gray-coded word back to the symbol value.
pub fn gray_demap(word: u32) -> u32 {
    let mut v = word;
    let mut shift = 1;
    while shift < 32 {
        v ^= v >> shift;
        shift <<= 1;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_zero() {
        assert_eq!(gray_map(0), 0);
        assert_eq!(gray_demap(0), 0);
    }

    #[test]
    fn exhaustive_round_trip_sf7() {
        let mut seen = [false; 128];
        for v in 0..128u32 {
            let w = gray_map(v);
            assert!(w < 128);
            assert!(!seen[w as usize]);
            seen[w as usize] = true;
            assert_eq!(gray_demap(w), v);
            assert_eq!(gray_map(gray_demap(v)), v);
        }
    }

    #[test]
    fn adjacent_values_differ_in_one_bit() {
        for sf in 7..=12 {
            let n = 1u32 << sf;
            for k in 0..n {
                let next = (k + 1) % n;
                assert_eq!(
                    (gray_map(k) ^ gray_map(next)).count_ones(),
                    1,
                    "sf {sf} k {k}"
                );
            }
        }
    }
}
