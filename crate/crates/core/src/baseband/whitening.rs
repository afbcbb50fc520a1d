//! Data whitening with a fixed 8-bit LFSR (x^8 + x^6 + x^5 + x^4 + 1,
//! all-ones seed). Whitening is an XOR with the sequence, so the same
//! operation undoes it.

pub fn whitening_sequence(len: usize) -> Vec<u8> {
    let mut state: u8 = 0xFF;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(state & 1);
        let feedback = ((state >> 7) ^ (state >> 5) ^ (state >> 4) ^ (state >> 3)) & 1;
        state = (state << 1) | feedback;
    }
    out
}

pub fn whiten(bits: &[u8]) -> Vec<u8> {
    bits.iter()
        .zip(whitening_sequence(bits.len()))
        .map(|(b, w)| b ^ w)
        .collect()
}

pub fn dewhiten(bits: &[u8]) -> Vec<u8> {
    whiten(bits)
}
