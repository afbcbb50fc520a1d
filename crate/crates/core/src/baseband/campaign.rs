//! Monte-Carlo bit-error measurements through the full transceiver chain.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chirp::{awgn, modulate, Demodulator};
use super::fec::{fec_decode, fec_encode};
use super::gray::{gray_demap, gray_map};
use super::interleave::{deinterleave, interleave};
use super::whitening::{dewhiten, whiten};
use crate::engine::RngFactory;
use crate::linkmodel::{CodeRate, SpreadingFactor};
use crate::Result;

/// Error count for one `(sf, cr, snr)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerSample {
    pub sf: SpreadingFactor,
    pub cr: CodeRate,
    pub snr_db: f64,
    #[serde(rename = "bits")]
    pub bits_sent: u64,
    #[serde(rename = "errors")]
    pub bit_errors: u64,
}

impl BerSample {
    pub fn ber(&self) -> f64 {
        if self.bits_sent == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_sent as f64
        }
    }

    /// Wilson score interval at `z` standard deviations.
    pub fn confidence(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.bit_errors, self.bits_sent, z)
    }
}

pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Sender and receiver for one `(sf, cr)` pair. The unit of transmission is
/// an interleaver block: `4 * sf` information bits carried by
/// `codeword_len` chirps.
#[derive(Debug, Clone)]
pub struct Transceiver {
    sf: SpreadingFactor,
    cr: CodeRate,
    demod: Demodulator,
}

impl Transceiver {
    pub fn new(sf: SpreadingFactor, cr: CodeRate) -> Self {
        Self {
            sf,
            cr,
            demod: Demodulator::new(sf),
        }
    }

    pub fn block_bits(&self) -> usize {
        4 * self.ppm()
    }

    fn ppm(&self) -> usize {
        self.sf.value() as usize
    }

    /// Information bits to chirp symbol values.
    pub fn encode(&self, info_bits: &[u8]) -> Result<Vec<u32>> {
        let ppm = self.ppm();
        let code = fec_encode(info_bits, self.cr)?;
        let words = interleave(&code, self.cr, ppm)?;
        let white = whiten(&words_to_bits(&words, ppm));
        Ok(bits_to_words(&white, ppm)
            .into_iter()
            .map(gray_demap)
            .collect())
    }

    /// Symbol values back to information bits.
    pub fn decode(&self, symbols: &[u32]) -> Result<Vec<u8>> {
        let ppm = self.ppm();
        let words: Vec<u32> = symbols.iter().map(|&s| gray_map(s)).collect();
        let white = dewhiten(&words_to_bits(&words, ppm));
        let code = deinterleave(&bits_to_words(&white, ppm), self.cr, ppm)?;
        Ok(fec_decode(&code, self.cr)?.bits)
    }

    /// Passes information bits through modulation, the AWGN channel and
    /// detection. `snr_db = None` skips the channel.
    pub fn transfer<R: Rng + ?Sized>(
        &mut self,
        info_bits: &[u8],
        snr_db: Option<f64>,
        rng: &mut R,
    ) -> Result<Vec<u8>> {
        let symbols = self.encode(info_bits)?;
        let mut detected = Vec::with_capacity(symbols.len());
        for &s in &symbols {
            let tx = modulate(s, self.sf)?;
            let rx = match snr_db {
                Some(snr) => awgn(&tx, snr, rng),
                None => tx,
            };
            detected.push(self.demod.demodulate(&rx)?);
        }
        self.decode(&detected)
    }
}

fn words_to_bits(words: &[u32], ppm: usize) -> Vec<u8> {
    words
        .iter()
        .flat_map(|&w| (0..ppm).map(move |j| ((w >> j) & 1) as u8))
        .collect()
}

fn bits_to_words(bits: &[u8], ppm: usize) -> Vec<u32> {
    bits.chunks_exact(ppm)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0, |w, (j, &b)| w | ((b as u32) << j))
        })
        .collect()
}

/// Sends whole blocks of uniform random information bits until at least
/// `min_bits` have been sent, counting errors after decoding.
pub fn measure_ber<R: Rng + ?Sized>(
    sf: SpreadingFactor,
    cr: CodeRate,
    snr_db: f64,
    min_bits: u64,
    rng: &mut R,
) -> Result<BerSample> {
    let mut trx = Transceiver::new(sf, cr);
    let block = trx.block_bits();
    let mut sample = BerSample {
        sf,
        cr,
        snr_db,
        bits_sent: 0,
        bit_errors: 0,
    };
    let mut info = vec![0u8; block];
    while sample.bits_sent < min_bits.max(1) {
        for b in info.iter_mut() {
            *b = rng.random_range(0..2);
        }
        let out = trx.transfer(&info, Some(snr_db), rng)?;
        sample.bits_sent += block as u64;
        sample.bit_errors += info.iter().zip(&out).filter(|(a, b)| a != b).count() as u64;
    }
    Ok(sample)
}

/// Measures every point in parallel. Each point draws from its own stream,
/// so results do not depend on thread scheduling.
pub fn run_campaign(
    points: &[(SpreadingFactor, CodeRate, f64)],
    min_bits: u64,
    rngs: &RngFactory,
) -> Result<Vec<BerSample>> {
    points
        .par_iter()
        .map(|&(sf, cr, snr)| {
            let mut rng = rngs.stream(format!("ber/{sf}/cr{}/{snr:.3}", cr.index()));
            measure_ber(sf, cr, snr, min_bits, &mut rng)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SampleRow {
    sf: SpreadingFactor,
    cr: CodeRate,
    snr_db: f64,
    bits: u64,
    errors: u64,
    ber: f64,
}

pub fn write_samples_csv<W: Write>(samples: &[BerSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(SampleRow {
            sf: s.sf,
            cr: s.cr,
            snr_db: s.snr_db,
            bits: s.bits_sent,
            errors: s.bit_errors,
            ber: s.ber(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<BerSample>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: SampleRow = row?;
        out.push(BerSample {
            sf: row.sf,
            cr: row.cr,
            snr_db: row.snr_db,
            bits_sent: row.bits,
            bit_errors: row.errors,
        });
    }
    Ok(out)
}
