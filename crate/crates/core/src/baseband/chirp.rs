//! Chirp modulation, AWGN and correlation demodulation at one sample per chip.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linkmodel::SpreadingFactor;
use crate::{Error, Result};

/// Samples of the up-chirp carrying `value`.
///
/// The phase accumulator starts at `-pi` and adds the instantaneous frequency
/// `-pi + 2*pi*((i + value) mod N) / N` at each sample: the base chirp's
/// frequency law, cyclically shifted in time by `value` chips.
pub fn modulate(value: u32, sf: SpreadingFactor) -> Result<Vec<Complex64>> {
    let n = sf.chips() as u32;
    if value >= n {
        return Err(Error::OutOfRange { value, limit: n });
    }
    let n = n as usize;
    let mut samples = Vec::with_capacity(n);
    let mut phase = -PI;
    samples.push(Complex64::from_polar(1.0, phase));
    for i in 1..n {
        let freq = -PI + TAU * ((i + value as usize) % n) as f64 / n as f64;
        phase = (phase + freq).rem_euclid(TAU);
        samples.push(Complex64::from_polar(1.0, phase));
    }
    Ok(samples)
}

/// Adds complex white Gaussian noise for an energy per symbol sample of one:
/// each component has standard deviation `sqrt(1 / (2 * snr))`.
pub fn awgn<R: Rng + ?Sized>(samples: &[Complex64], snr_db: f64, rng: &mut R) -> Vec<Complex64> {
    let snr = 10f64.powf(snr_db / 10.0);
    let sigma = (1.0 / (2.0 * snr)).sqrt();
    samples
        .iter()
        .map(|s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(sigma * re, sigma * im)
        })
        .collect()
}

/// Correlation of `samples` with the reference chirp for `value`.
pub fn correlate(samples: &[Complex64], value: u32, sf: SpreadingFactor) -> Result<Complex64> {
    let reference = modulate(value, sf)?;
    if samples.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            got: samples.len(),
        });
    }
    Ok(samples
        .iter()
        .zip(&reference)
        .map(|(r, s)| r * s.conj())
        .sum())
}

/// Maximum-correlation detector over all `2^sf` reference chirps.
///
/// Reference chirp `k` equals the base chirp times `exp(j*2*pi*k*i/N)`, so the
/// bank is stored as one conjugated base chirp plus an `N`-entry phase table
/// instead of `N` full chirps.
#[derive(Debug, Clone)]
pub struct Demodulator {
    sf: SpreadingFactor,
    base_conj: Vec<Complex64>,
    phase_conj: Vec<Complex64>,
    dechirped: Vec<Complex64>,
}

impl Demodulator {
    pub fn new(sf: SpreadingFactor) -> Self {
        let n = sf.chips();
        let base_conj = modulate(0, sf)
            .expect("zero is always in range")
            .into_iter()
            .map(|s| s.conj())
            .collect();
        let phase_conj = (0..n)
            .map(|m| Complex64::from_polar(1.0, -TAU * m as f64 / n as f64))
            .collect();
        Self {
            sf,
            base_conj,
            phase_conj,
            dechirped: vec![Complex64::default(); n],
        }
    }

    pub fn sf(&self) -> SpreadingFactor {
        self.sf
    }

    /// Symbol value with the largest correlation magnitude; ties go to the
    /// lowest value.
    pub fn demodulate(&mut self, samples: &[Complex64]) -> Result<u32> {
        let n = self.base_conj.len();
        if samples.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: samples.len(),
            });
        }
        for ((d, r), b) in self.dechirped.iter_mut().zip(samples).zip(&self.base_conj) {
            *d = r * b;
        }
        let mask = n - 1;
        let mut best = 0u32;
        let mut best_mag = f64::NEG_INFINITY;
        for k in 0..n {
            let mut acc = Complex64::default();
            for (i, d) in self.dechirped.iter().enumerate() {
                acc += d * self.phase_conj[(k * i) & mask];
            }
            let mag = acc.norm_sqr();
            if mag > best_mag {
                best_mag = mag;
                best = k as u32;
            }
        }
        Ok(best)
    }
}

/// One-shot convenience wrapper around [`Demodulator`].
pub fn demodulate(samples: &[Complex64], sf: SpreadingFactor) -> Result<u32> {
    Demodulator::new(sf).demodulate(samples)
}
