//! Power spectra and dominant-frequency phase.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::MetricsError;
use crate::correspondence::{project_channels, CorrespondenceMap};
use crate::motion::Motion;

fn spectrum(signal: &[f64], window: bool) -> Vec<Complex<f64>> {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n.max(1) as f64;
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = if window {
                0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()
            } else {
                1.0
            };
            Complex::new((x - mean) * w, 0.0)
        })
        .collect();
    if n > 0 {
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    }
    buf
}

/// One-sided periodogram of the mean-removed, Hann-windowed signal, bins
/// `0..=n/2`.
pub fn psd(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    spectrum(signal, true)
        .into_iter()
        .take(n / 2 + 1)
        .map(|c| c.norm_sqr() / n as f64)
        .collect()
}

/// Cosine similarity of two PSDs; two flat signals count as identical and a
/// flat signal against a non-flat one as unrelated.
pub fn psd_cosine(a: &[f64], b: &[f64]) -> f64 {
    let pa = psd(a);
    let pb = psd(b);
    let na = pa.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = pb.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tiny = 1e-24;
    match (na > tiny, nb > tiny) {
        (false, false) => 1.0,
        (true, true) => pa.iter().zip(&pb).map(|(x, y)| x * y).sum::<f64>() / (na * nb),
        _ => 0.0,
    }
}

/// `100 x` mean PSD cosine over the channels flagged in `mask`.
pub fn frequency_alignment_channels(
    source: &Array2<f64>,
    result: &Array2<f64>,
    mask: &[bool],
) -> Result<f64, MetricsError> {
    if source.nrows() != result.nrows() {
        return Err(MetricsError::LengthMismatch {
            left: source.nrows(),
            right: result.nrows(),
        });
    }
    let channels: Vec<usize> = (0..mask.len()).filter(|&c| mask[c]).collect();
    if channels.is_empty() {
        return Err(MetricsError::NoBoundChannels);
    }
    let total: f64 = channels
        .iter()
        .map(|&c| psd_cosine(&source.column(c).to_vec(), &result.column(c).to_vec()))
        .sum();
    Ok(100.0 * total / channels.len() as f64)
}

/// PSD agreement between the source, carried through the correspondence
/// map, and the result on every bound target channel.
pub fn frequency_alignment(source: &Motion, result: &Motion, map: &CorrespondenceMap) -> Result<f64, MetricsError> {
    if source.frames() != result.frames() {
        return Err(MetricsError::LengthMismatch {
            left: source.frames(),
            right: result.frames(),
        });
    }
    let projected = project_channels(&source.features, map)?;
    frequency_alignment_channels(&projected, &result.features, map.mask())
}

/// Bin in `1..=n/2` with the largest FFT amplitude and that bin's phase.
/// Ties resolve to the lower bin.
pub fn dominant_phase(signal: &[f64]) -> Result<(usize, f64), MetricsError> {
    let n = signal.len();
    if n < 8 {
        return Err(MetricsError::TooShort(n));
    }
    let spec = spectrum(signal, false);
    let mut best = 1;
    for k in 2..=n / 2 {
        if spec[k].norm() > spec[best].norm() {
            best = k;
        }
    }
    if spec[best].norm() < 1e-9 {
        return Err(MetricsError::FlatSignal);
    }
    Ok((best, spec[best].arg()))
}

/// Phase of a given bin of the mean-removed signal.
pub fn phase_at(signal: &[f64], bin: usize) -> Result<f64, MetricsError> {
    let n = signal.len();
    if n < 8 {
        return Err(MetricsError::TooShort(n));
    }
    let spec = spectrum(signal, false);
    let c = spec[bin.min(n - 1)];
    if c.norm() < 1e-9 {
        return Err(MetricsError::FlatSignal);
    }
    Ok(c.arg())
}
