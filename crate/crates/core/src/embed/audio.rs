use std::f64::consts::PI;
use std::path::Path;

use super::EmbedError;

pub const TARGET_RATE: u32 = 16_000;

/// Zero crossings of the sinc kernel on each side, at the output cutoff.
const HALF_TAPS: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, rate: u32) -> Self {
        Self { samples, rate }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.samples.len() * 4);
        out.extend_from_slice(&self.rate.to_le_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(x: f64, half_width: f64) -> f64 {
    // x in [-half_width, half_width]
    let t = (x + half_width) / (2.0 * half_width);
    0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos()
}

/// Band-limited resampling to 16 kHz with a Blackman-windowed sinc kernel.
///
/// Output length is `round(n · 16000 / rate)`; input already at 16 kHz is
/// returned unchanged.
pub fn resample_audio(wave: &Waveform) -> Result<Waveform, EmbedError> {
    resample_to(wave, TARGET_RATE)
}

pub fn resample_to(wave: &Waveform, target: u32) -> Result<Waveform, EmbedError> {
    if wave.samples.is_empty() {
        return Err(EmbedError::Audio("empty waveform".into()));
    }
    if wave.rate == 0 || target == 0 {
        return Err(EmbedError::Audio("sample rate must be positive".into()));
    }
    if wave.samples.iter().any(|s| !s.is_finite()) {
        return Err(EmbedError::Audio("non-finite sample".into()));
    }
    if wave.rate == target {
        return Ok(wave.clone());
    }

    let ratio = target as f64 / wave.rate as f64;
    let cutoff = ratio.min(1.0);
    let half_width = HALF_TAPS / cutoff;
    let n_in = wave.samples.len();
    let n_out = ((n_in as f64) * ratio).round().max(1.0) as usize;
    let step = wave.rate as f64 / target as f64;

    let samples = (0..n_out)
        .map(|j| {
            let t = j as f64 * step;
            let lo = ((t - half_width).ceil().max(0.0)) as usize;
            let hi = ((t + half_width).floor() as usize).min(n_in - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                let x = t - k as f64;
                acc += wave.samples[k] as f64 * cutoff * sinc(cutoff * x) * blackman(x, half_width);
            }
            acc as f32
        })
        .collect();
    Ok(Waveform::new(samples, target))
}

/// Reads a WAV file and mixes it down to mono in [-1, 1].
pub fn read_wav(path: &Path) -> Result<Waveform, EmbedError> {
    let mut reader =
        hound::WavReader::open(path).map_err(|e| EmbedError::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| EmbedError::Audio(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| EmbedError::Audio(e.to_string()))?
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    Ok(Waveform::new(samples, spec.sample_rate))
}

#[cfg(test)]
mod tests {
    use rustfft::{num_complex::Complex, FftPlanner};

    use super::*;

    fn tone(freq: f64, rate: u32, secs: f64) -> Waveform {
        let n = (rate as f64 * secs).round() as usize;
        let samples = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin() as f32)
            .collect();
        Waveform::new(samples, rate)
    }

    /// Frequency of the largest FFT bin, in Hz.
    fn dominant_frequency(wave: &Waveform) -> f64 {
        let mut buf: Vec<Complex<f64>> = wave
            .samples
            .iter()
            .map(|&s| Complex::new(s as f64, 0.0))
            .collect();
        let n = buf.len();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (bin, _) = buf[..n / 2]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        bin as f64 * wave.rate as f64 / n as f64
    }

    #[test]
    fn identity_rate_is_bit_identical() {
        let w = tone(440.0, 16_000, 0.1);
        let out = resample_audio(&w).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn downsampling_keeps_the_tone() {
        let w = tone(440.0, 32_000, 1.0);
        let out = resample_audio(&w).unwrap();
        assert_eq!(out.rate, 16_000);
        assert_eq!(out.samples.len(), 16_000);
        assert!((dominant_frequency(&out) - 440.0).abs() <= 1.0);
    }

    #[test]
    fn upsampling_length() {
        let w = tone(200.0, 8_000, 0.5);
        let out = resample_audio(&w).unwrap();
        assert_eq!(out.samples.len(), 8_000);
        assert!((out.duration_secs() - w.duration_secs()).abs() <= 1.0 / 16_000.0);
        assert!((dominant_frequency(&out) - 200.0).abs() <= 2.0);
    }

    #[test]
    fn odd_rates_preserve_duration_within_a_sample() {
        for rate in [11_025, 22_050, 44_100, 48_000] {
            let w = tone(300.0, rate, 0.37);
            let out = resample_audio(&w).unwrap();
            assert!((out.duration_secs() - w.duration_secs()).abs() <= 1.0 / 16_000.0, "{rate}");
        }
    }

    #[test]
    fn downsampling_suppresses_content_above_new_nyquist() {
        // 12 kHz is above 8 kHz Nyquist of the output and must be filtered
        let w = tone(12_000.0, 48_000, 0.25);
        let out = resample_audio(&w).unwrap();
        let rms = (out.samples.iter().map(|s| s * s).sum::<f32>() / out.samples.len() as f32).sqrt();
        assert!(rms < 0.02, "rms {rms}");
    }

    #[test]
    fn errors() {
        assert!(resample_audio(&Waveform::new(vec![], 8_000)).is_err());
        assert!(resample_audio(&Waveform::new(vec![0.0], 0)).is_err());
        assert!(resample_audio(&Waveform::new(vec![f32::NAN], 8_000)).is_err());
    }

    #[test]
    fn wav_is_mixed_to_mono() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(16384i16).unwrap();
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let wave = read_wav(&path).unwrap();
        assert_eq!(wave.rate, 8_000);
        assert_eq!(wave.samples.len(), 10);
        assert!((wave.samples[0] - 0.25).abs() < 1e-6);
    }
}
