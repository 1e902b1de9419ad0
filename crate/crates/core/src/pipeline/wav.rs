use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use crate::error::{Error, Result};

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| match source {
        hound::Error::IoError(e) => Error::io(path, e),
        source => Error::Wav {
            path: path.to_path_buf(),
            source,
        },
    }
}

/// Read a multichannel WAV as `[samples x channels]` in [-1, 1].
///
/// Accepts integer PCM at 16, 24 or 32 bits and 32-bit float.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Array2<f64>, u32)> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err(path))?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => return Err(Error::UnsupportedWav(format!("{}: {bits}-bit {fmt:?}", path.display()))),
    };
    if channels == 0 {
        return Err(Error::UnsupportedWav(format!("{}: no channels", path.display())));
    }
    let frames = samples.len() / channels;
    let data = Array2::from_shape_vec((frames, channels), samples[..frames * channels].to_vec())
        .expect("interleaved length matches shape");
    Ok((data, spec.sample_rate))
}

/// Write `[samples x channels]` as 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, data: &Array2<f64>, sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: data.ncols() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for row in data.rows() {
        for &v in row {
            writer.write_sample(v as f32).map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}

pub fn write_mono(path: impl AsRef<Path>, data: &[f64], sample_rate: u32) -> Result<()> {
    let col = Array2::from_shape_vec((data.len(), 1), data.to_vec()).expect("column shape");
    write_wav(path, &col, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let data = Array2::from_shape_fn((100, 3), |(t, c)| ((t * 3 + c) as f64 * 0.01).sin() * 0.5);
        write_wav(&p, &data, 16000).unwrap();
        let (back, sr) = read_wav(&p).unwrap();
        assert_eq!(sr, 16000);
        assert_eq!(back.dim(), (100, 3));
        for (a, b) in back.iter().zip(data.iter()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn integer_formats_scale_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        for bits in [16u16, 24, 32] {
            let p = dir.path().join(format!("i{bits}.wav"));
            let spec = WavSpec {
                channels: 2,
                sample_rate: 8000,
                bits_per_sample: bits,
                sample_format: SampleFormat::Int,
            };
            let full = (1i64 << (bits - 1)) as f64;
            let mut w = WavWriter::create(&p, spec).unwrap();
            for v in [0.5, -0.25, -1.0, 0.0] {
                w.write_sample((v * full) as i32).unwrap();
            }
            w.finalize().unwrap();
            let (x, sr) = read_wav(&p).unwrap();
            assert_eq!(sr, 8000);
            assert_eq!(x.dim(), (2, 2));
            assert_eq!(x[[0, 0]], 0.5);
            assert_eq!(x[[0, 1]], -0.25);
            assert_eq!(x[[1, 0]], -1.0);
        }
    }

    #[test]
    fn unsupported_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u8.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedWav(_))));
        assert!(matches!(read_wav(dir.path().join("none.wav")), Err(Error::Io { .. })));
    }
}
