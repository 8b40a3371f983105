//! Binary model file.
//!
//! ```text
//! magic "MDRX" | u32 version
//! config block: u64 epochs, lstm_hidden, d_w, d_p, d_c, d_pos, p_max,
//!               neg_samples, batch_size, seed; u64 class_weighting (0/1);
//!               f64 learning_rate, init_scale; u64 vocab sizes (words, pos, chunks)
//! tensors in declared order, each: u64 rows, u64 cols, rows*cols f64
//! ```
//! All integers and floats are little-endian.

use std::io::Write;
use std::path::Path;

use super::model::{BiLstmModel, Params, TableSizes, TrainConfig};
use super::NetworkError;

pub const MAGIC: &[u8; 4] = b"MDRX";
pub const FORMAT_VERSION: u32 = 1;

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn to_bytes(model: &BiLstmModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let c = &model.config;
    for v in [
        c.epochs,
        c.lstm_hidden,
        c.d_w,
        c.d_p,
        c.d_c,
        c.d_pos,
        c.p_max,
        c.neg_samples,
        c.batch_size,
    ] {
        put_u64(&mut buf, v as u64);
    }
    put_u64(&mut buf, c.seed);
    put_u64(&mut buf, c.class_weighting as u64);
    put_f64(&mut buf, c.learning_rate);
    put_f64(&mut buf, c.init_scale);
    let sizes = model.table_sizes();
    for v in [sizes.words, sizes.pos, sizes.chunks] {
        put_u64(&mut buf, v as u64);
    }
    for (_, _, (rows, cols), data) in model.params.tensors() {
        put_u64(&mut buf, rows as u64);
        put_u64(&mut buf, cols as u64);
        for &x in data {
            put_f64(&mut buf, x);
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NetworkError> {
        if self.bytes.len() - self.pos < n {
            return Err(NetworkError::Format(format!(
                "truncated model file: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, NetworkError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize, NetworkError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| NetworkError::Format(format!("size {v} out of range")))
    }

    fn f64(&mut self) -> Result<f64, NetworkError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<BiLstmModel, NetworkError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NetworkError::Format("bad magic header".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(NetworkError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let config = TrainConfig {
        epochs: r.usize()?,
        lstm_hidden: r.usize()?,
        d_w: r.usize()?,
        d_p: r.usize()?,
        d_c: r.usize()?,
        d_pos: r.usize()?,
        p_max: r.usize()?,
        neg_samples: r.usize()?,
        batch_size: r.usize()?,
        seed: r.u64()?,
        class_weighting: match r.u64()? {
            0 => false,
            1 => true,
            v => return Err(NetworkError::Format(format!("bad class_weighting flag {v}"))),
        },
        learning_rate: r.f64()?,
        init_scale: r.f64()?,
    };
    config.validate()?;
    let sizes = TableSizes {
        words: r.usize()?,
        pos: r.usize()?,
        chunks: r.usize()?,
    };
    let mut params = Params::zeros(&config, sizes);
    let shapes: Vec<(String, (usize, usize))> = params
        .tensors()
        .into_iter()
        .map(|(name, _, shape, _)| (name, shape))
        .collect();
    for ((name, shape), dst) in shapes.iter().zip(params.tensors_mut()) {
        let found = (r.usize()?, r.usize()?);
        if found != *shape {
            return Err(NetworkError::Format(format!(
                "tensor {name}: shape {found:?} does not match config {shape:?}"
            )));
        }
        for x in dst.iter_mut() {
            *x = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(NetworkError::Format(format!(
            "{} trailing bytes after tensors",
            bytes.len() - r.pos
        )));
    }
    Ok(BiLstmModel { config, params })
}

pub fn save_model(model: &BiLstmModel, path: &Path) -> Result<(), NetworkError> {
    let io = |source| NetworkError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&to_bytes(model)).map_err(io)
}

pub fn load_model(path: &Path) -> Result<BiLstmModel, NetworkError> {
    let bytes = std::fs::read(path).map_err(|source| NetworkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn model() -> BiLstmModel {
        let cfg = TrainConfig {
            lstm_hidden: 3,
            d_w: 4,
            d_p: 2,
            d_c: 2,
            d_pos: 2,
            p_max: 4,
            ..Default::default()
        };
        let sizes = TableSizes {
            words: 5,
            pos: 2,
            chunks: 2,
        };
        BiLstmModel::init(cfg, sizes, &mut ChaCha8Rng::seed_from_u64(4))
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = model();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = to_bytes(&model());
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(NetworkError::Format(_))));
        assert!(matches!(from_bytes(&bytes[..2]), Err(NetworkError::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(NetworkError::Format(_))));
        bytes[4] = 9;
        assert!(matches!(from_bytes(&bytes), Err(NetworkError::Version { found: 9, .. })));
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(NetworkError::Format(_))));
    }
}
