//! Model file, all numbers little-endian:
//!
//! ```text
//! magic b"VCLM", version u32, kind u8 (0 logmel_stats, 1 imported_embedding),
//! D u32, H u32,
//! n_mels u32, window_ms u32, hop_ms u32, fmin_hz f64, fmax_hz f64, log_floor f64,
//! input_shift D x f64, input_scale D x f64,
//! parameters (W1, b1, W2, b2) f64,
//! n_epochs u32, selected_epoch u32, n_epochs x { train_loss f64, dev_uar f64 }
//! ```

use std::io::{Read, Write};

use crate::features::{FeatureConfig, FeatureKind};

use super::{ClassifierError, ClassifierModel, EpochLog, Mlp};

pub const MODEL_MAGIC: [u8; 4] = *b"VCLM";
pub const MODEL_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64s<W: Write>(w: &mut W, vs: &[f64]) -> std::io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model<W: Write>(m: &ClassifierModel, mut w: W) -> std::io::Result<()> {
    let fc = &m.feature_config;
    w.write_all(&MODEL_MAGIC)?;
    put_u32(&mut w, MODEL_VERSION)?;
    w.write_all(&[match fc.kind {
        FeatureKind::LogmelStats => 0,
        FeatureKind::ImportedEmbedding => 1,
    }])?;
    put_u32(&mut w, m.mlp.dim() as u32)?;
    put_u32(&mut w, m.mlp.hidden() as u32)?;
    put_u32(&mut w, fc.n_mels as u32)?;
    put_u32(&mut w, fc.window_ms)?;
    put_u32(&mut w, fc.hop_ms)?;
    put_f64s(&mut w, &[fc.fmin_hz, fc.fmax_hz, fc.log_floor])?;
    put_f64s(&mut w, &m.input_shift)?;
    put_f64s(&mut w, &m.input_scale)?;
    put_f64s(&mut w, m.mlp.params())?;
    put_u32(&mut w, m.training_log.len() as u32)?;
    put_u32(&mut w, m.selected_epoch as u32)?;
    for e in &m.training_log {
        put_f64s(&mut w, &[e.train_loss, e.dev_uar])?;
    }
    w.flush()
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], ClassifierError> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => ClassifierError::Format("truncated".into()),
            _ => e.into(),
        })?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, ClassifierError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, ClassifierError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ClassifierError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_model<R: Read>(r: R) -> Result<ClassifierModel, ClassifierError> {
    let bad = |m: &str| ClassifierError::Format(m.into());
    let mut r = Reader(r);
    if r.bytes::<4>()? != MODEL_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(ClassifierError::Format(format!("unsupported version {version}")));
    }
    let kind = match r.bytes::<1>()?[0] {
        0 => FeatureKind::LogmelStats,
        1 => FeatureKind::ImportedEmbedding,
        k => return Err(ClassifierError::Format(format!("unknown feature kind {k}"))),
    };
    let dim = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    if dim == 0 || dim > 1 << 20 || hidden > 1 << 20 {
        return Err(bad("implausible dimensions"));
    }
    let feature_config = FeatureConfig {
        kind,
        n_mels: r.u32()? as usize,
        window_ms: r.u32()?,
        hop_ms: r.u32()?,
        fmin_hz: r.f64()?,
        fmax_hz: r.f64()?,
        log_floor: r.f64()?,
    };
    let input_shift = r.f64s(dim)?;
    let input_scale = r.f64s(dim)?;
    let params = r.f64s(Mlp::n_params(dim, hidden))?;
    if params.iter().chain(&input_shift).chain(&input_scale).any(|v| !v.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    let n_epochs = r.u32()? as usize;
    let selected_epoch = r.u32()? as usize;
    let training_log = (1..=n_epochs)
        .map(|epoch| {
            Ok(EpochLog {
                epoch,
                train_loss: r.f64()?,
                dev_uar: r.f64()?,
            })
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    if selected_epoch > n_epochs {
        return Err(bad("selected epoch beyond training log"));
    }
    let mut trailing = [0u8; 1];
    if r.0.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(ClassifierModel {
        feature_config,
        input_shift,
        input_scale,
        mlp: Mlp::from_params(dim, hidden, params).expect("sized above"),
        training_log,
        selected_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn round_trip() {
        let mut rng = SeededRng::new(3);
        let mut m = ClassifierModel::from_mlp(FeatureConfig::default(), Mlp::init(6, 4, &mut rng));
        m.input_shift = vec![0.5; 6];
        m.training_log = vec![
            EpochLog { epoch: 1, train_loss: 1.2, dev_uar: 40.0 },
            EpochLog { epoch: 2, train_loss: 0.9, dev_uar: 55.5 },
        ];
        m.selected_epoch = 2;
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"VCLM");
        assert_eq!(read_model(&buf[..]).unwrap(), m);

        buf.push(0);
        assert!(read_model(&buf[..]).is_err());
        assert!(read_model(&buf[..40]).is_err());
    }
}
