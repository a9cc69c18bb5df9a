//! Binary model serialization.
//!
//! Layout (everything little-endian):
//!   magic "FTXS" | version u32
//!   config:     dim u32 | epochs u32 | ngram_order u32 | loss u32
//!               | bucket u64 | min_count u64 | ntokens u64
//!   dictionary: nwords u32 | nlabels u32
//!               | per entry: byte-length u32, UTF-8 token, count u64
//!               (words first, then labels)
//!   matrices:   rows u64 | cols u64 | row-major f32 values    (A, then B)
//!
//! The Huffman tree is not stored; it is rebuilt deterministically from
//! the label counts on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::huffman::HuffmanTree;
use crate::model::{LossKind, Matrix, Model, ModelImpl};

const MAGIC: &[u8; 4] = b"FTXS";
const VERSION: u32 = 1;

/// Refuse any single allocation implied by an unvalidated length above
/// this many bytes.
pub const DEFAULT_ALLOC_CAP: u64 = 1 << 33;

pub struct LoadedModel {
    pub model: Model,
    pub dict: Dictionary,
    pub epochs: u32,
}

pub fn save<P: AsRef<Path>>(
    model: &Model,
    dict: &Dictionary,
    epochs: u32,
    path: P,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;

    w.write_all(&(model.dim() as u32).to_le_bytes())?;
    w.write_all(&epochs.to_le_bytes())?;
    w.write_all(&dict.ngram_order().to_le_bytes())?;
    let loss_tag: u32 = match model.loss_kind() {
        LossKind::FullSoftmax => 0,
        LossKind::HierarchicalSoftmax => 1,
    };
    w.write_all(&loss_tag.to_le_bytes())?;
    w.write_all(&dict.bucket().to_le_bytes())?;
    w.write_all(&dict.min_count().to_le_bytes())?;
    w.write_all(&dict.ntokens().to_le_bytes())?;

    w.write_all(&(dict.nwords() as u32).to_le_bytes())?;
    w.write_all(&(dict.nlabels() as u32).to_le_bytes())?;
    for (token, count) in dict.words().iter().chain(dict.labels()) {
        w.write_all(&(token.len() as u32).to_le_bytes())?;
        w.write_all(token.as_bytes())?;
        w.write_all(&count.to_le_bytes())?;
    }

    for m in [model.a(), model.b()] {
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<LoadedModel> {
    load_with_cap(path, DEFAULT_ALLOC_CAP)
}

pub fn load_with_cap<P: AsRef<Path>>(path: P, alloc_cap: u64) -> Result<LoadedModel> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }

    let dim = read_u32(&mut r)? as usize;
    let epochs = read_u32(&mut r)?;
    let ngram_order = read_u32(&mut r)?;
    let loss = match read_u32(&mut r)? {
        0 => LossKind::FullSoftmax,
        1 => LossKind::HierarchicalSoftmax,
        tag => return Err(Error::Format(format!("unknown loss tag {tag}"))),
    };
    let bucket = read_u64(&mut r)?;
    let min_count = read_u64(&mut r)?;
    let ntokens = read_u64(&mut r)?;

    let nwords = read_u32(&mut r)? as usize;
    let nlabels = read_u32(&mut r)? as usize;
    if nwords == 0 || nlabels == 0 {
        return Err(Error::Format("empty vocabulary or label set".into()));
    }
    let mut words = Vec::with_capacity(nwords);
    let mut labels = Vec::with_capacity(nlabels);
    for i in 0..nwords + nlabels {
        let len = read_u32(&mut r)? as u64;
        if len > alloc_cap {
            return Err(Error::Format(format!("token length {len} exceeds cap")));
        }
        let mut buf = vec![0u8; len as usize];
        read_exact(&mut r, &mut buf)?;
        let token = String::from_utf8(buf)
            .map_err(|_| Error::Format("malformed UTF-8 token".into()))?;
        let count = read_u64(&mut r)?;
        if i < nwords {
            words.push((token, count));
        } else {
            labels.push((token, count));
        }
    }
    let dict = Dictionary::from_parts(words, labels, bucket, ngram_order, min_count, ntokens);

    let a = read_matrix(&mut r, alloc_cap)?;
    let b = read_matrix(&mut r, alloc_cap)?;
    if a.rows() as u64 != dict.nfeatures() {
        return Err(Error::Format(format!(
            "input matrix has {} rows, dictionary implies {}",
            a.rows(),
            dict.nfeatures()
        )));
    }
    let expected_b = match loss {
        LossKind::FullSoftmax => nlabels,
        LossKind::HierarchicalSoftmax => nlabels - 1,
    };
    if b.rows() != expected_b {
        return Err(Error::Format(format!(
            "output matrix has {} rows, loss kind implies {expected_b}",
            b.rows()
        )));
    }
    if a.cols() != dim || b.cols() != dim {
        return Err(Error::Format("matrix width does not match dim".into()));
    }

    let tree = match loss {
        LossKind::HierarchicalSoftmax => Some(HuffmanTree::build(&dict.label_counts())?),
        LossKind::FullSoftmax => None,
    };
    Ok(LoadedModel {
        model: ModelImpl::from_parts(a, b, loss, tree),
        dict,
        epochs,
    })
}

fn read_matrix<R: Read>(r: &mut R, alloc_cap: u64) -> Result<Matrix<f32>> {
    let rows = read_u64(r)?;
    let cols = read_u64(r)?;
    let bytes = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("matrix shape overflows".into()))?;
    if bytes > alloc_cap {
        return Err(Error::Format(format!(
            "matrix of {bytes} bytes exceeds allocation cap {alloc_cap}"
        )));
    }
    let mut data = vec![0f32; (rows * cols) as usize];
    let mut buf = [0u8; 4];
    for v in data.iter_mut() {
        read_exact(r, &mut buf)?;
        *v = f32::from_le_bytes(buf);
    }
    Ok(Matrix::from_vec(rows as usize, cols as usize, data))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format("unexpected end of file".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{train, TrainConfig};
    use std::io::Write;

    fn trained(loss: Option<LossKind>) -> (crate::trainer::TrainOutput, TrainConfig) {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..30 {
            writeln!(f, "__label__{} w{} w{} common", i % 3, i % 7, (i * 3) % 7).unwrap();
        }
        f.flush().unwrap();
        let config = TrainConfig {
            dim: 5,
            epochs: 2,
            ngram_order: 2,
            bucket: Some(64),
            loss,
            ..TrainConfig::default()
        };
        (train(f.path(), &config).unwrap(), config)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for loss in [LossKind::FullSoftmax, LossKind::HierarchicalSoftmax] {
            let (out, config) = trained(Some(loss));
            let tmp = tempfile::NamedTempFile::new().unwrap();
            save(&out.model, &out.dict, config.epochs, tmp.path()).unwrap();
            let loaded = load(tmp.path()).unwrap();

            assert_eq!(loaded.dict, out.dict);
            assert_eq!(loaded.epochs, config.epochs);
            assert_eq!(loaded.model.loss_kind(), loss);
            assert_eq!(loaded.model.a().as_slice(), out.model.a().as_slice());
            assert_eq!(loaded.model.b().as_slice(), out.model.b().as_slice());
            if loss == LossKind::HierarchicalSoftmax {
                assert_eq!(loaded.model.tree(), out.model.tree());
            }
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (out, config) = trained(None);
        let t1 = tempfile::NamedTempFile::new().unwrap();
        save(&out.model, &out.dict, config.epochs, t1.path()).unwrap();
        let loaded = load(t1.path()).unwrap();
        let t2 = tempfile::NamedTempFile::new().unwrap();
        save(&loaded.model, &loaded.dict, loaded.epochs, t2.path()).unwrap();
        assert_eq!(
            std::fs::read(t1.path()).unwrap(),
            std::fs::read(t2.path()).unwrap()
        );
    }

    #[test]
    fn wrong_magic_is_a_distinct_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"NOPE....garbage").unwrap();
        assert!(matches!(load(f.path()), Err(Error::BadMagic)));
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let (out, config) = trained(None);
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save(&out.model, &out.dict, config.epochs, tmp.path()).unwrap();
        let bytes = std::fs::read(tmp.path()).unwrap();
        for cut in [5usize, 20, 60, bytes.len() - 3] {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            f.write_all(&bytes[..cut]).unwrap();
            assert!(
                matches!(load(f.path()), Err(Error::Format(_))),
                "cut at {cut} should fail"
            );
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let (out, config) = trained(None);
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save(&out.model, &out.dict, config.epochs, tmp.path()).unwrap();
        let mut bytes = std::fs::read(tmp.path()).unwrap();
        bytes[4] = 99;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&bytes).unwrap();
        assert!(matches!(load(f.path()), Err(Error::BadVersion(99))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (out, config) = trained(Some(LossKind::HierarchicalSoftmax));
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save(&out.model, &out.dict, config.epochs, tmp.path()).unwrap();
        let mut bytes = std::fs::read(tmp.path()).unwrap();
        // flip loss tag to full softmax: B rows no longer match k
        assert_eq!(bytes[20], 1);
        bytes[20] = 0;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&bytes).unwrap();
        assert!(matches!(load(f.path()), Err(Error::Format(_))));
    }

    #[test]
    fn allocation_cap_fails_fast() {
        let (out, config) = trained(None);
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save(&out.model, &out.dict, config.epochs, tmp.path()).unwrap();
        assert!(matches!(
            load_with_cap(tmp.path(), 16),
            Err(Error::Format(_))
        ));
    }
}
