//! Model checkpoint: `RDMC`, u32 version, u32 header length, a JSON header
//! (topology, normalization, seed, tensor layout), then every tensor as
//! little-endian f32 in layout order. Weights are rounded to f32 on save.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{ClassifierModel, Network, Normalization, Topology};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RDMC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    topology: Topology,
    seed: u64,
    val_f1: Option<f64>,
    norm_nca: Normalization,
    norm_saa: Normalization,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn write_checkpoint_to<W: Write>(model: &ClassifierModel, mut w: W) -> Result<()> {
    model.validate()?;
    let header = Header {
        topology: model.topology.clone(),
        seed: model.seed,
        val_f1: model.val_f1,
        norm_nca: model.norm_nca.clone(),
        norm_saa: model.norm_saa.clone(),
        tensors: model
            .network
            .layout()
            .into_iter()
            .map(|(name, shape)| TensorEntry { name, shape })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let io = |e| Error::io("checkpoint", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    let mut buf = Vec::with_capacity(4 * model.network.parameter_count());
    for t in model.network.tensors() {
        for &v in t {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io)?;
    Ok(())
}

pub fn read_checkpoint_from<R: Read>(mut r: R) -> std::result::Result<ClassifierModel, String> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head).map_err(|e| format!("truncated header: {e}"))?;
    if &head[0..4] != MAGIC {
        return Err("not a model checkpoint".into());
    }
    let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let len = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|e| format!("truncated header: {e}"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| format!("header: {e}"))?;
    header.topology.validate().map_err(|e| e.to_string())?;
    let mut network = Network::zeros(&header.topology);
    let expected: Vec<TensorEntry> = network
        .layout()
        .into_iter()
        .map(|(name, shape)| TensorEntry { name, shape })
        .collect();
    if header.tensors != expected {
        return Err("tensor layout does not match topology".into());
    }
    for t in network.tensors_mut() {
        let mut bytes = vec![0u8; 4 * t.len()];
        r.read_exact(&mut bytes).map_err(|e| format!("truncated weights: {e}"))?;
        for (v, b) in t.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| e.to_string())?;
    if !rest.is_empty() {
        return Err(format!("{} trailing bytes", rest.len()));
    }
    let model = ClassifierModel {
        topology: header.topology,
        network,
        norm_nca: header.norm_nca,
        norm_saa: header.norm_saa,
        seed: header.seed,
        val_f1: header.val_f1,
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn write_checkpoint(model: &ClassifierModel, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint_to(model, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ClassifierModel> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint_from(std::io::BufReader::new(f)).map_err(|m| Error::parse(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact_after_first_save() {
        let mut m = ClassifierModel::new(Topology::default(), 42).unwrap();
        m.norm_nca.mean[3] = 0.1;
        m.norm_nca.scale[4] = 3.3;
        m.val_f1 = Some(0.875);
        let mut a = Vec::new();
        write_checkpoint_to(&m, &mut a).unwrap();
        let back = read_checkpoint_from(&a[..]).unwrap();
        assert_eq!(back.norm_nca, m.norm_nca);
        assert_eq!((back.seed, back.val_f1), (42, Some(0.875)));
        let mut b = Vec::new();
        write_checkpoint_to(&back, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(read_checkpoint_from(&b[..]).unwrap(), back);
        for (x, y) in m.network.tensors().iter().zip(back.network.tensors()) {
            for (u, v) in x.iter().zip(y) {
                assert_eq!(*u as f32 as f64, *v);
            }
        }
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = ClassifierModel::new(Topology::default(), 1).unwrap();
        let mut a = Vec::new();
        write_checkpoint_to(&m, &mut a).unwrap();
        assert!(read_checkpoint_from(&a[..a.len() - 1]).is_err());
        let mut extra = a.clone();
        extra.push(0);
        assert!(read_checkpoint_from(&extra[..]).is_err());
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(read_checkpoint_from(&bad[..]).is_err());
        let mut v2 = a.clone();
        v2[4] = 2;
        assert!(read_checkpoint_from(&v2[..]).unwrap_err().contains("version"));
    }
}
