//! Versioned binary containers: model checkpoints and featurized-graph caches.
//!
//! Layout: 8-byte magic, u32 format version, u64 header length, a JSON
//! header, then little-endian payload. Float arrays are written bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureManifest, FeatureMask, FeaturizedGraph};
use crate::tensor::ParameterStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BMPNNCKP";
pub const CACHE_MAGIC: &[u8; 8] = b"BMPNNGRC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub manifest_hash: String,
    pub feature_mask: FeatureMask,
    pub model_spec: serde_json::Value,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub arrays: Vec<ArrayInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub data: Vec<Vec<f64>>,
}

const RUNNING_MEAN: &str = "running_mean:";
const RUNNING_VAR: &str = "running_var:";

fn write_frame(magic: &[u8; 8], header: &[u8], body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + header.len() + body.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(body);
    out
}

/// Split a frame into (header JSON bytes, payload).
fn read_frame<'a>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 20 || &bytes[..8] != magic {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let rest = &bytes[20..];
    if rest.len() < hlen {
        return Err(Error::Format("truncated header".into()));
    }
    Ok((&rest[..hlen], &rest[hlen..]))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn from_store(
        store: &ParameterStore,
        feature_mask: &FeatureMask,
        model_spec: serde_json::Value,
        metadata: serde_json::Value,
    ) -> Self {
        let mut arrays = Vec::new();
        let mut data = Vec::new();
        for p in store.params() {
            arrays.push(ArrayInfo {
                name: p.name.clone(),
                shape: vec![p.rows, p.cols],
            });
            data.push(p.value.clone());
        }
        for (name, rs) in &store.running {
            arrays.push(ArrayInfo {
                name: format!("{RUNNING_MEAN}{name}"),
                shape: vec![rs.mean.len()],
            });
            data.push(rs.mean.clone());
            arrays.push(ArrayInfo {
                name: format!("{RUNNING_VAR}{name}"),
                shape: vec![rs.var.len()],
            });
            data.push(rs.var.clone());
        }
        Checkpoint {
            header: CheckpointHeader {
                manifest_hash: FeatureManifest::current().hash(),
                feature_mask: feature_mask.clone(),
                model_spec,
                metadata,
                arrays,
            },
            data,
        }
    }

    /// Rebuild a parameter store (values and running statistics; optimizer
    /// moments start fresh).
    pub fn to_store(&self) -> Result<ParameterStore> {
        let mut store = ParameterStore::new();
        for (info, values) in self.header.arrays.iter().zip(&self.data) {
            if let Some(name) = info.name.strip_prefix(RUNNING_MEAN) {
                store.running_stats(name, values.len()).mean = values.clone();
            } else if let Some(name) = info.name.strip_prefix(RUNNING_VAR) {
                store.running_stats(name, values.len()).var = values.clone();
            } else {
                let [rows, cols] = info.shape[..] else {
                    return Err(Error::Format(format!("parameter `{}` is not 2-D", info.name)));
                };
                store.insert(&info.name, rows, cols, values.clone());
            }
        }
        Ok(store)
    }

    pub fn check_manifest(&self) -> Result<()> {
        let current = FeatureManifest::current().hash();
        if self.header.manifest_hash != current {
            return Err(Error::ManifestMismatch {
                expected: current,
                found: self.header.manifest_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut body = Vec::new();
        for d in &self.data {
            put_f64s(&mut body, d);
        }
        write_frame(CHECKPOINT_MAGIC, &header, &body)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, body) = read_frame(CHECKPOINT_MAGIC, bytes)?;
        let header: CheckpointHeader = serde_json::from_slice(h)?;
        let mut r = Reader { buf: body, pos: 0 };
        let mut data = Vec::with_capacity(header.arrays.len());
        for info in &header.arrays {
            data.push(r.f64s(info.shape.iter().product())?);
        }
        if !r.done() {
            return Err(Error::Format("trailing bytes after arrays".into()));
        }
        Ok(Checkpoint { header, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub manifest: FeatureManifest,
    pub manifest_hash: String,
    pub feature_mask: FeatureMask,
    pub count: usize,
    /// Geometry arm the cache was built with (`2d`, `3d`, `noisy3d:σ`).
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphCache {
    pub header: CacheHeader,
    pub graphs: Vec<FeaturizedGraph>,
}

impl GraphCache {
    pub fn new(mask: &FeatureMask, mode: &str, graphs: Vec<FeaturizedGraph>) -> Self {
        let manifest = FeatureManifest::current();
        GraphCache {
            header: CacheHeader {
                manifest_hash: manifest.hash(),
                manifest,
                feature_mask: mask.clone(),
                count: graphs.len(),
                mode: mode.to_string(),
            },
            graphs,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut body = Vec::new();
        for g in &self.graphs {
            put_str(&mut body, &g.name);
            put_str(&mut body, &g.smiles);
            for n in [g.n_atoms, g.edge_index.len(), g.x.len(), g.edge_attr.len(), g.u.len()] {
                body.extend_from_slice(&(n as u64).to_le_bytes());
            }
            match g.y {
                Some(y) => {
                    body.push(1);
                    body.extend_from_slice(&y.to_le_bytes());
                }
                None => body.push(0),
            }
            for e in &g.edge_index {
                body.extend_from_slice(&(e[0] as u64).to_le_bytes());
                body.extend_from_slice(&(e[1] as u64).to_le_bytes());
            }
            put_f64s(&mut body, &g.x);
            put_f64s(&mut body, &g.edge_attr);
            put_f64s(&mut body, &g.u);
        }
        write_frame(CACHE_MAGIC, &header, &body)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, body) = read_frame(CACHE_MAGIC, bytes)?;
        let header: CacheHeader = serde_json::from_slice(h)?;
        let mut r = Reader { buf: body, pos: 0 };
        let mut graphs = Vec::with_capacity(header.count);
        for _ in 0..header.count {
            let name = r.string()?;
            let smiles = r.string()?;
            let n_atoms = r.u64()? as usize;
            let n_edges = r.u64()? as usize;
            let (nx, ne, nu) = (r.u64()? as usize, r.u64()? as usize, r.u64()? as usize);
            let y = match r.take(1)?[0] {
                0 => None,
                1 => Some(r.f64s(1)?[0]),
                t => return Err(Error::Format(format!("bad label tag {t}"))),
            };
            let mut edge_index = Vec::with_capacity(n_edges);
            for _ in 0..n_edges {
                let (a, b) = (r.u64()? as usize, r.u64()? as usize);
                if a >= n_atoms || b >= n_atoms {
                    return Err(Error::Format(format!("edge ({a},{b}) outside {n_atoms} atoms")));
                }
                edge_index.push([a, b]);
            }
            let x = r.f64s(nx)?;
            let edge_attr = r.f64s(ne)?;
            let u = r.f64s(nu)?;
            let mask = &header.feature_mask;
            if nx != n_atoms * mask.atom_dim()
                || ne != n_edges * mask.bond_dim()
                || nu != mask.global_dim()
            {
                return Err(Error::Format(format!("graph `{name}` arrays disagree with the mask")));
            }
            graphs.push(FeaturizedGraph {
                x,
                edge_index,
                edge_attr,
                u,
                y,
                n_atoms,
                feature_mask: mask.clone(),
                name,
                smiles,
            });
        }
        if !r.done() {
            return Err(Error::Format("trailing bytes after graphs".into()));
        }
        Ok(GraphCache { header, graphs })
    }

    pub fn check_manifest(&self) -> Result<()> {
        let current = FeatureManifest::current().hash();
        if self.header.manifest_hash != current {
            return Err(Error::ManifestMismatch {
                expected: current,
                found: self.header.manifest_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
