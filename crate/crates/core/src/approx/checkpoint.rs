//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "PDTSCKPT"
//! version    u32
//! header_len u32
//! header     header_len bytes of UTF-8 JSON
//! payload    f64 values: each network in flatten order, then each block
//! ```
//!
//! The JSON header carries free-form metadata, the layer shapes, activation
//! names and seed of every network, and the name and length of every extra
//! block, which is enough to size and validate the payload before reading it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerShape, Mlp};
use crate::error::CheckpointError;

pub const MAGIC: &[u8; 8] = b"PDTSCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedNetwork {
    pub name: String,
    pub seed: u64,
    pub net: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub networks: Vec<NamedNetwork>,
    /// Extra flat f64 payloads such as optimizer moments.
    pub blocks: Vec<(String, Vec<f64>)>,
}

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    seed: u64,
    layers: Vec<LayerShape>,
}

#[derive(Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    networks: Vec<NetworkHeader>,
    blocks: Vec<BlockHeader>,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Result<&Mlp, CheckpointError> {
        self.networks
            .iter()
            .find(|n| n.name == name)
            .map(|n| &n.net)
            .ok_or_else(|| CheckpointError::Shape(format!("missing network `{name}`")))
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            meta: self.meta.clone(),
            networks: self
                .networks
                .iter()
                .map(|n| NetworkHeader { name: n.name.clone(), seed: n.seed, layers: n.net.shapes() })
                .collect(),
            blocks: self
                .blocks
                .iter()
                .map(|(name, v)| BlockHeader { name: name.clone(), len: v.len() })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header is plain data");
        let mut out = Vec::with_capacity(16 + header.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let values = self
            .networks
            .iter()
            .flat_map(|n| n.net.flatten())
            .chain(self.blocks.iter().flat_map(|(_, v)| v.iter().copied()));
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| CheckpointError::Header("header extends past end of file".into()))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| CheckpointError::Header(e.to_string()))?;

        let mut networks = Vec::with_capacity(header.networks.len());
        for n in &header.networks {
            let net = Mlp::zeros(&n.layers).map_err(|e| CheckpointError::Shape(format!("network `{}`: {e}", n.name)))?;
            networks.push((n, net));
        }
        let expected_values: usize = networks.iter().map(|(_, net)| net.param_count()).sum::<usize>()
            + header.blocks.iter().map(|b| b.len).sum::<usize>();
        let payload = &bytes[header_end..];
        let expected_bytes = expected_values * 8;
        if payload.len() < expected_bytes {
            return Err(CheckpointError::Truncated { expected: expected_bytes, found: payload.len() });
        }
        if payload.len() > expected_bytes {
            return Err(CheckpointError::Shape(format!(
                "{} trailing bytes after parameters",
                payload.len() - expected_bytes
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();

        let networks = networks
            .into_iter()
            .map(|(h, mut net)| {
                let params = take(net.param_count());
                net.unflatten(&params).expect("sized from header");
                NamedNetwork { name: h.name.clone(), seed: h.seed, net }
            })
            .collect();
        let blocks = header.blocks.iter().map(|b| (b.name.clone(), take(b.len))).collect();
        Ok(Checkpoint { meta: header.meta, networks, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::Activation;

    fn sample() -> Checkpoint {
        Checkpoint {
            meta: serde_json::json!({ "algorithm": "ppo", "steps": 12 }),
            networks: vec![
                NamedNetwork { name: "actor".into(), seed: 5, net: Mlp::new(&[4, 3, 2], Activation::Tanh, 1.0, 5) },
                NamedNetwork { name: "critic".into(), seed: 6, net: Mlp::new(&[4, 3, 1], Activation::Relu, 1.0, 6) },
            ],
            blocks: vec![("moments".into(), vec![1.5, -2.0, 0.25])],
        }
    }

    #[test]
    fn round_trip() {
        let ckpt = sample();
        assert_eq!(Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap(), ckpt);
    }

    #[test]
    fn parameters_are_little_endian_f64_after_header() {
        let ckpt = sample();
        let bytes = ckpt.to_bytes();
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let first = f64::from_le_bytes(bytes[16 + header_len..24 + header_len].try_into().unwrap());
        assert_eq!(first, ckpt.networks[0].net.flatten()[0]);
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + header_len]).unwrap();
        assert_eq!(header["networks"][0]["layers"][0]["activation"], "tanh");
        assert_eq!(header["networks"][0]["seed"], 5);
    }

    #[test]
    fn errors_are_distinct() {
        let bytes = sample().to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic)));

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Version { found: 9, .. })));

        let mut bad = bytes.clone();
        bad[17] = b'#';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Header(_))));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(Checkpoint::from_bytes(truncated), Err(CheckpointError::Truncated { .. })));
    }
}
