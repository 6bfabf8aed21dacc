//! "DWRL1" parameter container.
//!
//! The first line is `DWRL1 sha256=<hex digest of the body>`; the body is a
//! JSON object with a free-form `meta` map and a flat list of named tensors.
//! Floats are written in shortest round-trip form, so a write/read cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{AdamState, MlpParams, MlpSpec};
use crate::tensor::Tensor;

pub const MAGIC: &str = "DWRL1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub meta: BTreeMap<String, serde_json::Value>,
    pub tensors: Vec<NamedTensor>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Container {
    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body = serde_json::to_string(self).expect("container serializes");
        format!("{MAGIC} sha256={}\n{body}", sha256_hex(body.as_bytes())).into_bytes()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let integrity = |message: String| Error::Integrity {
            path: path.to_path_buf(),
            message,
        };
        let text = std::str::from_utf8(bytes).map_err(|_| integrity("not valid UTF-8".into()))?;
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| integrity("missing header line".into()))?;
        let digest = header
            .strip_prefix(MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("sha256="))
            .ok_or_else(|| integrity(format!("bad header '{header}', expected '{MAGIC} sha256=...'")))?;
        let actual = sha256_hex(body.as_bytes());
        if actual != digest {
            return Err(integrity(format!("checksum mismatch: header {digest}, body {actual}")));
        }
        serde_json::from_str(body).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() + 1,
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn put_meta<T: Serialize>(&mut self, key: &str, value: &T) {
        self.meta.insert(
            key.to_string(),
            serde_json::to_value(value).expect("meta serializes"),
        );
    }

    pub fn meta<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::State(format!("checkpoint has no '{key}' entry")))?;
        serde_json::from_value(v.clone())
            .map_err(|e| Error::State(format!("checkpoint entry '{key}': {e}")))
    }

    /// Stores a network under `prefix.` plus its architecture in meta.
    pub fn put_network(&mut self, prefix: &str, net: &MlpParams) {
        self.put_meta(&format!("{prefix}.spec"), &net.spec());
        for (name, t) in net.named_tensors() {
            self.push(format!("{prefix}.{name}"), t);
        }
    }

    /// Rebuilds a network stored with [`put_network`](Self::put_network).
    pub fn network(&self, prefix: &str) -> Result<MlpParams> {
        let spec: MlpSpec = self.meta(&format!("{prefix}.spec"))?;
        let mut net = MlpParams::init(&spec, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0));
        self.fill(prefix, &mut net)?;
        Ok(net)
    }

    /// Copies stored tensors into `net`, failing on any shape difference.
    pub fn fill(&self, prefix: &str, net: &mut MlpParams) -> Result<()> {
        let names: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, t) in names.iter().zip(net.tensors_mut()) {
            let key = format!("{prefix}.{name}");
            let stored = self
                .get(&key)
                .ok_or_else(|| Error::State(format!("checkpoint has no tensor '{key}'")))?;
            if stored.shape != t.shape() {
                return Err(Error::dims(t.shape(), &stored.shape));
            }
            *t = Tensor::new(stored.shape.clone(), stored.data.clone())?;
        }
        Ok(())
    }

    pub fn put_adam(&mut self, prefix: &str, state: &AdamState) {
        self.put_meta(
            &format!("{prefix}.hyper"),
            &(state.beta1, state.beta2, state.eps, state.step),
        );
        for (k, (m, v)) in state.m.iter().zip(&state.v).enumerate() {
            self.push(format!("{prefix}.m{k}"), m);
            self.push(format!("{prefix}.v{k}"), v);
        }
    }

    /// Restores Adam moments shaped like `like`.
    pub fn adam(&self, prefix: &str, like: &MlpParams) -> Result<AdamState> {
        let (beta1, beta2, eps, step): (f64, f64, f64, u64) = self.meta(&format!("{prefix}.hyper"))?;
        let mut state = AdamState::new(like);
        state.beta1 = beta1;
        state.beta2 = beta2;
        state.eps = eps;
        state.step = step;
        for (k, (m, v)) in state.m.iter_mut().zip(state.v.iter_mut()).enumerate() {
            for (slot, key) in [(m, format!("{prefix}.m{k}")), (v, format!("{prefix}.v{k}"))] {
                let stored = self
                    .get(&key)
                    .ok_or_else(|| Error::State(format!("checkpoint has no tensor '{key}'")))?;
                if stored.shape != slot.shape() {
                    return Err(Error::dims(slot.shape(), &stored.shape));
                }
                *slot = Tensor::new(stored.shape.clone(), stored.data.clone())?;
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Head;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Container {
        let net = MlpParams::init(
            &MlpSpec::new(3, &[4], 2, Head::GaussianMeanLogStd),
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        let mut c = Container::default();
        c.put_network("policy", &net);
        c.put_adam("opt", &AdamState::new(&net));
        c.put_meta("iteration", &17usize);
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Container::from_bytes(&c.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, c);
        let net = back.network("policy").unwrap();
        assert_eq!(net, c.network("policy").unwrap());
        assert_eq!(back.meta::<usize>("iteration").unwrap(), 17);
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = sample().to_bytes();
        let n = bytes.len();
        bytes[n - 10] ^= 0x01;
        let err = Container::from_bytes(&bytes, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Integrity { .. }), "{err}");
    }

    #[test]
    fn wrong_magic_rejected() {
        let bytes = b"DWRL0 sha256=00\n{}".to_vec();
        assert!(matches!(
            Container::from_bytes(&bytes, Path::new("mem")),
            Err(Error::Integrity { .. })
        ));
    }

    #[test]
    fn mismatched_architecture_is_shape_error() {
        let c = sample();
        let mut other = MlpParams::init(
            &MlpSpec::new(3, &[5], 2, Head::GaussianMeanLogStd),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert!(matches!(c.fill("policy", &mut other), Err(Error::Dimension { .. })));
    }
}
