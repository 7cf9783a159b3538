//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, little-endian u32 format version, little-endian u64
//! config hash, then a bincode-encoded [`Payload`].

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolutionState;
use crate::rl::{IterationStats, PolicyParams, StudentParams};
use crate::sim::LegLengths;

pub const MAGIC: [u8; 8] = *b"BIPEDCK\x01";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionCheckpoint {
    pub state: EvolutionState,
    pub warm_start: Option<PolicyParams>,
    pub pretrain_trace: Vec<IterationStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub params: PolicyParams,
    /// Morphology the policy was trained on; `None` for a design-space-wide policy.
    pub morphology: Option<LegLengths>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentCheckpoint {
    pub student: StudentParams,
    pub morphology: LegLengths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Evolution(EvolutionCheckpoint),
    Policy(PolicyCheckpoint),
    Student(StudentCheckpoint),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Evolution(_) => "evolution",
            Payload::Policy(_) => "policy",
            Payload::Student(_) => "student",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: u64,
    pub payload: Payload,
}

pub fn encode(config_hash: u64, payload: &Payload) -> Result<Vec<u8>> {
    let body = bincode::serialize(payload).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_hash.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < HEADER_LEN || bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let config_hash = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let payload = bincode::deserialize(&bytes[HEADER_LEN..]).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(Checkpoint {
        version,
        config_hash,
        payload,
    })
}

/// Writes via a temporary sibling and a rename so an interrupted write never
/// leaves a truncated checkpoint behind.
pub fn save(path: &Path, config_hash: u64, payload: &Payload) -> Result<()> {
    let bytes = encode(config_hash, payload)?;
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvSetup;
    use crate::rl::{init_policy, TrainHyper};

    fn policy() -> Payload {
        Payload::Policy(PolicyCheckpoint {
            params: init_policy(&TrainHyper::default(), &EnvSetup::default(), 3).unwrap(),
            morphology: Some(LegLengths::new(0.31, 0.36).unwrap()),
            iterations: 7,
        })
    }

    #[test]
    fn round_trip_and_header() {
        let p = policy();
        let bytes = encode(0xdead_beef, &p).unwrap();
        assert_eq!(&bytes[..8], &MAGIC);
        let c = decode(&bytes).unwrap();
        assert_eq!((c.version, c.config_hash), (FORMAT_VERSION, 0xdead_beef));
        assert_eq!(c.payload, p);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut bytes = encode(1, &policy()).unwrap();
        assert!(decode(&bytes[..10]).is_err());
        bytes[8] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Checkpoint(_))));
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save(&path, 5, &policy()).unwrap();
        assert_eq!(load(&path).unwrap().payload, policy());
        assert!(!path.with_extension("ckpt.tmp").exists());
    }
}
