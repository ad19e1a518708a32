//! Versioned JSON checkpoints.
//!
//! ```json
//! {
//!   "format": "lptraffic-checkpoint",
//!   "version": 1,
//!   "blocks": [{"name": "lstm.w_input", "shape": [32, 1]}, ...],
//!   "payload": { ... }
//! }
//! ```
//!
//! `blocks` lists every parameter block in optimizer order with its shape; it
//! is checked against the payload on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "lptraffic-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub blocks: Vec<BlockHeader>,
    pub payload: T,
}

fn headers<T: Parameterized>(payload: &T) -> Vec<BlockHeader> {
    let mut blocks = Vec::new();
    payload.visit(&mut |name, shape, _| {
        blocks.push(BlockHeader {
            name: name.to_owned(),
            shape,
        })
    });
    blocks
}

impl<T: Parameterized + Serialize + DeserializeOwned> Checkpoint<T> {
    pub fn new(payload: T) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            blocks: headers(&payload),
            payload,
        }
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<T> {
        let ckpt: Checkpoint<T> = serde_json::from_reader(reader)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidParameter(format!(
                "not a checkpoint: format `{}`",
                ckpt.format
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        let actual = headers(&ckpt.payload);
        if actual != ckpt.blocks {
            return Err(Error::shape(
                "checkpoint blocks",
                format!("{} declared blocks", ckpt.blocks.len()),
                format!("{} blocks in payload (or differing shapes)", actual.len()),
            ));
        }
        let mut sizes_ok = true;
        ckpt.payload.visit(&mut |_, [r, c], data| sizes_ok &= r * c == data.len());
        if !sizes_ok {
            return Err(Error::InvalidParameter(
                "checkpoint block length does not match its shape".into(),
            ));
        }
        Ok(ckpt.payload)
    }

    pub fn save(payload: &T, path: &Path) -> Result<()>
    where
        T: Clone,
    {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        Checkpoint::new(payload.clone()).to_writer(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<T> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::LstmParams;
    use crate::seed::{stream, Purpose};

    #[test]
    fn round_trip_is_exact() {
        let p = LstmParams::init(5, &mut stream(1, Purpose::ModelInit, 0));
        let mut buf = Vec::new();
        Checkpoint::new(p.clone()).to_writer(&mut buf).unwrap();
        let back: LstmParams = Checkpoint::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"lstm.u_cell\""));
    }

    #[test]
    fn rejects_wrong_version() {
        let p = LstmParams::zeros(2);
        let mut ckpt = Checkpoint::new(p);
        ckpt.version = 99;
        let buf = serde_json::to_vec(&ckpt).unwrap();
        assert!(Checkpoint::<LstmParams>::from_reader(buf.as_slice()).is_err());
    }

    #[test]
    fn rejects_tampered_shapes() {
        let mut ckpt = Checkpoint::new(LstmParams::zeros(2));
        ckpt.blocks[0].shape = [3, 1];
        let buf = serde_json::to_vec(&ckpt).unwrap();
        assert!(Checkpoint::<LstmParams>::from_reader(buf.as_slice()).is_err());
    }
}
