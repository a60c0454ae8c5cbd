//! Checkpoint written by `train`: the resolved setup needed for decoding,
//! the training config and the weights.
//!
//! ```text
//! usdl-checkpoint 1
//! kind model
//! meta ... end meta          (ResolvedSetup as TOML)
//! config ... end config      (TrainConfig as TOML)
//! heads <K> ... dd_head <0|1> ...
//! ```
//!
//! Single-path modes store exactly one head.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::multipath::checkpoint::{read_multi, write_multi};
use crate::multipath::MultiHeadParams;
use crate::nethead::checkpoint::{read_header, read_toml_block, write_header, write_toml_block};
use crate::nethead::{HeadParams, TrainConfig};
use crate::textio::LineReader;

use super::config::ResolvedSetup;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub setup: ResolvedSetup,
    pub config: TrainConfig,
    pub params: MultiHeadParams,
}

impl ModelCheckpoint {
    /// The single head of a single-path model.
    pub fn head(&self) -> &HeadParams {
        &self.params.heads[0]
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, "model")?;
        write_toml_block(w, "meta", &self.setup)?;
        write_toml_block(w, "config", &self.config)?;
        write_multi(w, &self.params)
    }

    pub fn read_from<R: BufRead>(r: R, source_name: &str) -> Result<Self> {
        let mut r = LineReader::new(r, source_name);
        read_header(&mut r, "model")?;
        let setup = read_toml_block(&mut r, "meta")?;
        let config = read_toml_block(&mut r, "config")?;
        let params = read_multi(&mut r)?;
        Ok(Self { setup, config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        Self::read_from(BufReader::new(f), &path.display().to_string())
    }
}
