//! Text container for a multi-head model.
//!
//! ```text
//! usdl-checkpoint 1
//! kind multi
//! config ... end config      (TrainConfig as TOML)
//! rule ... end rule          (FusionRule as TOML)
//! heads <K>
//! <K head blocks, same layout as the single-head checkpoint>
//! dd_head <0|1>
//! <optional head block>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::nethead::checkpoint::{read_head, read_header, read_toml_block, write_head, write_header, write_toml_block};
use crate::nethead::TrainConfig;
use crate::textio::{parse_usize, LineReader};

use super::{FusionRule, MultiHeadParams};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadCheckpoint {
    pub config: TrainConfig,
    pub rule: FusionRule,
    pub params: MultiHeadParams,
}

pub(crate) fn write_multi<W: Write>(w: &mut W, params: &MultiHeadParams) -> Result<()> {
    writeln!(w, "heads {}", params.heads.len())?;
    for h in &params.heads {
        write_head(w, h)?;
    }
    writeln!(w, "dd_head {}", u8::from(params.dd_head.is_some()))?;
    if let Some(h) = &params.dd_head {
        write_head(w, h)?;
    }
    Ok(())
}

pub(crate) fn read_multi<R: BufRead>(r: &mut LineReader<R>) -> Result<MultiHeadParams> {
    let count = r.expect_keyword("heads")?;
    let k = match count.as_slice() {
        [t] => parse_usize(r, t, "head count")?,
        _ => return Err(r.error("heads line needs a count")),
    };
    let heads = (0..k).map(|_| read_head(r)).collect::<Result<Vec<_>>>()?;
    let flag = r.expect_keyword("dd_head")?;
    let dd_head = match flag.as_slice() {
        [t] if t == "1" => Some(read_head(r)?),
        [t] if t == "0" => None,
        _ => return Err(r.error("dd_head flag must be 0 or 1")),
    };
    let params = MultiHeadParams { heads, dd_head };
    params.validate()?;
    Ok(params)
}

impl MultiHeadCheckpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, "multi")?;
        write_toml_block(w, "config", &self.config)?;
        write_toml_block(w, "rule", &self.rule)?;
        write_multi(w, &self.params)
    }

    pub fn read_from<R: BufRead>(r: R, source_name: &str) -> Result<Self> {
        let mut r = LineReader::new(r, source_name);
        read_header(&mut r, "multi")?;
        let config = read_toml_block(&mut r, "config")?;
        let rule = read_toml_block(&mut r, "rule")?;
        let params = read_multi(&mut r)?;
        Ok(Self { config, rule, params })
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
