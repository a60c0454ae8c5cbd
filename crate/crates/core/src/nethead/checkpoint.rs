//! Text checkpoint container for a single head.
//!
//! ```text
//! usdl-checkpoint 1
//! kind head
//! config
//! <TrainConfig as TOML>
//! end config
//! head <input> <hidden1> <hidden2> <output>
//! <layer1 weights: `input` rows of `hidden1` reals>
//! <layer1 bias: one row of `hidden1` reals>
//! <layer2 weights, layer2 bias, layer3 weights, layer3 bias likewise>
//! ```
//!
//! Weights are row-major, one matrix row per line. Reals use the shortest
//! round-trip representation, so save followed by load is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::textio::{parse_usize, write_reals, LineReader};

use super::{HeadParams, Layer, TrainConfig};

pub(crate) const MAGIC: &str = "usdl-checkpoint";
pub(crate) const VERSION: &str = "1";

pub(crate) fn write_header<W: Write>(w: &mut W, kind: &str) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "kind {kind}")?;
    Ok(())
}

pub(crate) fn read_header<R: BufRead>(r: &mut LineReader<R>, kind: &str) -> Result<()> {
    let version = r.expect_keyword(MAGIC)?;
    if version != [VERSION] {
        return Err(r.error(format!("unsupported checkpoint version {version:?}")));
    }
    let found = r.expect_keyword("kind")?;
    if found != [kind] {
        return Err(r.error(format!("expected a `{kind}` checkpoint, found {found:?}")));
    }
    Ok(())
}

pub(crate) fn write_toml_block<W: Write, T: Serialize>(w: &mut W, name: &str, value: &T) -> Result<()> {
    let body = toml::to_string(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    writeln!(w, "{name}")?;
    w.write_all(body.as_bytes())?;
    if !body.ends_with('\n') {
        writeln!(w)?;
    }
    writeln!(w, "end {name}")?;
    Ok(())
}

pub(crate) fn read_toml_block<R: BufRead, T: DeserializeOwned>(r: &mut LineReader<R>, name: &str) -> Result<T> {
    r.expect_keyword(name)?;
    let start = r.line_no();
    let body = r.read_block(&format!("end {name}"))?;
    toml::from_str(&body).map_err(|e| Error::parse(format!("{name} block"), start, e.to_string()))
}

pub(crate) fn write_head<W: Write>(w: &mut W, params: &HeadParams) -> Result<()> {
    writeln!(
        w,
        "head {} {} {} {}",
        params.input_dim(),
        params.layer1.fan_out(),
        params.layer2.fan_out(),
        params.output_dim()
    )?;
    for layer in params.layers() {
        for row in layer.weights.rows() {
            write_reals(w, row.as_slice().expect("standard layout"))?;
        }
        write_reals(w, layer.bias.as_slice().expect("standard layout"))?;
    }
    Ok(())
}

pub(crate) fn read_head<R: BufRead>(r: &mut LineReader<R>) -> Result<HeadParams> {
    let dims = r.expect_keyword("head")?;
    if dims.len() != 4 {
        return Err(r.error("head line needs 4 dimensions"));
    }
    let dims: Vec<usize> = dims
        .iter()
        .map(|t| parse_usize(r, t, "dimension"))
        .collect::<Result<_>>()?;
    if dims.contains(&0) {
        return Err(r.error("zero-sized layer"));
    }
    let mut layers = Vec::with_capacity(3);
    for (i, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut flat = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in {
            flat.extend(r.read_reals(fan_out, &format!("layer{} weights", i + 1))?);
        }
        let bias = r.read_reals(fan_out, &format!("layer{} bias", i + 1))?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((fan_in, fan_out), flat).expect("sized above"),
            bias: Array1::from(bias),
        });
    }
    let layer3 = layers.pop().expect("three layers");
    let layer2 = layers.pop().expect("three layers");
    let layer1 = layers.pop().expect("three layers");
    let params = HeadParams {
        layer1,
        layer2,
        layer3,
    };
    params.validate()?;
    Ok(params)
}

/// A trained head together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadCheckpoint {
    pub config: TrainConfig,
    pub params: HeadParams,
}

impl HeadCheckpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, "head")?;
        write_toml_block(w, "config", &self.config)?;
        write_head(w, &self.params)
    }

    pub fn read_from<R: BufRead>(r: R, source_name: &str) -> Result<Self> {
        let mut r = LineReader::new(r, source_name);
        read_header(&mut r, "head")?;
        let config = read_toml_block(&mut r, "config")?;
        let params = read_head(&mut r)?;
        Ok(Self { config, params })
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
