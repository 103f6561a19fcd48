//! Dataset directories and model checkpoints.
//!
//! A dataset directory holds `meta.json`, `data.bin` (little-endian `f32`
//! values, examples back to back) and `labels.csv` (`index,label,nuisance,group`,
//! empty fields for absent annotations). Grids store their values in
//! storage order; vectors store their coordinates; a sentence pair stores
//! `premise length, hypothesis length, premise tokens, hypothesis tokens`,
//! all as `f32`.
//!
//! A checkpoint is the magic `SEMCORR\0`, a `u32` format version, a `u32`
//! header length, a JSON header describing the model, then every
//! parameter as a little-endian `f64` in the model's flattening order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covariate::{Covariate, Grid, SentencePair, TokenSeq};
use crate::error::{Error, Result};
use crate::families::{Dataset, Example, Provenance};
use crate::learner::{FeatureSpec, HiddenLayer, LinearModel};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEMCORR\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateShape {
    Grid { height: usize, width: usize, channels: usize },
    Pair,
    Vector { dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub len: usize,
    pub shape: CovariateShape,
    pub num_classes: usize,
    pub num_nuisance: usize,
    pub provenance: Provenance,
}

fn shape_of(data: &Dataset) -> Result<CovariateShape> {
    let first = data
        .examples
        .first()
        .ok_or_else(|| Error::Format("cannot store an empty dataset".into()))?;
    let shape = match &first.x {
        Covariate::Grid(g) => CovariateShape::Grid {
            height: g.height(),
            width: g.width(),
            channels: g.channels(),
        },
        Covariate::Pair(_) => CovariateShape::Pair,
        Covariate::Vector(v) => CovariateShape::Vector { dim: v.len() },
    };
    for (i, e) in data.examples.iter().enumerate() {
        let same = match (&shape, &e.x) {
            (CovariateShape::Grid { height, width, channels }, Covariate::Grid(g)) => {
                (g.height(), g.width(), g.channels()) == (*height, *width, *channels)
            }
            (CovariateShape::Pair, Covariate::Pair(_)) => true,
            (CovariateShape::Vector { dim }, Covariate::Vector(v)) => v.len() == *dim,
            _ => false,
        };
        if !same {
            return Err(Error::Format(format!("example {i} differs in shape from example 0")));
        }
    }
    Ok(shape)
}

fn token_as_f32(t: u32) -> Result<f32> {
    if t >= 1 << 24 {
        return Err(Error::Format(format!("token id {t} is not exactly representable")));
    }
    Ok(t as f32)
}

fn f32_as_count(v: f32) -> Result<u32> {
    if v < 0.0 || v.fract() != 0.0 || v >= (1u32 << 24) as f32 {
        return Err(Error::Format(format!("{v} is not a valid count or token id")));
    }
    Ok(v as u32)
}

pub fn save_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    data.validate()?;
    let shape = shape_of(data)?;
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        format_version: DATASET_FORMAT_VERSION,
        len: data.len(),
        shape,
        num_classes: data.num_classes,
        num_nuisance: data.num_nuisance,
        provenance: data.provenance.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut bin: Vec<u8> = Vec::new();
    let mut put = |v: f32| bin.extend_from_slice(&v.to_le_bytes());
    for e in &data.examples {
        match &e.x {
            Covariate::Grid(g) => g.values().iter().for_each(|&v| put(v)),
            Covariate::Vector(v) => v.iter().for_each(|&v| put(v)),
            Covariate::Pair(p) => {
                put(token_as_f32(p.premise.len() as u32)?);
                put(token_as_f32(p.hypothesis.len() as u32)?);
                for &t in p.premise.tokens().iter().chain(p.hypothesis.tokens()) {
                    put(token_as_f32(t)?);
                }
            }
        }
    }
    fs::write(dir.join("data.bin"), bin)?;

    let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
    w.write_record(["index", "label", "nuisance", "group"])?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    for (i, e) in data.examples.iter().enumerate() {
        w.write_record([i.to_string(), e.label.to_string(), opt(e.nuisance), opt(e.group)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset format version {}",
            meta.format_version
        )));
    }
    let raw = fs::read(dir.join("data.bin"))?;
    if raw.len() % 4 != 0 {
        return Err(Error::Format("data.bin length is not a multiple of 4".into()));
    }
    let vals: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut pos = 0usize;
    let mut take = |k: usize| -> Result<&[f32]> {
        let s = vals
            .get(pos..pos + k)
            .ok_or_else(|| Error::Format("data.bin ends early".into()))?;
        pos += k;
        Ok(s)
    };
    let mut xs = Vec::with_capacity(meta.len);
    for _ in 0..meta.len {
        xs.push(match meta.shape {
            CovariateShape::Grid { height, width, channels } => Covariate::Grid(Grid::new(
                height,
                width,
                channels,
                take(height * width * channels)?.to_vec(),
            )?),
            CovariateShape::Vector { dim } => Covariate::Vector(take(dim)?.to_vec()),
            CovariateShape::Pair => {
                let lens = take(2)?;
                let (pl, hl) = (f32_as_count(lens[0])? as usize, f32_as_count(lens[1])? as usize);
                let toks = take(pl + hl)?
                    .iter()
                    .map(|&v| f32_as_count(v))
                    .collect::<Result<Vec<u32>>>()?;
                Covariate::Pair(SentencePair {
                    premise: TokenSeq::new(toks[..pl].to_vec()),
                    hypothesis: TokenSeq::new(toks[pl..].to_vec()),
                })
            }
        });
    }
    if pos != vals.len() {
        return Err(Error::Format("data.bin has trailing values".into()));
    }

    let mut r = csv::Reader::from_path(dir.join("labels.csv"))?;
    let parse_opt = |s: &str| -> Result<Option<usize>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Format(format!("bad integer '{s}'")))
        }
    };
    let mut examples = Vec::with_capacity(meta.len);
    for (i, (rec, x)) in r.records().zip(xs).enumerate() {
        let rec = rec?;
        if rec.len() != 4 || rec[0].parse::<usize>().ok() != Some(i) {
            return Err(Error::Format(format!("labels.csv row {i} is malformed")));
        }
        examples.push(Example {
            x,
            label: parse_opt(&rec[1])?
                .ok_or_else(|| Error::Format(format!("row {i} has no label")))?,
            nuisance: parse_opt(&rec[2])?,
            group: parse_opt(&rec[3])?,
        });
    }
    if examples.len() != meta.len {
        return Err(Error::Format("labels.csv and meta.json disagree on length".into()));
    }
    Dataset::new(examples, meta.num_classes, meta.num_nuisance, meta.provenance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    spec: FeatureSpec,
    num_features: usize,
    num_classes: usize,
    hidden_width: Option<usize>,
    num_params: usize,
}

pub fn write_checkpoint(m: &LinearModel, mut w: impl Write) -> Result<()> {
    let header = serde_json::to_vec(&CheckpointHeader {
        spec: m.spec.clone(),
        num_features: m.num_features,
        num_classes: m.num_classes,
        hidden_width: m.hidden.as_ref().map(|h| h.width),
        num_params: m.num_params(),
    })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for p in m.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<LinearModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let mut u = [0u8; 4];
    r.read_exact(&mut u)?;
    let version = u32::from_le_bytes(u);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut u)?;
    let mut header = vec![0u8; u32::from_le_bytes(u) as usize];
    r.read_exact(&mut header)?;
    let h: CheckpointHeader = serde_json::from_slice(&header)?;
    let mut m = LinearModel::new(h.spec, h.num_features, h.num_classes)?;
    if let Some(width) = h.hidden_width {
        m.hidden = Some(HiddenLayer {
            width,
            weights: vec![0.0; width * h.num_features],
            bias: vec![0.0; width],
        });
        m.weights = vec![0.0; h.num_classes * width];
    }
    if m.num_params() != h.num_params {
        return Err(Error::Format("checkpoint header is inconsistent".into()));
    }
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != 8 * h.num_params {
        return Err(Error::Format(format!(
            "expected {} parameter bytes, found {}",
            8 * h.num_params,
            raw.len()
        )));
    }
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    m.set_params(&params)?;
    Ok(m)
}

pub fn save_model(m: &LinearModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(m, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LinearModel> {
    read_checkpoint(fs::File::open(path)?)
}
