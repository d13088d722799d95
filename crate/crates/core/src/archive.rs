//! Single-file model archive.
//!
//! Layout: magic `RSMODEL\0`, a little-endian `u32` version, then five
//! length-prefixed (`u64`) sections: model kind, model config (`key=value`),
//! label inventory, sub-word vocabulary and the parameter manifest.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use relsrl_nn::checkpoint::{read_params, write_params};

use crate::error::{file_error, Error, Result};
use crate::labels::LabelVocab;
use crate::models::{Model, ModelConfig, ModelKind, Net};
use crate::tokenizer::Vocab;

pub const MAGIC: &[u8; 8] = b"RSMODEL\0";
pub const VERSION: u32 = 1;

fn write_section<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_section<R: Read>(r: &mut R, what: &str) -> Result<Vec<u8>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Checkpoint(format!("truncated before the {what} section")))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut buf = Vec::new();
    r.by_ref().take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::Checkpoint(format!("truncated {what} section")));
    }
    Ok(buf)
}

fn text_section<R: Read>(r: &mut R, what: &str) -> Result<String> {
    String::from_utf8(read_section(r, what)?).map_err(|_| Error::Checkpoint(format!("{what} section is not UTF-8")))
}

pub fn write_model<N: Net, W: Write>(model: &Model<N>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_section(&mut w, model.kind().as_str().as_bytes())?;
    write_section(&mut w, model.config.to_key_values().as_bytes())?;
    write_section(&mut w, model.labels.to_text().as_bytes())?;
    write_section(&mut w, model.vocab.to_text().as_bytes())?;
    let mut params = Vec::new();
    write_params(&model.store, &mut params)?;
    write_section(&mut w, &params)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<ModelKind> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short for a model archive".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a model archive".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported archive version {version}")));
    }
    text_section(r, "kind")?.parse()
}

pub fn read_model<N: Net, R: Read>(mut r: R) -> Result<Model<N>> {
    let kind = read_header(&mut r)?;
    if kind != N::KIND {
        return Err(Error::Checkpoint(format!("archive holds a {kind} model, expected {}", N::KIND)));
    }
    let config = ModelConfig::parse_key_values(&text_section(&mut r, "config")?)?;
    let labels = LabelVocab::parse(&text_section(&mut r, "labels")?)?;
    let vocab = Vocab::parse(&text_section(&mut r, "vocabulary")?)?;
    let params = read_params(read_section(&mut r, "parameters")?.as_slice())?;
    let mut model = Model::<N>::new(config, vocab, labels, 0)?;
    if params.len() != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "archive has {} parameters, model expects {}",
            params.len(),
            model.store.len()
        )));
    }
    model.store.copy_values_from(&params)?;
    for id in params.ids() {
        let target = model.store.id(params.name(id)).expect("names matched on copy");
        model.store.set_frozen(target, params.is_frozen(id));
    }
    Ok(model)
}

pub fn save_model<N: Net>(model: &Model<N>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf).map_err(file_error(path))
}

pub fn load_model<N: Net>(path: impl AsRef<Path>) -> Result<Model<N>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(file_error(path))?;
    read_model(bytes.as_slice())
}

/// Model kind stored in an archive, without loading the weights.
pub fn archive_kind(path: impl AsRef<Path>) -> Result<ModelKind> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(file_error(path))?;
    read_header(&mut std::io::BufReader::new(f))
}
