use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{decode_f64s, join_container, split_container, FormatError};
use crate::field::SphericalField;
use crate::grids::{GridKind, GridSpec};

pub const SFD_MAGIC: [u8; 4] = *b"SFD1";

/// JSON header of an `SFD1` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfdHeader {
    pub grid_kind: String,
    pub nlat: usize,
    pub nlon: usize,
    pub channels: usize,
    pub channel_names: Vec<String>,
    pub dtype: String,
    pub layout: String,
}

/// A decoded field together with its channel names.
#[derive(Debug, Clone, PartialEq)]
pub struct SfdFile {
    pub field: SphericalField,
    pub channel_names: Vec<String>,
}

impl SfdFile {
    /// Wraps a field with default names `c0, c1, ...`.
    pub fn unnamed(field: SphericalField) -> Self {
        let channel_names = (0..field.channels()).map(|c| format!("c{c}")).collect();
        Self { field, channel_names }
    }
}

pub fn encode_sfd(file: &SfdFile) -> Result<Vec<u8>, FormatError> {
    let f = &file.field;
    if file.channel_names.len() != f.channels() {
        return Err(FormatError::HeaderMismatch(format!(
            "{} channel names for {} channels",
            file.channel_names.len(),
            f.channels()
        )));
    }
    let header = SfdHeader {
        grid_kind: f.grid().kind().as_str().to_string(),
        nlat: f.nlat(),
        nlon: f.nlon(),
        channels: f.channels(),
        channel_names: file.channel_names.clone(),
        dtype: "f64le".into(),
        layout: "c,h,w".into(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| FormatError::BadHeader(e.to_string()))?;
    Ok(join_container(&SFD_MAGIC, &json, f.data()))
}

pub fn decode_sfd(bytes: &[u8]) -> Result<SfdFile, FormatError> {
    let (json, payload) = split_container(bytes, &SFD_MAGIC)?;
    let header: SfdHeader =
        serde_json::from_slice(json).map_err(|e| FormatError::BadHeader(e.to_string()))?;
    let kind: GridKind = header
        .grid_kind
        .parse()
        .map_err(|_| FormatError::UnknownGridKind(header.grid_kind.clone()))?;
    if header.dtype != "f64le" {
        return Err(FormatError::HeaderMismatch(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.layout != "c,h,w" {
        return Err(FormatError::HeaderMismatch(format!("unsupported layout {:?}", header.layout)));
    }
    if header.channel_names.len() != header.channels {
        return Err(FormatError::HeaderMismatch(format!(
            "channels={} but {} channel names",
            header.channels,
            header.channel_names.len()
        )));
    }
    let grid = GridSpec::new(kind, header.nlat, header.nlon)
        .map_err(|e| FormatError::HeaderMismatch(e.to_string()))?;
    let data = decode_f64s(payload, header.channels * header.nlat * header.nlon)?;
    let field = SphericalField::from_vec(grid, header.channels, data)
        .map_err(|e| FormatError::HeaderMismatch(e.to_string()))?;
    Ok(SfdFile { field, channel_names: header.channel_names })
}

pub fn write_sfd(path: impl AsRef<Path>, file: &SfdFile) -> Result<(), FormatError> {
    std::fs::write(path, encode_sfd(file)?)?;
    Ok(())
}

pub fn read_sfd(path: impl AsRef<Path>) -> Result<SfdFile, FormatError> {
    decode_sfd(&std::fs::read(path)?)
}
