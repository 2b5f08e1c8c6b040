//! Checkpoint archive: a tar file holding `manifest.json` plus the raw
//! little-endian f64 weights in canonical parameter order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backbone::BackboneRegistry;
use super::net::{PptConfig, PptNet};
use super::NetError;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "C_b")]
    c_b: usize,
    backbone: String,
    seed: u64,
    hidden: usize,
    params: Vec<ParamInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamInfo {
    name: String,
    shape: Vec<usize>,
}

pub fn save(net: &PptNet, path: &Path) -> Result<(), NetError> {
    let cfg = net.config();
    let params = net.params();
    let manifest = Manifest {
        m: cfg.m,
        c_b: cfg.c_b,
        backbone: cfg.backbone.clone(),
        seed: cfg.seed,
        hidden: cfg.hidden,
        params: params
            .iter()
            .map(|p| ParamInfo {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest).map_err(NetError::CheckpointJson)?;

    let mut weights = Vec::new();
    for p in &params {
        for v in p.value.data() {
            weights.extend_from_slice(&v.to_le_bytes());
        }
    }

    let file = File::create(path).map_err(NetError::CheckpointIo)?;
    let mut builder = tar::Builder::new(file);
    append_entry(&mut builder, "manifest.json", &manifest_bytes)?;
    append_entry(&mut builder, "weights.bin", &weights)?;
    builder
        .into_inner()
        .and_then(|mut f| f.flush().map(|_| f))
        .map_err(NetError::CheckpointIo)?;
    Ok(())
}

fn append_entry(
    builder: &mut tar::Builder<File>,
    name: &str,
    data: &[u8],
) -> Result<(), NetError> {
    let mut header = tar::Header::new_gnu();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_cksum();
    builder
        .append_data(&mut header, name, data)
        .map_err(NetError::CheckpointIo)
}

pub fn load(path: &Path, registry: &BackboneRegistry) -> Result<PptNet, NetError> {
    let file = File::open(path).map_err(NetError::CheckpointIo)?;
    let mut archive = tar::Archive::new(file);
    let mut manifest: Option<Manifest> = None;
    let mut weights: Option<Vec<u8>> = None;
    for entry in archive.entries().map_err(NetError::CheckpointIo)? {
        let mut entry = entry.map_err(NetError::CheckpointIo)?;
        let name = entry
            .path()
            .map_err(NetError::CheckpointIo)?
            .to_string_lossy()
            .into_owned();
        let mut buf = Vec::with_capacity(entry.size() as usize);
        entry.read_to_end(&mut buf).map_err(NetError::CheckpointIo)?;
        match name.as_str() {
            "manifest.json" => {
                manifest = Some(serde_json::from_slice(&buf).map_err(NetError::CheckpointJson)?)
            }
            "weights.bin" => weights = Some(buf),
            _ => {}
        }
    }
    let manifest = manifest.ok_or_else(|| NetError::CheckpointFormat("missing manifest.json".into()))?;
    let weights = weights.ok_or_else(|| NetError::CheckpointFormat("missing weights.bin".into()))?;

    let cfg = PptConfig {
        m: manifest.m,
        c_b: manifest.c_b,
        hidden: manifest.hidden,
        backbone: manifest.backbone.clone(),
        seed: manifest.seed,
    };
    let mut net = PptNet::new(cfg, registry)?;

    {
        let params = net.params_mut(true);
        if params.len() != manifest.params.len() {
            return Err(NetError::CheckpointFormat(format!(
                "checkpoint lists {} parameters, net has {}",
                manifest.params.len(),
                params.len()
            )));
        }
        let mut offset = 0;
        for (param, info) in params.into_iter().zip(&manifest.params) {
            if param.name != info.name || param.value.shape() != info.shape.as_slice() {
                return Err(NetError::CheckpointFormat(format!(
                    "parameter mismatch: checkpoint has {} {:?}, net expects {} {:?}",
                    info.name,
                    info.shape,
                    param.name,
                    param.value.shape()
                )));
            }
            let len = param.len();
            let end = offset + len * 8;
            if end > weights.len() {
                return Err(NetError::CheckpointFormat("weights.bin truncated".into()));
            }
            for (i, chunk) in weights[offset..end].chunks_exact(8).enumerate() {
                param.value.data_mut()[i] = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            offset = end;
        }
        if offset != weights.len() {
            return Err(NetError::CheckpointFormat(format!(
                "weights.bin has {} trailing bytes",
                weights.len() - offset
            )));
        }
    }
    Ok(net)
}
