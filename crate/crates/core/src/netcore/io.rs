use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerParams, Network, NetworkSpec, TrainedNetwork};
use crate::error::{Error, Result};
use crate::training::Task;

pub const NETWORK_FORMAT: &str = "anydim-network";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    #[serde(flatten)]
    params: LayerParams,
    weight_checksum: String,
    bias_checksum: String,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    version: u32,
    level: usize,
    unique: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task: Option<Task>,
    spec: NetworkSpec,
    layers: Vec<LayerFile>,
}

impl Network {
    /// JSON with the coefficients and a checksum of every basis they refer to.
    pub fn to_json(&self) -> Result<String> {
        let t = self.to_trained();
        let file = NetworkFile {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_VERSION,
            level: t.level,
            unique: t.unique,
            task: self.task,
            spec: t.spec,
            layers: t
                .layers
                .into_iter()
                .zip(&self.layers)
                .map(|(params, l)| LayerFile {
                    params,
                    weight_checksum: l.weight_basis.checksum(),
                    bias_checksum: l.bias_basis.checksum(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Rebuilds the bases and refuses coefficients whose bases no longer match.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        if file.format != NETWORK_FORMAT || file.version != NETWORK_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported network file {} v{}",
                file.format, file.version
            )));
        }
        let sums: Vec<(String, String)> = file
            .layers
            .iter()
            .map(|l| (l.weight_checksum.clone(), l.bias_checksum.clone()))
            .collect();
        let mut net = Network::from_trained(&TrainedNetwork {
            spec: file.spec,
            level: file.level,
            layers: file.layers.into_iter().map(|l| l.params).collect(),
            unique: file.unique,
        })?;
        net.task = file.task;
        for (i, (w, b)) in sums.iter().enumerate() {
            if *w != net.layers[i].weight_basis.checksum() || *b != net.layers[i].bias_basis.checksum()
            {
                return Err(Error::InvalidConfig(format!(
                    "layer {i}: stored basis checksum does not match the recomputed basis"
                )));
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
