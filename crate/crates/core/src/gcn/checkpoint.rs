//! JSON model checkpoints: architecture descriptor plus row-major weights.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Architecture, GcnModel, Layer};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub architecture: Architecture,
    pub layers: Vec<LayerRecord>,
    pub readout: Option<LayerRecord>,
}

impl LayerRecord {
    fn from_layer(layer: &Layer) -> Self {
        let (rows, cols) = layer.weight.dim();
        LayerRecord {
            rows,
            cols,
            weight: layer.weight.iter().copied().collect(),
            bias: layer.bias.to_vec(),
        }
    }

    fn to_layer(&self) -> Result<Layer> {
        let weight = Array2::from_shape_vec((self.rows, self.cols), self.weight.clone())
            .map_err(|e| Error::DimensionMismatch(format!("checkpoint layer: {e}")))?;
        Ok(Layer {
            weight,
            bias: Array1::from(self.bias.clone()),
        })
    }
}

impl ModelCheckpoint {
    pub fn from_model(model: &GcnModel) -> Self {
        ModelCheckpoint {
            architecture: model.arch,
            layers: model.convs.iter().map(LayerRecord::from_layer).collect(),
            readout: model.readout.as_ref().map(LayerRecord::from_layer),
        }
    }

    pub fn into_model(self) -> Result<GcnModel> {
        let convs = self
            .layers
            .iter()
            .map(LayerRecord::to_layer)
            .collect::<Result<Vec<_>>>()?;
        let readout = self.readout.as_ref().map(LayerRecord::to_layer).transpose()?;
        GcnModel::from_layers(self.architecture, convs, readout)
    }
}

pub fn save_model(path: &Path, model: &GcnModel) -> Result<()> {
    let text = serde_json::to_string_pretty(&ModelCheckpoint::from_model(model))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GcnModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str::<ModelCheckpoint>(&text)?.into_model()
}
