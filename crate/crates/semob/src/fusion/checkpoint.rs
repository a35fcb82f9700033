//! Self-describing JSON checkpoints: variant kind, config, and every
//! named tensor. Loading validates shapes against the config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::model::TstModel;
use crate::fusion::params::{init_params, Param, ParamSet, TstConfig, VariantKind};

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    kind: VariantKind,
    config: TstConfig,
    params: Vec<Param>,
}

pub fn save_checkpoint(path: &Path, model: &TstModel) -> Result<()> {
    let cp = Checkpoint {
        kind: model.kind,
        config: model.config.clone(),
        params: model.params.iter().cloned().collect(),
    };
    let json = serde_json::to_string(&cp).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<TstModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let cp: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;

    // shapes must match what the config would construct
    let reference = init_params(cp.kind, &cp.config)?;
    if reference.len() != cp.params.len() {
        return Err(Error::Data(format!(
            "{}: checkpoint has {} tensors, config wants {}",
            path.display(),
            cp.params.len(),
            reference.len()
        )));
    }
    for (stored, expect) in cp.params.iter().zip(reference.iter()) {
        if stored.name != expect.name || stored.value.shape() != expect.value.shape() {
            return Err(Error::Data(format!(
                "{}: tensor {} has shape {:?}, config wants {} {:?}",
                path.display(),
                stored.name,
                stored.value.shape(),
                expect.name,
                expect.value.shape()
            )));
        }
    }
    Ok(TstModel {
        kind: cp.kind,
        config: cp.config,
        params: ParamSet::from_params(cp.params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_dim_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let config = TstConfig {
            t_in: 4,
            t_out: 3,
            d_h: 6,
            d_dow: 2,
            d_tod: 3,
            d_g: 5,
            d_k: 4,
            d_st: 6,
            ..Default::default()
        };
        let model = TstModel::new(VariantKind::Full, config).unwrap();
        save_checkpoint(&path, &model).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.kind, model.kind);
        for (a, b) in loaded.params.iter().zip(model.params.iter()) {
            assert_eq!(a.value, b.value);
        }

        // corrupt a dimension in the stored config
        let text = std::fs::read_to_string(&path).unwrap();
        let corrupted = text.replace("\"d_st\":6", "\"d_st\":8");
        std::fs::write(&path, corrupted).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
