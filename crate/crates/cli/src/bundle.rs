//! Versioned model bundle: the two forests plus, once `cltv calibrate` has
//! run, the Platt calibrator and the percentile-to-value map.

use std::io::{Read, Write};
use std::path::Path;

use cltv_core::calibration::{PercentileValueMap, PlattModel};
use cltv_core::forest::ForestModel;
use cltv_core::Forest;
use serde::{Deserialize, Serialize};

use crate::CliError;

const MAGIC: &[u8; 8] = b"CLTVBNDL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPart {
    pub platt: PlattModel,
    pub value_map: PercentileValueMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub churn: Forest,
    pub cltv: Forest,
    pub calibration: Option<CalibrationPart>,
}

impl ModelBundle {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CliError> {
        w.write_all(MAGIC).map_err(CliError::io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(CliError::io)?;
        w.write_all(&[self.calibration.is_some() as u8]).map_err(CliError::io)?;
        self.churn.write_to(w)?;
        self.cltv.write_to(w)?;
        if let Some(cal) = &self.calibration {
            let blob = serde_json::to_vec(cal).map_err(CliError::json)?;
            w.write_all(&(blob.len() as u64).to_le_bytes()).map_err(CliError::io)?;
            w.write_all(&blob).map_err(CliError::io)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<ModelBundle, CliError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(CliError::io)?;
        if &magic != MAGIC {
            return Err(CliError::data("bad model bundle magic"));
        }
        let mut version = [0u8; 4];
        r.read_exact(&mut version).map_err(CliError::io)?;
        if u32::from_le_bytes(version) != VERSION {
            return Err(CliError::data("unsupported model bundle version"));
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(CliError::io)?;
        let churn = ForestModel::read_from(r)?;
        let cltv = ForestModel::read_from(r)?;
        let calibration = if flag[0] != 0 {
            let mut len = [0u8; 8];
            r.read_exact(&mut len).map_err(CliError::io)?;
            let mut blob = vec![0u8; u64::from_le_bytes(len) as usize];
            r.read_exact(&mut blob).map_err(CliError::io)?;
            Some(serde_json::from_slice(&blob).map_err(CliError::json)?)
        } else {
            None
        };
        Ok(ModelBundle { churn, cltv, calibration })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn load(path: &Path, producer: &str) -> Result<ModelBundle, CliError> {
        let bytes = std::fs::read(path).map_err(|_| CliError::MissingArtifact {
            artifact: path.display().to_string(),
            producer: producer.to_string(),
        })?;
        ModelBundle::read_from(&mut bytes.as_slice())
    }
}
