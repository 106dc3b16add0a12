//! JSON file format for systems and matrices.

use std::path::Path;

use pg_limits::partial_obs::OutputSystem;
use pg_limits::serde_matrix::{from_rows, to_rows};
use pg_limits::{CostSpec, Mat, StateSpaceSystem};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

/// `{schema_version, A, B, C?, SigmaW, SigmaV?, Q, R}` with row-major matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub schema_version: u32,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    #[serde(rename = "SigmaW")]
    pub sigma_w: Rows,
    #[serde(rename = "SigmaV", default, skip_serializing_if = "Option::is_none")]
    pub sigma_v: Option<Rows>,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
}

/// Parsed and validated contents of a [`SystemFile`].
#[derive(Debug, Clone)]
pub struct Instance {
    pub system: StateSpaceSystem,
    pub cost: CostSpec,
    pub output: Option<OutputSystem>,
}

fn matrix(rows: &Rows) -> CliResult<Mat> {
    Ok(from_rows(rows)?)
}

impl SystemFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let file: SystemFile = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("system file: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::parse(&text)
    }

    pub fn from_instance(inst: &Instance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            a: to_rows(&inst.system.a),
            b: to_rows(&inst.system.b),
            c: inst.output.as_ref().map(|g| to_rows(&g.c)),
            sigma_w: to_rows(&inst.system.sigma_w),
            sigma_v: inst.output.as_ref().map(|g| to_rows(&g.sigma_v)),
            q: to_rows(&inst.cost.q),
            r: to_rows(&inst.cost.r),
        }
    }

    pub fn instance(&self) -> CliResult<Instance> {
        let system = StateSpaceSystem::new(matrix(&self.a)?, matrix(&self.b)?, matrix(&self.sigma_w)?)?;
        let cost = CostSpec::new(matrix(&self.q)?, matrix(&self.r)?)?;
        if cost.q.shape() != system.a.shape() || cost.r.nrows() != system.input_dim() {
            return Err(CliError::Validation(format!(
                "Q must be {0}x{0} and R {1}x{1}",
                system.state_dim(),
                system.input_dim()
            )));
        }
        let output = match (&self.c, &self.sigma_v) {
            (Some(c), Some(v)) => Some(OutputSystem::new(
                system.a.clone(),
                system.b.clone(),
                matrix(c)?,
                system.sigma_w.clone(),
                matrix(v)?,
            )?),
            (None, None) => None,
            _ => {
                return Err(CliError::Validation(
                    "C and SigmaV must be given together".into(),
                ))
            }
        };
        Ok(Instance {
            system,
            cost,
            output,
        })
    }
}

/// A bare row-major matrix `[[...], ...]` from a JSON file.
pub fn read_matrix(path: &Path) -> CliResult<Mat> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let rows: Rows = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    matrix(&rows)
}
