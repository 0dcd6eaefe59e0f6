//! `generate-geometry`: materializes a named generator as a geometry file.

use std::path::Path;

use complab_core::geometry::{CellGeometry, Encoding};
use serde::{Deserialize, Serialize};

use crate::config::load_config;
use crate::envelope::{Payload, Prepared};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub generator: String,
    #[serde(default = "rle")]
    pub encoding: String,
}

fn rle() -> String {
    "rle".into()
}

pub fn prepare(path: Option<&Path>, spec: Option<&str>, encoding: Option<&str>) -> Result<Prepared> {
    let mut cfg = match (path, spec) {
        (_, Some(s)) => GeometryConfig {
            generator: s.to_string(),
            encoding: rle(),
        },
        (Some(p), None) => load_config::<GeometryConfig>(Some(p), "generate-geometry")?.0,
        (None, None) => return Err(CliError::Input("generate-geometry needs a generator or --config".into())),
    };
    if let Some(e) = encoding {
        cfg.encoding = e.to_string();
    }
    let enc = match cfg.encoding.as_str() {
        "rle" => Encoding::Rle,
        "dense" => Encoding::Dense,
        other => return Err(CliError::Input(format!("unknown encoding {other:?} (rle, dense)"))),
    };
    let geom = CellGeometry::generate(&cfg.generator)?;
    Prepared::new(
        &cfg,
        Vec::new(),
        Box::new(move || {
            Ok(Payload {
                files: vec![("geometry.json".to_string(), geom.to_json(enc)? + "\n")],
                violation: None,
            })
        }),
    )
}
