//! On-disk bundle for a fitted test: the statistic model document, the
//! critical model document when there is one, and a JSON manifest.

use super::{CriticalValue, FittedTest, Provenance};
use crate::neural;
use crate::scenario::{ScenarioSpec, Simulator};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const BUNDLE_FORMAT: &str = "nptest-bundle";
const STATISTIC_FILE: &str = "statistic.json";
const CRITICAL_FILE: &str = "critical.json";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum CriticalEntry {
    Constant { value: f64 },
    Network { file: String },
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    crate_version: String,
    scenario: ScenarioSpec,
    alpha: f64,
    statistic_file: String,
    critical: CriticalEntry,
    provenance: Provenance,
    /// Seconds since the Unix epoch when the bundle was written.
    calibrated_at: u64,
}

pub fn save_bundle(test: &FittedTest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(STATISTIC_FILE), neural::save(&test.statistic_net)?)?;
    let critical = match &test.critical {
        CriticalValue::Constant { value } => CriticalEntry::Constant { value: *value },
        CriticalValue::Network { net } => {
            fs::write(dir.join(CRITICAL_FILE), neural::save(net)?)?;
            CriticalEntry::Network { file: CRITICAL_FILE.into() }
        }
    };
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_FORMAT_VERSION,
        crate_version: crate::VERSION.into(),
        scenario: test.simulator().spec().clone(),
        alpha: test.alpha,
        statistic_file: STATISTIC_FILE.into(),
        critical,
        provenance: test.provenance.clone(),
        calibrated_at: std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<FittedTest> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != BUNDLE_FORMAT {
        return Err(Error::Load(format!("not a test bundle (format {:?})", manifest.format)));
    }
    if manifest.version != BUNDLE_FORMAT_VERSION {
        return Err(Error::Load(format!("unsupported bundle version {}", manifest.version)));
    }
    let sim = Simulator::new(manifest.scenario)?;
    let statistic_net = neural::load_expecting(&fs::read_to_string(dir.join(&manifest.statistic_file))?, sim.statistic_dim())?;
    let critical = match manifest.critical {
        CriticalEntry::Constant { value } => CriticalValue::Constant { value },
        CriticalEntry::Network { file } => {
            CriticalValue::Network { net: neural::load_expecting(&fs::read_to_string(dir.join(file))?, sim.critical_dim())? }
        }
    };
    FittedTest::new(statistic_net, critical, sim, manifest.alpha, manifest.provenance)
}
