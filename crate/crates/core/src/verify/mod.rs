//! Property suite: configuration, the check registry, reports and exponent fits.
//!
//! A suite config is a system config with an extra `suite` table:
//!
//! ```toml
//! dim = 1
//! A = { kind = "constant", value = [[-1.0]] }
//! B = { kind = "constant", value = [[1.4142135623730951]] }
//! f = { kind = "constant", value = [0.0] }
//!
//! [suite]
//! checks = ["fourier-identity", "evolution-law"]
//! tolerances = { fourier-identity = 1e-9 }
//! seed = 7
//! output = "out"
//! workers = 1
//! ```
//!
//! Without `dim` the autonomous scalar benchmark is used; without `checks` every
//! registered check runs.

pub mod checks;
pub mod fit;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::benchmarks::autonomous_scalar;
use crate::coeffs::{parse_value, system_from_value, CoefficientSystem};
use crate::error::{Error, Result};

pub use checks::{find_check, registry, CheckSpec, SuiteContext};
pub use fit::{fit_smoothing_exponent, gap_grid, ExponentFit, GapMode};

/// Stream of check `name` under the suite seed (FNV-1a of the name, then SplitMix64).
pub fn split_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub system: CoefficientSystem,
    /// Where the config was read from, if anywhere.
    pub source: Option<PathBuf>,
    /// Requested checks, sorted and deduplicated.
    pub checks: Vec<String>,
    /// Overrides of the registered tolerances.
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub workers: usize,
    /// SHA-256 of the canonical JSON form of the config.
    pub hash: String,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self::from_value(&Value::Object(Default::default())).expect("empty config is valid")
    }
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_value(&parse_value(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.source = Some(path.to_path_buf());
        if let Some(out) = &cfg.output {
            if out.is_relative() {
                cfg.output = Some(path.parent().unwrap_or(Path::new(".")).join(out));
            }
        }
        Ok(cfg)
    }

    pub fn from_value(root: &Value) -> Result<Self> {
        let obj = root.as_object().ok_or_else(|| schema("<root>", "expected a table"))?;
        let system = if obj.contains_key("dim") {
            system_from_value(root)?
        } else {
            autonomous_scalar()
        };
        let empty = serde_json::Map::new();
        let suite = match obj.get("suite") {
            None => &empty,
            Some(v) => v.as_object().ok_or_else(|| schema("suite", "expected a table"))?,
        };
        for key in suite.keys() {
            if !["checks", "tolerances", "seed", "output", "workers"].contains(&key.as_str()) {
                return Err(schema(&format!("suite.{key}"), "unknown key"));
            }
        }
        let mut checks: Vec<String> = match suite.get("checks") {
            None => registry().iter().map(|c| c.name.to_string()).collect(),
            Some(v) => v
                .as_array()
                .ok_or_else(|| schema("suite.checks", "expected a list of names"))?
                .iter()
                .map(|c| {
                    c.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| schema("suite.checks", "names must be strings"))
                })
                .collect::<Result<_>>()?,
        };
        checks.sort();
        checks.dedup();
        for name in &checks {
            if find_check(name).is_none() {
                return Err(Error::UnknownCheck(name.clone()));
            }
        }
        let mut tolerances = BTreeMap::new();
        if let Some(v) = suite.get("tolerances") {
            let t = v
                .as_object()
                .ok_or_else(|| schema("suite.tolerances", "expected a table"))?;
            for (name, tol) in t {
                if find_check(name).is_none() {
                    return Err(Error::UnknownCheck(name.clone()));
                }
                let tol = tol
                    .as_f64()
                    .filter(|x| *x >= 0.0)
                    .ok_or_else(|| schema(&format!("suite.tolerances.{name}"), "expected a number ≥ 0"))?;
                tolerances.insert(name.clone(), tol);
            }
        }
        let seed = match suite.get("seed") {
            None => 0,
            Some(v) => v.as_u64().ok_or_else(|| schema("suite.seed", "expected a non-negative integer"))?,
        };
        let output = match suite.get("output") {
            None => None,
            Some(v) => Some(PathBuf::from(
                v.as_str().ok_or_else(|| schema("suite.output", "expected a path"))?,
            )),
        };
        let workers = match suite.get("workers") {
            None => 1,
            Some(v) => v
                .as_u64()
                .filter(|w| *w >= 1)
                .ok_or_else(|| schema("suite.workers", "expected a positive integer"))? as usize,
        };
        let hash = hex(&Sha256::digest(serde_json::to_string(root).expect("json value serializes").as_bytes()));
        Ok(Self {
            system,
            source: None,
            checks,
            tolerances,
            seed,
            output,
            workers,
            hash,
        })
    }

    pub fn tolerance(&self, name: &str) -> Option<f64> {
        self.tolerances
            .get(name)
            .copied()
            .or_else(|| find_check(name).map(|c| c.tolerance))
    }
}

fn schema(field: &str, message: &str) -> Error {
    Error::Schema {
        field: field.into(),
        message: message.into(),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub runtime: Duration,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// One record per requested check, sorted by name.
    pub records: Vec<CheckRecord>,
    pub environment: String,
    pub config_hash: String,
    pub seed: u64,
}

/// Header of the CSV report.
pub const CSV_HEADER: &str = "check,value,tolerance,pass,error";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn record(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Timing-free CSV, reproducible for a fixed config and seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{},{}",
                r.name,
                r.value,
                r.tolerance,
                r.pass,
                csv_field(r.error.as_deref().unwrap_or(""))
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "environment: {}", self.environment);
        let _ = writeln!(out, "config sha256: {}", self.config_hash);
        let _ = writeln!(out, "seed: {}", self.seed);
        let width = self.records.iter().map(|r| r.name.len()).max().unwrap_or(0);
        for r in &self.records {
            let _ = write!(
                out,
                "{:<width$}  {}  value {:<12.4e} tol {:<9.2e} {:>8.2}s",
                r.name,
                if r.pass { "PASS" } else { "FAIL" },
                r.value,
                r.tolerance,
                r.runtime.as_secs_f64(),
            );
            if let Some(e) = &r.error {
                let _ = write!(out, "  error: {e}");
            }
            out.push('\n');
        }
        let passed = self.records.iter().filter(|r| r.pass).count();
        let _ = writeln!(out, "{passed}/{} checks passed", self.records.len());
        out
    }

    /// Writes `report.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        Ok(())
    }
}

pub fn environment_stamp() -> String {
    format!(
        "ou-core {} on {}-{}",
        env!("CARGO_PKG_VERSION"),
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

fn run_check(ctx: &SuiteContext, cfg: &SuiteConfig, name: &str) -> CheckRecord {
    let check = find_check(name).expect("names validated at parse time");
    let tolerance = cfg.tolerance(name).expect("registered check");
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, name));
    let start = Instant::now();
    let outcome = (check.run)(ctx, &mut rng);
    let runtime = start.elapsed();
    let (value, error) = match outcome {
        Ok(v) => (v, None),
        Err(e) => (f64::NAN, Some(e.to_string())),
    };
    CheckRecord {
        name: name.to_string(),
        value,
        tolerance,
        pass: error.is_none() && tolerance > 0.0 && value < tolerance,
        runtime,
        error,
    }
}

/// Runs every requested check; failures are recorded, never fatal.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Report> {
    let ctx = SuiteContext::new(cfg.system.clone(), cfg.seed);
    let mut records: Vec<CheckRecord> = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| cfg.checks.par_iter().map(|n| run_check(&ctx, cfg, n)).collect())
    } else {
        cfg.checks.iter().map(|n| run_check(&ctx, cfg, n)).collect()
    };
    records.sort_by(|a, b| a.name.cmp(&b.name));
    let report = Report {
        records,
        environment: environment_stamp(),
        config_hash: cfg.hash.clone(),
        seed: cfg.seed,
    };
    if let Some(dir) = &cfg.output {
        report.write(dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_split_by_name() {
        assert_ne!(split_seed(0, "a"), split_seed(0, "b"));
        assert_ne!(split_seed(0, "a"), split_seed(1, "a"));
        assert_eq!(split_seed(5, "x"), split_seed(5, "x"));
    }

    #[test]
    fn config_parsing() {
        let cfg = SuiteConfig::parse("[suite]\nchecks = [\"fourier-identity\"]\nseed = 3\n").unwrap();
        assert_eq!(cfg.checks, vec!["fourier-identity".to_string()]);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.tolerance("fourier-identity"), Some(1e-8));
        assert!(matches!(
            SuiteConfig::parse("[suite]\nchecks = [\"nope\"]\n"),
            Err(Error::UnknownCheck(_))
        ));
        assert!(SuiteConfig::parse("[suite]\nbogus = 1\n").is_err());
        let all = SuiteConfig::default();
        assert_eq!(all.checks.len(), registry().len());
        assert_ne!(all.hash, cfg.hash);
    }

    #[test]
    fn single_check_report() {
        let cfg = SuiteConfig::parse("[suite]\nchecks = [\"fourier-identity\"]\n").unwrap();
        let report = run_suite(&cfg).unwrap();
        assert_eq!(report.records.len(), 1);
        assert!(report.all_passed(), "{}", report.to_text());
        let csv = report.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn zero_tolerance_fails_everything() {
        let cfg = SuiteConfig::parse(
            "[suite]\nchecks = [\"evolution-law\", \"closed-form-benchmark\"]\n\
             tolerances = { evolution-law = 0.0, closed-form-benchmark = 0.0 }\n",
        )
        .unwrap();
        let report = run_suite(&cfg).unwrap();
        assert_eq!(report.records.len(), 2);
        assert!(report.records.iter().all(|r| !r.pass && r.error.is_none()));
    }
}
