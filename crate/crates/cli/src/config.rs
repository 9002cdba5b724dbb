//! JSON run configuration.
//!
//! Validation walks the raw JSON so that every problem is collected and
//! reported together, rather than stopping at the first bad field.

use std::path::{Path, PathBuf};

use chaosgen::dataio::{load_idx, synthetic_dataset, Dataset, SyntheticKind};
use chaosgen::params::{Architecture, SimConfig};
use chaosgen::training::TrainConfig;
use serde_json::{Map, Value};

/// JSON schema of the run configuration.
pub const SCHEMA: &str = include_str!("../run-config.schema.json");

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Idx {
        images: PathBuf,
        labels: Option<PathBuf>,
        limit: Option<usize>,
    },
    Synthetic {
        kind: SyntheticKind,
        n_samples: usize,
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub architecture: Architecture,
    /// Layer sizes, visible first.
    pub dims: Vec<usize>,
    pub g: f64,
    pub train: TrainConfig,
    pub train_data: DataSpec,
    pub eval_data: Option<DataSpec>,
    pub output_dir: PathBuf,
}

/// Training and evaluation sets.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Dataset,
    pub eval: Option<Dataset>,
}

impl RunData {
    pub fn eval(&self) -> &Dataset {
        self.eval.as_ref().unwrap_or(&self.train)
    }
}

impl RunConfig {
    /// Read and validate a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![format!("cannot read config {}: {e}", path.display())])?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self, Vec<String>> {
        let value: Value = serde_json::from_str(text).map_err(|e| vec![format!("config is not valid JSON: {e}")])?;
        let mut c = Checker {
            errors: Vec::new(),
            base,
        };
        let parsed = c.run_config(&value);
        match parsed {
            Some(cfg) if c.errors.is_empty() => Ok(cfg),
            _ => Err(c.errors),
        }
    }

    /// Load or generate the datasets and check them against the model
    /// dimensions and batch sizes.
    pub fn load_data(&self) -> Result<RunData, Vec<String>> {
        let mut errors = Vec::new();
        let n_v = self.dims[0];
        let mut load = |spec: &DataSpec, name: &str, default_seed: u64| match build_dataset(spec, n_v, default_seed) {
            Ok(ds) if ds.n_v() != n_v => {
                errors.push(format!("data.{name}: {} values per sample, dimensions.n_v is {n_v}", ds.n_v()));
                None
            }
            Ok(ds) => Some(ds),
            Err(e) => {
                errors.push(format!("data.{name}: {e}"));
                None
            }
        };
        let train = load(&self.train_data, "train", self.train.seed);
        let eval = self
            .eval_data
            .as_ref()
            .map(|spec| load(spec, "eval", self.train.seed.wrapping_add(1)));
        if let Some(ds) = &train {
            if self.train.m_batch > ds.len() {
                errors.push(format!(
                    "train.m_batch: {} exceeds the {} training samples",
                    self.train.m_batch,
                    ds.len()
                ));
            }
        }
        let eval_len = match &eval {
            Some(Some(ds)) => Some(ds.len()),
            Some(None) => None,
            None => train.as_ref().map(Dataset::len),
        };
        if let Some(len) = eval_len {
            if self.train.eval_every > 0 && !(2..=len).contains(&self.train.n_eval) {
                errors.push(format!("train.n_eval: {} must be in [2, {len}]", self.train.n_eval));
            }
        }
        match (train, eval) {
            (Some(train), None) if errors.is_empty() => Ok(RunData { train, eval: None }),
            (Some(train), Some(Some(eval))) if errors.is_empty() => Ok(RunData {
                train,
                eval: Some(eval),
            }),
            _ => Err(errors),
        }
    }

    pub fn sim(&self) -> SimConfig {
        self.train.sim
    }
}

/// Build a dataset from its spec. Synthetic sets without an explicit seed
/// use `default_seed`.
pub fn build_dataset(spec: &DataSpec, n_v: usize, default_seed: u64) -> chaosgen::Result<Dataset> {
    match spec {
        DataSpec::Idx { images, labels, limit } => {
            let ds = load_idx(images, labels.as_deref())?;
            match limit {
                Some(n) if *n < ds.len() => ds.head(*n),
                _ => Ok(ds),
            }
        }
        DataSpec::Synthetic { kind, n_samples, seed } => {
            synthetic_dataset(kind, *n_samples, n_v, seed.unwrap_or(default_seed))
        }
    }
}

struct Checker<'a> {
    errors: Vec<String>,
    base: &'a Path,
}

impl Checker<'_> {
    fn err(&mut self, path: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    fn object<'v>(&mut self, v: Option<&'v Value>, path: &str, allowed: &[&str]) -> Option<&'v Map<String, Value>> {
        match v {
            None => {
                self.err(path, "missing");
                None
            }
            Some(Value::Object(m)) => {
                for k in m.keys() {
                    if !allowed.contains(&k.as_str()) {
                        self.err(&format!("{path}.{k}"), "unknown field");
                    }
                }
                Some(m)
            }
            Some(_) => {
                self.err(path, "expected an object");
                None
            }
        }
    }

    fn number(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        let p = format!("{path}{key}");
        match m.get(key) {
            None => {
                self.err(&p, "missing");
                None
            }
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => {
                    self.err(&p, "expected a finite number");
                    None
                }
            },
        }
    }

    fn positive(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        let x = self.number(m, path, key)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.err(&format!("{path}{key}"), format!("must be > 0, got {x}"));
            None
        }
    }

    fn uint(&mut self, m: &Map<String, Value>, path: &str, key: &str, required: bool) -> Option<u64> {
        let p = format!("{path}{key}");
        match m.get(key) {
            None | Some(Value::Null) if !required => None,
            None => {
                self.err(&p, "missing");
                None
            }
            Some(v) => v.as_u64().or_else(|| {
                self.err(&p, "expected a non-negative integer");
                None
            }),
        }
    }

    fn count(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<usize> {
        let n = self.uint(m, path, key, true)?;
        if n >= 1 {
            Some(n as usize)
        } else {
            self.err(&format!("{path}{key}"), "must be >= 1");
            None
        }
    }

    fn string<'v>(&mut self, m: &'v Map<String, Value>, path: &str, key: &str, required: bool) -> Option<&'v str> {
        let p = format!("{path}{key}");
        match m.get(key) {
            None | Some(Value::Null) if !required => None,
            None => {
                self.err(&p, "missing");
                None
            }
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                self.err(&p, "expected a string");
                None
            }
        }
    }

    fn existing_file(&mut self, m: &Map<String, Value>, path: &str, key: &str, required: bool) -> Option<PathBuf> {
        let s = self.string(m, path, key, required)?;
        let p = self.base.join(s);
        if p.is_file() {
            Some(p)
        } else {
            self.err(&format!("{path}{key}"), format!("file {} does not exist", p.display()));
            None
        }
    }

    fn run_config(&mut self, v: &Value) -> Option<RunConfig> {
        let top = self.object(
            Some(v),
            "config",
            &["$schema", "architecture", "dimensions", "g", "sim", "train", "data", "seed", "output_dir"],
        )?;
        let arch = match self.string(top, "", "architecture", true) {
            Some("unrestricted") => Some(Architecture::Unrestricted),
            Some("restricted") => Some(Architecture::Restricted),
            Some("deep") => Some(Architecture::Deep),
            Some(other) => {
                self.err("architecture", format!("expected unrestricted, restricted or deep, got {other:?}"));
                None
            }
            None => None,
        };
        let dims = self.dimensions(top.get("dimensions"), arch);
        let g = self.number(top, "", "g").filter(|&g| {
            let ok = g >= 0.0;
            if !ok {
                self.err("g", format!("must be >= 0, got {g}"));
            }
            ok
        });
        let sim = self.sim(top.get("sim"));
        let seed = self.uint(top, "", "seed", true);
        let train = self.train(top.get("train"), sim, seed);
        let (train_data, eval_data) = self.data(top.get("data"));
        let output_dir = self.string(top, "", "output_dir", true).map(|s| self.base.join(s));
        if let Some(dir) = &output_dir {
            if dir.is_file() {
                self.err("output_dir", format!("{} is a file", dir.display()));
            }
        }
        Some(RunConfig {
            architecture: arch?,
            dims: dims?,
            g: g?,
            train: train?,
            train_data: train_data?,
            eval_data: eval_data?,
            output_dir: output_dir?,
        })
    }

    fn dimensions(&mut self, v: Option<&Value>, arch: Option<Architecture>) -> Option<Vec<usize>> {
        let m = self.object(v, "dimensions", &["n_v", "n_h", "n_h1", "n_h2"])?;
        let keys: &[&str] = match arch? {
            Architecture::Unrestricted => &["n_v"],
            Architecture::Restricted => &["n_v", "n_h"],
            Architecture::Deep => &["n_v", "n_h1", "n_h2"],
        };
        for k in m.keys() {
            if !keys.contains(&k.as_str()) && ["n_v", "n_h", "n_h1", "n_h2"].contains(&k.as_str()) {
                self.err(&format!("dimensions.{k}"), format!("not used by the {} architecture", arch?.name()));
            }
        }
        let dims: Vec<_> = keys.iter().map(|k| self.count(m, "dimensions.", k)).collect();
        dims.into_iter().collect()
    }

    fn sim(&mut self, v: Option<&Value>) -> Option<SimConfig> {
        let m = self.object(v, "sim", &["dt", "tau", "t_target"])?;
        let dt = self.positive(m, "sim.", "dt");
        let tau = self.positive(m, "sim.", "tau");
        let t = self.number(m, "sim.", "t_target");
        let (dt, tau, t) = (dt?, tau?, t?);
        match SimConfig::new(dt, tau, t).and_then(|s| s.steps().map(|_| s)) {
            Ok(s) => Some(s),
            Err(e) => {
                self.err("sim", e);
                None
            }
        }
    }

    fn train(&mut self, v: Option<&Value>, sim: Option<SimConfig>, seed: Option<u64>) -> Option<TrainConfig> {
        let m = self.object(
            v,
            "train",
            &["k", "m_batch", "epochs", "eval_every", "checkpoint_every", "n_eval"],
        )?;
        let k = self.positive(m, "train.", "k");
        let m_batch = self.count(m, "train.", "m_batch");
        let epochs = self.uint(m, "train.", "epochs", true);
        let eval_every = self.uint(m, "train.", "eval_every", true);
        let checkpoint_every = self.uint(m, "train.", "checkpoint_every", true).filter(|&c| {
            if c == 0 {
                self.err("train.checkpoint_every", "must be >= 1");
            }
            c >= 1
        });
        let n_eval = self.count(m, "train.", "n_eval");
        Some(TrainConfig {
            k: k?,
            m_batch: m_batch?,
            epochs: epochs?,
            sim: sim?,
            eval_every: eval_every?,
            checkpoint_every: checkpoint_every?,
            n_eval: n_eval?,
            seed: seed?,
        })
    }

    fn data(&mut self, v: Option<&Value>) -> (Option<DataSpec>, Option<Option<DataSpec>>) {
        let Some(m) = self.object(v, "data", &["train", "eval"]) else {
            return (None, None);
        };
        let train = self.data_spec(m.get("train"), "data.train");
        let eval = match m.get("eval") {
            None | Some(Value::Null) => Some(None),
            Some(e) => self.data_spec(Some(e), "data.eval").map(Some),
        };
        (train, eval)
    }

    fn data_spec(&mut self, v: Option<&Value>, path: &str) -> Option<DataSpec> {
        let m = self.object(
            v,
            path,
            &["kind", "images", "labels", "limit", "generator", "n_samples", "seed", "noise", "source"],
        )?;
        let p = format!("{path}.");
        let allowed: &[&str] = match self.string(m, &p, "kind", true)? {
            "idx" => &["kind", "images", "labels", "limit"],
            "synthetic" => &["kind", "generator", "n_samples", "seed", "noise", "source"],
            other => {
                self.err(&format!("{p}kind"), format!("expected idx or synthetic, got {other:?}"));
                return None;
            }
        };
        for k in m.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&format!("{p}{k}"), "not valid for this kind");
            }
        }
        if allowed.contains(&"images") {
            let images = self.existing_file(m, &p, "images", true);
            let labels = self.existing_file(m, &p, "labels", false);
            let labels_ok = m.get("labels").is_none_or(Value::is_null) || labels.is_some();
            let limit = self.uint(m, &p, "limit", false).map(|n| n as usize);
            if limit == Some(0) {
                self.err(&format!("{p}limit"), "must be >= 1");
                return None;
            }
            return (labels_ok && images.is_some()).then(|| DataSpec::Idx {
                images: images.unwrap(),
                labels,
                limit,
            });
        }
        let n_samples = self.count(m, &p, "n_samples");
        let seed = self.uint(m, &p, "seed", false);
        let seed_ok = m.get("seed").is_none_or(Value::is_null) || seed.is_some();
        let kind = match self.string(m, &p, "generator", true)? {
            "two-clusters" => {
                let noise = self.number(m, &p, "noise")?;
                if noise < 0.0 {
                    self.err(&format!("{p}noise"), format!("must be >= 0, got {noise}"));
                    return None;
                }
                SyntheticKind::TwoClusters { noise }
            }
            "bars-and-stripes" => SyntheticKind::BarsAndStripes,
            "downscaled-digits" => {
                let source = match m.get("source") {
                    None | Some(Value::Null) => None,
                    Some(_) => Some(self.existing_file(m, &p, "source", true)?),
                };
                SyntheticKind::DownscaledDigits { source }
            }
            other => {
                self.err(
                    &format!("{p}generator"),
                    format!("expected two-clusters, bars-and-stripes or downscaled-digits, got {other:?}"),
                );
                return None;
            }
        };
        for (key, used) in [("noise", matches!(kind, SyntheticKind::TwoClusters { .. })), ("source", matches!(kind, SyntheticKind::DownscaledDigits { .. }))] {
            if !used && m.contains_key(key) {
                self.err(&format!("{p}{key}"), "not used by this generator");
            }
        }
        seed_ok.then_some(DataSpec::Synthetic {
            kind,
            n_samples: n_samples?,
            seed,
        })
    }
}
