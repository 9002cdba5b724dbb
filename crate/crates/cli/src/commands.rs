use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ndarray::{s, Array2, ArrayView2};

use chaosgen::checkpoint::{self, Checkpoint};
use chaosgen::dataio::matrix::{read_matrix, write_matrix, MATRIX_MAGIC};
use chaosgen::dataio::pgm::sidecar_path;
use chaosgen::dataio::{display_shape, export_image_grid, export_receptive_fields, load_idx, Dataset};
use chaosgen::dynamics::{chaos_probe, simulate_free};
use chaosgen::metrics::{error_reconstruction, evaluate, reconstruct, reconstruction_initial_state, MetricReport, CSV_HEADER};
use chaosgen::params::{Model, SimConfig};
use chaosgen::rng::{Purpose, StreamKey};
use chaosgen::training::{train, LogRow, TrainHooks};

use crate::config::{RunConfig, SCHEMA};
use crate::{CliError, CliResult, Reject};

/// Train chaotic recurrent networks as generative models.
#[derive(Debug, Parser)]
#[command(name = "chaosgen", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run of the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run free dynamics and save the visible activations.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of chains.
        #[arg(long, default_value_t = 64)]
        n_samples: usize,
        /// Output PGM grid; the raw matrix goes next to it with a `.mat` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated samples against a dataset and print the four indices.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Reference data: an IDX image file or a raw `.mat` matrix.
        #[arg(long)]
        data: PathBuf,
        /// Number of generated and reference samples (default: all rows).
        #[arg(long)]
        n_samples: Option<usize>,
        /// Score this raw sample matrix instead of generating.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Append a CSV row to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct data through the hidden layer (restricted models only).
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Number of leading data rows to reconstruct.
        #[arg(long, default_value_t = 16)]
        n_samples: usize,
        /// Output PGM with originals and reconstructions side by side.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export receptive fields of randomly chosen hidden units (restricted models only).
    ReceptiveFields {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 9)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the separation of two nearby trajectories over time.
    ChaosProbe {
        /// Probe the untrained network described by this config.
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        config: Option<PathBuf>,
        /// Probe a trained network.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        delta0: f64,
        /// Probe horizon (default: 200 tau).
        #[arg(long)]
        t_probe: Option<f64>,
        /// Time between recorded rows (default: tau).
        #[arg(long)]
        record_every: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a run configuration without running it.
    CheckConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the JSON schema of run configurations.
    Schema,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluation time (default: the training target time T).
    #[arg(long)]
    pub t_star: Option<f64>,
    /// Seed for initial conditions (default: the checkpoint's seed).
    #[arg(long)]
    pub seed: Option<u64>,
}

struct Loaded {
    ck: Checkpoint,
    sim: SimConfig,
    seed: u64,
}

impl Common {
    fn load(&self) -> CliResult<Loaded> {
        let ck = Checkpoint::load(&self.checkpoint).reject()?;
        let sim = ck.sim.with_target(self.t_star.unwrap_or(ck.sim.t_target));
        sim.steps().reject()?;
        let seed = self.seed.unwrap_or(ck.seed);
        Ok(Loaded { ck, sim, seed })
    }
}

impl Cli {
    pub fn run(self) -> CliResult<()> {
        match self.command {
            Command::Train { config, resume } => cmd_train(&config, resume.as_deref()),
            Command::Generate { common, n_samples, out } => cmd_generate(&common, n_samples, &out),
            Command::Evaluate {
                common,
                data,
                n_samples,
                samples,
                out,
            } => cmd_evaluate(&common, &data, n_samples, samples.as_deref(), out.as_deref()),
            Command::Reconstruct {
                common,
                data,
                n_samples,
                out,
            } => cmd_reconstruct(&common, &data, n_samples, &out),
            Command::ReceptiveFields {
                checkpoint,
                count,
                seed,
                out,
            } => cmd_receptive_fields(&checkpoint, count, seed, &out),
            Command::ChaosProbe {
                config,
                checkpoint,
                delta0,
                t_probe,
                record_every,
                seed,
                out,
            } => cmd_chaos_probe(
                config.as_deref(),
                checkpoint.as_deref(),
                delta0,
                t_probe,
                record_every,
                seed,
                out.as_deref(),
            ),
            Command::CheckConfig { config } => {
                let cfg = RunConfig::load(&config)?;
                let data = cfg.load_data()?;
                println!(
                    "ok: {} model {:?}, {} training samples, {} evaluation samples",
                    cfg.architecture.name(),
                    cfg.dims,
                    data.train.len(),
                    data.eval().len()
                );
                Ok(())
            }
            Command::Schema => {
                print!("{SCHEMA}");
                Ok(())
            }
        }
    }
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const SAMPLE_DIR: &str = "samples";
/// Samples in the grid image written with every checkpoint.
pub const GRID_SAMPLES: usize = 64;

fn cmd_train(config: &Path, resume: Option<&Path>) -> CliResult<()> {
    let cfg = RunConfig::load(config)?;
    let mut errors = Vec::new();
    let data = cfg.load_data().map_err(|e| errors.extend(e)).ok();
    let start = match resume {
        Some(path) => match Checkpoint::load(path) {
            Ok(ck) => {
                errors.extend(resume_mismatches(&ck, &cfg));
                Some((ck.model, ck.epoch))
            }
            Err(e) => {
                errors.push(format!("--resume: {e}"));
                None
            }
        },
        None => {
            if cfg.output_dir.join(METRICS_FILE).exists() {
                errors.push(format!(
                    "output_dir: {} already holds a run; pass --resume or choose another directory",
                    cfg.output_dir.display()
                ));
            }
            match Model::init(cfg.architecture, &cfg.dims, cfg.g, cfg.train.seed) {
                Ok(m) => Some((m, 0)),
                Err(e) => {
                    errors.push(format!("model: {e}"));
                    None
                }
            }
        }
    };
    let (Some(data), Some((model, start_epoch)), true) = (data, start, errors.is_empty()) else {
        return Err(CliError::Invalid(errors));
    };

    let dir = &cfg.output_dir;
    let io = |p: &Path, e: std::io::Error| CliError::Runtime(format!("{}: {e}", p.display()));
    for sub in [CHECKPOINT_DIR, SAMPLE_DIR] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| io(&dir.join(sub), e))?;
    }
    let metrics_path = dir.join(METRICS_FILE);
    prepare_metrics(&metrics_path, start_epoch).map_err(|e| io(&metrics_path, e))?;
    let metrics = OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| io(&metrics_path, e))?;

    let image_shape = match data.train.image_shape {
        Some((r, c)) if r * c == cfg.dims[0] => (r, c),
        _ => display_shape(cfg.dims[0]),
    };
    let mut hooks = RunHooks {
        dir: dir.clone(),
        metrics,
        sim: cfg.sim(),
        seed: cfg.train.seed,
        image_shape,
        last_checkpoint: None,
    };
    let eval = data.eval.as_ref();
    match train(model, start_epoch, &data.train, eval, &cfg.train, &mut hooks) {
        Ok(_) => {
            println!("done: {} epochs, outputs in {}", cfg.train.epochs, dir.display());
            Ok(())
        }
        Err(e) => Err(CliError::Runtime(match &hooks.last_checkpoint {
            Some(p) => format!("{e} (last checkpoint: {})", p.display()),
            None => e.to_string(),
        })),
    }
}

fn resume_mismatches(ck: &Checkpoint, cfg: &RunConfig) -> Vec<String> {
    let mut errors = Vec::new();
    let mut check = |ok: bool, what: &str, found: String, expected: String| {
        if !ok {
            errors.push(format!("--resume: checkpoint {what} is {found}, config has {expected}"));
        }
    };
    let (arch, dims) = (ck.model.architecture(), ck.model.layer_sizes());
    check(arch == cfg.architecture, "architecture", arch.name().into(), cfg.architecture.name().into());
    check(dims == cfg.dims, "layer sizes", format!("{dims:?}"), format!("{:?}", cfg.dims));
    check(ck.model.g() == cfg.g, "gain", ck.model.g().to_string(), cfg.g.to_string());
    check(ck.sim == cfg.sim(), "sim", format!("{:?}", ck.sim), format!("{:?}", cfg.sim()));
    check(ck.seed == cfg.train.seed, "seed", ck.seed.to_string(), cfg.train.seed.to_string());
    check(
        ck.epoch <= cfg.train.epochs,
        "epoch",
        ck.epoch.to_string(),
        format!("{} total epochs", cfg.train.epochs),
    );
    errors
}

/// Start a fresh log, or drop rows past `start_epoch` from an existing one.
fn prepare_metrics(path: &Path, start_epoch: u64) -> std::io::Result<()> {
    let mut kept = vec![CSV_HEADER.to_string()];
    if start_epoch > 0 && path.exists() {
        for line in fs::read_to_string(path)?.lines().skip(1) {
            let epoch = line.split(',').next().and_then(|e| e.parse::<u64>().ok());
            if epoch.is_some_and(|e| e <= start_epoch) {
                kept.push(line.to_string());
            }
        }
    }
    let mut text = kept.join("\n");
    text.push('\n');
    fs::write(path, text)
}

struct RunHooks {
    dir: PathBuf,
    metrics: File,
    sim: SimConfig,
    seed: u64,
    image_shape: (usize, usize),
    last_checkpoint: Option<PathBuf>,
}

impl TrainHooks for RunHooks {
    fn on_metrics(&mut self, row: &LogRow) -> chaosgen::Result<()> {
        let path = self.dir.join(METRICS_FILE);
        writeln!(self.metrics, "{}", row.csv())
            .and_then(|_| self.metrics.flush())
            .map_err(|e| chaosgen::Error::Io { path, source: e })?;
        println!("{}", row.csv());
        Ok(())
    }

    fn on_checkpoint(&mut self, epoch: u64, model: &Model) -> chaosgen::Result<()> {
        let ck = Checkpoint {
            model: model.clone(),
            sim: self.sim,
            epoch,
            seed: self.seed,
        };
        let path = self.dir.join(CHECKPOINT_DIR).join(checkpoint::file_name(epoch));
        let tmp = path.with_extension("ckpt.tmp");
        ck.save(&tmp)?;
        fs::rename(&tmp, &path).map_err(|e| chaosgen::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        self.last_checkpoint = Some(path);

        let key = StreamKey::new(self.seed, Purpose::Generate, epoch);
        let samples = simulate_free(model, &self.sim, GRID_SAMPLES, &key)?;
        let grid = self.dir.join(SAMPLE_DIR).join(format!("epoch_{epoch:06}.pgm"));
        export_image_grid(samples.visible().view(), self.image_shape, 8, &grid)
    }
}

/// Read an IDX image file or a raw matrix dump.
pub fn read_data(path: &Path) -> chaosgen::Result<Dataset> {
    let mut magic = [0u8; 8];
    let is_matrix = File::open(path)
        .and_then(|mut f| std::io::Read::read_exact(&mut f, &mut magic))
        .is_ok()
        && &magic == MATRIX_MAGIC;
    if is_matrix {
        Dataset::new(read_matrix(path)?, None, path.display().to_string())
    } else {
        load_idx(path, None)
    }
}

fn grid_cols(n: usize) -> usize {
    (n as f64).sqrt().ceil().max(1.0) as usize
}

fn check_parent(out: &Path) -> CliResult<()> {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(CliError::invalid(format!("--out: directory {} does not exist", p.display())))
        }
        _ => Ok(()),
    }
}

fn cmd_generate(common: &Common, n_samples: usize, out: &Path) -> CliResult<()> {
    let Loaded { ck, sim, seed } = common.load()?;
    if n_samples == 0 {
        return Err(CliError::invalid("--n-samples must be >= 1"));
    }
    check_parent(out)?;
    let key = StreamKey::new(seed, Purpose::Generate, ck.epoch);
    let samples = simulate_free(&ck.model, &sim, n_samples, &key)?;
    let v = samples.visible().view();
    export_image_grid(v, display_shape(ck.model.n_v()), grid_cols(n_samples), out)?;
    let raw = out.with_extension("mat");
    write_matrix(&raw, v)?;
    println!("wrote {} and {}", out.display(), raw.display());
    Ok(())
}

fn cmd_evaluate(
    common: &Common,
    data: &Path,
    n_samples: Option<usize>,
    samples: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<()> {
    let clock = Instant::now();
    let Loaded { ck, sim, seed } = common.load()?;
    let data = read_data(data).reject()?;
    let gen = samples.map(read_matrix).transpose().reject()?;
    let n_eval = n_samples.unwrap_or_else(|| gen.as_ref().map_or(data.len(), |g| g.nrows()));
    if !(2..=data.len()).contains(&n_eval) {
        return Err(CliError::invalid(format!("--n-samples must be in [2, {}]", data.len())));
    }
    if data.n_v() != ck.model.n_v() {
        return Err(CliError::invalid(format!(
            "--data has {} values per sample, the model has {} visible units",
            data.n_v(),
            ck.model.n_v()
        )));
    }
    if let Some(out) = out {
        check_parent(out)?;
    }
    let key = StreamKey::new(seed, Purpose::Evaluation, ck.epoch);
    let report = match gen {
        None => evaluate(&ck.model, data.samples.view(), &sim, sim.t_target, n_eval, &key)?,
        Some(gen) => {
            if gen.dim() != (n_eval, ck.model.n_v()) {
                return Err(CliError::invalid(format!(
                    "--samples is {:?}, expected {:?}",
                    gen.dim(),
                    (n_eval, ck.model.n_v())
                )));
            }
            let held_out = data.samples.slice(s![..n_eval, ..]);
            let er = match &ck.model {
                Model::Restricted(_) => {
                    let rkey = StreamKey::new(seed, Purpose::Reconstruction, ck.epoch);
                    Some(error_reconstruction(&ck.model, held_out, &sim, &rkey)?)
                }
                _ => None,
            };
            MetricReport::from_samples(gen.view(), held_out, er, sim.t_target)?
        }
    };
    print!("epoch={}\n{}", ck.epoch, report.to_key_values());
    if let Some(out) = out {
        append_csv(out, &report.csv_row(ck.epoch, clock.elapsed().as_secs_f64()))
            .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn append_csv(path: &Path, row: &str) -> std::io::Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    writeln!(f, "{row}")
}

/// Originals and reconstructions interleaved so each pair sits side by side.
fn side_by_side(original: ArrayView2<f64>, rec: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((2 * original.nrows(), original.ncols()));
    for i in 0..original.nrows() {
        out.row_mut(2 * i).assign(&original.row(i));
        out.row_mut(2 * i + 1).assign(&rec.row(i));
    }
    out
}

fn cmd_reconstruct(common: &Common, data: &Path, n_samples: usize, out: &Path) -> CliResult<()> {
    let Loaded { ck, sim, seed } = common.load()?;
    let params = ck.model.as_restricted("reconstruct").reject()?;
    let data = read_data(data).reject()?;
    if !(1..=data.len()).contains(&n_samples) {
        return Err(CliError::invalid(format!("--n-samples must be in [1, {}]", data.len())));
    }
    if data.n_v() != params.n_v() {
        return Err(CliError::invalid(format!(
            "--data has {} values per sample, the model has {} visible units",
            data.n_v(),
            params.n_v()
        )));
    }
    check_parent(out)?;
    let xi = data.samples.slice(s![..n_samples, ..]);
    let key = StreamKey::new(seed, Purpose::Reconstruction, ck.epoch);
    let (h0, v0) = reconstruction_initial_state(params, n_samples, &key);
    let rec = reconstruct(params, xi, h0.view(), v0.view(), &sim)?;
    let er = (&xi - &rec).mapv(|x| x * x).mean().expect("non-empty");
    let pairs = side_by_side(xi, rec.view());
    export_image_grid(pairs.view(), display_shape(params.n_v()), 2 * grid_cols(n_samples), out)?;
    let raw = out.with_extension("mat");
    write_matrix(&raw, rec.view())?;
    println!("ER={er:e}");
    Ok(())
}

fn cmd_receptive_fields(checkpoint: &Path, count: usize, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let ck = Checkpoint::load(checkpoint).reject()?;
    let params = ck.model.as_restricted("receptive-fields").reject()?;
    if !(1..=params.n_h()).contains(&count) {
        return Err(CliError::invalid(format!("--count must be in [1, {}]", params.n_h())));
    }
    check_parent(out)?;
    let key = StreamKey::new(seed.unwrap_or(ck.seed), Purpose::Selection, ck.epoch);
    let units = rand::seq::index::sample(&mut key.rng(0), params.n_h(), count).into_vec();
    let scale = export_receptive_fields(params, &units, display_shape(params.n_v()), out)?;
    println!(
        "units={}\n{}wrote {} and {}",
        units.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        scale.sidecar_text(),
        out.display(),
        sidecar_path(out).display()
    );
    Ok(())
}

fn cmd_chaos_probe(
    config: Option<&Path>,
    checkpoint: Option<&Path>,
    delta0: f64,
    t_probe: Option<f64>,
    record_every: Option<f64>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CliResult<()> {
    let (model, sim, default_seed) = match (config, checkpoint) {
        (Some(path), _) => {
            let cfg = RunConfig::load(path)?;
            let model = Model::init(cfg.architecture, &cfg.dims, cfg.g, cfg.train.seed).reject()?;
            (model, cfg.sim(), cfg.train.seed)
        }
        (None, Some(path)) => {
            let ck = Checkpoint::load(path).reject()?;
            (ck.model, ck.sim, ck.seed)
        }
        (None, None) => return Err(CliError::invalid("pass --config or --checkpoint")),
    };
    if let Some(out) = out {
        check_parent(out)?;
    }
    let key = StreamKey::new(seed.unwrap_or(default_seed), Purpose::Probe, 0);
    let curve = chaos_probe(
        &model,
        &sim,
        delta0,
        t_probe.unwrap_or(200.0 * sim.tau),
        record_every.unwrap_or(sim.tau),
        &key,
    )
    .reject()?;
    let mut text = String::from("t,separation\n");
    for p in &curve {
        text.push_str(&format!("{},{:e}\n", p.t, p.distance));
    }
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}
