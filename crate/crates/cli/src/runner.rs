//! Experiment execution: dataset loading, the epoch loop with per-epoch
//! test evaluation, metrics/checkpoint/summary artifacts, and the resume
//! and eval entry points.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ebp_core::checkpoint::{self, Checkpoint, Seeds};
use ebp_core::engine::{self, DropoutConfig, EpochDropout};
use ebp_core::mnist::{self, DatasetView, PreprocessedDataset};
use ebp_core::model::{Architecture, BinaryPosterior, LayerTopology, Posterior, RealPosterior};
use ebp_core::predict::{evaluate_deterministic, evaluate_probabilistic, ExpectationModel};
use ebp_core::rng;

use crate::config::{ExperimentConfig, InputMode, Mode, PartialConfig};
use crate::RunError;

/// Test split plus everything needed to build architectures against it.
struct PreparedData {
    train: PreprocessedDataset,
    test: PreprocessedDataset,
    input_grid: (usize, usize),
}

fn load_data(dir: &Path) -> Result<PreparedData, RunError> {
    let (train_raw, test_raw) = mnist::load_mnist_dir(dir)?;
    let input_grid = (train_raw.images.rows, train_raw.images.cols);
    let classes = mnist::class_count(&train_raw, &test_raw);
    let (train, test, _) = mnist::standardize(&train_raw, &test_raw, classes)?;
    Ok(PreparedData { train, test, input_grid })
}

fn build_architecture(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Arc<Architecture>, RunError> {
    let classes = data.train.output_dim;
    let arch = match cfg.input_mode {
        InputMode::Vector => {
            let mut sizes = vec![data.train.input_dim];
            sizes.extend_from_slice(&cfg.hidden);
            sizes.push(classes);
            Architecture::dense(&sizes)?
        }
        InputMode::Spatial => Architecture::spatial(data.input_grid, &cfg.block, classes)?,
    };
    if arch.input_dim() != data.train.input_dim {
        return Err(RunError::config(format!(
            "architecture expects {} inputs but the dataset has {}",
            arch.input_dim(),
            data.train.input_dim
        )));
    }
    Ok(Arc::new(arch))
}

/// Human-readable topology name: dash-joined layer sizes for dense
/// networks, `spatial(b, ...)` for masked ones.
fn architecture_label(arch: &Architecture) -> String {
    let blocks: Vec<String> = (1..=arch.depth())
        .filter_map(|l| match arch.topology(l) {
            LayerTopology::Masked(m) => Some(m.block().to_string()),
            LayerTopology::Dense => None,
        })
        .collect();
    if blocks.is_empty() {
        arch.sizes().iter().map(usize::to_string).collect::<Vec<_>>().join("-")
    } else {
        format!("spatial({})", blocks.join(","))
    }
}

/// EBP-P (probabilistic readout, activation means scaled by `scale`) and
/// EBP-D (clipped sign network) test errors.
fn evaluate_pair(post: &Posterior, scale: f64, test: &DatasetView) -> Result<(f64, f64), RunError> {
    let model = ExpectationModel::new(post, scale)?;
    let p = evaluate_probabilistic(&model, test)?;
    let d = evaluate_deterministic(&post.clip(), test)?;
    Ok((p, d))
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|e| RunError::data(format!("cannot write {}: {e}", path.display())))
}

/// Fresh training run.
pub fn train(cfg: &ExperimentConfig) -> Result<(), RunError> {
    run(cfg, None)
}

/// Continues a checkpointed run. Configuration values that the checkpoint
/// already fixes (mode, dropout, seeds, architecture) may be omitted; when
/// given they must agree with the checkpoint.
pub fn resume(given: PartialConfig, checkpoint_path: &Path) -> Result<(), RunError> {
    let cp = checkpoint::load(checkpoint_path)?;
    let mode = match cp.posterior {
        Posterior::Binary(_) => Mode::Binary,
        Posterior::Real(_) => Mode::Real,
    };
    let dropout = cp.keep_prob < 1.0;

    if let Some(m) = given.mode {
        if m != mode {
            return Err(RunError::config(format!("--mode {m} conflicts with the {mode} checkpoint")));
        }
    }
    if let Some(d) = given.dropout {
        if d != dropout {
            return Err(RunError::config(format!(
                "--dropout {d} conflicts with the checkpoint (keep probability {})",
                cp.keep_prob
            )));
        }
    }
    if dropout {
        if let Some(p) = given.p {
            if p != cp.keep_prob {
                return Err(RunError::config(format!(
                    "--p {p} conflicts with the checkpoint keep probability {}",
                    cp.keep_prob
                )));
            }
        }
    }
    for (flag, explicit, stored) in [
        ("--seed-init", given.seed_init, cp.seeds.init),
        ("--seed-shuffle", given.seed_shuffle, cp.seeds.shuffle),
        ("--seed-dropout", given.seed_dropout, cp.seeds.dropout),
    ] {
        if let Some(s) = explicit {
            if s != stored {
                return Err(RunError::config(format!("{flag} {s} conflicts with checkpoint seed {stored}")));
            }
        }
    }

    let epochs = given.epochs.unwrap_or(120);
    if epochs <= cp.epoch {
        return Err(RunError::config(format!(
            "checkpoint is already at epoch {}, nothing to train up to --epochs {epochs}",
            cp.epoch
        )));
    }

    let cfg = ExperimentConfig {
        mode,
        input_mode: given.input_mode.unwrap_or(InputMode::Vector),
        hidden: given.hidden.unwrap_or_default(),
        block: given.block.unwrap_or_default(),
        dropout,
        p: if dropout { cp.keep_prob } else { given.p.unwrap_or(0.8) },
        epochs,
        subset: given.subset.unwrap_or(0),
        seed_init: cp.seeds.init,
        seed_shuffle: cp.seeds.shuffle,
        seed_dropout: cp.seeds.dropout,
        data_dir: given.data_dir.unwrap_or_else(|| "data".into()),
        out: given.out.ok_or_else(|| RunError::config("no output directory: pass --out or set out= in the config file"))?,
    };
    run(&cfg, Some(cp))
}

/// The epoch loop shared by `train` and `resume`.
///
/// Artifacts in `cfg.out`: `config.txt` (the resolved configuration,
/// reloadable with `--config`), `metrics.csv` (one evaluation row per
/// epoch plus the epoch-0 baseline on fresh runs), `checkpoint.bin`
/// (rewritten after every finite epoch), and `summary.txt`. A non-finite
/// posterior aborts with the last good checkpoint on disk.
fn run(cfg: &ExperimentConfig, start: Option<Checkpoint>) -> Result<(), RunError> {
    let started = Instant::now();
    let data = load_data(&cfg.data_dir)?;

    // Architecture: built from the configuration when specified, adopted
    // from the checkpoint otherwise; both present must agree.
    let explicit_topology = !cfg.hidden.is_empty() || !cfg.block.is_empty();
    let (arch, mut posterior, start_epoch) = match start {
        None => {
            let arch = build_architecture(cfg, &data)?;
            let posterior = match cfg.mode {
                Mode::Binary => Posterior::Binary(BinaryPosterior::init(&arch, cfg.seed_init)),
                Mode::Real => Posterior::Real(RealPosterior::init(&arch, cfg.seed_init)),
            };
            (arch, posterior, 0)
        }
        Some(cp) => {
            let arch = Arc::clone(cp.posterior.arch());
            if explicit_topology {
                let configured = build_architecture(cfg, &data)?;
                if *configured != *arch {
                    return Err(RunError::config(format!(
                        "configured architecture {} does not match checkpoint architecture {}",
                        architecture_label(&configured),
                        architecture_label(&arch)
                    )));
                }
            }
            if arch.input_dim() != data.train.input_dim {
                return Err(RunError::config(format!(
                    "checkpoint architecture expects {} inputs but the dataset has {}",
                    arch.input_dim(),
                    data.train.input_dim
                )));
            }
            (arch, cp.posterior, cp.epoch)
        }
    };
    let label = architecture_label(&arch);
    let seeds = Seeds { init: cfg.seed_init, shuffle: cfg.seed_shuffle, dropout: cfg.seed_dropout };
    let keep_prob = if cfg.dropout { cfg.p } else { 1.0 };

    fs::create_dir_all(&cfg.out)
        .map_err(|e| RunError::data(format!("cannot create output directory {}: {e}", cfg.out.display())))?;
    write_file(&cfg.out.join("config.txt"), &cfg.to_file_string())?;

    let subset = (cfg.subset > 0).then_some(cfg.subset);
    let train_view = DatasetView::shuffle_and_subset(&data.train, cfg.seed_shuffle, subset)?;
    let test_view = DatasetView::full(&data.test);

    let csv_path = cfg.out.join("metrics.csv");
    let mut csv = fs::File::create(&csv_path)
        .map_err(|e| RunError::data(format!("cannot create {}: {e}", csv_path.display())))?;
    let write_row = |csv: &mut fs::File, epoch: u32, train_err: Option<f64>, p: f64, d: f64, wall: f64| {
        let mut row = format!("{epoch},");
        if let Some(t) = train_err {
            let _ = write!(row, "{t:.6}");
        }
        let _ = writeln!(row, ",{p:.6},{d:.6},{wall:.3}");
        csv.write_all(row.as_bytes())
            .map_err(|e| RunError::data(format!("cannot write {}: {e}", csv_path.display())))
    };
    csv.write_all(b"epoch,train_error_running,test_err_ebp_p,test_err_ebp_d,wall_seconds\n")
        .map_err(|e| RunError::data(format!("cannot write {}: {e}", csv_path.display())))?;

    let mut last = None;
    if start_epoch == 0 {
        let (p, d) = evaluate_pair(&posterior, keep_prob, &test_view)?;
        write_row(&mut csv, 0, None, p, d, started.elapsed().as_secs_f64())?;
        println!("epoch 0/{}: baseline ebp-p {p:.4} ebp-d {d:.4}", cfg.epochs);
        last = Some((0, None, p, d));
    }

    let mut completed = start_epoch;
    for e in start_epoch..cfg.epochs {
        let dropout = cfg
            .dropout
            .then(|| DropoutConfig::new(cfg.p).map(|config| EpochDropout { config, mask_seed: rng::epoch_seed(seeds.dropout, e) }))
            .transpose()?;
        let order_seed = rng::epoch_seed(seeds.shuffle, e);
        let metrics = match &mut posterior {
            Posterior::Binary(b) => engine::train_epoch(b, &train_view, order_seed, dropout)?,
            Posterior::Real(r) => engine::train_epoch_real(r, &train_view, order_seed, dropout)?,
        };
        let finite = match &posterior {
            Posterior::Binary(b) => b.all_finite(),
            Posterior::Real(r) => r.all_finite(),
        };
        if !finite {
            write_summary(cfg, &label, keep_prob, completed, last, started.elapsed().as_secs_f64(), true)?;
            return Err(RunError::numerical(format!(
                "posterior became non-finite during epoch {}; checkpoint.bin holds epoch {completed}",
                e + 1
            )));
        }
        let (p, d) = evaluate_pair(&posterior, keep_prob, &test_view)?;
        write_row(&mut csv, e + 1, metrics.error_rate(), p, d, started.elapsed().as_secs_f64())?;
        let cp = Checkpoint { posterior: posterior.clone(), seeds, epoch: e + 1, keep_prob };
        checkpoint::save(&cfg.out.join("checkpoint.bin"), &cp)?;
        completed = e + 1;
        last = Some((e + 1, metrics.error_rate(), p, d));
        println!(
            "epoch {}/{}: train {} ebp-p {p:.4} ebp-d {d:.4} ({:.1}s)",
            e + 1,
            cfg.epochs,
            metrics.error_rate().map_or_else(|| "-".into(), |t| format!("{t:.4}")),
            started.elapsed().as_secs_f64()
        );
    }

    write_summary(cfg, &label, keep_prob, completed, last, started.elapsed().as_secs_f64(), false)?;
    Ok(())
}

/// Writes `summary.txt`. Final error keys are only present for runs that
/// finished, so aborted runs surface as absent cells in tables.
#[allow(clippy::too_many_arguments)]
fn write_summary(
    cfg: &ExperimentConfig,
    label: &str,
    keep_prob: f64,
    completed: u32,
    last: Option<(u32, Option<f64>, f64, f64)>,
    wall: f64,
    aborted: bool,
) -> Result<(), RunError> {
    let mut text = String::new();
    let _ = writeln!(text, "mode = {}", cfg.mode);
    let _ = writeln!(text, "architecture = {label}");
    let _ = writeln!(text, "dropout = {}", cfg.dropout);
    let _ = writeln!(text, "keep_prob = {keep_prob}");
    let _ = writeln!(text, "epochs = {}", cfg.epochs);
    let _ = writeln!(text, "completed_epochs = {completed}");
    let _ = writeln!(text, "subset = {}", cfg.subset);
    let _ = writeln!(text, "seed_init = {}", cfg.seed_init);
    let _ = writeln!(text, "seed_shuffle = {}", cfg.seed_shuffle);
    let _ = writeln!(text, "seed_dropout = {}", cfg.seed_dropout);
    if !aborted {
        if let Some((_, train_err, p, d)) = last {
            if let Some(t) = train_err {
                let _ = writeln!(text, "final_train_error = {t:.6}");
            }
            let _ = writeln!(text, "final_test_err_ebp_p = {p:.6}");
            let _ = writeln!(text, "final_test_err_ebp_d = {d:.6}");
        }
    }
    let _ = writeln!(text, "wall_seconds_total = {wall:.3}");
    let _ = writeln!(text, "aborted = {aborted}");
    write_file(&cfg.out.join("summary.txt"), &text)
}

/// Evaluates a checkpoint on the test split, printing key=value metrics
/// and optionally writing them to a file.
pub fn eval(checkpoint_path: &Path, data_dir: &Path, out: Option<&Path>) -> Result<(), RunError> {
    let cp = checkpoint::load(checkpoint_path)?;
    let data = load_data(data_dir)?;
    if cp.posterior.arch().input_dim() != data.test.input_dim {
        return Err(RunError::config(format!(
            "checkpoint architecture expects {} inputs but the dataset has {}",
            cp.posterior.arch().input_dim(),
            data.test.input_dim
        )));
    }
    let (p, d) = evaluate_pair(&cp.posterior, cp.keep_prob, &DatasetView::full(&data.test))?;
    let mode = match cp.posterior {
        Posterior::Binary(_) => Mode::Binary,
        Posterior::Real(_) => Mode::Real,
    };
    let mut text = String::new();
    let _ = writeln!(text, "mode = {mode}");
    let _ = writeln!(text, "architecture = {}", architecture_label(cp.posterior.arch()));
    let _ = writeln!(text, "epoch = {}", cp.epoch);
    let _ = writeln!(text, "keep_prob = {}", cp.keep_prob);
    let _ = writeln!(text, "test_err_ebp_p = {p:.6}");
    let _ = writeln!(text, "test_err_ebp_d = {d:.6}");
    print!("{text}");
    if let Some(path) = out {
        write_file(path, &text)?;
    }
    Ok(())
}
