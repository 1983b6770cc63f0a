//! `isoattack` command line.
//!
//! Every subcommand reads and writes under `--out` (default `out`):
//!
//! | subcommand       | reads                              | writes                         |
//! |------------------|------------------------------------|--------------------------------|
//! | `gen-data`       |                                    | `data/manifest.json`, clouds   |
//! | `train`          | `data/manifest.json`               | `model.ckpt`, `train_report.json` |
//! | `attack-tsi`     | `model.ckpt`, `data/manifest.json` | `tsi/`                         |
//! | `attack-ctri`    | `model.ckpt`, `data/manifest.json` | `ctri/`                        |
//! | `transfer`       | `[transfer] checkpoints`           | `transfer/`                    |
//! | `tradeoff`       | `[data]`, `[train]`                | `tradeoff/`                    |
//! | `heatmap`        | `tsi/bandit/*.json` or `--input`   | `heatmaps/`                    |
//! | `convert-report` | `--input <report dir>`             | report files in `--format`     |
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2 for
//! runtime failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use super::config::ExperimentConfig;
use super::experiments::{tradeoff_csv, transfer_matrix_csv};
use super::report::RunOutput;
use super::{run_augmentation_tradeoff, run_ctri_eval, run_transfer_eval, run_tsi_eval, sub_seed, HarnessError};
use crate::bandit::BanditState;
use crate::model::{load_checkpoint, save_checkpoint, train, MiniPointNet};
use crate::pointcloud::{generate_shapes, Dataset, DatasetManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "isoattack",
    version,
    about = "Isometry attacks on point-cloud classifiers",
    arg_required_else_help = true
)]
struct Cli {
    /// TOML experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the file's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic shape dataset.
    GenData,
    /// Train the toy classifier.
    Train,
    /// Black-box bandit attack.
    AttackTsi,
    /// White-box gradient attack with a bandit warm start.
    AttackCtri,
    /// Transfer matrix between trained models.
    Transfer,
    /// Rotation-augmentation sweep.
    Tradeoff,
    /// Render bandit posteriors as CSV and PGM heat maps.
    Heatmap {
        /// Saved bandit state (JSON).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Verify a report and rewrite it in `--format`.
    ConvertReport {
        /// Directory holding summary.json and outcomes.jsonl.
        #[arg(long)]
        input: PathBuf,
    },
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx<'a> {
    cfg: ExperimentConfig,
    seed: u64,
    out: &'a Path,
    format: ReportFormat,
}

impl Ctx<'_> {
    fn manifest_path(&self, explicit: &Option<PathBuf>) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out.join("data").join("manifest.json"))
    }

    fn checkpoint_path(&self, explicit: &Option<PathBuf>) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out.join("model.ckpt"))
    }

    fn data_spec(&self) -> crate::pointcloud::ShapeDatasetSpec {
        let mut spec = self.cfg.data.spec.clone();
        if !self.cfg.explicit_data_seed {
            spec.seed = sub_seed(self.seed, "data");
        }
        spec
    }

    fn train_config(&self) -> crate::model::TrainConfig {
        let mut tc = self.cfg.train.config.clone();
        if !self.cfg.explicit_train_seed {
            tc.seed = sub_seed(self.seed, "train");
        }
        tc
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let ctx = Ctx {
        cfg,
        seed,
        out: &cli.out,
        format: cli.format,
    };
    match &cli.command {
        Command::GenData => gen_data(&ctx, stdout),
        Command::Train => train_cmd(&ctx, stdout),
        Command::AttackTsi => attack_tsi(&ctx, stdout),
        Command::AttackCtri => attack_ctri(&ctx, stdout),
        Command::Transfer => transfer(&ctx, stdout),
        Command::Tradeoff => tradeoff(&ctx, stdout),
        Command::Heatmap { input } => heatmap(&ctx, input.as_deref(), stdout),
        Command::ConvertReport { input } => convert_report(&ctx, input, stdout),
    }
}

fn say(stdout: &mut dyn Write, msg: impl AsRef<str>) {
    let _ = writeln!(stdout, "{}", msg.as_ref());
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn load_model(path: &Path) -> Result<MiniPointNet, HarnessError> {
    load_checkpoint(path).map_err(|e| HarnessError::Runtime(format!("cannot load checkpoint {}: {e}", path.display())))
}

fn load_test_split(path: &Path) -> Result<Dataset, HarnessError> {
    let manifest = DatasetManifest::load(path)
        .map_err(|e| HarnessError::Runtime(format!("cannot load manifest {}: {e}", path.display())))?;
    let (_, test) = manifest
        .load_splits(path)
        .map_err(|e| HarnessError::Runtime(format!("cannot load dataset {}: {e}", path.display())))?;
    Ok(test)
}

fn emit(run: &RunOutput, dir: &Path, format: ReportFormat) -> Result<(), HarnessError> {
    run.write(dir)?;
    if format == ReportFormat::Csv {
        write_file(&dir.join("summary.csv"), &run.summary_csv())?;
        write_file(&dir.join("outcomes.csv"), &run.outcomes_csv())?;
    }
    Ok(())
}

fn print_rates(run: &RunOutput, stdout: &mut dyn Write) {
    for e in &run.report.entries {
        let s = &e.summary;
        match s.success_rate {
            Some(r) => say(stdout, format!("{:<28} success {:.3} ({}/{})", e.key, r, s.successes, s.attacked)),
            None => say(stdout, format!("{:<28} no clouds attacked", e.key)),
        }
    }
}

fn gen_data(ctx: &Ctx, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let spec = ctx.data_spec();
    spec.validate().map_err(HarnessError::Config)?;
    let (train, test) = generate_shapes(&spec);
    let dir = ctx.out.join("data");
    DatasetManifest::write_dataset(&dir, &spec, &train, &test, ctx.cfg.data.format)?;
    say(
        stdout,
        format!("wrote {} train and {} test clouds to {}", train.len(), test.len(), dir.display()),
    );
    Ok(())
}

fn train_cmd(ctx: &Ctx, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let manifest_path = ctx.manifest_path(&ctx.cfg.train.manifest);
    let manifest = DatasetManifest::load(&manifest_path)
        .map_err(|e| HarnessError::Runtime(format!("cannot load manifest {}: {e}", manifest_path.display())))?;
    let (train_set, test_set) = manifest.load_splits(&manifest_path)?;
    let tc = ctx.train_config();
    let (net, report) = train(&train_set, &test_set, manifest.classes.len(), &tc)?;
    let ckpt = ctx.checkpoint_path(&ctx.cfg.train.checkpoint);
    if let Some(parent) = ckpt.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    save_checkpoint(&net, &ckpt)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&ctx.out.join("train_report.json"), &(json + "\n"))?;
    say(
        stdout,
        format!(
            "test accuracy {:.4}, train accuracy {:.4}; checkpoint {}",
            report.test_accuracy,
            report.train_accuracy,
            ckpt.display()
        ),
    );
    Ok(())
}

fn file_stem_for(range: &str) -> String {
    range.replace('/', "_").replace(' ', "")
}

fn write_heatmaps(state: &BanditState, dir: &Path, stem: &str) -> Result<usize, HarnessError> {
    let marginals = state.heatmap_marginals();
    for m in &marginals {
        write_file(&dir.join(format!("{stem}_{}.csv", m.plane)), &m.to_csv())?;
        write_file(&dir.join(format!("{stem}_{}.pgm", m.plane)), &m.to_pgm())?;
    }
    Ok(marginals.len())
}

fn attack_tsi(ctx: &Ctx, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let sec = &ctx.cfg.attack_tsi;
    let model = load_model(&ctx.checkpoint_path(&sec.checkpoint))?;
    let test = load_test_split(&ctx.manifest_path(&sec.manifest))?;
    let out = run_tsi_eval(&model, &test, &sec.eval, ctx.seed)?;
    let dir = ctx.out.join("tsi");
    emit(&out.run, &dir, ctx.format)?;
    for (range, state) in &out.states {
        let stem = file_stem_for(range);
        let json = serde_json::to_string(state).expect("state serializes");
        write_file(&dir.join("bandit").join(format!("{stem}.json")), &(json + "\n"))?;
        write_heatmaps(state, &dir.join("heatmaps"), &stem)?;
    }
    print_rates(&out.run, stdout);
    say(stdout, format!("report in {}", dir.display()));
    Ok(())
}

fn attack_ctri(ctx: &Ctx, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let sec = &ctx.cfg.attack_ctri;
    let model = load_model(&ctx.checkpoint_path(&sec.checkpoint))?;
    let test = load_test_split(&ctx.manifest_path(&sec.manifest))?;
    let run = run_ctri_eval(&model, &test, &sec.eval, ctx.seed)?;
    let dir = ctx.out.join("ctri");
    emit(&run, &dir, ctx.format)?;
    print_rates(&run, stdout);
    say(stdout, format!("report in {}", dir.display()));
    Ok(())
}

fn transfer(ctx: &Ctx, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let sec = &ctx.cfg.transfer;
    if sec.checkpoints.len() < 2 {
        return Err(HarnessError::Config(
            "transfer needs at least two paths in [transfer] checkpoints".into(),
        ));
    }
    let mut models = Vec::new();
    for (i, p) in sec.checkpoints.iter().enumerate() {
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("model{i}"));
        models.push((name, load_model(p)?));
    }
    let test = load_test_split(&ctx.manifest_path(&sec.manifest))?;
    let run = run_transfer_eval(&models, &test, &sec.eval, ctx.seed)?;
    let dir = ctx.out.join("transfer");
    emit(&run, &dir, ctx.format)?;
    if let Some(csv) = transfer_matrix_csv(&run.report) {
        write_file(&dir.join("transfer_matrix.csv"), &csv)?;
        say(stdout, csv.trim_end());
    }
    say(stdout, format!("report in {}", dir.display()));
    Ok(())
}

fn tradeoff(ctx: &Ctx, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let (run, rows) = run_augmentation_tradeoff(&ctx.data_spec(), &ctx.train_config(), &ctx.cfg.tradeoff.eval, ctx.seed)?;
    let dir = ctx.out.join("tradeoff");
    emit(&run, &dir, ctx.format)?;
    let csv = tradeoff_csv(&rows);
    write_file(&dir.join("tradeoff.csv"), &csv)?;
    say(stdout, csv.trim_end());
    say(stdout, format!("report in {}", dir.display()));
    Ok(())
}

fn heatmap(ctx: &Ctx, input: Option<&Path>, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let inputs: Vec<PathBuf> = match input.map(Path::to_path_buf).or_else(|| ctx.cfg.heatmap.input.clone()) {
        Some(p) => vec![p],
        None => {
            let dir = ctx.out.join("tsi").join("bandit");
            let mut v: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| HarnessError::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            v.sort();
            v
        }
    };
    let dir = ctx.out.join("heatmaps");
    for p in inputs {
        let text = fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?;
        let state: BanditState =
            serde_json::from_str(&text).map_err(|e| HarnessError::Runtime(format!("{}: {e}", p.display())))?;
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let n = write_heatmaps(&state, &dir, &stem)?;
        say(stdout, format!("{}: {n} heat maps", p.display()));
    }
    say(stdout, format!("heat maps in {}", dir.display()));
    Ok(())
}

fn convert_report(ctx: &Ctx, input: &Path, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let run = RunOutput::read(input)?;
    run.verify().map_err(|bad| {
        HarnessError::Runtime(format!(
            "{}: aggregates disagree with outcome lines for {}",
            input.display(),
            bad.join(", ")
        ))
    })?;
    match ctx.format {
        ReportFormat::Csv => {
            write_file(&ctx.out.join("summary.csv"), &run.summary_csv())?;
            write_file(&ctx.out.join("outcomes.csv"), &run.outcomes_csv())?;
        }
        ReportFormat::Json => run.write(ctx.out)?,
    }
    say(stdout, format!("verified {} outcome lines; wrote {}", run.outcomes.len(), ctx.out.display()));
    Ok(())
}
