use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harness::config::{
    apply_overrides, parse_config, read_config_text, ConfigError, ExperimentConfig,
};
use harness::model::Model;
use harness::recipes::{run_recipe, Recipe};
use harness::records::{write_embeddings, write_records, write_table};
use harness::train::{
    effective_k, embeddings, infer, prepare_dataset, prepare_inputs, run_experiment,
};
use harness::{HarnessError, Result};
use tensorized::data::{add_noise, load_csv, CsvOptions, Dataset};
use tensorized::nn::Tensor;

#[derive(Parser)]
#[command(
    name = "tensorized",
    version,
    about = "Cluster-specific representation learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the `out` key).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sets the init, data and noise seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset (and its noisy copy) as CSV.
    GenData(Common),
    /// Train one model and write records and embeddings.
    Train(Common),
    /// Train, then assign and embed the rows of a CSV file.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Rows to infer; a `label` column is ignored.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a named experiment recipe.
    Recipe {
        /// One of fig2, fig3, fig4, fig5, app_runtime, app_underclust.
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Print the parameter count of the configured model.
    ParamCount(Common),
}

fn finish(mut cfg: ExperimentConfig, common: &Common) -> ExperimentConfig {
    if let Some(seed) = common.seed {
        cfg.set_all_seeds(seed);
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    cfg
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or(ConfigError::Missing("--config"))?;
    let cfg = parse_config(&read_config_text(path)?)?;
    Ok(finish(cfg, common))
}

fn write_dataset(path: &Path, x: &Tensor, labels: Option<&[usize]>) -> Result<()> {
    let mut header: Vec<String> = (1..=x.cols()).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    let rows: Vec<Vec<String>> = (0..x.rows())
        .map(|i| {
            let mut row: Vec<String> = x.row(i).iter().map(f64::to_string).collect();
            row.push(labels.map_or_else(|| "-1".into(), |l| l[i].to_string()));
            row
        })
        .collect();
    Ok(write_table(path, &header, &rows)?)
}

fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let ds = prepare_dataset(cfg)?;
    write_dataset(&cfg.out.join("data.csv"), &ds.x, ds.labels.as_deref())?;
    if cfg.noise > 0.0 {
        let noisy = add_noise(&ds.x, cfg.noise, cfg.noise_scale, cfg.noise_seed)?;
        write_dataset(
            &cfg.out.join("data_noisy.csv"),
            &noisy,
            ds.labels.as_deref(),
        )?;
    }
    println!(
        "wrote {} rows x {} features to {}",
        ds.n(),
        ds.d(),
        cfg.out.display()
    );
    Ok(())
}

fn warn_empty_clusters(empty_epochs: usize, final_empty: &[usize]) {
    if empty_epochs > 0 {
        eprintln!(
            "warning: empty clusters in {empty_epochs} epoch(s); empty at the end: {:?}",
            final_empty
        );
    }
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let run = run_experiment(cfg)?;
    write_records(&cfg.out.join("records.csv"), &run.records)?;
    write_records(&cfg.out.join("timing.csv"), &run.timings)?;
    std::fs::write(cfg.out.join("config.txt"), cfg.serialize()).map_err(|source| {
        tensorized::Error::Io {
            path: cfg.out.join("config.txt"),
            source,
        }
    })?;
    let s = &run.outcome.assignment;
    let z = embeddings(&run.outcome.model, &run.dataset.x, s)?;
    for j in 0..s.k() {
        let ids = s.members(j);
        let rows: Vec<Vec<f64>> = ids.iter().map(|&i| z.row(i).to_vec()).collect();
        let embed = if rows.is_empty() {
            Tensor::zeros(&[0, z.cols()])
        } else {
            Tensor::from_rows(&rows)?
        };
        write_embeddings(
            &cfg.out.join(format!("embed_train_c{j}.csv")),
            &ids,
            run.dataset.labels.as_deref(),
            &embed,
        )?;
    }
    let history = &run.outcome.history;
    let empty_epochs = history
        .iter()
        .filter(|h| !h.empty_clusters.is_empty())
        .count();
    warn_empty_clusters(empty_epochs, &s.empty_clusters());
    println!(
        "{}: {} epochs, converged={}, final objective {}",
        run.run_id,
        history.len(),
        run.outcome.converged,
        history.last().map_or(f64::NAN, |h| h.objective_after)
    );
    for r in run.records.iter().filter(|r| r.epoch < 0) {
        println!("{} = {}", r.metric, r.value);
    }
    Ok(())
}

fn read_inputs(path: &Path) -> Result<Dataset> {
    let header = csv::Reader::from_path(path)
        .and_then(|mut r| r.headers().cloned())
        .map_err(|e| tensorized::Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let label_column = header
        .iter()
        .any(|h| h == "label")
        .then(|| "label".to_string());
    Ok(load_csv(
        path,
        &CsvOptions {
            label_column,
            feature_columns: None,
        },
    )?)
}

fn infer_cmd(cfg: &ExperimentConfig, input: &Path) -> Result<()> {
    let inputs = read_inputs(input)?;
    let run = run_experiment(cfg)?;
    if matches!(run.outcome.model, Model::Contrastive { .. }) {
        return Err(HarnessError::Incompatible(
            "contrastive models score triplets, not single points".into(),
        ));
    }
    let x = prepare_inputs(cfg, &run.dataset, inputs.x)?;
    let results =
        tensorized::par::try_map_range(x.rows(), |i| infer(&run.outcome.model, x.row(i)))?;
    let width = results.first().map_or(0, |r| r.1.len());
    let mut header = vec!["id".to_string(), "cluster".to_string()];
    header.extend((1..=width).map(|i| format!("e{i}")));
    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(i, (j, e))| {
            let mut row = vec![i.to_string(), j.to_string()];
            row.extend(e.iter().map(f64::to_string));
            row
        })
        .collect();
    let path = cfg.out.join("infer.csv");
    write_table(&path, &header, &rows)?;
    println!("inferred {} rows into {}", rows.len(), path.display());
    Ok(())
}

fn recipe(name: &str, common: &Common) -> Result<()> {
    let recipe: Recipe = name.parse().map_err(ConfigError::Invalid)?;
    let text = match &common.config {
        Some(path) => read_config_text(path)?,
        None => String::new(),
    };
    let cfg = finish(apply_overrides(recipe.base_config(), &text)?, common);
    let out = cfg.out.join(recipe.name());
    let output = run_recipe(recipe, &cfg, &out)?;
    for note in &output.notes {
        println!("{note}");
    }
    println!(
        "{}: {} records written to {}",
        recipe,
        output.records.len(),
        out.display()
    );
    Ok(())
}

fn param_count(cfg: &ExperimentConfig) -> Result<()> {
    let ds = prepare_dataset(cfg)?;
    let model = Model::build(cfg, &ds, effective_k(cfg))?;
    println!("{}", model.param_count());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(c) => gen_data(&load_config(c)?),
        Command::Train(c) => train(&load_config(c)?),
        Command::Infer { common, input } => infer_cmd(&load_config(common)?, input),
        Command::Recipe { name, common } => recipe(name, common),
        Command::ParamCount(c) => param_count(&load_config(c)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
