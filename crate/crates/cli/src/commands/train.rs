use std::path::{Path, PathBuf};

use clap::Args;
use guided_proto::model::TrainOutcome;
use guided_proto::{cost_matrix, gen_hierarchical_gaussians, split, train, Dataset, EvalReport, NodeSet, Taxonomy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{score, write_confusion};
use crate::checkpoint::Checkpoint;
use crate::config::{Aggregation, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io;

/// Trains one classifier per seed and evaluates each on the held-out split.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run configuration.
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Seeds trained concurrently.
    #[arg(long)]
    pub threads: Option<usize>,
}

struct Prepared {
    tax: Taxonomy,
    train: Dataset,
    test: Dataset,
    test_indices: Vec<usize>,
    columns: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    er: f64,
    ac: f64,
    distortion: Option<f64>,
    scale_free_distortion: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Aggregate {
    aggregation: Aggregation,
    n_seeds: usize,
    er: f64,
    ac: f64,
    distortion: Option<f64>,
    scale_free_distortion: Option<f64>,
    per_seed: Vec<SeedSummary>,
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.out_dir {
        config.output_dir = Some(dir.clone());
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    if let Some(lambda) = args.lambda {
        config.train.lambda = lambda;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    let name = args.config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    config.resolve_output_dir(name);
    config.validate()?;
    let out = config.output_dir.clone().expect("resolved above");

    let data = prepare(&config)?;
    io::write_json(&out.join("config.json"), &config)?;

    let summaries = run_seeds(&config, &data, &out)?;
    let agg = config.aggregation;
    let collect = |f: fn(&SeedSummary) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = summaries.iter().map(f).collect();
        v.map(|v| agg.apply(&v))
    };
    let aggregate = Aggregate {
        aggregation: agg,
        n_seeds: summaries.len(),
        er: collect(|s| Some(s.er)).unwrap_or(f64::NAN),
        ac: collect(|s| Some(s.ac)).unwrap_or(f64::NAN),
        distortion: collect(|s| s.distortion),
        scale_free_distortion: collect(|s| s.scale_free_distortion),
        per_seed: summaries,
    };
    io::write_json(&out.join("aggregate.json"), &aggregate)?;
    println!(
        "{} seeds: ER {:.4}, AC {:.4} ({:?})",
        aggregate.n_seeds, aggregate.er, aggregate.ac, agg
    );
    Ok(())
}

fn prepare(config: &RunConfig) -> CliResult<Prepared> {
    let tax_path = config.taxonomy.as_ref().expect("validated");
    let tax = io::read_taxonomy(tax_path, config.taxonomy_format)?;
    let class_names: Vec<String> = tax.leaves().iter().map(|&l| tax.name(l).to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.data_seed);
    let (data, columns) = match &config.dataset {
        Some(path) => io::load_csv(path, &config.label_column, &class_names)?,
        None => {
            let data = gen_hierarchical_gaussians(&tax, &config.synthetic, &mut rng)
                .map_err(|e| CliError::core("synthetic data", e))?;
            let columns = (0..data.input_dim()).map(|j| format!("x{j}")).collect();
            (data, columns)
        }
    };
    let outcome = split(&data, config.test_fraction, &mut rng).map_err(|e| CliError::core("split", e))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Prepared {
        tax,
        train: outcome.train,
        test: outcome.test,
        test_indices: outcome.test_indices,
        columns,
    })
}

fn run_seeds(config: &RunConfig, data: &Prepared, out: &Path) -> CliResult<Vec<SeedSummary>> {
    let seeds = &config.seeds;
    let threads = config.threads.min(seeds.len()).max(1);
    let chunk = seeds.len().div_ceil(threads);
    let results: Vec<CliResult<Vec<SeedSummary>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|group| scope.spawn(move || group.iter().map(|&s| run_seed(config, data, s, out)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let mut summaries = Vec::with_capacity(seeds.len());
    for r in results {
        summaries.extend(r?);
    }
    Ok(summaries)
}

fn run_seed(config: &RunConfig, data: &Prepared, seed: u64, out: &Path) -> CliResult<SeedSummary> {
    let mut train_config = config.train.clone();
    train_config.seed = seed;
    let nodes = if train_config.hidden_prototypes {
        NodeSet::All
    } else {
        NodeSet::Leaves
    };
    let metric = cost_matrix(&data.tax, nodes).map_err(|e| CliError::core("taxonomy", e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let TrainOutcome {
        classifier,
        history,
        metric,
    } = train(&data.train, &metric, &train_config, &mut rng).map_err(|e| CliError::core(format!("seed {seed}"), e))?;

    let dir = out.join(format!("seed-{seed}"));
    let (report, _) = score(&classifier, &data.tax, &data.test, config.scheme, &data.train)?;
    write_history(&dir.join("history.csv"), &history)?;
    io::write_json(&dir.join("eval.json"), &report)?;
    write_confusion(&dir.join("confusion.csv"), &report)?;
    if let Some(pi) = classifier.head.prototypes() {
        io::write_points(&dir.join("prototypes.csv"), metric.names(), pi.coords())?;
    }
    write_embeddings(&dir.join("test_embeddings.csv"), &classifier, data)?;
    Checkpoint::new(&data.tax, data.columns.clone(), train_config, classifier).save(&dir.join("checkpoint.json"))?;
    Ok(summarize(seed, &report))
}

fn summarize(seed: u64, report: &EvalReport) -> SeedSummary {
    SeedSummary {
        seed,
        er: report.er,
        ac: report.ac,
        distortion: report.distortion.map(|d| d.distortion),
        scale_free_distortion: report.distortion.map(|d| d.scale_free_distortion),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_history(path: &Path, history: &guided_proto::TrainHistory) -> CliResult<()> {
    let header: Vec<String> = ["epoch", "l_data", "l_reg", "total", "s_star", "train_er", "train_ac"]
        .map(String::from)
        .to_vec();
    let rows = history.records.iter().map(|r| {
        vec![
            r.epoch.to_string(),
            r.l_data.to_string(),
            r.l_reg.to_string(),
            r.total.to_string(),
            opt(r.s_star),
            r.train_er.to_string(),
            r.train_ac.to_string(),
        ]
    });
    io::write_csv(path, &header, rows)
}

/// Test-set embeddings with the source row index and the true label.
fn write_embeddings(path: &Path, classifier: &guided_proto::Classifier, data: &Prepared) -> CliResult<()> {
    let mut rows = Vec::with_capacity(data.test.len());
    let mut dim = 0;
    for (i, &source) in data.test_indices.iter().enumerate() {
        let e = classifier
            .embed(data.test.features().row(i))
            .map_err(|e| CliError::core("embedding", e))?;
        dim = e.len();
        let mut row = vec![
            source.to_string(),
            data.test.class_names()[data.test.labels()[i]].clone(),
        ];
        row.extend(e.iter().map(f64::to_string));
        rows.push(row);
    }
    let mut header = vec!["row".to_string(), "label".to_string()];
    header.extend((0..dim).map(|j| format!("e{j}")));
    io::write_csv(path, &header, rows)
}
