//! Command implementations behind the `aggnet` binary.

pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use aggnet::aggregation::{with_donor, AggregationOp};
use aggnet::checkpoint::{Checkpoint, Composition};
use aggnet::config::TrainConfig;
use aggnet::data::{load_raw_split, write_synthetic, LabeledDataset};
use aggnet::expr::Expr;
use aggnet::model::Model;
use aggnet::report::{forgetting_report, PairSource, ReportTable, TestSets};
use aggnet::train::{train, TrainedBundle};
use aggnet::{Error, Result, Role};

use run::{canonical, save_trained, Lock, Run};

/// Process exit status for an error: 1 config or expression, 2 data,
/// compatibility or missing files, 3 numerics.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) => 1,
        Error::Data(_) | Error::Shape(_) | Error::Format(_) | Error::Io(_) => 2,
        Error::Numerics { .. } => 3,
    }
}

pub fn read_config(path: &Path) -> Result<TrainConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    TrainConfig::from_json(&text)
}

fn resolve_datasets(listed: &[String], config: &TrainConfig) -> Result<Vec<String>> {
    let names = if listed.is_empty() { config.datasets.clone() } else { listed.to_vec() };
    if names.len() != config.n {
        return Err(Error::config(format!(
            "need {} dataset names (config `datasets` or --datasets), got {}",
            config.n,
            names.len()
        )));
    }
    Ok(names)
}

fn load_split(root: &Path, name: &str, split: &str, num_classes: usize) -> Result<LabeledDataset> {
    if !root.join(name).is_dir() {
        return Err(Error::data(format!("dataset `{name}` not found under {}", root.display())));
    }
    load_raw_split(root, name, split)?.to_dataset(name, num_classes)
}

/// Train per `config` on the `train` splits and write the run directory.
pub fn cmd_train(config: &Path, data: &Path, out: &Path, datasets: &[String]) -> Result<TrainedBundle> {
    let mut config = read_config(config)?;
    config.datasets = resolve_datasets(datasets, &config)?;
    let classes = config.preset.resolve()?.num_classes;
    let train_sets =
        config.datasets.iter().map(|name| load_split(data, name, "train", classes)).collect::<Result<Vec<_>>>()?;
    let _lock = Lock::acquire(out)?;
    let bundle = train(&config, &train_sets)?;
    save_trained(out, &bundle)?;
    Ok(bundle)
}

/// Evaluate `expr` over the run's extractors and save the composed extractor.
pub fn cmd_compose(
    expr: &str,
    run_dir: &Path,
    out: &Path,
    donor: Option<&str>,
    op: Option<AggregationOp>,
) -> Result<Checkpoint> {
    let expr = Expr::parse(expr)?;
    let run = Run::open(run_dir)?;
    let op = op.unwrap_or(run.config.aggregation);
    let ids = expr.identifiers();
    let mut parts = Vec::new();
    for id in &ids {
        if !parts.iter().any(|(k, _)| k == id) {
            parts.push((id.to_string(), run.extractor(id)?));
        }
    }
    let lookup = |id: &str| {
        parts.iter().find(|(k, _)| k == id).map(|(_, p)| p).ok_or_else(|| Error::data(format!("unknown operand {id}")))
    };
    let agg = expr.evaluate(&lookup, op)?;
    let donor = donor.map(|d| canonical(d).to_string()).unwrap_or_else(|| run.default_donor(ids[0]));
    let params = with_donor(&agg.params, &run.extractor(&donor)?)?;
    let ck = Checkpoint::new(
        params,
        aggnet::checkpoint::run_id(&run.config),
        Some(run.config.clone()),
        Some((*run.spec).clone()),
        Some(Composition { expression: expr.to_string(), op, count: agg.count, donor, skipped: agg.skipped }),
    );
    let _lock = Lock::acquire(out)?;
    ck.save(out)?;
    Ok(ck)
}

fn test_sets(run: &Run, data: &Path, datasets: &[String]) -> Result<TestSets> {
    let names = resolve_datasets(datasets, &run.config)?;
    let sets = names.iter().map(|n| load_split(data, n, "test", run.spec.num_classes)).collect::<Result<Vec<_>>>()?;
    TestSets::new(sets)
}

/// Model for a descriptor: a trained extractor with its head, or a composition
/// with the default donor.
fn model_for(run: &Run, descriptor: &str) -> Result<Model> {
    let expr = Expr::parse(descriptor)?;
    if let Expr::Ident(id) = &expr {
        return Ok(Model::new(run.spec.clone(), run.extractor(id)?, run.head_for(id)?));
    }
    let ids = expr.identifiers();
    let donor = run.default_donor(ids[0]);
    let extractors = ids.iter().map(|id| Ok((id.to_string(), run.extractor(id)?))).collect::<Result<Vec<_>>>()?;
    let lookup = |id: &str| {
        extractors
            .iter()
            .find(|(k, _)| k == id)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::data(format!("unknown operand {id}")))
    };
    let agg = expr.evaluate(&lookup, run.config.aggregation)?;
    let params = with_donor(&agg.params, &run.extractor(&donor)?)?;
    Ok(Model::new(run.spec.clone(), params, run.head_for(&donor)?))
}

/// Default rows: every trained extractor, then the combination of all `N_i`.
fn default_descriptors(run: &Run) -> Vec<String> {
    let mut rows = run.trained();
    let parts: Vec<String> = (1..=run.config.n).map(|i| format!("N{i}")).collect();
    if parts.len() > 1 && parts.iter().all(|p| run.has(p)) {
        rows.push(parts.join("+"));
    }
    rows
}

/// Accuracy table for `models` (expressions over the run) and saved composed
/// `checkpoints`, on the test split of each dataset and their union.
pub fn cmd_evaluate(
    run_dir: &Path,
    data: &Path,
    datasets: &[String],
    models: &[String],
    checkpoints: &[PathBuf],
) -> Result<ReportTable> {
    let run = Run::open(run_dir)?;
    let tests = test_sets(&run, data, datasets)?;
    let mut table = ReportTable::new(tests.columns());
    let descriptors =
        if models.is_empty() && checkpoints.is_empty() { default_descriptors(&run) } else { models.to_vec() };
    for d in &descriptors {
        let model = model_for(&run, d)?;
        table.push(None, &Expr::parse(d)?.to_symbolic(), tests.accuracies(&model)?)?;
    }
    for path in checkpoints {
        let ck = Checkpoint::load(path)?;
        if !ck.params.role().is_extractor() {
            return Err(Error::data(format!("{} holds {:?}, not an extractor", path.display(), ck.params.role())));
        }
        let (descriptor, head) = match &ck.manifest.composition {
            Some(c) => (Expr::parse(&c.expression)?.to_symbolic(), run.head_for(&c.donor)?),
            None => {
                let id = match ck.params.role() {
                    Role::Extractor(i) => format!("N{i}"),
                    _ => "N*".to_string(),
                };
                let head = run.head_for(&id)?;
                (id, head)
            }
        };
        let model = Model::new(run.spec.clone(), ck.params, head);
        table.push(None, &descriptor, tests.accuracies(&model)?)?;
    }
    Ok(table)
}

/// Commutativity and selective-forgetting rows for a two-dataset joint run.
pub fn cmd_forgetting_report(
    run_dir: &Path,
    data: &Path,
    datasets: &[String],
) -> Result<aggnet::report::ForgettingReport> {
    let run = Run::open(run_dir)?;
    if run.config.n != 2 {
        return Err(Error::config(format!("forgetting report needs n = 2, run has n = {}", run.config.n)));
    }
    let tests = test_sets(&run, data, datasets)?;
    let (first, second) = (run.extractor("N1")?, run.extractor("N2")?);
    let donor = run.extractor(&run.default_donor("N1"))?;
    let src = PairSource {
        spec: run.spec.clone(),
        first: &first,
        second: &second,
        donor: &donor,
        head: run.head_for("N1")?,
        op: run.config.aggregation,
    };
    forgetting_report(&src, &tests)
}

/// Write the two synthetic domains as IDX files under `out`.
pub fn cmd_synth(out: &Path, seed: u64, train_per_class: usize, test_per_class: usize) -> Result<()> {
    write_synthetic(out, seed, train_per_class, test_per_class)
}

/// Write a table as `<stem>.csv` and `<stem>.txt` under `dir`.
pub fn write_report(dir: &Path, stem: &str, csv: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    fs::write(dir.join(format!("{stem}.txt")), text)?;
    Ok(())
}
