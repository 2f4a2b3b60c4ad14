//! Command-line entry point: reconcile a CSV table against a service and
//! write the matched table, optionally sweeping decision thresholds.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use recon_client::remote::Remote;
use recon_client::table::{ColumnMap, UserTable};
use recon_client::{run_reconcile, sweep, write_output, Decision, DEFAULT_BATCH_SIZE};
use recon_core::globalscore::DecisionModel;

#[derive(Debug, Parser)]
#[command(name = "reconcile-client", about = "Reconcile a CSV table against a service")]
struct Args {
    /// Input table CSV.
    #[arg(long)]
    input: PathBuf,
    /// Column holding the names to reconcile.
    #[arg(long)]
    name_column: String,
    /// Type id every query is constrained to.
    #[arg(long = "type")]
    type_id: Option<String>,
    /// Bind a column to a property, as <column>=<property-id>. Repeatable.
    #[arg(long = "bind", value_parser = parse_bind)]
    bind: Vec<(String, String)>,
    /// Column holding known correct entity ids, for evaluation.
    #[arg(long)]
    truth: Option<String>,
    /// Service base URL.
    #[arg(long)]
    service: String,
    /// Decision model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Rows per request.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch: usize,
    /// Comma-separated thresholds to sweep locally after the run.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
    /// Path for the sweep report JSON.
    #[arg(long, requires = "sweep")]
    report: Option<PathBuf>,
}

fn parse_bind(raw: &str) -> Result<(String, String), String> {
    match raw.split_once('=') {
        Some((column, pid)) if !column.is_empty() && !pid.is_empty() => {
            Ok((column.to_owned(), pid.to_owned()))
        }
        _ => Err(format!("expected <column>=<property-id>, got {raw:?}")),
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    let args = Args::parse();

    let model_text = std::fs::read_to_string(&args.model)
        .with_context(|| format!("cannot read model {}", args.model.display()))?;
    let model = DecisionModel::parse(&model_text)?;
    if args.sweep.is_some() && !matches!(model, DecisionModel::Linear(_)) {
        bail!("threshold sweep requires a linear model");
    }

    let input = File::open(&args.input)
        .with_context(|| format!("cannot open input {}", args.input.display()))?;
    let table = UserTable::from_reader(
        input,
        ColumnMap {
            name_column: args.name_column.clone(),
            type_id: args.type_id.clone(),
            bindings: args.bind.clone(),
            truth_column: args.truth.clone(),
        },
    )?;

    let remote = Remote::new(&args.service);
    let (info, warnings) = remote.fetch_manifest_and_validate(&model).await?;
    eprintln!("service: {} ({} features)", info.name, info.feature_catalog.len());
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }

    let results = run_reconcile(&table, &remote, &model, args.batch).await?;

    let mut notes: BTreeSet<&str> = BTreeSet::new();
    for outcome in &results {
        notes.extend(outcome.note.as_deref());
        notes.extend(outcome.warnings.iter().map(String::as_str));
    }
    for note in notes {
        eprintln!("note: {note}");
    }

    let output = File::create(&args.output)
        .with_context(|| format!("cannot create output {}", args.output.display()))?;
    write_output(&results, &table, &info.feature_catalog, output)?;

    let tally = |d: Decision| results.iter().filter(|r| r.decision == d).count();
    println!(
        "{} rows: {} auto, {} below-threshold, {} ambiguous, {} no-candidate",
        results.len(),
        tally(Decision::Auto),
        tally(Decision::BelowThreshold),
        tally(Decision::Ambiguous),
        tally(Decision::NoCandidate),
    );

    if let Some(thresholds) = &args.sweep {
        let DecisionModel::Linear(linear) = &model else {
            unreachable!("checked above");
        };
        let truths: Vec<Option<String>> = (0..table.len())
            .map(|i| table.truth_of(i).map(str::to_owned))
            .collect();
        let report = sweep(&results, &truths, linear, thresholds);
        for entry in &report.entries {
            let metrics = match (entry.precision, entry.recall) {
                (Some(p), Some(r)) => format!(", precision {p:.3}, recall {r:.3}"),
                (Some(p), None) => format!(", precision {p:.3}"),
                (None, Some(r)) => format!(", recall {r:.3}"),
                (None, None) => String::new(),
            };
            println!(
                "threshold {:.2}: {} matched, {} unmatched, {} ambiguous{}",
                entry.threshold, entry.matched, entry.unmatched, entry.ambiguous, metrics
            );
        }
        if let Some(path) = &args.report {
            let file = File::create(path)
                .with_context(|| format!("cannot create report {}", path.display()))?;
            serde_json::to_writer_pretty(file, &report)?;
        }
    }
    Ok(())
}
