//! Command-line entry point: loads a CSV dataset and its schema, builds the
//! blocking index, and serves the reconciliation API.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Parser;
use recon_core::datamodel::{load_dataset, SchemaDescriptor};
use recon_core::globalscore::DecisionModel;
use recon_core::index::build_index;
use recon_service::{build_router, unknown_model_features, ServiceState};

#[derive(Debug, Parser)]
#[command(name = "reconcile-server", about = "Serve a reconciliation API over a CSV dataset")]
struct Args {
    /// Entity table CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON mapping CSV columns to the data model.
    #[arg(long)]
    schema: PathBuf,
    /// Decision model JSON; must be a linear model. Defaults to the
    /// built-in weighted sum.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Port to listen on.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Q-gram width used by the blocking index.
    #[arg(long, default_value_t = 3)]
    qgram: usize,
}

#[tokio::main]
async fn main() -> Result<()> {
    let args = Args::parse();
    if args.qgram == 0 {
        bail!("--qgram must be at least 1");
    }

    let schema_file = File::open(&args.schema)
        .with_context(|| format!("cannot open schema {}", args.schema.display()))?;
    let schema = SchemaDescriptor::from_reader(schema_file)?;

    let schema_dir = args.schema.parent().unwrap_or_else(|| Path::new("."));
    let open_aux = |name: &Option<String>| -> Result<Option<File>> {
        match name {
            None => Ok(None),
            Some(rel) => {
                let path = schema_dir.join(rel);
                let file = File::open(&path)
                    .with_context(|| format!("cannot open {}", path.display()))?;
                Ok(Some(file))
            }
        }
    };
    let types_file = open_aux(&schema.types_file)?;
    let properties_file = open_aux(&schema.properties_file)?;

    let data_file = File::open(&args.data)
        .with_context(|| format!("cannot open data {}", args.data.display()))?;
    let (dataset, report) = load_dataset(data_file, types_file, properties_file, &schema)?;
    for rejected in &report.rejected {
        eprintln!(
            "skipped row at line {} (id {:?}): {}",
            rejected.line, rejected.id, rejected.reason
        );
    }
    eprintln!(
        "loaded {} entities ({} rows rejected)",
        report.loaded,
        report.rejected.len()
    );

    let model = match &args.model {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read model {}", path.display()))?;
            match DecisionModel::parse(&text)? {
                DecisionModel::Linear(m) => Some(m),
                DecisionModel::Tree(_) => {
                    bail!(
                        "the service model must be linear so that candidate scores \
                         remain a weighted sum of the reported features"
                    )
                }
            }
        }
    };

    let index = build_index(dataset, args.qgram);
    let state = ServiceState::new(index, model);
    if let Some(m) = state.model() {
        for id in unknown_model_features(m, state.catalog()) {
            eprintln!("warning: model feature {id:?} is not in the catalog and reads as 0");
        }
    }

    let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port)).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, build_router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
