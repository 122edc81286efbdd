use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use mixmatch_core::candidates::{load_candidates, pseudo_generate, save_candidates, PseudoGenConfig};
use mixmatch_core::catalog::{load_store, restrict_to_ncore, save_store, EmbeddingStore, Role};
use mixmatch_core::evaluation::{
    derive_weights, evaluate, read_ballot_csv, read_expert_scores_csv, reference, RatingMatrix, WeightVector,
};
use mixmatch_core::fusion::{ground, mean_sweep, parse_grid, sweep, sweep_csv, FusionConfig};
use mixmatch_core::kernels::run_selfcheck;
use mixmatch_core::retrieval::{load_checkpoint, save_checkpoint, train, CatalogScorer, QuerySide, TrainConfig};
use mixmatch_core::synth::{two_cluster, SyntheticConfig};

use crate::args::{
    Cli, Command, EvaluateArgs, FuseArgs, IngestArgs, KernelsCommand, RecommendArgs, ServeArgs, SweepArgs, TrainArgs,
};
use crate::config::FileConfig;
use crate::service::{self, AppState, RecommendRequest, Snapshot, SnapshotPaths, DEFAULT_THRESHOLD};
use crate::CliError;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_GRID: &str = "-1:1:0.1";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

struct Ctx {
    file: FileConfig,
    seed: u64,
}

pub fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        file,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a, out),
        Command::Train(a) => train_cmd(&ctx, a, out),
        Command::Recommend(a) => recommend_cmd(&ctx, a, out),
        Command::Fuse(a) => fuse_cmd(&ctx, a, out),
        Command::Sweep(a) => sweep_cmd(&ctx, a, out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Kernels {
            command: KernelsCommand::Selfcheck { instances },
        } => selfcheck(&ctx, instances, out),
        Command::Serve(a) => serve_cmd(&ctx, a),
    }
}

/// Writes to `--out` when given, otherwise to standard output.
fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))
}

fn summary(store: &EmbeddingStore) -> String {
    format!(
        "items {} (tops {}, bottoms {}), queries {}, pairs {}, d_raw {}, d_sem {}\n",
        store.item_count(),
        store.items_with_role(Role::Top).count(),
        store.items_with_role(Role::Bottom).count(),
        store.query_count(),
        store.pairs().len(),
        store.d_raw(),
        store.d_sem()
    )
}

fn ingest(ctx: &Ctx, a: IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (mut store, heldout) = match (&a.store, a.synthetic) {
        (Some(path), false) => (load_store(path)?, None),
        (None, true) => {
            let defaults = SyntheticConfig::default();
            let data = two_cluster(&SyntheticConfig {
                tops: a.tops.unwrap_or(defaults.tops),
                bottoms: a.bottoms.unwrap_or(defaults.bottoms),
                queries: a.queries.unwrap_or(defaults.queries),
                seed: ctx.seed,
                ..defaults
            })?;
            (data.store, Some(data.heldout))
        }
        _ => return Err(CliError::Usage("ingest needs exactly one of --store and --synthetic".into())),
    };
    if let (Some(min), Some(max)) = (a.min_count, a.max_count) {
        store = restrict_to_ncore(&store, min, max)?;
    }
    if let Some(path) = &a.out {
        save_store(&store, path)?;
    }
    if let (Some(path), Some(pairs)) = (&a.heldout_out, &heldout) {
        let mut text = String::from("query_id,item_id\n");
        for p in pairs {
            text.push_str(&format!("{},{}\n", p.query_id, p.item_id));
        }
        std::fs::write(path, text)?;
    }
    if let Some(path) = &a.pseudo_candidates {
        let defaults = PseudoGenConfig::default();
        let config = PseudoGenConfig {
            anchor_noise_sigma: a.sigma.or(ctx.file.pseudo.sigma).unwrap_or(defaults.anchor_noise_sigma),
            per_query_count: a.per_query.or(ctx.file.pseudo.per_query).unwrap_or(defaults.per_query_count),
            seed: ctx.seed,
        };
        let map = pseudo_generate(&store, &config)?;
        save_candidates(path, store.d_sem(), &map)?;
    }
    out.write_all(summary(&store).as_bytes())?;
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = load_store(&a.store)?;
    let file = &ctx.file.train;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: a.learning_rate.or(file.learning_rate).unwrap_or(defaults.learning_rate),
        l2_reg: a.l2_reg.or(file.l2_reg).unwrap_or(defaults.l2_reg),
        epochs: a.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        negatives_per_positive: a
            .negatives
            .or(file.negatives_per_positive)
            .unwrap_or(defaults.negatives_per_positive),
        latent_dim: a.latent_dim.or(file.latent_dim).unwrap_or(defaults.latent_dim),
        seed: ctx.seed,
    };
    config.validate()?;
    let outcome = train(&store, &config)?;
    save_checkpoint(&outcome.params, &a.out)?;
    let loss = outcome.final_loss().map(|l| format!("{l:.6}")).unwrap_or_else(|| "n/a".into());
    writeln!(
        out,
        "epochs {}, final ranking loss {loss}, model {}",
        config.epochs,
        service::model_version(&outcome.params)?
    )?;
    Ok(())
}

fn read_request(path: &Path) -> Result<RecommendRequest, CliError> {
    let mut text = String::new();
    if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut text)?;
    } else {
        open(path)?.read_to_string(&mut text)?;
    }
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad request JSON: {e}")))
}

fn recommend_cmd(ctx: &Ctx, a: RecommendArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let request = match &a.request {
        Some(path) => read_request(path)?,
        None => {
            if a.query_id.is_none() && a.query_feature.is_none() {
                return Err(CliError::Usage("one of --query-id, --query-feature, --request is required".into()));
            }
            RecommendRequest {
                query_id: a.query_id.clone(),
                query_feature: a.query_feature.clone(),
                k: a.k.or(ctx.file.k).unwrap_or(DEFAULT_K),
                threshold_p: a.threshold.or(ctx.file.threshold).unwrap_or(DEFAULT_THRESHOLD),
                include_generated: a.include_generated,
            }
        }
    };
    let snapshot = Snapshot::load(&SnapshotPaths::new(&a.model.store, &a.model.checkpoint, a.candidates.as_deref()))?;
    let response = service::recommend(&snapshot, &request)?;
    emit(out, a.out.as_deref(), &(service::render(&response) + "\n"))
}

fn fuse_cmd(ctx: &Ctx, a: FuseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = load_store(&a.model.store)?;
    let params = load_checkpoint(&a.model.checkpoint)?;
    let candidates = load_candidates(&a.candidates, Some(store.d_sem()))?;
    let query = store
        .query(&a.query_id)
        .ok_or_else(|| mixmatch_core::Error::UnknownEntity(a.query_id.clone()))?;
    let k = a.k.or(ctx.file.k).unwrap_or(DEFAULT_K);
    let config = FusionConfig {
        threshold_p: a.threshold.or(ctx.file.threshold).unwrap_or(DEFAULT_THRESHOLD),
        k,
        dedup: a.dedup,
    };
    let retrieved = CatalogScorer::new(&store, &params)?.top_k(&QuerySide::known_or_cold(query, &params)?, k);
    let generated = candidates.get(&a.query_id).map(Vec::as_slice).unwrap_or_default();
    let entries = ground(generated, &retrieved, &store, &config)?;
    let text = serde_json::to_string(&entries).map_err(|e| CliError::Usage(e.to_string()))?;
    emit(out, a.out.as_deref(), &(text + "\n"))
}

fn sweep_cmd(ctx: &Ctx, a: SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let grid_spec = a.grid.clone().or(ctx.file.grid.clone()).unwrap_or_else(|| DEFAULT_GRID.into());
    let grid = parse_grid(&grid_spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let store = load_store(&a.model.store)?;
    let params = load_checkpoint(&a.model.checkpoint)?;
    let candidates = load_candidates(&a.candidates, Some(store.d_sem()))?;
    let scorer = CatalogScorer::new(&store, &params)?;
    let k = a.k.or(ctx.file.k).unwrap_or(DEFAULT_K);
    let mut per_query = Vec::new();
    for (query_id, generated) in &candidates {
        let Some(query) = store.query(query_id) else {
            log::warn!("candidates for unknown query {query_id} skipped");
            continue;
        };
        let retrieved = scorer.top_k(&QuerySide::known_or_cold(query, &params)?, k);
        if generated.is_empty() || retrieved.is_empty() {
            continue;
        }
        per_query.push(sweep(generated, &retrieved, &store, &grid)?);
    }
    let rows = mean_sweep(&per_query)?;
    emit(out, a.out.as_deref(), &sweep_csv(&rows))
}

fn weights_from(a: &EvaluateArgs) -> Result<Option<WeightVector>, CliError> {
    if let Some(w) = &a.weights {
        let arr: [f32; 4] = w
            .as_slice()
            .try_into()
            .map_err(|_| CliError::Usage(format!("--weights needs 4 values, got {}", w.len())))?;
        return Ok(Some(WeightVector::new(arr)?));
    }
    if let Some(path) = &a.expert_scores {
        return Ok(Some(derive_weights(&read_expert_scores_csv(open(path)?)?)?));
    }
    Ok(None)
}

#[derive(serde::Serialize)]
struct WeightsReport {
    weights: [f32; 4],
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let weights = weights_from(&a)?;
    if a.table1_fixture {
        let weights = match weights {
            Some(w) => w,
            None => WeightVector::new(reference::WEIGHTS)?,
        };
        let mut text = String::from("system,very_satisfied,satisfied,average,dissatisfied,very_dissatisfied,score\n");
        for sys in &reference::SYSTEMS {
            let report = evaluate(&RatingMatrix::new(sys.rows)?, &weights)?;
            let cells: Vec<String> = report.weighted.iter().map(|v| format!("{v:.5}")).collect();
            text.push_str(&format!("{},{},{:.4}\n", sys.name, cells.join(","), report.score));
        }
        return emit(out, a.out.as_deref(), &text);
    }
    let ratings = match (&a.ratings, &a.ballots) {
        (Some(path), _) => Some(RatingMatrix::from_csv(open(path)?)?),
        (None, Some(path)) => Some(read_ballot_csv(open(path)?)?.to_matrix()?),
        (None, None) => None,
    };
    let text = match (ratings, weights) {
        (Some(r), Some(w)) => serde_json::to_string(&evaluate(&r, &w)?),
        (None, Some(w)) => serde_json::to_string(&WeightsReport { weights: *w.as_array() }),
        (Some(_), None) => return Err(CliError::Usage("ratings need --weights or --expert-scores".into())),
        (None, None) => {
            return Err(CliError::Usage(
                "evaluate needs --table1-fixture, --ratings, --ballots, or --expert-scores".into(),
            ))
        }
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    emit(out, a.out.as_deref(), &(text + "\n"))
}

fn selfcheck(ctx: &Ctx, instances: usize, out: &mut dyn Write) -> Result<(), CliError> {
    if instances == 0 {
        return Err(CliError::Usage("--instances must be positive".into()));
    }
    let results = run_selfcheck(instances, ctx.seed)?;
    writeln!(out, "{:<28} {:>5} {:>12} {:>10}  result", "check", "n", "max_error", "tolerance")?;
    for r in &results {
        writeln!(out, "{r}")?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("self-check failed: {}", failed.join(", "))))
    }
}

fn serve_cmd(ctx: &Ctx, a: ServeArgs) -> Result<(), CliError> {
    let paths = SnapshotPaths::new(&a.model.store, &a.model.checkpoint, a.candidates.as_deref());
    let snapshot = Snapshot::load(&paths)?;
    log::info!("loaded snapshot {}", snapshot.model_version);
    let bind = a.bind.or(ctx.file.bind.clone()).unwrap_or_else(|| DEFAULT_BIND.into());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(AppState::new(snapshot, Some(paths)), &bind))?;
    Ok(())
}
