use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use scenoforge::app::{
    challenge_table, conformity_table, crash_report, diversity_table, evaluate_batch, load_batch, render_svg,
    run_generate, AppError, BatchSummary, EmbedderChoice, FileConfig, RunConfig,
};
use scenoforge::compiler::{classify_scene, compile, CompileOptions};
use scenoforge::eval::{
    diversity_stats, driving_score, simulate, AvPolicy, BaselineParams, ConformityReport, Scenario, ScoreWeights,
    SimConfig,
};
use scenoforge::llm::{open_backend, BackendConfig};
use scenoforge::net::{
    parse_net, parse_plain, parse_routes, parse_trips, serialize_net, serialize_routes, serialize_trips, CompiledNetwork,
};
use scenoforge::rag::{ingest_net_with, model_summary, summarize_network, RagEntry, RagError, RagStore};
use scenoforge::routing::{expand_trips, random_trips, TripGenParams};

#[derive(Parser)]
#[command(name = "scenoforge", version, about = "Scenario generation for autonomous-vehicle testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenarios from a testing request.
    Generate(RunArgs),
    /// Build one scenario from a crash report, bypassing the interpreter.
    CrashReport {
        /// File with the report text.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compile plain node/edge files into a net file.
    Compile {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Expand trips into routes over a net.
    Route {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        trips: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Random trips with Poisson departures between fringe edges.
    Randtrips {
        #[arg(long)]
        net: PathBuf,
        /// vehicles per second
        #[arg(long, default_value_t = 0.1)]
        rate: f64,
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw from all edges, not only the fringe.
        #[arg(long)]
        all_edges: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate one scenario and print its driving score.
    Simulate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        routes: PathBuf,
        #[arg(long, default_value = "idm-follow")]
        policy: AvPolicy,
        #[arg(long)]
        horizon: Option<f64>,
        /// Also print every event.
        #[arg(long)]
        events: bool,
    },
    /// Drive every generated scenario of a run and its RandomTrip counterpart.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "idm-follow")]
        policy: AvPolicy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Manage the retrieval store.
    Rag {
        #[command(subcommand)]
        command: RagCommand,
    },
    /// Render a net as an SVG bird's-eye view.
    Render {
        #[arg(long)]
        net: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the metric tables of a finished run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RagArgs {
    #[arg(long, default_value = "rag.jsonl")]
    db: PathBuf,
    /// local, or remote:MODEL served at --endpoint
    #[arg(long, default_value = "local")]
    embedder: String,
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Subcommand)]
enum RagCommand {
    /// Add a network given as plain node/edge files with a description.
    Add {
        #[command(flatten)]
        store: RagArgs,
        #[arg(long)]
        id: String,
        #[arg(long)]
        description: String,
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
    },
    /// Describe a compiled net and add it.
    Ingest {
        #[command(flatten)]
        store: RagArgs,
        #[arg(long)]
        id: String,
        #[arg(long)]
        net: PathBuf,
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
        /// Have the chat model at --endpoint write the description.
        #[arg(long)]
        model_summary: Option<String>,
    },
    /// Most similar entries for a text.
    Query {
        #[command(flatten)]
        store: RagArgs,
        #[arg(long)]
        text: String,
        #[arg(short, default_value_t = 3)]
        k: usize,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat TOML file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    request: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    /// Expected scene type, used for scoring.
    #[arg(long)]
    scene: Option<String>,
    /// http, replay:DIR or record:DIR
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long)]
    rag: bool,
    #[arg(long)]
    rag_db: Option<PathBuf>,
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Send the request straight to the generators.
    #[arg(long)]
    no_interpreter: bool,
    /// Retry without passing diagnostics back to the model.
    #[arg(long)]
    no_feedback: bool,
    /// Directory with replacement prompt templates.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// seconds per request
    #[arg(long)]
    timeout: Option<f64>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, AppError> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let flags = FileConfig {
            request: self.request,
            count: self.count,
            scene: self.scene,
            backend: self.backend,
            endpoint: self.endpoint,
            model: self.model,
            seed: self.seed,
            max_attempts: self.max_attempts,
            rag: self.rag.then_some(true),
            rag_db: self.rag_db,
            embedder: self.embedder,
            out: self.out,
            jobs: self.jobs,
            interpreter: self.no_interpreter.then_some(false),
            feedback: self.no_feedback.then_some(false),
            templates: self.templates,
            timeout: self.timeout,
            max_retries: None,
        };
        RunConfig::from_file_config(file.merge(flags))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_net(path: &Path) -> Result<CompiledNetwork> {
    let parsed = parse_net(&read(path)?).map_err(|diags| AppError::Invalid { path: path.to_path_buf(), diags })?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.network)
}

fn print_batch(summary: &BatchSummary) {
    for s in &summary.scenarios {
        match (&s.failed_stage, &s.error) {
            (Some(stage), Some(err)) => println!("{}: failed at {stage}: {err}", s.dir),
            _ => println!(
                "{}: ok, scene {}, verdict {}",
                s.dir,
                s.scene_type.map_or("-".to_string(), |t| t.to_string()),
                s.verdict.as_deref().unwrap_or("-")
            ),
        }
    }
    println!("{}/{} scenarios generated", summary.succeeded, summary.count);
}

fn rag_setup(args: &RagArgs) -> Result<(Box<dyn scenoforge::rag::Embedder + Send + Sync>, BackendConfig)> {
    let backend = BackendConfig { endpoint: args.endpoint.clone(), ..BackendConfig::default() };
    let embedder = EmbedderChoice::parse(&args.embedder)?.build(&backend)?;
    Ok((embedder, backend))
}

fn print_entry(e: &RagEntry) {
    println!("{} [{}]\n{}", e.id, e.tags.join(","), e.description);
}

fn rag(cmd: RagCommand) -> Result<i32> {
    match cmd {
        RagCommand::Add { store, id, description, nodes, edges, tags } => {
            let (embedder, _) = rag_setup(&store)?;
            let mut db = RagStore::open_or_create(&store.db, embedder.as_ref(), embedder.embed("dimension probe")?.dimension())?;
            let entry = RagEntry {
                id,
                tags,
                embedding: embedder.embed(&description)?,
                description,
                node_text: read(&nodes)?,
                edge_text: read(&edges)?,
            };
            db.add_entry(entry)?;
            println!("{} entries in {}", db.len(), store.db.display());
        }
        RagCommand::Ingest { store, id, net, tags, model_summary: model } => {
            let (embedder, mut backend) = rag_setup(&store)?;
            let mut db = RagStore::open_or_create(&store.db, embedder.as_ref(), embedder.embed("dimension probe")?.dimension())?;
            let mut describe = |n: &CompiledNetwork| -> Result<String, RagError> {
                let facts = summarize_network(n);
                let Some(model) = &model else {
                    return Ok(facts);
                };
                backend.model_name = model.clone();
                let mut chat = open_backend(&backend, Path::new("")).map_err(|e| RagError::Remote(e.to_string()))?;
                let svg = render_svg(n, CompileOptions::default().lane_width);
                let text = model_summary(chat.as_mut(), &facts, Some(&svg), 0.2).map_err(|e| RagError::Remote(e.to_string()))?;
                Ok(format!("{text}\n\n{facts}"))
            };
            let e = ingest_net_with(&mut db, embedder.as_ref(), &id, &read(&net)?, &tags, &mut describe)?;
            print_entry(e);
        }
        RagCommand::Query { store, text, k } => {
            let (embedder, _) = rag_setup(&store)?;
            let db = RagStore::load(&store.db)?;
            for (e, score) in db.query(embedder.as_ref(), &text, k)? {
                println!("{score:.4}  {} [{}]", e.id, e.tags.join(","));
            }
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.into_config()?;
            let summary = run_generate(&cfg)?;
            print_batch(&summary);
            Ok(summary.exit_code())
        }
        Command::CrashReport { report, run } => {
            let text = read(&report)?;
            let run = RunArgs { request: Some(run.request.unwrap_or_else(|| text.clone())), ..run };
            let cfg = run.into_config()?;
            let summary = crash_report(&text, &cfg)?;
            print_batch(&summary);
            Ok(summary.exit_code())
        }
        Command::Compile { nodes, edges, output } => {
            let opts = CompileOptions::default();
            let result = parse_plain(&read(&nodes)?, &read(&edges)?).and_then(|plan| compile(&plan, &opts));
            match result {
                Ok(net) => {
                    log::info!("scene type: {}", classify_scene(&net, &opts));
                    emit(output.as_deref(), &serialize_net(&net))?;
                    Ok(0)
                }
                Err(diags) => {
                    for d in diags {
                        eprintln!("{d}");
                    }
                    Ok(1)
                }
            }
        }
        Command::Route { net, trips, output } => {
            let net = load_net(&net)?;
            let trips = parse_trips(&read(&trips)?).map_err(|diags| AppError::Invalid { path: "trips".into(), diags })?;
            let (routes, failures) = expand_trips(&net, &trips);
            for (t, d) in &failures {
                eprintln!("{}: {d}", t.vehicle_id);
            }
            let av = trips.iter().find(|t| t.vehicle_kind == scenoforge::net::VehicleKind::Av).map(|t| t.vehicle_id.as_str());
            emit(output.as_deref(), &serialize_routes(&routes, av))?;
            Ok(if failures.is_empty() { 0 } else { 1 })
        }
        Command::Randtrips { net, rate, horizon, seed, all_edges, output } => {
            let net = load_net(&net)?;
            let params = TripGenParams { arrival_rate: rate, horizon, seed, fringe_only: !all_edges };
            let trips = random_trips(&net, &params)?;
            emit(output.as_deref(), &serialize_trips(&trips))?;
            Ok(0)
        }
        Command::Simulate { net, routes, policy, horizon, events } => {
            let network = load_net(&net)?;
            let set = parse_routes(&read(&routes)?).map_err(|diags| AppError::Invalid { path: routes.clone(), diags })?;
            let Some(av_id) = set.av_id else {
                bail!("{}: no vehicle has type AV", routes.display());
            };
            let scenario = Scenario { network, routes: set.routes, av_id, description: None, request: String::new() };
            let cfg = SimConfig { horizon: horizon.unwrap_or(SimConfig::default().horizon), ..SimConfig::default() };
            let trace = simulate(&scenario, &cfg, policy)?;
            if events {
                for e in &trace.events {
                    println!("{:>8.2}  {:?}  {}", e.time, e.kind, e.vehicles.join(" "));
                }
            }
            let score = driving_score(&trace, &scenario, &ScoreWeights::default())?;
            println!("{}", serde_json::to_string_pretty(&score)?);
            Ok(0)
        }
        Command::Evaluate { out, policy, seed } => {
            let (_, scenarios) = load_batch(&out)?;
            if scenarios.is_empty() {
                bail!("{} has no generated scenario", out.display());
            }
            let report = evaluate_batch(
                &scenarios,
                &SimConfig::default(),
                policy,
                &ScoreWeights::default(),
                &BaselineParams::default(),
                seed,
            )?;
            let table = challenge_table(&report);
            fs::write(out.join("challenge.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            fs::write(out.join("challenge.txt"), &table)?;
            print!("{table}");
            Ok(0)
        }
        Command::Rag { command } => rag(command),
        Command::Render { net, output } => {
            let net = load_net(&net)?;
            emit(Some(&output), &render_svg(&net, CompileOptions::default().lane_width))?;
            Ok(0)
        }
        Command::Report { out } => {
            let (summary, scenarios) = load_batch(&out)?;
            let conformity: ConformityReport = serde_json::from_str(&read(&out.join("conformity.json"))?)?;
            print!("{}", conformity_table(&conformity));
            let generated: Vec<Scenario> = scenarios.into_iter().map(|s| s.scenario).collect();
            if !generated.is_empty() {
                println!();
                print!("{}", diversity_table(&diversity_stats(&generated)?));
            }
            if let Ok(text) = fs::read_to_string(out.join("challenge.txt")) {
                println!();
                print!("{text}");
            }
            Ok(summary.exit_code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<AppError>().map_or(1, AppError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
