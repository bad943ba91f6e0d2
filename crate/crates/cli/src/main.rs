use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use r2g_core::graph::{build_scene_graph, GraphConfig};
use r2g_core::harness::eval::{curve_csv, top_k_csv};
use r2g_core::harness::{
    evaluate, generate_dataset, proportions, sweep_gt_proportion, sweep_top_k, Dataset, EngineConfig, GenConfig,
};
use r2g_core::parser::{
    clues_to_instructions, parse_llm, HttpTransport, LlmClientConfig, ParsedClues, ProgramMode, TemplateParser,
};
use r2g_core::reasoning::{ground, WeightBundle};
use r2g_core::relations::{
    superlative_probability, superlative_probability_enumerated, superlative_probability_montecarlo, SuperlativeKind,
};
use r2g_core::scene::load_scene_file;
use r2g_core::vocab::{ConceptVocabulary, VocabConfig};

#[derive(Parser)]
#[command(name = "r2g", version, about = "Ground referring expressions in 3D scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Farthest,
    Closest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Product,
    Enumerate,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParserMode {
    Template,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Program {
    RelationOnly,
    Attribute,
}

impl From<Program> for ProgramMode {
    fn from(p: Program) -> Self {
        match p {
            Program::RelationOnly => ProgramMode::RelationOnly,
            Program::Attribute => ProgramMode::Attribute,
        }
    }
}

#[derive(clap::Args)]
struct VocabArg {
    /// Vocabulary directory (manifest.json + embeddings.txt); built-in when omitted.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl VocabArg {
    fn load(&self) -> Result<ConceptVocabulary> {
        match &self.vocab {
            Some(dir) => ConceptVocabulary::load_dir(dir, VocabConfig::default())
                .with_context(|| format!("loading vocabulary from {}", dir.display())),
            None => Ok(ConceptVocabulary::builtin()),
        }
    }
}

#[derive(clap::Args)]
struct ParserArgs {
    #[arg(long, value_enum, default_value = "template")]
    mode: ParserMode,
    /// Instruction program layout.
    #[arg(long, value_enum, default_value = "relation-only")]
    program: Program,
    /// Prompt template overriding the built-in one (LLM mode).
    #[arg(long)]
    prompt: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Farthest/closest superlative probability for one anchor/target pair.
    Oracle {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        anchor: String,
        #[arg(long)]
        target: String,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, value_enum, default_value = "product")]
        method: Method,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Categories kept per object; all when omitted.
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Build the scene graph and write it as JSON.
    Graph {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        vocab: VocabArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include node and edge embeddings.
        #[arg(long)]
        embeddings: bool,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Parse an utterance into clues (and optionally an instruction program).
    Parse {
        #[arg(long)]
        utterance: String,
        #[command(flatten)]
        vocab: VocabArg,
        #[command(flatten)]
        parser: ParserArgs,
        #[arg(long)]
        emit_program: Option<PathBuf>,
    },
    /// Ground an utterance in a scene.
    Ground {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        utterance: String,
        #[command(flatten)]
        vocab: VocabArg,
        #[command(flatten)]
        parser: ParserArgs,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate grounding accuracy on a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        vocab: VocabArg,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Accuracy against the proportion of ground-truth categories.
    SweepGt {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        vocab: VocabArg,
        #[arg(long, default_value_t = 11)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// CSV output; a JSON twin is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy against the superlative top-K truncation.
    SweepK {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        vocab: VocabArg,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        ks: Vec<usize>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_clues(utterance: &str, vocab: &ConceptVocabulary, args: &ParserArgs) -> Result<ParsedClues> {
    match args.mode {
        ParserMode::Template => Ok(TemplateParser::default().parse(utterance, vocab)?),
        ParserMode::Llm => {
            let mut config = LlmClientConfig::default();
            if let Some(p) = &args.prompt {
                config = config.with_prompt_file(p)?;
            }
            let transport = HttpTransport::from_env()?;
            let out = parse_llm(utterance, vocab, &transport, &config)?;
            for w in &out.warnings {
                log::warn!("{w}");
            }
            Ok(out.clues)
        }
    }
}

fn engine(weights: Option<&Path>) -> Result<EngineConfig> {
    let mut e = EngineConfig::default();
    if let Some(p) = weights {
        e.weights = Some(WeightBundle::load(p).with_context(|| format!("loading weights {}", p.display()))?);
    }
    Ok(e)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Oracle {
            scene,
            anchor,
            target,
            kind,
            method,
            samples,
            seed,
            top_k,
        } => {
            let scene = load_scene_file(&scene)?;
            let kind = match kind {
                Kind::Farthest => SuperlativeKind::Farthest,
                Kind::Closest => SuperlativeKind::Closest,
            };
            let k = top_k.unwrap_or(usize::MAX);
            match method {
                Method::Product => println!("{}", superlative_probability(&scene, &anchor, &target, kind, k)?),
                Method::Enumerate => {
                    println!("{}", superlative_probability_enumerated(&scene, &anchor, &target, kind, k)?)
                }
                Method::Mc => {
                    if top_k.is_some() {
                        log::warn!("--top-k is ignored by the Monte-Carlo method");
                    }
                    let est = superlative_probability_montecarlo(&scene, &anchor, &target, kind, samples, seed)?;
                    println!("{} {}", est.estimate, est.std_error);
                }
            }
        }
        Command::Graph {
            scene,
            vocab,
            out,
            embeddings,
            top_k,
        } => {
            let vocab = vocab.load()?;
            let scene = load_scene_file(&scene)?;
            let mut config = GraphConfig::default();
            if let Some(k) = top_k {
                config.relations.top_k = k;
            }
            let graph = build_scene_graph(&scene, &vocab, &config)?;
            write_or_print(out.as_deref(), &graph.to_json(embeddings))?;
        }
        Command::Parse {
            utterance,
            vocab,
            parser,
            emit_program,
        } => {
            let vocab = vocab.load()?;
            let clues = parse_clues(&utterance, &vocab, &parser)?;
            println!("{}", serde_json::to_string(&clues)?);
            if let Some(path) = emit_program {
                let layout = GraphConfig::default().layout;
                let (program, warnings) = clues_to_instructions(&clues, &vocab, &layout, parser.program.into())?;
                for w in warnings {
                    log::warn!("{w}");
                }
                fs::write(&path, program.to_json(true))?;
            }
        }
        Command::Ground {
            scene,
            utterance,
            vocab,
            parser,
            weights,
            trace,
        } => {
            let vocab = vocab.load()?;
            let scene = load_scene_file(&scene)?;
            let config = GraphConfig::default();
            let graph = build_scene_graph(&scene, &vocab, &config)?;
            let clues = parse_clues(&utterance, &vocab, &parser)?;
            let (program, warnings) = clues_to_instructions(&clues, &vocab, &config.layout, parser.program.into())?;
            for w in warnings {
                log::warn!("{w}");
            }
            let weights = engine(weights.as_deref())?.weights_for(&vocab);
            let result = ground(&graph, &program, &weights)?;
            println!("{} {}", result.selected, result.score);
            if let Some(path) = trace {
                fs::write(&path, result.trace.to_json())?;
            }
        }
        Command::Gen { config, out, seed } => {
            let vocab = ConceptVocabulary::builtin();
            let mut cfg: GenConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => GenConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dataset = generate_dataset(&cfg, &vocab)?;
            dataset.save(&out)?;
            eprintln!("wrote {} scenes to {}", dataset.len(), out.display());
        }
        Command::Eval {
            dataset,
            vocab,
            weights,
            report,
        } => {
            let vocab = vocab.load()?;
            let data = Dataset::load(&dataset)?;
            let r = evaluate(&data, &vocab, &engine(weights.as_deref())?)?;
            println!("accuracy {} ({}/{})", r.accuracy, r.n_correct, r.n_examples);
            for (rel, s) in &r.per_relation {
                println!("  {rel}: {} ({}/{})", s.accuracy, s.correct, s.n);
            }
            if let Some(path) = report {
                fs::write(&path, r.to_json())?;
            }
        }
        Command::SweepGt {
            dataset,
            vocab,
            points,
            seed,
            weights,
            out,
        } => {
            if points == 0 {
                bail!("--points must be at least 1");
            }
            let vocab = vocab.load()?;
            let data = Dataset::load(&dataset)?;
            let curve = sweep_gt_proportion(&data, &vocab, &engine(weights.as_deref())?, &proportions(points), seed)?;
            let csv = curve_csv(&curve);
            print!("{csv}");
            fs::write(&out, &csv)?;
            fs::write(out.with_extension("json"), serde_json::to_string_pretty(&curve)?)?;
        }
        Command::SweepK {
            dataset,
            vocab,
            ks,
            weights,
            out,
        } => {
            let vocab = vocab.load()?;
            let data = Dataset::load(&dataset)?;
            let rows = sweep_top_k(&data, &vocab, &engine(weights.as_deref())?, &ks)?;
            let csv = top_k_csv(&rows);
            print!("{csv}");
            fs::write(&out, csv)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
