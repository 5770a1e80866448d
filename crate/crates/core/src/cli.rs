//! The `gwlab` command line. Exit codes: 0 on success, 2 on usage or
//! configuration errors, 1 on runtime failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    all_questions, confusion_matrix, corrupt_answers, corruption_sweep, question_type_distribution,
    repeated_question_rate, round1, self_bleu, success_rate, sweep_curve, write_sweep_csv,
    CorruptionSpec,
};
use crate::checkpoint::ModelCheckpoint;
use crate::config::RunConfig;
use crate::corpus::{build_vocab, gold_games};
use crate::dataset::{append_log, read_log, split, write_log, GameRecord, DEFAULT_SPLIT};
use crate::engine::{
    assign_targets, interactive_play, self_play, AgentWiring, Agents, GameConfig, GuesserAgent,
    GuesserWiring, HumanRole, OracleAgent, OracleWiring, QuestionerWiring,
};
use crate::error::{Error, Result};
use crate::guesser::{eval_guesser, train_guesser, GuesserModel, GUESSER_KIND};
use crate::oracle::{eval_oracle, train_oracle, OracleModel, ORACLE_KIND};
use crate::questioner::{train_questioner, QuestionerModel, QUESTIONER_KIND};
use crate::world::{
    generate_world, read_scenes, scene_map, write_scenes, Scene, SceneMap, SceneSpec,
};

pub const SEED_ENV: &str = "GWLAB_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "gwlab",
    version,
    about = "Three-agent guessing game laboratory"
)]
struct Cli {
    /// key = value run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed [default: config seed, then $GWLAB_SEED, then 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: all cores for play and sweeps, 1 for training].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Scene file (JSON lines).
    #[arg(long)]
    scenes: PathBuf,
    /// Gold game log (JSON lines).
    #[arg(long)]
    games: PathBuf,
}

#[derive(Debug, Args)]
struct WiringArgs {
    /// rule, noisy:EPS, trained:PATH or weak:PATH.
    #[arg(long, default_value = "rule")]
    oracle: OracleWiring,
    /// trained:PATH, uniform or prior.
    #[arg(long, default_value = "uniform")]
    guesser: GuesserWiring,
    /// trained:PATH, scripted or human.
    #[arg(long, default_value = "scripted")]
    questioner: QuestionerWiring,
}

impl WiringArgs {
    fn wiring(&self) -> AgentWiring {
        AgentWiring {
            oracle: self.oracle.clone(),
            guesser: self.guesser.clone(),
            questioner: self.questioner.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic scenes, optionally with gold dialogs.
    GenWorld {
        #[arg(long)]
        scenes: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write one gold dialog per scene here.
        #[arg(long)]
        dialogs: Option<PathBuf>,
        #[arg(long)]
        min_objects: Option<usize>,
        #[arg(long)]
        max_objects: Option<usize>,
        #[arg(long)]
        categories: Option<usize>,
        #[arg(long)]
        colors: Option<usize>,
        #[arg(long)]
        max_turns: Option<usize>,
    },
    /// Train the oracle on gold answers.
    TrainOracle {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        /// Blind the oracle to object features.
        #[arg(long)]
        weak: bool,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the guesser on gold dialogs.
    TrainGuesser {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// post_fusion or pre_concatenation.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the questioner on top of a trained guesser.
    TrainQuestioner {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Guesser checkpoint providing the state estimator.
        #[arg(long)]
        guesser: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train the estimator too.
        #[arg(long)]
        fine_tune: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Play one game per scene and write the log.
    Selfplay {
        #[arg(long)]
        scenes: PathBuf,
        #[command(flatten)]
        wiring: WiringArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_turns: Option<usize>,
        /// Store belief trajectories in the log.
        #[arg(long)]
        beliefs: bool,
        /// Sample trained questions at this temperature instead of greedy.
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Metrics of a game log, or accuracy of a checkpoint on gold games.
    Eval {
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        scenes: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        games: Option<PathBuf>,
        /// Largest n-gram order for self-BLEU.
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Corrupt a fraction of the answers in a log.
    Corrupt {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Guesser accuracy against increasing answer corruption.
    SweepCorruption {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Repeat for several guessers: trained:PATH, uniform or prior.
        #[arg(long = "guesser", required = true)]
        guessers: Vec<GuesserWiring>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
        )]
        ratios: Vec<f64>,
        /// Number of corruption seeds per ratio.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint success table of two logs over the same games.
    Confusion {
        #[arg(long)]
        log_a: PathBuf,
        #[arg(long)]
        log_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Success rates for every oracle and guesser pairing.
    Ablate {
        #[arg(long)]
        scenes: PathBuf,
        /// First one is the baseline.
        #[arg(long = "oracle", required = true)]
        oracles: Vec<OracleWiring>,
        /// First one is the baseline.
        #[arg(long = "guesser", required = true)]
        guessers: Vec<GuesserWiring>,
        #[arg(long, default_value = "scripted")]
        questioner: QuestionerWiring,
        #[arg(long)]
        max_turns: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play one game at the terminal.
    Play {
        /// oracle: answer machine questions; questioner: ask your own.
        #[arg(long)]
        role: HumanRole,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, default_value_t = 0)]
        scene_index: usize,
        #[command(flatten)]
        wiring: WiringArgs,
        /// Log to append the finished game to.
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        max_turns: Option<usize>,
    },
}

impl Command {
    fn is_training(&self) -> bool {
        matches!(
            self,
            Command::TrainOracle { .. }
                | Command::TrainGuesser { .. }
                | Command::TrainQuestioner { .. }
        )
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidSpec(_) => 2,
                _ => 1,
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = match cli.seed.or(config.seed) {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an integer")))?,
            Err(_) => 0,
        },
    };
    let jobs = cli
        .jobs
        .unwrap_or(if cli.command.is_training() { 1 } else { 0 });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let ctx = Context { config, seed };
    pool.install(|| ctx.dispatch(cli.command))
}

struct Context {
    config: RunConfig,
    seed: u64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_corpus(c: &CorpusArgs) -> Result<(SceneMap, Vec<GameRecord>)> {
    let scenes = read_scenes(&c.scenes)?;
    let games = read_log(&c.games)?;
    Ok((scene_map(&scenes), games))
}

fn load_guesser_agent(w: &GuesserWiring) -> Result<GuesserAgent> {
    Ok(match w {
        GuesserWiring::Trained(p) => {
            GuesserAgent::Trained(GuesserModel::from_checkpoint(&ModelCheckpoint::load(p)?)?)
        }
        GuesserWiring::UniformRandom => GuesserAgent::UniformRandom,
        GuesserWiring::SpatialPrior => GuesserAgent::SpatialPrior,
    })
}

fn load_oracle_agent(w: &OracleWiring) -> Result<OracleAgent> {
    Ok(Agents::load(&AgentWiring {
        oracle: w.clone(),
        guesser: GuesserWiring::UniformRandom,
        questioner: QuestionerWiring::Scripted,
    })?
    .oracle)
}

fn print_training(kind: &str, report: &crate::training::TrainReport) {
    println!(
        "{kind}: {} epochs, best epoch {}",
        report.epochs.len(),
        report.best_epoch
    );
    if let Some(best) = report.epochs.get(report.best_epoch.saturating_sub(1)) {
        let shown = best.valid.unwrap_or(best.train);
        match shown.accuracy {
            Some(a) => println!("  validation accuracy {:.1}%", 100.0 * a),
            None => println!("  validation loss {:.4}", shown.loss),
        }
    }
}

impl Context {
    fn game_config(&self, max_turns: Option<usize>) -> GameConfig {
        GameConfig {
            max_turns: max_turns
                .or(self.config.max_turns)
                .unwrap_or(crate::engine::DEFAULT_MAX_TURNS),
            master_seed: self.seed,
            ..Default::default()
        }
    }

    fn dispatch(&self, command: Command) -> Result<()> {
        match command {
            Command::GenWorld {
                scenes,
                out,
                dialogs,
                min_objects,
                max_objects,
                categories,
                colors,
                max_turns,
            } => {
                let mut spec = SceneSpec::default();
                if let Some(v) = min_objects {
                    spec.n_objects_min = v;
                }
                if let Some(v) = max_objects {
                    spec.n_objects_max = v;
                }
                if let Some(v) = categories {
                    spec.n_categories = v;
                }
                if let Some(v) = colors {
                    spec.n_colors = v;
                }
                spec.validate()?;
                let world = generate_world(&spec, scenes, self.seed)?;
                write_scenes(&world, &out)?;
                println!("wrote {} scenes to {}", world.len(), out.display());
                if let Some(path) = dialogs {
                    let turns = max_turns
                        .or(self.config.max_turns)
                        .unwrap_or(crate::engine::DEFAULT_MAX_TURNS);
                    let games = gold_games(&world, turns, self.seed)?;
                    write_log(&games, &path)?;
                    println!(
                        "wrote {} gold dialogs to {} ({:.1}% reach the target)",
                        games.len(),
                        path.display(),
                        success_rate(&games)?
                    );
                }
                Ok(())
            }
            Command::TrainOracle {
                corpus,
                out,
                weak,
                report,
            } => {
                let (map, games) = load_corpus(&corpus)?;
                let vocab = build_vocab(&games);
                let parts = split(&games, DEFAULT_SPLIT, self.seed)?;
                let mut cfg = self.config.oracle(self.seed);
                cfg.weak = weak;
                let (model, train) = train_oracle(&parts.train, &parts.valid, &map, &vocab, &cfg)?;
                model.to_checkpoint().save(&out)?;
                print_training(ORACLE_KIND, &train);
                let test = eval_oracle(&model, &parts.test, &map)?;
                println!(
                    "  test accuracy {:.1}% over {} answers",
                    100.0 * test.overall,
                    test.count
                );
                for (t, a) in &test.by_type {
                    if let Some(acc) = a.accuracy {
                        println!("    {t:<9} {:>5.1}%  ({})", 100.0 * acc, a.count);
                    }
                }
                if let Some(p) = report {
                    write_json(&p, &serde_json::json!({"training": train, "test": test}))?;
                }
                Ok(())
            }
            Command::TrainGuesser {
                corpus,
                out,
                alpha,
                variant,
                report,
            } => {
                let (map, games) = load_corpus(&corpus)?;
                let vocab = build_vocab(&games);
                let parts = split(&games, DEFAULT_SPLIT, self.seed)?;
                let mut cfg = self.config.guesser(self.seed);
                if let Some(a) = alpha {
                    cfg.alpha = a;
                }
                if let Some(v) = variant {
                    cfg.variant = v.parse()?;
                }
                cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
                let (model, train) = train_guesser(&parts.train, &parts.valid, &map, &vocab, &cfg)?;
                model.to_checkpoint().save(&out)?;
                print_training(GUESSER_KIND, &train);
                let test = eval_guesser(&model, &parts.test, &map)?;
                println!(
                    "  test accuracy {:.1}% over {} dialogs",
                    100.0 * test,
                    parts.test.len()
                );
                if let Some(p) = report {
                    write_json(
                        &p,
                        &serde_json::json!({"training": train, "test_accuracy": test}),
                    )?;
                }
                Ok(())
            }
            Command::TrainQuestioner {
                corpus,
                guesser,
                out,
                fine_tune,
                report,
            } => {
                let (map, games) = load_corpus(&corpus)?;
                let vocab = build_vocab(&games);
                let parts = split(&games, DEFAULT_SPLIT, self.seed)?;
                let estimator = GuesserModel::from_checkpoint(&ModelCheckpoint::load(&guesser)?)?;
                let mut cfg = self.config.questioner(self.seed);
                if fine_tune {
                    cfg.freeze_estimator = false;
                }
                let (model, train) =
                    train_questioner(&parts.train, &parts.valid, &map, &vocab, &estimator, &cfg)?;
                model.to_checkpoint().save(&out)?;
                print_training(QUESTIONER_KIND, &train);
                let ppl = model.perplexity(&parts.test, &map)?;
                println!(
                    "  test perplexity {ppl:.2} (uniform over the vocabulary: {})",
                    vocab.len()
                );
                if let Some(p) = report {
                    write_json(
                        &p,
                        &serde_json::json!({"training": train, "test_perplexity": ppl}),
                    )?;
                }
                Ok(())
            }
            Command::Selfplay {
                scenes,
                wiring,
                out,
                max_turns,
                beliefs,
                temperature,
            } => {
                let world = read_scenes(&scenes)?;
                let agents = Agents::load(&wiring.wiring())?;
                let mut cfg = self.game_config(max_turns);
                cfg.record_beliefs = beliefs;
                cfg.sample_temperature = temperature;
                let targets = assign_targets(&world, self.seed);
                let games = self_play(&agents, &world, &targets, &cfg)?;
                write_log(&games, &out)?;
                println!(
                    "{} games, success {:.1}%, repeated questions {:.1}%",
                    games.len(),
                    success_rate(&games)?,
                    repeated_question_rate(&games)
                );
                Ok(())
            }
            Command::Eval {
                log,
                checkpoint,
                scenes,
                games,
                max_n,
                report,
            } => self.eval(log, checkpoint, scenes, games, max_n, report),
            Command::Corrupt { log, ratio, out } => {
                let games = read_log(&log)?;
                let spec = CorruptionSpec {
                    ratio,
                    seed: self.seed,
                };
                let corrupted = corrupt_answers(&games, &spec)?;
                write_log(&corrupted, &out)?;
                let changed = games
                    .iter()
                    .zip(&corrupted)
                    .flat_map(|(a, b)| a.turns.iter().zip(&b.turns))
                    .filter(|(x, y)| x.answer != y.answer)
                    .count();
                println!("corrupted {changed} answers into {}", out.display());
                Ok(())
            }
            Command::SweepCorruption {
                corpus,
                guessers,
                ratios,
                seeds,
                out,
            } => {
                let (map, games) = load_corpus(&corpus)?;
                let named: Vec<(String, GuesserAgent)> = guessers
                    .iter()
                    .map(|w| Ok((w.to_string(), load_guesser_agent(w)?)))
                    .collect::<Result<_>>()?;
                let seed_list: Vec<u64> = (0..seeds).map(|i| self.seed + i).collect();
                let rows = corruption_sweep(&named, &games, &map, &ratios, &seed_list)?;
                write_sweep_csv(&rows, create(&out)?)?;
                println!(
                    "{:<24} {:>5} {:>8} {:>7}",
                    "guesser", "ratio", "mean", "stdev"
                );
                for p in sweep_curve(&rows) {
                    println!(
                        "{:<24} {:>5.2} {:>7.1}% {:>7.2}",
                        p.guesser, p.ratio, p.mean, p.stdev
                    );
                }
                Ok(())
            }
            Command::Confusion { log_a, log_b, out } => {
                let m = confusion_matrix(&read_log(&log_a)?, &read_log(&log_b)?)?;
                let (r0, r1) = m.row_marginals();
                let (c0, c1) = m.column_marginals();
                println!("{:>12} {:>10} {:>10} {:>8}", "", "B correct", "B wrong", "");
                println!(
                    "{:>12} {:>10} {:>10} {:>7.1}%",
                    "A correct",
                    m.aa,
                    m.ab,
                    round1(r0)
                );
                println!(
                    "{:>12} {:>10} {:>10} {:>7.1}%",
                    "A wrong",
                    m.ba,
                    m.bb,
                    round1(r1)
                );
                println!("{:>12} {:>9.1}% {:>9.1}%", "", round1(c0), round1(c1));
                if let Some(p) = out {
                    write_json(&p, &m.to_json())?;
                }
                Ok(())
            }
            Command::Ablate {
                scenes,
                oracles,
                guessers,
                questioner,
                max_turns,
                out,
            } => {
                let world = read_scenes(&scenes)?;
                let q = Agents::load(&AgentWiring {
                    oracle: OracleWiring::Rule,
                    guesser: GuesserWiring::UniformRandom,
                    questioner,
                })?
                .questioner;
                let o: Vec<(String, OracleAgent)> = oracles
                    .iter()
                    .map(|w| Ok((w.to_string(), load_oracle_agent(w)?)))
                    .collect::<Result<_>>()?;
                let g: Vec<(String, GuesserAgent)> = guessers
                    .iter()
                    .map(|w| Ok((w.to_string(), load_guesser_agent(w)?)))
                    .collect::<Result<_>>()?;
                let targets = assign_targets(&world, self.seed);
                let grid = crate::analysis::ablation_grid(
                    &o,
                    &g,
                    &q,
                    &world,
                    &targets,
                    &self.game_config(max_turns),
                )?;
                grid.write_csv(create(&out)?)?;
                print!("{}", grid.render());
                if let Ok(delta) = grid.interaction_delta() {
                    println!("interaction {delta:+.1} points");
                }
                Ok(())
            }
            Command::Play {
                role,
                scenes,
                scene_index,
                wiring,
                log,
                max_turns,
            } => {
                let world = read_scenes(&scenes)?;
                let scene: &Scene = world.get(scene_index).ok_or_else(|| {
                    Error::InvalidSpec(format!(
                        "scene index {scene_index} out of range ({} scenes)",
                        world.len()
                    ))
                })?;
                let agents = Agents::load(&wiring.wiring())?;
                let target = assign_targets(std::slice::from_ref(scene), self.seed)[0];
                let stdin = std::io::stdin();
                let mut input = stdin.lock();
                let mut out = std::io::stdout();
                let game = interactive_play(
                    role,
                    &agents,
                    scene,
                    target,
                    &self.game_config(max_turns),
                    &mut input,
                    &mut out,
                )?;
                append_log(&game, &log)?;
                Ok(())
            }
        }
    }

    fn eval(
        &self,
        log: Option<PathBuf>,
        checkpoint: Option<PathBuf>,
        scenes: Option<PathBuf>,
        games: Option<PathBuf>,
        max_n: usize,
        report: Option<PathBuf>,
    ) -> Result<()> {
        let mut json = serde_json::Map::new();
        if log.is_none() && checkpoint.is_none() {
            return Err(Error::InvalidSpec(
                "eval needs --log or --checkpoint".into(),
            ));
        }
        if let Some(path) = log {
            let games = read_log(&path)?;
            let sr = success_rate(&games)?;
            let rq = repeated_question_rate(&games);
            let bleu = self_bleu(&all_questions(&games), max_n);
            let types = question_type_distribution(&games);
            println!("games              {}", games.len());
            println!("success rate       {sr:.1}%");
            println!("repeated questions {rq:.1}%");
            for (n, b) in &bleu {
                println!("self-BLEU-{n}        {b:.4}");
            }
            for (t, p) in &types {
                println!("  {t:<9} {p:>5.1}%");
            }
            json.insert(
                "log".into(),
                serde_json::json!({
                    "games": games.len(),
                    "success_rate": sr,
                    "repeated_question_rate": rq,
                    "self_bleu": bleu.iter().map(|(n, b)| (n.to_string(), serde_json::json!(b))).collect::<serde_json::Map<_, _>>(),
                    "question_types": types.iter().map(|(t, p)| (t.to_string(), serde_json::json!(p))).collect::<serde_json::Map<_, _>>(),
                }),
            );
        }
        if let Some(path) = checkpoint {
            let (scenes, games) = match (scenes, games) {
                (Some(s), Some(g)) => (s, g),
                _ => {
                    return Err(Error::InvalidSpec(
                        "--checkpoint needs --scenes and --games".into(),
                    ))
                }
            };
            let map = scene_map(&read_scenes(&scenes)?);
            let games = read_log(&games)?;
            let ckpt = ModelCheckpoint::load(&path)?;
            let value = match ckpt.model_kind.as_str() {
                ORACLE_KIND => {
                    let r = eval_oracle(&OracleModel::from_checkpoint(&ckpt)?, &games, &map)?;
                    println!(
                        "oracle accuracy {:.1}% over {} answers",
                        100.0 * r.overall,
                        r.count
                    );
                    serde_json::to_value(r).expect("report serializes")
                }
                GUESSER_KIND => {
                    let acc = eval_guesser(&GuesserModel::from_checkpoint(&ckpt)?, &games, &map)?;
                    println!("guesser accuracy {:.1}%", 100.0 * acc);
                    serde_json::json!({"accuracy": acc})
                }
                QUESTIONER_KIND => {
                    let ppl = QuestionerModel::from_checkpoint(&ckpt)?.perplexity(&games, &map)?;
                    println!("questioner perplexity {ppl:.2}");
                    serde_json::json!({"perplexity": ppl})
                }
                other => {
                    return Err(Error::IncompatibleCheckpoint(format!(
                        "unknown model kind {other:?}"
                    )))
                }
            };
            json.insert("checkpoint".into(), value);
        }
        if let Some(p) = report {
            write_json(&p, &serde_json::Value::Object(json))?;
        }
        Ok(())
    }
}
