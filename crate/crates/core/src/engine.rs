//! Full games: the questioner asks, the oracle answers, the guesser updates
//! its belief, for a fixed number of turns; then the guesser picks.
//!
//! Every game draws from its own random streams, derived from the master
//! seed and the game id, so logs do not depend on scheduling or on the order
//! of the scene list.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::ModelCheckpoint;
use crate::dataset::{GameRecord, GameStatus, Turn, Vocabulary};
use crate::encoder::{object_features, ObjectFeatureSet};
use crate::error::{Error, Result};
use crate::guesser::{guess, BeliefState, GuesserModel};
use crate::numkernel::mix_seed;
use crate::oracle::OracleModel;
use crate::questioner::{DecodeStrategy, QuestionerModel};
use crate::world::{
    parse_question, render_scene_text, rule_answer, AnswerClass, BalancedPlanner, Scene,
};

pub use crate::dataset::{read_log, write_log};

pub const DEFAULT_MAX_TURNS: usize = 5;

const TARGET_STREAM: u64 = 0x7A56;
const ORACLE_STREAM: u64 = 1;
const QUESTIONER_STREAM: u64 = 2;
const GUESSER_STREAM: u64 = 3;

/// Which oracle answers, as named on the command line:
/// `rule`, `noisy:EPS`, `trained:PATH` or `weak:PATH`.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleWiring {
    Rule,
    NoisyRule(f64),
    Trained(PathBuf),
    Weak(PathBuf),
}

/// `trained:PATH`, `uniform` or `prior`.
#[derive(Debug, Clone, PartialEq)]
pub enum GuesserWiring {
    Trained(PathBuf),
    UniformRandom,
    SpatialPrior,
}

/// `trained:PATH`, `scripted` or `human`.
#[derive(Debug, Clone, PartialEq)]
pub enum QuestionerWiring {
    Trained(PathBuf),
    Scripted,
    HumanTerminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentWiring {
    pub oracle: OracleWiring,
    pub guesser: GuesserWiring,
    pub questioner: QuestionerWiring,
}

fn split_wiring(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((k, rest)) => (k, Some(rest)),
        None => (s, None),
    }
}

fn bad_wiring(what: &str, s: &str, forms: &str) -> Error {
    Error::InvalidSpec(format!("unknown {what} {s:?}; expected one of {forms}"))
}

impl FromStr for OracleWiring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let forms = "rule, noisy:EPS, trained:PATH, weak:PATH";
        match split_wiring(s) {
            ("rule", None) => Ok(OracleWiring::Rule),
            ("noisy", Some(eps)) => {
                let e: f64 = eps.parse().map_err(|_| bad_wiring("oracle", s, forms))?;
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::InvalidSpec(format!(
                        "noise level {e} outside [0, 1]"
                    )));
                }
                Ok(OracleWiring::NoisyRule(e))
            }
            ("trained", Some(p)) if !p.is_empty() => Ok(OracleWiring::Trained(p.into())),
            ("weak", Some(p)) if !p.is_empty() => Ok(OracleWiring::Weak(p.into())),
            _ => Err(bad_wiring("oracle", s, forms)),
        }
    }
}

impl FromStr for GuesserWiring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match split_wiring(s) {
            ("uniform", None) => Ok(GuesserWiring::UniformRandom),
            ("prior", None) => Ok(GuesserWiring::SpatialPrior),
            ("trained", Some(p)) if !p.is_empty() => Ok(GuesserWiring::Trained(p.into())),
            _ => Err(bad_wiring("guesser", s, "trained:PATH, uniform, prior")),
        }
    }
}

impl FromStr for QuestionerWiring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match split_wiring(s) {
            ("scripted", None) => Ok(QuestionerWiring::Scripted),
            ("human", None) => Ok(QuestionerWiring::HumanTerminal),
            ("trained", Some(p)) if !p.is_empty() => Ok(QuestionerWiring::Trained(p.into())),
            _ => Err(bad_wiring("questioner", s, "trained:PATH, scripted, human")),
        }
    }
}

impl fmt::Display for OracleWiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleWiring::Rule => write!(f, "rule"),
            OracleWiring::NoisyRule(e) => write!(f, "noisy:{e}"),
            OracleWiring::Trained(p) => write!(f, "trained:{}", p.display()),
            OracleWiring::Weak(p) => write!(f, "weak:{}", p.display()),
        }
    }
}

impl fmt::Display for GuesserWiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuesserWiring::Trained(p) => write!(f, "trained:{}", p.display()),
            GuesserWiring::UniformRandom => write!(f, "uniform"),
            GuesserWiring::SpatialPrior => write!(f, "prior"),
        }
    }
}

impl fmt::Display for QuestionerWiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuestionerWiring::Trained(p) => write!(f, "trained:{}", p.display()),
            QuestionerWiring::Scripted => write!(f, "scripted"),
            QuestionerWiring::HumanTerminal => write!(f, "human"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleAgent {
    Rule,
    /// Rule answers with Yes and No swapped with probability `epsilon`;
    /// NA is left alone.
    NoisyRule {
        epsilon: f64,
    },
    Trained(OracleModel),
}

impl OracleAgent {
    pub fn answer<R: Rng>(
        &self,
        scene: &Scene,
        target: usize,
        question: &str,
        rng: &mut R,
    ) -> Result<AnswerClass> {
        match self {
            OracleAgent::Rule => rule_answer(scene, target, &parse_question(question)),
            OracleAgent::NoisyRule { epsilon } => {
                let a = rule_answer(scene, target, &parse_question(question))?;
                // Draw on every turn so the stream does not depend on answers.
                let flip = rng.gen_bool(*epsilon);
                Ok(if flip { a.opposite() } else { a })
            }
            OracleAgent::Trained(m) => m.answer(scene, target, question),
        }
    }

    fn vocab(&self) -> Option<&Vocabulary> {
        match self {
            OracleAgent::Trained(m) => Some(&m.vocab),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            OracleAgent::Rule => "rule".into(),
            OracleAgent::NoisyRule { epsilon } => format!("noisy:{epsilon}"),
            OracleAgent::Trained(m) if m.config.weak => "weak".into(),
            OracleAgent::Trained(_) => "trained".into(),
        }
    }
}

/// Belief proportional to box area: a guesser that ignores the dialog.
pub fn spatial_prior(scene: &Scene) -> Vec<f64> {
    let areas: Vec<f64> = scene.objects.iter().map(|o| o.bbox.area()).collect();
    let total: f64 = areas.iter().sum();
    areas.iter().map(|a| a / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum GuesserAgent {
    Trained(GuesserModel),
    /// Keeps a uniform belief and guesses uniformly at random.
    UniformRandom,
    /// Always picks the largest object.
    SpatialPrior,
}

/// Belief trajectory with the uniform start, and the final pick.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessOutcome {
    pub beliefs: Vec<Vec<f64>>,
    pub guess: usize,
}

impl GuesserAgent {
    fn initial(&self, scene: &Scene) -> Vec<f64> {
        match self {
            GuesserAgent::SpatialPrior => spatial_prior(scene),
            _ => BeliefState::uniform(scene.len()).probabilities,
        }
    }

    fn update(
        &self,
        feats: &ObjectFeatureSet,
        belief: &[f64],
        question: &str,
        answer: AnswerClass,
    ) -> Result<Vec<f64>> {
        match self {
            GuesserAgent::Trained(m) => m.observe(feats, belief, question, answer),
            _ => Ok(belief.to_vec()),
        }
    }

    fn pick<R: Rng>(&self, belief: &[f64], rng: &mut R) -> usize {
        match self {
            GuesserAgent::UniformRandom => rng.gen_range(0..belief.len()),
            _ => guess(&BeliefState {
                probabilities: belief.to_vec(),
                turn_index: 0,
            }),
        }
    }

    /// Replays a recorded dialog, ignoring its recorded guess.
    pub fn replay<R: Rng>(
        &self,
        game: &GameRecord,
        scene: &Scene,
        rng: &mut R,
    ) -> Result<GuessOutcome> {
        let feats = object_features(scene);
        let mut beliefs = vec![self.initial(scene)];
        for t in &game.turns {
            let next = self.update(
                &feats,
                beliefs.last().expect("non-empty"),
                &t.question,
                t.answer,
            )?;
            beliefs.push(next);
        }
        let guess = self.pick(beliefs.last().expect("non-empty"), rng);
        Ok(GuessOutcome { beliefs, guess })
    }

    fn vocab(&self) -> Option<&Vocabulary> {
        match self {
            GuesserAgent::Trained(m) => Some(&m.vocab),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            GuesserAgent::Trained(_) => "trained".into(),
            GuesserAgent::UniformRandom => "uniform".into(),
            GuesserAgent::SpatialPrior => "prior".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuestionerAgent {
    Trained(QuestionerModel),
    /// Asks the grammar question that best splits the objects still
    /// consistent with the answers.
    Scripted,
    HumanTerminal,
}

impl QuestionerAgent {
    fn vocab(&self) -> Option<&Vocabulary> {
        match self {
            QuestionerAgent::Trained(m) => Some(&m.vocab),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            QuestionerAgent::Trained(_) => "trained".into(),
            QuestionerAgent::Scripted => "scripted".into(),
            QuestionerAgent::HumanTerminal => "human".into(),
        }
    }
}

/// Per-game questioner state.
enum Asker<'a> {
    Trained {
        model: &'a QuestionerModel,
        belief: BeliefState,
    },
    Scripted(BalancedPlanner),
}

impl Asker<'_> {
    fn ask<R: Rng>(
        &mut self,
        scene: &Scene,
        feats: &ObjectFeatureSet,
        strategy: DecodeStrategy,
        rng: &mut R,
    ) -> Result<String> {
        match self {
            Asker::Trained { model, belief } => {
                Ok(model.ask_with(feats, belief, strategy, rng)?.text)
            }
            Asker::Scripted(planner) => Ok(planner.next_question(scene, rng).text()),
        }
    }

    fn observe(
        &mut self,
        scene: &Scene,
        feats: &ObjectFeatureSet,
        question: &str,
        answer: AnswerClass,
    ) -> Result<()> {
        match self {
            Asker::Trained { model, belief } => {
                belief.probabilities =
                    model
                        .estimator()
                        .observe(feats, &belief.probabilities, question, answer)?;
                belief.turn_index += 1;
            }
            Asker::Scripted(planner) => planner.observe(scene, &parse_question(question), answer),
        }
        Ok(())
    }
}

/// Loaded agents, all sharing one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Agents {
    pub oracle: OracleAgent,
    pub guesser: GuesserAgent,
    pub questioner: QuestionerAgent,
}

impl Agents {
    pub fn new(
        oracle: OracleAgent,
        guesser: GuesserAgent,
        questioner: QuestionerAgent,
    ) -> Result<Self> {
        let vocabs: Vec<&Vocabulary> = [oracle.vocab(), guesser.vocab(), questioner.vocab()]
            .into_iter()
            .flatten()
            .collect();
        if vocabs.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::IncompatibleCheckpoint(
                "the wired agents were trained with different vocabularies".into(),
            ));
        }
        Ok(Agents {
            oracle,
            guesser,
            questioner,
        })
    }

    pub fn load(wiring: &AgentWiring) -> Result<Self> {
        let oracle = match &wiring.oracle {
            OracleWiring::Rule => OracleAgent::Rule,
            OracleWiring::NoisyRule(e) => OracleAgent::NoisyRule { epsilon: *e },
            OracleWiring::Trained(p) | OracleWiring::Weak(p) => {
                let m = OracleModel::from_checkpoint(&ModelCheckpoint::load(p)?)?;
                let want_weak = matches!(wiring.oracle, OracleWiring::Weak(_));
                if m.config.weak != want_weak {
                    return Err(Error::IncompatibleCheckpoint(format!(
                        "{} holds a {} oracle",
                        p.display(),
                        if m.config.weak { "weak" } else { "full" }
                    )));
                }
                OracleAgent::Trained(m)
            }
        };
        let guesser = match &wiring.guesser {
            GuesserWiring::Trained(p) => {
                GuesserAgent::Trained(GuesserModel::from_checkpoint(&ModelCheckpoint::load(p)?)?)
            }
            GuesserWiring::UniformRandom => GuesserAgent::UniformRandom,
            GuesserWiring::SpatialPrior => GuesserAgent::SpatialPrior,
        };
        let questioner = match &wiring.questioner {
            QuestionerWiring::Trained(p) => QuestionerAgent::Trained(
                QuestionerModel::from_checkpoint(&ModelCheckpoint::load(p)?)?,
            ),
            QuestionerWiring::Scripted => QuestionerAgent::Scripted,
            QuestionerWiring::HumanTerminal => QuestionerAgent::HumanTerminal,
        };
        Agents::new(oracle, guesser, questioner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConfig {
    pub max_turns: usize,
    pub master_seed: u64,
    /// Store the belief trajectory in each record.
    pub record_beliefs: bool,
    /// Trained questioners decode greedily unless a temperature is set.
    pub sample_temperature: Option<f64>,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            max_turns: DEFAULT_MAX_TURNS,
            master_seed: 0,
            record_beliefs: false,
            sample_temperature: None,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::InvalidSpec("max_turns must be at least 1".into()));
        }
        if self.sample_temperature.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::InvalidSpec("temperature must be positive".into()));
        }
        Ok(())
    }

    fn strategy(&self) -> DecodeStrategy {
        match self.sample_temperature {
            Some(temperature) => DecodeStrategy::Sample { temperature },
            None => DecodeStrategy::Greedy,
        }
    }

    fn stream(&self, game_id: u64, which: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(self.master_seed, game_id), which))
    }
}

/// Uniformly drawn target per scene, keyed by scene id.
pub fn assign_targets(scenes: &[Scene], seed: u64) -> Vec<usize> {
    scenes
        .iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ TARGET_STREAM, s.scene_id));
            rng.gen_range(0..s.len())
        })
        .collect()
}

fn finish(
    scene: &Scene,
    target: usize,
    turns: Vec<Turn>,
    beliefs: Vec<Vec<f64>>,
    pick: usize,
    config: &GameConfig,
) -> GameRecord {
    GameRecord {
        game_id: scene.scene_id,
        scene_id: scene.scene_id,
        target_id: target,
        turns,
        guess: Some(pick),
        status: if pick == target {
            GameStatus::Success
        } else {
            GameStatus::Failure
        },
        beliefs: config.record_beliefs.then_some(beliefs),
    }
}

/// One machine-only game. The game id is the scene id.
pub fn play_game(
    agents: &Agents,
    scene: &Scene,
    target: usize,
    config: &GameConfig,
) -> Result<GameRecord> {
    config.validate()?;
    scene.object(target)?;
    let feats = object_features(scene);
    let mut asker = match &agents.questioner {
        QuestionerAgent::Trained(model) => Asker::Trained {
            model,
            belief: BeliefState::uniform(scene.len()),
        },
        QuestionerAgent::Scripted => Asker::Scripted(BalancedPlanner::new(scene)),
        QuestionerAgent::HumanTerminal => {
            return Err(Error::InvalidSpec(
                "a human questioner needs interactive play".into(),
            ))
        }
    };
    let mut q_rng = config.stream(scene.scene_id, QUESTIONER_STREAM);
    let mut o_rng = config.stream(scene.scene_id, ORACLE_STREAM);
    let mut g_rng = config.stream(scene.scene_id, GUESSER_STREAM);
    let strategy = config.strategy();

    let mut beliefs = vec![agents.guesser.initial(scene)];
    let mut turns = Vec::with_capacity(config.max_turns);
    for _ in 0..config.max_turns {
        let question = asker.ask(scene, &feats, strategy, &mut q_rng)?;
        let answer = agents.oracle.answer(scene, target, &question, &mut o_rng)?;
        asker.observe(scene, &feats, &question, answer)?;
        let next = agents.guesser.update(
            &feats,
            beliefs.last().expect("non-empty"),
            &question,
            answer,
        )?;
        beliefs.push(next);
        turns.push(Turn::new(question, answer));
    }
    let pick = agents
        .guesser
        .pick(beliefs.last().expect("non-empty"), &mut g_rng);
    Ok(finish(scene, target, turns, beliefs, pick, config))
}

/// Plays one game per scene in parallel; output order follows the input.
pub fn self_play(
    agents: &Agents,
    scenes: &[Scene],
    targets: &[usize],
    config: &GameConfig,
) -> Result<Vec<GameRecord>> {
    config.validate()?;
    if scenes.len() != targets.len() {
        return Err(Error::InvalidSpec(format!(
            "{} scenes but {} targets",
            scenes.len(),
            targets.len()
        )));
    }
    scenes
        .par_iter()
        .zip(targets.par_iter())
        .map(|(s, &t)| play_game(agents, s, t, config))
        .collect()
}

/// Percentage of successful games.
pub fn success_percent(games: &[GameRecord]) -> f64 {
    if games.is_empty() {
        return 0.0;
    }
    100.0 * games.iter().filter(|g| g.is_success()).count() as f64 / games.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HumanRole {
    /// The human answers machine questions.
    Oracle,
    /// The human asks; the wired oracle answers.
    Questioner,
}

impl FromStr for HumanRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(HumanRole::Oracle),
            "questioner" => Ok(HumanRole::Questioner),
            _ => Err(Error::InvalidSpec(format!(
                "unknown role {s:?}; expected oracle or questioner"
            ))),
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io(Path::new("<terminal>"), e)
}

fn prompt<R: BufRead, W: Write>(input: &mut R, out: &mut W, text: &str) -> Result<String> {
    write!(out, "{text}").map_err(io_err)?;
    out.flush().map_err(io_err)?;
    let mut line = String::new();
    if input.read_line(&mut line).map_err(io_err)? == 0 {
        return Err(Error::InvalidData(
            "input ended before the game finished".into(),
        ));
    }
    Ok(line.trim().to_string())
}

/// A terminal game with a human in one seat. Reprompts on invalid input;
/// the returned record is what the caller appends to the log.
pub fn interactive_play<R: BufRead, W: Write>(
    role: HumanRole,
    agents: &Agents,
    scene: &Scene,
    target: usize,
    config: &GameConfig,
    input: &mut R,
    out: &mut W,
) -> Result<GameRecord> {
    config.validate()?;
    scene.object(target)?;
    let feats = object_features(scene);
    let mut asker = match (role, &agents.questioner) {
        (HumanRole::Questioner, _) => None,
        (HumanRole::Oracle, QuestionerAgent::Trained(model)) => Some(Asker::Trained {
            model,
            belief: BeliefState::uniform(scene.len()),
        }),
        (HumanRole::Oracle, QuestionerAgent::Scripted) => {
            Some(Asker::Scripted(BalancedPlanner::new(scene)))
        }
        (HumanRole::Oracle, QuestionerAgent::HumanTerminal) => {
            return Err(Error::InvalidSpec(
                "the human plays the oracle; wire a machine questioner".into(),
            ))
        }
    };
    let mut q_rng = config.stream(scene.scene_id, QUESTIONER_STREAM);
    let mut o_rng = config.stream(scene.scene_id, ORACLE_STREAM);
    let mut g_rng = config.stream(scene.scene_id, GUESSER_STREAM);
    let strategy = config.strategy();

    write!(out, "{}", render_scene_text(scene)).map_err(io_err)?;
    if role == HumanRole::Oracle {
        writeln!(out, "target: object {target}").map_err(io_err)?;
    }
    let mut beliefs = vec![agents.guesser.initial(scene)];
    let mut turns = Vec::with_capacity(config.max_turns);
    for turn in 1..=config.max_turns {
        let (question, answer) = match asker.as_mut() {
            Some(a) => {
                let q = a.ask(scene, &feats, strategy, &mut q_rng)?;
                writeln!(out, "Q{turn}: {q}").map_err(io_err)?;
                let answer = loop {
                    let line = prompt(input, out, "answer (yes/no/na): ")?;
                    match AnswerClass::parse(&line) {
                        Some(a) => break a,
                        None => writeln!(out, "please type yes, no or na").map_err(io_err)?,
                    }
                };
                a.observe(scene, &feats, &q, answer)?;
                (q, answer)
            }
            None => {
                let q = loop {
                    let line = prompt(input, out, &format!("Q{turn}: "))?;
                    if !line.is_empty() {
                        break line;
                    }
                };
                let answer = agents.oracle.answer(scene, target, &q, &mut o_rng)?;
                writeln!(out, "A{turn}: {answer}").map_err(io_err)?;
                (q, answer)
            }
        };
        let next = agents.guesser.update(
            &feats,
            beliefs.last().expect("non-empty"),
            &question,
            answer,
        )?;
        beliefs.push(next);
        turns.push(Turn::new(question, answer));
    }
    let pick = agents
        .guesser
        .pick(beliefs.last().expect("non-empty"), &mut g_rng);
    let record = finish(scene, target, turns, beliefs, pick, config);
    writeln!(
        out,
        "guess: object {pick} ({})",
        if record.is_success() {
            "success"
        } else {
            "failure"
        }
    )
    .map_err(io_err)?;
    Ok(record)
}
