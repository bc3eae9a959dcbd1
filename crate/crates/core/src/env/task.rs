use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{link_key, CorpusParams, FactId, SyntheticCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn from_hops(hops: usize) -> Self {
        match hops {
            0 | 1 => Difficulty::Easy,
            2 | 3 => Difficulty::Medium,
            _ => Difficulty::Hard,
        }
    }
}

/// A single multi-hop question: start at an entity and follow its link chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub question: String,
    pub start: String,
    pub hop_chain: Vec<FactId>,
    pub answer: String,
    pub difficulty: Difficulty,
}

impl Task {
    pub fn from_chain(corpus: &SyntheticCorpus, chain: usize) -> Self {
        let hop_chain = corpus.chains()[chain].clone();
        let start = corpus.chain_start(chain).to_string();
        let answer = corpus.fact(*hop_chain.last().unwrap()).unwrap().object.clone();
        let hops = hop_chain.len();
        let question = format!(
            "Starting from {start}, follow the link recorded on its page {hops} time{}; each page states `{} points to <next>`. Which entity do you reach?",
            if hops == 1 { "" } else { "s" },
            link_key("<entity>"),
        );
        Self { id: format!("c{chain:04}"), question, start, hop_chain, answer, difficulty: Difficulty::from_hops(hops) }
    }
}

/// Several independent questions that must all be answered in one session.
/// A single task is represented as a compound of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundTask {
    pub id: String,
    pub question: String,
    pub sub_tasks: Vec<Task>,
    pub answers: Vec<String>,
}

impl CompoundTask {
    pub fn k(&self) -> usize {
        self.sub_tasks.len()
    }

    pub fn single(task: &Task) -> Self {
        Self {
            id: task.id.clone(),
            question: task.question.clone(),
            sub_tasks: vec![task.clone()],
            answers: vec![task.answer.clone()],
        }
    }

    pub fn hop_count(&self) -> usize {
        self.sub_tasks.iter().map(|t| t.hop_chain.len()).sum()
    }

    /// Answer string in the format the grader expects.
    pub fn format_answers<S: AsRef<str>>(answers: &[S]) -> String {
        answers.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("need {needed} tasks for a compound of {needed}, got {got}")]
    NotEnoughTasks { needed: usize, got: usize },
    #[error("k must be at least 1")]
    EmptyCompound,
    #[error("tasks `{0}` and `{1}` share hop-chain facts")]
    OverlappingChains(String, String),
    #[error("task set file: {0}")]
    File(String),
    #[error("task set corpus digest mismatch: file says {expected}, regenerated {actual}")]
    Digest { expected: String, actual: String },
}

/// Combines the first `k` tasks into one enumerated question.
pub fn make_compound(tasks: &[Task], k: usize) -> Result<CompoundTask, TaskError> {
    if k == 0 {
        return Err(TaskError::EmptyCompound);
    }
    if tasks.len() < k {
        return Err(TaskError::NotEnoughTasks { needed: k, got: tasks.len() });
    }
    let chosen = &tasks[..k];
    let mut owner: std::collections::HashMap<FactId, &str> = std::collections::HashMap::new();
    for t in chosen {
        for f in &t.hop_chain {
            if let Some(prev) = owner.insert(*f, &t.id) {
                return Err(TaskError::OverlappingChains(prev.to_string(), t.id.clone()));
            }
        }
    }
    if k == 1 {
        return Ok(CompoundTask::single(&chosen[0]));
    }
    let mut question = format!(
        "Answer all {k} questions below in one session. Give the final answers in order, separated by semicolons.\n"
    );
    for (i, t) in chosen.iter().enumerate() {
        question.push_str(&format!("{}. {}\n", i + 1, t.question));
    }
    let ids: Vec<&str> = chosen.iter().map(|t| t.id.as_str()).collect();
    Ok(CompoundTask {
        id: format!("compound-{}", ids.join("+")),
        question: question.trim_end().to_string(),
        sub_tasks: chosen.to_vec(),
        answers: chosen.iter().map(|t| t.answer.clone()).collect(),
    })
}

/// Recipe for a seeded task set; the corpus is regenerated from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSetSpec {
    pub seed: u64,
    #[serde(default)]
    pub easy: usize,
    #[serde(default)]
    pub medium: usize,
    #[serde(default)]
    pub hard: usize,
    /// `(k, n)`: n compound problems of k one-hop questions each.
    #[serde(default)]
    pub compound: Option<(usize, usize)>,
    #[serde(default = "default_distractors")]
    pub distractors: usize,
}

fn default_distractors() -> usize {
    8
}

impl TaskSetSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, easy: 0, medium: 0, hard: 0, compound: None, distractors: default_distractors() }
    }

    pub fn easy(seed: u64, n: usize) -> Self {
        Self { easy: n, ..Self::new(seed) }
    }

    pub fn compound(seed: u64, k: usize, n: usize) -> Self {
        Self { compound: Some((k, n)), ..Self::new(seed) }
    }

    fn chain_hops(&self) -> Vec<usize> {
        let mut hops = Vec::new();
        hops.extend(std::iter::repeat_n(1, self.easy));
        hops.extend((0..self.medium).map(|i| 2 + i % 2));
        hops.extend((0..self.hard).map(|i| 4 + i % 2));
        if let Some((k, n)) = self.compound {
            hops.extend(std::iter::repeat_n(1, k * n));
        }
        hops
    }
}

pub const TASKSET_FORMAT: &str = "context-fold-taskset";
pub const TASKSET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    pub spec: TaskSetSpec,
    pub corpus: SyntheticCorpus,
    pub problems: Vec<CompoundTask>,
}

#[derive(Serialize, Deserialize)]
struct TaskSetFile {
    format: String,
    version: u32,
    spec: TaskSetSpec,
    corpus_digest: String,
    problems: Vec<CompoundTask>,
}

impl TaskSet {
    pub fn generate(spec: TaskSetSpec) -> Self {
        let mut params = CorpusParams::new(spec.seed, spec.chain_hops());
        params.distractors = spec.distractors;
        let corpus = SyntheticCorpus::generate(params);
        let singles = spec.easy + spec.medium + spec.hard;
        let tasks: Vec<Task> = (0..corpus.chains().len()).map(|c| Task::from_chain(&corpus, c)).collect();
        let mut problems: Vec<CompoundTask> = tasks[..singles].iter().map(CompoundTask::single).collect();
        if let Some((k, n)) = spec.compound {
            for group in tasks[singles..].chunks(k).take(n) {
                problems.push(make_compound(group, k).expect("generated chains are disjoint"));
            }
        }
        Self { spec, corpus, problems }
    }

    pub fn to_json(&self) -> String {
        let file = TaskSetFile {
            format: TASKSET_FORMAT.into(),
            version: TASKSET_VERSION,
            spec: self.spec.clone(),
            corpus_digest: self.corpus.digest(),
            problems: self.problems.clone(),
        };
        serde_json::to_string_pretty(&file).expect("task sets serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        let file: TaskSetFile = serde_json::from_str(text).map_err(|e| TaskError::File(e.to_string()))?;
        if file.format != TASKSET_FORMAT || file.version != TASKSET_VERSION {
            return Err(TaskError::File(format!("unsupported format {} v{}", file.format, file.version)));
        }
        let regenerated = TaskSet::generate(file.spec);
        let actual = regenerated.corpus.digest();
        if actual != file.corpus_digest {
            return Err(TaskError::Digest { expected: file.corpus_digest, actual });
        }
        Ok(Self { problems: file.problems, ..regenerated })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaskError::File(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

fn strip_enumerator(part: &str) -> &str {
    let t = part.trim_start();
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r;
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grade {
    /// Outcome reward R in {0, 1}.
    pub reward: u8,
    pub parts_correct: usize,
    pub parts_total: usize,
}

impl Grade {
    pub fn partial_credit(&self) -> f64 {
        if self.parts_total == 0 {
            0.0
        } else {
            self.parts_correct as f64 / self.parts_total as f64
        }
    }
}

/// All-or-nothing grading of a finish payload's answer field.
pub fn grade(task: &CompoundTask, answer: Option<&str>) -> Grade {
    let total = task.answers.len();
    let Some(answer) = answer else {
        return Grade { reward: 0, parts_correct: 0, parts_total: total };
    };
    let correct = if total == 1 {
        usize::from(normalize_answer(answer) == normalize_answer(&task.answers[0]))
    } else {
        let parts: Vec<&str> = answer.split(';').map(strip_enumerator).collect();
        task.answers
            .iter()
            .enumerate()
            .filter(|(i, gold)| parts.get(*i).is_some_and(|p| normalize_answer(p) == normalize_answer(gold)))
            .count()
    };
    let parts_given = if total == 1 { 1 } else { answer.split(';').count() };
    let reward = u8::from(correct == total && parts_given == total);
    Grade { reward, parts_correct: correct, parts_total: total }
}

/// Distinct fact ids across a set of problems.
pub fn distinct_facts(problems: &[CompoundTask]) -> HashSet<FactId> {
    problems.iter().flat_map(|p| p.sub_tasks.iter().flat_map(|t| t.hop_chain.iter().copied())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tasks() -> TaskSet {
        TaskSet::generate(TaskSetSpec { easy: 3, medium: 2, hard: 1, ..TaskSetSpec::new(5) })
    }

    #[test]
    fn difficulty_by_hops() {
        let ts = tasks();
        let d: Vec<_> = ts.problems.iter().map(|p| p.sub_tasks[0].difficulty).collect();
        use Difficulty::*;
        assert_eq!(d, vec![Easy, Easy, Easy, Medium, Medium, Hard]);
    }

    #[test]
    fn compound_of_one_is_the_task() {
        let ts = tasks();
        let t = &ts.problems[0].sub_tasks[0];
        let c = make_compound(std::slice::from_ref(t), 1).unwrap();
        assert_eq!(c.question, t.question);
        assert_eq!(c.answers, vec![t.answer.clone()]);
    }

    #[test]
    fn compound_of_three_enumerates() {
        let ts = tasks();
        let subs: Vec<Task> = ts.problems[..3].iter().map(|p| p.sub_tasks[0].clone()).collect();
        let c = make_compound(&subs, 3).unwrap();
        assert_eq!(c.answers.len(), 3);
        for i in 1..=3 {
            assert!(c.question.contains(&format!("\n{i}. ")));
        }
        assert!(!c.question.contains("\n4. "));
    }

    #[test]
    fn overlapping_chains_rejected() {
        let ts = tasks();
        let t = ts.problems[0].sub_tasks[0].clone();
        assert!(matches!(make_compound(&[t.clone(), t], 2), Err(TaskError::OverlappingChains(..))));
        assert!(matches!(make_compound(&[], 1), Err(TaskError::NotEnoughTasks { .. })));
    }

    #[test]
    fn compound_of_fifty() {
        let ts = TaskSet::generate(TaskSetSpec { distractors: 2, ..TaskSetSpec::compound(3, 50, 1) });
        let c = &ts.problems[0];
        assert_eq!(c.k(), 50);
        assert!(c.hop_count() >= 50);
    }

    #[test]
    fn grading() {
        let ts = tasks();
        let single = &ts.problems[0];
        assert_eq!(grade(single, Some(&single.answers[0])).reward, 1);
        assert_eq!(grade(single, Some(&format!("  {}  ", single.answers[0].to_uppercase()))).reward, 1);
        assert_eq!(grade(single, Some("nope")).reward, 0);
        assert_eq!(grade(single, None).reward, 0);

        let subs: Vec<Task> = ts.problems[..3].iter().map(|p| p.sub_tasks[0].clone()).collect();
        let c = make_compound(&subs, 3).unwrap();
        let good = CompoundTask::format_answers(&c.answers);
        assert_eq!(grade(&c, Some(&good)).reward, 1);
        let enumerated = format!("1. {}; 2. {}; 3) {}", c.answers[0], c.answers[1], c.answers[2]);
        assert_eq!(grade(&c, Some(&enumerated)).reward, 1);
        let one_wrong = CompoundTask::format_answers(&[c.answers[0].as_str(), "wrong", c.answers[2].as_str()]);
        let g = grade(&c, Some(&one_wrong));
        assert_eq!((g.reward, g.parts_correct), (0, 2));
    }

    #[test]
    fn file_round_trip_and_digest_check() {
        let ts = tasks();
        let text = ts.to_json();
        assert_eq!(TaskSet::from_json(&text).unwrap(), ts);
        let tampered = text.replace(&ts.corpus.digest(), "0000000000000000");
        assert!(matches!(TaskSet::from_json(&tampered), Err(TaskError::Digest { .. })));
    }
}
