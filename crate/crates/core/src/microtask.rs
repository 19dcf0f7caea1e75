//! The microtask pool: short multiple-choice questions delivered with a notification.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MicrotaskError {
    #[error("microtask pool is empty")]
    EmptyPool,
    #[error("answer index {index} out of range for task {id} with {options} options")]
    AnswerOutOfRange { id: u32, index: usize, options: usize },
    #[error("task {id}: {reason}")]
    Invalid { id: u32, reason: String },
    #[error("reading microtask pool: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing microtask pool: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    SelfMonitoring,
    ParticipatorySensing,
    Crowdsourcing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskType {
    Availability,
    Emotion,
    HydroDiary,
    DietTracker,
    Planning,
    NoiseLevel,
    Crowdedness,
    ImageLabeling,
    Arithmetic,
}

impl TaskType {
    pub const ALL: [TaskType; 9] = [
        TaskType::Availability,
        TaskType::Emotion,
        TaskType::HydroDiary,
        TaskType::DietTracker,
        TaskType::Planning,
        TaskType::NoiseLevel,
        TaskType::Crowdedness,
        TaskType::ImageLabeling,
        TaskType::Arithmetic,
    ];

    pub fn category(self) -> Category {
        match self {
            TaskType::Availability
            | TaskType::Emotion
            | TaskType::HydroDiary
            | TaskType::DietTracker
            | TaskType::Planning => Category::SelfMonitoring,
            TaskType::NoiseLevel | TaskType::Crowdedness => Category::ParticipatorySensing,
            TaskType::ImageLabeling | TaskType::Arithmetic => Category::Crowdsourcing,
        }
    }

    /// Whether answers to this type count towards response accuracy.
    ///
    /// Planning answers are checked against sensed location in the field, which
    /// is too noisy to score, so only the crowdsourcing types qualify.
    pub fn has_gold_standard(self) -> bool {
        matches!(self, TaskType::ImageLabeling | TaskType::Arithmetic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Microtask {
    pub id: u32,
    pub task_type: TaskType,
    pub statement: String,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<usize>,
}

impl Microtask {
    pub fn category(&self) -> Category {
        self.task_type.category()
    }

    pub fn is_factual(&self) -> bool {
        self.task_type != TaskType::Planning && self.gold_answer.is_some()
    }

    fn validate(&self) -> Result<(), MicrotaskError> {
        let invalid = |reason: &str| MicrotaskError::Invalid {
            id: self.id,
            reason: reason.to_string(),
        };
        if self.options.is_empty() {
            return Err(invalid("no options"));
        }
        if let Some(g) = self.gold_answer {
            if g >= self.options.len() {
                return Err(invalid("gold answer does not index options"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    NotFactual,
}

pub fn verify(task: &Microtask, answer: usize) -> Result<Verdict, MicrotaskError> {
    if answer >= task.options.len() {
        return Err(MicrotaskError::AnswerOutOfRange {
            id: task.id,
            index: answer,
            options: task.options.len(),
        });
    }
    Ok(match task.gold_answer {
        Some(gold) if task.is_factual() => {
            if answer == gold {
                Verdict::Correct
            } else {
                Verdict::Incorrect
            }
        }
        _ => Verdict::NotFactual,
    })
}

pub fn arithmetic_task(id: u32, a: u32, b: u32, rng: &mut impl Rng) -> Microtask {
    let product = a * b;
    // Two-digit operands keep the product >= 100; distractors must stay positive.
    let mut offsets: Vec<i64> = vec![-1000, -500, 500, 1000]
        .into_iter()
        .filter(|&d| i64::from(product) + d > 0)
        .collect();
    offsets.shuffle(rng);
    let mut values: Vec<i64> = vec![i64::from(product), i64::from(product) + offsets[0], i64::from(product) + offsets[1]];
    values.sort_unstable();
    let gold = values.iter().position(|&v| v == i64::from(product)).unwrap();
    Microtask {
        id,
        task_type: TaskType::Arithmetic,
        statement: format!("What is answer of {a} × {b}?"),
        options: values.iter().map(|v| v.to_string()).collect(),
        gold_answer: Some(gold),
    }
}

/// Two-digit by two-digit multiplication questions with three options each.
pub fn generate_arithmetic(rng: &mut impl Rng, count: usize, first_id: u32) -> Vec<Microtask> {
    (0..count)
        .map(|i| {
            let a = rng.gen_range(10..100);
            let b = rng.gen_range(10..100);
            arithmetic_task(first_id + i as u32, a, b, rng)
        })
        .collect()
}

const IMAGE_LABELS: [&str; 9] = [
    "Bear", "Bird", "Butterfly", "Cat", "Dog", "Fish", "Horse", "Snake", "Tree",
];

const DIET_QUESTIONS: [&str; 4] = [
    "Do you regularly eat wholegrain cereals, with no added sugar?",
    "Do you eat at least two portions of fruit a day?",
    "Do you usually add salt to your food at the table?",
    "Do you drink sugary soft drinks most days?",
];

fn fixed(id: u32, task_type: TaskType, statement: &str, options: &[&str]) -> Microtask {
    Microtask {
        id,
        task_type,
        statement: statement.to_string(),
        options: options.iter().map(|s| s.to_string()).collect(),
        gold_answer: None,
    }
}

fn template(id: u32, task_type: TaskType, variant: usize, rng: &mut impl Rng) -> Microtask {
    match task_type {
        TaskType::Availability => fixed(id, task_type, "Are you available at the moment?", &["Yes", "No"]),
        TaskType::Emotion => fixed(
            id,
            task_type,
            "Which describe your current emotion?",
            &["Stressed", "Neutral", "Relaxed"],
        ),
        TaskType::HydroDiary => fixed(
            id,
            task_type,
            "How long ago did you drink water?",
            &["Within 1 hour", "Within 2 hours", "Longer"],
        ),
        TaskType::DietTracker => fixed(id, task_type, DIET_QUESTIONS[variant % DIET_QUESTIONS.len()], &["Yes", "No"]),
        TaskType::Planning => fixed(
            id,
            task_type,
            "Where are you going after you leave here?",
            &["Home", "Work", "Others"],
        ),
        TaskType::NoiseLevel => fixed(
            id,
            task_type,
            "How loud is it at your location?",
            &["Loud", "Moderate", "Quiet"],
        ),
        TaskType::Crowdedness => fixed(
            id,
            task_type,
            "How many people are there around you?",
            &["0-5", "6-20", ">20"],
        ),
        TaskType::ImageLabeling => {
            // Label-only stand-in for an image: the gold label plus two distinct distractors.
            let mut labels = IMAGE_LABELS.to_vec();
            labels.shuffle(rng);
            let mut options: Vec<&str> = labels[..3].to_vec();
            let gold_label = options[0];
            options.sort_unstable();
            Microtask {
                id,
                task_type,
                statement: format!("What is the object in the image? [synthetic:{gold_label}]"),
                gold_answer: options.iter().position(|&o| o == gold_label),
                options: options.into_iter().map(String::from).collect(),
            }
        }
        TaskType::Arithmetic => {
            let a = rng.gen_range(10..100);
            let b = rng.gen_range(10..100);
            arithmetic_task(id, a, b, rng)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrotaskPool {
    tasks: Vec<Microtask>,
}

/// On-disk form of a pool entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolEntry {
    #[serde(rename = "type")]
    pub task_type: TaskType,
    pub statement: String,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_index: Option<usize>,
}

impl MicrotaskPool {
    pub fn new(tasks: Vec<Microtask>) -> Result<Self, MicrotaskError> {
        if tasks.is_empty() {
            return Err(MicrotaskError::EmptyPool);
        }
        for t in &tasks {
            t.validate()?;
        }
        Ok(MicrotaskPool { tasks })
    }

    /// A balanced pool with `per_type` questions of each of the nine types.
    pub fn default_pool(rng: &mut impl Rng, per_type: usize) -> Self {
        let mut tasks = Vec::with_capacity(per_type * TaskType::ALL.len());
        for ty in TaskType::ALL {
            for v in 0..per_type {
                let id = tasks.len() as u32;
                tasks.push(template(id, ty, v, rng));
            }
        }
        MicrotaskPool { tasks }
    }

    pub fn from_entries(entries: Vec<PoolEntry>) -> Result<Self, MicrotaskError> {
        let tasks = entries
            .into_iter()
            .enumerate()
            .map(|(i, e)| Microtask {
                id: i as u32,
                task_type: e.task_type,
                statement: e.statement,
                options: e.options,
                gold_answer: e.gold_index,
            })
            .collect();
        Self::new(tasks)
    }

    pub fn load_json(path: &Path) -> Result<Self, MicrotaskError> {
        let bytes = std::fs::read(path)?;
        let entries: Vec<PoolEntry> = serde_json::from_slice(&bytes)?;
        Self::from_entries(entries)
    }

    pub fn tasks(&self) -> &[Microtask] {
        &self.tasks
    }

    pub fn get(&self, id: u32) -> Option<&Microtask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> &Microtask {
        &self.tasks[rng.gen_range(0..self.tasks.len())]
    }
}
