//! Synthetic corpus where the asker's group fully determines the question
//! template. Used to check that conditioning is actually used.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socq_core::{GroupCategory, GroupLabel, GroupValue};

use crate::input::Example;

pub const TOPICS: [&str; 16] = [
    "mortgage", "loan", "car", "rent", "budget", "salary", "taxes", "savings", "credit", "insurance",
    "retirement", "stocks", "debt", "tuition", "bonus", "pension",
];

const FILLERS: [&str; 12] = [
    "it has been stressful lately",
    "my partner thinks otherwise",
    "i am not sure where to start",
    "things changed after the move",
    "we talked about it last week",
    "nothing seems to work so far",
    "i read a few guides online",
    "my friends gave mixed advice",
    "the numbers look strange to me",
    "i want to fix this soon",
    "the bank was not helpful",
    "this is my first time asking",
];

/// Question for `value` about `topic`. The two templates share only the
/// topic word and the question mark.
pub fn template(value: GroupValue, topic: &str) -> String {
    match value {
        GroupValue::Expert => format!("what interest rate applies to your {topic} ?"),
        GroupValue::Novice => format!("have you asked family about the {topic} ?"),
        other => format!("can you say more about the {topic} ? {}", other.as_str().to_lowercase()),
    }
}

/// `posts` posts, each asked twice: once by an Expert and once by a Novice.
pub fn corpus(posts: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(posts * 2);
    for i in 0..posts {
        let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
        let k = rng.gen_range(1..=3);
        let mut fillers: Vec<&str> = FILLERS.choose_multiple(&mut rng, k).copied().collect();
        fillers.shuffle(&mut rng);
        let post_text = format!("i need advice about my {topic} . {} .", fillers.join(" . "));
        for value in GroupCategory::Expertise.pair() {
            out.push(Example {
                post_id: format!("s{i}"),
                post_text: post_text.clone(),
                question: template(value, topic),
                group: GroupLabel::new(GroupCategory::Expertise, value).expect("expertise value"),
                asker_vec: None,
            });
        }
    }
    out
}
