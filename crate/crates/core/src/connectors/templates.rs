//! Fixture phrasing for stub-generated items.
//!
//! Object phrases are chosen so they contain no lexicon token of either
//! framework, no interrogative, no coordination between content words, and
//! no policy term. The only classifier evidence in a composed stem is the
//! verbs put in front of it.

use crate::model::{option_letter, TaxonomyLevel};
use crate::taxonomy::Lexicon;

pub struct TopicTemplate {
    pub topic: &'static str,
    pub objects: &'static [&'static str],
    /// First entry is the keyed answer.
    pub options: [&'static str; 4],
}

pub const TOPICS: &[TopicTemplate] = &[
    TopicTemplate {
        topic: "operating systems",
        objects: &[
            "the role of the process control block during a context switch",
            "the behaviour of a mutex under heavy contention",
            "the page replacement policy of a virtual memory manager",
            "the purpose of a semaphore in a bounded buffer",
            "the scheduling decisions of a round robin scheduler",
            "the overhead of a system call over a plain library call",
        ],
        options: [
            "It is decided by the kernel at run time",
            "It is fixed when the program is compiled",
            "It is chosen by the user at login",
            "It is set by the disk firmware",
        ],
    },
    TopicTemplate {
        topic: "data structures and algorithms",
        objects: &[
            "the insertion cost of a balanced binary search tree",
            "the collision handling of an open addressing hash table",
            "the worst case behaviour of quicksort on sorted input",
            "the memory layout of a dynamic array after repeated growth",
            "the visiting order of a breadth first search on a grid",
            "the invariant maintained by a binary heap",
        ],
        options: [
            "It grows logarithmically with the input size",
            "It is constant regardless of input",
            "It grows with the square of the input size",
            "It depends only on the key type",
        ],
    },
    TopicTemplate {
        topic: "database fundamentals",
        objects: &[
            "the effect of a composite index on range queries",
            "the isolation guarantees of a serializable transaction",
            "the normal form of a schema with transitive dependencies",
            "the join strategy chosen for two large tables",
            "the role of a write ahead log during crash recovery",
            "the behaviour of a foreign key constraint on deletion",
        ],
        options: [
            "It preserves consistency of the stored data",
            "It removes the need for any index",
            "It guarantees constant query latency",
            "It disables concurrent access",
        ],
    },
    TopicTemplate {
        topic: "networking",
        objects: &[
            "the congestion window of a TCP sender after packet loss",
            "the handshake steps of a TLS session",
            "the role of the TTL field in an IP packet",
            "the path selection of a distance vector routing protocol",
            "the behaviour of ARP on a local subnet",
            "the purpose of port numbers in transport headers",
        ],
        options: [
            "It limits what the sender may transmit",
            "It encrypts the payload end to end",
            "It assigns a permanent hardware address",
            "It replaces the physical cabling",
        ],
    },
    TopicTemplate {
        topic: "basic programming logic",
        objects: &[
            "the scope of a variable declared inside a loop body",
            "the result of integer division in a typed language",
            "the control flow of a nested conditional",
            "the side effects of passing a mutable reference to a function",
            "the termination condition of a recursive function",
            "the value of a counter after a while loop exits",
        ],
        options: [
            "It follows from the order of evaluation",
            "It is random at every execution",
            "It is decided by the text editor",
            "It depends on the screen resolution",
        ],
    },
];

pub fn topic_template(topic: &str) -> Option<&'static TopicTemplate> {
    TOPICS.iter().find(|t| t.topic.eq_ignore_ascii_case(topic.trim()))
}

/// Phrase used to plant a Major governance flag; carries no classifier
/// evidence.
pub const MAJOR_FLAG_PHRASE: &str = "for a Thanksgiving dinner planner";

/// Lexicon verbs for a level with at least the lexicon's reference weight,
/// in sorted order.
pub fn level_verbs(lexicon: &Lexicon, level: TaxonomyLevel) -> Vec<&str> {
    let reference = lexicon.reference_weight();
    lexicon
        .tokens_for(level)
        .into_iter()
        .filter(|t| lexicon.entry(t).is_some_and(|e| e.weight >= reference))
        .collect()
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// `"Compare, contrast and examine <object> <suffix>."` With no verbs the
/// stem opens with "Consider".
pub fn compose_stem(verbs: &[&str], object: &str, suffix: Option<&str>) -> String {
    let lead = match verbs {
        [] => "Consider".to_string(),
        [one] => capitalize(one),
        [init @ .., last] => {
            let head: Vec<String> = init
                .iter()
                .enumerate()
                .map(|(i, v)| if i == 0 { capitalize(v) } else { v.to_string() })
                .collect();
            format!("{} and {last}", head.join(", "))
        }
    };
    match suffix {
        Some(s) => format!("{lead} {object} {s}."),
        None => format!("{lead} {object}."),
    }
}

fn level_display(level: TaxonomyLevel) -> String {
    match level.name() {
        "ExtendedAbstract" => "Extended Abstract".to_string(),
        name => name.to_string(),
    }
}

/// A rationale that satisfies every completeness criterion for `level`.
pub fn complete_rationale(
    level: TaxonomyLevel,
    verb: &str,
    object: &str,
    correct_index: usize,
    topic: &str,
) -> String {
    format!(
        "This item targets the {} level because students must {verb} {object}. \
         Option {} is correct, and each distractor reflects a plausible misconception about {topic}.",
        level_display(level),
        option_letter(correct_index),
    )
}

/// A short rationale that names no level, uses no level verb, and does not
/// discuss the options.
pub fn incomplete_rationale(topic: &str) -> String {
    format!("Generated for the {topic} unit.")
}

/// Option texts with the keyed answer at `correct_index`.
pub fn options_for(template: &TopicTemplate, count: usize, correct_index: usize) -> Vec<String> {
    let mut distractors = template.options[1..].iter().map(|s| s.to_string());
    (0..count)
        .map(|i| {
            if i == correct_index {
                template.options[0].to_string()
            } else {
                distractors
                    .next()
                    .unwrap_or_else(|| format!("None of the other statements ({})", option_letter(i)))
            }
        })
        .collect()
}
