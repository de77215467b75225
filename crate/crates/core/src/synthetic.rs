//! Small synthetic knowledge graphs with known relation patterns.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kg_store::KnowledgeGraphDataset;

pub const PARTNER: &str = "partner_of";
pub const MENTORS: &str = "mentors";
pub const MENTORED_BY: &str = "mentored_by";
pub const PART_OF: &str = "part_of";

/// Shape of the toy graph built by [`toy_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToySpec {
    /// Number of people groups; must be even and at least 2.
    pub groups: usize,
    pub group_size: usize,
    /// Held-out symmetric triples per split; each keeps its mirror in train.
    pub symmetric_holdout: usize,
    /// Held-out inverse-pair triples per split; each keeps its counterpart in train.
    pub inverse_holdout: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            groups: 8,
            group_size: 4,
            symmetric_holdout: 16,
            inverse_holdout: 8,
        }
    }
}

fn person(group: usize, member: usize) -> String {
    format!("g{group}_m{member}")
}

fn hub(group: usize) -> String {
    format!("hub{group}")
}

fn triple(a: &str, r: &str, b: &str) -> (String, String, String) {
    (a.to_owned(), r.to_owned(), b.to_owned())
}

/// Every ordered `(a, b)` with `a` in group `g` and `b` in group `h`.
fn group_pairs(spec: &ToySpec, g: usize, h: usize) -> impl Iterator<Item = (String, String)> + '_ {
    (0..spec.group_size).flat_map(move |a| (0..spec.group_size).map(move |b| (person(g, a), person(h, b))))
}

/// Toy graph of `groups * group_size` people plus one hub per group, with
/// four relations:
///
/// * `partner_of`: symmetric, linking every member of group `2k` with every
///   member of group `2k + 1`;
/// * `mentors` / `mentored_by`: an inverse pair, every member of group `2k + 1`
///   mentoring every member of group `2k + 2` (cyclically);
/// * `part_of`: a two-level hierarchy, people to their group hub and hubs to
///   hub 0.
///
/// Validation and test triples are held out so that each can be inferred from
/// a training triple through symmetry or inversion. Members of a group share
/// all their links, so group structure is learnable. With `ToySpec::default()`
/// this gives 40 entities and 295 triples.
pub fn toy_dataset(spec: ToySpec, seed: u64) -> KnowledgeGraphDataset {
    assert!(
        spec.groups >= 2 && spec.groups.is_multiple_of(2),
        "toy graph needs an even number of groups, got {}",
        spec.groups
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();

    // Each pair contributes both directions; the first 2 * holdout pairs keep
    // one direction in train and send the other to valid or test.
    let mut split_pairs = |pairs: Vec<(String, String)>, fwd: &str, back: &str, holdout: usize| {
        for (i, (a, b)) in pairs.into_iter().enumerate() {
            let (f, r) = (triple(&a, fwd, &b), triple(&b, back, &a));
            // alternate which direction is held out
            let (kept, held) = if i % 2 == 0 { (f, r) } else { (r, f) };
            train.push(kept);
            if i < holdout {
                valid.push(held);
            } else if i < 2 * holdout {
                test.push(held);
            } else {
                train.push(held);
            }
        }
    };

    let mut partners: Vec<_> = (0..spec.groups)
        .step_by(2)
        .flat_map(|g| group_pairs(&spec, g, g + 1))
        .collect();
    partners.shuffle(&mut rng);
    split_pairs(partners, PARTNER, PARTNER, spec.symmetric_holdout);

    let mut mentors: Vec<_> = (1..spec.groups)
        .step_by(2)
        .flat_map(|g| group_pairs(&spec, g, (g + 1) % spec.groups))
        .collect();
    mentors.shuffle(&mut rng);
    split_pairs(mentors, MENTORS, MENTORED_BY, spec.inverse_holdout);

    for g in 0..spec.groups {
        for k in 0..spec.group_size {
            train.push(triple(&person(g, k), PART_OF, &hub(g)));
        }
        if g > 0 {
            train.push(triple(&hub(g), PART_OF, &hub(0)));
        }
    }
    train.shuffle(&mut rng);
    KnowledgeGraphDataset::from_named(&train, &valid, &test)
}

/// Both directions of `a r b` for training; validation asks `a r ?` /
/// `? r b` and test asks `b r ?` / `? r a`. Holding one direction out cannot
/// work: its only negatives, `(a, r, a)` and `(b, r, b)`, push `b` out of the
/// head region and `a` out of the tail region, which is exactly the reversed
/// triple.
pub fn two_entity_symmetric() -> KnowledgeGraphDataset {
    KnowledgeGraphDataset::from_named(
        &[("a", "r", "b"), ("b", "r", "a")],
        &[("a", "r", "b")],
        &[("b", "r", "a")],
    )
}
