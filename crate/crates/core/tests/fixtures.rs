//! Seeded outputs frozen from a reviewed run. A change here means the random streams or
//! the algorithms changed, which silently alters every downstream run.

use dialeval_core::degradation::{degraded_reply, distort, replacement_length, sample_response, ResponseCorpus};
use dialeval_core::hit::assemble_hit;
use dialeval_core::SystemId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ids(names: &[&str]) -> Vec<SystemId> {
    names.iter().map(|&n| SystemId::from(n)).collect()
}

fn toy() -> ResponseCorpus {
    ResponseCorpus::from_text(
        "the cat sat on the mat today\nred green blue yellow\ni like tea with milk and honey in the morning\n",
        "toy",
    )
    .unwrap()
}

#[test]
fn hit_slot_order() {
    let genuine = ids(&["a", "b", "c", "d", "e"]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let first = assemble_hit("h".into(), "w".into(), &genuine, &"q".into(), &mut rng).unwrap();
    let second = assemble_hit("h".into(), "w".into(), &genuine, &"q".into(), &mut rng).unwrap();
    assert_eq!(first.slots, ids(&["a", "d", "q", "c", "e", "b"]));
    assert_eq!(first.degraded_slot, 2);
    assert_eq!(second.slots, ids(&["b", "c", "e", "q", "d", "a"]));
    assert_eq!(second.degraded_slot, 3);
}

#[test]
fn hit_subset_from_eight_systems() {
    let genuine = ids(&["a", "b", "c", "d", "e", "f", "g", "h"]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hit = assemble_hit("h".into(), "w".into(), &genuine, &"q".into(), &mut rng).unwrap();
    assert_eq!(hit.slots, ids(&["a", "e", "b", "g", "q", "c"]));
    assert_eq!(hit.degraded_slot, 4);
}

#[test]
fn degraded_replies_on_toy_corpus() {
    let expected = [
        (1, "red cat sat yellow"),
        (2, "the cat sat milk and honey today"),
        (3, "the cat red green blue mat today"),
    ];
    for (seed, reply) in expected {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        assert_eq!(degraded_reply(&[], &toy(), &mut rng).unwrap(), reply, "seed {seed}");
    }
}

#[test]
fn degraded_reply_on_bundled_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reply = degraded_reply(&[], &ResponseCorpus::bundled(), &mut rng).unwrap();
    assert_eq!(reply, "yes , do you usually go my all time favorites .");
    let source = "yes , it is one of my all time favorites .";
    let (a, b): (Vec<&str>, Vec<&str>) = (reply.split(' ').collect(), source.split(' ').collect());
    assert_eq!(a.len(), b.len());
    let changed = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    assert!(changed <= replacement_length(b.len()).unwrap());
    assert_eq!((a[0], a[a.len() - 1]), (b[0], b[b.len() - 1]));
}

#[test]
fn distortion_of_external_response() {
    let tokens: Vec<String> = "one two three four five six seven eight nine ten"
        .split(' ')
        .map(String::from)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let out = distort(&tokens, None, &toy(), &mut rng).unwrap();
    assert_eq!(out.join(" "), "one two i like tea with seven eight nine ten");
}

#[test]
fn corpus_sample_indices() {
    let corpus = ResponseCorpus::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let idx: Vec<usize> = (0..8).map(|_| sample_response(&corpus, &mut rng).unwrap().1).collect();
    assert_eq!(idx, [17, 16, 22, 59, 41, 67, 21, 71]);
}
