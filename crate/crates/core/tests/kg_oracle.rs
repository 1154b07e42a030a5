mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;
use tog_core::{Direction, EntityRef, RelationRef};

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn queries_match_linear_scan(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_kg(&mut rng, 30, 6, 4);
        for i in 0..g.entities {
            let e = EntityRef::new(entity(i));
            let got: Vec<(String, Direction)> =
                g.kg.relations_of(&e).into_iter().map(|(r, d)| (r.name().to_string(), d)).collect();
            let want: Vec<(String, Direction)> = scan_relations(&g.triples, &e.id).into_iter().collect();
            prop_assert_eq!(&got, &want);
            for (r, d) in &want {
                let got: Vec<String> =
                    g.kg.neighbors(&e, &RelationRef::new(r.clone()), *d).into_iter().map(|x| x.id).collect();
                let want: Vec<String> = scan_neighbors(&g.triples, &e.id, r, *d).into_iter().collect();
                prop_assert_eq!(got, want);
            }
            prop_assert_eq!(g.kg.degree(&e), g.triples.iter().filter(|(s, _, o)| *s == e.id || *o == e.id).count());
        }
        prop_assert_eq!(g.kg.len(), g.triples.len());
    }
}
