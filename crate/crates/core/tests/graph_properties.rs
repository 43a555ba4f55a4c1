use cmt_ldpc::construction::{
    construct, construct_lc_peg_traced, joint_cycle_entropy, Construction, ConstructionConfig, CycleCounts,
};
use cmt_ldpc::gf2::{systematic_generator, BinaryMatrix};
use cmt_ldpc::stopping::{enumerate_stopping_sets, is_stopping_set};
use cmt_ldpc::tanner::{Cycle, TannerGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

fn random_graph(n: usize, m: usize, dv: usize, seed: u64) -> TannerGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = TannerGraph::new(n, m);
    let cns: Vec<usize> = (0..m).collect();
    for v in 0..n {
        for &c in cns.choose_multiple(&mut rng, dv.min(m)) {
            g.add_edge(c, v).unwrap();
        }
    }
    g
}

fn small_graph() -> impl Strategy<Value = TannerGraph> {
    (6usize..=12, 2usize..=3, any::<u64>()).prop_map(|(n, dv, seed)| random_graph(n, (n / 2).max(3), dv, seed))
}

fn all_cycles(g: &TannerGraph, g_max: usize) -> BTreeSet<Cycle> {
    let set = g.enumerate_cycles(g_max).unwrap();
    (4..=g_max).step_by(2).flat_map(|len| set.of_length(len).to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adding_an_edge_adds_exactly_the_reported_cycles(g in small_graph(), pick in any::<u64>()) {
        let missing: Vec<(usize, usize)> = (0..g.n_cns())
            .flat_map(|c| (0..g.n_vns()).map(move |v| (c, v)))
            .filter(|&(c, v)| !g.has_edge(c, v))
            .collect();
        prop_assume!(!missing.is_empty());
        let (c, v) = missing[(pick % missing.len() as u64) as usize];
        let g_max = 10;
        let before = all_cycles(&g, g_max);
        let mut expected = before.clone();
        for len in (4..=g_max).step_by(2) {
            let (count, cycles) = g.count_new_cycles(c, v, len).unwrap();
            prop_assert_eq!(count, cycles.len());
            for cyc in cycles {
                prop_assert_eq!(cyc.len(), len);
                prop_assert!(expected.insert(cyc));
            }
        }
        let mut h = g.clone();
        h.add_edge(c, v).unwrap();
        prop_assert_eq!(all_cycles(&h, g_max), expected);
    }

    #[test]
    fn girth_is_shortest_enumerated_cycle(g in small_graph()) {
        let big = 2 * g.n_vns().min(g.n_cns());
        let shortest = g.enumerate_cycles(big.max(4)).unwrap().shortest();
        prop_assert_eq!(g.girth(), shortest);
    }

    #[test]
    fn catalog_members_are_stopping_sets_with_zero_emd(g in small_graph()) {
        let cat = enumerate_stopping_sets(&g, 7).unwrap();
        for set in cat.sets() {
            prop_assert!(is_stopping_set(&g, set));
            prop_assert_eq!(g.emd(set), 0);
        }
    }

    #[test]
    fn small_unions_stay_in_catalog(g in small_graph(), a in any::<u64>(), b in any::<u64>()) {
        let mu = 9;
        let cat = enumerate_stopping_sets(&g, mu).unwrap();
        prop_assume!(!cat.is_empty());
        let x = &cat.sets()[(a % cat.len() as u64) as usize];
        let y = &cat.sets()[(b % cat.len() as u64) as usize];
        let union: Vec<usize> = x.iter().chain(y).copied().collect::<BTreeSet<_>>().into_iter().collect();
        if union.len() < mu {
            prop_assert!(cat.sets().contains(&union));
        }
    }

    #[test]
    fn stopping_sets_contain_cycles(g in small_graph()) {
        prop_assume!((0..g.n_vns()).all(|v| g.vn_degree(v) >= 2));
        let cat = enumerate_stopping_sets(&g, 8).unwrap();
        for set in cat.sets().iter().filter(|s| s.len() >= 2) {
            let mut sub = TannerGraph::new(set.len(), g.n_cns());
            for (i, &v) in set.iter().enumerate() {
                for &c in g.vn_neighbors(v) {
                    sub.add_edge(c, i).unwrap();
                }
            }
            prop_assert!(sub.girth().is_some(), "{:?} is acyclic", set);
        }
    }

    #[test]
    fn systematic_generator_annihilates_h(rows in 2usize..6, extra in 1usize..6, seed in any::<u64>()) {
        let n = rows + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = BinaryMatrix::zeros(rows, n);
        for r in 0..rows {
            for c in 0..n {
                h.set(r, c, rand::Rng::gen_bool(&mut rng, 0.5));
            }
        }
        prop_assume!(h.rank() == rows);
        let (gen, perm) = systematic_generator(&h).unwrap();
        let hp = h.permute_columns(&perm).unwrap();
        prop_assert!(gen.mul(&hp.transpose()).unwrap().is_zero());
        let k = n - rows;
        for i in 0..k {
            for j in 0..k {
                prop_assert_eq!(gen.get(i, j), i == j);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn constructions_are_regular_and_deterministic(
        kind in prop::sample::select(vec![Construction::Peg, Construction::EcPeg, Construction::McPeg, Construction::LcPeg]),
        n in 12usize..=28,
        seed in any::<u64>(),
    ) {
        let mut cfg = ConstructionConfig::new(n, n / 2, 3);
        cfg.g_c = 8;
        cfg.t_th = 3;
        cfg.mu_hat = 5.0;
        cfg.seed = seed;
        let g = construct(kind, &cfg).unwrap();
        for v in 0..n {
            prop_assert_eq!(g.vn_degree(v), 3);
            let mut cns = g.vn_neighbors(v).to_vec();
            cns.sort_unstable();
            cns.dedup();
            prop_assert_eq!(cns.len(), 3);
        }
        prop_assert_eq!(construct(kind, &cfg).unwrap(), g);
    }

    #[test]
    fn acyclic_peg_spreads_cn_degrees(n in 4usize..=8, seed in any::<u64>()) {
        // Two edges per VN into many CNs: PEG never closes a cycle here.
        let mut cfg = ConstructionConfig::new(n, 2 * n, 2);
        cfg.seed = seed;
        let g = construct(Construction::Peg, &cfg).unwrap();
        prop_assume!(g.girth().is_none());
        let degs: Vec<usize> = (0..g.n_cns()).map(|c| g.cn_degree(c)).collect();
        prop_assert!(degs.iter().max().unwrap() - degs.iter().min().unwrap() <= 1);
    }

    #[test]
    fn lc_peg_picks_a_cheapest_candidate(seed in any::<u64>()) {
        let mut cfg = ConstructionConfig::new(24, 12, 3);
        cfg.g_c = 8;
        cfg.t_th = 3;
        cfg.mu_hat = 5.0;
        cfg.seed = seed;
        let (_, decisions) = construct_lc_peg_traced(&cfg).unwrap();
        for d in decisions {
            let best = d.costs.iter().map(|&(_, c)| c).fold(f64::INFINITY, f64::min);
            let chosen = d.costs.iter().find(|&&(c, _)| c == d.chosen).unwrap().1;
            prop_assert!(chosen <= best + 1e-12);
        }
    }
}

#[test]
fn ec_peg_entropy_never_exceeds_peg() {
    for seed in 0..5 {
        let mut cfg = ConstructionConfig::new(128, 64, 4);
        cfg.g_c = 10;
        cfg.seed = seed;
        let h = |kind| {
            let g = construct(kind, &cfg).unwrap();
            joint_cycle_entropy(&CycleCounts::from_graph(&g, 10).unwrap(), 10)
        };
        let (peg, ec) = (h(Construction::Peg), h(Construction::EcPeg));
        assert!(ec <= peg, "seed {seed}: EC-PEG {ec} > PEG {peg}");
    }
}

#[test]
fn max_cn_degree_of_base_codes_is_bounded() {
    for kind in [Construction::Peg, Construction::McPeg, Construction::LcPeg] {
        let mut cfg = ConstructionConfig::new(128, 64, 4);
        cfg.g_c = 10;
        cfg.t_th = 4;
        cfg.mu_hat = 13.0;
        let g = construct(kind, &cfg).unwrap();
        assert!(g.max_cn_degree() <= 9, "{}: {}", kind.name(), g.max_cn_degree());
    }
}
