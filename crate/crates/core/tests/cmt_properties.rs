use cmt_ldpc::cmt::{
    availability, build_cmt, hash_aware_peel, merkle_proof, unpad_block, verify_symbol, CmtCodes, CmtParams,
    PeelOutcome,
};
use cmt_ldpc::construction::{construct_peg, ConstructionConfig};
use cmt_ldpc::gf2::information_prefix_permutation;
use cmt_ldpc::tanner::TannerGraph;
use proptest::prelude::*;
use std::sync::OnceLock;

fn setup() -> &'static (CmtParams, CmtCodes) {
    static SETUP: OnceLock<(CmtParams, CmtCodes)> = OnceLock::new();
    SETUP.get_or_init(|| {
        let params = CmtParams::new(64, 0.5, 4, 3, 2000).unwrap();
        let hs = (1..=3)
            .map(|j| {
                let n = params.n(j);
                let mut cfg = ConstructionConfig::new(n, n - params.s(j), 3);
                cfg.seed = 40 + j as u64;
                let h = construct_peg(&cfg).unwrap().to_matrix();
                let perm = information_prefix_permutation(&h, params.s(j)).unwrap();
                h.permute_columns(&perm).unwrap()
            })
            .collect();
        let codes = CmtCodes::new(&params, hs).unwrap();
        (params, codes)
    })
}

/// Residual of plain erasure peeling.
fn residual(g: &TannerGraph, erased: &[usize]) -> Vec<usize> {
    let mut gone = vec![false; g.n_vns()];
    erased.iter().for_each(|&v| gone[v] = true);
    while let Some(v) = (0..g.n_cns()).find_map(|c| {
        let missing: Vec<usize> = g.cn_neighbors(c).iter().copied().filter(|&v| gone[v]).collect();
        (missing.len() == 1).then(|| missing[0])
    }) {
        gone[v] = false;
    }
    (0..g.n_vns()).filter(|&v| gone[v]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn full_availability_roundtrip(block in prop::collection::vec(any::<u8>(), 0..2000)) {
        let (params, codes) = setup();
        let tree = build_cmt(&block, params, codes).unwrap();
        let out = hash_aware_peel(&availability(&tree, &vec![Vec::new(); 3]), &tree.root, codes, params).unwrap();
        let PeelOutcome::Success { layers } = out else { panic!("{out:?}") };
        prop_assert_eq!(&layers, &tree.layers);
        let data = &layers[2][..params.s(3)];
        prop_assert_eq!(unpad_block(data).unwrap(), block);
    }

    #[test]
    fn hiding_matches_peeling_oracle(
        block in prop::collection::vec(any::<u8>(), 1..500),
        layer in 1usize..=3,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..20),
    ) {
        let (params, codes) = setup();
        let tree = build_cmt(&block, params, codes).unwrap();
        let n = params.n(layer);
        let mut set: Vec<usize> = picks.iter().map(|i| i.index(n)).collect();
        set.sort_unstable();
        set.dedup();
        let mut hidden = vec![Vec::new(); 3];
        hidden[layer - 1] = set.clone();
        let out = hash_aware_peel(&availability(&tree, &hidden), &tree.root, codes, params).unwrap();
        let left = residual(codes.graph(layer), &set);
        if left.is_empty() {
            prop_assert!(matches!(out, PeelOutcome::Success { .. }), "{:?}", out);
        } else {
            prop_assert_eq!(out, PeelOutcome::Stall { layer, unresolved: left });
        }
    }

    #[test]
    fn proof_size_depends_only_on_layer(len in 0usize..2000, layer in 1usize..=3, idx in any::<prop::sample::Index>()) {
        let (params, codes) = setup();
        let block = vec![7u8; len];
        let tree = build_cmt(&block, params, codes).unwrap();
        let i = idx.index(params.n(layer));
        let proof = merkle_proof(params, &tree, layer, i).unwrap();
        prop_assert_eq!(proof.symbol_count(), 2 * (layer - 1));
        prop_assert!(verify_symbol(&tree.root, params, layer, i, &tree.layers[layer - 1][i], &proof));
    }
}
