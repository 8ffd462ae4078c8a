use proptest::prelude::*;

use treetn_core::evolution::{apply_swap, exponentiate_splitting, EffectiveHamiltonianCache, TrotterSplitting, TrotterStep};
use treetn_core::operators::{pauli_library, random_pauli_hamiltonian, SiteDims, TensorProduct, DEFAULT_DENSE_CAP};
use treetn_core::tensor::{diag_tensor, truncated_svd, SvdParameters};
use treetn_core::tree::random_tree;
use treetn_core::ttno::ttno_from_dense;
use treetn_core::{DenseTensor, NodeId, TreeTensorNetwork, TreeTopology, Ttno, Ttns};

fn qubits(tree: &TreeTopology) -> SiteDims {
    tree.nodes().map(|n| (n.clone(), 2)).collect()
}

/// Naive loop contraction of `a`'s last leg with `b`'s first.
fn loop_contract(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let ka = a.degree() - 1;
    let k = a.dim(ka);
    let shape: Vec<usize> = a.shape()[..ka].iter().chain(&b.shape()[1..]).copied().collect();
    DenseTensor::from_fn(&shape, |ix| {
        let (ia, ib) = ix.split_at(ka);
        (0..k)
            .map(|j| {
                let mut xa = ia.to_vec();
                xa.push(j);
                let mut xb = vec![j];
                xb.extend_from_slice(ib);
                a.get(&xa) * b.get(&xb)
            })
            .sum()
    })
}

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn contraction_matches_loop_oracle(sa in shape_strategy(), sb in shape_strategy(), k in 1usize..4, seed in 0u64..1000) {
        let mut shape_a = sa.clone();
        shape_a.push(k);
        let mut shape_b = vec![k];
        shape_b.extend(&sb);
        let a = DenseTensor::random(&shape_a, seed).unwrap();
        let b = DenseTensor::random(&shape_b, seed + 1).unwrap();
        let c = DenseTensor::contract(&a, &b, &[shape_a.len() - 1], &[0]).unwrap();
        prop_assert!(c.max_abs_diff(&loop_contract(&a, &b)) < 1e-12);
    }

    #[test]
    fn truncation_error_is_the_residual(m in 2usize..7, n in 2usize..7, cap in 1usize..6, seed in 0u64..1000) {
        let a = DenseTensor::random(&[m, n], seed).unwrap();
        let params = SvdParameters::default().with_max_bond_dim(cap);
        let t = truncated_svd(&a, &[0], &[1], &params).unwrap();
        prop_assert!(t.s.len() <= cap.min(m).min(n));
        let us = DenseTensor::contract(&t.u, &diag_tensor(&t.s), &[1], &[0]).unwrap();
        let back = DenseTensor::contract(&us, &t.v, &[1], &[0]).unwrap();
        let residual = a.sub(&back).unwrap().norm();
        prop_assert!((residual - t.truncation_error()).abs() < 1e-10 * a.norm());
    }

    #[test]
    fn canonical_form_is_isometric_and_preserves_the_state(n in 1usize..9, pick in 0usize..100, seed in 0u64..1000) {
        let tree = random_tree(n, seed);
        let mut ttn = TreeTensorNetwork::random(&tree, |_| vec![2], |_, _| 3, seed).unwrap();
        let before = ttn.completely_contract_tree().unwrap();
        let nodes: Vec<NodeId> = tree.nodes().cloned().collect();
        let c = nodes[pick % n].clone();
        ttn.canonical_form(&c).unwrap();
        prop_assert!(ttn.canonical_defect(&c).unwrap() < 1e-10);
        prop_assert!(before.rel_diff(&ttn.completely_contract_tree().unwrap()) < 1e-10);
    }

    #[test]
    fn compiled_operator_is_exact_and_bond_optimal(n in 2usize..7, terms in 1usize..20, seed in 0u64..1000) {
        let tree = random_tree(n, seed);
        let dims = qubits(&tree);
        let sites: Vec<NodeId> = tree.nodes().cloned().collect();
        let order = tree.pre_order();
        let h = random_pauli_hamiltonian(&sites, terms, seed);
        let ttno = Ttno::from_hamiltonian(&h, &tree, &dims).unwrap();
        let dense = h.to_dense(&order, &dims, DEFAULT_DENSE_CAP).unwrap();
        prop_assert!((ttno.to_dense(&order, DEFAULT_DENSE_CAP).unwrap() - &dense).camax() < 1e-12);
        let svd = ttno_from_dense(&dense, &tree, &order, &dims, &SvdParameters::default()).unwrap();
        prop_assert_eq!(ttno.bond_dims(), svd.bond_dims());
    }

    #[test]
    fn swapping_twice_restores_the_state(n in 2usize..7, edge in 0usize..100, seed in 0u64..1000) {
        let tree = random_tree(n, seed);
        let dims = qubits(&tree);
        let order = tree.pre_order();
        let edges = tree.edges();
        let (a, b) = edges[edge % edges.len()].clone();
        let mut psi = Ttns::random(&tree, &dims, 2, seed).unwrap();
        psi.canonical_form(&order[0]).unwrap();
        let before = psi.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        let params = SvdParameters::default();
        apply_swap(&mut psi, &a, &b, &params).unwrap();
        apply_swap(&mut psi, &a, &b, &params).unwrap();
        let after = psi.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        prop_assert!((after - &before).norm() < 1e-12 * before.norm());
    }

    #[test]
    fn trotter_gates_are_unitary(factors in prop::collection::vec(-3.0f64..3.0, 1..5), dt in 0.0f64..0.5) {
        let ops = [("a", "X"), ("a", "Z"), ("b", "Y")];
        let steps: Vec<TrotterStep> = factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let (s1, o1) = ops[i % 3];
                let tp = TensorProduct::from_symbols([(s1, o1), ("c", "Z")]);
                TrotterStep::new(tp, *f)
            })
            .collect();
        let program = exponentiate_splitting(&TrotterSplitting::new(steps), dt, &pauli_library()).unwrap();
        for g in program {
            let u = g.gate.matrix().unwrap();
            let eye = nalgebra::DMatrix::identity(u.nrows(), u.ncols());
            prop_assert!((u.adjoint() * &u - eye).camax() < 1e-12);
        }
    }

    #[test]
    fn site_hamiltonians_are_hermitian(n in 2usize..6, terms in 1usize..12, seed in 0u64..1000) {
        let tree = random_tree(n, seed);
        let dims = qubits(&tree);
        let sites: Vec<NodeId> = tree.nodes().cloned().collect();
        let h = Ttno::from_hamiltonian(&random_pauli_hamiltonian(&sites, terms, seed), &tree, &dims).unwrap();
        let mut psi = Ttns::random(&tree, &dims, 2, seed + 7).unwrap();
        psi.canonical_form(&sites[0]).unwrap();
        let mut cache = EffectiveHamiltonianCache::build(&psi, &h).unwrap();
        let m = cache.site_hamiltonian(&psi, &h, &sites[0]).unwrap();
        prop_assert!((&m - m.adjoint()).camax() < 1e-10 * m.camax().max(1.0));
    }
}
