//! Shared fixtures for the benchmarks.

use treetn_core::models::{build_q_tree, neel_like_initial_state, tfi_hamiltonian, TfiSpec};
use treetn_core::{Result, Ttno, Ttns};

/// Transverse-field model on the three-armed tree with its compiled operator
/// and the alternating initial state, the centre placed at the root.
pub fn tfi_fixture(l: usize, four_site: bool) -> Result<(TfiSpec, Ttno, Ttns)> {
    let spec = TfiSpec::new(l, 1.0, 0.1).with_four_site(four_site);
    let (tree, dims) = build_q_tree(l)?;
    let h = Ttno::from_hamiltonian(&tfi_hamiltonian(&spec)?, &tree, &dims)?;
    let mut psi = neel_like_initial_state(l)?;
    psi.canonical_form(tree.root().expect("rooted"))?;
    Ok((spec, h, psi))
}
