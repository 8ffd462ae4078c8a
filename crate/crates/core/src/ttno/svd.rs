//! Operator networks obtained by repeated SVDs of a full matrix.

use indexmap::IndexMap;
use nalgebra::DMatrix;

use super::Ttno;
use crate::error::{Result, TtnError};
use crate::operators::SiteDims;
use crate::tensor::split::scale_last_leg;
use crate::tensor::{truncated_svd, DenseTensor, SvdParameters, C64};
use crate::tree::{NodeId, TreeTopology};
use crate::ttn::TreeTensorNetwork;

/// Singular values below this fraction of the largest one count as zero
/// when the decomposition determines bond ranks. Round-off in the dense
/// input sits many orders of magnitude above machine epsilon, so a plain
/// zero test would report inflated ranks.
pub const NUMERIC_RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
enum Leg {
    Out(NodeId),
    In(NodeId),
    Bond(NodeId),
}

/// Decomposes a dense operator into a tree network by peeling off one node
/// at a time from the leaves inward. Rows and columns of `op` enumerate the
/// sites in `site_order` with the first site most significant. The relative
/// tolerance of `params` is raised to at least [`NUMERIC_RANK_TOL`].
pub fn ttno_from_dense(
    op: &DMatrix<C64>,
    tree: &TreeTopology,
    site_order: &[NodeId],
    dims: &SiteDims,
    params: &SvdParameters,
) -> Result<Ttno> {
    if site_order.len() != tree.len() || site_order.iter().any(|n| !tree.contains(n)) {
        return Err(TtnError::Incompatible(
            "site order must list every tree node once".into(),
        ));
    }
    let site_dims = site_order
        .iter()
        .map(|n| {
            dims.get(n)
                .copied()
                .ok_or_else(|| TtnError::Operator(format!("no physical dimension given for `{n}`")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let size: usize = site_dims.iter().product();
    if op.nrows() != size || op.ncols() != size {
        return Err(TtnError::DimensionMismatch {
            leg_a: 0,
            dim_a: op.nrows(),
            leg_b: 1,
            dim_b: size,
        });
    }
    let mut params = *params;
    params.rel_tol = params.rel_tol.max(NUMERIC_RANK_TOL);

    let shape: Vec<usize> = site_dims.iter().chain(&site_dims).copied().collect();
    let mut work = DenseTensor::from_matrix(op).into_reshape(&shape)?;
    let mut labels: Vec<Leg> = site_order
        .iter()
        .map(|n| Leg::Out(n.clone()))
        .chain(site_order.iter().map(|n| Leg::In(n.clone())))
        .collect();

    let mut tensors = IndexMap::new();
    for c in tree.post_order() {
        let wanted = node_legs(tree, &c)?;
        let v_legs: Vec<usize> = wanted
            .iter()
            .map(|l| labels.iter().position(|x| x == l).expect("leg present"))
            .collect();
        if tree.parent(&c)?.is_none() {
            tensors.insert(c, work.transpose(&v_legs)?);
            break;
        }
        let u_legs: Vec<usize> = (0..labels.len()).filter(|l| !v_legs.contains(l)).collect();
        let split = truncated_svd(&work, &u_legs, &v_legs, &params)?;
        tensors.insert(c.clone(), split.v);
        work = scale_last_leg(split.u, &split.s);
        labels = u_legs
            .iter()
            .map(|&l| labels[l].clone())
            .chain(std::iter::once(Leg::Bond(c)))
            .collect();
    }
    Ttno::from_network(TreeTensorNetwork::from_parts(tree.clone(), tensors)?)
}

/// Child bonds, output and input of a node, in layout order.
fn node_legs(tree: &TreeTopology, n: &NodeId) -> Result<Vec<Leg>> {
    let mut legs: Vec<Leg> = tree.children(n)?.iter().map(|k| Leg::Bond(k.clone())).collect();
    legs.push(Leg::Out(n.clone()));
    legs.push(Leg::In(n.clone()));
    Ok(legs)
}
