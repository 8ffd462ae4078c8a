//! Binary network container.
//!
//! Layout: magic `TTNN`, version (u16), node count (u32), then for each node
//! in pre-order: id length (u32), UTF-8 id, parent position (i32, `-1` for
//! the root) and the node tensor in the single-tensor format. The record
//! ends with the position of the orthogonality centre (i32, `-1` if unset).

use std::io::{Read, Write};

use indexmap::IndexMap;

use super::TreeTensorNetwork;
use crate::error::{Result, TtnError};
use crate::tensor::{read_tensor, write_tensor};
use crate::tree::{NodeId, TreeTopology};

const MAGIC: &[u8; 4] = b"TTNN";
const VERSION: u16 = 1;

pub fn write_network<W: Write>(w: &mut W, ttn: &TreeTensorNetwork) -> Result<()> {
    let order = ttn.topology.pre_order();
    let pos: IndexMap<&NodeId, usize> = order.iter().enumerate().map(|(i, n)| (n, i)).collect();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(order.len() as u32).to_le_bytes())?;
    for n in &order {
        let bytes = n.as_str().as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        let parent = ttn.topology.parent[n].as_ref().map_or(-1, |p| pos[p] as i32);
        w.write_all(&parent.to_le_bytes())?;
        write_tensor(w, &ttn.tensors[n])?;
    }
    let centre = ttn.orthogonality_center.as_ref().map_or(-1, |c| pos[c] as i32);
    w.write_all(&centre.to_le_bytes())?;
    Ok(())
}

pub fn read_network<R: Read>(r: &mut R) -> Result<TreeTensorNetwork> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TtnError::Format("bad network magic".into()));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != VERSION {
        return Err(TtnError::Format(format!(
            "unsupported network format version {version}"
        )));
    }
    let count = read_u32(r)? as usize;
    let mut ids: Vec<NodeId> = Vec::with_capacity(count);
    let mut topology = TreeTopology::new();
    let mut tensors = IndexMap::new();
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let id = NodeId::new(
            String::from_utf8(buf).map_err(|_| TtnError::Format("node id is not UTF-8".into()))?,
        );
        let parent = read_i32(r)?;
        if parent < 0 {
            topology.add_root(id.clone())?;
        } else {
            let p = ids
                .get(parent as usize)
                .ok_or_else(|| TtnError::Format("parent recorded after child".into()))?;
            topology.add_child(p.clone(), id.clone())?;
        }
        tensors.insert(id.clone(), read_tensor(r)?);
        ids.push(id);
    }
    let centre = read_i32(r)?;
    let mut ttn = TreeTensorNetwork::from_parts(topology, tensors)?;
    if centre >= 0 {
        let c = ids
            .get(centre as usize)
            .ok_or_else(|| TtnError::Format("orthogonality centre out of range".into()))?;
        ttn.orthogonality_center = Some(c.clone());
    }
    Ok(ttn)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32<R: Read>(r: &mut R) -> Result<i32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}
