//! One- and two-site TDVP sweeps over the tree's update path.

use super::environment::EffectiveHamiltonianCache;
use super::tebd::{contract_pair, split_pair, Absorb, Pair};
use crate::error::{Result, TtnError};
use crate::tensor::{SvdParameters, C64};
use crate::tree::NodeId;
use crate::ttno::Ttno;
use crate::ttns::Ttns;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TdvpOrder {
    /// One forward sweep with the full step.
    First,
    /// A forward sweep with half the step followed by the same updates in
    /// reverse order with the other half.
    Second,
}

/// Sweep state shared by the TDVP variants: the update path and the cache
/// of environment blocks, kept consistent with every tensor change.
#[derive(Clone, Debug)]
pub struct TdvpSweeper {
    path: Vec<NodeId>,
    cache: EffectiveHamiltonianCache,
}

fn forward(dt: f64) -> C64 {
    C64::new(0.0, -dt)
}

fn backward(dt: f64) -> C64 {
    C64::new(0.0, dt)
}

impl TdvpSweeper {
    /// Prepares a sweep for `psi` under `h`; the orthogonality centre is
    /// moved to the start of the update path.
    pub fn new(psi: &mut Ttns, h: &Ttno) -> Result<Self> {
        let path = psi.topology().tdvp_update_path();
        let start = path
            .first()
            .ok_or_else(|| TtnError::InvalidTree("empty network".into()))?
            .clone();
        if psi.orthogonality_center().is_none() {
            return Err(TtnError::NoOrthogonalityCenter);
        }
        psi.move_orthogonalization_center(&start)?;
        let cache = EffectiveHamiltonianCache::build(psi, h)?;
        Ok(Self { path, cache })
    }

    pub fn path(&self) -> &[NodeId] {
        &self.path
    }

    pub fn cache(&self) -> &EffectiveHamiltonianCache {
        &self.cache
    }

    fn set(&mut self, psi: &mut Ttns, n: &NodeId, t: crate::tensor::DenseTensor) {
        psi.network_mut().set_tensor(n, t);
        self.cache.invalidate(psi, n);
    }

    /// QR moves of the centre along the tree path to `to`.
    fn move_center(&mut self, psi: &mut Ttns, to: &NodeId) -> Result<()> {
        let from = psi.orthogonality_center().ok_or(TtnError::NoOrthogonalityCenter)?.clone();
        let path = psi.topology().path_between(&from, to)?;
        for w in path.windows(2) {
            psi.network_mut().qr_toward(&w[0], &w[1])?;
            self.cache.invalidate(psi, &w[0]);
            self.cache.invalidate(psi, &w[1]);
        }
        psi.network_mut().set_orthogonality_center(Some(to.clone()));
        Ok(())
    }

    fn update_site(&mut self, psi: &mut Ttns, h: &Ttno, s: &NodeId, factor: C64) -> Result<()> {
        let t = self.cache.evolve_site(psi, h, s, factor)?;
        self.set(psi, s, t);
        Ok(())
    }

    /// Splits the centre `x` toward its neighbour `y`, evolves the bond
    /// matrix and moves it into `y`, which becomes the centre.
    fn update_link(&mut self, psi: &mut Ttns, h: &Ttno, x: &NodeId, y: &NodeId, factor: C64) -> Result<()> {
        let r = psi.network_mut().split_off_bond(x, y)?;
        self.cache.invalidate(psi, x);
        let r = self.cache.evolve_link(psi, h, x, y, &r, factor)?;
        psi.network_mut().absorb_bond_matrix(y, x, &r)?;
        self.cache.invalidate(psi, y);
        psi.network_mut().set_orthogonality_center(Some(y.clone()));
        Ok(())
    }

    fn first_step(&self, psi: &Ttns, i: usize) -> Result<NodeId> {
        Ok(psi
            .topology()
            .next_toward(&self.path[i], &self.path[i + 1])?
            .expect("consecutive path nodes differ"))
    }

    fn forward_sweep(&mut self, psi: &mut Ttns, h: &Ttno, dt: f64) -> Result<()> {
        let n = self.path.len();
        for i in 0..n {
            let s = self.path[i].clone();
            self.update_site(psi, h, &s, forward(dt))?;
            if i + 1 == n {
                break;
            }
            let n1 = self.first_step(psi, i)?;
            self.update_link(psi, h, &s, &n1, backward(dt))?;
            let next = self.path[i + 1].clone();
            self.move_center(psi, &next)?;
        }
        Ok(())
    }

    fn backward_sweep(&mut self, psi: &mut Ttns, h: &Ttno, dt: f64) -> Result<()> {
        let n = self.path.len();
        for i in (0..n).rev() {
            let s = self.path[i].clone();
            self.update_site(psi, h, &s, forward(dt))?;
            if i == 0 {
                break;
            }
            // undo the transition from path[i - 1] to path[i]
            let prev = self.path[i - 1].clone();
            let n1 = self.first_step(psi, i - 1)?;
            self.move_center(psi, &n1)?;
            self.update_link(psi, h, &n1, &prev, backward(dt))?;
        }
        Ok(())
    }

    /// One time step of single-site TDVP. Bond dimensions stay as they are.
    pub fn step_one_site(&mut self, psi: &mut Ttns, h: &Ttno, dt: f64, order: TdvpOrder) -> Result<()> {
        self.check_start(psi)?;
        match order {
            TdvpOrder::First => {
                self.forward_sweep(psi, h, dt)?;
                let start = self.path[0].clone();
                self.move_center(psi, &start)?;
            }
            TdvpOrder::Second => {
                self.forward_sweep(psi, h, dt / 2.0)?;
                self.backward_sweep(psi, h, dt / 2.0)?;
            }
        }
        self.debug_check(psi, h)
    }

    /// One time step of two-site TDVP: every link of the sweep is evolved
    /// as a joint tensor and split with `params`, after which the second
    /// site is evolved backwards, except on the last link of the sweep.
    pub fn step_two_site(&mut self, psi: &mut Ttns, h: &Ttno, dt: f64, params: &SvdParameters) -> Result<()> {
        self.check_start(psi)?;
        let n = self.path.len();
        if n == 1 {
            let s = self.path[0].clone();
            self.update_site(psi, h, &s, forward(dt))?;
            return self.debug_check(psi, h);
        }
        for i in 0..n - 1 {
            let s = self.path[i].clone();
            let n1 = self.first_step(psi, i)?;
            let Pair { theta, pa, pb } = contract_pair(psi, &s, &n1)?;
            let theta = self.cache.evolve_pair(psi, h, &s, &n1, &theta, forward(dt))?;
            split_pair(psi, &s, &n1, &Pair { theta, pa, pb }, params, Absorb::Second)?;
            self.cache.invalidate(psi, &s);
            self.cache.invalidate(psi, &n1);
            if i + 2 < n {
                self.update_site(psi, h, &n1, backward(dt))?;
                let next = self.path[i + 1].clone();
                self.move_center(psi, &next)?;
            }
        }
        let start = self.path[0].clone();
        self.move_center(psi, &start)?;
        self.debug_check(psi, h)
    }

    fn check_start(&self, psi: &Ttns) -> Result<()> {
        match psi.orthogonality_center() {
            Some(c) if *c == self.path[0] => Ok(()),
            Some(_) => Err(TtnError::Incompatible(
                "the orthogonality centre was moved outside the sweep".into(),
            )),
            None => Err(TtnError::NoOrthogonalityCenter),
        }
    }

    /// In debug builds, compares the blocks around the centre with a fresh
    /// contraction.
    fn debug_check(&mut self, psi: &Ttns, h: &Ttno) -> Result<()> {
        if cfg!(debug_assertions) {
            let c = self.path[0].clone();
            for m in psi.topology().neighbours(&c)? {
                self.cache.ensure(psi, h, &m, &c)?;
            }
            let dev = self.cache.deviation_at(psi, h, &c)?;
            let scale = 1.0f64.max(psi.norm());
            debug_assert!(dev <= 1e-10 * scale, "stale environment block: deviation {dev}");
        }
        Ok(())
    }
}

/// One single-site TDVP step with a freshly built environment.
pub fn tdvp1_step(psi: &mut Ttns, h: &Ttno, dt: f64, order: TdvpOrder) -> Result<()> {
    TdvpSweeper::new(psi, h)?.step_one_site(psi, h, dt, order)
}

/// One two-site TDVP step with a freshly built environment.
pub fn tdvp2_step(psi: &mut Ttns, h: &Ttno, dt: f64, params: &SvdParameters) -> Result<()> {
    TdvpSweeper::new(psi, h)?.step_two_site(psi, h, dt, params)
}
