//! Binary dump of a [`PathBundle`] for replay.
//!
//! All numbers are little-endian. Layout:
//!
//! ```text
//! header   magic "SBSDEPB\0", version u32, n_paths u64, n_steps u64, dim u64,
//!          t_max f64, seed u64, bridge u8, x0 [f64; dim], domain
//! states   [f64; n_paths * (n_steps + 1) * dim], row-major by path then step;
//!          a path is padded with its last state after it stops
//! stored   [u64; n_paths], states actually simulated per path
//! exits    n_paths exit records
//! tau      u8 flag; if 1: kind u8, ties u64, n_paths exit records,
//!          aux flag u8 (if 1: aux dim u64, dense aux states, stored counts),
//!          domain
//! ```
//!
//! An exit record is `exited u8, index u64, time f64, len u64, [f64; len]`.
//! A domain is a tag `u8` (0 none, 1 interval, 2 ball, 3 box) followed by
//! `lo hi` for an interval, `dim u64, center, radius` for a ball and
//! `dim u64, lo, hi` for a box.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::forward::{ExitInfo, PathBundle, TauKind, TauTrack, TimeGrid, Trajectories};
use crate::model::Domain;

pub const MAGIC: [u8; 8] = *b"SBSDEPB\0";
pub const VERSION: u32 = 1;

struct W<'a, T: Write>(&'a mut T);

impl<T: Write> W<'_, T> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.0.write_all(&[v])?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        v.iter().try_for_each(|x| self.f64(*x))
    }

    fn domain(&mut self, d: Option<&Domain>) -> Result<()> {
        match d {
            None => self.u8(0),
            Some(Domain::Interval { lo, hi }) => {
                self.u8(1)?;
                self.f64(*lo)?;
                self.f64(*hi)
            }
            Some(Domain::Ball { center, radius }) => {
                self.u8(2)?;
                self.usize(center.len())?;
                self.f64s(center)?;
                self.f64(*radius)
            }
            Some(Domain::Box { lo, hi }) => {
                self.u8(3)?;
                self.usize(lo.len())?;
                self.f64s(lo)?;
                self.f64s(hi)
            }
        }
    }

    fn exit(&mut self, e: &ExitInfo) -> Result<()> {
        self.u8(u8::from(e.exited))?;
        self.usize(e.index)?;
        self.f64(e.time)?;
        self.usize(e.state.len())?;
        self.f64s(&e.state)
    }

    fn trajectories(&mut self, t: &Trajectories, n_states: usize) -> Result<()> {
        for p in 0..t.n_paths() {
            for i in 0..n_states {
                self.f64s(t.state(p, i))?;
            }
        }
        (0..t.n_paths()).try_for_each(|p| self.usize(t.stored(p)))
    }
}

struct R<'a, T: Read>(&'a mut T);

impl<T: Read> R<'_, T> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} does not fit in memory")))
    }
    fn len(&mut self, limit: usize) -> Result<usize> {
        let v = self.usize()?;
        if v > limit {
            return Err(Error::Format(format!("length {v} exceeds {limit}")));
        }
        Ok(v)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn domain(&mut self) -> Result<Option<Domain>> {
        let d = match self.u8()? {
            0 => return Ok(None),
            1 => Domain::interval(self.f64()?, self.f64()?)?,
            2 => {
                let n = self.len(1 << 16)?;
                let c = self.f64s(n)?;
                Domain::ball(c, self.f64()?)?
            }
            3 => {
                let n = self.len(1 << 16)?;
                let lo = self.f64s(n)?;
                Domain::cube(lo, self.f64s(n)?)?
            }
            t => return Err(Error::Format(format!("unknown domain tag {t}"))),
        };
        Ok(Some(d))
    }

    fn exit(&mut self, n_steps: usize) -> Result<ExitInfo> {
        let exited = match self.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad exit flag {b}"))),
        };
        let index = self.usize()?;
        if index > n_steps {
            return Err(Error::Format(format!("exit index {index} beyond {n_steps} steps")));
        }
        let time = self.f64()?;
        let len = self.len(1 << 16)?;
        Ok(ExitInfo { exited, index, time, state: self.f64s(len)? })
    }

    fn trajectories(&mut self, n_paths: usize, n_states: usize, dim: usize) -> Result<Trajectories> {
        let data = self.f64s(n_paths * n_states * dim)?;
        let stored = (0..n_paths)
            .map(|_| {
                let s = self.usize()?;
                if s == 0 || s > n_states {
                    return Err(Error::Format(format!("stored count {s} outside 1..={n_states}")));
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        let dense = Trajectories::dense(dim, n_paths, n_states, data);
        let paths = (0..n_paths).map(|p| dense.path(p)[..stored[p] * dim].to_vec()).collect();
        Ok(Trajectories::from_paths(dim, paths))
    }
}

/// Write `bundle` in the binary layout described at the module level.
pub fn write_bundle<T: Write>(bundle: &PathBundle, out: &mut T) -> Result<()> {
    let mut w = W(out);
    let n_states = bundle.grid().n_steps() + 1;
    w.0.write_all(&MAGIC)?;
    w.u32(VERSION)?;
    w.usize(bundle.n_paths())?;
    w.usize(bundle.grid().n_steps())?;
    w.usize(bundle.dim())?;
    w.f64(bundle.grid().t_max())?;
    w.u64(bundle.seed())?;
    w.u8(u8::from(bundle.bridge_corrected()))?;
    w.f64s(bundle.x0())?;
    w.domain(bundle.domain())?;
    w.trajectories(bundle.states(), n_states)?;
    bundle.exits_s().iter().try_for_each(|e| w.exit(e))?;
    match bundle.tau() {
        None => w.u8(0)?,
        Some(t) => {
            w.u8(1)?;
            w.u8(match t.kind {
                TauKind::Independent => 0,
                TauKind::SubDomain => 1,
                TauKind::Given => 2,
            })?;
            w.usize(t.ties)?;
            t.exits.iter().try_for_each(|e| w.exit(e))?;
            match &t.aux {
                None => w.u8(0)?,
                Some(aux) => {
                    w.u8(1)?;
                    w.usize(aux.dim())?;
                    w.trajectories(aux, n_states)?;
                }
            }
            w.domain(t.aux_domain.as_ref())?;
        }
    }
    Ok(w.0.flush()?)
}

/// Read a bundle written by [`write_bundle`].
pub fn read_bundle<T: Read>(input: &mut T) -> Result<PathBundle> {
    let mut r = R(input);
    if r.bytes::<8>()? != MAGIC {
        return Err(Error::Format("not a path bundle (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported bundle version {version}")));
    }
    let n_paths = r.usize()?;
    let n_steps = r.usize()?;
    let dim = r.len(1 << 16)?;
    let grid = TimeGrid::new(r.f64()?, n_steps)?;
    let seed = r.u64()?;
    let bridge = r.u8()? != 0;
    let x0 = r.f64s(dim)?;
    let domain = r.domain()?;
    let states = r.trajectories(n_paths, n_steps + 1, dim)?;
    let exit_s = (0..n_paths).map(|_| r.exit(n_steps)).collect::<Result<Vec<_>>>()?;
    let tau = match r.u8()? {
        0 => None,
        1 => {
            let kind = match r.u8()? {
                0 => TauKind::Independent,
                1 => TauKind::SubDomain,
                2 => TauKind::Given,
                k => return Err(Error::Format(format!("unknown tau kind {k}"))),
            };
            let ties = r.usize()?;
            let exits = (0..n_paths).map(|_| r.exit(n_steps)).collect::<Result<Vec<_>>>()?;
            let aux = match r.u8()? {
                0 => None,
                _ => {
                    let d = r.len(1 << 16)?;
                    Some(r.trajectories(n_paths, n_steps + 1, d)?)
                }
            };
            let aux_domain = r.domain()?;
            Some(TauTrack { kind, exits, aux, aux_domain, ties })
        }
        f => return Err(Error::Format(format!("bad tau flag {f}"))),
    };
    Ok(PathBundle { grid, x0, seed, domain, bridge, states, exit_s, tau })
}
