//! Named functions, streaming machines and protocols used by experiments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, BitVec, GroupSpec};
use crate::fourier::DenseFunction;
use crate::protocol::{constant_protocol, fsm_to_players, parity_chain, BroadcastProtocol, ProtocolError, StreamFsm};
use crate::sketch::LinearJuntaF2;

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },
    #[error("{name} needs parameter {param}")]
    Missing { name: String, param: &'static str },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

pub type Result<T, E = ZooError> = std::result::Result<T, E>;

/// Parameters shared by zoo entries; each entry reads the ones it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZooParams {
    pub n: Option<usize>,
    pub p: Option<u32>,
    pub moduli: Option<Vec<u32>>,
    pub index: Option<usize>,
    pub coords: Option<Vec<usize>>,
    pub value: Option<f64>,
    /// F2 rows given as 0/1 strings, coordinate 0 first.
    pub rows: Option<Vec<String>>,
    pub table: Option<Vec<f64>>,
    /// Name of the zoo machine for `state-passing`.
    pub fsm: Option<String>,
}

impl ZooParams {
    fn n(&self, name: &str) -> Result<usize> {
        self.n.ok_or_else(|| ZooError::Missing {
            name: name.to_string(),
            param: "n",
        })
    }

    /// The group the entry lives on: `moduli`, else `Z_p^n`, else `F2^n`.
    pub fn domain(&self, name: &str) -> Result<GroupSpec> {
        if let Some(m) = &self.moduli {
            return Ok(GroupSpec::new(m.clone())?);
        }
        let n = self.n(name)?;
        Ok(match self.p {
            Some(p) => GroupSpec::cyclic_power(p, n)?,
            None => GroupSpec::boolean(n)?,
        })
    }

    fn coord_mask(&self, name: &str, n: usize) -> Result<u64> {
        let coords = self.coords.as_ref().ok_or_else(|| ZooError::Missing {
            name: name.to_string(),
            param: "coords",
        })?;
        coords.iter().try_fold(0u64, |m, &c| {
            if c >= n {
                Err(ZooError::Invalid(format!("coordinate {c} out of range for n={n}")))
            } else {
                Ok(m | 1 << c)
            }
        })
    }

    fn junta(&self, name: &str) -> Result<LinearJuntaF2> {
        let n = self.n(name)?;
        let rows: Vec<BitVec> = self
            .rows
            .as_ref()
            .ok_or_else(|| ZooError::Missing {
                name: name.to_string(),
                param: "rows",
            })?
            .iter()
            .map(|r| r.parse::<BitVec>())
            .collect::<Result<_, _>>()?;
        let table = self.table.clone().ok_or_else(|| ZooError::Missing {
            name: name.to_string(),
            param: "table",
        })?;
        LinearJuntaF2::new(n, &rows, table).map_err(|e| ZooError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub kind: &'static str,
    pub name: &'static str,
    pub params: &'static str,
    pub summary: &'static str,
}

const ENTRIES: &[ZooEntry] = &[
    ZooEntry { kind: "function", name: "parity", params: "n", summary: "x_1 + ... + x_n mod 2" },
    ZooEntry { kind: "function", name: "dictator", params: "n, index", summary: "x_index" },
    ZooEntry { kind: "function", name: "k-junta-parity", params: "n, coords", summary: "parity of the listed coordinates" },
    ZooEntry { kind: "function", name: "mod-p-sum-zero", params: "n, p (or moduli)", summary: "1 iff the exponent-scaled coordinate sum is 0" },
    ZooEntry { kind: "function", name: "majority", params: "n", summary: "1 iff more than n/2 coordinates are 1" },
    ZooEntry { kind: "function", name: "constant", params: "n or moduli, value", summary: "fixed value" },
    ZooEntry { kind: "function", name: "linear-post", params: "n, rows, table", summary: "table(<r_1,x>, ..., <r_k,x>) over F2" },
    ZooEntry { kind: "fsm", name: "parity", params: "n", summary: "2 states, parity of all flips" },
    ZooEntry { kind: "fsm", name: "running-sum", params: "n, p (or moduli)", summary: "coordinate sum mod the exponent; outputs 1 at 0" },
    ZooEntry { kind: "fsm", name: "coordinate-parity", params: "n, coords", summary: "parity of flips to the listed coordinates" },
    ZooEntry { kind: "fsm", name: "linear", params: "n, rows, table", summary: "tracks <r_j, x> over F2; outputs table of the state" },
    ZooEntry { kind: "protocol", name: "parity-chain", params: "n, coords (optional)", summary: "players forward the running parity" },
    ZooEntry { kind: "protocol", name: "running-sum-mod-p", params: "n, p (or moduli)", summary: "players forward the running coordinate sum" },
    ZooEntry { kind: "protocol", name: "constant", params: "n or moduli, value", summary: "fixed messages and output" },
    ZooEntry { kind: "protocol", name: "state-passing", params: "fsm plus its parameters", summary: "players pass a zoo machine's state" },
];

pub fn list() -> &'static [ZooEntry] {
    ENTRIES
}

fn bool_f(v: bool) -> f64 {
    v as u8 as f64
}

pub fn function(name: &str, params: &ZooParams) -> Result<DenseFunction> {
    let g = params.domain(name)?;
    Ok(match name {
        "parity" => {
            boolean_only(name, &g)?;
            DenseFunction::from_fn(&g, |x| (x.count_ones() & 1) as f64)
        }
        "dictator" => {
            boolean_only(name, &g)?;
            let i = params.index.ok_or_else(|| ZooError::Missing {
                name: name.to_string(),
                param: "index",
            })?;
            if i >= g.dim() {
                return Err(ZooError::Invalid(format!("index {i} out of range for n={}", g.dim())));
            }
            DenseFunction::from_fn(&g, |x| ((x >> i) & 1) as f64)
        }
        "k-junta-parity" => {
            boolean_only(name, &g)?;
            let mask = params.coord_mask(name, g.dim())?;
            DenseFunction::from_fn(&g, |x| ((x as u64 & mask).count_ones() & 1) as f64)
        }
        "mod-p-sum-zero" => {
            let m = g.exponent();
            DenseFunction::from_fn(&g, |x| bool_f(scaled_sum(&g, x).is_multiple_of(m)))
        }
        "majority" => {
            boolean_only(name, &g)?;
            let n = g.dim() as u32;
            DenseFunction::from_fn(&g, |x| bool_f(2 * x.count_ones() > n))
        }
        "constant" => DenseFunction::constant(&g, value(name, params)?),
        "linear-post" => {
            let j = params.junta(name)?;
            DenseFunction::from_fn(&g, |x| j.post()[j.sketch_word(x as u64)])
        }
        _ => {
            return Err(ZooError::Unknown {
                kind: "function",
                name: name.to_string(),
            })
        }
    })
}

/// `sum_j (m / m_j) x_j` where `m` is the exponent; the plain sum on `Z_p^n`.
fn scaled_sum(g: &GroupSpec, x: usize) -> u64 {
    let m = g.exponent();
    g.moduli().iter().enumerate().map(|(j, &mj)| m / mj as u64 * g.coord(x, j) as u64).sum()
}

fn value(name: &str, params: &ZooParams) -> Result<f64> {
    params.value.ok_or_else(|| ZooError::Missing {
        name: name.to_string(),
        param: "value",
    })
}

fn boolean_only(name: &str, g: &GroupSpec) -> Result<()> {
    if g.is_boolean() {
        Ok(())
    } else {
        Err(ZooError::Invalid(format!("{name} is defined over F2^n only")))
    }
}

pub fn fsm(name: &str, params: &ZooParams) -> Result<StreamFsm> {
    let g = params.domain(name)?;
    Ok(match name {
        "parity" => {
            boolean_only(name, &g)?;
            StreamFsm::from_fn(g, 2, 0, |s, _, d| s ^ d as usize, |s| s as f64)?
        }
        "running-sum" => {
            let m = g.exponent() as usize;
            if m > 1 << 20 {
                return Err(ZooError::Invalid("exponent too large for a state machine".into()));
            }
            let scale: Vec<usize> = g.moduli().iter().map(|&mj| m / mj as usize).collect();
            StreamFsm::from_fn(g, m, 0, |s, j, d| (s + d as usize * scale[j]) % m, |s| bool_f(s == 0))?
        }
        "coordinate-parity" => {
            boolean_only(name, &g)?;
            let mask = params.coord_mask(name, g.dim())?;
            StreamFsm::from_fn(g, 2, 0, |s, j, d| s ^ (((mask >> j) & 1) as usize * d as usize), |s| s as f64)?
        }
        "linear" => {
            boolean_only(name, &g)?;
            let j = params.junta(name)?;
            let rows = j.rows();
            let k = rows.len();
            StreamFsm::from_fn(
                g,
                1 << k,
                0,
                |s, c, d| {
                    let flip: usize = rows.iter().enumerate().map(|(b, r)| (r.get(c) as usize) << b).sum();
                    if d == 1 {
                        s ^ flip
                    } else {
                        s
                    }
                },
                |s| j.post()[s],
            )?
        }
        _ => {
            return Err(ZooError::Unknown {
                kind: "fsm",
                name: name.to_string(),
            })
        }
    })
}

/// A protocol with the given number of players.
pub fn protocol(name: &str, params: &ZooParams, players: usize) -> Result<BroadcastProtocol> {
    Ok(match name {
        "parity-chain" => {
            let g = params.domain(name)?;
            boolean_only(name, &g)?;
            let n = g.dim();
            let mask = if params.coords.is_some() {
                params.coord_mask(name, n)?
            } else if n == 64 {
                u64::MAX
            } else {
                (1u64 << n) - 1
            };
            parity_chain(n, mask, players)?
        }
        "running-sum-mod-p" => fsm_to_players(&fsm("running-sum", params)?, players)?,
        "constant" => constant_protocol(params.domain(name)?, players, 1, value(name, params)?)?,
        "state-passing" => {
            let inner = params.fsm.as_deref().ok_or_else(|| ZooError::Missing {
                name: name.to_string(),
                param: "fsm",
            })?;
            fsm_to_players(&fsm(inner, params)?, players)?
        }
        _ => {
            return Err(ZooError::Unknown {
                kind: "protocol",
                name: name.to_string(),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::run_broadcast;

    fn params(n: usize) -> ZooParams {
        ZooParams {
            n: Some(n),
            ..Default::default()
        }
    }

    #[test]
    fn parity_and_mod_sum() {
        let f = function("parity", &params(6)).unwrap();
        assert_eq!(f.re(0b101100), 1.0);
        assert_eq!(f.re(0b101101), 0.0);
        let p = ZooParams {
            p: Some(3),
            ..params(4)
        };
        let f = function("mod-p-sum-zero", &p).unwrap();
        let g = f.domain().clone();
        for x in 0..g.order() {
            let s: u32 = g.coords_of(x).iter().sum();
            assert_eq!(f.re(x), bool_f(s % 3 == 0));
        }
    }

    #[test]
    fn unknown_and_missing() {
        assert!(matches!(function("nope", &params(3)), Err(ZooError::Unknown { .. })));
        assert!(matches!(function("dictator", &params(3)), Err(ZooError::Missing { param: "index", .. })));
        assert!(matches!(protocol("nope", &params(3), 2), Err(ZooError::Unknown { .. })));
        assert!(matches!(fsm("parity", &ZooParams::default()), Err(ZooError::Missing { param: "n", .. })));
    }

    #[test]
    fn linear_entries_agree() {
        let p = ZooParams {
            rows: Some(vec!["110".into(), "011".into()]),
            table: Some(vec![0.0, 0.25, 0.5, 1.0]),
            ..params(3)
        };
        let f = function("linear-post", &p).unwrap();
        let m = fsm("linear", &p).unwrap();
        let g = f.domain().clone();
        for x in 0..8 {
            let updates = crate::protocol::replay_updates(&g, x);
            assert_eq!(m.output(m.run(&updates).unwrap()), f.re(x));
        }
        let pr = protocol("state-passing", &ZooParams { fsm: Some("linear".into()), ..p }, 3).unwrap();
        assert_eq!(pr.message_bits(), 2);
        assert_eq!(run_broadcast(&pr, &[0b001, 0b100, 0b000], 0).unwrap().output, f.re(0b101));
    }

    #[test]
    fn running_sum_protocol_over_z3() {
        let p = ZooParams {
            p: Some(3),
            ..params(2)
        };
        let pr = protocol("running-sum-mod-p", &p, 3).unwrap();
        assert_eq!(pr.message_bits(), 2);
        let f = function("mod-p-sum-zero", &p).unwrap();
        let g = f.domain().clone();
        for a in 0..9 {
            for b in 0..9 {
                for c in 0..9 {
                    let s = g.add(g.add(a, b), c);
                    assert_eq!(run_broadcast(&pr, &[a, b, c], 0).unwrap().output, f.re(s));
                }
            }
        }
    }

    #[test]
    fn mixed_moduli_running_sum() {
        let p = ZooParams {
            moduli: Some(vec![2, 4]),
            ..Default::default()
        };
        let m = fsm("running-sum", &p).unwrap();
        assert_eq!(m.states(), 4);
        let f = function("mod-p-sum-zero", &p).unwrap();
        let g = f.domain().clone();
        for x in 0..g.order() {
            let end = m.replay(m.initial(), x);
            let c = g.coords_of(x);
            assert_eq!(end, ((c[0] * 2 + c[1]) % 4) as usize);
            assert_eq!(m.output(end), bool_f(end == 0));
        }
    }

    #[test]
    fn registry_lists_required_names() {
        let names: Vec<&str> = list().iter().map(|e| e.name).collect();
        for n in ["parity", "dictator", "k-junta-parity", "mod-p-sum-zero", "majority", "parity-chain", "running-sum-mod-p", "constant", "state-passing"] {
            assert!(names.contains(&n), "{n}");
        }
    }
}
