//! AC power flow: admittance matrix, per-island Newton–Raphson solves,
//! line loading and generation cost.

mod admittance;
mod newton;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BusKind, Network, ServiceMask};

pub use admittance::{build_admittance, AdmittanceMatrix, BranchAdmittance};
pub use newton::solve_island;

#[derive(Debug, Error)]
pub enum PfError {
    #[error("branch {branch} is in service with zero impedance")]
    ZeroImpedance { branch: usize },
    #[error("service mask does not match the network dimensions")]
    MaskMismatch,
    #[error("dispatch has {got} entries for {expected} generators")]
    DispatchLength { got: usize, expected: usize },
    #[error("line limit must be positive, got {0}")]
    BadLineLimit(f64),
    #[error("power flow did not converge")]
    NotConverged,
    #[error("network splits into {0} islands; expected one")]
    NotConnected(usize),
    #[error("island has no in-service generator")]
    NoGenerator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    /// Max power mismatch at convergence, p.u.
    pub tol_mismatch: f64,
    pub max_iter: usize,
    /// Start PQ buses at 1∠0 instead of the case-file voltages.
    pub flat_start: bool,
    pub enforce_q_limits: bool,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tol_mismatch: 1e-8,
            max_iter: 20,
            flat_start: true,
            enforce_q_limits: true,
        }
    }
}

/// Why a solve did not converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfFailure {
    SingularJacobian,
    MaxIterations,
    NonFinite,
}

/// One island's power-flow problem in local bus numbering.
#[derive(Debug, Clone)]
pub struct PfProblem {
    pub base_mva: f64,
    /// Network positions of the island's buses; local index = position here.
    pub buses: Vec<usize>,
    pub kinds: Vec<BusKind>,
    /// Local index of the slack bus.
    pub slack: usize,
    /// Generator absorbing the island's mismatch.
    pub slack_gen: usize,
    pub ybus: AdmittanceMatrix,
    /// Scheduled generation per local bus, MW (ignored at the slack).
    pub p_gen: Vec<f64>,
    /// Fixed reactive generation per local bus, MVAr; used on PQ buses only.
    pub q_gen: Vec<f64>,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    /// Voltage magnitude set-point (PV and slack) or initial guess (PQ), p.u.
    pub v_set: Vec<f64>,
    pub v_ang_init: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub branches: Vec<IslandBranch>,
    /// (generator index, local bus, set-point MW) for every in-service
    /// generator on the island.
    pub gens: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct IslandBranch {
    pub index: usize,
    pub from: usize,
    pub to: usize,
    pub y: BranchAdmittance,
}

impl PfProblem {
    /// Builds the problem for the buses in `island` (network positions).
    ///
    /// `dispatch` holds the MW set-point of every generator in the network.
    /// Returns `Ok(None)` when the island has no in-service generator.
    pub fn for_island(
        net: &Network,
        mask: &ServiceMask,
        island: &[usize],
        dispatch: &[f64],
    ) -> Result<Option<PfProblem>, PfError> {
        if !mask.fits(net) {
            return Err(PfError::MaskMismatch);
        }
        if dispatch.len() != net.n_generators() {
            return Err(PfError::DispatchLength {
                got: dispatch.len(),
                expected: net.n_generators(),
            });
        }
        let mut local = vec![usize::MAX; net.n_buses()];
        for (l, &p) in island.iter().enumerate() {
            local[p] = l;
        }
        let gens: Vec<(usize, usize, f64)> = (0..net.n_generators())
            .filter(|&g| mask.generators[g])
            .filter_map(|g| {
                let l = local[net.generator_position(g)];
                (l != usize::MAX).then_some((g, l, dispatch[g]))
            })
            .collect();
        let Some(slack_gen) = choose_slack(net, &gens) else {
            return Ok(None);
        };
        let slack = local[net.generator_position(slack_gen)];

        let n = island.len();
        let base = net.base_mva();
        let mut kinds = vec![BusKind::Pq; n];
        let mut p_gen = vec![0.0; n];
        let mut v_set = vec![1.0; n];
        let mut v_ang_init = vec![0.0; n];
        let mut q_min = vec![0.0; n];
        let mut q_max = vec![0.0; n];
        let mut has_v = vec![false; n];
        for (l, &p) in island.iter().enumerate() {
            let bus = &net.buses()[p];
            v_set[l] = bus.v_mag_init;
            v_ang_init[l] = bus.v_ang_init.to_radians();
        }
        for &(g, l, set) in &gens {
            let gen = &net.generators()[g];
            if g != slack_gen {
                p_gen[l] += set;
            }
            q_min[l] += gen.q_min;
            q_max[l] += gen.q_max;
            if !has_v[l] {
                v_set[l] = gen.v_set;
                has_v[l] = true;
            }
            kinds[l] = BusKind::Pv;
        }
        kinds[slack] = BusKind::Slack;

        let mut ybus = AdmittanceMatrix::zeros(n);
        for (l, &p) in island.iter().enumerate() {
            let bus = &net.buses()[p];
            let sh = Complex64::new(bus.g_shunt, bus.b_shunt) / base;
            if sh.norm() != 0.0 {
                ybus.add(l, l, sh);
            }
        }
        let mut branches = Vec::new();
        for (k, br) in net.branches().iter().enumerate() {
            if !mask.branches[k] {
                continue;
            }
            let (f, t) = net.branch_ends(k);
            let (lf, lt) = (local[f], local[t]);
            if lf == usize::MAX || lt == usize::MAX {
                continue;
            }
            let y = BranchAdmittance::of(k, br)?;
            ybus.add(lf, lf, y.ff);
            ybus.add(lf, lt, y.ft);
            ybus.add(lt, lf, y.tf);
            ybus.add(lt, lt, y.tt);
            branches.push(IslandBranch {
                index: k,
                from: lf,
                to: lt,
                y,
            });
        }

        Ok(Some(PfProblem {
            base_mva: base,
            buses: island.to_vec(),
            kinds,
            slack,
            slack_gen,
            ybus,
            p_gen,
            q_gen: vec![0.0; n],
            p_load: island.iter().map(|&p| net.buses()[p].p_load).collect(),
            q_load: island.iter().map(|&p| net.buses()[p].q_load).collect(),
            v_set,
            v_ang_init,
            q_min,
            q_max,
            branches,
            gens,
        }))
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    /// Specified complex injection per bus, p.u. (slack entry unused).
    pub fn s_spec(&self) -> Vec<Complex64> {
        (0..self.n())
            .map(|i| {
                let q = if self.kinds[i] == BusKind::Pq {
                    self.q_gen[i]
                } else {
                    0.0
                };
                Complex64::new(self.p_gen[i] - self.p_load[i], q - self.q_load[i]) / self.base_mva
            })
            .collect()
    }

    /// Computed injection `V .* conj(Y V)`, p.u.
    pub fn s_calc(&self, v_mag: &[f64], v_ang: &[f64]) -> Vec<Complex64> {
        let v: Vec<Complex64> = v_mag
            .iter()
            .zip(v_ang)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect();
        let i = self.ybus.mul_vec(&v);
        v.iter().zip(&i).map(|(v, i)| v * i.conj()).collect()
    }

    pub(crate) fn pv_pq(&self) -> (Vec<usize>, Vec<usize>) {
        let pv = (0..self.n())
            .filter(|&i| self.kinds[i] == BusKind::Pv)
            .collect();
        let pq = (0..self.n())
            .filter(|&i| self.kinds[i] == BusKind::Pq)
            .collect();
        (pv, pq)
    }

    /// Newton mismatch vector `[ΔP(pv ∪ pq); ΔQ(pq)]`, p.u.
    pub fn mismatch(&self, v_mag: &[f64], v_ang: &[f64]) -> Vec<f64> {
        let (pv, pq) = self.pv_pq();
        newton::mismatch_vector(self, &pv, &pq, v_mag, v_ang)
    }

    /// Analytic Jacobian of [`PfProblem::mismatch`] with respect to
    /// `[θ(pv ∪ pq); |V|(pq)]`.
    pub fn jacobian(&self, v_mag: &[f64], v_ang: &[f64]) -> nalgebra::DMatrix<f64> {
        let (pv, pq) = self.pv_pq();
        newton::jacobian(self, &pv, &pq, v_mag, v_ang)
    }
}

/// The case slack bus keeps its role when it still has an in-service
/// machine; otherwise the largest machine (lowest bus id on ties) takes over.
fn choose_slack(net: &Network, gens: &[(usize, usize, f64)]) -> Option<usize> {
    let better = |a: usize, b: usize| {
        let (ga, gb) = (&net.generators()[a], &net.generators()[b]);
        ga.p_max > gb.p_max || (ga.p_max == gb.p_max && ga.bus < gb.bus)
    };
    let pick = |it: &mut dyn Iterator<Item = usize>| {
        it.fold(None, |best: Option<usize>, g| match best {
            Some(b) if !better(g, b) => Some(b),
            _ => Some(g),
        })
    };
    let on_case_slack = pick(
        &mut gens
            .iter()
            .map(|&(g, _, _)| g)
            .filter(|&g| net.buses()[net.generator_position(g)].kind == BusKind::Slack),
    );
    on_case_slack.or_else(|| pick(&mut gens.iter().map(|&(g, _, _)| g)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub branch: usize,
    /// Complex power leaving the from end, MVA.
    pub s_from: Complex64,
    /// Complex power leaving the to end, MVA.
    pub s_to: Complex64,
}

impl BranchFlow {
    pub fn apparent(&self) -> f64 {
        self.s_from.norm().max(self.s_to.norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub converged: bool,
    pub failure: Option<PfFailure>,
    /// Newton updates across all Q-limit passes.
    pub iterations: usize,
    /// Network positions, same order as the problem.
    pub buses: Vec<usize>,
    pub v_mag: Vec<f64>,
    /// Radians.
    pub v_ang: Vec<f64>,
    /// Net injection per bus, MW.
    pub p_inj: Vec<f64>,
    /// Net injection per bus, MVAr.
    pub q_inj: Vec<f64>,
    pub branch_flows: Vec<BranchFlow>,
    pub slack_gen: usize,
    /// Solved output of the slack generator, MW.
    pub slack_p: f64,
    /// (generator index, MW output) for the island's in-service generators.
    pub gen_p: Vec<(usize, f64)>,
    /// Network positions of PV buses converted to PQ at a reactive limit.
    pub q_limited: Vec<usize>,
}

impl PfSolution {
    pub fn max_flow(&self) -> f64 {
        self.branch_flows
            .iter()
            .map(BranchFlow::apparent)
            .fold(0.0, f64::max)
    }
}

/// Per-branch loading fraction `max(|S_from|, |S_to|) / line_limit` for the
/// branches carried by `sol`; every other branch reads 0.
pub fn line_loading(
    sol: &PfSolution,
    n_branches: usize,
    line_limit: f64,
) -> Result<Vec<f64>, PfError> {
    if !(line_limit > 0.0) {
        return Err(PfError::BadLineLimit(line_limit));
    }
    if !sol.converged {
        return Err(PfError::NotConverged);
    }
    let mut out = vec![0.0; n_branches];
    for f in &sol.branch_flows {
        out[f.branch] = f.apparent() / line_limit;
    }
    Ok(out)
}

/// Total $/h of the generators flagged in `available`, evaluated at `dispatch` MW.
pub fn generation_cost(net: &Network, dispatch: &[f64], available: &[bool]) -> f64 {
    net.generators()
        .iter()
        .zip(dispatch)
        .zip(available)
        .filter(|(_, &a)| a)
        .map(|((g, &p), _)| g.cost.eval(p))
        .sum()
}

/// Solves the case as stored, with its own generator schedule.
pub fn solve_base_case(net: &Network, opts: &PfOptions) -> Result<PfSolution, PfError> {
    let mask = ServiceMask::from_network(net);
    let islands = crate::topology::detect_islands(net, &mask);
    if islands.len() != 1 {
        return Err(PfError::NotConnected(islands.len()));
    }
    let dispatch: Vec<f64> = net.generators().iter().map(|g| g.p_gen).collect();
    let prob = PfProblem::for_island(net, &mask, &islands.islands[0], &dispatch)?
        .ok_or(PfError::NoGenerator)?;
    Ok(solve_island(&prob, opts))
}
