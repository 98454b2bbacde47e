use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::case::BusKind;

use super::{BranchFlow, PfFailure, PfOptions, PfProblem, PfSolution};

// Voltages this far from 1 p.u. mean the iteration has run away.
const RUNAWAY_VOLTAGE: f64 = 1e3;
const Q_LIMIT_SLACK_MVAR: f64 = 1e-6;

pub(super) fn mismatch_vector(
    prob: &PfProblem,
    pv: &[usize],
    pq: &[usize],
    v_mag: &[f64],
    v_ang: &[f64],
) -> Vec<f64> {
    let s = prob.s_calc(v_mag, v_ang);
    let spec = prob.s_spec();
    let mut f = Vec::with_capacity(pv.len() + 2 * pq.len());
    f.extend(pv.iter().chain(pq).map(|&i| (s[i] - spec[i]).re));
    f.extend(pq.iter().map(|&i| (s[i] - spec[i]).im));
    f
}

pub(super) fn jacobian(
    prob: &PfProblem,
    pv: &[usize],
    pq: &[usize],
    v_mag: &[f64],
    v_ang: &[f64],
) -> DMatrix<f64> {
    let n = prob.n();
    let npvpq = pv.len() + pq.len();
    let dim = npvpq + pq.len();
    // Column of θ_k / |V|_k in the state vector; row of P_i / Q_i likewise.
    let mut ang_col = vec![usize::MAX; n];
    let mut mag_col = vec![usize::MAX; n];
    for (c, &i) in pv.iter().chain(pq).enumerate() {
        ang_col[i] = c;
    }
    for (c, &i) in pq.iter().enumerate() {
        mag_col[i] = npvpq + c;
    }

    let v: Vec<Complex64> = v_mag
        .iter()
        .zip(v_ang)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    let unit: Vec<Complex64> = v_ang
        .iter()
        .map(|&a| Complex64::from_polar(1.0, a))
        .collect();
    let cur = prob.ybus.mul_vec(&v);
    let j = Complex64::new(0.0, 1.0);

    let mut jac = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..n {
        let p_row = ang_col[i];
        if p_row == usize::MAX {
            continue;
        }
        // The Q row of a PQ bus shares its index with the |V| column.
        let q_row = (mag_col[i] != usize::MAX).then_some(mag_col[i]);
        for &(k, y) in prob.ybus.row(i) {
            let (d_ang, d_mag) = if k == i {
                (
                    j * (v[i] * cur[i].conj() - v[i] * (y * v[i]).conj()),
                    v[i] * (y * unit[i]).conj() + cur[i].conj() * unit[i],
                )
            } else {
                (-j * v[i] * (y * v[k]).conj(), v[i] * (y * unit[k]).conj())
            };
            if ang_col[k] != usize::MAX {
                jac[(p_row, ang_col[k])] = d_ang.re;
                if let Some(qr) = q_row {
                    jac[(qr, ang_col[k])] = d_ang.im;
                }
            }
            if mag_col[k] != usize::MAX {
                jac[(p_row, mag_col[k])] = d_mag.re;
                if let Some(qr) = q_row {
                    jac[(qr, mag_col[k])] = d_mag.im;
                }
            }
        }
    }
    jac
}

fn inf_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, x| m.max(x.abs()))
}

enum NewtonEnd {
    Converged,
    Failed(PfFailure),
}

/// Plain Newton iteration on fixed bus types; updates `v_mag`/`v_ang` in place.
fn newton(
    prob: &PfProblem,
    opts: &PfOptions,
    v_mag: &mut [f64],
    v_ang: &mut [f64],
    iterations: &mut usize,
) -> NewtonEnd {
    let (pv, pq) = prob.pv_pq();
    let npvpq = pv.len() + pq.len();
    let mut f = mismatch_vector(prob, &pv, &pq, v_mag, v_ang);
    for it in 0..=opts.max_iter {
        let norm = inf_norm(&f);
        if !norm.is_finite() {
            return NewtonEnd::Failed(PfFailure::NonFinite);
        }
        if norm <= opts.tol_mismatch {
            return NewtonEnd::Converged;
        }
        if it == opts.max_iter {
            break;
        }
        let jac = jacobian(prob, &pv, &pq, v_mag, v_ang);
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|x| -x));
        let Some(dx) = jac.lu().solve(&rhs) else {
            return NewtonEnd::Failed(PfFailure::SingularJacobian);
        };
        if dx.iter().any(|x| !x.is_finite()) {
            return NewtonEnd::Failed(PfFailure::SingularJacobian);
        }
        for (c, &i) in pv.iter().chain(&pq).enumerate() {
            v_ang[i] += dx[c];
        }
        for (c, &i) in pq.iter().enumerate() {
            v_mag[i] += dx[npvpq + c];
        }
        // Fold negative magnitudes back into the angle.
        for &i in &pq {
            if v_mag[i] < 0.0 {
                v_mag[i] = -v_mag[i];
                v_ang[i] += std::f64::consts::PI;
            }
        }
        *iterations += 1;
        if v_mag.iter().any(|m| !(m.abs() < RUNAWAY_VOLTAGE)) {
            return NewtonEnd::Failed(PfFailure::NonFinite);
        }
        f = mismatch_vector(prob, &pv, &pq, v_mag, v_ang);
    }
    NewtonEnd::Failed(PfFailure::MaxIterations)
}

/// Newton–Raphson solve of one island, with PV→PQ switching at reactive
/// limits when enabled. Never panics on divergence; the returned solution
/// carries `converged = false` and the failure kind instead.
pub fn solve_island(prob: &PfProblem, opts: &PfOptions) -> PfSolution {
    let n = prob.n();
    let mut work = prob.clone();
    let mut v_mag: Vec<f64> = (0..n)
        .map(|i| match prob.kinds[i] {
            BusKind::Pq if opts.flat_start => 1.0,
            _ => prob.v_set[i],
        })
        .collect();
    let mut v_ang: Vec<f64> = if opts.flat_start {
        vec![0.0; n]
    } else {
        let a0 = prob.v_ang_init[prob.slack];
        prob.v_ang_init.iter().map(|a| a - a0).collect()
    };
    let mut iterations = 0;
    let mut q_limited = Vec::new();

    let mut outcome;
    loop {
        outcome = newton(&work, opts, &mut v_mag, &mut v_ang, &mut iterations);
        if !matches!(outcome, NewtonEnd::Converged) || !opts.enforce_q_limits {
            break;
        }
        let s = work.s_calc(&v_mag, &v_ang);
        let mut switched = false;
        for i in 0..n {
            if work.kinds[i] != BusKind::Pv {
                continue;
            }
            let q_gen = s[i].im * work.base_mva + work.q_load[i];
            let limit = if q_gen > work.q_max[i] + Q_LIMIT_SLACK_MVAR {
                work.q_max[i]
            } else if q_gen < work.q_min[i] - Q_LIMIT_SLACK_MVAR {
                work.q_min[i]
            } else {
                continue;
            };
            work.kinds[i] = BusKind::Pq;
            work.q_gen[i] = limit;
            q_limited.push(prob.buses[i]);
            switched = true;
        }
        if !switched {
            break;
        }
    }

    let converged = matches!(outcome, NewtonEnd::Converged);
    let failure = match outcome {
        NewtonEnd::Converged => None,
        NewtonEnd::Failed(f) => Some(f),
    };
    let s = work.s_calc(&v_mag, &v_ang);
    let base = prob.base_mva;
    let p_inj: Vec<f64> = s.iter().map(|x| x.re * base).collect();
    let q_inj: Vec<f64> = s.iter().map(|x| x.im * base).collect();
    let slack_p = p_inj[prob.slack] + prob.p_load[prob.slack] - prob.p_gen[prob.slack];

    let v: Vec<Complex64> = v_mag
        .iter()
        .zip(&v_ang)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    let branch_flows = prob
        .branches
        .iter()
        .map(|b| {
            let (vf, vt) = (v[b.from], v[b.to]);
            BranchFlow {
                branch: b.index,
                s_from: vf * (b.y.ff * vf + b.y.ft * vt).conj() * base,
                s_to: vt * (b.y.tf * vf + b.y.tt * vt).conj() * base,
            }
        })
        .collect();
    let gen_p = prob
        .gens
        .iter()
        .map(|&(g, _, set)| (g, if g == prob.slack_gen { slack_p } else { set }))
        .collect();

    PfSolution {
        converged,
        failure,
        iterations,
        buses: prob.buses.clone(),
        v_mag,
        v_ang,
        p_inj,
        q_inj,
        branch_flows,
        slack_gen: prob.slack_gen,
        slack_p,
        gen_p,
        q_limited,
    }
}
