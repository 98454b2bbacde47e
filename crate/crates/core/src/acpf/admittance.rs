use num_complex::Complex64;

use crate::case::{Branch, Network, ServiceMask};

use super::PfError;

/// Pi-model admittances of one branch, p.u.
///
/// `[I_from; I_to] = [[ff, ft]; [tf, tt]] * [V_from; V_to]`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub ff: Complex64,
    pub ft: Complex64,
    pub tf: Complex64,
    pub tt: Complex64,
}

impl BranchAdmittance {
    pub fn of(index: usize, br: &Branch) -> Result<Self, PfError> {
        let z = Complex64::new(br.r, br.x);
        if z.norm() == 0.0 {
            return Err(PfError::ZeroImpedance { branch: index });
        }
        let ys = z.inv();
        let half_b = Complex64::new(0.0, br.b_charging / 2.0);
        let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift.to_radians());
        Ok(BranchAdmittance {
            ff: (ys + half_b) / (tap * tap.conj()),
            ft: -ys / tap.conj(),
            tf: -ys / tap,
            tt: ys + half_b,
        })
    }
}

/// Square complex matrix stored as sorted sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        AdmittanceMatrix {
            rows: vec![Vec::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn add(&mut self, i: usize, j: usize, y: Complex64) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(p) => row[p].1 += y,
            Err(p) => row.insert(p, (j, y)),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(p) => row[p].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Stored entries of row `i`, ascending by column.
    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, y)| y * v[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, y) in row {
                out[i][j] = y;
            }
        }
        out
    }
}

/// Bus admittance matrix of the whole network, indexed by bus position.
/// Out-of-service branches contribute nothing; bus shunts always do.
pub fn build_admittance(net: &Network, mask: &ServiceMask) -> Result<AdmittanceMatrix, PfError> {
    if !mask.fits(net) {
        return Err(PfError::MaskMismatch);
    }
    let base = net.base_mva();
    let mut y = AdmittanceMatrix::zeros(net.n_buses());
    for (i, bus) in net.buses().iter().enumerate() {
        let sh = Complex64::new(bus.g_shunt, bus.b_shunt) / base;
        if sh.norm() != 0.0 {
            y.add(i, i, sh);
        }
    }
    for (k, br) in net.branches().iter().enumerate() {
        if !mask.branches[k] {
            continue;
        }
        let a = BranchAdmittance::of(k, br)?;
        let (f, t) = net.branch_ends(k);
        y.add(f, f, a.ff);
        y.add(f, t, a.ft);
        y.add(t, f, a.tf);
        y.add(t, t, a.tt);
    }
    Ok(y)
}
