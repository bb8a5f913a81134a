//! Bilinear quadrilaterals in plane stress: linear elasticity and an
//! incompressible Neo-Hookean material.

use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::linalg::BandedSpd;
use crate::scalar::Real;

/// Plate fixed on its left edge and pulled by a uniform traction (force per
/// unit area of the edge face) on its right edge.
#[derive(Debug, Clone)]
pub struct PlaneStressProblem<'a, T> {
    pub mesh: &'a Mesh<T>,
    pub thickness: T,
    pub nu: T,
    pub traction: T,
    pub modulus: &'a [T],
}

impl<'a, T: Real> PlaneStressProblem<'a, T> {
    pub fn validate(&self) -> Result<()> {
        if self.mesh.dim() != 2 {
            return Err(Error::invalid("plane-stress problem needs a 2D mesh"));
        }
        if self.modulus.len() != self.mesh.n_elements() {
            return Err(Error::shape(format!(
                "{} moduli for {} elements",
                self.modulus.len(),
                self.mesh.n_elements()
            )));
        }
        if !(self.thickness > T::zero()) {
            return Err(Error::invalid("thickness must be positive"));
        }
        if !(self.nu >= T::zero() && self.nu <= T::lit(0.5)) {
            return Err(Error::invalid("Poisson's ratio must lie in [0, 0.5]"));
        }
        if let Some(e) = self.modulus.iter().position(|&e| !(e > T::zero()) || !e.is_finite()) {
            return Err(Error::invalid(format!("element {e} has nonpositive Young's modulus")));
        }
        Ok(())
    }

    /// Nodes on the left edge (x = min x).
    pub fn fixed_nodes(&self) -> Vec<usize> {
        let (xmin, _) = self.mesh.bounds(0);
        (0..self.mesh.n_nodes()).filter(|&n| self.mesh.node(n)[0] == xmin).collect()
    }

    /// Consistent nodal forces of the right-edge traction.
    pub fn external_force(&self) -> Vec<T> {
        let mesh = self.mesh;
        let (_, xmax) = mesh.bounds(0);
        let mut f = vec![T::zero(); 2 * mesh.n_nodes()];
        let half = T::lit(0.5);
        for conn in mesh.elements() {
            for k in 0..4 {
                let (a, b) = (conn[k], conn[(k + 1) % 4]);
                if mesh.node(a)[0] == xmax && mesh.node(b)[0] == xmax {
                    let len = (mesh.node(b)[1] - mesh.node(a)[1]).abs();
                    let share = self.traction * self.thickness * len * half;
                    f[2 * a] += share;
                    f[2 * b] += share;
                }
            }
        }
        f
    }

    fn fixed_dofs(&self) -> Vec<usize> {
        self.fixed_nodes().iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect()
    }

    fn dof_bandwidth(&self) -> usize {
        2 * self.mesh.node_bandwidth() + 1
    }
}

const GP: f64 = 0.577_350_269_189_625_8;
const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Bilinear shape functions and their natural derivatives at (ξ, η).
pub(crate) fn shape<T: Real>(xi: T, eta: T) -> ([T; 4], [[T; 2]; 4]) {
    let q = T::lit(0.25);
    let mut n = [T::zero(); 4];
    let mut dn = [[T::zero(); 2]; 4];
    for a in 0..4 {
        let (xa, ea) = (T::lit(XI[a]), T::lit(ETA[a]));
        n[a] = q * (T::one() + xa * xi) * (T::one() + ea * eta);
        dn[a][0] = q * xa * (T::one() + ea * eta);
        dn[a][1] = q * ea * (T::one() + xa * xi);
    }
    (n, dn)
}

/// Physical shape-function gradients and det J at one Gauss point.
fn gradients<T: Real>(x: &[[T; 2]; 4], xi: T, eta: T) -> Result<([[T; 2]; 4], T)> {
    let (_, dn) = shape(xi, eta);
    let mut j = [[T::zero(); 2]; 2];
    for a in 0..4 {
        for r in 0..2 {
            for c in 0..2 {
                j[r][c] += dn[a][c] * x[a][r];
            }
        }
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !(det > T::zero()) {
        return Err(Error::numerical("element with nonpositive Jacobian"));
    }
    // ∂N/∂X = J⁻ᵀ ∂N/∂ξ with J[r][c] = ∂X_r/∂ξ_c
    let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    let mut g = [[T::zero(); 2]; 4];
    for a in 0..4 {
        for r in 0..2 {
            g[a][r] = dn[a][0] * inv[0][r] + dn[a][1] * inv[1][r];
        }
    }
    Ok((g, det))
}

fn element_coords<T: Real>(mesh: &Mesh<T>, e: usize) -> [[T; 2]; 4] {
    let c = mesh.element(e);
    let mut x = [[T::zero(); 2]; 4];
    for a in 0..4 {
        let p = mesh.node(c[a]);
        x[a] = [p[0], p[1]];
    }
    x
}

fn gauss_points<T: Real>() -> [(T, T); 4] {
    let g = T::lit(GP);
    [(-g, -g), (g, -g), (g, g), (-g, g)]
}

/// Linear-elastic element stiffness for unit Young's modulus.
pub fn unit_element_stiffness<T: Real>(mesh: &Mesh<T>, e: usize, nu: T, thickness: T) -> Result<[[T; 8]; 8]> {
    let x = element_coords(mesh, e);
    let f = T::one() / (T::one() - nu * nu);
    let d = [[f, f * nu, T::zero()], [f * nu, f, T::zero()], [T::zero(), T::zero(), f * (T::one() - nu) * T::lit(0.5)]];
    let mut k = [[T::zero(); 8]; 8];
    for (xi, eta) in gauss_points::<T>() {
        let (g, det) = gradients(&x, xi, eta)?;
        let mut b = [[T::zero(); 8]; 3];
        for a in 0..4 {
            b[0][2 * a] = g[a][0];
            b[1][2 * a + 1] = g[a][1];
            b[2][2 * a] = g[a][1];
            b[2][2 * a + 1] = g[a][0];
        }
        let s = det * thickness;
        for i in 0..8 {
            for j in 0..8 {
                let mut v = T::zero();
                for p in 0..3 {
                    for q in 0..3 {
                        v += b[p][i] * d[p][q] * b[q][j];
                    }
                }
                k[i][j] += v * s;
            }
        }
    }
    Ok(k)
}

/// Reusable linear-elastic solver: unit element matrices are computed once and
/// scaled by the element moduli for each solve.
#[derive(Debug, Clone)]
pub struct LinearElasticSolver<'a, T> {
    mesh: &'a Mesh<T>,
    unit: Vec<[[T; 8]; 8]>,
    force: Vec<T>,
    fixed: Vec<usize>,
    bandwidth: usize,
}

impl<'a, T: Real> LinearElasticSolver<'a, T> {
    /// Uses every field of the problem except the moduli.
    pub fn new(p: &PlaneStressProblem<'a, T>) -> Result<Self> {
        Self::build(p, p.mesh)
    }

    /// Solver for a mesh without element moduli at hand.
    pub fn for_mesh(mesh: &'a Mesh<T>, thickness: T, nu: T, traction: T) -> Result<Self> {
        let ones = vec![T::one(); mesh.n_elements()];
        Self::build(&PlaneStressProblem { mesh, thickness, nu, traction, modulus: &ones }, mesh)
    }

    fn build(p: &PlaneStressProblem<'_, T>, mesh: &'a Mesh<T>) -> Result<Self> {
        p.validate()?;
        let unit = (0..p.mesh.n_elements())
            .map(|e| unit_element_stiffness(p.mesh, e, p.nu, p.thickness))
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearElasticSolver {
            mesh,
            unit,
            force: p.external_force(),
            fixed: p.fixed_dofs(),
            bandwidth: p.dof_bandwidth(),
        })
    }

    pub fn external_force(&self) -> &[T] {
        &self.force
    }

    pub fn assemble(&self, modulus: &[T]) -> Result<BandedSpd<T>> {
        if modulus.len() != self.mesh.n_elements() {
            return Err(Error::shape("one modulus per element required"));
        }
        let mut k = BandedSpd::zeros(2 * self.mesh.n_nodes(), self.bandwidth);
        for (e, ke) in self.unit.iter().enumerate() {
            let c = self.mesh.element(e);
            let dofs = [2 * c[0], 2 * c[0] + 1, 2 * c[1], 2 * c[1] + 1, 2 * c[2], 2 * c[2] + 1, 2 * c[3], 2 * c[3] + 1];
            for i in 0..8 {
                for j in 0..8 {
                    if dofs[i] >= dofs[j] {
                        k.add(dofs[i], dofs[j], modulus[e] * ke[i][j])?;
                    }
                }
            }
        }
        Ok(k)
    }

    /// Displacements (node-major, x then y) for the given element moduli and
    /// load factor.
    pub fn solve(&self, modulus: &[T], load_factor: T) -> Result<Vec<T>> {
        if let Some(e) = modulus.iter().position(|&e| !(e > T::zero()) || !e.is_finite()) {
            return Err(Error::invalid(format!("element {e} has nonpositive Young's modulus")));
        }
        let mut k = self.assemble(modulus)?;
        let mut f: Vec<T> = self.force.iter().map(|&v| v * load_factor).collect();
        for &d in &self.fixed {
            k.constrain(d);
            f[d] = T::zero();
        }
        k.solve(&f)
    }
}

pub fn solve_plane_stress_le<T: Real>(p: &PlaneStressProblem<'_, T>) -> Result<Vec<T>> {
    LinearElasticSolver::new(p)?.solve(p.modulus, T::one())
}

/// Settings of the incremental Newton solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings<T> {
    pub increments: usize,
    pub max_iterations: usize,
    pub tolerance: T,
}

impl<T: Real> Default for NewtonSettings<T> {
    fn default() -> Self {
        NewtonSettings { increments: 10, max_iterations: 50, tolerance: T::lit(1e-8) }
    }
}

/// Incompressible Neo-Hookean plate in plane stress.
///
/// With C₃₃ = 1/det C the in-plane strain energy per reference volume is
/// W = A10 (tr C + 1/det C − 3), A10 = E/6, giving
/// S = 2 A10 (I − C⁻¹/det C) and the material tangent
/// ℂ = (4 A10/det C)(𝕀_{C⁻¹} + C⁻¹ ⊗ C⁻¹).
#[derive(Debug, Clone)]
pub struct NeoHookeanSolver<'a, T> {
    mesh: &'a Mesh<T>,
    a10: Vec<T>,
    thickness: T,
    force: Vec<T>,
    fixed: Vec<usize>,
    bandwidth: usize,
}

struct GaussState<T> {
    g: [[T; 2]; 4],
    w: T,
    f: [[T; 2]; 2],
    s: [[T; 2]; 2],
    c: [[[[T; 2]; 2]; 2]; 2],
}

impl<'a, T: Real> NeoHookeanSolver<'a, T> {
    pub fn new(p: &PlaneStressProblem<'a, T>) -> Result<Self> {
        p.validate()?;
        let sixth = T::lit(1.0 / 6.0);
        Ok(NeoHookeanSolver {
            mesh: p.mesh,
            a10: p.modulus.iter().map(|&e| e * sixth).collect(),
            thickness: p.thickness,
            force: p.external_force(),
            fixed: p.fixed_dofs(),
            bandwidth: p.dof_bandwidth(),
        })
    }

    pub fn external_force(&self) -> &[T] {
        &self.force
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed
    }

    fn states(&self, e: usize, u: &[T]) -> Result<Vec<GaussState<T>>> {
        let x = element_coords(self.mesh, e);
        let conn = self.mesh.element(e);
        let a10 = self.a10[e];
        let two = T::lit(2.0);
        let mut out = Vec::with_capacity(4);
        for (xi, eta) in gauss_points::<T>() {
            let (g, det) = gradients(&x, xi, eta)?;
            let mut f = [[T::one(), T::zero()], [T::zero(), T::one()]];
            for a in 0..4 {
                for i in 0..2 {
                    for j in 0..2 {
                        f[i][j] += u[2 * conn[a] + i] * g[a][j];
                    }
                }
            }
            let mut cm = [[T::zero(); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    cm[i][j] = f[0][i] * f[0][j] + f[1][i] * f[1][j];
                }
            }
            let dc = cm[0][0] * cm[1][1] - cm[0][1] * cm[1][0];
            if !(dc > T::zero()) || !dc.is_finite() {
                return Err(Error::numerical(format!("element {e}: inverted or degenerate deformation")));
            }
            let ci = [[cm[1][1] / dc, -cm[0][1] / dc], [-cm[1][0] / dc, cm[0][0] / dc]];
            let mut s = [[T::zero(); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let id = if i == j { T::one() } else { T::zero() };
                    s[i][j] = two * a10 * (id - ci[i][j] / dc);
                }
            }
            let k = T::lit(4.0) * a10 / dc;
            let half = T::lit(0.5);
            let mut c = [[[[T::zero(); 2]; 2]; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for kk in 0..2 {
                        for l in 0..2 {
                            c[i][j][kk][l] =
                                k * (half * (ci[i][kk] * ci[j][l] + ci[i][l] * ci[j][kk]) + ci[i][j] * ci[kk][l]);
                        }
                    }
                }
            }
            out.push(GaussState { g, w: det * self.thickness, f, s, c });
        }
        Ok(out)
    }

    /// Internal nodal forces f_int = ∫ F S ∇N dV.
    pub fn internal_force(&self, u: &[T]) -> Result<Vec<T>> {
        let mut r = vec![T::zero(); 2 * self.mesh.n_nodes()];
        for e in 0..self.mesh.n_elements() {
            let conn = self.mesh.element(e);
            for st in self.states(e, u)? {
                for a in 0..4 {
                    for i in 0..2 {
                        let mut v = T::zero();
                        for jj in 0..2 {
                            for kk in 0..2 {
                                v += st.f[i][jj] * st.s[jj][kk] * st.g[a][kk];
                            }
                        }
                        r[2 * conn[a] + i] += v * st.w;
                    }
                }
            }
        }
        Ok(r)
    }

    /// Consistent tangent of the internal force, with no constraints applied.
    pub fn tangent(&self, u: &[T]) -> Result<BandedSpd<T>> {
        let mut k = BandedSpd::zeros(2 * self.mesh.n_nodes(), self.bandwidth);
        for e in 0..self.mesh.n_elements() {
            let conn = self.mesh.element(e);
            let mut ke = [[T::zero(); 8]; 8];
            for st in self.states(e, u)? {
                for a in 0..4 {
                    for b in 0..4 {
                        let mut geo = T::zero();
                        for ii in 0..2 {
                            for jj in 0..2 {
                                geo += st.g[a][ii] * st.s[ii][jj] * st.g[b][jj];
                            }
                        }
                        for i in 0..2 {
                            for k2 in 0..2 {
                                let mut mat = T::zero();
                                for ii in 0..2 {
                                    for jj in 0..2 {
                                        let left = st.f[i][ii] * st.g[a][jj];
                                        if left == T::zero() {
                                            continue;
                                        }
                                        for kk in 0..2 {
                                            for ll in 0..2 {
                                                mat += left * st.c[ii][jj][kk][ll] * st.f[k2][kk] * st.g[b][ll];
                                            }
                                        }
                                    }
                                }
                                let v = if i == k2 { mat + geo } else { mat };
                                ke[2 * a + i][2 * b + k2] += v * st.w;
                            }
                        }
                    }
                }
            }
            let dofs = [2 * conn[0], 2 * conn[0] + 1, 2 * conn[1], 2 * conn[1] + 1, 2 * conn[2], 2 * conn[2] + 1, 2 * conn[3], 2 * conn[3] + 1];
            for i in 0..8 {
                for j in 0..8 {
                    if dofs[i] >= dofs[j] {
                        k.add(dofs[i], dofs[j], ke[i][j])?;
                    }
                }
            }
        }
        Ok(k)
    }

    /// Incremental Newton solution at the full load.
    pub fn solve(&self, settings: &NewtonSettings<T>) -> Result<Vec<T>> {
        let n = 2 * self.mesh.n_nodes();
        let mut u = vec![T::zero(); n];
        if self.force.iter().all(|&f| f == T::zero()) {
            return Ok(u);
        }
        if settings.increments == 0 {
            return Err(Error::invalid("at least one load increment is required"));
        }
        let mut free = vec![true; n];
        for &d in &self.fixed {
            free[d] = false;
        }
        let steps = T::from_usize_lossy(settings.increments);
        for step in 1..=settings.increments {
            let lambda = T::from_usize_lossy(step) / steps;
            let fext: Vec<T> = self.force.iter().map(|&f| f * lambda).collect();
            let fnorm = norm_free(&fext, &free);
            let mut converged = false;
            let mut last = T::infinity();
            for _ in 0..settings.max_iterations {
                let fint = self.internal_force(&u)?;
                let mut r: Vec<T> = fext.iter().zip(&fint).map(|(&a, &b)| a - b).collect();
                for (ri, &fr) in r.iter_mut().zip(&free) {
                    if !fr {
                        *ri = T::zero();
                    }
                }
                last = norm_free(&r, &free) / fnorm;
                if last < settings.tolerance {
                    converged = true;
                    break;
                }
                let mut k = self.tangent(&u)?;
                for &d in &self.fixed {
                    k.constrain(d);
                }
                let du = k.solve(&r)?;
                for (ui, di) in u.iter_mut().zip(&du) {
                    *ui += *di;
                }
            }
            if !converged {
                return Err(Error::numerical(format!(
                    "Newton did not converge in load increment {step}/{} (relative residual {last:e})",
                    settings.increments
                )));
            }
        }
        Ok(u)
    }
}

fn norm_free<T: Real>(v: &[T], free: &[bool]) -> T {
    v.iter().zip(free).filter(|(_, &f)| f).map(|(&x, _)| x * x).sum::<T>().sqrt()
}

pub fn solve_plane_stress_nh<T: Real>(p: &PlaneStressProblem<'_, T>, settings: &NewtonSettings<T>) -> Result<Vec<T>> {
    NeoHookeanSolver::new(p)?.solve(settings)
}
