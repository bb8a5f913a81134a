use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::linalg::BandedSpd;
use crate::scalar::Real;

/// Axially loaded bar, fixed at its first node, point load at the last node.
#[derive(Debug, Clone)]
pub struct BarProblem<'a, T> {
    pub mesh: &'a Mesh<T>,
    pub area: T,
    pub load: T,
    pub modulus: &'a [T],
}

/// Nodal displacements of the bar under linear two-node elements.
pub fn solve_bar<T: Real>(p: &BarProblem<'_, T>) -> Result<Vec<T>> {
    let mesh = p.mesh;
    if mesh.dim() != 1 {
        return Err(Error::invalid("bar problem needs a 1D mesh"));
    }
    if p.modulus.len() != mesh.n_elements() {
        return Err(Error::shape(format!(
            "{} moduli for {} elements",
            p.modulus.len(),
            mesh.n_elements()
        )));
    }
    if !(p.area > T::zero()) {
        return Err(Error::invalid("cross-section area must be positive"));
    }
    if let Some(e) = p.modulus.iter().position(|&e| !(e > T::zero()) || !e.is_finite()) {
        return Err(Error::invalid(format!("element {e} has nonpositive Young's modulus")));
    }
    let n = mesh.n_nodes();
    if p.load == T::zero() {
        return Ok(vec![T::zero(); n]);
    }
    let mut k = BandedSpd::zeros(n, mesh.node_bandwidth().max(1));
    for (e, conn) in mesh.elements().iter().enumerate() {
        let ke = p.modulus[e] * p.area / mesh.element_size(e);
        let (a, b) = (conn[0], conn[1]);
        k.add(a, a, ke)?;
        k.add(b, b, ke)?;
        k.add(a.max(b), a.min(b), -ke)?;
    }
    let fixed = (0..n)
        .min_by(|&i, &j| mesh.node(i)[0].partial_cmp(&mesh.node(j)[0]).unwrap())
        .expect("nonempty mesh");
    let tip = (0..n)
        .max_by(|&i, &j| mesh.node(i)[0].partial_cmp(&mesh.node(j)[0]).unwrap())
        .expect("nonempty mesh");
    let mut f = vec![T::zero(); n];
    f[tip] = p.load;
    k.constrain(fixed);
    f[fixed] = T::zero();
    k.solve(&f)
}
