use super::Material;

pub type ElementMatrix = [[f64; 8]; 8];

/// Plane-stress constitutive matrix `D` for modulus `e` and Poisson's ratio `nu`.
pub fn constitutive_matrix(e: f64, nu: f64) -> [[f64; 3]; 3] {
    let c = e / (1.0 - nu * nu);
    [
        [c, c * nu, 0.0],
        [c * nu, c, 0.0],
        [0.0, 0.0, c * (1.0 - nu) / 2.0],
    ]
}

/// Closed-form stiffness of a unit square Q4 element with modulus `material.e0`.
///
/// DOF order is `[x, y]` per node, nodes counterclockwise from lower-left.
pub fn element_stiffness(material: &Material) -> ElementMatrix {
    unit_stiffness(material.nu).map(|row| row.map(|v| v * material.e0))
}

/// Stiffness of the unit-modulus element.
pub(crate) fn unit_stiffness(nu: f64) -> ElementMatrix {
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    let s = 1.0 / (1.0 - nu * nu);
    let idx: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let mut out = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            out[i][j] = s * k[idx[i][j]];
        }
    }
    out
}

/// Strain-displacement matrix `B` at the element center, mapping the 8 element
/// DOFs to `[eps_x, eps_y, gamma_xy]`.
pub fn strain_displacement_center() -> [[f64; 8]; 3] {
    // Natural coordinates of LL, LR, UR, UL; at the center dN/dx = xi/2, dN/dy = eta/2.
    let xi = [-1.0, 1.0, 1.0, -1.0];
    let eta = [-1.0, -1.0, 1.0, 1.0];
    let mut b = [[0.0; 8]; 3];
    for n in 0..4 {
        let dx = xi[n] / 2.0;
        let dy = eta[n] / 2.0;
        b[0][2 * n] = dx;
        b[1][2 * n + 1] = dy;
        b[2][2 * n] = dy;
        b[2][2 * n + 1] = dx;
    }
    b
}

#[inline]
pub(crate) fn quad_form(k: &ElementMatrix, u: &[f64; 8]) -> f64 {
    let mut acc = 0.0;
    for i in 0..8 {
        let mut row = 0.0;
        for j in 0..8 {
            row += k[i][j] * u[j];
        }
        acc += u[i] * row;
    }
    acc
}
