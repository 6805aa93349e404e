//! Symmetric positive-weight cubature on the reference tetrahedron.
//!
//! Points are barycentric coordinates and weights are normalized to sum to
//! one, so `sum_q w_q f(x_q) * |T|` approximates `int_T f`.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Quadrature {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub order: usize,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Cheapest tabulated rule exact to at least `order` (1..=6).
///
/// Orders 3 to 5 share the 14-point degree-5 rule since the lower-degree
/// symmetric rules on the tetrahedron carry a negative weight.
pub fn quadrature_rule(order: usize) -> Result<Quadrature> {
    let mut q = Quadrature {
        points: Vec::new(),
        weights: Vec::new(),
        order: 0,
    };
    match order {
        1 => {
            push_s4(&mut q, 1.0);
            q.order = 1;
        }
        2 => {
            push_s31(&mut q, 0.138_196_601_125_010_5, 0.25);
            q.order = 2;
        }
        3..=5 => {
            push_s31(&mut q, 0.092_735_250_310_891_2, 0.073_493_043_116_361_96);
            push_s31(&mut q, 0.310_885_919_263_300_6, 0.112_687_925_718_015_84);
            push_s22(&mut q, 0.045_503_704_125_649_6, 0.042_546_020_777_081_47);
            q.order = 5;
        }
        6 => {
            push_s31(&mut q, 0.214_602_871_259_151_68, 0.039_922_750_258_167_87);
            push_s31(&mut q, 0.040_673_958_534_611_34, 0.010_077_211_055_320_66);
            push_s31(&mut q, 0.322_337_890_142_275_65, 0.055_357_181_543_654_39);
            push_s211(
                &mut q,
                0.063_661_001_875_017_53,
                0.269_672_331_458_315_9,
                0.048_214_285_714_285_71,
            );
            q.order = 6;
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "no tetrahedral quadrature for order {order} (supported 1..=6)"
            )))
        }
    }
    Ok(q)
}

fn push_s4(q: &mut Quadrature, w: f64) {
    q.points.push([0.25; 4]);
    q.weights.push(w);
}

fn push_s31(q: &mut Quadrature, a: f64, w: f64) {
    let b = 1.0 - 3.0 * a;
    for k in 0..4 {
        let mut p = [a; 4];
        p[k] = b;
        q.points.push(p);
        q.weights.push(w);
    }
}

fn push_s22(q: &mut Quadrature, a: f64, w: f64) {
    let b = 0.5 - a;
    for i in 0..4 {
        for j in i + 1..4 {
            let mut p = [b; 4];
            p[i] = a;
            p[j] = a;
            q.points.push(p);
            q.weights.push(w);
        }
    }
}

fn push_s211(q: &mut Quadrature, a: f64, b: f64, w: f64) {
    let c = 1.0 - 2.0 * a - b;
    for i in 0..4 {
        for j in 0..4 {
            if j == i {
                continue;
            }
            let mut p = [a; 4];
            p[i] = b;
            p[j] = c;
            q.points.push(p);
            q.weights.push(w);
        }
    }
}
