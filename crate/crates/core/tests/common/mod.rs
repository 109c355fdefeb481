#![allow(dead_code)]

use sosrf::sos::{CertTerm, Certificate, Domain};
use sosrf::{PolyMatrix, Polynomial};

pub fn uni(c: &[f64]) -> Polynomial {
    Polynomial::univariate(c)
}

pub fn poly2(terms: &[([u32; 2], f64)]) -> Polynomial {
    let t: Vec<(Vec<u32>, f64)> = terms.iter().map(|(a, c)| (a.to_vec(), *c)).collect();
    Polynomial::from_terms(2, &t).unwrap()
}

/// [[t², t(t+1)], [t(t+1), (t+1)²]]
pub fn outer_t() -> PolyMatrix {
    let off = uni(&[0.0, 1.0, 1.0]);
    PolyMatrix::from_rows(vec![vec![uni(&[0.0, 0.0, 1.0]), off.clone()], vec![off, uni(&[1.0, 2.0, 1.0])]]).unwrap()
}

/// [[1 + x⁴y², xy], [xy, 1 + x²y⁴]]
pub fn xy_coupled() -> PolyMatrix {
    let xy = poly2(&[([1, 1], 1.0)]);
    PolyMatrix::from_rows(vec![
        vec![poly2(&[([0, 0], 1.0), ([4, 2], 1.0)]), xy.clone()],
        vec![xy, poly2(&[([0, 0], 1.0), ([2, 4], 1.0)])],
    ])
    .unwrap()
}

pub fn motzkin() -> Polynomial {
    poly2(&[([0, 0], 1.0), ([2, 4], 1.0), ([4, 2], 1.0), ([2, 2], -3.0)])
}

/// p²·f = (x²−y²)² + [xy(p−2)]² + [x²y(p−2)]² + [xy²(p−2)]² with p = x² + y².
pub fn motzkin_certificate() -> Certificate {
    let p = poly2(&[([2, 0], 1.0), ([0, 2], 1.0)]);
    let pm2 = &p - &Polynomial::constant(2, 2.0);
    let squares = vec![
        poly2(&[([2, 0], 1.0), ([0, 2], -1.0)]),
        &poly2(&[([1, 1], 1.0)]) * &pm2,
        &poly2(&[([2, 1], 1.0)]) * &pm2,
        &poly2(&[([1, 2], 1.0)]) * &pm2,
    ];
    let matrix = PolyMatrix::from_rows(squares.into_iter().map(|g| vec![g]).collect()).unwrap();
    Certificate { domain: Domain::Rn, multiplier: p, terms: vec![CertTerm { weight: Polynomial::one(2), matrix }], residual: 0.0 }
}

pub fn scalar(p: Polynomial) -> PolyMatrix {
    PolyMatrix::from_rows(vec![vec![p]]).unwrap()
}
