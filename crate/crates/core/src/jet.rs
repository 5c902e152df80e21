//! Truncated multivariate Taylor polynomials ("jets").
//!
//! A [`Jet`] stores the Taylor coefficients `c_α` of a smooth function around a
//! base point, `f(x0 + h) = Σ_{|α| ≤ R} c_α h^α`, for at most three variables
//! and order `R ≤ 4`. Arithmetic is truncated at order `R`, so compositions of
//! jets reproduce every partial derivative up to order `R` exactly (up to
//! rounding). This is the engine behind the von Mises chain rules.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest supported number of variables.
pub const MAX_DIM: usize = 3;
/// Largest supported truncation order.
pub const MAX_ORDER: usize = 4;

/// Monomial layout and multiplication table for one `(dim, order)` pair.
#[derive(Debug)]
pub struct JetSpace {
    dim: usize,
    order: usize,
    exps: Vec<[u8; MAX_DIM]>,
    degree: Vec<u8>,
    /// `(i, j, k)`: monomial `i` times monomial `j` is monomial `k`.
    mul: Vec<(u16, u16, u16)>,
    /// `α!` per monomial.
    factorial: Vec<f64>,
    /// For every monomial of degree ≥ 1: (first nonzero variable, index of α − e_var).
    parent: Vec<(usize, usize)>,
}

impl JetSpace {
    fn build(dim: usize, order: usize) -> Self {
        let mut exps = Vec::new();
        for deg in 0..=order {
            // graded, lexicographically descending in the first variable
            let mut cur = Vec::new();
            gen_exps(dim, deg, 0, [0; MAX_DIM], &mut cur);
            exps.extend(cur);
        }
        let degree: Vec<u8> = exps.iter().map(|e| e.iter().sum()).collect();
        let find = |e: &[u8; MAX_DIM]| exps.iter().position(|x| x == e);
        let mut mul = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if (degree[i] + degree[j]) as usize > order {
                    continue;
                }
                let mut s = [0u8; MAX_DIM];
                for d in 0..MAX_DIM {
                    s[d] = a[d] + b[d];
                }
                let k = find(&s).expect("monomial closed under product");
                mul.push((i as u16, j as u16, k as u16));
            }
        }
        let factorial = exps
            .iter()
            .map(|e| e.iter().map(|&a| fact(a as usize)).product())
            .collect();
        let parent = exps
            .iter()
            .map(|e| {
                if let Some(v) = e.iter().position(|&a| a > 0) {
                    let mut p = *e;
                    p[v] -= 1;
                    (v, find(&p).unwrap())
                } else {
                    (usize::MAX, usize::MAX)
                }
            })
            .collect();
        JetSpace {
            dim,
            order,
            exps,
            degree,
            mul,
            factorial,
            parent,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[[u8; MAX_DIM]] {
        &self.exps
    }

    /// Index of the monomial with the given exponents, if it is within the order.
    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        let mut e = [0u8; MAX_DIM];
        for (d, &a) in alpha.iter().enumerate().take(self.dim) {
            e[d] = a;
        }
        self.exps.iter().position(|x| *x == e)
    }
}

fn gen_exps(dim: usize, remaining: usize, var: usize, cur: [u8; MAX_DIM], out: &mut Vec<[u8; MAX_DIM]>) {
    if var + 1 == dim {
        let mut e = cur;
        e[var] = remaining as u8;
        out.push(e);
        return;
    }
    for a in (0..=remaining).rev() {
        let mut e = cur;
        e[var] = a as u8;
        gen_exps(dim, remaining - a, var + 1, e, out);
    }
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shared layout for `dim ∈ 1..=3`, `order ∈ 0..=4`.
pub fn space(dim: usize, order: usize) -> &'static JetSpace {
    static SPACES: OnceLock<Vec<JetSpace>> = OnceLock::new();
    assert!((1..=MAX_DIM).contains(&dim), "jet dimension {dim} unsupported");
    assert!(order <= MAX_ORDER, "jet order {order} unsupported");
    let spaces = SPACES.get_or_init(|| {
        let mut v = Vec::new();
        for d in 1..=MAX_DIM {
            for r in 0..=MAX_ORDER {
                v.push(JetSpace::build(d, r));
            }
        }
        v
    });
    &spaces[(dim - 1) * (MAX_ORDER + 1) + order]
}

/// Truncated Taylor polynomial around a base point.
#[derive(Clone, Debug)]
pub struct Jet {
    space: &'static JetSpace,
    c: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.space, other.space) && self.c == other.c
    }
}

impl Jet {
    pub fn zero(dim: usize, order: usize) -> Self {
        let space = space(dim, order);
        Jet {
            space,
            c: vec![0.0; space.len()],
        }
    }

    pub fn constant(dim: usize, order: usize, value: f64) -> Self {
        let mut j = Self::zero(dim, order);
        j.c[0] = value;
        j
    }

    /// The coordinate function `x_var` expanded around `base`.
    pub fn variable(dim: usize, order: usize, var: usize, base: f64) -> Self {
        let mut j = Self::constant(dim, order, base);
        if order >= 1 {
            let mut e = [0u8; MAX_DIM];
            e[var] = 1;
            let idx = j.space.index_of(&e[..dim]).unwrap();
            j.c[idx] = 1.0;
        }
        j
    }

    /// Build a jet from partial derivatives `∂^α f(x0)` listed in the space's monomial order.
    pub fn from_derivatives(dim: usize, order: usize, derivs: &[f64]) -> Self {
        let space = space(dim, order);
        assert_eq!(derivs.len(), space.len());
        let c = derivs
            .iter()
            .zip(&space.factorial)
            .map(|(d, f)| d / f)
            .collect();
        Jet { space, c }
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Partial derivative `∂^α f(x0)`; zero beyond the truncation order.
    pub fn derivative(&self, alpha: &[u8]) -> f64 {
        match self.space.index_of(alpha) {
            Some(i) => self.c[i] * self.space.factorial[i],
            None => 0.0,
        }
    }

    /// All partial derivatives in monomial order.
    pub fn derivatives(&self) -> Vec<f64> {
        self.c
            .iter()
            .zip(&self.space.factorial)
            .map(|(c, f)| c * f)
            .collect()
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let mut e = [0u8; MAX_DIM];
                e[i] = 1;
                self.derivative(&e[..self.dim()])
            })
            .collect()
    }

    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut e = [0u8; MAX_DIM];
                        e[i] += 1;
                        e[j] += 1;
                        self.derivative(&e[..d])
                    })
                    .collect()
            })
            .collect()
    }

    /// Frobenius norm of the full (symmetric) tensor of `m`-th derivatives.
    pub fn tensor_norm(&self, m: usize) -> f64 {
        let sp = self.space;
        let mut s = 0.0;
        for i in 0..sp.len() {
            if sp.degree[i] as usize != m {
                continue;
            }
            let d = self.c[i] * sp.factorial[i];
            // number of ordered index tuples with this multi-index
            let mult = fact(m) / sp.factorial[i];
            s += mult * d * d;
        }
        s.sqrt()
    }

    /// Sum of `|∂^β f|` over distinct multi-indices with `|β| = m`.
    pub fn multi_index_sum(&self, m: usize) -> f64 {
        let sp = self.space;
        sp.degree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d as usize == m)
            .map(|(i, _)| (self.c[i] * sp.factorial[i]).abs())
            .sum()
    }

    /// Same coefficients truncated to a lower order.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(order <= self.order());
        let target = space(self.dim(), order);
        let c = target
            .exps
            .iter()
            .map(|e| self.c[self.space.index_of(&e[..self.dim()]).unwrap()])
            .collect();
        Jet { space: target, c }
    }

    /// Partial derivative in variable `var` as a jet of one order less.
    pub fn diff(&self, var: usize) -> Jet {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let dim = self.dim();
        let target = space(dim, self.order() - 1);
        let c = target
            .exps
            .iter()
            .map(|e| {
                let mut up = *e;
                up[var] += 1;
                let i = self.space.index_of(&up[..dim]).unwrap();
                (e[var] as f64 + 1.0) * self.c[i]
            })
            .collect();
        Jet { space: target, c }
    }

    /// Laplacian as a jet of two orders less.
    pub fn laplacian(&self) -> Jet {
        let mut out = Jet::zero(self.dim(), self.order() - 2);
        for v in 0..self.dim() {
            out = &out + &self.diff(v).diff(v);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            space: self.space,
            c: self.c.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add_const(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }

    /// `g ∘ self` for a scalar function `g` with Taylor coefficients
    /// `series[j] = g^{(j)}(f(x0)) / j!`.
    pub fn map_series(&self, series: &[f64]) -> Jet {
        let order = self.order();
        assert!(series.len() > order);
        let h = self.add_const(-self.c[0]);
        let mut out = Jet::constant(self.dim(), order, series[0]);
        let mut pow = Jet::constant(self.dim(), order, 1.0);
        for &coef in series.iter().take(order + 1).skip(1) {
            pow = &pow * &h;
            out = &out + &pow.scale(coef);
        }
        out
    }

    pub fn recip(&self) -> Result<Jet> {
        let a = self.c[0];
        if a == 0.0 || !a.is_finite() {
            return Err(Error::Degenerate(format!("reciprocal of jet with value {a}")));
        }
        let series: Vec<f64> = (0..=self.order())
            .map(|j| (-1f64).powi(j as i32) / a.powi(j as i32 + 1))
            .collect();
        Ok(self.map_series(&series))
    }

    pub fn sqrt(&self) -> Result<Jet> {
        let a = self.c[0];
        if a <= 0.0 {
            return Err(Error::Degenerate(format!("square root of jet with value {a}")));
        }
        let mut series = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        for j in 0..=self.order() {
            if j > 0 {
                binom *= (0.5 - (j as f64 - 1.0)) / j as f64;
            }
            series.push(binom * a.powf(0.5 - j as f64));
        }
        Ok(self.map_series(&series))
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut out = Jet::constant(self.dim(), self.order(), 1.0);
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    /// Substitute `h_i → inner[i]`, where every `inner[i]` is a jet without
    /// constant term in a (possibly different) set of variables.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        assert_eq!(inner.len(), self.dim());
        let target = inner[0].space;
        for j in inner {
            assert!(std::ptr::eq(j.space, target), "inner jets must share a space");
            debug_assert!(j.c[0].abs() < 1e-300, "inner jets must vanish at the base point");
        }
        let sp = self.space;
        let mut monos: Vec<Jet> = Vec::with_capacity(sp.len());
        let mut out = Jet {
            space: target,
            c: vec![0.0; target.len()],
        };
        for i in 0..sp.len() {
            let m = if i == 0 {
                Jet::constant(target.dim, target.order, 1.0)
            } else {
                let (v, p) = sp.parent[i];
                &monos[p] * &inner[v]
            };
            if self.c[i] != 0.0 {
                for (o, x) in out.c.iter_mut().zip(&m.c) {
                    *o += self.c[i] * x;
                }
            }
            monos.push(m);
        }
        out
    }

    /// Evaluate the Taylor polynomial at offset `h`.
    pub fn eval(&self, h: &[f64]) -> f64 {
        self.space
            .exps
            .iter()
            .zip(&self.c)
            .map(|(e, c)| {
                let mut t = *c;
                for d in 0..self.dim() {
                    t *= h[d].powi(e[d] as i32);
                }
                t
            })
            .sum()
    }
}

/// Linear part (Jacobian) of a vector of jets: `J[i][j] = ∂_j map_i`.
pub fn jacobian(map: &[Jet]) -> Vec<Vec<f64>> {
    map.iter().map(|j| j.gradient()).collect()
}

/// Invert a local diffeomorphism given as jets `y_i(x0 + h)`.
///
/// Returns jets `h_i(k)` (no constant term) in the new variables `k = y − y0`
/// such that `y(x0 + h(k)) = y0 + k` to the truncation order.
pub fn invert_map(map: &[Jet]) -> Result<Vec<Jet>> {
    let dim = map.len();
    let order = map[0].order();
    let jac = jacobian(map);
    let inv = invert_matrix(&jac)?;
    // nonlinear remainder y(x0 + h) − y0 − J h
    let nonlinear: Vec<Jet> = map
        .iter()
        .map(|j| {
            let mut r = j.clone();
            r.c[0] = 0.0;
            for v in 0..dim {
                let mut e = [0u8; MAX_DIM];
                e[v] = 1;
                if order >= 1 {
                    let i = r.space.index_of(&e[..dim]).unwrap();
                    r.c[i] = 0.0;
                }
            }
            r
        })
        .collect();
    let k: Vec<Jet> = (0..dim).map(|v| Jet::variable(dim, order, v, 0.0)).collect();
    let apply_inv = |rhs: &[Jet]| -> Vec<Jet> {
        (0..dim)
            .map(|i| {
                let mut acc = Jet::zero(dim, order);
                for (j, r) in rhs.iter().enumerate() {
                    acc = &acc + &r.scale(inv[i][j]);
                }
                acc
            })
            .collect()
    };
    let mut h = apply_inv(&k);
    for _ in 1..order {
        let rem: Vec<Jet> = nonlinear.iter().map(|n| n.compose(&h)).collect();
        let rhs: Vec<Jet> = k.iter().zip(&rem).map(|(a, b)| a - b).collect();
        h = apply_inv(&rhs);
    }
    Ok(h)
}

pub(crate) fn invert_matrix(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = m.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let det = mat.determinant();
    if det.abs() < 1e-14 || !det.is_finite() {
        return Err(Error::Degenerate(format!("singular Jacobian (det = {det:e})")));
    }
    let inv = mat
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular Jacobian".into()))?;
    Ok((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}

pub(crate) fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]).determinant()
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, rhs.space));
        Jet {
            space: self.space,
            c: self.c.iter().zip(&rhs.c).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, rhs.space));
        Jet {
            space: self.space,
            c: self.c.iter().zip(&rhs.c).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, rhs.space));
        let mut c = vec![0.0; self.c.len()];
        for &(i, j, k) in &self.space.mul {
            c[k as usize] += self.c[i as usize] * rhs.c[j as usize];
        }
        Jet { space: self.space, c }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}
