//! Truncated multivariate Taylor arithmetic ("jets").
//!
//! A [`Jet`] carries the Taylor coefficients of a scalar function at a point,
//! over `num_vars` variables and up to total degree `max_order` (at most 4).
//! Arithmetic and elementary functions propagate coefficients exactly, so
//! every mixed partial derivative up to `max_order` comes out to rounding
//! accuracy rather than truncation accuracy.
//!
//! Internal storage is raw Taylor coefficients (derivative divided by the
//! factorial of the multi-index); the factorial is reapplied when a partial
//! derivative is extracted. Multiplication is then a plain truncated
//! polynomial product.
//!
//! Jets of different `num_vars`/`max_order` never mix: the checked entry
//! points return an error and the operator impls panic. Lowering the order is
//! always explicit, via [`Jet::truncate`].

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

pub const MAX_SUPPORTED_ORDER: usize = 4;

/// Exponent vector of one Taylor monomial.
type MultiIndex = Vec<u8>;

/// Shared per-(num_vars, max_order) lookup tables: monomial enumeration in
/// graded lexicographic order, the truncated product pairing, and the
/// per-variable derivative relabelling.
struct IndexTable {
    num_vars: usize,
    max_order: usize,
    monomials: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
    /// Monomial count per degree cap: `count_up_to[d]` = #indices of degree <= d.
    count_up_to: Vec<usize>,
    /// (pos a, pos b, pos a+b) for every pair with deg a + deg b <= max_order.
    products: Vec<(u32, u32, u32)>,
    /// For each variable v: (pos in the order-(max_order-1) table, pos here,
    /// exponent factor) describing d/dv.
    derivatives: Vec<Vec<(u32, u32, f64)>>,
}

fn enumerate_monomials(num_vars: usize, max_order: usize) -> Vec<MultiIndex> {
    let mut by_degree: Vec<Vec<MultiIndex>> = vec![vec![vec![0u8; num_vars]]];
    for d in 1..=max_order {
        let mut level = Vec::new();
        for lower in &by_degree[d - 1] {
            // extend each degree-(d-1) monomial by one exponent, avoiding
            // duplicates by only bumping at or after the last nonzero slot
            let start = lower
                .iter()
                .rposition(|&e| e > 0)
                .map(|p| p)
                .unwrap_or(0);
            for v in start..num_vars {
                let mut next = lower.clone();
                next[v] += 1;
                level.push(next);
            }
        }
        by_degree.push(level);
    }
    let mut all: Vec<MultiIndex> = by_degree.into_iter().flatten().collect();
    // graded lexicographic: degree first, then lex
    all.sort_by(|a, b| {
        let (da, db) = (degree(a), degree(b));
        da.cmp(&db).then_with(|| a.cmp(b))
    });
    all
}

fn degree(m: &[u8]) -> usize {
    m.iter().map(|&e| e as usize).sum()
}

impl IndexTable {
    fn build(num_vars: usize, max_order: usize) -> IndexTable {
        let monomials = enumerate_monomials(num_vars, max_order);
        let position: HashMap<MultiIndex, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut count_up_to = vec![0usize; max_order + 1];
        for m in &monomials {
            for d in degree(m)..=max_order {
                count_up_to[d] += 1;
            }
        }

        let mut products = Vec::new();
        for (ia, ma) in monomials.iter().enumerate() {
            let da = degree(ma);
            for (ib, mb) in monomials.iter().enumerate() {
                if da + degree(mb) > max_order {
                    continue;
                }
                let sum: MultiIndex = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                let io = position[&sum];
                products.push((ia as u32, ib as u32, io as u32));
            }
        }

        let mut derivatives = vec![Vec::new(); num_vars];
        if max_order > 0 {
            let lower = enumerate_monomials(num_vars, max_order - 1);
            for v in 0..num_vars {
                let mut entries = Vec::new();
                for (new_pos, m) in lower.iter().enumerate() {
                    let mut bumped = m.clone();
                    bumped[v] += 1;
                    let old_pos = position[&bumped];
                    entries.push((new_pos as u32, old_pos as u32, f64::from(bumped[v])));
                }
                derivatives[v] = entries;
            }
        }

        IndexTable {
            num_vars,
            max_order,
            monomials,
            position,
            count_up_to,
            products,
            derivatives,
        }
    }
}

fn table(num_vars: usize, max_order: usize) -> Arc<IndexTable> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<IndexTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("jet table cache poisoned");
    guard
        .entry((num_vars, max_order))
        .or_insert_with(|| Arc::new(IndexTable::build(num_vars, max_order)))
        .clone()
}

/// Truncated Taylor expansion of a scalar function at a point.
#[derive(Clone)]
pub struct Jet {
    coeffs: Vec<f64>,
    table: Arc<IndexTable>,
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet")
            .field("num_vars", &self.num_vars())
            .field("max_order", &self.max_order())
            .field("value", &self.value())
            .finish()
    }
}

/// Operations accepted by [`Jet::apply`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    PowInt(i32),
    Sin,
    Cos,
    Exp,
    Log,
}

impl Jet {
    fn check_order(max_order: usize) -> Result<()> {
        if max_order < 1 || max_order > MAX_SUPPORTED_ORDER {
            return Err(Error::argument(format!(
                "max_order {max_order} outside supported range [1, {MAX_SUPPORTED_ORDER}]"
            )));
        }
        Ok(())
    }

    /// Jet of a constant (all derivatives zero).
    pub fn constant(value: f64, num_vars: usize, max_order: usize) -> Jet {
        let table = table(num_vars, max_order);
        let mut coeffs = vec![0.0; table.monomials.len()];
        coeffs[0] = value;
        Jet { coeffs, table }
    }

    /// Jet of the coordinate function `var_index` seeded at `value`:
    /// degree-0 coefficient is `value`, the first-order coefficient on
    /// `var_index` is 1, everything else is 0.
    pub fn variable(value: f64, var_index: usize, num_vars: usize, max_order: usize) -> Result<Jet> {
        Self::check_order(max_order)?;
        if var_index >= num_vars {
            return Err(Error::argument(format!(
                "variable index {var_index} out of range for {num_vars} variables"
            )));
        }
        let mut jet = Jet::constant(value, num_vars, max_order);
        let mut exponents = vec![0u8; num_vars];
        exponents[var_index] = 1;
        let pos = jet.table.position[&exponents];
        jet.coeffs[pos] = 1.0;
        Ok(jet)
    }

    pub fn num_vars(&self) -> usize {
        self.table.num_vars
    }

    pub fn max_order(&self) -> usize {
        self.table.max_order
    }

    /// Degree-0 coefficient, i.e. the plain value of the function.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    fn same_space(&self, other: &Jet) -> Result<()> {
        if self.num_vars() != other.num_vars() || self.max_order() != other.max_order() {
            return Err(Error::argument(format!(
                "jet space mismatch: ({}, {}) vs ({}, {})",
                self.num_vars(),
                self.max_order(),
                other.num_vars(),
                other.max_order()
            )));
        }
        Ok(())
    }

    /// Lowers the truncation order, dropping higher-degree coefficients.
    /// The graded monomial order makes this a prefix copy.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(
            order <= self.max_order(),
            "truncate cannot raise the order ({} -> {order})",
            self.max_order()
        );
        if order == self.max_order() {
            return self.clone();
        }
        let table = table(self.num_vars(), order);
        let keep = self.table.count_up_to[order];
        Jet {
            coeffs: self.coeffs[..keep].to_vec(),
            table,
        }
    }

    /// Jet of the partial derivative with respect to `var`, one order lower.
    pub fn derivative(&self, var: usize) -> Jet {
        assert!(var < self.num_vars(), "derivative variable out of range");
        assert!(self.max_order() >= 1, "cannot differentiate an order-0 jet");
        let new_table = table(self.num_vars(), self.max_order() - 1);
        let mut coeffs = vec![0.0; new_table.monomials.len()];
        for &(new_pos, old_pos, factor) in &self.table.derivatives[var] {
            coeffs[new_pos as usize] = self.coeffs[old_pos as usize] * factor;
        }
        Jet {
            coeffs,
            table: new_table,
        }
    }

    /// Extracts the mixed partial derivative named by a list of variable
    /// indices, e.g. `&[0, 1, 1]` for d^3/dv0 dv1^2. Factorial normalization
    /// is applied, so the result is the true derivative value. The empty list
    /// returns the plain value. Permuting the list never changes the result.
    pub fn partial(&self, vars: &[usize]) -> Result<f64> {
        if vars.len() > self.max_order() {
            return Err(Error::argument(format!(
                "requested derivative order {} exceeds jet order {}",
                vars.len(),
                self.max_order()
            )));
        }
        let mut exponents = vec![0u8; self.num_vars()];
        for &v in vars {
            if v >= self.num_vars() {
                return Err(Error::argument(format!(
                    "derivative variable {v} out of range for {} variables",
                    self.num_vars()
                )));
            }
            exponents[v] += 1;
        }
        let pos = self.table.position[&exponents];
        let mut factorial = 1.0;
        for &e in &exponents {
            for k in 2..=e {
                factorial *= f64::from(k);
            }
        }
        Ok(self.coeffs[pos] * factorial)
    }

    pub fn scale(&self, factor: f64) -> Jet {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= factor;
        }
        out
    }

    fn compose(&self, derivs: &[f64]) -> Jet {
        // f(u) = sum_k f^(k)(u0)/k! * (u - u0)^k; (u - u0) is nilpotent in
        // the truncated algebra so the sum stops at max_order.
        let mut nil = self.clone();
        nil.coeffs[0] = 0.0;
        let mut acc = Jet::constant(derivs[0], self.num_vars(), self.max_order());
        let mut power = Jet::constant(1.0, self.num_vars(), self.max_order());
        let mut factorial = 1.0;
        for (k, &d) in derivs.iter().enumerate().skip(1) {
            power = &power * &nil;
            factorial *= k as f64;
            if d != 0.0 {
                acc = &acc + &power.scale(d / factorial);
            }
        }
        acc
    }

    pub fn sqrt(&self) -> Result<Jet> {
        let u = self.value();
        if u <= 0.0 {
            return Err(Error::domain(format!("sqrt of nonpositive value {u}")));
        }
        let r = u.sqrt();
        let derivs = [
            r,
            0.5 / r,
            -0.25 / (r * u),
            0.375 / (r * u * u),
            -0.9375 / (r * u * u * u),
        ];
        Ok(self.compose(&derivs[..=self.max_order()]))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let derivs = [e; MAX_SUPPORTED_ORDER + 1];
        self.compose(&derivs[..=self.max_order()])
    }

    pub fn ln(&self) -> Result<Jet> {
        let u = self.value();
        if u <= 0.0 {
            return Err(Error::domain(format!("log of nonpositive value {u}")));
        }
        let derivs = [
            u.ln(),
            1.0 / u,
            -1.0 / (u * u),
            2.0 / (u * u * u),
            -6.0 / (u * u * u * u),
        ];
        Ok(self.compose(&derivs[..=self.max_order()]))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let derivs = [s, c, -s, -c, s];
        self.compose(&derivs[..=self.max_order()])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let derivs = [c, -s, -c, s, c];
        self.compose(&derivs[..=self.max_order()])
    }

    pub fn recip(&self) -> Result<Jet> {
        let u = self.value();
        if u == 0.0 {
            return Err(Error::domain("division by a zero-valued jet"));
        }
        let derivs = [
            1.0 / u,
            -1.0 / (u * u),
            2.0 / (u * u * u),
            -6.0 / (u * u * u * u),
            24.0 / (u * u * u * u * u),
        ];
        Ok(self.compose(&derivs[..=self.max_order()]))
    }

    pub fn div(&self, other: &Jet) -> Result<Jet> {
        self.same_space(other)?;
        Ok(self * &other.recip()?)
    }

    /// Integer power by repeated squaring; negative exponents go through the
    /// reciprocal and require a nonzero value.
    pub fn powi(&self, n: i32) -> Result<Jet> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut acc = Jet::constant(1.0, self.num_vars(), self.max_order());
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        Ok(acc)
    }

    /// Checked operation dispatch; operand spaces must match and domain
    /// restrictions (nonzero divisor, positive log argument, ...) are
    /// enforced.
    pub fn apply(op: JetOp, args: &[Jet]) -> Result<Jet> {
        let arity = match op {
            JetOp::Add | JetOp::Sub | JetOp::Mul | JetOp::Div => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(Error::argument(format!(
                "{op:?} expects {arity} operand(s), got {}",
                args.len()
            )));
        }
        for pair in args.windows(2) {
            pair[0].same_space(&pair[1])?;
        }
        match op {
            JetOp::Add => Ok(&args[0] + &args[1]),
            JetOp::Sub => Ok(&args[0] - &args[1]),
            JetOp::Mul => Ok(&args[0] * &args[1]),
            JetOp::Div => args[0].div(&args[1]),
            JetOp::Sqrt => args[0].sqrt(),
            JetOp::PowInt(n) => args[0].powi(n),
            JetOp::Sin => Ok(args[0].sin()),
            JetOp::Cos => Ok(args[0].cos()),
            JetOp::Exp => Ok(args[0].exp()),
            JetOp::Log => args[0].ln(),
        }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.same_space(rhs).expect("jet space mismatch in +");
        let mut out = self.clone();
        for (c, r) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *c += r;
        }
        out
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.same_space(rhs).expect("jet space mismatch in -");
        let mut out = self.clone();
        for (c, r) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *c -= r;
        }
        out
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.same_space(rhs).expect("jet space mismatch in *");
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(ia, ib, io) in &self.table.products {
            coeffs[io as usize] += self.coeffs[ia as usize] * rhs.coeffs[ib as usize];
        }
        Jet {
            coeffs,
            table: self.table.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn seed_variable_coordinate_function() {
        let jet = Jet::variable(2.0, 0, 2, 2).unwrap();
        assert_eq!(jet.value(), 2.0);
        assert_eq!(jet.partial(&[0]).unwrap(), 1.0);
        assert_eq!(jet.partial(&[1]).unwrap(), 0.0);
        assert_eq!(jet.partial(&[0, 0]).unwrap(), 0.0);
        assert_eq!(jet.partial(&[0, 1]).unwrap(), 0.0);
        assert_eq!(jet.partial(&[1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn seed_variable_order_one() {
        let jet = Jet::variable(0.0, 1, 2, 1).unwrap();
        assert_eq!(jet.value(), 0.0);
        assert_eq!(jet.partial(&[0]).unwrap(), 0.0);
        assert_eq!(jet.partial(&[1]).unwrap(), 1.0);
    }

    #[test]
    fn seed_variable_rejects_bad_index() {
        assert!(Jet::variable(1.0, 3, 2, 2).is_err());
        assert!(Jet::variable(1.0, 0, 2, 0).is_err());
        assert!(Jet::variable(1.0, 0, 2, 5).is_err());
    }

    #[test]
    fn cube_derivatives() {
        let u = Jet::variable(2.0, 0, 1, 3).unwrap();
        let cube = u.powi(3).unwrap();
        assert_relative_eq!(cube.value(), 8.0);
        assert_relative_eq!(cube.partial(&[0]).unwrap(), 12.0);
        assert_relative_eq!(cube.partial(&[0, 0]).unwrap(), 12.0);
        assert_relative_eq!(cube.partial(&[0, 0, 0]).unwrap(), 6.0);
    }

    #[test]
    fn sine_at_zero() {
        let u = Jet::variable(0.0, 0, 1, 3).unwrap();
        let s = u.sin();
        assert_relative_eq!(s.value(), 0.0);
        assert_relative_eq!(s.partial(&[0]).unwrap(), 1.0);
        assert_relative_eq!(s.partial(&[0, 0]).unwrap(), 0.0);
        assert_relative_eq!(s.partial(&[0, 0, 0]).unwrap(), -1.0);
    }

    #[test]
    fn mixed_partial_of_product() {
        // f(a, b) = a * b^2 at (3, 2): d^3 f / da db^2 = 2
        let a = Jet::variable(3.0, 0, 2, 3).unwrap();
        let b = Jet::variable(2.0, 1, 2, 3).unwrap();
        let f = &a * &b.powi(2).unwrap();
        assert_relative_eq!(f.value(), 12.0);
        assert_relative_eq!(f.partial(&[0, 1, 1]).unwrap(), 2.0);
        // permutation invariance
        assert_relative_eq!(f.partial(&[1, 0, 1]).unwrap(), 2.0);
        assert_relative_eq!(f.partial(&[1, 1, 0]).unwrap(), 2.0);
    }

    #[test]
    fn empty_partial_returns_value() {
        let u = Jet::variable(1.5, 0, 2, 2).unwrap();
        let f = u.exp();
        assert_eq!(f.partial(&[]).unwrap(), f.value());
    }

    #[test]
    fn partial_rejects_excess_degree() {
        let u = Jet::variable(1.0, 0, 2, 2).unwrap();
        assert!(u.partial(&[0, 0, 0]).is_err());
        assert!(u.partial(&[2]).is_err());
    }

    #[test]
    fn apply_checks_spaces_and_domains() {
        let a = Jet::variable(1.0, 0, 2, 2).unwrap();
        let b = Jet::variable(1.0, 0, 2, 3).unwrap();
        assert!(Jet::apply(JetOp::Add, &[a.clone(), b]).is_err());
        let zero = Jet::constant(0.0, 2, 2);
        assert!(Jet::apply(JetOp::Div, &[a.clone(), zero.clone()]).is_err());
        assert!(Jet::apply(JetOp::Log, &[zero.clone()]).is_err());
        assert!(Jet::apply(JetOp::Sqrt, &[zero.scale(-1.0)]).is_err());
    }

    #[test]
    fn derivative_jet_shifts_coefficients() {
        // f = x^2 y at (1, 2); df/dx = 2xy: value 4, d/dx = 2y = 4, d/dy = 2x = 2
        let x = Jet::variable(1.0, 0, 2, 3).unwrap();
        let y = Jet::variable(2.0, 1, 2, 3).unwrap();
        let f = &(&x * &x) * &y;
        let fx = f.derivative(0);
        assert_eq!(fx.max_order(), 2);
        assert_relative_eq!(fx.value(), 4.0);
        assert_relative_eq!(fx.partial(&[0]).unwrap(), 4.0);
        assert_relative_eq!(fx.partial(&[1]).unwrap(), 2.0);
    }

    #[test]
    fn truncate_is_prefix() {
        let x = Jet::variable(1.3, 0, 3, 4).unwrap();
        let f = x.exp();
        let t = f.truncate(2);
        assert_eq!(t.max_order(), 2);
        assert_relative_eq!(t.value(), f.value());
        assert_relative_eq!(t.partial(&[0, 0]).unwrap(), f.partial(&[0, 0]).unwrap());
    }

    #[test]
    fn quotient_matches_closed_form() {
        // f = sin(x)/x at x = 0.7
        let x = Jet::variable(0.7, 0, 1, 4).unwrap();
        let f = x.sin().div(&x).unwrap();
        let v: f64 = 0.7;
        assert_relative_eq!(f.value(), v.sin() / v, epsilon = 1e-14);
        let d1 = (v.cos() * v - v.sin()) / (v * v);
        assert_relative_eq!(f.partial(&[0]).unwrap(), d1, epsilon = 1e-13);
    }
}
