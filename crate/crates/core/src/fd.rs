//! Finite-difference evaluation of the geometry tensors.
//!
//! Each tensor's outermost derivative operators are replaced by central
//! differences of exactly-computed (jet-path) sub-tensors at displaced
//! samples; only the fundamental tensor differentiates raw F^2 values. This
//! keeps one finite-difference layer per tensor, which is both an honest
//! independent check of the jet-path derivative steps and accurate enough
//! (error ~ h^2) to serve as an alternate evaluation mode.

use crate::error::Result;
use crate::finsler::{FinslerStructure, TangentSample};
use crate::geometry::{self, CurvatureTensors};
use crate::tensor::{IndexInfo, TensorValue};

pub const DEFAULT_STEP: f64 = 1e-4;

fn f2(structure: &FinslerStructure, sample: &TangentSample) -> Result<f64> {
    let f = structure.evaluate_f(sample)?;
    Ok(f * f)
}

/// g_ij by second central differences of F^2 in y.
pub fn fundamental_tensor(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
) -> Result<TensorValue> {
    let n = structure.dimension();
    let center = f2(structure, sample)?;
    let mut g = TensorValue::zeros(
        vec![n, n],
        vec![IndexInfo::lower("i"), IndexInfo::lower("j")],
    );
    for i in 0..n {
        let plus = f2(structure, &sample.displaced(n + i, h))?;
        let minus = f2(structure, &sample.displaced(n + i, -h))?;
        g.set(&[i, i], 0.5 * (plus - 2.0 * center + minus) / (h * h));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let pp = f2(structure, &sample.displaced(n + i, h).displaced(n + j, h))?;
            let pm = f2(structure, &sample.displaced(n + i, h).displaced(n + j, -h))?;
            let mp = f2(structure, &sample.displaced(n + i, -h).displaced(n + j, h))?;
            let mm = f2(structure, &sample.displaced(n + i, -h).displaced(n + j, -h))?;
            let v = 0.5 * (pp - pm - mp + mm) / (4.0 * h * h);
            g.set(&[i, j], v);
            g.set(&[j, i], v);
        }
    }
    Ok(g)
}

pub fn metric_inverse(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
) -> Result<TensorValue> {
    let g = fundamental_tensor(structure, sample, h)?;
    let inv = g
        .as_matrix()
        .try_inverse()
        .ok_or_else(|| {
            crate::error::Error::singular("finite-difference fundamental tensor not invertible")
                .at_sample(&sample.x, &sample.y)
        })?;
    Ok(TensorValue::from_fn(
        g.shape().to_vec(),
        vec![IndexInfo::upper("i"), IndexInfo::upper("j")],
        |idx| inv[(idx[0], idx[1])],
    ))
}

/// Central difference of a jet-exact tensor-valued function along one of the
/// 2n coordinates.
fn central_tensor(
    eval: &dyn Fn(&TangentSample) -> Result<TensorValue>,
    sample: &TangentSample,
    var: usize,
    h: f64,
) -> Result<TensorValue> {
    let plus = eval(&sample.displaced(var, h))?;
    let minus = eval(&sample.displaced(var, -h))?;
    Ok(plus.add(&minus.scale(-1.0)).scale(0.5 / h))
}

/// C_ijk = 1/2 d(g_ij)/dy^k with jet-exact g at the displaced samples.
pub fn cartan_tensor(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
) -> Result<TensorValue> {
    let n = structure.dimension();
    let eval = |s: &TangentSample| geometry::fundamental_tensor(structure, s);
    let mut c = TensorValue::zeros(
        vec![n, n, n],
        vec![
            IndexInfo::lower("i"),
            IndexInfo::lower("j"),
            IndexInfo::lower("k"),
        ],
    );
    for k in 0..n {
        let d = central_tensor(&eval, sample, n + k, h)?;
        for i in 0..n {
            for j in 0..n {
                c.set(&[i, j, k], 0.5 * d.get(&[i, j]));
            }
        }
    }
    Ok(c)
}

/// G^i = 1/4 g^il (y^k d^2 F^2/dy^l dx^k - dF^2/dx^l) with the second mixed
/// derivative taken by four-point differences on F^2.
pub fn spray_coefficients(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
) -> Result<TensorValue> {
    let n = structure.dimension();
    let g = geometry::fundamental_tensor(structure, sample)?;
    let g_inv = g.as_matrix().try_inverse().ok_or_else(|| {
        crate::error::Error::singular("fundamental tensor not invertible")
            .at_sample(&sample.x, &sample.y)
    })?;
    let mut rhs = vec![0.0; n];
    for l in 0..n {
        let mut acc = 0.0;
        for k in 0..n {
            let pp = f2(structure, &sample.displaced(n + l, h).displaced(k, h))?;
            let pm = f2(structure, &sample.displaced(n + l, h).displaced(k, -h))?;
            let mp = f2(structure, &sample.displaced(n + l, -h).displaced(k, h))?;
            let mm = f2(structure, &sample.displaced(n + l, -h).displaced(k, -h))?;
            acc += sample.y[k] * (pp - pm - mp + mm) / (4.0 * h * h);
        }
        let xp = f2(structure, &sample.displaced(l, h))?;
        let xm = f2(structure, &sample.displaced(l, -h))?;
        acc -= (xp - xm) / (2.0 * h);
        rhs[l] = acc;
    }
    let mut out = TensorValue::zeros(vec![n], vec![IndexInfo::upper("i")]);
    for i in 0..n {
        let mut v = 0.0;
        for l in 0..n {
            v += g_inv[(i, l)] * rhs[l];
        }
        out.set(&[i], 0.25 * v);
    }
    Ok(out)
}

/// N^i_j as the fiber derivative of the jet-exact spray.
pub fn nonlinear_connection(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
) -> Result<TensorValue> {
    let n = structure.dimension();
    let eval = |s: &TangentSample| geometry::spray_coefficients(structure, s);
    let mut out = TensorValue::zeros(
        vec![n, n],
        vec![IndexInfo::upper("i"), IndexInfo::lower("j")],
    );
    for j in 0..n {
        let d = central_tensor(&eval, sample, n + j, h)?;
        for i in 0..n {
            out.set(&[i, j], d.get(&[i]));
        }
    }
    Ok(out)
}

/// Differences of a tensor function along all 2n axes, combined into the
/// adapted-frame derivative delta_a T = d_a T - N^m_a dT/dy^m with jet-exact
/// N at the base sample. Output carries the new lower index first.
fn fd_delta(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
    eval: &dyn Fn(&TangentSample) -> Result<TensorValue>,
) -> Result<Vec<TensorValue>> {
    let n = structure.dimension();
    let nl = geometry::nonlinear_connection(structure, sample)?;
    let dx: Vec<TensorValue> = (0..n)
        .map(|a| central_tensor(eval, sample, a, h))
        .collect::<Result<_>>()?;
    let dy: Vec<TensorValue> = (0..n)
        .map(|m| central_tensor(eval, sample, n + m, h))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut acc = dx[a].clone();
        for m in 0..n {
            acc = acc.add(&dy[m].scale(-nl.get(&[m, a])));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Cartan connection coefficients with the adapted-frame derivatives of g
/// taken by finite differences (storage [i][h][j]).
pub fn cartan_connection_coeffs(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
) -> Result<TensorValue> {
    let n = structure.dimension();
    let g_inv = geometry::fundamental_tensor(structure, sample)?
        .as_matrix()
        .try_inverse()
        .ok_or_else(|| {
            crate::error::Error::singular("fundamental tensor not invertible")
                .at_sample(&sample.x, &sample.y)
        })?;
    let delta_g = fd_delta(structure, sample, h, &|s| {
        geometry::fundamental_tensor(structure, s)
    })?;
    let mut out = TensorValue::zeros(
        vec![n, n, n],
        vec![
            IndexInfo::lower("i"),
            IndexInfo::upper("h"),
            IndexInfo::lower("j"),
        ],
    );
    for i in 0..n {
        for hh in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += g_inv[(hh, m)]
                        * (delta_g[i].get(&[m, j]) + delta_g[j].get(&[i, m])
                            - delta_g[m].get(&[i, j]));
                }
                out.set(&[i, hh, j], 0.5 * acc);
            }
        }
    }
    Ok(out)
}

/// Both curvature tensors with the outer adapted-frame derivatives taken by
/// finite differences of jet-exact N and connection coefficients.
pub fn hh_curvature(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
) -> Result<CurvatureTensors> {
    let n = structure.dimension();
    let delta_n = fd_delta(structure, sample, h, &|s| {
        geometry::nonlinear_connection(structure, s)
    })?;
    let mut r = TensorValue::zeros(
        vec![n, n, n],
        vec![
            IndexInfo::upper("h"),
            IndexInfo::lower("i"),
            IndexInfo::lower("j"),
        ],
    );
    for hh in 0..n {
        for i in 0..n {
            for j in 0..n {
                r.set(
                    &[hh, i, j],
                    delta_n[j].get(&[hh, i]) - delta_n[i].get(&[hh, j]),
                );
            }
        }
    }

    let bundle = geometry::cartan_connection(structure, sample)?;
    let f_conn = &bundle.connection;
    let c_up = bundle.cartan_mixed();
    let delta_f = fd_delta(structure, sample, h, &|s| {
        geometry::cartan_connection(structure, s).map(|b| b.connection)
    })?;

    let mut hh_tensor = TensorValue::zeros(
        vec![n, n, n, n],
        vec![
            IndexInfo::lower("k"),
            IndexInfo::upper("h"),
            IndexInfo::lower("j"),
            IndexInfo::lower("i"),
        ],
    );
    for k in 0..n {
        for hh in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let mut v = delta_f[i].get(&[k, hh, j]) - delta_f[j].get(&[k, hh, i]);
                    for m in 0..n {
                        v += f_conn.get(&[k, m, j]) * f_conn.get(&[m, hh, i])
                            - f_conn.get(&[k, m, i]) * f_conn.get(&[m, hh, j]);
                        v += c_up.get(&[k, hh, m]) * r.get(&[m, j, i]);
                    }
                    hh_tensor.set(&[k, hh, j, i], v);
                }
            }
        }
    }
    Ok(CurvatureTensors { hh: hh_tensor, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, ExprTree};

    fn randers_fixture() -> FinslerStructure {
        let a = vec![
            vec![ExprTree::number(1.0), ExprTree::number(0.0)],
            vec![ExprTree::number(0.0), ExprTree::number(1.0)],
        ];
        let b = vec![
            parse_expression("0.3 * x2", 2).unwrap(),
            parse_expression("0.2 * x1", 2).unwrap(),
        ];
        FinslerStructure::randers(2, a, b).unwrap()
    }

    #[test]
    fn fd_matches_jets_on_randers() {
        let s = randers_fixture();
        let p = TangentSample::new(vec![0.4, -0.3], vec![1.0, 0.6]).unwrap();
        let h = DEFAULT_STEP;

        let g_fd = fundamental_tensor(&s, &p, h).unwrap();
        let g = geometry::fundamental_tensor(&s, &p).unwrap();
        assert!(g_fd.max_abs_diff(&g) <= 1e-6, "{:e}", g_fd.max_abs_diff(&g));

        let c_fd = cartan_tensor(&s, &p, h).unwrap();
        let c = geometry::cartan_tensor(&s, &p).unwrap();
        assert!(c_fd.max_abs_diff(&c) <= 1e-6);

        let spray_fd = spray_coefficients(&s, &p, h).unwrap();
        let spray = geometry::spray_coefficients(&s, &p).unwrap();
        assert!(spray_fd.max_abs_diff(&spray) <= 1e-6);

        let n_fd = nonlinear_connection(&s, &p, h).unwrap();
        let n = geometry::nonlinear_connection(&s, &p).unwrap();
        assert!(n_fd.max_abs_diff(&n) <= 1e-6);

        let f_fd = cartan_connection_coeffs(&s, &p, h).unwrap();
        let bundle = geometry::cartan_connection(&s, &p).unwrap();
        assert!(f_fd.max_abs_diff(&bundle.connection) <= 1e-6);

        let curv_fd = hh_curvature(&s, &p, h).unwrap();
        let curv = bundle.hh_curvature().unwrap();
        assert!(curv_fd.r.max_abs_diff(&curv.r) <= 1e-5);
        assert!(curv_fd.hh.max_abs_diff(&curv.hh) <= 1e-5);
    }
}
