//! The tensor engine: fundamental tensor, Cartan tensor, geodesic spray,
//! nonlinear connection, adapted-frame derivative, Cartan connection
//! coefficients, covariant derivatives and the hh-curvature, all evaluated at
//! a tangent sample.
//!
//! Everything is derived from a single jet of F^2 by jet-level algebra.
//! Differentiating a jet lowers its order by one, so the order budget works
//! out as: F^2 at order 4 -> g at order 2 -> connection coefficients at order
//! 1 -> curvature values. No tensor output is ever differentiated
//! numerically on the primary path; finite differences live in [`crate::fd`]
//! as an independent oracle and alternate evaluation mode.
//!
//! Index storage conventions (used consistently everywhere):
//! connection coefficients `F_i^h_j` as `[i][h][j]`, curvature `R_k^h_ji` as
//! `[k][h][j][i]`, and `R^h_ij = delta_j N^h_i - delta_i N^h_j` as
//! `[h][i][j]`.

use crate::error::{Error, Result};
use crate::finsler::{FinslerStructure, TangentSample};
use crate::jet::Jet;
use crate::tensor::{index_iter, IndexInfo, JetTensor, TensorValue, Variance};

/// Jet of F^2 at the sample.
pub fn f_squared_jet(
    structure: &FinslerStructure,
    sample: &TangentSample,
    order: usize,
) -> Result<Jet> {
    let f = structure.evaluate_jet(sample, order)?;
    Ok(&f * &f)
}

/// g_ij = 1/2 d^2(F^2)/dy^i dy^j.
pub fn fundamental_tensor(
    structure: &FinslerStructure,
    sample: &TangentSample,
) -> Result<TensorValue> {
    let n = structure.dimension();
    let l = f_squared_jet(structure, sample, 2)?;
    let mut g = TensorValue::zeros(
        vec![n, n],
        vec![IndexInfo::lower("i"), IndexInfo::lower("j")],
    );
    for i in 0..n {
        for j in 0..n {
            g.set(&[i, j], 0.5 * l.partial(&[n + i, n + j])?);
        }
    }
    Ok(g)
}

/// C_ijk = 1/2 d(g_ij)/dy^k, totally symmetric.
pub fn cartan_tensor(
    structure: &FinslerStructure,
    sample: &TangentSample,
) -> Result<TensorValue> {
    let n = structure.dimension();
    let l = f_squared_jet(structure, sample, 3)?;
    let mut c = TensorValue::zeros(
        vec![n, n, n],
        vec![
            IndexInfo::lower("i"),
            IndexInfo::lower("j"),
            IndexInfo::lower("k"),
        ],
    );
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                c.set(&[i, j, k], 0.25 * l.partial(&[n + i, n + j, n + k])?);
            }
        }
    }
    Ok(c)
}

/// Inverts a square matrix of jets by Gauss-Jordan elimination with partial
/// pivoting on the constant terms.
fn jet_matrix_inverse(m: &[Vec<Jet>], sample: &TangentSample) -> Result<Vec<Vec<Jet>>> {
    let n = m.len();
    let num_vars = m[0][0].num_vars();
    let order = m[0][0].max_order();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, j| acc.max(j.value().abs()))
        .max(1e-300);

    let mut a: Vec<Vec<Jet>> = m.to_vec();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet::constant(if i == j { 1.0 } else { 0.0 }, num_vars, order))
                .collect()
        })
        .collect();

    for col in 0..n {
        let (pivot_row, pivot_mag) = (col..n)
            .map(|r| (r, a[r][col].value().abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("nonempty pivot search");
        if pivot_mag < 1e-12 * scale {
            return Err(Error::singular("fundamental tensor is not invertible")
                .at_sample(&sample.x, &sample.y));
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);

        let pivot_recip = a[col][col]
            .recip()
            .map_err(|e| e.at_sample(&sample.x, &sample.y))?;
        for j in 0..n {
            a[col][j] = &a[col][j] * &pivot_recip;
            inv[col][j] = &inv[col][j] * &pivot_recip;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col].clone();
            for j in 0..n {
                a[row][j] = &a[row][j] - &(&factor * &a[col][j]);
                inv[row][j] = &inv[row][j] - &(&factor * &inv[col][j]);
            }
        }
    }
    Ok(inv)
}

/// Jet-valued geometric data shared by the spray/connection builders.
struct JetCore {
    n: usize,
    g: Vec<Vec<Jet>>,
    g_inv: Vec<Vec<Jet>>,
    spray: Vec<Jet>,
}

fn jet_core(
    structure: &FinslerStructure,
    sample: &TangentSample,
    tensor_order: usize,
) -> Result<JetCore> {
    let n = structure.dimension();
    let l = f_squared_jet(structure, sample, tensor_order + 2)?;

    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        let di = l.derivative(n + i);
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            row.push(di.derivative(n + j).scale(0.5));
        }
        g.push(row);
    }
    let g_inv = jet_matrix_inverse(&g, sample)?;

    // geodesic spray: G^i = 1/4 g^il (y^k d^2(F^2)/dy^l dx^k - d(F^2)/dx^l)
    let y_jets: Vec<Jet> = (0..n)
        .map(|k| {
            if tensor_order == 0 {
                Ok(Jet::constant(sample.y[k], 2 * n, 0))
            } else {
                Jet::variable(sample.y[k], n + k, 2 * n, tensor_order)
            }
        })
        .collect::<Result<_>>()?;
    let mut rhs = Vec::with_capacity(n);
    for l_idx in 0..n {
        let dl_fiber = l.derivative(n + l_idx);
        let mut term = -&l.derivative(l_idx).truncate(tensor_order);
        for (k, yk) in y_jets.iter().enumerate() {
            term = &term + &(yk * &dl_fiber.derivative(k));
        }
        rhs.push(term);
    }
    let mut spray = Vec::with_capacity(n);
    for i in 0..n {
        let mut gi = Jet::constant(0.0, 2 * n, tensor_order);
        for (l_idx, r) in rhs.iter().enumerate() {
            gi = &gi + &(&g_inv[i][l_idx] * r);
        }
        spray.push(gi.scale(0.25));
    }

    Ok(JetCore { n, g, g_inv, spray })
}

/// Geodesic spray coefficients G^i (positively 2-homogeneous in y).
pub fn spray_coefficients(
    structure: &FinslerStructure,
    sample: &TangentSample,
) -> Result<TensorValue> {
    let core = jet_core(structure, sample, 0)?;
    let mut out = TensorValue::zeros(vec![core.n], vec![IndexInfo::upper("i")]);
    for i in 0..core.n {
        out.set(&[i], core.spray[i].value());
    }
    Ok(out)
}

/// Nonlinear connection N^i_j = d(G^i)/dy^j.
pub fn nonlinear_connection(
    structure: &FinslerStructure,
    sample: &TangentSample,
) -> Result<TensorValue> {
    let core = jet_core(structure, sample, 1)?;
    let n = core.n;
    let mut out = TensorValue::zeros(
        vec![n, n],
        vec![IndexInfo::upper("i"), IndexInfo::lower("j")],
    );
    for i in 0..n {
        for j in 0..n {
            out.set(&[i, j], core.spray[i].derivative(n + j).value());
        }
    }
    Ok(out)
}

/// Fundamental tensor and nonlinear connection together, sharing one jet
/// evaluation. The flow-based oracles call this at many displaced points.
pub fn metric_and_nonlinear(
    structure: &FinslerStructure,
    sample: &TangentSample,
) -> Result<(TensorValue, TensorValue)> {
    let core = jet_core(structure, sample, 1)?;
    let n = core.n;
    let g = TensorValue::from_fn(
        vec![n, n],
        vec![IndexInfo::lower("i"), IndexInfo::lower("j")],
        |idx| core.g[idx[0]][idx[1]].value(),
    );
    let nl = TensorValue::from_fn(
        vec![n, n],
        vec![IndexInfo::upper("i"), IndexInfo::lower("j")],
        |idx| core.spray[idx[0]].derivative(n + idx[1]).value(),
    );
    Ok((g, nl))
}

/// Curvature outputs: the full hh-tensor `R_k^h_ji` (stored `[k][h][j][i]`)
/// and `R^h_ij` (stored `[h][i][j]`).
#[derive(Clone, Debug)]
pub struct CurvatureTensors {
    pub hh: TensorValue,
    pub r: TensorValue,
}

/// Every connection-level tensor at one sample, with enough jet structure
/// retained to drive covariant derivatives and curvature.
pub struct ConnectionBundle {
    pub sample: TangentSample,
    pub g: TensorValue,
    pub g_inv: TensorValue,
    pub cartan: TensorValue,
    pub spray: TensorValue,
    pub nonlinear: TensorValue,
    pub connection: TensorValue,
    n: usize,
    g_jets: Vec<Vec<Jet>>,         // order 2
    n_jets: Vec<Vec<Jet>>,         // order 1, [h][i] = N^h_i
    f_jets: Vec<Vec<Vec<Jet>>>,    // order 1, [i][h][j] = F_i^h_j
    c_up_jets: Vec<Vec<Vec<Jet>>>, // order 1, [i][h][j] = C_i^h_j
}

/// Tolerances the bundle construction enforces on its own invariants.
pub const DEFLECTION_TOL: f64 = 1e-8;
pub const INVERSE_TOL: f64 = 1e-10;

pub fn cartan_connection(
    structure: &FinslerStructure,
    sample: &TangentSample,
) -> Result<ConnectionBundle> {
    let core = jet_core(structure, sample, 2)?;
    let n = core.n;

    // N^h_i at order 1
    let n_jets: Vec<Vec<Jet>> = (0..n)
        .map(|h| (0..n).map(|i| core.spray[h].derivative(n + i)).collect())
        .collect();

    // delta_k g_ij at order 1
    let g_inv1: Vec<Vec<Jet>> = core
        .g_inv
        .iter()
        .map(|row| row.iter().map(|j| j.truncate(1)).collect())
        .collect();
    let delta_g = |k: usize, i: usize, j: usize| -> Jet {
        let mut d = core.g[i][j].derivative(k);
        for m in 0..n {
            d = &d - &(&n_jets[m][k] * &core.g[i][j].derivative(n + m));
        }
        d
    };
    let mut delta_g_cache = vec![vec![vec![Jet::constant(0.0, 2 * n, 1); n]; n]; n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                delta_g_cache[k][i][j] = delta_g(k, i, j);
            }
        }
    }

    // F_i^h_j = 1/2 g^hm (delta_i g_mj + delta_j g_im - delta_m g_ij)
    let mut f_jets = vec![vec![vec![Jet::constant(0.0, 2 * n, 1); n]; n]; n];
    for i in 0..n {
        for h in 0..n {
            for j in 0..n {
                let mut acc = Jet::constant(0.0, 2 * n, 1);
                for m in 0..n {
                    let combo = &(&delta_g_cache[i][m][j] + &delta_g_cache[j][i][m])
                        - &delta_g_cache[m][i][j];
                    acc = &acc + &(&g_inv1[h][m] * &combo);
                }
                f_jets[i][h][j] = acc.scale(0.5);
            }
        }
    }

    // C_ijk and C_i^h_j at order 1
    let mut c_low = vec![vec![vec![Jet::constant(0.0, 2 * n, 1); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                c_low[i][j][k] = core.g[i][j].derivative(n + k).scale(0.5);
            }
        }
    }
    let mut c_up_jets = vec![vec![vec![Jet::constant(0.0, 2 * n, 1); n]; n]; n];
    for i in 0..n {
        for h in 0..n {
            for j in 0..n {
                let mut acc = Jet::constant(0.0, 2 * n, 1);
                for m in 0..n {
                    acc = &acc + &(&g_inv1[h][m] * &c_low[i][m][j]);
                }
                c_up_jets[i][h][j] = acc;
            }
        }
    }

    let g = TensorValue::from_fn(
        vec![n, n],
        vec![IndexInfo::lower("i"), IndexInfo::lower("j")],
        |idx| core.g[idx[0]][idx[1]].value(),
    );
    let g_inv = TensorValue::from_fn(
        vec![n, n],
        vec![IndexInfo::upper("i"), IndexInfo::upper("j")],
        |idx| core.g_inv[idx[0]][idx[1]].value(),
    );
    let cartan = TensorValue::from_fn(
        vec![n, n, n],
        vec![
            IndexInfo::lower("i"),
            IndexInfo::lower("j"),
            IndexInfo::lower("k"),
        ],
        |idx| c_low[idx[0]][idx[1]][idx[2]].value(),
    );
    let spray = TensorValue::from_fn(vec![n], vec![IndexInfo::upper("i")], |idx| {
        core.spray[idx[0]].value()
    });
    let nonlinear = TensorValue::from_fn(
        vec![n, n],
        vec![IndexInfo::upper("i"), IndexInfo::lower("j")],
        |idx| n_jets[idx[0]][idx[1]].value(),
    );
    let connection = TensorValue::from_fn(
        vec![n, n, n],
        vec![
            IndexInfo::lower("i"),
            IndexInfo::upper("h"),
            IndexInfo::lower("j"),
        ],
        |idx| f_jets[idx[0]][idx[1]][idx[2]].value(),
    );

    let bundle = ConnectionBundle {
        sample: sample.clone(),
        g,
        g_inv,
        cartan,
        spray,
        nonlinear,
        connection,
        n,
        g_jets: core.g,
        n_jets,
        f_jets,
        c_up_jets,
    };
    bundle.check_invariants()?;
    Ok(bundle)
}

impl ConnectionBundle {
    pub fn dimension(&self) -> usize {
        self.n
    }

    fn check_invariants(&self) -> Result<()> {
        let n = self.n;
        let scale = self.g.max_abs().max(1.0);
        for i in 0..n {
            for j in 0..n {
                let sym = (self.g.get(&[i, j]) - self.g.get(&[j, i])).abs();
                if sym > 1e-12 * scale {
                    return Err(Error::Validation(format!(
                        "fundamental tensor asymmetry {sym:e} exceeds tolerance"
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut prod = 0.0;
                for m in 0..n {
                    prod += self.g.get(&[i, m]) * self.g_inv.get(&[m, j]);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                if (prod - want).abs() > INVERSE_TOL {
                    return Err(Error::Validation(format!(
                        "metric inverse residual {:e} exceeds tolerance",
                        (prod - want).abs()
                    )));
                }
            }
        }
        let deflection = self.deflection_residual();
        if deflection > DEFLECTION_TOL {
            return Err(Error::Validation(format!(
                "deflection residual {deflection:e} exceeds tolerance"
            )));
        }
        Ok(())
    }

    /// max |y^m F_m^h_i - N^h_i|.
    pub fn deflection_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for h in 0..n {
            for i in 0..n {
                let mut contraction = 0.0;
                for m in 0..n {
                    contraction += self.sample.y[m] * self.connection.get(&[m, h, i]);
                }
                worst = worst.max((contraction - self.nonlinear.get(&[h, i])).abs());
            }
        }
        worst
    }

    /// C_i^h_j = g^hm C_imj as values (storage [i][h][j]).
    pub fn cartan_mixed(&self) -> TensorValue {
        TensorValue::from_fn(
            vec![self.n, self.n, self.n],
            vec![
                IndexInfo::lower("i"),
                IndexInfo::upper("h"),
                IndexInfo::lower("j"),
            ],
            |idx| self.c_up_jets[idx[0]][idx[1]][idx[2]].value(),
        )
    }

    /// d(N^h_i)/dy^j from the retained jets.
    pub fn nonlinear_fiber_derivative(&self, h: usize, i: usize, j: usize) -> f64 {
        self.n_jets[h][i].derivative(self.n + j).value()
    }

    /// max |y^m C_mij|.
    pub fn cartan_contraction_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut contraction = 0.0;
                for m in 0..n {
                    contraction += self.sample.y[m] * self.cartan.get(&[m, i, j]);
                }
                worst = worst.max(contraction.abs());
            }
        }
        worst
    }

    pub(crate) fn g_jet(&self, i: usize, j: usize) -> &Jet {
        &self.g_jets[i][j]
    }

    pub(crate) fn n_jet(&self, h: usize, i: usize) -> &Jet {
        &self.n_jets[h][i]
    }

    pub(crate) fn f_jet(&self, i: usize, h: usize, j: usize) -> &Jet {
        &self.f_jets[i][h][j]
    }

    /// The fundamental tensor as a (0,2) jet tensor of order 2.
    pub fn metric_field(&self) -> JetTensor {
        JetTensor::from_fn(
            vec![self.n, self.n],
            vec![Variance::Lower, Variance::Lower],
            |idx| Ok(self.g_jets[idx[0]][idx[1]].clone()),
        )
        .expect("metric field construction")
    }

    /// N^h_i as a (1,1) jet tensor of order 1 (storage [h][i]).
    pub fn nonlinear_field(&self) -> JetTensor {
        JetTensor::from_fn(
            vec![self.n, self.n],
            vec![Variance::Upper, Variance::Lower],
            |idx| Ok(self.n_jets[idx[0]][idx[1]].clone()),
        )
        .expect("nonlinear field construction")
    }

    /// F_i^h_j as a jet tensor of order 1 (storage [i][h][j]).
    pub fn connection_field(&self) -> JetTensor {
        JetTensor::from_fn(
            vec![self.n, self.n, self.n],
            vec![Variance::Lower, Variance::Upper, Variance::Lower],
            |idx| Ok(self.f_jets[idx[0]][idx[1]][idx[2]].clone()),
        )
        .expect("connection field construction")
    }

    /// delta_i f = d_i f - N^m_i d(f)/dy^m on a scalar jet, returning a jet
    /// one order lower. The field order may be 1 or 2; the nonlinear
    /// connection is only available to order 1.
    pub fn delta_jet(&self, f: &Jet, i: usize) -> Jet {
        let n = self.n;
        assert!(
            f.max_order() >= 1 && f.max_order() <= 2,
            "delta_jet supports fields of order 1 or 2"
        );
        let new_order = f.max_order() - 1;
        let mut d = f.derivative(i);
        for m in 0..n {
            d = &d - &(&self.n_jets[m][i].truncate(new_order) * &f.derivative(n + m));
        }
        d
    }

    /// delta_i f as a plain value.
    pub fn delta_value(&self, f: &Jet, i: usize) -> f64 {
        let n = self.n;
        let mut d = f.derivative(i).value();
        for m in 0..n {
            d -= self.n_jets[m][i].value() * f.derivative(n + m).value();
        }
        d
    }

    /// Adapted-frame derivative of a jet tensor field: prepends a lower
    /// horizontal index. The field must carry order 1 or 2 (the nonlinear
    /// connection is available to order 1).
    pub fn delta_derivative(&self, field: &JetTensor) -> Result<JetTensor> {
        let order = field.order();
        if order == 0 || order > 2 {
            return Err(Error::argument(format!(
                "delta derivative needs a field of order 1 or 2, got {order}"
            )));
        }
        let mut shape = vec![self.n];
        shape.extend_from_slice(field.shape());
        let mut variances = vec![Variance::Lower];
        variances.extend_from_slice(field.variances());
        JetTensor::from_fn(shape, variances, |idx| {
            let (i, rest) = (idx[0], &idx[1..]);
            Ok(self.delta_jet(field.get(rest), i))
        })
    }

    fn covariant_signature(&self, field: &JetTensor) -> Vec<IndexInfo> {
        let mut sig: Vec<IndexInfo> = field
            .variances()
            .iter()
            .enumerate()
            .map(|(p, v)| {
                let name = format!("i{p}");
                match v {
                    Variance::Upper => IndexInfo::upper(&name),
                    Variance::Lower => IndexInfo::lower(&name),
                }
            })
            .collect();
        sig.push(IndexInfo::lower("j"));
        sig
    }

    /// Cartan horizontal covariant derivative; appends a lower index. The
    /// variance pattern of the field decides the sign pattern of the
    /// connection terms.
    pub fn h_covariant_derivative(&self, field: &JetTensor) -> Result<TensorValue> {
        if field.order() == 0 {
            return Err(Error::argument(
                "h-covariant derivative needs a field of order >= 1".to_string(),
            ));
        }
        let n = self.n;
        let mut shape = field.shape().to_vec();
        shape.push(n);
        let sig = self.covariant_signature(field);
        let mut out = TensorValue::zeros(shape, sig);
        let out_shape = out.shape().to_vec();
        for idx in index_iter(&out_shape) {
            let (rest, j) = (&idx[..idx.len() - 1], idx[idx.len() - 1]);
            let mut v = self.delta_value(field.get(rest), j);
            for (p, variance) in field.variances().iter().enumerate() {
                let own = rest[p];
                for m in 0..n {
                    let mut swapped = rest.to_vec();
                    swapped[p] = m;
                    let t = field.get(&swapped).value();
                    v += match variance {
                        Variance::Upper => self.f_jets[m][own][j].value() * t,
                        Variance::Lower => -self.f_jets[own][m][j].value() * t,
                    };
                }
            }
            out.set(&idx, v);
        }
        Ok(out)
    }

    /// Cartan vertical covariant derivative; the fiber-derivative analogue of
    /// [`Self::h_covariant_derivative`] with C_i^h_j in place of F_i^h_j.
    pub fn v_covariant_derivative(&self, field: &JetTensor) -> Result<TensorValue> {
        if field.order() == 0 {
            return Err(Error::argument(
                "v-covariant derivative needs a field of order >= 1".to_string(),
            ));
        }
        let n = self.n;
        let mut shape = field.shape().to_vec();
        shape.push(n);
        let sig = self.covariant_signature(field);
        let mut out = TensorValue::zeros(shape, sig);
        let out_shape = out.shape().to_vec();
        for idx in index_iter(&out_shape) {
            let (rest, j) = (&idx[..idx.len() - 1], idx[idx.len() - 1]);
            let mut v = field.get(rest).derivative(n + j).value();
            for (p, variance) in field.variances().iter().enumerate() {
                let own = rest[p];
                for m in 0..n {
                    let mut swapped = rest.to_vec();
                    swapped[p] = m;
                    let t = field.get(&swapped).value();
                    v += match variance {
                        Variance::Upper => self.c_up_jets[m][own][j].value() * t,
                        Variance::Lower => -self.c_up_jets[own][m][j].value() * t,
                    };
                }
            }
            out.set(&idx, v);
        }
        Ok(out)
    }

    /// delta_j N^h_i as plain values.
    fn delta_nonlinear(&self, j: usize, h: usize, i: usize) -> f64 {
        self.delta_value(&self.n_jets[h][i], j)
    }

    /// Assembles R^h_ij and the five-term hh-curvature R_k^h_ji.
    pub fn hh_curvature(&self) -> Result<CurvatureTensors> {
        let n = self.n;
        let mut r = TensorValue::zeros(
            vec![n, n, n],
            vec![
                IndexInfo::upper("h"),
                IndexInfo::lower("i"),
                IndexInfo::lower("j"),
            ],
        );
        for h in 0..n {
            for i in 0..n {
                for j in 0..n {
                    r.set(
                        &[h, i, j],
                        self.delta_nonlinear(j, h, i) - self.delta_nonlinear(i, h, j),
                    );
                }
            }
        }

        // delta_a F_k^h_j cached as values
        let mut delta_f = vec![vec![vec![vec![0.0; n]; n]; n]; n];
        for a in 0..n {
            for k in 0..n {
                for h in 0..n {
                    for j in 0..n {
                        delta_f[a][k][h][j] = self.delta_value(&self.f_jets[k][h][j], a);
                    }
                }
            }
        }

        let mut hh = TensorValue::zeros(
            vec![n, n, n, n],
            vec![
                IndexInfo::lower("k"),
                IndexInfo::upper("h"),
                IndexInfo::lower("j"),
                IndexInfo::lower("i"),
            ],
        );
        for k in 0..n {
            for h in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let mut v = delta_f[i][k][h][j] - delta_f[j][k][h][i];
                        for m in 0..n {
                            v += self.f_jets[k][m][j].value() * self.f_jets[m][h][i].value()
                                - self.f_jets[k][m][i].value() * self.f_jets[m][h][j].value();
                            // R^m_ji = delta_i N^m_j - delta_j N^m_i
                            v += self.c_up_jets[k][h][m].value() * r.get(&[m, j, i]);
                        }
                        hh.set(&[k, h, j, i], v);
                    }
                }
            }
        }
        Ok(CurvatureTensors { hh, r })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, ExprTree};
    use approx::assert_relative_eq;

    fn sample(x: &[f64], y: &[f64]) -> TangentSample {
        TangentSample::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn polar_like() -> FinslerStructure {
        // a = diag(1, x1^2): the flat plane in disguised coordinates; the
        // validation grid must avoid x1 = 0 where the matrix degenerates
        let a = vec![
            vec![ExprTree::number(1.0), ExprTree::number(0.0)],
            vec![ExprTree::number(0.0), parse_expression("x1^2", 2).unwrap()],
        ];
        let grid = crate::grid::GridSpec::validation_default().with_base_range(0.5, 2.0);
        FinslerStructure::riemannian_on(2, a, &grid).unwrap()
    }

    #[test]
    fn euclidean_tensors_are_trivial() {
        let s = FinslerStructure::euclidean(2);
        let p = sample(&[0.3, -0.7], &[3.0, 4.0]);
        let g = fundamental_tensor(&s, &p).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(
                    g.get(&[i, j]),
                    if i == j { 1.0 } else { 0.0 },
                    epsilon = 1e-12
                );
            }
        }
        assert!(cartan_tensor(&s, &p).unwrap().max_abs() <= 1e-12);
        assert!(spray_coefficients(&s, &p).unwrap().max_abs() <= 1e-12);
        assert!(nonlinear_connection(&s, &p).unwrap().max_abs() <= 1e-12);
        let bundle = cartan_connection(&s, &p).unwrap();
        assert!(bundle.connection.max_abs() <= 1e-12);
        let curv = bundle.hh_curvature().unwrap();
        assert!(curv.hh.max_abs() <= 1e-10);
        assert!(curv.r.max_abs() <= 1e-10);
    }

    #[test]
    fn riemannian_fundamental_tensor_is_coefficient_matrix() {
        let s = polar_like();
        let p = sample(&[2.0, 0.1], &[0.4, -1.2]);
        let g = fundamental_tensor(&s, &p).unwrap();
        assert_relative_eq!(g.get(&[0, 0]), 1.0, epsilon = 1e-10);
        assert_relative_eq!(g.get(&[1, 1]), 4.0, epsilon = 1e-10);
        assert_relative_eq!(g.get(&[0, 1]), 0.0, epsilon = 1e-10);
        // y-independent
        let q = sample(&[2.0, 0.1], &[1.5, 0.3]);
        let g2 = fundamental_tensor(&s, &q).unwrap();
        assert!(g.max_abs_diff(&g2) <= 1e-10);
    }

    #[test]
    fn riemannian_cartan_tensor_vanishes() {
        let s = polar_like();
        let p = sample(&[1.5, -0.4], &[0.8, 0.6]);
        assert!(cartan_tensor(&s, &p).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn hand_computed_spray_and_connection() {
        // For a = diag(1, x1^2) at x = (2, 0), y = (1, 1):
        // Christoffels gamma^1_22 = -x1 = -2, gamma^2_12 = 1/x1 = 0.5,
        // so G^1 = -1, G^2 = 0.5, N = [[0, -2], [0.5, 0.5]].
        let s = polar_like();
        let p = sample(&[2.0, 0.0], &[1.0, 1.0]);
        let spray = spray_coefficients(&s, &p).unwrap();
        assert_relative_eq!(spray.get(&[0]), -1.0, epsilon = 1e-9);
        assert_relative_eq!(spray.get(&[1]), 0.5, epsilon = 1e-9);
        let nl = nonlinear_connection(&s, &p).unwrap();
        assert_relative_eq!(nl.get(&[0, 0]), 0.0, epsilon = 1e-9);
        assert_relative_eq!(nl.get(&[0, 1]), -2.0, epsilon = 1e-9);
        assert_relative_eq!(nl.get(&[1, 0]), 0.5, epsilon = 1e-9);
        assert_relative_eq!(nl.get(&[1, 1]), 0.5, epsilon = 1e-9);
        let bundle = cartan_connection(&s, &p).unwrap();
        assert_relative_eq!(bundle.connection.get(&[0, 1, 1]), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn polar_like_metric_is_flat() {
        let s = polar_like();
        let p = sample(&[1.7, 0.4], &[0.9, -0.5]);
        let curv = cartan_connection(&s, &p).unwrap().hh_curvature().unwrap();
        assert!(curv.hh.max_abs() <= 1e-6, "hh {:e}", curv.hh.max_abs());
        assert!(curv.r.max_abs() <= 1e-6, "r {:e}", curv.r.max_abs());
    }

    #[test]
    fn curvature_contraction_identity_on_randers() {
        let a = vec![
            vec![ExprTree::number(1.0), ExprTree::number(0.0)],
            vec![ExprTree::number(0.0), ExprTree::number(1.0)],
        ];
        let b = vec![
            parse_expression("0.2 * x2", 2).unwrap(),
            parse_expression("0.1 * x1", 2).unwrap(),
        ];
        let s = FinslerStructure::randers(2, a, b).unwrap();
        let p = sample(&[0.4, -0.6], &[1.1, 0.7]);
        let bundle = cartan_connection(&s, &p).unwrap();
        let curv = bundle.hh_curvature().unwrap();
        let n = 2;
        for h in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut contraction = 0.0;
                    for m in 0..n {
                        contraction += p.y[m] * curv.hh.get(&[m, h, i, j]);
                    }
                    assert_relative_eq!(
                        contraction,
                        curv.r.get(&[h, i, j]),
                        epsilon = 1e-6
                    );
                }
            }
        }
        // antisymmetry of R^h_ij is exact from the assembly
        for h in 0..n {
            for i in 0..n {
                for j in 0..n {
                    assert_relative_eq!(
                        curv.r.get(&[h, i, j]),
                        -curv.r.get(&[h, j, i]),
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn delta_of_finsler_function_vanishes() {
        let a = vec![
            vec![ExprTree::number(1.0), ExprTree::number(0.0)],
            vec![ExprTree::number(0.0), ExprTree::number(1.0)],
        ];
        let b = vec![
            parse_expression("0.3 * x2", 2).unwrap(),
            ExprTree::number(0.0),
        ];
        let s = FinslerStructure::randers(2, a, b).unwrap();
        let p = sample(&[0.5, 0.2], &[0.9, -0.4]);
        let bundle = cartan_connection(&s, &p).unwrap();
        let f = s.evaluate_jet(&p, 1).unwrap();
        for i in 0..2 {
            assert!(
                bundle.delta_value(&f, i).abs() <= 1e-8,
                "delta_{i} F = {:e}",
                bundle.delta_value(&f, i)
            );
        }
    }

    #[test]
    fn spray_is_two_homogeneous() {
        let a = vec![
            vec![ExprTree::number(1.0), ExprTree::number(0.0)],
            vec![ExprTree::number(0.0), ExprTree::number(1.0)],
        ];
        let b = vec![
            parse_expression("0.2 * x2", 2).unwrap(),
            parse_expression("0.1 * x1", 2).unwrap(),
        ];
        let s = FinslerStructure::randers(2, a, b).unwrap();
        let p = sample(&[0.3, 0.8], &[0.7, -0.2]);
        let g1 = spray_coefficients(&s, &p).unwrap();
        let g2 = spray_coefficients(&s, &p.scaled_fiber(2.0)).unwrap();
        let n1 = nonlinear_connection(&s, &p).unwrap();
        let n2 = nonlinear_connection(&s, &p.scaled_fiber(2.0)).unwrap();
        for i in 0..2 {
            assert_relative_eq!(g2.get(&[i]), 4.0 * g1.get(&[i]), epsilon = 1e-8);
            for j in 0..2 {
                assert_relative_eq!(n2.get(&[i, j]), 2.0 * n1.get(&[i, j]), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn degenerate_metric_raises_singular() {
        let s = FinslerStructure::from_expression("y1 + y2", 2).unwrap();
        let p = sample(&[0.0, 0.0], &[1.0, 0.5]);
        match cartan_connection(&s, &p) {
            Err(Error::Singular { .. }) => {}
            Err(other) => panic!("expected singular-metric error, got {other}"),
            Ok(_) => panic!("expected singular-metric error, got a bundle"),
        }
    }
}
