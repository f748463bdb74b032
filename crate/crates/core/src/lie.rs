//! Vector fields on the base manifold, their complete lifts to TM, and the
//! Lie-derivative machinery for tensors, the nonlinear connection, the
//! connection coefficients and the lift metric.
//!
//! Lie derivatives of proper tensor fields follow the coordinate pattern
//!
//! ```text
//! L_V T = v^a d_a T + (y^a d_a v^b) dT/dy^b - T^a d_a v^j + T_a d_i v^a
//! ```
//!
//! with one slot term per index. The nonlinear connection and the connection
//! coefficients are not tensors: pulling them back along the extended point
//! transformation x -> x + t v(x), y -> y + t Dv(x) y contributes the
//! inhomogeneous terms `y^c d_i d_c v^h` and `d_i d_k v^h` respectively, and
//! those terms are required for the frame bracket characterization
//! `[X^c, delta_i] = -d_i v^h delta_h - (L_V N^h_i) ddot_h` to hold for
//! nonlinear fields. Flow-based finite differences of the same pullbacks are
//! kept alongside as oracles.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, ExprTree};
use crate::finsler::{FinslerStructure, TangentSample};
use crate::geometry::{self, ConnectionBundle};
use crate::jet::Jet;
use crate::lift::LiftCoefficients;
use crate::tensor::{index_iter, IndexInfo, JetTensor, TensorValue, Variance};

/// A vector field v^i(x) on the base manifold; components never reference
/// fiber variables.
#[derive(Clone, Debug)]
pub struct VectorFieldOnM {
    components: Vec<ExprTree>,
    dimension: usize,
    name: String,
}

impl VectorFieldOnM {
    pub fn from_trees(components: Vec<ExprTree>, dimension: usize) -> Result<VectorFieldOnM> {
        if components.len() != dimension {
            return Err(Error::argument(format!(
                "vector field needs {dimension} components, got {}",
                components.len()
            )));
        }
        if components.iter().any(|c| c.references_fiber()) {
            return Err(Error::argument(
                "vector field components must depend on x only".to_string(),
            ));
        }
        Ok(VectorFieldOnM {
            components,
            dimension,
            name: String::new(),
        })
    }

    pub fn from_components(sources: &[&str], dimension: usize) -> Result<VectorFieldOnM> {
        let components = sources
            .iter()
            .map(|s| parse_expression(s, dimension))
            .collect::<Result<Vec<_>>>()?;
        VectorFieldOnM::from_trees(components, dimension)
    }

    pub fn named(mut self, name: &str) -> VectorFieldOnM {
        self.name = name.to_string();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[ExprTree] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = vec![0.0; self.dimension];
        self.components.iter().map(|c| c.eval(x, &y)).collect()
    }

    /// Component jets over the 2n sample variables.
    pub fn jets(&self, sample: &TangentSample, order: usize) -> Result<Vec<Jet>> {
        let n = self.dimension;
        let vars: Vec<Jet> = (0..2 * n)
            .map(|i| {
                let v = if i < n { sample.x[i] } else { sample.y[i - n] };
                Jet::variable(v, i, 2 * n, order)
            })
            .collect::<Result<_>>()?;
        self.components
            .iter()
            .map(|c| c.eval_jet(n, &vars))
            .collect()
    }

    /// Scaled copy c * V (used by linearity properties).
    pub fn scaled(&self, c: f64) -> VectorFieldOnM {
        let components = self
            .components
            .iter()
            .map(|t| {
                ExprTree::Binary(
                    crate::expr::BinaryFn::Mul,
                    ExprTree::number(c).into(),
                    t.clone().into(),
                )
            })
            .collect();
        VectorFieldOnM {
            components,
            dimension: self.dimension,
            name: self.name.clone(),
        }
    }
}

/// Pointwise values and first/second derivatives of the field, plus the
/// fiber-transport vector w^b = y^a d_a v^b.
struct FieldData {
    v: Vec<f64>,
    /// dv[a][i] = d_i v^a
    dv: Vec<Vec<f64>>,
    /// ddv[a][i][c] = d_i d_c v^a
    ddv: Vec<Vec<Vec<f64>>>,
    w: Vec<f64>,
}

fn field_data(v: &VectorFieldOnM, sample: &TangentSample) -> Result<FieldData> {
    let n = v.dimension();
    let jets = v.jets(sample, 2)?;
    let values: Vec<f64> = jets.iter().map(|j| j.value()).collect();
    let mut dv = vec![vec![0.0; n]; n];
    let mut ddv = vec![vec![vec![0.0; n]; n]; n];
    for a in 0..n {
        for i in 0..n {
            dv[a][i] = jets[a].partial(&[i])?;
            for c in 0..n {
                ddv[a][i][c] = jets[a].partial(&[i, c])?;
            }
        }
    }
    let mut w = vec![0.0; n];
    for b in 0..n {
        for a in 0..n {
            w[b] += sample.y[a] * dv[b][a];
        }
    }
    Ok(FieldData {
        v: values,
        dv,
        ddv,
        w,
    })
}

/// The complete lift of V at a sample, in the adapted frame.
#[derive(Clone, Debug)]
pub struct CompleteLiftValue {
    /// v^i, the delta_i components.
    pub horizontal: Vec<f64>,
    /// y^j nabla_j v^i, the fiber components.
    pub vertical: Vec<f64>,
    pub sample: TangentSample,
}

/// X^c = v^i delta_i + (y^j nabla_j v^i) ddot_i with nabla the Cartan
/// h-covariant derivative.
pub fn complete_lift(
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
) -> Result<CompleteLiftValue> {
    let n = bundle.dimension();
    let data = field_data(v, &bundle.sample)?;
    let mut vertical = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let mut nabla = data.dv[i][j];
            for m in 0..n {
                nabla += bundle.connection.get(&[m, i, j]) * data.v[m];
            }
            vertical[i] += bundle.sample.y[j] * nabla;
        }
    }
    Ok(CompleteLiftValue {
        horizontal: data.v,
        vertical,
        sample: bundle.sample.clone(),
    })
}

/// Coordinate-formula Lie derivative of a jet tensor field along V. The
/// field must carry at least one derivative order.
pub fn lie_derivative_tensor(
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
    field: &JetTensor,
) -> Result<TensorValue> {
    let n = bundle.dimension();
    if field.order() == 0 {
        return Err(Error::argument(
            "Lie derivative needs a field of order >= 1".to_string(),
        ));
    }
    let data = field_data(v, &bundle.sample)?;
    let sig: Vec<IndexInfo> = field
        .variances()
        .iter()
        .enumerate()
        .map(|(p, var)| match var {
            Variance::Upper => IndexInfo::upper(&format!("i{p}")),
            Variance::Lower => IndexInfo::lower(&format!("i{p}")),
        })
        .collect();
    let mut out = TensorValue::zeros(field.shape().to_vec(), sig);
    for idx in index_iter(field.shape()) {
        let jet = field.get(&idx);
        let mut value = 0.0;
        for a in 0..n {
            value += data.v[a] * jet.derivative(a).value();
            value += data.w[a] * jet.derivative(n + a).value();
        }
        for (p, variance) in field.variances().iter().enumerate() {
            let own = idx[p];
            for a in 0..n {
                let mut swapped = idx.clone();
                swapped[p] = a;
                let t = field.get(&swapped).value();
                value += match variance {
                    Variance::Upper => -t * data.dv[own][a],
                    Variance::Lower => t * data.dv[a][own],
                };
            }
        }
        out.set(&idx, value);
    }
    Ok(out)
}

/// L_V g_ij as an order-1 jet tensor, for use under a further covariant
/// derivative.
pub fn lie_metric_jets(bundle: &ConnectionBundle, v: &VectorFieldOnM) -> Result<JetTensor> {
    let n = bundle.dimension();
    let vjets = v.jets(&bundle.sample, 2)?;
    let v1: Vec<Jet> = vjets.iter().map(|j| j.truncate(1)).collect();
    let yjets: Vec<Jet> = (0..n)
        .map(|k| Jet::variable(bundle.sample.y[k], n + k, 2 * n, 1))
        .collect::<Result<_>>()?;
    // w^b = y^a d_a v^b as jets
    let mut wjets = Vec::with_capacity(n);
    for b in 0..n {
        let mut w = Jet::constant(0.0, 2 * n, 1);
        for a in 0..n {
            w = &w + &(&yjets[a] * &vjets[b].derivative(a));
        }
        wjets.push(w);
    }
    JetTensor::from_fn(
        vec![n, n],
        vec![Variance::Lower, Variance::Lower],
        |idx| {
            let (i, j) = (idx[0], idx[1]);
            let g = bundle.g_jet(i, j);
            let mut acc = Jet::constant(0.0, 2 * n, 1);
            for a in 0..n {
                acc = &acc + &(&v1[a] * &g.derivative(a));
                acc = &acc + &(&wjets[a] * &g.derivative(n + a));
                acc = &acc + &(&vjets[a].derivative(i) * &bundle.g_jet(a, j).truncate(1));
                acc = &acc + &(&vjets[a].derivative(j) * &bundle.g_jet(i, a).truncate(1));
            }
            Ok(acc)
        },
    )
}

/// L_V N^h_i (storage [h][i]): the tensor pattern on N plus the pullback
/// term y^c d_i d_c v^h contributed by the extended point transformation.
pub fn lie_nonlinear_connection(
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
) -> Result<TensorValue> {
    let n = bundle.dimension();
    let data = field_data(v, &bundle.sample)?;
    let mut out = TensorValue::zeros(
        vec![n, n],
        vec![IndexInfo::upper("h"), IndexInfo::lower("i")],
    );
    for h in 0..n {
        for i in 0..n {
            let jet = bundle.n_jet(h, i);
            let mut value = 0.0;
            for a in 0..n {
                value += data.v[a] * jet.derivative(a).value();
                value += data.w[a] * jet.derivative(n + a).value();
                value -= bundle.nonlinear.get(&[a, i]) * data.dv[h][a];
                value += bundle.nonlinear.get(&[h, a]) * data.dv[a][i];
                value += bundle.sample.y[a] * data.ddv[h][i][a];
            }
            out.set(&[h, i], value);
        }
    }
    Ok(out)
}

/// L_V F_i^h_k (storage [i][h][k]): tensor pattern plus the inhomogeneous
/// connection-pullback term d_i d_k v^h.
pub fn lie_connection_coeffs(
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
) -> Result<TensorValue> {
    let n = bundle.dimension();
    let data = field_data(v, &bundle.sample)?;
    let mut out = TensorValue::zeros(
        vec![n, n, n],
        vec![
            IndexInfo::lower("i"),
            IndexInfo::upper("h"),
            IndexInfo::lower("k"),
        ],
    );
    for i in 0..n {
        for h in 0..n {
            for k in 0..n {
                let jet = bundle.f_jet(i, h, k);
                let mut value = data.ddv[h][i][k];
                for b in 0..n {
                    value += data.v[b] * jet.derivative(b).value();
                    value += data.w[b] * jet.derivative(n + b).value();
                    value -= bundle.connection.get(&[i, b, k]) * data.dv[h][b];
                    value += bundle.connection.get(&[b, h, k]) * data.dv[b][i];
                    value += bundle.connection.get(&[i, h, b]) * data.dv[b][k];
                }
                out.set(&[i, h, k], value);
            }
        }
    }
    Ok(out)
}

/// Residual of the interchange identity
/// `nabla_k L_V g_ij - L_V nabla_k g_ij - g_aj L_V F^a_ik - g_ai L_V F^a_jk`,
/// returned as a (0,3) tensor [i][j][k].
pub fn interchange_residual(
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
) -> Result<TensorValue> {
    let n = bundle.dimension();
    let lie_g = lie_metric_jets(bundle, v)?;
    let nabla_lie_g = bundle.h_covariant_derivative(&lie_g)?;

    // nabla_k g_ij as an order-1 jet field (vanishes identically for the
    // Cartan connection; computed honestly rather than assumed)
    let nabla_g = JetTensor::from_fn(
        vec![n, n, n],
        vec![Variance::Lower, Variance::Lower, Variance::Lower],
        |idx| {
            let (i, j, k) = (idx[0], idx[1], idx[2]);
            let mut acc = bundle.delta_jet(bundle.g_jet(i, j), k);
            for m in 0..n {
                acc = &acc - &(&bundle.f_jet(i, m, k).truncate(1) * &bundle.g_jet(m, j).truncate(1));
                acc = &acc - &(&bundle.f_jet(j, m, k).truncate(1) * &bundle.g_jet(i, m).truncate(1));
            }
            Ok(acc)
        },
    )?;
    let lie_nabla_g = lie_derivative_tensor(bundle, v, &nabla_g)?;

    let lie_f = lie_connection_coeffs(bundle, v)?;
    let mut out = TensorValue::zeros(
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
                let mut value =
                    nabla_lie_g.get(&[i, j, k]) - lie_nabla_g.get(&[i, j, k]);
                for a in 0..n {
                    value -= bundle.g.get(&[a, j]) * lie_f.get(&[i, a, k]);
                    value -= bundle.g.get(&[a, i]) * lie_f.get(&[j, a, k]);
                }
                out.set(&[i, j, k], value);
            }
        }
    }
    Ok(out)
}

fn lift_signature() -> Vec<IndexInfo> {
    vec![IndexInfo::lower("A"), IndexInfo::lower("B")]
}

/// L_{X^c} of the lift metric assembled block by block:
/// hh = a Lg + b (g LN + (g LN)^T), hv = b Lg + g (g LN)^T-pattern,
/// vv = c Lg, in the adapted frame.
pub fn lie_lift_metric_blocks(
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
    coeffs: LiftCoefficients,
) -> Result<TensorValue> {
    let n = bundle.dimension();
    let lie_g = lie_derivative_tensor(bundle, v, &bundle.metric_field())?;
    let lie_n = lie_nonlinear_connection(bundle, v)?;
    // gln[i][j] = g_ai L_V N^a_j
    let mut gln = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                gln[i][j] += bundle.g.get(&[a, i]) * lie_n.get(&[a, j]);
            }
        }
    }
    let mut out = TensorValue::zeros(vec![2 * n, 2 * n], lift_signature());
    for i in 0..n {
        for j in 0..n {
            let hh = coeffs.alpha * lie_g.get(&[i, j]) + coeffs.beta * (gln[i][j] + gln[j][i]);
            let hv = coeffs.beta * lie_g.get(&[i, j]) + coeffs.gamma * gln[j][i];
            let vv = coeffs.gamma * lie_g.get(&[i, j]);
            out.set(&[i, j], hh);
            out.set(&[i, n + j], hv);
            out.set(&[n + j, i], hv);
            out.set(&[n + i, n + j], vv);
        }
    }
    Ok(out)
}

/// The same Lie derivative assembled through the frame derivations
/// `(L S)(X_A, X_B) = X^c(S(X_A, X_B)) - S(L X_A, X_B) - S(X_A, L X_B)`
/// with `L X_i = -d_i v^h X_h - (L_V N^h_i) X_hbar` and
/// `L X_ibar = -d_i v^h X_hbar`. Used as the independent second assembly
/// route.
pub fn lie_lift_metric_frame(
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
    coeffs: LiftCoefficients,
) -> Result<TensorValue> {
    let n = bundle.dimension();
    let data = field_data(v, &bundle.sample)?;
    let lie_n = lie_nonlinear_connection(bundle, v)?;

    // vertical complete-lift components u^h = y^m nabla_m v^h
    let lift = complete_lift(bundle, v)?;
    let u = &lift.vertical;

    // X^c(g_ij) = v^h delta_h g_ij + u^h d(g_ij)/dy^h
    let mut xc_g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let g = bundle.g_jet(i, j);
            let mut acc = 0.0;
            for h in 0..n {
                acc += data.v[h] * bundle.delta_value(g, h);
                acc += u[h] * g.derivative(n + h).value();
            }
            xc_g[i][j] = acc;
        }
    }

    let mut out = TensorValue::zeros(vec![2 * n, 2 * n], lift_signature());
    for i in 0..n {
        for j in 0..n {
            let mut transport = 0.0;
            let mut lien_i = 0.0;
            let mut lien_j = 0.0;
            for h in 0..n {
                transport += data.dv[h][i] * bundle.g.get(&[h, j])
                    + data.dv[h][j] * bundle.g.get(&[i, h]);
                lien_i += lie_n.get(&[h, i]) * bundle.g.get(&[h, j]);
                lien_j += lie_n.get(&[h, j]) * bundle.g.get(&[i, h]);
            }
            let hh = coeffs.alpha * (xc_g[i][j] + transport) + coeffs.beta * (lien_i + lien_j);
            let hv = coeffs.beta * (xc_g[i][j] + transport) + coeffs.gamma * lien_i;
            let vv = coeffs.gamma * (xc_g[i][j] + transport);
            out.set(&[i, j], hh);
            out.set(&[i, n + j], hv);
            out.set(&[n + j, i], hv);
            out.set(&[n + i, n + j], vv);
        }
    }
    Ok(out)
}

/// Congruence transform of an adapted-frame bilinear form to the natural
/// frame, using P = [[I, 0], [N, I]] (adapted components of a natural vector
/// are (xi, eta + N xi)).
pub fn adapted_to_natural(matrix: &TensorValue, nonlinear: &TensorValue) -> TensorValue {
    let two_n = matrix.shape()[0];
    let n = two_n / 2;
    let mut p = DMatrix::<f64>::identity(two_n, two_n);
    for i in 0..n {
        for j in 0..n {
            p[(n + i, j)] = nonlinear.get(&[i, j]);
        }
    }
    let m = matrix.as_matrix();
    let nat = p.transpose() * m * p;
    TensorValue::from_fn(vec![two_n, two_n], lift_signature(), |idx| {
        nat[(idx[0], idx[1])]
    })
}

/// Flow-based finite-difference Lie derivative of the lift metric, in the
/// natural frame: one explicit Euler step of the extended point
/// transformation in each direction (t and -t) and a central difference of
/// the pullbacks.
pub fn flow_lie_lift_fd(
    structure: &FinslerStructure,
    v: &VectorFieldOnM,
    sample: &TangentSample,
    coeffs: LiftCoefficients,
    t: f64,
) -> Result<TensorValue> {
    let n = structure.dimension();
    let data = field_data(v, sample)?;

    let pullback = |t: f64| -> Result<DMatrix<f64>> {
        // extended point transformation
        let mut x = sample.x.clone();
        let mut y = sample.y.clone();
        for a in 0..n {
            x[a] += t * data.v[a];
            let mut dy = 0.0;
            for b in 0..n {
                dy += data.dv[a][b] * sample.y[b];
            }
            y[a] += t * dy;
        }
        let moved = TangentSample::new(x, y)?;
        let (g, nl) = geometry::metric_and_nonlinear(structure, &moved)?;

        // natural-frame lift metric at the moved point
        let mut s_ad = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                s_ad[(i, j)] = coeffs.alpha * g.get(&[i, j]);
                s_ad[(i, n + j)] = coeffs.beta * g.get(&[i, j]);
                s_ad[(n + i, j)] = coeffs.beta * g.get(&[i, j]);
                s_ad[(n + i, n + j)] = coeffs.gamma * g.get(&[i, j]);
            }
        }
        let mut p = DMatrix::<f64>::identity(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                p[(n + i, j)] = nl.get(&[i, j]);
            }
        }
        let s_nat = p.transpose() * s_ad * p;

        // differential of the transformation
        let mut jac = DMatrix::<f64>::identity(2 * n, 2 * n);
        for a in 0..n {
            for c in 0..n {
                jac[(a, c)] += t * data.dv[a][c];
                jac[(n + a, n + c)] += t * data.dv[a][c];
                let mut h = 0.0;
                for b in 0..n {
                    h += data.ddv[a][c][b] * sample.y[b];
                }
                jac[(n + a, c)] = t * h;
            }
        }
        Ok(jac.transpose() * s_nat * jac)
    };

    let plus = pullback(t)?;
    let minus = pullback(-t)?;
    let diff = (plus - minus) / (2.0 * t);
    Ok(TensorValue::from_fn(
        vec![2 * n, 2 * n],
        lift_signature(),
        |idx| diff[(idx[0], idx[1])],
    ))
}

/// Finite-difference bracket estimate of L_V N: the negated vertical
/// adapted component of [X^c, delta_i], with all field components evaluated
/// jet-exactly at displaced points and the bracket itself by central
/// differences. Serves as the oracle for [`lie_nonlinear_connection`].
pub fn lie_nonlinear_bracket_fd(
    structure: &FinslerStructure,
    v: &VectorFieldOnM,
    sample: &TangentSample,
    h: f64,
) -> Result<TensorValue> {
    let n = structure.dimension();

    // natural-frame components of X^c and of each delta_i at a point
    let eval_fields = |q: &TangentSample| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let bundle = geometry::cartan_connection(structure, q)?;
        let data = field_data(v, q)?;
        let mut xc = vec![0.0; 2 * n];
        for a in 0..n {
            xc[a] = data.v[a];
        }
        for m in 0..n {
            let mut u = 0.0;
            for j in 0..n {
                let mut nabla = data.dv[m][j];
                for c in 0..n {
                    nabla += bundle.connection.get(&[c, m, j]) * data.v[c];
                }
                u += q.y[j] * nabla;
            }
            let mut vert = u;
            for a in 0..n {
                vert -= data.v[a] * bundle.nonlinear.get(&[m, a]);
            }
            xc[n + m] = vert;
        }
        let mut deltas = Vec::with_capacity(n);
        for i in 0..n {
            let mut d = vec![0.0; 2 * n];
            d[i] = 1.0;
            for m in 0..n {
                d[n + m] = -bundle.nonlinear.get(&[m, i]);
            }
            deltas.push(d);
        }
        Ok((xc, deltas))
    };

    let (xc0, deltas0) = eval_fields(sample)?;
    let mut plus = Vec::with_capacity(2 * n);
    let mut minus = Vec::with_capacity(2 * n);
    for b in 0..2 * n {
        plus.push(eval_fields(&sample.displaced(b, h))?);
        minus.push(eval_fields(&sample.displaced(b, -h))?);
    }

    let nl = geometry::nonlinear_connection(structure, sample)?;
    let mut out = TensorValue::zeros(
        vec![n, n],
        vec![IndexInfo::upper("h"), IndexInfo::lower("i")],
    );
    for i in 0..n {
        // bracket components in the natural frame
        let mut bracket = vec![0.0; 2 * n];
        for comp in 0..2 * n {
            let mut acc = 0.0;
            for b in 0..2 * n {
                let d_delta = (plus[b].1[i][comp] - minus[b].1[i][comp]) / (2.0 * h);
                let d_xc = (plus[b].0[comp] - minus[b].0[comp]) / (2.0 * h);
                acc += xc0[b] * d_delta - deltas0[i][b] * d_xc;
            }
            bracket[comp] = acc;
        }
        for k in 0..n {
            let mut vertical = bracket[n + k];
            for m in 0..n {
                vertical += nl.get(&[k, m]) * bracket[m];
            }
            out.set(&[k, i], -vertical);
        }
    }
    Ok(out)
}

/// Flow-pullback finite-difference estimates of L_V N and L_V F from the
/// transformation laws of the connection objects. Test oracles for the
/// analytic formulas.
pub fn lie_connection_flow_fd(
    structure: &FinslerStructure,
    v: &VectorFieldOnM,
    sample: &TangentSample,
    t: f64,
) -> Result<(TensorValue, TensorValue)> {
    let n = structure.dimension();
    let data = field_data(v, sample)?;

    let moved = |t: f64| -> Result<TangentSample> {
        let mut x = sample.x.clone();
        let mut y = sample.y.clone();
        for a in 0..n {
            x[a] += t * data.v[a];
            let mut dy = 0.0;
            for b in 0..n {
                dy += data.dv[a][b] * sample.y[b];
            }
            y[a] += t * dy;
        }
        TangentSample::new(x, y)
    };

    let pullbacks = |t: f64| -> Result<(DMatrix<f64>, TensorValue)> {
        let q = moved(t)?;
        let bundle = geometry::cartan_connection(structure, &q)?;
        let mut jac = DMatrix::<f64>::identity(n, n);
        for a in 0..n {
            for c in 0..n {
                jac[(a, c)] += t * data.dv[a][c];
            }
        }
        let jac_inv = jac.clone().try_inverse().ok_or_else(|| {
            Error::singular("flow jacobian not invertible").at_sample(&sample.x, &sample.y)
        })?;

        // N pullback: (J^-1)^a_b [N^b_c(q) J^c_i + t (d_i d_c v^b) y^c]
        let mut n_pull = TensorValue::zeros(
            vec![n, n],
            vec![IndexInfo::upper("h"), IndexInfo::lower("i")],
        );
        for a in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for b in 0..n {
                    let mut inner = 0.0;
                    for c in 0..n {
                        inner += bundle.nonlinear.get(&[b, c]) * jac[(c, i)];
                        inner += t * data.ddv[b][i][c] * sample.y[c];
                    }
                    acc += jac_inv[(a, b)] * inner;
                }
                n_pull.set(&[a, i], acc);
            }
        }

        // connection pullback:
        // (J^-1)^a_b [F^b_cd(q) J^c_i J^d_k + t d_i d_k v^b]
        let mut f_pull = TensorValue::zeros(
            vec![n, n, n],
            vec![
                IndexInfo::lower("i"),
                IndexInfo::upper("h"),
                IndexInfo::lower("k"),
            ],
        );
        for i in 0..n {
            for a in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for b in 0..n {
                        let mut inner = t * data.ddv[b][i][k];
                        for c in 0..n {
                            for d in 0..n {
                                inner +=
                                    bundle.connection.get(&[c, b, d]) * jac[(c, i)] * jac[(d, k)];
                            }
                        }
                        acc += jac_inv[(a, b)] * inner;
                    }
                    f_pull.set(&[i, a, k], acc);
                }
            }
        }
        Ok((DMatrix::from_fn(n, n, |r, c| n_pull.get(&[r, c])), f_pull))
    };

    let (n_plus, f_plus) = pullbacks(t)?;
    let (n_minus, f_minus) = pullbacks(-t)?;
    let n_diff = (n_plus - n_minus) / (2.0 * t);
    let lie_n = TensorValue::from_fn(
        vec![n, n],
        vec![IndexInfo::upper("h"), IndexInfo::lower("i")],
        |idx| n_diff[(idx[0], idx[1])],
    );
    let lie_f = f_plus.add(&f_minus.scale(-1.0)).scale(0.5 / t);
    Ok((lie_n, lie_f))
}

/// Residuals of the three frame bracket identities, estimated by composing
/// finite-difference frame derivations on scalar test functions and
/// comparing against the engine's curvature and connection tensors.
#[derive(Clone, Debug)]
pub struct BracketReport {
    /// [delta_i, delta_j] = R^h_ij d/dy^h
    pub horizontal: f64,
    /// [delta_i, d/dy^j] = (dN^h_i/dy^j) d/dy^h
    pub mixed: f64,
    /// [d/dy^i, d/dy^j] = 0
    pub vertical: f64,
}

impl BracketReport {
    pub fn max(&self) -> f64 {
        self.horizontal.max(self.mixed).max(self.vertical)
    }
}

pub fn bracket_check(
    structure: &FinslerStructure,
    sample: &TangentSample,
    h: f64,
) -> Result<BracketReport> {
    let n = structure.dimension();
    let bundle = geometry::cartan_connection(structure, sample)?;
    let curv = bundle.hh_curvature()?;

    type Scalar<'a> = Box<dyn Fn(&TangentSample) -> Result<f64> + 'a>;
    let tests: Vec<Scalar> = vec![
        Box::new(|q: &TangentSample| {
            let f = structure.evaluate_f(q)?;
            Ok(f * f)
        }),
        Box::new(|q: &TangentSample| {
            let mut acc = 0.0;
            for i in 0..q.x.len() {
                acc += (0.4 + 0.2 * i as f64) * q.x[i] * q.y[i] * q.y[i];
            }
            Ok(acc)
        }),
        Box::new(|q: &TangentSample| {
            let sum_x2: f64 = q.x.iter().map(|c| c * c).sum();
            let mut lin = 0.0;
            for (j, &yj) in q.y.iter().enumerate() {
                lin += (0.5 + 0.3 * j as f64) * yj;
            }
            Ok(sum_x2 * lin + 0.7 * q.x[0] * q.x[0] * q.x[1])
        }),
    ];

    let d_hat = |f: &dyn Fn(&TangentSample) -> Result<f64>,
                 var: usize,
                 q: &TangentSample|
     -> Result<f64> {
        Ok((f(&q.displaced(var, h))? - f(&q.displaced(var, -h))?) / (2.0 * h))
    };
    // delta-hat needs N at the evaluation point
    let delta_hat = |f: &dyn Fn(&TangentSample) -> Result<f64>,
                     i: usize,
                     q: &TangentSample|
     -> Result<f64> {
        let nl = geometry::nonlinear_connection(structure, q)?;
        let mut acc = d_hat(f, i, q)?;
        for m in 0..n {
            acc -= nl.get(&[m, i]) * d_hat(f, n + m, q)?;
        }
        Ok(acc)
    };

    let mut horizontal = 0.0f64;
    let mut mixed = 0.0f64;
    let mut vertical = 0.0f64;
    for phi in &tests {
        let fiber_grad: Vec<f64> = (0..n)
            .map(|m| d_hat(phi.as_ref(), n + m, sample))
            .collect::<Result<_>>()?;
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    let psi_j = |q: &TangentSample| delta_hat(phi.as_ref(), j, q);
                    let psi_i = |q: &TangentSample| delta_hat(phi.as_ref(), i, q);
                    let lhs = delta_hat(&psi_j, i, sample)? - delta_hat(&psi_i, j, sample)?;
                    let mut rhs = 0.0;
                    for m in 0..n {
                        rhs += curv.r.get(&[m, i, j]) * fiber_grad[m];
                    }
                    horizontal = horizontal.max((lhs - rhs).abs());

                    let dyj = |q: &TangentSample| d_hat(phi.as_ref(), n + j, q);
                    let dyi = |q: &TangentSample| d_hat(phi.as_ref(), n + i, q);
                    let lhs = d_hat(&dyj, n + i, sample)? - d_hat(&dyi, n + j, sample)?;
                    vertical = vertical.max(lhs.abs());
                }
                let dyj = |q: &TangentSample| d_hat(phi.as_ref(), n + j, q);
                let psi_i = |q: &TangentSample| delta_hat(phi.as_ref(), i, q);
                let lhs = delta_hat(&dyj, i, sample)? - d_hat(&psi_i, n + j, sample)?;
                let mut rhs = 0.0;
                for m in 0..n {
                    rhs += bundle.nonlinear_fiber_derivative(m, i, j) * fiber_grad[m];
                }
                mixed = mixed.max((lhs - rhs).abs());
            }
        }
    }
    Ok(BracketReport {
        horizontal,
        mixed,
        vertical,
    })
}

/// Residuals of the flow-derivative check of the three lift forms g1, g2,
/// g3: the assembled block expansion against the flow-based finite
/// difference, compared in the natural frame.
#[derive(Clone, Debug)]
pub struct FormFlowReport {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

impl FormFlowReport {
    pub fn max(&self) -> f64 {
        self.g1.max(self.g2).max(self.g3)
    }
}

pub fn form_flow_check(
    structure: &FinslerStructure,
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
    t: f64,
) -> Result<FormFlowReport> {
    let forms = [
        LiftCoefficients::new(1.0, 0.0, 0.0),
        LiftCoefficients::new(0.0, 1.0, 0.0),
        LiftCoefficients::new(0.0, 0.0, 1.0),
    ];
    let mut residuals = [0.0f64; 3];
    for (slot, coeffs) in forms.iter().enumerate() {
        let assembled = lie_lift_metric_blocks(bundle, v, *coeffs)?;
        let assembled_nat = adapted_to_natural(&assembled, &bundle.nonlinear);
        let flow = flow_lie_lift_fd(structure, v, &bundle.sample, *coeffs, t)?;
        residuals[slot] = assembled_nat.max_abs_diff(&flow);
    }
    Ok(FormFlowReport {
        g1: residuals[0],
        g2: residuals[1],
        g3: residuals[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::LiftCoefficients;
    use approx::assert_relative_eq;

    fn sample(x: &[f64], y: &[f64]) -> TangentSample {
        TangentSample::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn euclidean_bundle(p: &TangentSample) -> ConnectionBundle {
        let s = FinslerStructure::euclidean(p.dimension());
        geometry::cartan_connection(&s, p).unwrap()
    }

    #[test]
    fn field_construction_rejects_fiber_references() {
        assert!(VectorFieldOnM::from_components(&["y1", "0"], 2).is_err());
        assert!(VectorFieldOnM::from_components(&["x1"], 2).is_err());
        assert!(VectorFieldOnM::from_components(&["-x2", "x1"], 2).is_ok());
    }

    #[test]
    fn complete_lift_examples_on_flat_space() {
        let p = sample(&[0.4, -0.8], &[2.0, 3.0]);
        let bundle = euclidean_bundle(&p);

        let translation = VectorFieldOnM::from_components(&["1", "0"], 2).unwrap();
        let lift = complete_lift(&bundle, &translation).unwrap();
        assert_eq!(lift.horizontal, vec![1.0, 0.0]);
        assert!(lift.vertical.iter().all(|&c| c.abs() < 1e-14));

        let dilation = VectorFieldOnM::from_components(&["x1", "x2"], 2).unwrap();
        let lift = complete_lift(&bundle, &dilation).unwrap();
        assert_eq!(lift.horizontal, vec![0.4, -0.8]);
        assert_relative_eq!(lift.vertical[0], 2.0);
        assert_relative_eq!(lift.vertical[1], 3.0);

        let rotation = VectorFieldOnM::from_components(&["-x2", "x1"], 2).unwrap();
        let p2 = sample(&[0.0, 0.0], &[1.0, 0.0]);
        let bundle2 = euclidean_bundle(&p2);
        let lift = complete_lift(&bundle2, &rotation).unwrap();
        assert_relative_eq!(lift.vertical[0], 0.0);
        assert_relative_eq!(lift.vertical[1], 1.0);
    }

    #[test]
    fn lie_derivative_of_fiber_coordinates_vanishes() {
        let p = sample(&[0.3, 0.9], &[1.2, -0.4]);
        let bundle = euclidean_bundle(&p);
        let n = 2;
        let field = JetTensor::from_fn(vec![n], vec![Variance::Upper], |idx| {
            Jet::variable(p.y[idx[0]], n + idx[0], 2 * n, 1)
        })
        .unwrap();
        for comps in [["x1^2 - x2^2", "2 * x1 * x2"], ["-x2", "x1"]] {
            let v = VectorFieldOnM::from_components(&comps, 2).unwrap();
            let lie = lie_derivative_tensor(&bundle, &v, &field).unwrap();
            assert!(lie.max_abs() <= 1e-12, "residual {:e}", lie.max_abs());
        }
    }

    #[test]
    fn metric_lie_derivative_flat_cases() {
        let p = sample(&[0.5, -0.2], &[0.8, 0.6]);
        let bundle = euclidean_bundle(&p);
        let g_field = bundle.metric_field();

        let rotation = VectorFieldOnM::from_components(&["-x2", "x1"], 2).unwrap();
        let lie = lie_derivative_tensor(&bundle, &rotation, &g_field).unwrap();
        assert!(lie.max_abs() <= 1e-12);

        let dilation = VectorFieldOnM::from_components(&["x1", "x2"], 2).unwrap();
        let lie = lie_derivative_tensor(&bundle, &dilation, &g_field).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 2.0 } else { 0.0 };
                assert_relative_eq!(lie.get(&[i, j]), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn nonlinear_lie_derivative_vanishes_for_linear_fields_on_flat_space() {
        let p = sample(&[0.7, 0.1], &[1.0, -0.5]);
        let bundle = euclidean_bundle(&p);
        let dilation = VectorFieldOnM::from_components(&["x1", "x2"], 2).unwrap();
        let lie_n = lie_nonlinear_connection(&bundle, &dilation).unwrap();
        assert!(lie_n.max_abs() <= 1e-12);
    }

    #[test]
    fn nonlinear_lie_derivative_matches_bracket_for_quadratic_field() {
        let s = FinslerStructure::euclidean(2);
        let p = sample(&[0.4, -0.3], &[1.1, 0.7]);
        let bundle = geometry::cartan_connection(&s, &p).unwrap();
        let v = VectorFieldOnM::from_components(&["x1^2 - x2^2", "2 * x1 * x2"], 2).unwrap();

        let analytic = lie_nonlinear_connection(&bundle, &v).unwrap();
        // on flat space the value is y^c d_i d_c v^h
        assert_relative_eq!(analytic.get(&[0, 0]), 2.0 * p.y[0], epsilon = 1e-10);
        assert_relative_eq!(analytic.get(&[0, 1]), -2.0 * p.y[1], epsilon = 1e-10);
        assert_relative_eq!(analytic.get(&[1, 0]), 2.0 * p.y[1], epsilon = 1e-10);
        assert_relative_eq!(analytic.get(&[1, 1]), 2.0 * p.y[0], epsilon = 1e-10);

        let bracket = lie_nonlinear_bracket_fd(&s, &v, &p, 1e-4).unwrap();
        assert!(
            analytic.max_abs_diff(&bracket) <= 1e-5,
            "bracket disagreement {:e}",
            analytic.max_abs_diff(&bracket)
        );
    }

    #[test]
    fn lift_metric_derivative_for_dilation_is_twice_lift_metric() {
        let p = sample(&[0.6, 0.2], &[1.4, -0.9]);
        let bundle = euclidean_bundle(&p);
        let dilation = VectorFieldOnM::from_components(&["x1", "x2"], 2).unwrap();
        let coeffs = LiftCoefficients::new(1.0, 0.0, 1.0);
        let lie = lie_lift_metric_blocks(&bundle, &dilation, coeffs).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 2.0 } else { 0.0 };
                assert_relative_eq!(lie.get(&[i, j]), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn frame_and_block_assemblies_agree() {
        let p = sample(&[0.5, -0.1], &[1.0, 0.8]);
        let bundle = euclidean_bundle(&p);
        let coeffs = LiftCoefficients::new(2.0, 1.0, 1.0);
        for comps in [["x1^2 - x2^2", "2 * x1 * x2"], ["-x2", "x1"], ["1", "0"]] {
            let v = VectorFieldOnM::from_components(&comps, 2).unwrap();
            let blocks = lie_lift_metric_blocks(&bundle, &v, coeffs).unwrap();
            let frame = lie_lift_metric_frame(&bundle, &v, coeffs).unwrap();
            assert!(
                blocks.max_abs_diff(&frame) <= 1e-10,
                "paths differ by {:e}",
                blocks.max_abs_diff(&frame)
            );
        }
    }

    #[test]
    fn interchange_residual_trivial_for_linear_fields_on_flat_space() {
        let p = sample(&[0.2, 0.9], &[0.7, -1.1]);
        let bundle = euclidean_bundle(&p);
        let rotation = VectorFieldOnM::from_components(&["-x2", "x1"], 2).unwrap();
        let res = interchange_residual(&bundle, &rotation).unwrap();
        assert!(res.max_abs() <= 1e-12);
    }
}
