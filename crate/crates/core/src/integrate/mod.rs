//! Quadrature of forms over simplices and chains, Stokes residuals, and
//! period matrices.
//!
//! A k-form is integrated over a simplex map by evaluating the coefficient
//! vector at tensor Gauss nodes (mapped from the cube onto the simplex by
//! the collapsing substitution) against the Jacobian minors of the map.
//! Forms whose zone excludes boundary pieces integrate on an inward-shrunk
//! simplex with a geometric epsilon schedule and Richardson extrapolation
//! to epsilon -> 0; the direct epsilon = 0 value is also reported when it
//! exists.

use num::rational::BigRational;
use num::ToPrimitive;

use crate::expr::{DomainError, ScalarExpr};
use crate::forms::{MultiIndex, SmoothMap, ZonedForm};
use crate::oracle::{AffineSimplex, Cycle};

/// Oriented C^1 map from the standard simplex `{u : u_i >= 0, sum <= 1}`.
#[derive(Clone, Debug)]
pub struct SimplexMap {
    pub kind: SimplexKind,
    pub orientation: i8,
}

#[derive(Clone, Debug)]
pub enum SimplexKind {
    /// Affine map given by k+1 vertices in R^n.
    Affine { vertices: Vec<Vec<f64>> },
    /// Arbitrary smooth map whose source coordinates are simplex coordinates.
    Smooth { map: SmoothMap },
}

impl SimplexMap {
    pub fn affine(vertices: Vec<Vec<f64>>) -> SimplexMap {
        assert!(!vertices.is_empty());
        SimplexMap {
            kind: SimplexKind::Affine { vertices },
            orientation: 1,
        }
    }

    pub fn smooth(map: SmoothMap) -> SimplexMap {
        SimplexMap {
            kind: SimplexKind::Smooth { map },
            orientation: 1,
        }
    }

    pub fn reversed(&self) -> SimplexMap {
        SimplexMap {
            kind: self.kind.clone(),
            orientation: -self.orientation,
        }
    }

    pub fn degree(&self) -> usize {
        match &self.kind {
            SimplexKind::Affine { vertices } => vertices.len() - 1,
            SimplexKind::Smooth { map } => map.source_dim(),
        }
    }

    pub fn target_dim(&self) -> usize {
        match &self.kind {
            SimplexKind::Affine { vertices } => vertices[0].len(),
            SimplexKind::Smooth { map } => map.target_dim(),
        }
    }

    fn apply(&self, u: &[f64]) -> Result<Vec<f64>, DomainError> {
        match &self.kind {
            SimplexKind::Affine { vertices } => {
                let n = vertices[0].len();
                let mut x = vertices[0].clone();
                for (j, uj) in u.iter().enumerate() {
                    for i in 0..n {
                        x[i] += uj * (vertices[j + 1][i] - vertices[0][i]);
                    }
                }
                Ok(x)
            }
            SimplexKind::Smooth { map } => map.apply(u),
        }
    }

    /// Columns of the differential at `u` (constant for affine maps).
    fn tangents(&self, u: &[f64]) -> Result<Vec<Vec<f64>>, DomainError> {
        match &self.kind {
            SimplexKind::Affine { vertices } => {
                let n = vertices[0].len();
                Ok((1..vertices.len())
                    .map(|j| (0..n).map(|i| vertices[j][i] - vertices[0][i]).collect())
                    .collect())
            }
            SimplexKind::Smooth { map } => {
                let k = map.source_dim();
                let n = map.target_dim();
                let mut cols = vec![vec![0.0; n]; k];
                for j in 0..n {
                    for (i, col) in cols.iter_mut().enumerate() {
                        col[j] = map.jacobian_entry(j, i).eval(u)?;
                    }
                }
                Ok(cols)
            }
        }
    }

    /// The i-th boundary face with its alternating orientation.
    pub fn face(&self, i: usize) -> SimplexMap {
        let k = self.degree();
        assert!(k >= 1 && i <= k);
        let sign = if i % 2 == 0 { 1 } else { -1 };
        match &self.kind {
            SimplexKind::Affine { vertices } => {
                let verts: Vec<Vec<f64>> = vertices
                    .iter()
                    .enumerate()
                    .filter_map(|(j, v)| (j != i).then(|| v.clone()))
                    .collect();
                SimplexMap {
                    kind: SimplexKind::Affine { vertices: verts },
                    orientation: self.orientation * sign,
                }
            }
            SimplexKind::Smooth { map } => {
                // Compose with the affine inclusion of the i-th face of the
                // standard simplex (vertices 0, e_1, ..., e_k; drop the i-th).
                let mut verts: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
                verts.push(vec![0.0; k]);
                for j in 0..k {
                    let mut e = vec![0.0; k];
                    e[j] = 1.0;
                    verts.push(e);
                }
                verts.remove(i);
                let inclusion = affine_face_map(&verts);
                let composed = map.compose(&inclusion).expect("face inclusion composes");
                SimplexMap {
                    kind: SimplexKind::Smooth { map: composed },
                    orientation: self.orientation * sign,
                }
            }
        }
    }
}

fn affine_face_map(vertices: &[Vec<f64>]) -> SmoothMap {
    let k = vertices.len() - 1; // source dimension
    let n = vertices[0].len();
    fn lit(v: f64) -> ScalarExpr {
        ScalarExpr::rational(BigRational::from_float(v).expect("finite vertex"))
    }
    let components: Vec<ScalarExpr> = (0..n)
        .map(|i| {
            let mut acc = lit(vertices[0][i]);
            for j in 0..k {
                let slope = vertices[j + 1][i] - vertices[0][i];
                acc = acc.add(&lit(slope).mul(&ScalarExpr::var(j)));
            }
            acc.normalized()
        })
        .collect();
    SmoothMap::new(
        k,
        n,
        components,
        crate::geometry::Region::open_box(&vec![(-0.25, 1.25); k]),
    )
}

/// Quadrature and epsilon-shrink parameters.
#[derive(Clone, Debug)]
pub struct QuadratureSpec {
    /// Gauss-Legendre points per axis.
    pub order: usize,
    /// Relative inward shrink factors (toward the barycenter).
    pub eps_schedule: Vec<f64>,
    pub tol: f64,
    /// Maximum seam-aware bisection depth: parameter-space cells are split
    /// while a zone-condition atom changes sign across them.
    pub refine_depth: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            order: 12,
            eps_schedule: (3..=8).map(|k| 0.5f64.powi(k)).collect(),
            tol: 1e-9,
            refine_depth: 12,
        }
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum QuadratureError {
    #[error("degree mismatch: form has degree {form}, simplex has degree {simplex}")]
    DegreeMismatch { form: usize, simplex: usize },
    #[error("dimension mismatch: form lives in dimension {form}, simplex maps into {simplex}")]
    DimensionMismatch { form: usize, simplex: usize },
    #[error(
        "epsilon extrapolation is not settling (spread {spread:.3e} over the last steps): \
         the integrand looks non-integrable at the boundary"
    )]
    Diverged { spread: f64 },
    #[error("the integrand is undefined on the whole sampled simplex: {0}")]
    Undefined(String),
}

/// Value with its extrapolation diagnostics.
#[derive(Clone, Debug)]
pub struct IntegralValue {
    pub value: f64,
    pub error_estimate: f64,
    /// (epsilon, raw value) pairs actually used.
    pub eps_trace: Vec<(f64, f64)>,
    /// Direct epsilon = 0 quadrature, when every node evaluated.
    pub direct: Option<f64>,
}

/// Gauss-Legendre nodes and weights on (0, 1).
pub fn gauss_legendre_unit(order: usize) -> Vec<(f64, f64)> {
    let n = order.max(2);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration from the Chebyshev initial guess on (-1, 1).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tensor nodes on the standard k-simplex via the collapsing substitution
/// `u_j = xi_j * (1 - sum_{l<j} u_l)`, weights including its Jacobian.
pub fn simplex_nodes(k: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    if k == 0 {
        return vec![(Vec::new(), 1.0)];
    }
    let line = gauss_legendre_unit(order);
    let mut nodes: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..k {
        let mut next = Vec::with_capacity(nodes.len() * line.len());
        for (u, w) in &nodes {
            let remaining = 1.0 - u.iter().sum::<f64>();
            for (xi, wxi) in &line {
                let mut u2 = u.clone();
                u2.push(xi * remaining);
                next.push((u2, w * wxi * remaining));
            }
        }
        nodes = next;
    }
    nodes
}

fn det(m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    match k {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            let mut acc = 0.0;
            for j in 0..k {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter_map(|(c, v)| (c != j).then_some(*v))
                            .collect()
                    })
                    .collect();
                let term = m[0][j] * det(&minor);
                acc += if j % 2 == 0 { term } else { -term };
            }
            acc
        }
    }
}

/// Integrand value of the pulled-back form at a simplex coordinate.
fn pullback_density(
    omega: &ZonedForm,
    sigma: &SimplexMap,
    u: &[f64],
) -> Result<f64, DomainError> {
    let x = sigma.apply(u)?;
    let k = omega.degree();
    if k == 0 {
        return omega.eval_coeff(&MultiIndex::empty(), &x);
    }
    let tangents = sigma.tangents(u)?; // k columns in R^n
    let mut acc = 0.0;
    for (idx, coeff) in omega.coeffs() {
        let a = coeff.eval(&x)?;
        if a == 0.0 {
            continue;
        }
        // minor of the tangent matrix with rows = idx
        let sub: Vec<Vec<f64>> = idx
            .indices()
            .iter()
            .map(|&row| tangents.iter().map(|col| col[row]).collect())
            .collect();
        acc += a * det(&sub);
    }
    Ok(acc)
}

fn quad_over_shrunk(
    omega: &ZonedForm,
    sigma: &SimplexMap,
    nodes: &[(Vec<f64>, f64)],
    eps: f64,
) -> Result<f64, DomainError> {
    let k = sigma.degree();
    let c = 1.0 / (k as f64 + 1.0); // barycenter coordinate
    let scale = 1.0 - eps;
    let mut acc = 0.0;
    for (u, w) in nodes {
        let shrunk: Vec<f64> = u.iter().map(|ui| c + scale * (ui - c)).collect();
        let v = pullback_density(omega, sigma, &shrunk)?;
        acc += w * v;
    }
    Ok(acc * scale.powi(k as i32) * f64::from(sigma.orientation))
}

/// Seam expressions for subdivision: zone-condition atoms together with
/// the coefficientwise smoothness atoms.
fn seam_exprs(omega: &ZonedForm) -> Vec<ScalarExpr> {
    let mut set = std::collections::BTreeSet::new();
    let mut collect = |c: &crate::expr::SemiCondition| {
        let mut stack = vec![c.clone()];
        while let Some(c) = stack.pop() {
            match c {
                crate::expr::SemiCondition::Atom(_, e) => {
                    let n = e.normalized();
                    if !n.is_const() {
                        set.insert(n);
                    }
                }
                crate::expr::SemiCondition::And(items)
                | crate::expr::SemiCondition::Or(items) => stack.extend(items),
                _ => {}
            }
        }
    };
    if let Some(z) = omega.zone() {
        collect(&z.condition);
    }
    for c in omega.coeffs().values() {
        collect(&crate::expr::smoothness_condition(c));
    }
    set.into_iter().collect()
}

/// Does any seam change sign over the image of the parameter sub-simplex?
fn seam_crosses(sigma: &SimplexMap, param: &[Vec<f64>], seams: &[ScalarExpr]) -> bool {
    if seams.is_empty() {
        return false;
    }
    // probe vertices, edge midpoints, and the barycenter
    let mut probes: Vec<Vec<f64>> = param.to_vec();
    for i in 0..param.len() {
        for j in i + 1..param.len() {
            probes.push(
                param[i]
                    .iter()
                    .zip(&param[j])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
            );
        }
    }
    let k = param[0].len();
    let mut bary = vec![0.0; k];
    for v in param {
        for i in 0..k {
            bary[i] += v[i] / param.len() as f64;
        }
    }
    probes.push(bary);
    let images: Vec<Option<Vec<f64>>> = probes.iter().map(|u| sigma.apply(u).ok()).collect();
    for seam in seams {
        let mut pos = false;
        let mut neg = false;
        for img in images.iter().flatten() {
            match seam.eval(img) {
                Ok(v) if v > 0.0 => pos = true,
                Ok(v) if v < 0.0 => neg = true,
                Ok(_) => {
                    pos = true;
                    neg = true;
                }
                Err(_) => {}
            }
            if pos && neg {
                return true;
            }
        }
    }
    false
}

fn longest_edge(param: &[Vec<f64>]) -> (usize, usize) {
    let mut best = (0, 1);
    let mut best_len = -1.0;
    for i in 0..param.len() {
        for j in i + 1..param.len() {
            let len: f64 = param[i]
                .iter()
                .zip(&param[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if len > best_len {
                best_len = len;
                best = (i, j);
            }
        }
    }
    best
}

/// Integral of a form over a simplex: seam-aware parameter-space bisection,
/// then per-leaf quadrature with epsilon extrapolation where the direct
/// rule hits undefined zone boundaries.
pub fn integrate_simplex(
    omega: &ZonedForm,
    sigma: &SimplexMap,
    spec: &QuadratureSpec,
) -> Result<IntegralValue, QuadratureError> {
    if omega.degree() != sigma.degree() {
        return Err(QuadratureError::DegreeMismatch {
            form: omega.degree(),
            simplex: sigma.degree(),
        });
    }
    if omega.dim() != sigma.target_dim() {
        return Err(QuadratureError::DimensionMismatch {
            form: omega.dim(),
            simplex: sigma.target_dim(),
        });
    }
    let k = sigma.degree();
    if k == 0 {
        return integrate_leaf(omega, sigma, spec);
    }
    let seams = seam_exprs(omega);
    // standard simplex in parameter space
    let mut unit: Vec<Vec<f64>> = vec![vec![0.0; k]];
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        unit.push(e);
    }
    let mut queue: Vec<(Vec<Vec<f64>>, usize)> = vec![(unit, 0)];
    let mut value = 0.0;
    let mut error_estimate = 0.0;
    let mut direct_acc = Some(0.0);
    let mut first_trace: Vec<(f64, f64)> = Vec::new();
    let mut leaves = 0usize;
    while let Some((param, depth)) = queue.pop() {
        if depth < spec.refine_depth && seam_crosses(sigma, &param, &seams) {
            let (i, j) = longest_edge(&param);
            let mid: Vec<f64> = param[i]
                .iter()
                .zip(&param[j])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let mut a = param.clone();
            a[j] = mid.clone();
            let mut b = param;
            b[i] = mid;
            queue.push((a, depth + 1));
            queue.push((b, depth + 1));
            continue;
        }
        let piece = restrict_to_param(sigma, &param);
        let leaf = integrate_leaf(omega, &piece, spec)?;
        value += leaf.value;
        error_estimate += leaf.error_estimate;
        direct_acc = match (direct_acc, leaf.direct) {
            (Some(acc), Some(d)) => Some(acc + d),
            _ => None,
        };
        if leaves == 0 {
            first_trace = leaf.eps_trace;
        }
        leaves += 1;
    }
    Ok(IntegralValue {
        value,
        error_estimate,
        eps_trace: if leaves == 1 { first_trace } else { Vec::new() },
        direct: direct_acc,
    })
}

/// The map restricted to an affine sub-simplex of parameter space.
fn restrict_to_param(sigma: &SimplexMap, param: &[Vec<f64>]) -> SimplexMap {
    match &sigma.kind {
        SimplexKind::Affine { .. } => {
            let vertices: Vec<Vec<f64>> = param
                .iter()
                .map(|u| sigma.apply(u).expect("affine maps are total"))
                .collect();
            SimplexMap {
                kind: SimplexKind::Affine { vertices },
                orientation: sigma.orientation,
            }
        }
        SimplexKind::Smooth { map } => {
            let inclusion = affine_face_map(param);
            SimplexMap {
                kind: SimplexKind::Smooth {
                    map: map.compose(&inclusion).expect("inclusion composes"),
                },
                orientation: sigma.orientation,
            }
        }
    }
}

fn integrate_leaf(
    omega: &ZonedForm,
    sigma: &SimplexMap,
    spec: &QuadratureSpec,
) -> Result<IntegralValue, QuadratureError> {
    let nodes = simplex_nodes(sigma.degree(), spec.order);
    let direct = quad_over_shrunk(omega, sigma, &nodes, 0.0).ok();

    let mut trace = Vec::new();
    for eps in &spec.eps_schedule {
        match quad_over_shrunk(omega, sigma, &nodes, *eps) {
            Ok(v) => trace.push((*eps, v)),
            Err(e) => {
                if trace.is_empty() && direct.is_none() {
                    return Err(QuadratureError::Undefined(e.to_string()));
                }
            }
        }
    }
    if trace.is_empty() {
        let value = direct.ok_or(QuadratureError::Undefined(
            "no epsilon step evaluated".into(),
        ))?;
        return Ok(IntegralValue {
            value,
            error_estimate: spec.tol,
            eps_trace: trace,
            direct: Some(value),
        });
    }

    // Richardson extrapolation on the geometric schedule.
    let mut table: Vec<Vec<f64>> = vec![trace.iter().map(|(_, v)| *v).collect()];
    let m = table[0].len();
    for j in 1..m {
        let prev = &table[j - 1];
        let mut row = Vec::with_capacity(prev.len() - 1);
        let factor = 2f64.powi(j as i32) - 1.0;
        for i in 1..prev.len() {
            row.push(prev[i] + (prev[i] - prev[i - 1]) / factor);
        }
        table.push(row);
    }
    let value = *table.last().unwrap().last().unwrap();
    let prev_best = if m >= 2 {
        *table[m - 2].last().unwrap()
    } else {
        table[0][0]
    };
    let error_estimate = (value - prev_best).abs();
    let scale = 1f64.max(value.abs());
    if error_estimate > 1e6 * spec.tol * scale && m >= 3 {
        // the last refinements are not Cauchy
        let tail: Vec<f64> = table[0][m.saturating_sub(3)..].to_vec();
        let spread = tail
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            - tail.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > 1e8 * spec.tol * scale {
            return Err(QuadratureError::Diverged { spread });
        }
    }
    Ok(IntegralValue {
        value,
        error_estimate,
        eps_trace: trace,
        direct,
    })
}

/// Rational-weighted sum of simplex integrals.
pub fn integrate_chain(
    omega: &ZonedForm,
    chain: &[(BigRational, SimplexMap)],
    spec: &QuadratureSpec,
) -> Result<IntegralValue, QuadratureError> {
    let mut value = 0.0;
    let mut err = 0.0;
    let mut direct_acc = Some(0.0);
    for (w, sigma) in chain {
        let wi = w.to_f64().unwrap_or(f64::NAN);
        let part = integrate_simplex(omega, sigma, spec)?;
        value += wi * part.value;
        err += wi.abs() * part.error_estimate;
        direct_acc = match (direct_acc, part.direct) {
            (Some(acc), Some(d)) => Some(acc + wi * d),
            _ => None,
        };
    }
    Ok(IntegralValue {
        value,
        error_estimate: err,
        eps_trace: Vec::new(),
        direct: direct_acc,
    })
}

/// A homology-oracle cycle as an integration chain.
pub fn cycle_chain(cycle: &Cycle) -> Vec<(BigRational, SimplexMap)> {
    cycle
        .simplices
        .iter()
        .map(|(w, s)| (w.clone(), simplex_from_affine(s)))
        .collect()
}

fn simplex_from_affine(s: &AffineSimplex) -> SimplexMap {
    SimplexMap::affine(s.vertices.clone())
}

/// Period of a closed form against an oracle cycle.
pub fn integrate_cycle(
    omega: &ZonedForm,
    cycle: &Cycle,
    spec: &QuadratureSpec,
) -> Result<IntegralValue, QuadratureError> {
    // Degree-0 pairing is evaluation at the weighted points.
    if omega.degree() == 0 {
        let mut value = 0.0;
        for (w, s) in &cycle.simplices {
            let v = omega
                .eval_coeff(&MultiIndex::empty(), &s.vertices[0])
                .map_err(|e| QuadratureError::Undefined(e.to_string()))?;
            value += w.to_f64().unwrap_or(f64::NAN) * v;
        }
        return Ok(IntegralValue {
            value,
            error_estimate: 0.0,
            eps_trace: Vec::new(),
            direct: Some(value),
        });
    }
    integrate_chain(omega, &cycle_chain(cycle), spec)
}

/// Exact period for degree-0 pairings with rational data.
pub fn exact_period(omega: &ZonedForm, cycle: &Cycle) -> Option<BigRational> {
    if omega.degree() != 0 {
        return None;
    }
    let coeff = omega.coeffs().get(&MultiIndex::empty())?;
    let mut acc = BigRational::from_integer(0.into());
    for (w, s) in &cycle.simplices {
        let exact = s.exact.as_ref()?;
        let v = coeff.eval_exact(&exact[0]).ok()??;
        acc += w * v;
    }
    Some(acc)
}

/// |int_sigma D omega - int_{boundary sigma} omega| with both routes
/// reported.
#[derive(Clone, Debug)]
pub struct StokesReport {
    pub interior: IntegralValue,
    pub boundary: f64,
    pub residual: f64,
    /// Residual using the direct (non-extrapolated) interior value, when
    /// available: continuous integrands converge both ways.
    pub direct_residual: Option<f64>,
}

pub fn stokes_residual(
    omega: &ZonedForm,
    eta: &ZonedForm,
    sigma: &SimplexMap,
    spec: &QuadratureSpec,
) -> Result<StokesReport, QuadratureError> {
    let interior = integrate_simplex(eta, sigma, spec)?;
    let k = sigma.degree();
    let mut boundary = 0.0;
    for i in 0..=k {
        let face = sigma.face(i);
        let part = integrate_simplex(omega, &face, spec)?;
        boundary += part.value;
    }
    let residual = (interior.value - boundary).abs();
    let direct_residual = interior.direct.map(|d| (d - boundary).abs());
    Ok(StokesReport {
        interior,
        boundary,
        residual,
        direct_residual,
    })
}

/// Period matrix verdicts.
#[derive(Clone, Debug, PartialEq)]
pub enum PairingVerdict {
    Perfect { normalized_det: f64 },
    RankDeficient { rank: usize },
    NotSquare,
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum RankError {
    #[error(
        "rank decision ambiguous: singular values {above:.3e} and {below:.3e} \
         are separated by less than the required factor"
    )]
    Ambiguous { above: f64, below: f64 },
    #[error("quadrature failed while pairing: {0}")]
    Quadrature(#[from] QuadratureError),
}

#[derive(Clone, Debug)]
pub struct PeriodMatrix {
    /// `entries[i][j]` pairs form i with cycle j.
    pub entries: Vec<Vec<f64>>,
    /// Exact values where the pairing was a rational evaluation.
    pub exact: Option<Vec<Vec<BigRational>>>,
    pub rank: usize,
    pub verdict: PairingVerdict,
}

/// Required singular-value separation between the zero and nonzero groups.
const SV_GAP: f64 = 1e3;

pub fn period_matrix(
    forms: &[ZonedForm],
    cycles: &[Cycle],
    spec: &QuadratureSpec,
) -> Result<PeriodMatrix, RankError> {
    let rows = forms.len();
    let cols = cycles.len();
    let mut entries = vec![vec![0.0; cols]; rows];
    let mut exact: Option<Vec<Vec<BigRational>>> = Some(vec![vec![]; rows]);
    for (i, f) in forms.iter().enumerate() {
        for c in cycles.iter() {
            let e = exact_period(f, c);
            let v = match &e {
                Some(r) => r.to_f64().unwrap_or(f64::NAN),
                None => integrate_cycle(f, c, spec)?.value,
            };
            entries[i][cycles.iter().position(|x| std::ptr::eq(x, c)).unwrap()] = v;
            match (&mut exact, e) {
                (Some(rowsacc), Some(r)) => rowsacc[i].push(r),
                (acc, None) => *acc = None,
                _ => {}
            }
        }
    }
    let (rank, verdict) = decide_rank(&entries, exact.as_ref())?;
    Ok(PeriodMatrix {
        entries,
        exact,
        rank,
        verdict,
    })
}

/// Rank by exact elimination when every entry is rational, otherwise by the
/// singular-value gap rule.
pub fn decide_rank(
    entries: &[Vec<f64>],
    exact: Option<&Vec<Vec<BigRational>>>,
) -> Result<(usize, PairingVerdict), RankError> {
    let rows = entries.len();
    let cols = entries.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        let verdict = if rows == cols {
            PairingVerdict::Perfect {
                normalized_det: 1.0,
            }
        } else {
            PairingVerdict::NotSquare
        };
        return Ok((0, verdict));
    }
    let rank = if let Some(ex) = exact {
        let mut m = crate::oracle::linalg::SparseMat::new(rows, cols);
        for (i, row) in ex.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !num::Zero::is_zero(v) {
                    m.columns[j].push((i, v.clone()));
                }
            }
        }
        for j in 0..cols {
            m.finish_column(j);
        }
        crate::oracle::linalg::rank(&m)
    } else {
        singular_rank(entries)?
    };
    let verdict = if rows != cols {
        PairingVerdict::NotSquare
    } else if rank < rows {
        PairingVerdict::RankDeficient { rank }
    } else {
        // determinant after row max-normalization
        let mut normalized = nalgebra::DMatrix::<f64>::zeros(rows, cols);
        for i in 0..rows {
            let scale = entries[i]
                .iter()
                .fold(0f64, |a, b| a.max(b.abs()))
                .max(1e-300);
            for j in 0..cols {
                normalized[(i, j)] = entries[i][j] / scale;
            }
        }
        PairingVerdict::Perfect {
            normalized_det: normalized.determinant().abs(),
        }
    };
    Ok((rank, verdict))
}

fn singular_rank(entries: &[Vec<f64>]) -> Result<usize, RankError> {
    let rows = entries.len();
    let cols = entries[0].len();
    let mut m = nalgebra::DMatrix::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = entries[i][j];
        }
    }
    let svd = m.svd(false, false);
    let mut svs: Vec<f64> = svd.singular_values.iter().cloned().collect();
    svs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = svs[0];
    if top < 1e-12 {
        return Ok(0);
    }
    let floor = top * 1e-9;
    let rank = svs.iter().filter(|s| **s > floor).count();
    if rank < svs.len() {
        let above = svs[rank - 1];
        let below = svs[rank];
        if below > 0.0 && above / below < SV_GAP {
            return Err(RankError::Ambiguous { above, below });
        }
    }
    Ok(rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;

    fn x(i: usize) -> ScalarExpr {
        ScalarExpr::var(i)
    }

    fn angular() -> ZonedForm {
        let r2 = x(0).pow(2).add(&x(1).pow(2));
        ZonedForm::new(
            2,
            1,
            0,
            Region::full_space(2),
            vec![
                (MultiIndex::single(0), x(1).neg().div(&r2)),
                (MultiIndex::single(1), x(0).div(&r2)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn simplex_nodes_integrate_volume() {
        // integral of 1 over the standard k-simplex is 1/k!
        for k in 1..=3 {
            let nodes = simplex_nodes(k, 8);
            let total: f64 = nodes.iter().map(|(_, w)| w).sum();
            let expect = 1.0 / (1..=k).product::<usize>() as f64;
            assert!((total - expect).abs() < 1e-12, "k={k}: {total}");
        }
    }

    #[test]
    fn dx_over_unit_segment() {
        let omega = ZonedForm::new(
            1,
            1,
            1,
            Region::full_space(1),
            vec![(MultiIndex::single(0), ScalarExpr::int(1))],
        )
        .unwrap();
        let sigma = SimplexMap::affine(vec![vec![0.0], vec![1.0]]);
        let v = integrate_simplex(&omega, &sigma, &QuadratureSpec::default()).unwrap();
        assert!((v.value - 1.0).abs() < 1e-9);
        // reversing the orientation negates exactly
        let rev = integrate_simplex(&omega, &sigma.reversed(), &QuadratureSpec::default()).unwrap();
        assert_eq!(rev.value, -v.value);
    }

    #[test]
    fn angular_form_around_square_loop() {
        // four segments around the origin: winding integral = 2 pi
        let omega = angular();
        let corners = [[1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let mut total = 0.0;
        for i in 0..4 {
            let a = corners[i];
            let b = corners[(i + 1) % 4];
            let sigma = SimplexMap::affine(vec![a.to_vec(), b.to_vec()]);
            total += integrate_simplex(&omega, &sigma, &QuadratureSpec::default())
                .unwrap()
                .value;
        }
        assert!(
            (total - std::f64::consts::TAU).abs() < 1e-6 * std::f64::consts::TAU,
            "winding {total}"
        );
    }

    #[test]
    fn zero_form_chain_weights() {
        // weights (1, -1) of equal simplices cancel
        let omega = ZonedForm::new(
            1,
            1,
            1,
            Region::full_space(1),
            vec![(MultiIndex::single(0), x(0).pow(2))],
        )
        .unwrap();
        let sigma = SimplexMap::affine(vec![vec![0.0], vec![1.0]]);
        let chain = vec![
            (BigRational::from_integer(1.into()), sigma.clone()),
            (BigRational::from_integer((-1).into()), sigma),
        ];
        let v = integrate_chain(&omega, &chain, &QuadratureSpec::default()).unwrap();
        assert!(v.value.abs() < 1e-14);
    }

    #[test]
    fn smooth_stokes_is_exact() {
        // omega = x2 dx1 + x1 x2 dx2 over an affine triangle
        let omega = ZonedForm::new(
            2,
            1,
            2,
            Region::full_space(2),
            vec![
                (MultiIndex::single(0), x(1)),
                (MultiIndex::single(1), x(0).mul(&x(1))),
            ],
        )
        .unwrap();
        let eta = crate::forms::raw_d(&omega);
        let sigma = SimplexMap::affine(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.5, 1.5]]);
        let report = stokes_residual(&omega, &eta, &sigma, &QuadratureSpec::default()).unwrap();
        assert!(report.residual < 1e-9, "residual {}", report.residual);
    }

    #[test]
    fn seam_crossing_stokes_with_extrapolation() {
        // omega = max(0, x1 - 1/2)^2 dx2 on the unit triangle: the seam
        // x1 = 1/2 crosses the simplex; both the epsilon limit and the
        // direct route converge.
        let spline = ScalarExpr::int(0)
            .max_with(&x(0).sub(&ScalarExpr::frac(1, 2)))
            .pow(2);
        let omega = ZonedForm::new(
            2,
            1,
            0,
            Region::full_space(2),
            vec![(MultiIndex::single(1), spline)],
        )
        .unwrap();
        let ext = crate::forms::extended_d(&omega, &crate::forms::ExtendOpts::default()).unwrap();
        let sigma = SimplexMap::affine(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let report = stokes_residual(&omega, &ext.eta, &sigma, &QuadratureSpec::default()).unwrap();
        assert!(report.residual < 1e-6, "residual {}", report.residual);
        let direct = report.direct_residual.expect("continuous integrand");
        assert!(direct < 1e-6, "direct residual {direct}");
    }

    #[test]
    fn period_matrix_of_constants_and_points() {
        let one = ZonedForm::scalar(1, 0, Region::interval(0.0, 1.0), ScalarExpr::int(1));
        let cycle = Cycle {
            degree: 0,
            simplices: vec![(
                BigRational::from_integer(1.into()),
                AffineSimplex {
                    vertices: vec![vec![0.5]],
                    exact: Some(vec![vec![BigRational::new(1.into(), 2.into())]]),
                },
            )],
        };
        let pm = period_matrix(&[one], &[cycle], &QuadratureSpec::default()).unwrap();
        assert_eq!(pm.rank, 1);
        assert!(matches!(pm.verdict, PairingVerdict::Perfect { .. }));
        assert!(pm.exact.is_some());
    }

    #[test]
    fn exact_form_has_zero_periods() {
        // d(x1 x2) over a closed loop
        let omega = ZonedForm::new(
            2,
            1,
            1,
            Region::full_space(2),
            vec![
                (MultiIndex::single(0), x(1)),
                (MultiIndex::single(1), x(0)),
            ],
        )
        .unwrap();
        let corners = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let mut total = 0.0;
        for i in 0..4 {
            let sigma = SimplexMap::affine(vec![
                corners[i].to_vec(),
                corners[(i + 1) % 4].to_vec(),
            ]);
            total += integrate_simplex(&omega, &sigma, &QuadratureSpec::default())
                .unwrap()
                .value;
        }
        assert!(total.abs() < 1e-9);
    }
}
