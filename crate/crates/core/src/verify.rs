//! Verification: M-matrix certification, desired-state bounds, error norms and
//! convergence tables.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{self, ProblemSpec, Scheme, SolutionPair};
use crate::eafe::ReactionMode;
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_mass, barycentric_gradients, ScalarField, VectorField};
use crate::mesh::{build_unit_square_with, DiagonalConvention, Point, TriMesh, DEFAULT_VERTEX_CAP};
use crate::problems::Manufactured;
use crate::quadrature::QuadratureRule;
use crate::sparse::{inverse_nonneg_check_with_cap, norm_inf, CsrMatrix, DEFAULT_INVERSE_CHECK_CAP};

/// Relative tolerance of the desired-state bound check.
pub const BOUND_RTOL: f64 = 1e-10;

/// Off-diagonal entries above this fraction of the largest diagonal count as positive.
pub const OFFDIAG_RTOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Nonneg,
    Nonpos,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Nonneg => 1.0,
            Sign::Nonpos => -1.0,
        }
    }
}

/// A margin with its vertex; negative values are violations.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Worst {
    pub vertex: usize,
    pub margin: f64,
}

fn worst(margins: &[f64]) -> Worst {
    let (vertex, margin) = margins
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    Worst { vertex, margin }
}

/// Margins of the discrete bounds, oriented so that each must be `≥ −tol`.
///
/// For `Sign::Nonneg`: `lower_i = (ȳ_h, φ_i)`, `upper_i = (y_d − ȳ_h, φ_i)`,
/// `adjoint_i = −p̄_h(x_i)`; all are negated for `Sign::Nonpos`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub sign: Sign,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub adjoint: Vec<f64>,
    pub worst_lower: Worst,
    pub worst_upper: Worst,
    pub worst_adjoint: Worst,
    /// Number of margins below `−tolerance`.
    pub violations: usize,
    /// Largest violation magnitude, zero when none.
    pub max_violation: f64,
    /// `‖(y_d, φ_i)‖∞`.
    pub load_norm: f64,
    pub tolerance: f64,
    pub ok: bool,
}

impl BoundReport {
    /// Compact JSON without the per-vertex arrays.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "sign": self.sign,
            "ok": self.ok,
            "violations": self.violations,
            "max_violation": self.max_violation,
            "relative_max_violation": if self.load_norm > 0.0 { self.max_violation / self.load_norm } else { 0.0 },
            "worst_lower": self.worst_lower,
            "worst_upper": self.worst_upper,
            "worst_adjoint": self.worst_adjoint,
            "load_norm": self.load_norm,
            "tolerance": self.tolerance,
        })
    }
}

pub fn check_desired_state_bounds(mesh: &TriMesh, sol: &SolutionPair, y_d: &ScalarField, sign: Sign) -> Result<BoundReport> {
    let n = mesh.num_vertices();
    if sol.y_bar.len() != n || sol.p_bar.len() != n {
        return Err(Error::Index(format!("solution has {} entries for {n} vertices", sol.y_bar.len())));
    }
    let s = sign.factor();
    let rule = QuadratureRule::default();
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle_points(t);
        for (_, x, _) in rule.mapped(&tri, mesh.area(t)) {
            let v = y_d(x);
            if !(s * v >= 0.0) {
                return Err(Error::Spec(format!("desired state {v:e} at {x:?} is not {sign:?}")));
            }
        }
    }
    let load = assemble_load(mesh, y_d)?;
    let my = assemble_mass(mesh).mul_vec(&sol.y_bar);
    let lower: Vec<f64> = my.iter().map(|v| s * v).collect();
    let upper: Vec<f64> = load.iter().zip(&my).map(|(f, m)| s * (f - m)).collect();
    let adjoint: Vec<f64> = sol.p_bar.iter().map(|p| -s * p).collect();

    let load_norm = norm_inf(&load);
    let tolerance = BOUND_RTOL * load_norm;
    let all = lower.iter().chain(&upper).chain(&adjoint);
    let violations = all.clone().filter(|&&m| m < -tolerance).count();
    let max_violation = all.fold(0.0f64, |acc, &m| acc.max(-m));
    Ok(BoundReport {
        sign,
        worst_lower: worst(&lower),
        worst_upper: worst(&upper),
        worst_adjoint: worst(&adjoint),
        lower,
        upper,
        adjoint,
        violations,
        max_violation,
        load_norm,
        tolerance,
        ok: violations == 0,
    })
}

/// Closed axis-aligned box `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Region {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Region { x0, x1, y0, y1 }
    }

    pub fn contains(&self, x: Point) -> bool {
        let tol = 1e-12;
        x[0] >= self.x0 - tol && x[0] <= self.x1 + tol && x[1] >= self.y0 - tol && x[1] <= self.y1 + tol
    }

    /// Whether all three vertices of triangle `t` lie in the box.
    pub fn contains_triangle(&self, mesh: &TriMesh, t: usize) -> bool {
        mesh.triangle_points(t).iter().all(|&x| self.contains(x))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]x[{},{}]", self.x0, self.x1, self.y0, self.y1)
    }
}

impl FromStr for Region {
    type Err = Error;

    /// Parses `x0,x1,y0,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Parse(format!("region '{s}': {e}"))))
            .collect::<Result<_>>()?;
        match parts[..] {
            [x0, x1, y0, y1] if x0 <= x1 && y0 <= y1 => Ok(Region::new(x0, x1, y0, y1)),
            _ => Err(Error::Parse(format!("region '{s}' must be x0,x1,y0,y1 with x0<=x1, y0<=y1"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub l2: f64,
    /// Full norm `(‖e‖² + |e|²_{H¹})^{1/2}`.
    pub h1: f64,
}

/// L² and H¹ errors of a P1 field against an exact solution, over the
/// elements fully contained in `region` (or the whole mesh).
pub fn error_norms(
    mesh: &TriMesh,
    numeric: &[f64],
    exact: &ScalarField,
    exact_grad: &VectorField,
    region: Option<&Region>,
) -> Result<ErrorNorms> {
    if numeric.len() != mesh.num_vertices() {
        return Err(Error::Index(format!("{} values for {} vertices", numeric.len(), mesh.num_vertices())));
    }
    let rule = QuadratureRule::default();
    let (mut l2sq, mut semi) = (0.0, 0.0);
    let mut counted = 0usize;
    for (t, tri_ids) in mesh.triangles().iter().enumerate() {
        if let Some(r) = region {
            if !r.contains_triangle(mesh, t) {
                continue;
            }
        }
        counted += 1;
        let grads = barycentric_gradients(mesh, t)?;
        let vals = tri_ids.map(|v| numeric[v]);
        let gh = (0..3).fold([0.0, 0.0], |g, k| [g[0] + vals[k] * grads[k][0], g[1] + vals[k] * grads[k][1]]);
        let tri = mesh.triangle_points(t);
        for (lam, x, w) in rule.mapped(&tri, mesh.area(t)) {
            let uh = lam[0] * vals[0] + lam[1] * vals[1] + lam[2] * vals[2];
            let e = uh - exact(x);
            let ge = exact_grad(x);
            let (dx, dy) = (gh[0] - ge[0], gh[1] - ge[1]);
            l2sq += w * e * e;
            semi += w * (dx * dx + dy * dy);
        }
    }
    if counted == 0 {
        return Err(Error::EmptyRegion(region.map(|r| r.to_string()).unwrap_or_default()));
    }
    if !(l2sq.is_finite() && semi.is_finite()) {
        return Err(Error::Data("non-finite error integrand".into()));
    }
    Ok(ErrorNorms { l2: l2sq.sqrt(), h1: (l2sq + semi).sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: u32,
    pub ey_l2: f64,
    pub ey_h1: f64,
    pub ep_l2: f64,
    pub ep_h1: f64,
}

impl ConvergenceRow {
    /// A row whose errors could not be measured.
    pub fn undefined(k: u32) -> Self {
        ConvergenceRow { k, ey_l2: f64::NAN, ey_h1: f64::NAN, ep_l2: f64::NAN, ep_h1: f64::NAN }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    YL2,
    YH1,
    PL2,
    PH1,
}

impl Column {
    fn get(self, row: &ConvergenceRow) -> f64 {
        match self {
            Column::YL2 => row.ey_l2,
            Column::YH1 => row.ey_h1,
            Column::PL2 => row.ep_l2,
            Column::PH1 => row.ep_h1,
        }
    }
}

/// `log₂(e_prev / e_cur) / (k_cur − k_prev)`, undefined for vanishing or non-finite errors.
pub fn observed_order(prev: f64, cur: f64, level_gap: u32) -> Option<f64> {
    if level_gap == 0 || !(prev > 0.0 && cur > 0.0) || !prev.is_finite() || !cur.is_finite() {
        return None;
    }
    Some((prev / cur).log2() / level_gap as f64)
}

pub const CSV_HEADER: &str = "k,ey_l2,ey_order,ey_h1,ey_h1_order,ep_l2,ep_order,ep_h1,ep_h1_order";

impl ConvergenceTable {
    pub fn push(&mut self, row: ConvergenceRow) {
        self.rows.push(row);
    }

    pub fn row(&self, k: u32) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    /// Order at row index `i`; `None` for the first row.
    pub fn order_at(&self, i: usize, column: Column) -> Option<f64> {
        if i == 0 || i >= self.rows.len() {
            return None;
        }
        let (prev, cur) = (&self.rows[i - 1], &self.rows[i]);
        observed_order(column.get(prev), column.get(cur), cur.k.checked_sub(prev.k)?)
    }

    /// Order at level `k`.
    pub fn order(&self, k: u32, column: Column) -> Option<f64> {
        let i = self.rows.iter().position(|r| r.k == k)?;
        self.order_at(i, column)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        let fmt_order = |o: Option<f64>| o.map(|v| format!("{v:e}")).unwrap_or_default();
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                out,
                "{},{:e},{},{:e},{},{:e},{},{:e},{}",
                r.k,
                r.ey_l2,
                fmt_order(self.order_at(i, Column::YL2)),
                r.ey_h1,
                fmt_order(self.order_at(i, Column::YH1)),
                r.ep_l2,
                fmt_order(self.order_at(i, Column::PL2)),
                r.ep_h1,
                fmt_order(self.order_at(i, Column::PH1)),
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads a table written by `write_csv`; order columns are recomputed and
    /// must agree with the stored ones.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?;
        if header.as_deref().map(str::trim) != Some(CSV_HEADER) {
            return Err(Error::Parse("missing convergence table header".into()));
        }
        let mut table = ConvergenceTable::default();
        let mut stored_orders = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(Error::Parse(format!("line {}: expected 9 fields", n + 2)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)));
            let opt = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) };
            let k = fields[0].trim().parse::<u32>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))?;
            table.push(ConvergenceRow {
                k,
                ey_l2: num(fields[1])?,
                ey_h1: num(fields[3])?,
                ep_l2: num(fields[5])?,
                ep_h1: num(fields[7])?,
            });
            stored_orders.push([opt(fields[2])?, opt(fields[4])?, opt(fields[6])?, opt(fields[8])?]);
        }
        for (i, stored) in stored_orders.iter().enumerate() {
            let computed = [Column::YL2, Column::YH1, Column::PL2, Column::PH1].map(|c| table.order_at(i, c));
            if *stored != computed {
                return Err(Error::Parse(format!("row {i}: stored orders disagree with the errors")));
            }
        }
        Ok(table)
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>3} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6}", "k", "|ey|L2", "order", "|ey|H1", "order", "|ep|L2", "order", "|ep|H1", "order")?;
        let o = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                f,
                "{:>3} {:>10.2e} {:>6} {:>10.2e} {:>6} {:>10.2e} {:>6} {:>10.2e} {:>6}",
                r.k,
                r.ey_l2,
                o(self.order_at(i, Column::YL2)),
                r.ey_h1,
                o(self.order_at(i, Column::YH1)),
                r.ep_l2,
                o(self.order_at(i, Column::PL2)),
                r.ep_h1,
                o(self.order_at(i, Column::PH1)),
            )?;
        }
        Ok(())
    }
}

/// Errors of one solve, measured on each requested region.
pub fn level_errors(
    mesh: &TriMesh,
    sol: &SolutionPair,
    problem: &Manufactured,
    regions: &[Option<Region>],
) -> Result<Vec<ConvergenceRow>> {
    regions
        .iter()
        .map(|region| {
            let ey = error_norms(mesh, &sol.y_bar, &problem.y, &problem.grad_y, region.as_ref());
            let ep = error_norms(mesh, &sol.p_bar, &problem.p, &problem.grad_p, region.as_ref());
            match (ey, ep) {
                (Ok(ey), Ok(ep)) => {
                    Ok(ConvergenceRow { k: mesh.level(), ey_l2: ey.l2, ey_h1: ey.h1, ep_l2: ep.l2, ep_h1: ep.h1 })
                }
                // coarse meshes may have no element inside a local box
                (Err(Error::EmptyRegion(_)), _) => Ok(ConvergenceRow::undefined(mesh.level())),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        })
        .collect()
}

/// Discretization choices shared by every level of a study.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub scheme: Scheme,
    pub reaction: ReactionMode,
    pub diagonal: DiagonalConvention,
}

/// Solves the manufactured problem on each level and tabulates the errors on
/// every region. Levels run concurrently on the current rayon pool; each
/// solve is sequential, so the tables do not depend on the thread count.
pub fn convergence_tables(
    problem: &Manufactured,
    options: StudyOptions,
    levels: &[u32],
    regions: &[Option<Region>],
) -> Result<Vec<ConvergenceTable>> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Spec(format!("levels must be nonempty and ascending, got {levels:?}")));
    }
    let spec = ProblemSpec::manufactured(problem).with_reaction(options.reaction);
    let per_level: Vec<Vec<ConvergenceRow>> = levels
        .par_iter()
        .map(|&k| {
            let mesh = build_unit_square_with(k, options.diagonal, DEFAULT_VERTEX_CAP)?;
            let sol = control::solve(&mesh, &spec, options.scheme)?;
            level_errors(&mesh, &sol, problem, regions)
        })
        .collect::<Result<_>>()?;
    let mut tables = vec![ConvergenceTable::default(); regions.len()];
    for rows in per_level {
        for (table, row) in tables.iter_mut().zip(rows) {
            table.push(row);
        }
    }
    Ok(tables)
}

pub fn convergence_study(
    problem: &Manufactured,
    scheme: Scheme,
    levels: &[u32],
    region: Option<Region>,
) -> Result<ConvergenceTable> {
    let options = StudyOptions { scheme, ..StudyOptions::default() };
    let mut tables = convergence_tables(problem, options, levels, &[region])?;
    Ok(tables.remove(0))
}

#[derive(Clone, Debug, Serialize)]
pub struct MMatrixReport {
    pub n: usize,
    pub diagonal_positive: bool,
    pub offdiagonal_nonpositive: bool,
    /// Largest off-diagonal entry relative to the largest diagonal entry.
    pub max_offdiagonal_ratio: f64,
    pub worst_offdiagonal: Option<(usize, usize)>,
    pub inverse_checked: bool,
    pub inverse_nonnegative: Option<bool>,
    pub inverse_min_entry: Option<f64>,
    pub passed: bool,
}

pub fn certify_m_matrix(a: &CsrMatrix) -> Result<MMatrixReport> {
    certify_m_matrix_with_cap(a, DEFAULT_INVERSE_CHECK_CAP)
}

pub fn certify_m_matrix_with_cap(a: &CsrMatrix, cap: usize) -> Result<MMatrixReport> {
    if a.nrows() != a.ncols() {
        return Err(Error::Assembly(format!("M-matrix check needs a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let diag = a.diagonal();
    let diagonal_positive = diag.iter().all(|&d| d > 0.0);
    let scale = norm_inf(&diag);
    let mut max_offdiagonal_ratio = f64::NEG_INFINITY;
    let mut worst_offdiagonal = None;
    for (r, c, v) in a.triplets() {
        if r != c {
            let ratio = if scale > 0.0 { v / scale } else { v };
            if ratio > max_offdiagonal_ratio {
                max_offdiagonal_ratio = ratio;
                worst_offdiagonal = Some((r, c));
            }
        }
    }
    if worst_offdiagonal.is_none() {
        max_offdiagonal_ratio = 0.0;
    }
    let offdiagonal_nonpositive = max_offdiagonal_ratio <= OFFDIAG_RTOL;
    // the inverse test only decides the outcome once the sign pattern holds
    let inverse_checked = n <= cap && diagonal_positive && offdiagonal_nonpositive;
    let (inverse_nonnegative, inverse_min_entry) = if inverse_checked {
        let check = inverse_nonneg_check_with_cap(a, OFFDIAG_RTOL, cap)?;
        (Some(check.ok), Some(check.min_entry))
    } else {
        (None, None)
    };
    let passed = diagonal_positive && offdiagonal_nonpositive && inverse_nonnegative.unwrap_or(true);
    Ok(MMatrixReport {
        n,
        diagonal_positive,
        offdiagonal_nonpositive,
        max_offdiagonal_ratio,
        worst_offdiagonal,
        inverse_checked,
        inverse_nonnegative,
        inverse_min_entry,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::assemble_operator;
    use crate::fem::{constant_scalar, constant_vector, interpolate_nodal};
    use crate::problems;
    use crate::mesh::build_unit_square;
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn affine_interpolant_has_zero_error() {
        let mesh = build_unit_square(3).unwrap();
        let u: ScalarField = Arc::new(|x| 2.0 * x[0] - 3.0 * x[1] + 0.5);
        let uh = interpolate_nodal(&mesh, &u).unwrap();
        let e = error_norms(&mesh, &uh, &u, &constant_vector([2.0, -3.0]), None).unwrap();
        assert!(e.l2 < 1e-13 && e.h1 < 1e-13);
    }

    #[test]
    fn zero_against_one() {
        let mesh = build_unit_square(2).unwrap();
        let e = error_norms(&mesh, &vec![0.0; mesh.num_vertices()], &constant_scalar(1.0), &constant_vector([0.0, 0.0]), None)
            .unwrap();
        assert!((e.l2 - 1.0).abs() < 1e-14 && (e.h1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_region_is_an_error() {
        let mesh = build_unit_square(2).unwrap();
        let r = Region::new(0.1, 0.2, 0.1, 0.2);
        let res = error_norms(&mesh, &[0.0; 25], &constant_scalar(1.0), &constant_vector([0.0, 0.0]), Some(&r));
        assert!(matches!(res, Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn local_norm_never_exceeds_global() {
        let mesh = build_unit_square(4).unwrap();
        let u: ScalarField = Arc::new(|x| (3.0 * x[0]).sin() * x[1]);
        let g: VectorField = Arc::new(|x| [3.0 * (3.0 * x[0]).cos() * x[1], (3.0 * x[0]).sin()]);
        let uh = vec![0.1; mesh.num_vertices()];
        let global = error_norms(&mesh, &uh, &u, &g, None).unwrap();
        for r in [Region::new(0.4, 0.6, 0.4, 0.6), Region::new(0.65, 1.0, 0.0, 1.0), Region::new(0.0, 1.0, 0.0, 1.0)] {
            let local = error_norms(&mesh, &uh, &u, &g, Some(&r)).unwrap();
            assert!(local.l2 <= global.l2 + 1e-15 && local.h1 <= global.h1 + 1e-15);
        }
    }

    #[test]
    fn region_parsing_and_containment() {
        let r: Region = "0.4,0.6,0.4,0.6".parse().unwrap();
        assert_eq!(r, Region::new(0.4, 0.6, 0.4, 0.6));
        assert!(r.contains([0.4, 0.6]));
        assert!(!r.contains([0.39, 0.5]));
        assert!("1,0,0,1".parse::<Region>().is_err());
        assert!("0,1,0".parse::<Region>().is_err());
        // level 2: the four central cells, two triangles each
        let mesh = build_unit_square(2).unwrap();
        let r = Region::new(0.25, 0.75, 0.25, 0.75);
        assert_eq!((0..mesh.num_triangles()).filter(|&t| r.contains_triangle(&mesh, t)).count(), 8);
    }

    #[test]
    fn order_examples() {
        let o = observed_order(5.28e-4, 1.47e-4, 1).unwrap();
        assert!((o - 1.85).abs() < 0.01);
        assert_eq!(observed_order(0.0, 0.0, 1), None);
        assert_eq!(observed_order(1.0, f64::NAN, 1), None);
        let mut t = ConvergenceTable::default();
        for k in 1..=5 {
            let e = 3.0 * 2f64.powi(-(k as i32));
            t.push(ConvergenceRow { k, ey_l2: e, ey_h1: e, ep_l2: e, ep_h1: e });
        }
        assert_eq!(t.order(1, Column::YL2), None);
        for k in 2..=5 {
            assert_eq!(t.order(k, Column::YL2), Some(1.0));
        }
    }

    #[test]
    fn csv_round_trip_with_undefined_orders() {
        let mut t = ConvergenceTable::default();
        t.push(ConvergenceRow { k: 1, ey_l2: 0.0, ey_h1: 0.0, ep_l2: 0.1, ep_h1: 0.2 });
        t.push(ConvergenceRow { k: 2, ey_l2: 0.0, ey_h1: 0.0, ep_l2: 0.05, ep_h1: 0.15 });
        let csv = t.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[2].split(',').nth(2), Some(""));
        assert_eq!(ConvergenceTable::read_csv(csv.as_bytes()).unwrap(), t);
    }

    #[test]
    fn csv_rejects_tampered_orders() {
        let csv = format!("{CSV_HEADER}\n1,1e0,,1e0,,1e0,,1e0,\n2,5e-1,3e0,5e-1,1e0,5e-1,1e0,5e-1,1e0\n");
        assert!(ConvergenceTable::read_csv(csv.as_bytes()).is_err());
        assert!(ConvergenceTable::read_csv("k,a\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(errs in proptest::collection::vec((1e-12f64..10.0, 1e-12f64..10.0, 1e-12f64..10.0, 1e-12f64..10.0), 1..8)) {
            let mut t = ConvergenceTable::default();
            for (i, (a, b, c, d)) in errs.into_iter().enumerate() {
                t.push(ConvergenceRow { k: i as u32 + 1, ey_l2: a, ey_h1: b, ep_l2: c, ep_h1: d });
            }
            prop_assert_eq!(ConvergenceTable::read_csv(t.to_csv().as_bytes()).unwrap(), t);
        }

        #[test]
        fn synthetic_geometric_errors_have_exact_order(c in 1e-3f64..1e3, p in 1u32..4) {
            let mut t = ConvergenceTable::default();
            for k in 1..=6u32 {
                let e = c * 2f64.powi(-((p * k) as i32));
                t.push(ConvergenceRow { k, ey_l2: e, ey_h1: e, ep_l2: e, ep_h1: e });
            }
            for k in 2..=6 {
                prop_assert!((t.order(k, Column::PH1).unwrap() - p as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_fields_give_zero_errors_and_no_orders() {
        let mut t = ConvergenceTable::default();
        for k in 1..=2 {
            let mesh = build_unit_square(k).unwrap();
            let u: ScalarField = Arc::new(|x| x[0] + x[1]);
            let uh = interpolate_nodal(&mesh, &u).unwrap();
            let e = error_norms(&mesh, &uh, &u, &constant_vector([1.0, 1.0]), None).unwrap();
            // rounding leaves at most 1e-16-level residue; clamp to exact zero
            let z = |v: f64| if v < 1e-14 { 0.0 } else { v };
            t.push(ConvergenceRow { k, ey_l2: z(e.l2), ey_h1: z(e.h1), ep_l2: z(e.l2), ep_h1: z(e.h1) });
        }
        assert_eq!(t.order(2, Column::YL2), None);
    }

    #[test]
    fn m_matrix_checks() {
        let id = CsrMatrix::identity(4);
        let rep = certify_m_matrix(&id).unwrap();
        assert!(rep.passed && rep.inverse_checked);

        let mesh = build_unit_square(4).unwrap();
        let interior = mesh.interior_vertices();
        let (coeff, _) = problems::stability(1e-9, 1.0);
        let galerkin = assemble_operator(&mesh, &coeff, Scheme::Galerkin, ReactionMode::Lumped).unwrap();
        let rep = certify_m_matrix(&galerkin.submatrix(&interior, &interior)).unwrap();
        assert!(!rep.offdiagonal_nonpositive && !rep.passed);

        for coeff in [
            coeff,
            problems::boundary_layer(1e-2).coefficients(),
            problems::interior_layer(1e-9).coefficients(),
        ] {
            let eafe = assemble_operator(&mesh, &coeff, Scheme::Eafe, ReactionMode::Lumped).unwrap();
            let rep = certify_m_matrix(&eafe.submatrix(&interior, &interior)).unwrap();
            assert!(rep.passed && rep.inverse_checked, "{rep:?}");
        }

        let rep = certify_m_matrix_with_cap(&CsrMatrix::identity(10), 5).unwrap();
        assert!(rep.passed && !rep.inverse_checked);
    }

    #[test]
    fn bounds_for_zero_desired_state() {
        let mesh = build_unit_square(3).unwrap();
        let (coeff, y_d) = problems::stability(1e-9, 0.0);
        let sol = control::solve(&mesh, &ProblemSpec::desired_state(coeff, y_d.clone()), Scheme::Eafe).unwrap();
        let rep = check_desired_state_bounds(&mesh, &sol, &y_d, Sign::Nonneg).unwrap();
        assert!(rep.ok);
        assert!(rep.lower.iter().chain(&rep.upper).chain(&rep.adjoint).all(|&m| m == 0.0));
    }

    #[test]
    fn bounds_hold_for_eafe_and_fail_for_galerkin() {
        let mesh = build_unit_square(4).unwrap();
        let (coeff, y_d) = problems::stability(1e-9, 1.0);
        let spec = ProblemSpec::desired_state(coeff, y_d.clone());
        let eafe = control::solve(&mesh, &spec, Scheme::Eafe).unwrap();
        let rep = check_desired_state_bounds(&mesh, &eafe, &y_d, Sign::Nonneg).unwrap();
        assert!(rep.ok, "{}", rep.summary());
        let galerkin = control::solve(&mesh, &spec, Scheme::Galerkin).unwrap();
        let rep = check_desired_state_bounds(&mesh, &galerkin, &y_d, Sign::Nonneg).unwrap();
        assert!(!rep.ok && rep.violations > 0);
    }

    #[test]
    fn mirrored_bounds_and_sign_precondition() {
        let mesh = build_unit_square(3).unwrap();
        let (coeff, y_d) = problems::stability(1e-9, -1.0);
        let sol = control::solve(&mesh, &ProblemSpec::desired_state(coeff, y_d.clone()), Scheme::Eafe).unwrap();
        assert!(check_desired_state_bounds(&mesh, &sol, &y_d, Sign::Nonpos).unwrap().ok);
        assert!(matches!(check_desired_state_bounds(&mesh, &sol, &y_d, Sign::Nonneg), Err(Error::Spec(_))));
    }
}
