//! Conic optimization layer: a small modelling front end over Hermitian matrix and
//! scalar variables, and a homogeneous self-dual interior-point solver for
//! nonnegative, second-order, Hermitian-PSD and exponential cones.
//!
//! ```
//! use swipt_core::conic::{AffineScalar, ConicProblem, SolveStatus, SolverSettings, solve};
//!
//! // minimise Tr(X) subject to X_00 >= 1, X psd
//! let mut p = ConicProblem::minimize();
//! let x = p.add_hermitian("X", 2, true);
//! p.set_objective(AffineScalar::trace(x));
//! let x00 = AffineScalar::from_functional(x, |e| e[(0, 0)].re);
//! p.add_nonneg("x00", x00.add_constant(-1.0));
//! let sol = solve(&p, &SolverSettings::default());
//! assert_eq!(sol.status, SolveStatus::Optimal);
//! assert!((sol.objective - 1.0).abs() < 1e-6);
//! ```

mod cones;
mod expr;
mod ipm;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

pub use expr::{vec_columns, AffineHermitian, AffineScalar, AffineVector, MatVar, ScalarVar};
pub use ipm::solve;

use crate::linalg::{min_eigenvalue, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Hermitian { n: usize, psd: bool },
    Scalar { nonneg: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

/// `expr ⪰ 0`
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub label: String,
    pub expr: AffineHermitian,
}

/// `‖vector‖ <= bound`
#[derive(Debug, Clone, PartialEq)]
pub struct SocBlock {
    pub label: String,
    pub vector: AffineVector,
    pub bound: AffineScalar,
}

/// `(x, y, z)` in the closed exponential cone: `y exp(x / y) <= z`, `y > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpBlock {
    pub label: String,
    pub x: AffineScalar,
    pub y: AffineScalar,
    pub z: AffineScalar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Lmi(LmiBlock),
    Soc(SocBlock),
    Exp(ExpBlock),
    /// `expr >= 0`
    NonNeg {
        label: String,
        expr: AffineScalar,
    },
    /// `expr == 0`
    Zero {
        label: String,
        expr: AffineScalar,
    },
}

impl Constraint {
    pub fn label(&self) -> &str {
        match self {
            Constraint::Lmi(b) => &b.label,
            Constraint::Soc(b) => &b.label,
            Constraint::Exp(b) => &b.label,
            Constraint::NonNeg { label, .. } | Constraint::Zero { label, .. } => label,
        }
    }

    /// Signed slack at `x`: nonnegative iff the constraint holds.
    /// LMI: smallest eigenvalue; SOC: `bound - ‖vector‖`; exp: `z - y exp(x/y)`;
    /// equality: `-|expr|`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Lmi(b) => min_eigenvalue(&b.expr.eval(x)),
            Constraint::Soc(b) => b.bound.eval(x) - b.vector.eval(x).norm(),
            Constraint::Exp(b) => {
                let (u, v, w) = (b.x.eval(x), b.y.eval(x), b.z.eval(x));
                if v > 0.0 {
                    w - v * libm::exp(u / v)
                } else if v == 0.0 && u <= 0.0 {
                    w
                } else {
                    f64::NEG_INFINITY
                }
            }
            Constraint::NonNeg { expr, .. } => expr.eval(x),
            Constraint::Zero { expr, .. } => -libm::fabs(expr.eval(x)),
        }
    }
}

/// An optimization problem over real coordinates with conic constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub sense: Sense,
    pub vars: Vec<VarDecl>,
    pub objective: AffineScalar,
    pub constraints: Vec<Constraint>,
    num_coords: usize,
}

impl ConicProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            vars: Vec::new(),
            objective: AffineScalar::zero(),
            constraints: Vec::new(),
            num_coords: 0,
        }
    }

    pub fn minimize() -> Self {
        Self::new(Sense::Minimize)
    }

    pub fn maximize() -> Self {
        Self::new(Sense::Maximize)
    }

    pub fn num_coords(&self) -> usize {
        self.num_coords
    }

    /// Hermitian `n x n` variable; with `psd` the constraint `X ⪰ 0` is added.
    pub fn add_hermitian(&mut self, name: &str, n: usize, psd: bool) -> MatVar {
        let v = MatVar {
            offset: self.num_coords,
            n,
        };
        self.vars.push(VarDecl {
            name: name.into(),
            kind: VarKind::Hermitian { n, psd },
            offset: self.num_coords,
        });
        self.num_coords += n * n;
        if psd {
            self.add_lmi(&format!("{name} psd"), AffineHermitian::identity_map(v));
        }
        v
    }

    pub fn add_scalar(&mut self, name: &str, nonneg: bool) -> ScalarVar {
        let v = ScalarVar {
            index: self.num_coords,
        };
        self.vars.push(VarDecl {
            name: name.into(),
            kind: VarKind::Scalar { nonneg },
            offset: self.num_coords,
        });
        self.num_coords += 1;
        if nonneg {
            self.add_nonneg(&format!("{name} >= 0"), AffineScalar::var(v));
        }
        v
    }

    pub fn set_objective(&mut self, mut obj: AffineScalar) {
        obj.compress();
        self.objective = obj;
    }

    pub fn add_lmi(&mut self, label: &str, mut expr: AffineHermitian) {
        expr.compress();
        self.constraints.push(Constraint::Lmi(LmiBlock {
            label: label.into(),
            expr,
        }));
    }

    pub fn add_soc(&mut self, label: &str, mut vector: AffineVector, mut bound: AffineScalar) {
        vector.compress();
        bound.compress();
        self.constraints.push(Constraint::Soc(SocBlock {
            label: label.into(),
            vector,
            bound,
        }));
    }

    pub fn add_exp(&mut self, label: &str, x: AffineScalar, y: AffineScalar, z: AffineScalar) {
        let mut b = ExpBlock {
            label: label.into(),
            x,
            y,
            z,
        };
        b.x.compress();
        b.y.compress();
        b.z.compress();
        self.constraints.push(Constraint::Exp(b));
    }

    pub fn add_nonneg(&mut self, label: &str, mut expr: AffineScalar) {
        expr.compress();
        self.constraints.push(Constraint::NonNeg {
            label: label.into(),
            expr,
        });
    }

    pub fn add_zero(&mut self, label: &str, mut expr: AffineScalar) {
        expr.compress();
        self.constraints.push(Constraint::Zero {
            label: label.into(),
            expr,
        });
    }

    /// Margins of every constraint at `x`, in insertion order.
    pub fn margins(&self, x: &[f64]) -> Vec<(String, f64)> {
        self.constraints
            .iter()
            .map(|c| (c.label().into(), c.margin(x)))
            .collect()
    }

    /// Largest constraint violation at `x` (0 if feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| (-c.margin(x)).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Human-readable canonical dump of the problem data (17 significant digits).
    pub fn canonical_dump(&self) -> String {
        let mut out = String::new();
        let sense = match self.sense {
            Sense::Minimize => "minimize",
            Sense::Maximize => "maximize",
        };
        let _ = writeln!(out, "{sense} coords={}", self.num_coords);
        for v in &self.vars {
            let _ = writeln!(out, "var {} {:?} @{}", v.name, v.kind, v.offset);
        }
        let _ = writeln!(out, "objective {}", fmt_scalar(&self.objective));
        for c in &self.constraints {
            match c {
                Constraint::Lmi(b) => {
                    let _ = writeln!(out, "lmi {} dim={}", b.label, b.expr.dim);
                    let _ = writeln!(out, "  const {}", fmt_mat(&b.expr.constant));
                    for (i, m) in &b.expr.terms {
                        let _ = writeln!(out, "  x{i} {}", fmt_mat(m));
                    }
                }
                Constraint::Soc(b) => {
                    let _ = writeln!(out, "soc {} len={}", b.label, b.vector.len());
                    let _ = writeln!(out, "  bound {}", fmt_scalar(&b.bound));
                    let _ = writeln!(out, "  const {}", fmt_cvec(b.vector.constant.as_slice()));
                    for (i, v) in &b.vector.terms {
                        let _ = writeln!(out, "  x{i} {}", fmt_cvec(v.as_slice()));
                    }
                }
                Constraint::Exp(b) => {
                    let _ = writeln!(out, "exp {}", b.label);
                    let _ = writeln!(out, "  x {}", fmt_scalar(&b.x));
                    let _ = writeln!(out, "  y {}", fmt_scalar(&b.y));
                    let _ = writeln!(out, "  z {}", fmt_scalar(&b.z));
                }
                Constraint::NonNeg { label, expr } => {
                    let _ = writeln!(out, "nonneg {label} {}", fmt_scalar(expr));
                }
                Constraint::Zero { label, expr } => {
                    let _ = writeln!(out, "zero {label} {}", fmt_scalar(expr));
                }
            }
        }
        out
    }
}

fn fmt_scalar(s: &AffineScalar) -> String {
    let mut out = format!("{:.16e}", s.constant);
    for (i, a) in &s.terms {
        let _ = write!(out, " + {a:.16e}*x{i}");
    }
    out
}

fn fmt_cvec(v: &[num_complex::Complex64]) -> String {
    let parts: Vec<String> = v
        .iter()
        .map(|z| format!("({:.16e},{:.16e})", z.re, z.im))
        .collect();
    format!("[{}]", parts.join(" "))
}

fn fmt_mat(m: &CMat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let row: Vec<_> = m.row(i).iter().copied().collect();
            fmt_cvec(&row)
        })
        .collect();
    format!("[{}]", rows.join(" "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Relative primal/dual residual tolerance.
    pub tol_feas: f64,
    /// Duality-gap tolerance (absolute, or relative to the objective when larger than 1).
    pub tol_gap: f64,
    /// Tolerance used when reporting PSD membership of extracted matrices.
    pub tol_psd: f64,
    /// Threshold on normalized infeasibility certificates.
    pub tol_cert: f64,
    pub max_iter: usize,
    /// Accuracy accepted from the best iterate when progress stalls before `tol_feas`/`tol_gap`.
    pub tol_reduced: f64,
    /// Diagonal equilibration of the standard-form data before iterating.
    pub equilibrate: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-7,
            tol_gap: 1e-7,
            tol_psd: 1e-8,
            tol_cert: 1e-6,
            max_iter: 150,
            tol_reduced: 1e-6,
            equilibrate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Primal point (problem coordinates).
    pub x: Vec<f64>,
    /// Objective value in the problem's own sense.
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub solve_time: Option<core::time::Duration>,
    pub diagnostic: String,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn matrix(&self, v: MatVar) -> CMat {
        v.value(&self.x)
    }

    pub fn scalar(&self, v: ScalarVar) -> f64 {
        v.value(&self.x)
    }
}
