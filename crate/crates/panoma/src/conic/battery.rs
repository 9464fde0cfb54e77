//! Analytic validation battery: small programs over every supported cone
//! with closed-form optima, plus one infeasible and one unbounded instance
//! whose certificates are Farkas-checked. Used by `panoma validate-solver`
//! and the acceptance suite.

use super::solver::{standard_form, SolveStatus};
use super::{solve, ConeTag, ConicProgram, LinExpr, ProgramBuilder, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expected {
    Objective(f64),
    Infeasible,
    Unbounded,
}

pub struct BatteryCase {
    pub name: &'static str,
    pub program: ConicProgram,
    pub expected: Expected,
}

#[derive(Debug)]
pub struct CaseReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn lp_box() -> ConicProgram {
    let mut b = ProgramBuilder::new("lp_box");
    let x = b.scalar("x");
    b.set_maximize(LinExpr::var(x));
    b.nonneg("ub", LinExpr::term(x, -1.0).plus(&LinExpr::constant(3.0)));
    b.nonneg("lb", LinExpr::var(x));
    b.build().unwrap()
}

fn lp_two_var() -> ConicProgram {
    // max x + 2y st x + y <= 4, 0 <= x <= 3, y >= 0 -> (0, 4), value 8.
    let mut b = ProgramBuilder::new("lp_two_var");
    let x = b.scalar("x");
    let y = b.scalar("y");
    b.set_maximize(LinExpr::var(x).plus(&LinExpr::term(y, 2.0)));
    b.nonneg(
        "sum",
        LinExpr::term(x, -1.0)
            .plus(&LinExpr::term(y, -1.0))
            .plus(&LinExpr::constant(4.0)),
    );
    b.nonneg("xub", LinExpr::term(x, -1.0).plus(&LinExpr::constant(3.0)));
    b.nonneg("xlb", LinExpr::var(x));
    b.nonneg("ylb", LinExpr::var(y));
    b.build().unwrap()
}

fn lp_equality() -> ConicProgram {
    // max x + y st x + y = 2, x, y >= 0 -> 2 (degenerate face).
    let mut b = ProgramBuilder::new("lp_equality");
    let x = b.scalar("x");
    let y = b.scalar("y");
    b.set_maximize(LinExpr::var(x).plus(&LinExpr::var(y)));
    b.constraint(
        "line",
        ConeTag::Zero,
        vec![LinExpr::term(x, 1.0)
            .plus(&LinExpr::term(y, 1.0))
            .plus(&LinExpr::constant(-2.0))],
    );
    b.nonneg("xlb", LinExpr::var(x));
    b.nonneg("ylb", LinExpr::var(y));
    b.build().unwrap()
}

fn lp_infeasible() -> ConicProgram {
    let mut b = ProgramBuilder::new("lp_infeasible");
    let x = b.scalar("x");
    b.set_maximize(LinExpr::var(x));
    b.nonneg("lb", LinExpr::term(x, 1.0).plus(&LinExpr::constant(-1.0)));
    b.nonneg("ub", LinExpr::term(x, -1.0));
    b.build().unwrap()
}

fn lp_unbounded() -> ConicProgram {
    let mut b = ProgramBuilder::new("lp_unbounded");
    let x = b.scalar("x");
    b.set_maximize(LinExpr::var(x));
    b.nonneg("lb", LinExpr::var(x));
    b.build().unwrap()
}

fn soc_ball() -> ConicProgram {
    let mut b = ProgramBuilder::new("soc_ball");
    let x = b.scalar("x");
    let y = b.scalar("y");
    b.set_maximize(LinExpr::var(x).plus(&LinExpr::var(y)));
    b.constraint(
        "ball",
        ConeTag::Soc,
        vec![LinExpr::constant(1.0), LinExpr::var(x), LinExpr::var(y)],
    );
    b.build().unwrap()
}

fn soc_distance() -> ConicProgram {
    // min t st t >= ||(x - 3, 4)|| -> t = 4 at x = 3.
    let mut b = ProgramBuilder::new("soc_distance");
    let t = b.scalar("t");
    let x = b.scalar("x");
    b.set_minimize(LinExpr::var(t));
    b.constraint(
        "dist",
        ConeTag::Soc,
        vec![
            LinExpr::var(t),
            LinExpr::term(x, 1.0).plus(&LinExpr::constant(-3.0)),
            LinExpr::constant(4.0),
        ],
    );
    b.build().unwrap()
}

fn soc_rotated() -> ConicProgram {
    // max z st z^2 <= 2xy, x <= 2, y <= 1, encoded as
    // (x + y, x - y, sqrt(2) z) in SOC -> z = 2.
    let mut b = ProgramBuilder::new("soc_rotated");
    let x = b.scalar("x");
    let y = b.scalar("y");
    let z = b.scalar("z");
    b.set_maximize(LinExpr::var(z));
    b.constraint(
        "rsoc",
        ConeTag::Soc,
        vec![
            LinExpr::var(x).plus(&LinExpr::var(y)),
            LinExpr::var(x).plus(&LinExpr::term(y, -1.0)),
            LinExpr::term(z, std::f64::consts::SQRT_2),
        ],
    );
    b.nonneg("xub", LinExpr::term(x, -1.0).plus(&LinExpr::constant(2.0)));
    b.nonneg("yub", LinExpr::term(y, -1.0).plus(&LinExpr::constant(1.0)));
    b.build().unwrap()
}

fn exp_log() -> ConicProgram {
    // max t st t <= ln r, r <= e -> 1.
    let mut b = ProgramBuilder::new("exp_log");
    let t = b.scalar("t");
    let r = b.scalar("r");
    b.set_maximize(LinExpr::var(t));
    b.constraint(
        "log",
        ConeTag::Exp,
        vec![LinExpr::var(t), LinExpr::constant(1.0), LinExpr::var(r)],
    );
    b.nonneg(
        "rcap",
        LinExpr::term(r, -1.0).plus(&LinExpr::constant(std::f64::consts::E)),
    );
    b.build().unwrap()
}

fn exp_growth() -> ConicProgram {
    // min z st e^x <= z, x >= 2 -> e^2.
    let mut b = ProgramBuilder::new("exp_growth");
    let x = b.scalar("x");
    let z = b.scalar("z");
    b.set_minimize(LinExpr::var(z));
    b.constraint(
        "exp",
        ConeTag::Exp,
        vec![LinExpr::var(x), LinExpr::constant(1.0), LinExpr::var(z)],
    );
    b.nonneg("xlb", LinExpr::term(x, 1.0).plus(&LinExpr::constant(-2.0)));
    b.build().unwrap()
}

fn exp_two_rates() -> ConicProgram {
    // max log2(r1) + log2(r2) st r1 + r2 <= 4 -> r1 = r2 = 2, value 2.
    let mut b = ProgramBuilder::new("exp_two_rates");
    let r1 = b.scalar("r1");
    let r2 = b.scalar("r2");
    let t1 = b.log2_epigraph("t1", r1);
    let t2 = b.log2_epigraph("t2", r2);
    b.set_maximize(LinExpr::var(t1).plus(&LinExpr::var(t2)));
    b.nonneg(
        "budget",
        LinExpr::term(r1, -1.0)
            .plus(&LinExpr::term(r2, -1.0))
            .plus(&LinExpr::constant(4.0)),
    );
    b.build().unwrap()
}

fn psd_diag() -> ConicProgram {
    // max tr(X), X psd 2x2, X00 <= 2, X11 <= 3, X01 = 0 -> 5.
    let mut b = ProgramBuilder::new("psd_diag");
    let s = b.vector("svec", 3);
    b.constraint(
        "psd",
        ConeTag::Psd,
        vec![LinExpr::var(s), LinExpr::var(s + 1), LinExpr::var(s + 2)],
    );
    b.set_maximize(LinExpr::var(s).plus(&LinExpr::var(s + 2)));
    b.nonneg("c00", LinExpr::term(s, -1.0).plus(&LinExpr::constant(2.0)));
    b.nonneg("c11", LinExpr::term(s + 2, -1.0).plus(&LinExpr::constant(3.0)));
    b.constraint("offdiag", ConeTag::Zero, vec![LinExpr::var(s + 1)]);
    b.build().unwrap()
}

fn psd_cross() -> ConicProgram {
    // max 2 X01 st X psd, X00 <= 1, X11 <= 4 -> 2 sqrt(1*4) = 4.
    // svec packs sqrt(2) X01 in the middle slot.
    let mut b = ProgramBuilder::new("psd_cross");
    let s = b.vector("svec", 3);
    b.constraint(
        "psd",
        ConeTag::Psd,
        vec![LinExpr::var(s), LinExpr::var(s + 1), LinExpr::var(s + 2)],
    );
    b.set_maximize(LinExpr::term(s + 1, std::f64::consts::SQRT_2));
    b.nonneg("c00", LinExpr::term(s, -1.0).plus(&LinExpr::constant(1.0)));
    b.nonneg("c11", LinExpr::term(s + 2, -1.0).plus(&LinExpr::constant(4.0)));
    b.build().unwrap()
}

fn psd_hermitian() -> ConicProgram {
    // max Re W01 + Im W01 st W hermitian psd, W00 <= 1, W11 <= 1
    // -> sqrt(2) at |W01| = 1, phase pi/4.
    let mut b = ProgramBuilder::new("psd_hermitian");
    let w = b.hermitian_psd("W", 2);
    b.set_maximize(LinExpr::var(w.re(0, 1)).plus(&LinExpr::var(w.im(0, 1))));
    b.nonneg(
        "c00",
        LinExpr::term(w.diag(0), -1.0).plus(&LinExpr::constant(1.0)),
    );
    b.nonneg(
        "c11",
        LinExpr::term(w.diag(1), -1.0).plus(&LinExpr::constant(1.0)),
    );
    b.build().unwrap()
}

fn mixed_soc_exp() -> ConicProgram {
    // max x + t st ||(x, 1)|| <= 2, t <= log2(4) -> sqrt(3) + 2.
    let mut b = ProgramBuilder::new("mixed_soc_exp");
    let x = b.scalar("x");
    let r = b.scalar("r");
    let t = b.log2_epigraph("t", r);
    b.set_maximize(LinExpr::var(x).plus(&LinExpr::var(t)));
    b.constraint(
        "ball",
        ConeTag::Soc,
        vec![
            LinExpr::constant(2.0),
            LinExpr::var(x),
            LinExpr::constant(1.0),
        ],
    );
    b.nonneg("rcap", LinExpr::term(r, -1.0).plus(&LinExpr::constant(4.0)));
    b.build().unwrap()
}

pub fn battery() -> Vec<BatteryCase> {
    vec![
        BatteryCase {
            name: "lp_box",
            program: lp_box(),
            expected: Expected::Objective(3.0),
        },
        BatteryCase {
            name: "lp_two_var",
            program: lp_two_var(),
            expected: Expected::Objective(8.0),
        },
        BatteryCase {
            name: "lp_equality",
            program: lp_equality(),
            expected: Expected::Objective(2.0),
        },
        BatteryCase {
            name: "lp_infeasible",
            program: lp_infeasible(),
            expected: Expected::Infeasible,
        },
        BatteryCase {
            name: "lp_unbounded",
            program: lp_unbounded(),
            expected: Expected::Unbounded,
        },
        BatteryCase {
            name: "soc_ball",
            program: soc_ball(),
            expected: Expected::Objective(std::f64::consts::SQRT_2),
        },
        BatteryCase {
            name: "soc_distance",
            program: soc_distance(),
            expected: Expected::Objective(4.0),
        },
        BatteryCase {
            name: "soc_rotated",
            program: soc_rotated(),
            expected: Expected::Objective(2.0),
        },
        BatteryCase {
            name: "exp_log",
            program: exp_log(),
            expected: Expected::Objective(1.0),
        },
        BatteryCase {
            name: "exp_growth",
            program: exp_growth(),
            expected: Expected::Objective(std::f64::consts::E * std::f64::consts::E),
        },
        BatteryCase {
            name: "exp_two_rates",
            program: exp_two_rates(),
            expected: Expected::Objective(2.0),
        },
        BatteryCase {
            name: "psd_diag",
            program: psd_diag(),
            expected: Expected::Objective(5.0),
        },
        BatteryCase {
            name: "psd_cross",
            program: psd_cross(),
            expected: Expected::Objective(4.0),
        },
        BatteryCase {
            name: "psd_hermitian",
            program: psd_hermitian(),
            expected: Expected::Objective(std::f64::consts::SQRT_2),
        },
        BatteryCase {
            name: "mixed_soc_exp",
            program: mixed_soc_exp(),
            expected: Expected::Objective(3.0_f64.sqrt() + 2.0),
        },
    ]
}

/// Runs one case at the given settings and verifies status, objective
/// accuracy (1e-6 absolute) and, for the degenerate statuses, the returned
/// certificate against the constraint data (Farkas check, 1e-8).
pub fn run_case(case: &BatteryCase, settings: &SolverSettings) -> CaseReport {
    let res = solve(&case.program, settings);
    let sf = standard_form(&case.program);
    let (passed, detail) = match case.expected {
        Expected::Objective(want) => {
            let ok = res.status == SolveStatus::Optimal && (res.objective - want).abs() <= 1e-6;
            (
                ok,
                format!(
                    "status {:?}, objective {:.9} (want {:.9}), {} iters",
                    res.status, res.objective, want, res.iterations
                ),
            )
        }
        Expected::Infeasible => match (&res.status, &res.infeasibility_certificate) {
            (SolveStatus::Infeasible, Some(cert)) => {
                let bty: f64 = sf.b.iter().zip(cert).map(|(b, y)| b * y).sum();
                let mut aty = vec![0.0; sf.n];
                sf.a.matvec_t(cert, &mut aty);
                let aty_norm = aty.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
                let y_norm = cert.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
                let mut in_dual = true;
                for &(tag, start, len) in &sf.cones {
                    if !super::cones::in_dual_cone(tag, &cert[start..start + len], 1e-8 * (1.0 + y_norm)) {
                        in_dual = false;
                    }
                }
                let ok = (bty + 1.0).abs() <= 1e-8
                    && aty_norm <= 1e-8 * (1.0 + y_norm)
                    && in_dual;
                (
                    ok,
                    format!(
                        "certificate b'y = {bty:.2e}+1, |A'y| = {aty_norm:.2e}, dual cone: {in_dual}"
                    ),
                )
            }
            _ => (false, format!("status {:?}, no certificate", res.status)),
        },
        Expected::Unbounded => match (&res.status, &res.unboundedness_certificate) {
            (SolveStatus::Unbounded, Some((xhat, shat))) => {
                let ctx: f64 = sf.c.iter().zip(xhat).map(|(c, x)| c * x).sum();
                let mut ax = vec![0.0; sf.m];
                sf.a.matvec(xhat, &mut ax);
                for i in 0..sf.m {
                    ax[i] += shat[i];
                }
                let resid = ax.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
                let mut in_cone = true;
                for &(tag, start, len) in &sf.cones {
                    if !super::cones::in_cone(tag, &shat[start..start + len], 1e-8) {
                        in_cone = false;
                    }
                }
                let ok = (ctx + 1.0).abs() <= 1e-8 && resid <= 1e-8 && in_cone;
                (
                    ok,
                    format!("ray c'x = {ctx:.2e}+1, |Ax+s| = {resid:.2e}, cone: {in_cone}"),
                )
            }
            _ => (false, format!("status {:?}, no certificate", res.status)),
        },
    };
    CaseReport {
        name: case.name,
        passed,
        detail,
    }
}

pub fn run_battery(settings: &SolverSettings) -> Vec<CaseReport> {
    battery().iter().map(|c| run_case(c, settings)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_battery_cases_pass_at_default_settings() {
        let reports = run_battery(&SolverSettings::default());
        assert!(reports.len() >= 12);
        for r in &reports {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
