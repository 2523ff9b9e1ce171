//! Golden-section bracketing minimization of a scalar function.

use crate::error::{Error, Result};

/// Interior-point ratio used to place the two probes.
pub const GOLDEN_DELTA: f64 = 0.618;

/// How the bracket is updated after comparing the two probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BracketRule {
    /// Keep the sub-interval that contains the probe with the smaller value.
    /// Each step removes the fraction `1 - δ` of the bracket.
    #[default]
    Minimizing,
    /// Literal printed variant: if `f(ρ⁽¹⁾) < f(ρ⁽²⁾)` set `b = ρ⁽²⁾`, else
    /// `a = ρ⁽¹⁾`, with `ρ⁽¹⁾ = a + δ(b−a)` and `ρ⁽²⁾ = b − δ(b−a)`. Kept only
    /// for comparison; it discards the better probe.
    Printed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenResult {
    /// Midpoint of the final bracket.
    pub argmin: f64,
    /// Bracket before every step and after the last one.
    pub brackets: Vec<(f64, f64)>,
    /// Number of objective evaluations.
    pub evaluations: usize,
}

/// Upper bound on the number of bracketing steps for a width-`width` bracket.
pub fn max_steps(width: f64, epsilon: f64) -> usize {
    if width <= epsilon {
        return 0;
    }
    ((epsilon / width).ln() / GOLDEN_DELTA.ln()).ceil() as usize
}

/// Minimizes `f` over `[a, b]` until the bracket is narrower than `epsilon`.
///
/// Both probes are recomputed every step (the ratio 0.618 is not exactly the
/// golden conjugate, so probes cannot be reused) and evaluated concurrently.
pub fn golden_section<F>(
    f: F,
    a: f64,
    b: f64,
    epsilon: f64,
    rule: BracketRule,
) -> Result<GoldenResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::spec(format!("invalid bracket [{a}, {b}]")));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::spec("epsilon must be positive"));
    }
    let (mut a, mut b) = (a, b);
    let mut brackets = vec![(a, b)];
    let mut evaluations = 0;
    while b - a > epsilon {
        let hi = a + GOLDEN_DELTA * (b - a);
        let lo = b - GOLDEN_DELTA * (b - a);
        let (f_hi, f_lo) = rayon::join(|| f(hi), || f(lo));
        let (f_hi, f_lo) = (f_hi?, f_lo?);
        evaluations += 2;
        match rule {
            BracketRule::Minimizing => {
                if f_hi < f_lo {
                    a = lo;
                } else {
                    b = hi;
                }
            }
            BracketRule::Printed => {
                if f_hi < f_lo {
                    b = lo;
                } else {
                    a = hi;
                }
            }
        }
        brackets.push((a, b));
    }
    Ok(GoldenResult {
        argmin: 0.5 * (a + b),
        brackets,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_minimum() {
        let res = golden_section(
            |r| Ok((r - 3.0).powi(2)),
            0.0,
            10.0,
            1e-3,
            BracketRule::Minimizing,
        )
        .unwrap();
        assert!((res.argmin - 3.0).abs() < 2e-3, "{}", res.argmin);
        let (a, b) = *res.brackets.last().unwrap();
        assert!(b - a <= 1e-3);
        assert!(res.evaluations <= 2 * max_steps(10.0, 1e-3));
    }

    #[test]
    fn each_step_removes_the_same_fraction() {
        let res = golden_section(
            |r| Ok((r - 7.1).abs()),
            0.0,
            10.0,
            1e-3,
            BracketRule::Minimizing,
        )
        .unwrap();
        for w in res.brackets.windows(2) {
            let (w0, w1) = (w[0].1 - w[0].0, w[1].1 - w[1].0);
            assert!(((w0 - w1) / w0 - (1.0 - GOLDEN_DELTA)).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_function_goes_to_left_edge() {
        let res =
            golden_section(|r| Ok(r.exp()), 0.0, 10.0, 1e-3, BracketRule::Minimizing).unwrap();
        assert!(res.argmin.abs() <= 1e-3);
        let res = golden_section(|r| Ok(-r), 0.0, 10.0, 1e-3, BracketRule::Minimizing).unwrap();
        assert!((res.argmin - 10.0).abs() <= 1e-3);
    }

    #[test]
    fn printed_rule_loses_the_minimum() {
        let res = golden_section(
            |r| Ok((r - 3.0).powi(2)),
            0.0,
            10.0,
            1e-3,
            BracketRule::Printed,
        )
        .unwrap();
        assert!((res.argmin - 3.0).abs() > 0.01);
    }

    #[test]
    fn evaluation_errors_propagate() {
        let res = golden_section(
            |_| Err(Error::DegenerateResidual),
            0.0,
            1.0,
            1e-3,
            BracketRule::Minimizing,
        );
        assert!(matches!(res, Err(Error::DegenerateResidual)));
    }

    #[test]
    fn invalid_brackets() {
        assert!(golden_section(Ok, 1.0, 1.0, 1e-3, BracketRule::Minimizing).is_err());
        assert!(golden_section(Ok, 0.0, 1.0, 0.0, BracketRule::Minimizing).is_err());
        let res = golden_section(Ok, 0.0, 1e-4, 1e-3, BracketRule::Minimizing).unwrap();
        assert_eq!(res.evaluations, 0);
    }
}
