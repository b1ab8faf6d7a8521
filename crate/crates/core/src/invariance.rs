//! Numerical check that only the KL generator is blind to the target's scale.
//!
//! Two views are reported for each `(β, c)`:
//!
//! * pointwise: the first-variation shift `Δ(x) = Φ'(π(x)) − Φ'(c π(x))` and its
//!   spread `max Δ − min Δ` (the constancy defect), zero exactly when Δ is a
//!   constant;
//! * integral: `B(μ | cπ) − B(μ | π)` for several μ, which is `c − 1 − log c`
//!   for every μ in the KL case.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bregman::{bregman_divergence, BetaGenerator, GridDensity};
use crate::error::{Error, Result};
use crate::real::{density_floor, Real};

/// Signed function tabulated on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftProfile<F> {
    lo: F,
    hi: F,
    values: Vec<F>,
}

impl<F: Real> ShiftProfile<F> {
    pub fn lo(&self) -> F {
        self.lo
    }

    pub fn hi(&self) -> F {
        self.hi
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn mean(&self) -> F {
        self.values.iter().copied().sum::<F>() / F::from_usize(self.values.len()).unwrap()
    }
}

/// `Δ(x) = Φ'(π(x)) − Φ'(c π(x))` on π's grid. For β = 1, `Δ ≡ −log c`.
pub fn first_variation_shift<F: Real>(gen: &BetaGenerator<F>, c: F, pi: &GridDensity<F>) -> Result<ShiftProfile<F>> {
    check_scale(c)?;
    if let Some(i) = pi.values().iter().position(|&v| !(v > F::zero())) {
        return Err(Error::Domain(format!(
            "pi must be positive on the grid, zero at index {i}"
        )));
    }
    let floor = density_floor::<F>();
    let values = pi
        .values()
        .iter()
        .map(|&p| {
            let p = p.max(floor);
            Ok(gen.phi_prime(p)? - gen.phi_prime((c * p).max(floor))?)
        })
        .collect::<Result<Vec<F>>>()?;
    Ok(ShiftProfile {
        lo: pi.lo(),
        hi: pi.hi(),
        values,
    })
}

/// `max Δ − min Δ` over the grid.
pub fn constancy_defect<F: Real>(shift: &ShiftProfile<F>) -> F {
    let (lo, hi) = shift
        .values
        .iter()
        .fold((F::infinity(), F::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

/// `B(μ | cπ) − B(μ | π)` by quadrature.
pub fn divergence_shift<F: Real>(gen: &BetaGenerator<F>, c: F, mu: &GridDensity<F>, pi: &GridDensity<F>) -> Result<F> {
    check_scale(c)?;
    let scaled = pi.scaled(c)?;
    Ok(bregman_divergence(gen, mu, &scaled)? - bregman_divergence(gen, mu, pi)?)
}

fn check_scale<F: Real>(c: F) -> Result<()> {
    if c > F::zero() && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("scale c must be in (0, inf), got {c}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<F> {
    pub lo: F,
    pub hi: F,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport<F> {
    pub beta: F,
    pub c: F,
    pub constancy_defect: F,
    /// Grid average of Δ; the constant `K` when the defect vanishes.
    pub mean_shift: F,
    /// Divergence shift for the first μ, if any μ was given.
    pub divergence_shift: Option<F>,
    /// `max − min` of the divergence shift across the μ list.
    pub divergence_spread: Option<F>,
    pub divergence_shifts: Vec<F>,
    pub grid: GridSpec<F>,
}

/// Evaluates every `(β, c)` pair; reports are sorted by `(β, c)`.
pub fn scan<F: Real>(
    betas: &[F],
    cs: &[F],
    pi: &GridDensity<F>,
    mus: &[GridDensity<F>],
) -> Result<Vec<InvarianceReport<F>>> {
    let pairs: Vec<(F, F)> = betas.iter().flat_map(|&b| cs.iter().map(move |&c| (b, c))).collect();
    let grid = GridSpec {
        lo: pi.lo(),
        hi: pi.hi(),
        n: pi.len(),
    };
    let mut reports = pairs
        .par_iter()
        .map(|&(beta, c)| {
            let gen = BetaGenerator::new(beta)?;
            let shift = first_variation_shift(&gen, c, pi)?;
            let divergence_shifts = mus
                .iter()
                .map(|mu| divergence_shift(&gen, c, mu, pi))
                .collect::<Result<Vec<F>>>()?;
            let spread = divergence_shifts.iter().fold(None, |acc: Option<(F, F)>, &v| {
                Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
            });
            Ok(InvarianceReport {
                beta,
                c,
                constancy_defect: constancy_defect(&shift),
                mean_shift: shift.mean(),
                divergence_shift: divergence_shifts.first().copied(),
                divergence_spread: spread.map(|(lo, hi)| hi - lo),
                divergence_shifts,
                grid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| {
        a.beta
            .partial_cmp(&b.beta)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.c.partial_cmp(&b.c).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn normal(mean: f64, lo: f64, hi: f64, n: usize) -> GridDensity<f64> {
        GridDensity::from_fn(lo, hi, n, |x| {
            (-0.5 * (x - mean) * (x - mean)).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .unwrap()
        .with_mass(1.0)
    }

    fn gen(beta: f64) -> BetaGenerator<f64> {
        BetaGenerator::new(beta).unwrap()
    }

    #[test]
    fn unit_scale_has_zero_shift() {
        let pi = normal(0.0, -5.0, 5.0, 1001);
        for beta in [0.0, 0.5, 1.0, 2.0, 3.0] {
            let s = first_variation_shift(&gen(beta), 1.0, &pi).unwrap();
            assert!(s.values().iter().all(|&v| v == 0.0));
            assert_eq!(constancy_defect(&s), 0.0);
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn kl_shift_is_constant_log_c() {
        let pi = normal(0.0, -5.0, 5.0, 1001);
        let s = first_variation_shift(&gen(1.0), 2.0, &pi).unwrap();
        for &v in s.values() {
            assert_abs_diff_eq!(v, -0.693147, epsilon = 1e-6);
            assert_abs_diff_eq!(v, -2f64.ln(), epsilon = 1e-13);
        }
        assert!(constancy_defect(&s) <= 1e-12);
    }

    #[test]
    fn l2_shift_is_minus_pi() {
        let pi = normal(0.0, -5.0, 5.0, 1001);
        let s = first_variation_shift(&gen(2.0), 2.0, &pi).unwrap();
        for (&v, &p) in s.values().iter().zip(pi.values()) {
            assert_abs_diff_eq!(v, -p, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(constancy_defect(&s), 0.398941, epsilon = 1e-6);
    }

    #[test]
    fn defect_of_constant_profile() {
        let p = ShiftProfile {
            lo: 0.0,
            hi: 1.0,
            values: vec![0.25; 7],
        };
        assert_eq!(constancy_defect(&p), 0.0);
        assert_eq!(p.mean(), 0.25);
    }

    #[test]
    fn kl_divergence_shift_is_mu_independent() {
        let pi = normal(0.0, -10.0, 10.0, 4001);
        let expected = 2.0 - 1.0 - 2f64.ln();
        let mut seen = Vec::new();
        for m in [0.0, 1.0, -0.5] {
            let mu = normal(m, -10.0, 10.0, 4001);
            let s = divergence_shift(&gen(1.0), 2.0, &mu, &pi).unwrap();
            assert_abs_diff_eq!(s, 0.306853, epsilon = 1e-5);
            assert_abs_diff_eq!(s, expected, epsilon = 1e-10);
            seen.push(s);
        }
        assert!((seen[0] - seen[1]).abs() < 1e-8 && (seen[0] - seen[2]).abs() < 1e-8);
        let mu = normal(0.3, -10.0, 10.0, 4001);
        assert_eq!(divergence_shift(&gen(1.0), 1.0, &mu, &pi).unwrap(), 0.0);
    }

    #[test]
    fn l2_divergence_shift_depends_on_mu() {
        let pi = normal(0.0, -10.0, 10.0, 4001);
        let a = divergence_shift(&gen(2.0), 2.0, &normal(0.0, -10.0, 10.0, 4001), &pi).unwrap();
        let b = divergence_shift(&gen(2.0), 2.0, &normal(1.0, -10.0, 10.0, 4001), &pi).unwrap();
        assert!((a - b).abs() > 1e-3);
        // ½[(c²−1)/(2√π) − 2(c−1)∫μπ] with ∫μπ = e^{−m²/4}/(2√π)
        let k = 1.0 / (2.0 * std::f64::consts::PI.sqrt());
        assert_abs_diff_eq!(a, 0.5 * (3.0 * k - 2.0 * k), epsilon = 1e-10);
        assert_abs_diff_eq!(b, 0.5 * (3.0 * k - 2.0 * k * (-0.25f64).exp()), epsilon = 1e-10);
    }

    #[test]
    fn errors() {
        let pi = normal(0.0, -5.0, 5.0, 11);
        assert!(first_variation_shift(&gen(1.0), 0.0, &pi).is_err());
        assert!(first_variation_shift(&gen(1.0), -2.0, &pi).is_err());
        let holey = GridDensity::new(0.0, 1.0, vec![0.5, 0.0, 0.5]).unwrap();
        assert!(matches!(
            first_variation_shift(&gen(1.0), 2.0, &holey),
            Err(Error::Domain(_))
        ));
        let other = normal(0.0, -5.0, 5.0, 12);
        assert!(divergence_shift(&gen(1.0), 2.0, &other, &pi).is_err());
    }

    #[test]
    fn scan_shapes() {
        let pi = normal(0.0, -5.0, 5.0, 1001);
        assert!(scan(&[1.0], &[], &pi, &[]).unwrap().is_empty());
        let reports = scan(&[2.0, 1.0], &[10.0, 0.5, 2.0], &pi, std::slice::from_ref(&pi)).unwrap();
        let keys: Vec<(f64, f64)> = reports.iter().map(|r| (r.beta, r.c)).collect();
        assert_eq!(
            keys,
            vec![(1.0, 0.5), (1.0, 2.0), (1.0, 10.0), (2.0, 0.5), (2.0, 2.0), (2.0, 10.0)]
        );
        for r in &reports[..3] {
            assert!(r.constancy_defect <= 1e-10);
            assert_abs_diff_eq!(r.mean_shift, -r.c.ln(), epsilon = 1e-12);
            assert_eq!(r.divergence_spread, Some(0.0));
        }
        for r in &reports[3..] {
            assert!(r.constancy_defect >= 0.01);
        }
        assert_eq!(
            reports[0].grid,
            GridSpec {
                lo: -5.0,
                hi: 5.0,
                n: 1001
            }
        );
    }
}
