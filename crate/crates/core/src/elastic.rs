//! Planar elastic bound formulas: elementary bounds, the sliced material,
//! extremal polycrystals built from it, and the auxetic limit.
//!
//! An infinite bulk modulus (incompressible phase) is `f64::INFINITY`;
//! every formula goes through `1/κ`, which is then exactly zero.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoElastic {
    pub kappa: f64,
    pub mu: f64,
}

impl IsoElastic {
    pub fn new(kappa: f64, mu: f64) -> Result<Self> {
        if !(kappa > 0.0) || !(mu > 0.0 && mu.is_finite()) {
            return Err(CoreError::DegenerateInput(format!(
                "moduli must be positive (kappa = {kappa}, mu = {mu})"
            )));
        }
        Ok(Self { kappa, mu })
    }

    pub fn incompressible(mu: f64) -> Result<Self> {
        Self::new(f64::INFINITY, mu)
    }

    /// Planar Young's modulus `4κμ/(κ + μ)`.
    pub fn young(&self) -> f64 {
        4.0 * self.mu / (1.0 + self.mu / self.kappa)
    }
}

/// Orthotropic planar moduli in the Voigt-like form
/// `[[c1111, c1122, 0], [c1122, c2222, 0], [0, 0, 2 c1212]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarOrthotropic {
    pub c1111: f64,
    pub c1122: f64,
    pub c2222: f64,
    pub c1212: f64,
}

impl PlanarOrthotropic {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.c1111, self.c1122, 0.0, //
            self.c1122, self.c2222, 0.0, //
            0.0, 0.0, 2.0 * self.c1212,
        )
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix().symmetric_eigenvalues().min()
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= 0.0
    }

    pub fn isotropic(phase: &IsoElastic) -> Self {
        Self {
            c1111: phase.kappa + phase.mu,
            c1122: phase.kappa - phase.mu,
            c2222: phase.kappa + phase.mu,
            c1212: phase.mu,
        }
    }
}

/// `0 ≤ κ* ≤ κ`, `0 ≤ μ* ≤ μ` for composites of one phase and void.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementaryBounds {
    pub phase: IsoElastic,
}

impl ElementaryBounds {
    pub fn contains(&self, kappa_star: f64, mu_star: f64) -> bool {
        (0.0..=self.phase.kappa).contains(&kappa_star) && (0.0..=self.phase.mu).contains(&mu_star)
    }

    /// The weaker consequence `μ* - c κ* ≤ μ`, for `c > 0`.
    pub fn shear_bulk_inequality(&self, kappa_star: f64, mu_star: f64, c: f64) -> bool {
        mu_star - c * kappa_star <= self.phase.mu
    }
}

pub fn elementary_bounds(phase: IsoElastic) -> ElementaryBounds {
    ElementaryBounds { phase }
}

/// Slabs of the phase separated by thin layers that are soft only in
/// compression along x₁: `(ε, cε, E, μ)`.
pub fn sliced_material(phase: &IsoElastic, eps: f64, c: f64) -> Result<PlanarOrthotropic> {
    if !(eps > 0.0) {
        return Err(CoreError::DegenerateInput(format!("epsilon must be positive, got {eps}")));
    }
    Ok(PlanarOrthotropic {
        c1111: eps,
        c1122: c * eps,
        c2222: phase.young(),
        c1212: phase.mu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `c1212` in the off-diagonal slots, exactly as the formula is usually printed.
    AsPrinted,
    /// `c1122` in the off-diagonal slots; the division by `c1212` under the root is kept.
    C1122Variant,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::AsPrinted => "as-printed",
            Variant::C1122Variant => "c1122-variant",
        }
    }
}

fn guard(value: f64, what: &str) -> Result<f64> {
    if value == 0.0 || !value.is_finite() {
        Err(CoreError::DegenerateInput(format!("{what} is {value}")))
    } else {
        Ok(value)
    }
}

/// Bulk and shear moduli of the polycrystal with the smallest bulk and the
/// largest shear modulus that can be built from crystal `mat`:
///
/// `κ* = (c1111 c2222 - x²)/(c1111 + c2222 - 2x)`,
/// `μ* = (c1111 c2222 - x²)/(2x - 2c2222 + 2√(c2222[c1111 + c2222 - 2x + (c1111 c2222 - x²)/c1212]))`
///
/// with `x = c1212` (as printed) or `x = c1122`. `mu_star` is `None` when
/// the radicand is negative, which happens for the as-printed formula on
/// nearly sliced materials.
pub fn polycrystal_extremes(mat: &PlanarOrthotropic, variant: Variant) -> Result<Extremes> {
    let x = match variant {
        Variant::AsPrinted => mat.c1212,
        Variant::C1122Variant => mat.c1122,
    };
    let (a, d) = (mat.c1111, mat.c2222);
    let det = a * d - x * x;
    let kappa = det / guard(a + d - 2.0 * x, "c1111 + c2222 - 2x")?;
    // 2√b - 2c2222 = 2(b - c2222²)/(√b + c2222) avoids cancellation when c1111 → 0
    let excess = d * (a - 2.0 * x + det / guard(mat.c1212, "c1212")?);
    let b = d * d + excess;
    if b < 0.0 {
        log::warn!("{}: shear formula has negative radicand {b}", variant.name());
        return Ok(Extremes {
            kappa_star: kappa,
            mu_star: None,
        });
    }
    let denom = 2.0 * x + 2.0 * excess / (b.sqrt() + d);
    let mu = det / guard(denom, "shear denominator")?;
    Ok(Extremes {
        kappa_star: kappa,
        mu_star: Some(mu),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremes {
    pub kappa_star: f64,
    pub mu_star: Option<f64>,
}

/// `κ* = 0`, `1/μ* = 5/(4μ) + 1/(4κ)`.
pub fn auxetic_limit(phase: &IsoElastic) -> (f64, f64) {
    (0.0, 1.0 / auxetic_inverse_shear(1.0 / phase.mu, 1.0 / phase.kappa))
}

/// `1/μ*` as a function of the compliances `1/μ` and `1/κ`.
pub fn auxetic_inverse_shear(inv_mu: f64, inv_kappa: f64) -> f64 {
    1.25 * inv_mu + 0.25 * inv_kappa
}

/// κ* of the as-printed formula on the sliced material as ε → 0:
/// `-μ(κ + μ)/(2(κ - μ))`.
pub fn as_printed_kappa_limit(phase: &IsoElastic) -> Result<f64> {
    let (k, m) = (phase.kappa, phase.mu);
    if k.is_infinite() {
        return Ok(-m / 2.0);
    }
    Ok(-m * (k + m) / (2.0 * guard(k - m, "kappa - mu")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn elementary_region() {
        let p = IsoElastic::new(2.0, 1.0).unwrap();
        let b = elementary_bounds(p);
        assert!(b.contains(2.0, 1.0));
        assert!(b.contains(0.0, 0.0));
        assert!(!b.contains(1.0, 2.0));
        assert!(b.shear_bulk_inequality(0.5, 1.0, 0.3));
        assert!(!b.shear_bulk_inequality(0.0, 1.5, 0.3));
    }

    #[test]
    fn sliced_values() {
        let p = IsoElastic::new(1.0, 1.0).unwrap();
        let m = sliced_material(&p, 1e-6, 0.0).unwrap();
        assert_eq!((m.c1111, m.c1122, m.c2222, m.c1212), (1e-6, 0.0, 2.0, 1.0));
        for c in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            for eps in [1e-9, 1e-3, 0.5, 1.9] {
                assert!(sliced_material(&p, eps, c).unwrap().is_psd());
            }
        }
        let inc = IsoElastic::incompressible(1.0).unwrap();
        assert_eq!(inc.young(), 4.0);
    }

    #[test]
    fn isotropic_crystal_reproduces_bulk_modulus() {
        for (k, m) in [(1.0, 0.5), (3.0, 1.0), (2.0, 2.5)] {
            let p = IsoElastic::new(k, m).unwrap();
            let ex = polycrystal_extremes(&PlanarOrthotropic::isotropic(&p), Variant::C1122Variant).unwrap();
            assert!(rel(ex.kappa_star, k) < 1e-14);
        }
    }

    #[test]
    fn variant_limit_is_auxetic() {
        let p = IsoElastic::new(1.0, 1.0).unwrap();
        let ex = polycrystal_extremes(&sliced_material(&p, 1e-9, 0.0).unwrap(), Variant::C1122Variant).unwrap();
        let (ks, ms) = (ex.kappa_star, ex.mu_star.unwrap());
        assert!(ks <= 1e-8);
        assert!(rel(ms, 2.0 / 3.0) < 1e-6);
        // first-order convergence in ε
        let errs: Vec<f64> = [1e-3, 1e-6, 1e-9]
            .iter()
            .map(|&e| {
                let ex = polycrystal_extremes(&sliced_material(&p, e, 0.0).unwrap(), Variant::C1122Variant).unwrap();
                (ex.mu_star.unwrap() - 2.0 / 3.0).abs()
            })
            .collect();
        assert!(errs[1] < 2e-3 * errs[0] && errs[2] < 2e-3 * errs[1].max(1e-15));
    }

    #[test]
    fn as_printed_limit_differs() {
        let p = IsoElastic::new(2.0, 1.0).unwrap();
        let ex = polycrystal_extremes(&sliced_material(&p, 1e-9, 0.0).unwrap(), Variant::AsPrinted).unwrap();
        let ks = ex.kappa_star;
        assert!(ex.mu_star.is_none());
        let limit = as_printed_kappa_limit(&p).unwrap();
        assert_eq!(limit, -1.5);
        assert!(rel(ks, limit) < 1e-6);
    }

    #[test]
    fn auxetic_values() {
        let (k, m) = auxetic_limit(&IsoElastic::incompressible(1.0).unwrap());
        assert_eq!((k, m), (0.0, 0.8));
        let (_, m) = auxetic_limit(&IsoElastic::new(1.0, 1.0).unwrap());
        assert!(rel(m, 2.0 / 3.0) < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(IsoElastic::new(0.0, 1.0).is_err());
        let m = PlanarOrthotropic {
            c1111: 1.0,
            c1122: 1.0,
            c2222: 1.0,
            c1212: 1.0,
        };
        assert!(polycrystal_extremes(&m, Variant::AsPrinted).is_err());
        assert!(as_printed_kappa_limit(&IsoElastic::new(1.0, 1.0).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn shift_invariance(inv_mu in 0.1f64..10.0, inv_kappa in 0.1f64..10.0, d in 0.0f64..1.0) {
            let d = d * inv_kappa * 0.99;
            let base = auxetic_inverse_shear(inv_mu, inv_kappa);
            let shifted = auxetic_inverse_shear(inv_mu + d, inv_kappa - d);
            prop_assert!((shifted - base - d).abs() <= 1e-14 * shifted.abs().max(1.0));
        }

        #[test]
        fn sliced_extremes_obey_elementary_bounds(k in 0.1f64..10.0, m in 0.1f64..10.0, c in 0.0f64..1.0, e in -9.0f64..-3.0) {
            let p = IsoElastic::new(k, m).unwrap();
            let mat = sliced_material(&p, 10f64.powf(e), c).unwrap();
            let ex = polycrystal_extremes(&mat, Variant::C1122Variant).unwrap();
            let (ks, ms) = (ex.kappa_star, ex.mu_star.unwrap());
            prop_assert!(elementary_bounds(p).contains(ks, ms), "({ks}, {ms}) outside for ({k}, {m})");
        }
    }
}
