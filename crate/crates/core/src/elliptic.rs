//! Complete and incomplete elliptic integrals and Jacobi elliptic functions.
//!
//! Everything here uses the *modulus* convention k, not the parameter
//! m = k². The complete integrals are evaluated with the arithmetic-
//! geometric mean, the Jacobi amplitude with the descending AGM ladder,
//! and the incomplete integral of the second kind with Carlson symmetric
//! forms. All functions are pure.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted modulus. Above this the quarter period diverges and
/// the elastica degenerates; the planner never samples there.
pub const MODULUS_MAX: f64 = 1.0 - 1e-9;

/// Elliptic modulus k with 0 <= k <= 1 - 1e-9.
///
/// This is the modulus, not the parameter m = k².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Modulus(f64);

impl Modulus {
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() || k < 0.0 || k > MODULUS_MAX {
            return Err(Error::InvalidModulus(k));
        }
        Ok(Modulus(k))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Complement k' = sqrt(1 - k²).
    #[inline]
    pub fn complement(self) -> f64 {
        ((1.0 - self.0) * (1.0 + self.0)).sqrt()
    }
}

impl TryFrom<f64> for Modulus {
    type Error = Error;
    fn try_from(k: f64) -> Result<Self> {
        Modulus::new(k)
    }
}

impl From<Modulus> for f64 {
    fn from(k: Modulus) -> f64 {
        k.0
    }
}

const AGM_EPS: f64 = 1e-16;
const MAX_ITER: usize = 64;

/// Complete elliptic integral of the first kind, K(k) = π / (2 AGM(1, k')).
pub fn complete_k(k: Modulus) -> f64 {
    let mut a = 1.0_f64;
    let mut b = k.complement();
    for _ in 0..MAX_ITER {
        if (a - b).abs() <= AGM_EPS * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    PI / (2.0 * a)
}

/// Complete elliptic integral of the second kind via the AGM scale sum.
pub fn complete_e(k: Modulus) -> f64 {
    let mut a = 1.0_f64;
    let mut b = k.complement();
    let mut c = k.get();
    let mut sum = 0.5 * c * c;
    let mut pow2 = 1.0;
    for _ in 0..MAX_ITER {
        if c.abs() <= AGM_EPS {
            break;
        }
        let an = 0.5 * (a + b);
        c = 0.5 * (a - b);
        b = (a * b).sqrt();
        a = an;
        pow2 *= 2.0;
        sum += 0.5 * pow2 * c * c;
    }
    PI / (2.0 * a) * (1.0 - sum)
}

/// Jacobi amplitude am(u, k), continuous and strictly increasing in u,
/// with am(u + 2K, k) = am(u, k) + π.
pub fn jacobi_am(u: f64, k: Modulus) -> f64 {
    if k.get() == 0.0 {
        return u;
    }
    // Descending AGM ladder.
    let mut a = [0.0_f64; MAX_ITER];
    let mut c = [0.0_f64; MAX_ITER];
    a[0] = 1.0;
    c[0] = k.get();
    let mut b = k.complement();
    let mut n = 0;
    while n + 1 < MAX_ITER {
        if c[n].abs() <= AGM_EPS * a[n] {
            break;
        }
        let an = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        n += 1;
        a[n] = an;
    }
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for i in (1..=n).rev() {
        let t = (c[i] / a[i] * phi.sin()).clamp(-1.0, 1.0);
        phi = 0.5 * (phi + t.asin());
    }
    phi
}

/// The Jacobi function triple at a point.
#[derive(Debug, Clone, Copy)]
pub struct SnCnDn {
    pub sn: f64,
    pub cn: f64,
    pub dn: f64,
}

/// Jacobi elliptic functions sn, cn, dn evaluated through the amplitude.
pub fn jacobi_sncndn(u: f64, k: Modulus) -> SnCnDn {
    let am = jacobi_am(u, k);
    let sn = am.sin();
    let cn = am.cos();
    let kk = k.get();
    let dn = (1.0 - kk * kk * sn * sn).max(0.0).sqrt();
    SnCnDn { sn, cn, dn }
}

/// Incomplete elliptic integral of the second kind E(phi, k) for any real
/// phi, extended by the quasi-periodicity E(phi + π, k) = E(phi, k) + 2 E(k).
pub fn incomplete_e(phi: f64, k: Modulus) -> f64 {
    if phi == 0.0 {
        return 0.0;
    }
    let n = (phi / PI).round();
    let r = phi - n * PI; // r in [-π/2, π/2]
    let mut e = if n != 0.0 { 2.0 * n * complete_e(k) } else { 0.0 };
    if r != 0.0 {
        e += r.signum() * incomplete_e_principal(r.abs(), k);
    }
    e
}

/// E(phi, k) for phi in [0, π/2] via Carlson symmetric forms.
fn incomplete_e_principal(phi: f64, k: Modulus) -> f64 {
    if phi >= FRAC_PI_2 {
        return complete_e(k);
    }
    let s = phi.sin();
    let c = phi.cos();
    let kk = k.get();
    let q = 1.0 - (kk * s) * (kk * s);
    s * carlson_rf(c * c, q, 1.0) - kk * kk / 3.0 * s * s * s * carlson_rd(c * c, q, 1.0)
}

/// Carlson symmetric integral R_F(x, y, z).
fn carlson_rf(mut x: f64, mut y: f64, mut z: f64) -> f64 {
    const ERRTOL: f64 = 1e-10;
    for _ in 0..MAX_ITER {
        let sx = x.sqrt();
        let sy = y.sqrt();
        let sz = z.sqrt();
        let lam = sx * (sy + sz) + sy * sz;
        x = 0.25 * (x + lam);
        y = 0.25 * (y + lam);
        z = 0.25 * (z + lam);
        let mu = (x + y + z) / 3.0;
        let dx = (mu - x) / mu;
        let dy = (mu - y) / mu;
        let dz = (mu - z) / mu;
        if dx.abs().max(dy.abs()).max(dz.abs()) < ERRTOL {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 + (e2 / 24.0 - 0.1 - 3.0 * e3 / 44.0) * e2 + e3 / 14.0) / mu.sqrt();
        }
    }
    let mu = (x + y + z) / 3.0;
    1.0 / mu.sqrt()
}

/// Carlson symmetric integral R_D(x, y, z).
fn carlson_rd(mut x: f64, mut y: f64, mut z: f64) -> f64 {
    const ERRTOL: f64 = 1e-10;
    let mut sum = 0.0;
    let mut fac = 1.0;
    for _ in 0..MAX_ITER {
        let sx = x.sqrt();
        let sy = y.sqrt();
        let sz = z.sqrt();
        let lam = sx * (sy + sz) + sy * sz;
        sum += fac / (sz * (z + lam));
        fac *= 0.25;
        x = 0.25 * (x + lam);
        y = 0.25 * (y + lam);
        z = 0.25 * (z + lam);
        let mu = 0.2 * (x + y + 3.0 * z);
        let dx = (mu - x) / mu;
        let dy = (mu - y) / mu;
        let dz = (mu - z) / mu;
        if dx.abs().max(dy.abs()).max(dz.abs()) < ERRTOL {
            let ea = dx * dy;
            let eb = dz * dz;
            let ec = ea - eb;
            let ed = ea - 6.0 * eb;
            let ee = ed + ec + ec;
            let series = 1.0 + ed * (-3.0 / 14.0 + 9.0 / 88.0 * ed - 4.5 / 26.0 * dz * ee)
                + dz * (ee / 6.0 + dz * (-9.0 / 22.0 * ec + 3.0 / 26.0 * dz * ea));
            return 3.0 * sum + fac * series / (mu * mu.sqrt());
        }
    }
    3.0 * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Reference values computed with 30-digit arithmetic (mpmath).
    const K_INV_SQRT2: f64 = 1.854_074_677_301_371_9;
    const K_HALF: f64 = 1.685_750_354_812_596;
    const K_0P6: f64 = 1.750_753_802_915_752_5;
    const E_INV_SQRT2: f64 = 1.350_643_881_047_675_5;
    const E_0P3: f64 = 1.534_833_464_923_249;
    const E_0P6: f64 = 1.418_083_394_448_724_2;
    const E_PI3_HALF: f64 = 1.007_555_555_144_472;

    fn k(v: f64) -> Modulus {
        Modulus::new(v).unwrap()
    }

    #[test]
    fn modulus_domain() {
        assert!(Modulus::new(-0.1).is_err());
        assert!(Modulus::new(1.0).is_err());
        assert!(Modulus::new(1.0 - 1e-12).is_err());
        assert!(Modulus::new(f64::NAN).is_err());
        assert!(Modulus::new(0.0).is_ok());
        assert!(Modulus::new(1.0 - 1e-8).is_ok());
    }

    #[test]
    fn complete_k_values() {
        assert_relative_eq!(complete_k(k(0.0)), FRAC_PI_2, max_relative = 1e-15);
        assert_relative_eq!(
            complete_k(k(1.0 / 2.0_f64.sqrt())),
            K_INV_SQRT2,
            max_relative = 1e-13
        );
        assert_relative_eq!(complete_k(k(0.5)), K_HALF, max_relative = 1e-13);
        assert_relative_eq!(complete_k(k(0.6)), K_0P6, max_relative = 1e-13);
    }

    // Independent AGM oracle, kept separate from the implementation path on
    // purpose: plain loop without the early-out structure above.
    fn agm(mut a: f64, mut b: f64) -> f64 {
        for _ in 0..100 {
            let an = 0.5 * (a + b);
            let bn = (a * b).sqrt();
            a = an;
            b = bn;
        }
        a
    }

    #[test]
    fn complete_k_matches_agm_oracle() {
        for kv in [0.05, 0.3, 0.5, 1.0 / 2.0_f64.sqrt(), 0.9, 0.95] {
            let oracle = PI / (2.0 * agm(1.0, (1.0 - kv * kv).sqrt()));
            assert_relative_eq!(complete_k(k(kv)), oracle, max_relative = 1e-12);
        }
    }

    /// Adaptive Simpson quadrature oracle for the defining integrals.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        s * h / 3.0
    }

    #[test]
    fn complete_e_values() {
        assert_relative_eq!(complete_e(k(0.0)), FRAC_PI_2, max_relative = 1e-15);
        assert_relative_eq!(
            complete_e(k(1.0 / 2.0_f64.sqrt())),
            E_INV_SQRT2,
            max_relative = 1e-13
        );
        // quadrature oracle
        for kv in [0.3, 0.6, 1.0 / 2.0_f64.sqrt()] {
            let oracle = simpson(
                |t: f64| (1.0 - kv * kv * t.sin() * t.sin()).sqrt(),
                0.0,
                FRAC_PI_2,
                2000,
            );
            assert_relative_eq!(complete_e(k(kv)), oracle, max_relative = 1e-12);
        }
        assert_relative_eq!(complete_e(k(0.3)), E_0P3, max_relative = 1e-13);
        assert_relative_eq!(complete_e(k(0.6)), E_0P6, max_relative = 1e-13);
        assert!(complete_e(k(0.3)) > complete_e(k(0.6)));
    }

    #[test]
    fn am_basics() {
        for kv in [0.0, 0.2, 0.5, 0.9] {
            assert_eq!(jacobi_am(0.0, k(kv)), 0.0);
        }
        // circular limit
        for u in [-2.0, -0.3, 0.7, 4.0] {
            assert_relative_eq!(jacobi_am(u, k(0.0)), u, max_relative = 1e-15);
        }
        // quarter-period identity am(K) = π/2
        for kv in [0.3, 0.5, 0.7, 0.95] {
            let kk = k(kv);
            assert_relative_eq!(
                jacobi_am(complete_k(kk), kk),
                FRAC_PI_2,
                epsilon = 1e-12
            );
        }
        // frozen value
        assert_relative_eq!(
            jacobi_am(1.3, k(0.6)),
            1.205_896_211_443_139_9,
            epsilon = 1e-12
        );
    }

    #[test]
    fn am_ode_oracle() {
        // d(am)/du = dn, integrated with RK4 from 0, independent of the
        // AGM ladder. Checks am at u = K for k = 0.5.
        let kk = k(0.5);
        let dn = |phi: f64| (1.0 - 0.25 * phi.sin() * phi.sin()).sqrt();
        let u_end = complete_k(kk);
        let n = 20_000;
        let h = u_end / n as f64;
        let mut phi = 0.0_f64;
        for _ in 0..n {
            let k1 = dn(phi);
            let k2 = dn(phi + 0.5 * h * k1);
            let k3 = dn(phi + 0.5 * h * k2);
            let k4 = dn(phi + h * k3);
            phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert_relative_eq!(jacobi_am(u_end, kk), phi, epsilon = 1e-10);
        assert_relative_eq!(phi, FRAC_PI_2, epsilon = 1e-10);
    }

    #[test]
    fn sncndn_values() {
        for kv in [0.0, 0.4, 0.8] {
            let t = jacobi_sncndn(0.0, k(kv));
            assert_eq!((t.sn, t.cn, t.dn), (0.0, 1.0, 1.0));
        }
        let t = jacobi_sncndn(0.8, k(0.0));
        assert_relative_eq!(t.sn, 0.8_f64.sin(), epsilon = 1e-14);
        assert_relative_eq!(t.cn, 0.8_f64.cos(), epsilon = 1e-14);
        assert_eq!(t.dn, 1.0);
        // frozen mpmath values at u = 0.8
        let t = jacobi_sncndn(0.8, k(0.5));
        assert_relative_eq!(t.sn, 0.704_212_141_547_167_4, epsilon = 1e-12);
        assert_relative_eq!(t.cn, 0.709_989_619_429_433_8, epsilon = 1e-12);
        assert_relative_eq!(t.dn, 0.935_960_103_275_982_6, epsilon = 1e-12);
        let t = jacobi_sncndn(0.8, k(0.95));
        assert_relative_eq!(t.sn, 0.669_314_015_026_780_3, epsilon = 1e-11);
        assert_relative_eq!(t.cn, 0.742_979_642_580_286_9, epsilon = 1e-11);
        assert_relative_eq!(t.dn, 0.771_814_045_760_427_8, epsilon = 1e-11);
        // quarter-period identity for k = 0.7
        let kk = k(0.7);
        let t = jacobi_sncndn(complete_k(kk), kk);
        assert_relative_eq!(t.sn, 1.0, epsilon = 1e-10);
        assert!(t.cn.abs() < 1e-10);
        assert_relative_eq!(t.dn, (1.0 - 0.49_f64).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn incomplete_e_values() {
        let kk = k(0.5);
        assert_eq!(incomplete_e(0.0, kk), 0.0);
        assert_relative_eq!(
            incomplete_e(FRAC_PI_2, kk),
            complete_e(kk),
            epsilon = 1e-13
        );
        assert_relative_eq!(incomplete_e(PI / 3.0, kk), E_PI3_HALF, epsilon = 1e-12);
        // quadrature oracle at phi = π/3
        let oracle = simpson(
            |t: f64| (1.0 - 0.25 * t.sin() * t.sin()).sqrt(),
            0.0,
            PI / 3.0,
            2000,
        );
        assert_relative_eq!(incomplete_e(PI / 3.0, kk), oracle, epsilon = 1e-12);
        // frozen value at phi = 1.1, k = 0.8
        assert_relative_eq!(
            incomplete_e(1.1, k(0.8)),
            0.977_001_938_796_892_1,
            epsilon = 1e-12
        );
        // quasi-periodicity
        for phi in [-2.0, -0.4, 0.0, 0.9, 2.5] {
            assert_relative_eq!(
                incomplete_e(phi + PI, kk),
                incomplete_e(phi, kk) + 2.0 * complete_e(kk),
                epsilon = 1e-12
            );
        }
        // odd function
        assert_relative_eq!(
            incomplete_e(-0.7, kk),
            -incomplete_e(0.7, kk),
            epsilon = 1e-14
        );
    }

    proptest! {
        #[test]
        fn pythagorean_identities(u in -20.0..20.0f64, kv in 0.0..0.97f64) {
            let kk = k(kv);
            let t = jacobi_sncndn(u, kk);
            prop_assert!((t.sn * t.sn + t.cn * t.cn - 1.0).abs() < 1e-10);
            prop_assert!((t.dn * t.dn + kv * kv * t.sn * t.sn - 1.0).abs() < 1e-10);
        }

        #[test]
        fn sn_periodicity(u in -1.0..1.0f64, kv in 0.01..0.95f64) {
            let kk = k(kv);
            let quarter = complete_k(kk);
            let u = u * 8.0 * quarter; // |u| <= 8K
            let a = jacobi_sncndn(u, kk).sn;
            let b = jacobi_sncndn(u + 4.0 * quarter, kk).sn;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn am_increasing(u in -10.0..10.0f64, du in 1e-3..1.0f64, kv in 0.0..0.97f64) {
            let kk = k(kv);
            prop_assert!(jacobi_am(u + du, kk) > jacobi_am(u, kk));
        }

        #[test]
        fn am_quasi_period(u in -10.0..10.0f64, kv in 0.01..0.95f64) {
            let kk = k(kv);
            let two_k = 2.0 * complete_k(kk);
            let a = jacobi_am(u + two_k, kk);
            let b = jacobi_am(u, kk) + PI;
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn derivative_consistency(u in -5.0..5.0f64, kv in 0.05..0.9f64) {
            let kk = k(kv);
            let h = 1e-5;
            let p = jacobi_sncndn(u + h, kk);
            let m = jacobi_sncndn(u - h, kk);
            let c = jacobi_sncndn(u, kk);
            let dsn = (p.sn - m.sn) / (2.0 * h);
            let dcn = (p.cn - m.cn) / (2.0 * h);
            let ddn = (p.dn - m.dn) / (2.0 * h);
            prop_assert!((dsn - c.cn * c.dn).abs() < 1e-6);
            prop_assert!((dcn + c.sn * c.dn).abs() < 1e-6);
            prop_assert!((ddn + kv * kv * c.sn * c.cn).abs() < 1e-6);
        }
    }
}
