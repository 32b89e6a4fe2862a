//! Closed-form evaluators for p-capacities, radial equilibrium profiles and
//! the critical-window interpolation constants.
//!
//! Everything here is an exact formula evaluated in double precision; the
//! numerical modules treat these functions as oracles. Exponent compositions
//! of the form `x^(1/(p-1))` are evaluated in log space since `p` close to 1
//! makes the exponent large.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The window parameter `tau = lim alpha / eps^(1/gamma)`.
///
/// Infinity is a distinguished variant rather than a large float so that
/// `tau^(d-p)` never overflows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tau {
    Finite(f64),
    Infinite,
}

impl Tau {
    pub fn finite(self) -> Option<f64> {
        match self {
            Tau::Finite(t) => Some(t),
            Tau::Infinite => None,
        }
    }
}

/// Problem parameters: dimension, exponent and the perforation scales.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Params {
    /// Space dimension, at least 2.
    pub d: u32,
    /// Exponent of the p-Laplacian, in (1, d).
    pub p: f64,
    /// Outer radius of the solve ball, greater than 1.
    pub r_outer: f64,
    /// Anchor separation on the unit sphere, in (0, 1).
    pub eps: f64,
    /// Cavity scale: cavities have diameter of order `alpha * eps`.
    pub alpha: f64,
    /// Anchor density: `eps^(d-1) * |S| -> sigma`.
    pub sigma: f64,
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Domain(format!("d = {} must be >= 2", self.d)));
        }
        if !(self.p > 1.0 && self.p < self.d as f64) {
            return Err(Error::Domain(format!(
                "p = {} must satisfy 1 < p < d = {}",
                self.p, self.d
            )));
        }
        if self.r_outer <= 1.0 {
            return Err(Error::Domain(format!(
                "outer radius {} must exceed 1",
                self.r_outer
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Domain(format!("eps = {} must be in (0,1)", self.eps)));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Domain(format!("alpha = {} must be > 0", self.alpha)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Domain(format!("sigma = {} must be > 0", self.sigma)));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        (self.d as f64 - self.p) / (self.p - 1.0)
    }

    /// Critical cavity scale `eps^(1/gamma)`.
    pub fn alpha_critical(&self) -> f64 {
        self.eps.powf(1.0 / self.gamma())
    }

    /// Window parameter `alpha / alpha_critical`.
    pub fn tau(&self) -> f64 {
        self.alpha / self.alpha_critical()
    }
}

/// A p-capacity value together with the outer radius it is relative to.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CapacityValue {
    pub value: f64,
    /// Outer radius; `f64::INFINITY` means whole-space capacity.
    pub relative_to: f64,
}

/// Radial decay exponent `gamma = (d - p) / (p - 1)`.
pub fn gamma_exponent(d: u32, p: f64) -> Result<f64> {
    if !(p > 1.0 && p < d as f64) {
        return Err(Error::Domain(format!(
            "gamma exponent requires 1 < p < d, got p = {p}, d = {d}"
        )));
    }
    Ok((d as f64 - p) / (p - 1.0))
}

/// Surface area of the unit sphere S^(d-1) in R^d.
///
/// Uses the recurrence `omega(d+2) = 2 pi omega(d) / d` starting from the
/// circle (2 pi) and the 2-sphere (4 pi).
pub fn sphere_area(d: u32) -> f64 {
    assert!(d >= 2, "sphere_area requires d >= 2");
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut dim = if d % 2 == 0 { 2u32 } else { 3u32 };
    let mut area = if d % 2 == 0 { two_pi } else { 2.0 * two_pi };
    while dim < d {
        area *= two_pi / dim as f64;
        dim += 2;
    }
    area
}

/// p-capacity of the closed ball of radius `r` relative to B(0,R).
///
/// `R = infinity` gives the whole-space value `omega gamma^(p-1) r^(d-p)`;
/// finite `R` gives `omega gamma^(p-1) (r^-gamma - R^-gamma)^(1-p)`.
pub fn ball_capacity(d: u32, p: f64, r: f64, r_outer: f64) -> Result<CapacityValue> {
    let gamma = gamma_exponent(d, p)?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("ball radius {r} must be positive")));
    }
    if r >= r_outer {
        return Err(Error::Domain(format!(
            "ball radius {r} must be below outer radius {r_outer}"
        )));
    }
    let prefactor = sphere_area(d) * gamma.powf(p - 1.0);
    let value = if r_outer.is_infinite() {
        prefactor * r.powf(d as f64 - p)
    } else {
        prefactor * (r.powf(-gamma) - r_outer.powf(-gamma)).powf(1.0 - p)
    };
    Ok(CapacityValue {
        value,
        relative_to: r_outer,
    })
}

/// Whole-space equilibrium profile of the ball of radius `scale`:
/// 1 inside, `(t/scale)^-gamma` outside. Continuous and nonincreasing.
pub fn radial_profile_u(t: f64, gamma: f64, scale: f64) -> f64 {
    assert!(t >= 0.0 && scale > 0.0);
    if t <= scale {
        1.0
    } else {
        (t / scale).powf(-gamma)
    }
}

/// Equilibrium profile of the annulus `r < |x| < R`: the p-harmonic radial
/// function with value 1 at `t = r` and 0 at `t = R`.
pub fn radial_profile_annulus(t: f64, r: f64, r_outer: f64, gamma: f64) -> Result<f64> {
    if !(r > 0.0 && r < r_outer) {
        return Err(Error::Domain(format!(
            "annulus requires 0 < r < R, got r = {r}, R = {r_outer}"
        )));
    }
    if t < r || t > r_outer {
        return Err(Error::Domain(format!(
            "radial coordinate {t} outside annulus [{r}, {r_outer}]"
        )));
    }
    let denom = r.powf(-gamma) - r_outer.powf(-gamma);
    Ok((t.powf(-gamma) - r_outer.powf(-gamma)) / denom)
}

/// Equilibrium potential of the ball of radius `1 + eps` relative to B(0,R),
/// as a function of the radial coordinate. Zero beyond `R` by convention.
pub fn equilibrium_profile_ball(t: f64, eps: f64, r_outer: f64, gamma: f64) -> Result<f64> {
    if eps < 0.0 {
        return Err(Error::Domain(format!("eps = {eps} must be >= 0")));
    }
    if r_outer <= 1.0 + eps {
        return Err(Error::Domain(format!(
            "outer radius {r_outer} must exceed 1 + eps = {}",
            1.0 + eps
        )));
    }
    if t <= 1.0 + eps {
        Ok(1.0)
    } else if t <= r_outer {
        radial_profile_annulus(t, 1.0 + eps, r_outer, gamma)
    } else {
        Ok(0.0)
    }
}

fn inv_pm1_log(value: f64, p: f64) -> f64 {
    // log of value^(1/(p-1)), valid for value > 0
    value.ln() / (p - 1.0)
}

/// Interpolation constant of the critical window from explicit energy parts.
///
/// `x_part` is the cavity-cloud energy coefficient and `y_part` the bulk-ball
/// one; the minimizer of `A^p y + (1-A)^p x` over [0,1] is
/// `x^(1/(p-1)) / (x^(1/(p-1)) + y^(1/(p-1)))`, evaluated via the log of the
/// ratio for robustness.
pub fn a_star_from_parts(x_part: f64, y_part: f64, p: f64) -> f64 {
    assert!(y_part > 0.0, "bulk capacity part must be positive");
    if x_part <= 0.0 {
        return 0.0;
    }
    let log_ratio = (inv_pm1_log(y_part, p) - inv_pm1_log(x_part, p)).exp();
    1.0 / (1.0 + log_ratio)
}

/// The constant `A_*(tau)` (or `A_R(tau)` when `cap_ball_rel` is a relative
/// capacity): fraction of the bulk ball potential retained in the limit.
pub fn a_star(tau: Tau, sigma: f64, cap_k: f64, cap_ball_rel: f64, d: u32, p: f64) -> f64 {
    match tau {
        Tau::Infinite => 1.0,
        Tau::Finite(t) => {
            if t == 0.0 {
                0.0
            } else {
                a_star_from_parts(sigma * t.powf(d as f64 - p) * cap_k, cap_ball_rel, p)
            }
        }
    }
}

/// Limiting energy of the ansatz family:
/// `phi_tau(A) = A^p cap_ball_rel + (1-A)^p cap_K sigma tau^(d-p)`.
pub fn phi_tau(a: f64, tau: f64, sigma: f64, cap_k: f64, cap_ball_rel: f64, d: u32, p: f64) -> f64 {
    a.powf(p) * cap_ball_rel + (1.0 - a).powf(p) * cap_k * sigma * tau.powf(d as f64 - p)
}

/// Minimum of `phi_tau` over A in [0,1], in closed form:
/// `((x y / (x + y))^(p-1)` with `x, y` the (1/(p-1))-th powers of the parts.
pub fn phi_min_from_parts(x_part: f64, y_part: f64, p: f64) -> f64 {
    assert!(y_part > 0.0);
    if x_part <= 0.0 {
        return 0.0;
    }
    let lx = inv_pm1_log(x_part, p);
    let ly = inv_pm1_log(y_part, p);
    // log-sum-exp for ln(x + y)
    let m = lx.max(ly);
    let lsum = m + ((lx - m).exp() + (ly - m).exp()).ln();
    ((p - 1.0) * (lx + ly - lsum)).exp()
}

/// Limiting p-capacity of the cavity cloud: 0 at `tau = 0`, the closed-form
/// minimum of `phi_tau` in the window, and the full ball capacity at
/// `tau = infinity`. Always at most `cap_ball_rel`.
pub fn limit_capacity(tau: Tau, sigma: f64, cap_k: f64, cap_ball_rel: f64, d: u32, p: f64) -> f64 {
    match tau {
        Tau::Infinite => cap_ball_rel,
        Tau::Finite(t) => {
            if t == 0.0 {
                0.0
            } else {
                phi_min_from_parts(sigma * t.powf(d as f64 - p) * cap_k, cap_ball_rel, p)
            }
        }
    }
}

/// Bracket for the relative capacity in terms of the whole-space one:
/// `cap <= cap(.,B(0,R)) <= (1 - R^-gamma)^-p cap`.
pub fn capacity_bracket(
    cap_whole_space: f64,
    r_outer: f64,
    gamma: f64,
    p: f64,
) -> Result<(f64, f64)> {
    if cap_whole_space < 0.0 {
        return Err(Error::Domain(format!(
            "capacity {cap_whole_space} must be nonnegative"
        )));
    }
    if r_outer <= 1.0 {
        return Err(Error::Domain(format!(
            "bracket requires R > 1, got {r_outer}"
        )));
    }
    if r_outer.is_infinite() {
        return Ok((cap_whole_space, cap_whole_space));
    }
    let factor = (1.0 - r_outer.powf(-gamma)).powf(-p);
    Ok((cap_whole_space, factor * cap_whole_space))
}

/// Relative width `J(alpha) = (1 - (10 alpha)^gamma)^-p - 1` of the capacity
/// bracket at outer radius `1/(10 alpha)`; positive, increasing, -> 0.
pub fn shrinkage_factor_j(alpha: f64, gamma: f64, p: f64) -> Result<f64> {
    if !(alpha > 0.0 && 10.0 * alpha < 1.0) {
        return Err(Error::Domain(format!(
            "shrinkage factor requires 0 < alpha < 1/10, got {alpha}"
        )));
    }
    Ok((1.0 - (10.0 * alpha).powf(gamma)).powf(-p) - 1.0)
}

/// Energy of the truncated radial profile `A~ U(x/R)` on the cone over a
/// spherical cap of normalized measure `mu_q`, spanning radii `r > R`:
/// `A~^p R^(d-p) gamma^(p-1) omega mu(Q)`.
pub fn cone_energy_closed(a_tilde: f64, r: f64, mu_q: f64, gamma: f64, p: f64, d: u32) -> f64 {
    assert!(a_tilde >= 0.0 && r > 0.0 && (0.0..=1.0).contains(&mu_q));
    a_tilde.powf(p) * r.powf(d as f64 - p) * gamma.powf(p - 1.0) * sphere_area(d) * mu_q
}

/// Energy of `A~ h_{r0,r1}(|x|)` on the truncated cone of measure `mu_q`
/// spanning radii `r0 < |x| < r1`. This is the sharp lower bound for the
/// cone energy of any field that is at least `A~` on the inner cap and 0 on
/// the outer one.
pub fn cone_energy_truncated(
    a_tilde: f64,
    r0: f64,
    r1: f64,
    mu_q: f64,
    gamma: f64,
    p: f64,
    d: u32,
) -> Result<f64> {
    if !(r0 > 0.0 && r0 < r1) {
        return Err(Error::Domain(format!(
            "truncated cone requires 0 < r0 < r1, got {r0}, {r1}"
        )));
    }
    let bracket = r0.powf(-gamma) - r1.powf(-gamma);
    Ok(a_tilde.powf(p) * gamma.powf(p - 1.0) * bracket.powf(1.0 - p) * sphere_area(d) * mu_q)
}

/// Capacity scaling `cap_p(aK) = a^(d-p) cap_p(K)`.
pub fn capacity_scaling(cap: f64, a: f64, d: u32, p: f64) -> f64 {
    assert!(a > 0.0);
    a.powf(d as f64 - p) * cap
}

/// Normalized measure of the spherical cap of Euclidean radius `delta`
/// around any point of S^(d-1).
pub fn cap_measure(d: u32, delta: f64) -> f64 {
    assert!(d >= 2);
    if delta <= 0.0 {
        return 0.0;
    }
    if delta >= 2.0 {
        return 1.0;
    }
    // polar opening angle of the cap
    let theta = 2.0 * (delta / 2.0).asin();
    match d {
        2 => theta / std::f64::consts::PI,
        3 => (delta / 2.0).powi(2),
        _ => {
            // mu = int_0^theta sin^(d-2) / int_0^pi sin^(d-2), by Simpson
            let f = |t: f64| t.sin().powi(d as i32 - 2);
            simpson(f, 0.0, theta, 2048) / simpson(f, 0.0, std::f64::consts::PI, 2048)
        }
    }
}

/// Composite Simpson quadrature on [a, b] with n (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol * b.abs().max(1.0),
            "expected {b}, got {a} (tol {tol})"
        );
    }

    #[test]
    fn gamma_exponent_examples() {
        assert_close(gamma_exponent(3, 2.0).unwrap(), 1.0, 1e-15);
        assert_close(gamma_exponent(2, 1.5).unwrap(), 1.0, 1e-15);
        assert_close(gamma_exponent(2, 1.2).unwrap(), 4.0, 1e-12);
        assert!(gamma_exponent(3, 1.0).is_err());
        assert!(gamma_exponent(3, 3.0).is_err());
        assert!(gamma_exponent(3, 0.5).is_err());
    }

    #[test]
    fn sphere_area_low_dims() {
        assert_close(sphere_area(2), 2.0 * PI, 1e-15);
        assert_close(sphere_area(3), 4.0 * PI, 1e-15);
        assert_close(sphere_area(4), 2.0 * PI * PI, 1e-15);
        assert_close(sphere_area(5), 8.0 * PI * PI / 3.0, 1e-14);
    }

    #[test]
    fn sphere_area_d4_monte_carlo() {
        // volume of the unit 4-ball is omega_3 / 4; estimate it by sampling
        // the cube [-1,1]^4 with a fixed LCG stream
        let mut state: u64 = 0x9e3779b97f4a7c15;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let n = 2_000_000;
        let mut hits = 0u64;
        for _ in 0..n {
            let (a, b, c, d) = (next(), next(), next(), next());
            if a * a + b * b + c * c + d * d <= 1.0 {
                hits += 1;
            }
        }
        let vol = 16.0 * hits as f64 / n as f64;
        assert_close(4.0 * vol, sphere_area(4), 1e-2);
    }

    #[test]
    fn ball_capacity_paper_values() {
        assert_close(ball_capacity(3, 2.0, 1.0, f64::INFINITY).unwrap().value, 4.0 * PI, 1e-12);
        assert_close(ball_capacity(2, 1.5, 1.0, f64::INFINITY).unwrap().value, 2.0 * PI, 1e-12);
        assert_close(
            ball_capacity(2, 1.5, 0.5, 2.0).unwrap().value,
            2.0 * PI / 1.5f64.sqrt(),
            1e-12,
        );
        assert!(ball_capacity(2, 1.5, 2.0, 2.0).is_err());
    }

    #[test]
    fn ball_capacity_matches_quadrature_of_profile_energy() {
        // independent oracle: integrate |h'|^p over the annulus in 1D
        let cases: [(u32, f64, f64, f64); 3] =
            [(2, 1.5, 0.5, 2.0), (2, 1.2, 0.5, 2.0), (3, 2.5, 0.7, 3.0)];
        for &(d, p, r, r_out) in &cases {
            let gamma = gamma_exponent(d, p).unwrap();
            let denom = r.powf(-gamma) - r_out.powf(-gamma);
            let dh = |t: f64| gamma * t.powf(-gamma - 1.0) / denom;
            let integrand = |t: f64| dh(t).powf(p) * t.powf(d as f64 - 1.0);
            let energy = sphere_area(d) * simpson(integrand, r, r_out, 4096);
            assert_close(ball_capacity(d, p, r, r_out).unwrap().value, energy, 1e-8);
        }
    }

    #[test]
    fn radial_profile_u_examples() {
        assert_close(radial_profile_u(0.5, 1.0, 1.0), 1.0, 1e-15);
        assert_close(radial_profile_u(2.0, 1.0, 1.0), 0.5, 1e-15);
        let eps = 0.3;
        assert_close(radial_profile_u(2.0 * (1.0 + eps), 1.0, 1.0 + eps), 0.5, 1e-14);
    }

    #[test]
    fn annulus_profile_examples() {
        assert_close(radial_profile_annulus(0.5, 0.5, 2.0, 1.0).unwrap(), 1.0, 1e-15);
        assert_close(radial_profile_annulus(2.0, 0.5, 2.0, 1.0).unwrap(), 0.0, 1e-15);
        assert_close(radial_profile_annulus(1.0, 0.5, 2.0, 1.0).unwrap(), 1.0 / 3.0, 1e-14);
        assert!(radial_profile_annulus(0.4, 0.5, 2.0, 1.0).is_err());
        assert!(radial_profile_annulus(2.1, 0.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn annulus_profile_satisfies_radial_ode() {
        // (t^(d-1) |h'|^(p-2) h')' = 0, checked by central differences:
        // the residual must shrink like step^2
        let (d, p, r, r_out) = (3u32, 1.7, 0.5, 3.0);
        let gamma = gamma_exponent(d, p).unwrap();
        let h = |t: f64| radial_profile_annulus(t, r, r_out, gamma).unwrap();
        let flux = |t: f64, step: f64| {
            let dh = (h(t + step) - h(t - step)) / (2.0 * step);
            t.powf(d as f64 - 1.0) * dh.abs().powf(p - 2.0) * dh
        };
        let residual = |step: f64| {
            let mut worst: f64 = 0.0;
            for k in 1..20 {
                let t = r + (r_out - r) * k as f64 / 20.0;
                let g = (flux(t + step, step) - flux(t - step, step)) / (2.0 * step);
                worst = worst.max(g.abs());
            }
            worst
        };
        let scale = flux(1.0, 1e-5).abs();
        let r1 = residual(1e-3) / scale;
        let r2 = residual(5e-4) / scale;
        assert!(r1 < 1e-4, "coarse residual too large: {r1}");
        assert!(r2 < r1 / 3.0 || r2 < 1e-10, "no O(step^2) decay: {r1} -> {r2}");
    }

    #[test]
    fn equilibrium_profile_examples() {
        assert_close(equilibrium_profile_ball(1.0, 0.1, 2.0, 1.0).unwrap(), 1.0, 1e-15);
        assert_close(equilibrium_profile_ball(2.0, 0.1, 2.0, 1.0).unwrap(), 0.0, 1e-15);
        assert_close(equilibrium_profile_ball(1.5, 0.0, 2.0, 1.0).unwrap(), 1.0 / 3.0, 1e-14);
        assert_close(equilibrium_profile_ball(5.0, 0.0, 2.0, 1.0).unwrap(), 0.0, 1e-15);
        assert!(equilibrium_profile_ball(1.0, 0.2, 1.1, 1.0).is_err());
    }

    #[test]
    fn a_star_special_cases() {
        // d=3, p=2, K the unit ball: A_* = sigma tau / (1 + sigma tau)
        let cap = 4.0 * PI;
        for &(sigma, tau) in &[(1.0, 0.5), (6.0, 0.1), (2.0, 3.0)] {
            let a = a_star(Tau::Finite(tau), sigma, cap, cap, 3, 2.0);
            assert_close(a, sigma * tau / (1.0 + sigma * tau), 1e-13);
        }
        assert_close(a_star(Tau::Finite(0.0), 1.0, cap, cap, 3, 2.0), 0.0, 1e-15);
        assert_close(a_star(Tau::Infinite, 1.0, cap, cap, 3, 2.0), 1.0, 1e-15);
    }

    #[test]
    fn a_star_figure2_parameters() {
        // 12 equally spaced anchors: sigma = 24 sin(pi/12), tau = 1/40,
        // K the unit disk. The interpolation constant is about one half.
        let sigma = 24.0 * (PI / 12.0).sin();
        let a = a_star(Tau::Finite(1.0 / 40.0), sigma, 2.0 * PI, 2.0 * PI, 2, 1.5);
        assert_close(a, 0.490992, 1e-5);
        assert!(a > 0.49 && a < 0.51);
    }

    #[test]
    fn phi_tau_endpoints_and_minimum() {
        let (sigma, cap_k, cap_b, d, p) = (2.0, 5.0, 7.0, 2u32, 1.5);
        assert_close(phi_tau(1.0, 0.7, sigma, cap_k, cap_b, d, p), cap_b, 1e-14);
        assert_close(phi_tau(0.0, 0.0, sigma, cap_k, cap_b, d, p), 0.0, 1e-15);

        // brute-force grid search oracle for the closed-form minimum
        let tau = 0.7;
        let mut best = f64::INFINITY;
        let n = 1_000_000;
        for i in 0..=n {
            let a = i as f64 / n as f64;
            best = best.min(phi_tau(a, tau, sigma, cap_k, cap_b, d, p));
        }
        let closed = limit_capacity(Tau::Finite(tau), sigma, cap_k, cap_b, d, p);
        assert!((best - closed).abs() < 1e-9, "grid {best} vs closed {closed}");
        let a_min = a_star(Tau::Finite(tau), sigma, cap_k, cap_b, d, p);
        assert_close(phi_tau(a_min, tau, sigma, cap_k, cap_b, d, p), closed, 1e-12);
    }

    #[test]
    fn limit_capacity_rows() {
        let (sigma, cap_k, cap_b, d, p) = (6.2, 8.3, 8.4, 2u32, 1.2);
        assert_close(limit_capacity(Tau::Finite(0.0), sigma, cap_k, cap_b, d, p), 0.0, 1e-15);
        assert_close(limit_capacity(Tau::Infinite, sigma, cap_k, cap_b, d, p), cap_b, 1e-15);
        let mid = limit_capacity(Tau::Finite(0.1), sigma, cap_k, cap_b, d, p);
        assert!(mid > 0.0 && mid <= cap_b);
    }

    #[test]
    fn bracket_examples() {
        let (lo, hi) = capacity_bracket(1.0, 2.0, 1.0, 1.5).unwrap();
        assert_close(lo, 1.0, 1e-15);
        assert_close(hi, 2.0 * 2.0f64.sqrt(), 1e-13);
        let (lo, hi) = capacity_bracket(3.0, f64::INFINITY, 1.0, 1.5).unwrap();
        assert_close(lo, hi, 1e-15);
        assert!(capacity_bracket(1.0, 0.9, 1.0, 1.5).is_err());

        // the exact relative value lies in the bracket, for the unit ball
        for &(d, p, r_out) in &[(2u32, 1.5, 2.0), (2, 1.2, 3.0), (3, 2.0, 2.0)] {
            let gamma = gamma_exponent(d, p).unwrap();
            let whole = ball_capacity(d, p, 1.0, f64::INFINITY).unwrap().value;
            let relative = ball_capacity(d, p, 1.0, r_out).unwrap().value;
            let (lo, hi) = capacity_bracket(whole, r_out, gamma, p).unwrap();
            assert!(lo <= relative && relative <= hi);
        }
    }

    #[test]
    fn relative_capacity_decreases_to_whole_space() {
        let (d, p, r) = (2u32, 1.5, 1.0);
        let whole = ball_capacity(d, p, r, f64::INFINITY).unwrap().value;
        let gamma = gamma_exponent(d, p).unwrap();
        let mut prev = f64::INFINITY;
        for &r_out in &[1.5, 2.0, 4.0, 8.0, 64.0] {
            let v = ball_capacity(d, p, r, r_out).unwrap().value;
            assert!(v < prev && v >= whole);
            let (lo, hi) = capacity_bracket(whole, r_out, gamma, p).unwrap();
            assert!(v >= lo && v <= hi);
            prev = v;
        }
    }

    #[test]
    fn shrinkage_factor_examples() {
        assert_close(shrinkage_factor_j(0.01, 1.0, 1.5).unwrap(), 0.9f64.powf(-1.5) - 1.0, 1e-14);
        assert!(shrinkage_factor_j(1e-9, 1.0, 1.5).unwrap() < 1e-7);
        let j1 = shrinkage_factor_j(0.01, 1.0, 1.5).unwrap();
        let j2 = shrinkage_factor_j(0.02, 1.0, 1.5).unwrap();
        assert!(j2 > j1 && j1 > 0.0);
        assert!(shrinkage_factor_j(0.1, 1.0, 1.5).is_err());
    }

    #[test]
    fn cone_energy_examples() {
        // full-sphere cone at R = 1 equals the ball capacity
        let full = cone_energy_closed(1.0, 1.0, 1.0, 1.0, 1.5, 2);
        assert_close(full, ball_capacity(2, 1.5, 1.0, f64::INFINITY).unwrap().value, 1e-13);
        assert_close(cone_energy_closed(0.0, 1.0, 0.3, 1.0, 1.5, 2), 0.0, 1e-15);
        assert_close(cone_energy_closed(0.5, 1.0, 0.25, 1.0, 1.5, 2), 0.5554, 2e-4);

        // quadrature cross-check of the 1/4-cap cone energy
        let (gamma, p, d) = (1.0, 1.5, 2u32);
        let a = 0.5;
        let du = |t: f64| a * gamma * t.powf(-gamma - 1.0);
        let integrand = |t: f64| du(t).powf(p) * t.powf(d as f64 - 1.0);
        let tail_start = 1e4;
        let quad = sphere_area(d) * 0.25 * (simpson(integrand, 1.0, tail_start, 200_000)
            + a.powf(p) * gamma.powf(p - 1.0) * tail_start.powf(-gamma));
        assert_close(cone_energy_closed(a, 1.0, 0.25, gamma, p, d), quad, 1e-6);
    }

    #[test]
    fn truncated_cone_energy_matches_annulus_capacity() {
        // A~ = 1 and a full cap reduce to the annulus capacity
        let v = cone_energy_truncated(1.0, 0.5, 2.0, 1.0, 1.0, 1.5, 2).unwrap();
        assert_close(v, ball_capacity(2, 1.5, 0.5, 2.0).unwrap().value, 1e-13);
    }

    #[test]
    fn capacity_scaling_examples() {
        assert_close(capacity_scaling(3.3, 1.0, 3, 2.0), 3.3, 1e-15);
        assert_close(capacity_scaling(4.0 * PI, 2.0, 3, 2.0), 8.0 * PI, 1e-14);
    }

    #[test]
    fn cap_measure_values() {
        assert_close(cap_measure(2, 2.0), 1.0, 1e-15);
        assert_close(cap_measure(3, 1.0), 0.25, 1e-15);
        // d=2: quarter of the circle has delta = sqrt(2 - 2 cos(pi/2)) = sqrt 2
        assert_close(cap_measure(2, 2.0f64.sqrt()), 0.5, 1e-13);
        // generic-d quadrature agrees with the d=3 closed form
        let f = cap_measure(4, 0.8);
        assert!(f > 0.0 && f < 0.5);
    }

    #[test]
    fn params_validation_and_derived() {
        let params = Params {
            d: 2,
            p: 1.2,
            r_outer: 2.0,
            eps: 0.1,
            alpha: 0.05,
            sigma: 6.2,
        };
        params.validate().unwrap();
        assert_close(params.gamma(), 4.0, 1e-12);
        assert_close(params.alpha_critical(), 0.1f64.powf(0.25), 1e-14);
        assert_close(params.tau(), 0.05 / 0.1f64.powf(0.25), 1e-13);
        let bad = Params { p: 2.5, ..params };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sup_additivity_crossing() {
        // limit capacity never exceeds either of the two natural bounds
        let (sigma, cap_k, cap_b, d, p) = (6.28, 8.29, 8.4, 2u32, 1.2);
        for &tau in &[0.01, 0.05, 0.1, 0.2, 1.0, 5.0] {
            let lim = limit_capacity(Tau::Finite(tau), sigma, cap_k, cap_b, d, p);
            let sub = sigma * tau.powf(d as f64 - p) * cap_k;
            assert!(lim <= cap_b * (1.0 + 1e-12));
            assert!(lim <= sub * (1.0 + 1e-12));
        }
    }
}
