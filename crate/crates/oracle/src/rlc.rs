use num_complex::Complex64;

/// Natural modes of a series RLC loop: `−r/2l ± j·sqrt(1/lc − (r/2l)²)`.
pub fn rlc_eigs(r: f64, l: f64, c: f64) -> [Complex64; 2] {
    let a = -r / (2.0 * l);
    let disc = 1.0 / (l * c) - a * a;
    if disc >= 0.0 {
        let w = disc.sqrt();
        [Complex64::new(a, w), Complex64::new(a, -w)]
    } else {
        let s = (-disc).sqrt();
        [Complex64::new(a + s, 0.0), Complex64::new(a - s, 0.0)]
    }
}

/// Modes of a π line with open ends: the series impedance rings against the
/// two end capacitors `b/2` in series. Inputs in per unit, result in rad/s.
pub fn pi_line_resonance(r: f64, x: f64, b: f64, omega_b: f64) -> [Complex64; 2] {
    rlc_eigs(r, x / omega_b, b / (4.0 * omega_b))
}
