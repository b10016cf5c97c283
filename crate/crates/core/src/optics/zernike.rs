//! Zernike polynomials on the unit disk, Noll-indexed and Noll-normalized.

/// Radial order `n` and signed azimuthal frequency `m` for Noll index `j ≥ 1`.
/// Positive `m` selects the cosine term, negative `m` the sine term.
pub fn noll_to_nm(j: u32) -> (u32, i32) {
    assert!(j >= 1, "Noll indices start at 1");
    let mut n = 0u32;
    let mut rem = j - 1;
    while rem > n {
        n += 1;
        rem -= n;
    }
    let base = (n % 2) + 2 * ((rem + (n + 1) % 2) / 2);
    let m = if j.is_multiple_of(2) {
        base as i32
    } else {
        -(base as i32)
    };
    (n, m)
}

/// Radial polynomial `R_n^|m|(rho)`.
pub fn radial(n: u32, m: u32, rho: f64) -> f64 {
    debug_assert!(m <= n && (n - m).is_multiple_of(2));
    let mut acc = 0.0;
    for k in 0..=(n - m) / 2 {
        let num = factorial(n - k);
        let den = factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * num / den * rho.powi((n - 2 * k) as i32);
    }
    acc
}

/// Noll-normalized Zernike polynomial `Z_j(rho, theta)` (unit RMS over the disk).
pub fn zernike(j: u32, rho: f64, theta: f64) -> f64 {
    let (n, m) = noll_to_nm(j);
    let r = radial(n, m.unsigned_abs(), rho);
    if m == 0 {
        ((n + 1) as f64).sqrt() * r
    } else {
        let norm = (2.0 * (n + 1) as f64).sqrt();
        let ang = m.unsigned_abs() as f64 * theta;
        if m > 0 {
            norm * r * ang.cos()
        } else {
            norm * r * ang.sin()
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
