use crate::error::{domain, Result};
use crate::gamma_conv::{gamma_cdf, gamma_pdf, GammaSpec};

/// Moving-time density of the two-state on/off process that starts and ends
/// in the moving state:
/// `sum_{n>=1} [G(s; n, on) - G(s; n + 1, on)] g(t - s; n, off)`.
///
/// Written directly from gamma cdfs and densities; it shares no code with the
/// three-state tables and serves as their reference in the degenerate cases.
pub fn two_state_moving_density(s: f64, t: f64, on_rate: f64, off_rate: f64) -> Result<f64> {
    if !(s > 0.0 && s < t) {
        return domain(format!("occupation time must lie in (0, {t}), got {s}"));
    }
    let y = t - s;
    let mut sum = 0.0;
    let mut n: u32 = 1;
    loop {
        let on_n = GammaSpec::new(n, on_rate)?;
        let on_n1 = GammaSpec::new(n + 1, on_rate)?;
        let g_n = gamma_cdf(s, on_n)?;
        let weight = g_n - gamma_cdf(s, on_n1)?;
        let dens = gamma_pdf(y, GammaSpec::new(n, off_rate)?)?;
        sum += weight * dens;
        // remaining terms are bounded by G(s; n + 1, on) * max density
        let remaining = gamma_cdf(s, on_n1)? * off_rate;
        if remaining < 1e-17 * sum || remaining < 1e-300 || n > 100_000 {
            break;
        }
        n += 1;
    }
    Ok(sum)
}
