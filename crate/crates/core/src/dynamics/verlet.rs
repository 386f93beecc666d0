use crate::dynamics::FieldState;
use crate::error::{CrystalError, Result};
use crate::spectral::InteractionKernel;

/// Velocity-Verlet integration of `u'' = -V u` on the periodic box. Only a
/// cross-check for the spectral propagator.
pub fn timestep_oracle(x0: &FieldState, kernel: &InteractionKernel, t: f64, dt: f64) -> Result<FieldState> {
    let omega_max = kernel.symbol_bound().sqrt();
    let limit = 0.5 / omega_max.max(f64::MIN_POSITIVE);
    if !(dt > 0.0) || dt >= limit {
        return Err(CrystalError::StabilityViolation { dt, limit });
    }
    let steps = (t.abs() / dt).round() as usize;
    let mut x = x0.clone();
    if steps == 0 {
        return Ok(x);
    }
    let h = t / steps as f64;
    let mut a: Vec<f64> = kernel.apply(&x.lbox, &x.u).iter().map(|f| -f).collect();
    for _ in 0..steps {
        for (v, a) in x.v.iter_mut().zip(&a) {
            *v += 0.5 * h * a;
        }
        for (u, v) in x.u.iter_mut().zip(&x.v) {
            *u += h * v;
        }
        a = kernel.apply(&x.lbox, &x.u).iter().map(|f| -f).collect();
        for (v, a) in x.v.iter_mut().zip(&a) {
            *v += 0.5 * h * a;
        }
    }
    Ok(x)
}
