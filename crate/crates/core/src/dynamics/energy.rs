use crate::dynamics::FieldState;
use crate::spectral::InteractionKernel;

/// `1/2 sum_z (|v(z)|^2 + (V u)(z) . u(z))` with periodic wrap.
pub fn energy(x: &FieldState, kernel: &InteractionKernel) -> f64 {
    let vu = kernel.apply(&x.lbox, &x.u);
    let kinetic: f64 = x.v.iter().map(|v| v * v).sum();
    let potential: f64 = vu.iter().zip(&x.u).map(|(a, b)| a * b).sum();
    0.5 * (kinetic + potential)
}

/// `(sum_z |Y(z)|^2 (1 + |z|^2)^alpha)^{1/2}` over the slab, with transverse
/// coordinates folded around zero.
pub fn weighted_norm(y: &FieldState, alpha: f64) -> f64 {
    let n = y.n;
    (0..y.sites())
        .map(|s| {
            let z = y.lbox.half_coords(s);
            let r2: i64 = z.iter().map(|c| c * c).sum();
            let w = (1.0 + r2 as f64).powf(alpha);
            let m: f64 = (0..n)
                .map(|k| y.u[s * n + k].powi(2) + y.v[s * n + k].powi(2))
                .sum();
            w * m
        })
        .sum::<f64>()
        .sqrt()
}
