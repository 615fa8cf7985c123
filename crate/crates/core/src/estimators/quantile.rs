//! Two-sided standard normal quantile.

use super::EstimatorError;

/// The unique z with `P(|Z| >= z) = epsilon` for a standard normal Z,
/// i.e. the inverse CDF at `1 - epsilon/2`. Accurate to well below 1e-8.
pub fn normal_quantile(epsilon: f64) -> Result<f64, EstimatorError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EstimatorError::InvalidEpsilon(epsilon));
    }
    Ok(inverse_normal_cdf(1.0 - epsilon / 2.0))
}

/// Wichura's algorithm AS 241 (routine PPND16): rational approximations on
/// three regimes of `p`, relative accuracy about 1e-16.
fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(&A_CENTER, r) / horner(&B_CENTER, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        horner(&C_TAIL, r) / horner(&D_TAIL, r)
    } else {
        let r = r - 5.0;
        horner(&E_FAR_TAIL, r) / horner(&F_FAR_TAIL, r)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

fn horner(coeffs: &[f64; 8], r: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

const A_CENTER: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const B_CENTER: [f64; 8] = [
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const C_TAIL: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const D_TAIL: [f64; 8] = [
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const E_FAR_TAIL: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const F_FAR_TAIL: [f64; 8] = [
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];
