use rand::Rng;

use crate::autodiff::Matrix;

/// Glorot/Xavier uniform: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn glorot_respects_limit() {
        let m = glorot_uniform(30, 10, &mut rng_for(1, &[]));
        let limit = (6.0f64 / 40.0).sqrt();
        assert_eq!(m.shape(), (30, 10));
        assert!(m.data().iter().all(|x| x.abs() <= limit));
        assert!(m.data().iter().any(|x| x.abs() > limit / 2.0));
    }
}
