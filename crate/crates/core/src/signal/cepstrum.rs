use super::{ENERGY_FLOOR, N_CEPSTRA};
use crate::Real;

fn dct_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal DCT-II.
pub fn dct_ii_ortho<T: Real>(x: &[T]) -> Vec<T> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.to_f64_lossy()
                        * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64)
                            .cos()
                })
                .sum();
            T::lit(s * dct_scale(k, n))
        })
        .collect()
}

/// Orthonormal DCT-III, the inverse of [`dct_ii_ortho`].
pub fn dct_iii_ortho<T: Real>(c: &[T]) -> Vec<T> {
    let n = c.len();
    (0..n)
        .map(|i| {
            let s: f64 = c
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    v.to_f64_lossy()
                        * dct_scale(k, n)
                        * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64)
                            .cos()
                })
                .sum();
            T::lit(s)
        })
        .collect()
}

/// Band cepstrum: orthonormal DCT-II of `ln(max(band, 1e-10))`.
pub fn cepstrum_from_bands<T: Real>(bands: &[T; N_CEPSTRA]) -> [T; N_CEPSTRA] {
    let floor = T::lit(ENERGY_FLOOR);
    let logs: Vec<T> = bands.iter().map(|&b| b.max(floor).ln()).collect();
    let mut out = [T::zero(); N_CEPSTRA];
    out.copy_from_slice(&dct_ii_ortho(&logs));
    out
}

/// Inverse of [`cepstrum_from_bands`] for bands above the floor.
pub fn bands_from_cepstrum<T: Real>(cepstra: &[T; N_CEPSTRA]) -> [T; N_CEPSTRA] {
    let mut out = [T::zero(); N_CEPSTRA];
    for (o, v) in out.iter_mut().zip(dct_iii_ortho(cepstra)) {
        *o = v.exp();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_bands_give_zero_cepstrum() {
        let c = cepstrum_from_bands(&[1.0f64; 20]);
        assert!(c.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn constant_e_bands() {
        let c = cepstrum_from_bands(&[std::f64::consts::E; 20]);
        assert!((c[0] - 20f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|&v| v.abs() < 1e-12));

        let mut c0 = [0.0f64; 20];
        c0[0] = 20f64.sqrt();
        let b = bands_from_cepstrum(&c0);
        assert!(b.iter().all(|&v| (v - std::f64::consts::E).abs() < 1e-12));
    }

    #[test]
    fn zero_cepstrum_gives_unit_bands() {
        assert!(bands_from_cepstrum(&[0.0f64; 20])
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn floor_applies_to_silence() {
        let c = cepstrum_from_bands(&[0.0f64; 20]);
        assert!((c[0] - 20f64.sqrt() * ENERGY_FLOOR.ln()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn roundtrip(logs in proptest::collection::vec(-20.0f64..20.0, 20)) {
            let mut bands = [0.0; 20];
            for (b, l) in bands.iter_mut().zip(&logs) {
                *b = l.exp();
            }
            let back = bands_from_cepstrum(&cepstrum_from_bands(&bands));
            for (x, y) in bands.iter().zip(&back) {
                prop_assert!(((x - y) / x).abs() < 1e-10);
            }
        }
    }
}
