//! Thin GEMM front-end over `matrixmultiply` with an optional f32 fast path.
//!
//! All matrices are row-major slices addressed by explicit (rows, cols).
//! The f32 path converts operands once, multiplies in f32 and accumulates
//! back into the f64 destination; binary-operand products stay exact either
//! way because they are small integers.

use super::Precision;

/// c = a·b + beta·c, with a (m×k), b (k×n), c (m×n), all row-major.
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
    precision: Precision,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    match precision {
        Precision::Exact => unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        },
        Precision::Fast32 => {
            let a32: Vec<f32> = a.iter().map(|&v| v as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&v| v as f32).collect();
            let mut c32 = vec![0.0f32; m * n];
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    a32.as_ptr(),
                    k as isize,
                    1,
                    b32.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    c32.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            if beta == 0.0 {
                for (dst, &v) in c.iter_mut().zip(&c32) {
                    *dst = v as f64;
                }
            } else {
                debug_assert_eq!(beta, 1.0);
                for (dst, &v) in c.iter_mut().zip(&c32) {
                    *dst += v as f64;
                }
            }
        }
    }
}

/// c = aᵀ·b + beta·c, with a (k×m), b (k×n), c (m×n), all row-major.
pub fn gemm_at_b(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
    precision: Precision,
) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    match precision {
        Precision::Exact => unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                1,
                m as isize,
                b.as_ptr(),
                n as isize,
                1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        },
        Precision::Fast32 => {
            let a32: Vec<f32> = a.iter().map(|&v| v as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&v| v as f32).collect();
            let mut c32 = vec![0.0f32; m * n];
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    a32.as_ptr(),
                    1,
                    m as isize,
                    b32.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    c32.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            if beta == 0.0 {
                for (dst, &v) in c.iter_mut().zip(&c32) {
                    *dst = v as f64;
                }
            } else {
                debug_assert_eq!(beta, 1.0);
                for (dst, &v) in c.iter_mut().zip(&c32) {
                    *dst += v as f64;
                }
            }
        }
    }
}

/// c = a·bᵀ + beta·c, with a (m×k), b (n×k), c (m×n), all row-major.
pub fn gemm_a_bt(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
    precision: Precision,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    match precision {
        Precision::Exact => unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                1,
                k as isize,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        },
        Precision::Fast32 => {
            let a32: Vec<f32> = a.iter().map(|&v| v as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&v| v as f32).collect();
            let mut c32 = vec![0.0f32; m * n];
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    a32.as_ptr(),
                    k as isize,
                    1,
                    b32.as_ptr(),
                    1,
                    k as isize,
                    0.0,
                    c32.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            if beta == 0.0 {
                for (dst, &v) in c.iter_mut().zip(&c32) {
                    *dst = v as f64;
                }
            } else {
                debug_assert_eq!(beta, 1.0);
                for (dst, &v) in c.iter_mut().zip(&c32) {
                    *dst += v as f64;
                }
            }
        }
    }
}
