//! Integer-order Bessel functions `J_n(x)` by Miller's backward recurrence.
//!
//! `J_{n-1}(x) = (2n / x) J_n(x) - J_{n+1}(x)` is run downward from an order
//! well above both `n` and `|x|`, where the true values are negligible, and
//! the sequence is normalized with `J_0 + 2 sum_{m>=1} J_{2m} = 1`. The
//! downward direction is the stable one for all orders, so every returned
//! value carries a small relative error, including deep in the tail.

/// Values `J_0(x) ..= J_{n_max}(x)`.
pub fn bessel_j_sequence(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = n_max.max(ax.ceil() as usize);
    // Starting order: far enough above max(n_max, |x|) that the seed error
    // has decayed below double precision by the time order n_max is reached.
    let mut start = top + 30 + (60.0 * top as f64).sqrt() as usize;
    start += start % 2;

    const BIG: f64 = 1e250;
    let two_over_x = 2.0 / ax;
    let mut j_next = 0.0; // J_{k+1}
    let mut j_cur = 1e-300; // J_k, arbitrary seed
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let j_prev = k as f64 * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        let order = k - 1;
        if order <= n_max {
            out[order] = j_cur;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * j_cur;
        }
        if j_cur.abs() > BIG {
            j_cur /= BIG;
            j_next /= BIG;
            norm /= BIG;
            for v in out.iter_mut().skip(order) {
                *v /= BIG;
            }
        }
    }
    norm += j_cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_n(x)` for any integer order.
pub fn bessel_j(n: i64, x: f64) -> f64 {
    let m = n.unsigned_abs() as usize;
    let v = bessel_j_sequence(x, m)[m];
    if n < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Half-width beyond which `|J_m(k)|` is negligible (below about 1e-14):
/// `ceil(|k| + 8 |k|^(1/3) + 10)`.
pub fn kernel_half_width(k: f64) -> usize {
    let k = k.abs();
    (k + 8.0 * k.cbrt() + 10.0).ceil() as usize
}

/// `J_m(k)` for `m = -w ..= w`.
#[derive(Clone, Debug, PartialEq)]
pub struct BesselKernel {
    k: f64,
    half_width: usize,
    values: Vec<f64>,
}

impl BesselKernel {
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Values ordered from `m = -w` to `m = w`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `J_m(k)`, zero outside the stored window.
    pub fn get(&self, m: i64) -> f64 {
        let idx = m + self.half_width as i64;
        if idx < 0 {
            return 0.0;
        }
        self.values.get(idx as usize).copied().unwrap_or(0.0)
    }
}

/// Kernel for the kick convolution. Negative orders come from
/// `J_{-m} = (-1)^m J_m`, applied by sign flip so the symmetry is exact.
pub fn bessel_kernel(k: f64, half_width: usize) -> BesselKernel {
    let positive = bessel_j_sequence(k, half_width);
    let w = half_width;
    let mut values = vec![0.0; 2 * w + 1];
    for (m, &v) in positive.iter().enumerate() {
        values[w + m] = v;
        values[w - m] = if m % 2 == 1 { -v } else { v };
    }
    BesselKernel {
        k,
        half_width,
        values,
    }
}
