//! Small dense helpers over row-major slices. Dimensions here are tiny (d <= 4
//! in practice) so everything is plain loops over caller-owned buffers.

/// Compensated running sum (Neumaier's scheme with a branch-free error term).
/// Summation order is the call order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        // Branch-free two-sum: `e` is the exact rounding error of `sum + x`.
        let t = self.sum + x;
        let z = t - self.sum;
        let e = (self.sum - (t - z)) + (x - z);
        self.carry += e;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() == 1 {
        return a[0] * b[0];
    }
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `out = m * v` for a `d x d` row-major `m`.
#[inline]
pub fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    if d == 1 {
        out[0] = m[0] * v[0];
        return;
    }
    for a in 0..d {
        let row = &m[a * d..(a + 1) * d];
        out[a] = dot(row, v);
    }
}

/// `out = m^T * v` for a `d x d` row-major `m`.
#[inline]
pub fn mat_t_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for c in 0..d {
        let mut s = 0.0;
        for a in 0..d {
            s += m[a * d + c] * v[a];
        }
        out[c] = s;
    }
}

/// `sum_{a,c} a[a][c] * b[a][c]`, i.e. `Trace(A B^T)`.
#[inline]
pub fn frobenius(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}

/// `Trace(H S S^T)` for `d x d` matrices, computed as `sum_{a,b,c} H[a][b] S[b][c] S[a][c]`.
#[inline]
pub fn trace_h_sst(h: &[f64], s: &[f64], d: usize) -> f64 {
    if d == 1 {
        return if h[0] == 0.0 { 0.0 } else { h[0] * (s[0] * s[0]) };
    }
    let mut total = 0.0;
    for a in 0..d {
        for b in 0..d {
            let hab = h[a * d + b];
            if hab == 0.0 {
                continue;
            }
            let mut ssab = 0.0;
            for c in 0..d {
                ssab += s[b * d + c] * s[a * d + c];
            }
            total += hab * ssab;
        }
    }
    total
}

/// `Trace(M G S^T) = sum_{b,a,c} M[b][a] G[a][c] S[b][c]`.
#[inline]
pub fn trace_m_g_st(m: &[f64], g: &[f64], s: &[f64], d: usize) -> f64 {
    let mut total = 0.0;
    for b in 0..d {
        for a in 0..d {
            let mba = m[b * d + a];
            if mba == 0.0 {
                continue;
            }
            let mut gs = 0.0;
            for c in 0..d {
                gs += g[a * d + c] * s[b * d + c];
            }
            total += mba * gs;
        }
    }
    total
}

/// Zero a short buffer without a library call for the scalar case.
#[inline]
pub fn zero(buf: &mut [f64]) {
    if buf.len() == 1 {
        buf[0] = 0.0;
    } else {
        buf.fill(0.0);
    }
}

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for a in 0..d {
        m[a * d + a] = 1.0;
    }
    m
}

pub fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}
