use crate::linalg::{Matrix, Vector};

/// Christoffel symbols `Γ^i_{jk}` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Christoffel {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    /// Second-kind symbols from `g⁻¹` and `∂_k g`.
    pub fn from_metric(ginv: &Matrix, dg: &[Matrix]) -> Self {
        let n = ginv.nrows();
        let first = first_kind(dg);
        let mut out = Christoffel::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += ginv[(i, l)] * first[(l * n + j) * n + k];
                    }
                    out.set(i, j, k, acc);
                    out.set(i, k, j, acc);
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    /// `Γ(u, w)^i = Γ^i_{jk} u^j w^k`.
    pub fn contract(&self, u: &Vector, w: &Vector) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                if u[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    acc += self.get(i, j, k) * u[j] * w[k];
                }
            }
            acc
        })
    }

    /// Matrix `M^i_k = Γ^i_{jk} u^j`, so that `M w = Γ(u, w)`.
    pub fn along(&self, u: &Vector) -> Matrix {
        let n = self.n;
        Matrix::from_fn(n, n, |i, k| (0..n).map(|j| self.get(i, j, k) * u[j]).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// Partial derivatives `∂_m Γ^i_{jk}`.
#[derive(Debug, Clone)]
pub struct ChristoffelGradient {
    n: usize,
    data: Vec<f64>,
}

impl ChristoffelGradient {
    pub fn from_metric(
        ginv: &Matrix,
        dg: &[Matrix],
        ddg: &[Vec<Matrix>],
        gamma: &Christoffel,
    ) -> Self {
        let n = ginv.nrows();
        let mut data = vec![0.0; n * n * n * n];
        for m in 0..n {
            // ∂_m [Γ_{ljk}] (first kind)
            let dfirst = first_kind(&ddg[m]);
            let ginv_dg = ginv * &dg[m];
            for i in 0..n {
                for j in 0..n {
                    for k in j..n {
                        let mut acc = 0.0;
                        for l in 0..n {
                            acc += ginv[(i, l)] * dfirst[(l * n + j) * n + k];
                            acc -= ginv_dg[(i, l)] * gamma.get(l, j, k);
                        }
                        data[((m * n + i) * n + j) * n + k] = acc;
                        data[((m * n + i) * n + k) * n + j] = acc;
                    }
                }
            }
        }
        ChristoffelGradient { n, data }
    }

    #[inline]
    pub fn get(&self, m: usize, i: usize, j: usize, k: usize) -> f64 {
        self.data[((m * self.n + i) * self.n + j) * self.n + k]
    }

    /// `(∂_m Γ)(u, w)`.
    pub fn contract(&self, m: usize, u: &Vector, w: &Vector) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    acc += self.get(m, i, j, k) * u[j] * w[k];
                }
            }
            acc
        })
    }
}

/// `Γ_{ljk} = ½(∂_j g_{lk} + ∂_k g_{lj} − ∂_l g_{jk})`, flattened `[l][j][k]`.
fn first_kind(dg: &[Matrix]) -> Vec<f64> {
    let n = dg.len();
    let mut out = vec![0.0; n * n * n];
    for l in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[(l * n + j) * n + k] = 0.5 * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]);
            }
        }
    }
    out
}

/// Riemann tensor with `R(∂_k, ∂_l)∂_j = R^i_{jkl} ∂_i` and
/// `R(X, Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_{[X,Y]}`.
#[derive(Debug, Clone)]
pub struct CurvatureTensor {
    n: usize,
    up: Vec<f64>,
    down: Vec<f64>,
}

impl CurvatureTensor {
    pub fn from_christoffel(g: &Matrix, gamma: &Christoffel, dgamma: &ChristoffelGradient) -> Self {
        let n = gamma.dim();
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
        let mut up = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut r = dgamma.get(k, i, l, j) - dgamma.get(l, i, k, j);
                        for m in 0..n {
                            r += gamma.get(i, k, m) * gamma.get(m, l, j)
                                - gamma.get(i, l, m) * gamma.get(m, k, j);
                        }
                        up[idx(i, j, k, l)] = r;
                    }
                }
            }
        }
        let mut down = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        down[idx(i, j, k, l)] =
                            (0..n).map(|m| g[(i, m)] * up[idx(m, j, k, l)]).sum();
                    }
                }
            }
        }
        CurvatureTensor { n, up, down }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    /// `R^i_{jkl}`.
    pub fn up(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.up[self.idx(i, j, k, l)]
    }

    /// `R_{ijkl} = g_{im} R^m_{jkl}`.
    pub fn down(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.down[self.idx(i, j, k, l)]
    }

    /// `R(a, b)c`.
    pub fn apply(&self, a: &Vector, b: &Vector, c: &Vector) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        acc += self.up(i, j, k, l) * c[j] * a[k] * b[l];
                    }
                }
            }
            acc
        })
    }

    /// `R(a, b, c, d) = g(R(c, d)b, a)`, i.e. `R_{ijkl} a^i b^j c^k d^l`.
    pub fn lowered(&self, a: &Vector, b: &Vector, c: &Vector, d: &Vector) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        acc += self.down(i, j, k, l) * a[i] * b[j] * c[k] * d[l];
                    }
                }
            }
        }
        acc
    }

    fn scale(&self) -> f64 {
        self.down.iter().fold(1.0_f64, |a, v| a.max(v.abs()))
    }

    /// Largest violation of `R_{ijkl} = −R_{jikl} = −R_{ijlk}`, relative to `max(1, max|R|)`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.down(i, j, k, l);
                        worst = worst.max((r + self.down(j, i, k, l)).abs());
                        worst = worst.max((r + self.down(i, j, l, k)).abs());
                    }
                }
            }
        }
        worst / self.scale()
    }

    /// Largest first-Bianchi residual `R^i_{jkl} + R^i_{klj} + R^i_{ljk}`, relative as above.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r =
                            self.down(i, j, k, l) + self.down(i, k, l, j) + self.down(i, l, j, k);
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        worst / self.scale()
    }
}
