//! Limited-memory BFGS pieces shared by the mesh solver and the template
//! ring equilibration: the two-loop recursion and a small self-contained
//! minimizer with Armijo backtracking.

/// Curvature pair `(s, y) = (x_{k+1} - x_k, g_{k+1} - g_k)`.
#[derive(Debug, Clone)]
pub(crate) struct CurvaturePair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Default)]
pub(crate) struct LbfgsMemory {
    pairs: Vec<CurvaturePair>,
    capacity: usize,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            pairs: Vec::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let ss = dot(&s, &s).sqrt();
        let yy = dot(&y, &y).sqrt();
        // Skip pairs with no usable curvature.
        if !(sy > 1e-12 * ss * yy) || !sy.is_finite() {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.remove(0);
        }
        self.pairs.push(CurvaturePair { s, y, rho: 1.0 / sy });
    }

    /// Two-loop recursion: returns the descent direction `-H g`.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        self.direction_scaled(g, None)
    }

    /// Two-loop recursion seeded with a diagonal metric `H0 = gamma *
    /// diag(h0)`; `None` uses the identity. The diagonal carries problem
    /// scaling (inverse vertex mass), the scalar `gamma` the curvature
    /// magnitude learned from the latest pair.
    pub fn direction_scaled(&self, g: &[f64], h0: Option<&[f64]>) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let mut alphas = vec![0.0; self.pairs.len()];
        for (i, p) in self.pairs.iter().enumerate().rev() {
            let a = p.rho * dot(&p.s, &q);
            alphas[i] = a;
            axpy(-a, &p.y, &mut q);
        }
        let gamma = match self.pairs.last() {
            Some(p) => {
                let denom = match h0 {
                    Some(d) => p.y.iter().zip(d.iter()).map(|(y, h)| y * y * h).sum::<f64>(),
                    None => dot(&p.y, &p.y),
                };
                dot(&p.s, &p.y) / denom
            }
            None => 1.0,
        };
        match h0 {
            Some(d) => {
                for (v, h) in q.iter_mut().zip(d.iter()) {
                    *v *= gamma * h;
                }
            }
            None => {
                for v in q.iter_mut() {
                    *v *= gamma;
                }
            }
        }
        for (i, p) in self.pairs.iter().enumerate() {
            let b = p.rho * dot(&p.y, &q);
            axpy(alphas[i] - b, &p.s, &mut q);
        }
        for v in q.iter_mut() {
            *v = -*v;
        }
        q
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MinimizeOptions {
    pub max_iters: usize,
    pub grad_inf_tol: f64,
    pub memory: usize,
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_inf_tol: 1e-13,
            memory: 8,
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

/// Small dense minimizer for auxiliary problems (template equilibration).
/// The objective may return non-finite values outside its domain; the line
/// search backtracks through them.
pub(crate) fn minimize(
    x0: Vec<f64>,
    mut f_and_g: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    opts: MinimizeOptions,
) -> Vec<f64> {
    let mut x = x0;
    let (mut f, mut g) = f_and_g(&x);
    assert!(f.is_finite(), "objective must be finite at the start");
    let mut mem = LbfgsMemory::new(opts.memory);

    for _ in 0..opts.max_iters {
        let ginf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if ginf <= opts.grad_inf_tol {
            break;
        }
        let mut d = mem.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            mem.clear();
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            let mut xt = x.clone();
            axpy(alpha, &d, &mut xt);
            let (ft, gt) = f_and_g(&xt);
            if ft.is_finite() && ft <= f + opts.c1 * alpha * slope {
                let s: Vec<f64> = xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gt.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
                mem.push(s, y);
                x = xt;
                f = ft;
                g = gt;
                accepted = true;
                break;
            }
            alpha *= opts.shrink;
        }
        if !accepted {
            break;
        }
    }
    x
}
