//! Order parameters and their flat vector layout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sgd::{GenerativeConfig, InitSpec, MicroState};

/// Symmetric `M × M` matrix stored as its upper triangle, row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                s.set(i, j, f(i, j));
            }
        }
        s
    }

    /// Symmetrises `a` by averaging it with its transpose.
    pub fn from_dmatrix(a: &DMatrix<f64>) -> Self {
        Self::from_fn(a.nrows(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed_len(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.dim - i * (i + 1) / 2 + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] = v;
    }

    /// Upper-triangle entries in storage order.
    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }
}

/// The finite set of overlaps that closes the averaged dynamics.
///
/// * `m = Wᵀ W* / N` and `d = Vᵀ W* / N`, each `M × M*`;
/// * `q = Wᵀ W / N` and `e = Vᵀ V / N`, symmetric;
/// * `r = Wᵀ V / N`, `M × M`, not symmetric in general;
/// * `var`: posterior variances `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub m: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub q: SymMatrix,
    pub e: SymMatrix,
    pub r: DMatrix<f64>,
    pub var: DVector<f64>,
}

/// Shape of a [`MacroState`]: latent dimension `M` and number of features `M*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub m_star: usize,
}

impl Layout {
    pub fn new(m: usize, m_star: usize) -> Self {
        Self { m, m_star }
    }

    /// Length of the flat vector.
    pub fn dim(&self) -> usize {
        let (m, s) = (self.m, self.m_star);
        2 * m * s + 2 * SymMatrix::packed_len(m) + m * m + m
    }

    /// Offset of the posterior-variance block in the flat vector.
    pub fn var_offset(&self) -> usize {
        self.dim() - self.m
    }

    /// Column headers matching [`MacroState::flatten`], 1-based.
    pub fn column_names(&self) -> Vec<String> {
        let (m, s) = (self.m, self.m_star);
        let mut out = Vec::with_capacity(self.dim());
        for name in ["m", "d"] {
            for i in 1..=m {
                for l in 1..=s {
                    out.push(format!("{name}_{i}_{l}"));
                }
            }
        }
        for name in ["Q", "E"] {
            for i in 1..=m {
                for j in i..=m {
                    out.push(format!("{name}_{i}_{j}"));
                }
            }
        }
        for i in 1..=m {
            for j in 1..=m {
                out.push(format!("R_{i}_{j}"));
            }
        }
        for i in 1..=m {
            out.push(format!("D_{i}"));
        }
        out
    }
}

impl MacroState {
    pub fn zeros(layout: Layout) -> Self {
        let (m, s) = (layout.m, layout.m_star);
        Self {
            m: DMatrix::zeros(m, s),
            d: DMatrix::zeros(m, s),
            q: SymMatrix::zeros(m),
            e: SymMatrix::zeros(m),
            r: DMatrix::zeros(m, m),
            var: DVector::zeros(m),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.m.nrows(), self.m.ncols())
    }

    /// The `N → ∞` limit of the order parameters of [`init_micro`](crate::sgd::init_micro).
    pub fn from_init(layout: Layout, init: &InitSpec) -> Self {
        let mut st = Self::zeros(layout);
        let s2 = init.scale * init.scale;
        for i in 0..layout.m {
            st.m[(i, i % layout.m_star)] = init.column_overlap(i, layout.m_star);
            st.var[i] = 1.0;
        }
        for i in 0..layout.m {
            for j in i..layout.m {
                let overlap = st.m.row(i).dot(&st.m.row(j));
                let noise = if i == j { s2 } else { 0.0 };
                st.q.set(i, j, overlap + noise);
                st.e.set(i, j, noise);
            }
        }
        st
    }

    /// Row-major `m`, row-major `d`, packed `Q`, packed `E`, row-major `R`, `D`.
    pub fn flatten(&self) -> DVector<f64> {
        let layout = self.layout();
        let mut out = Vec::with_capacity(layout.dim());
        for mat in [&self.m, &self.d] {
            for i in 0..mat.nrows() {
                out.extend(mat.row(i).iter());
            }
        }
        out.extend_from_slice(self.q.packed());
        out.extend_from_slice(self.e.packed());
        for i in 0..self.r.nrows() {
            out.extend(self.r.row(i).iter());
        }
        out.extend(self.var.iter());
        DVector::from_vec(out)
    }

    pub fn unflatten(layout: Layout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.dim() {
            return Err(Error::Dimension(format!(
                "flat state has {} entries, layout M = {}, M* = {} needs {}",
                x.len(),
                layout.m,
                layout.m_star,
                layout.dim()
            )));
        }
        let (m, s) = (layout.m, layout.m_star);
        let mut k = 0;
        let mut take = |n: usize| {
            let sl = &x[k..k + n];
            k += n;
            sl
        };
        let mm = DMatrix::from_row_slice(m, s, take(m * s));
        let dd = DMatrix::from_row_slice(m, s, take(m * s));
        let q = SymMatrix {
            dim: m,
            data: take(SymMatrix::packed_len(m)).to_vec(),
        };
        let e = SymMatrix {
            dim: m,
            data: take(SymMatrix::packed_len(m)).to_vec(),
        };
        let r = DMatrix::from_row_slice(m, m, take(m * m));
        let var = DVector::from_row_slice(take(m));
        Ok(Self {
            m: mm,
            d: dd,
            q,
            e,
            r,
            var,
        })
    }

    /// Frobenius norm of the difference over all order parameters, with
    /// `Q` and `E` taken as full symmetric matrices.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        let sq = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).norm_squared();
        (sq(&self.m, &other.m)
            + sq(&self.d, &other.d)
            + sq(&self.q.to_dmatrix(), &other.q.to_dmatrix())
            + sq(&self.e.to_dmatrix(), &other.e.to_dmatrix())
            + sq(&self.r, &other.r)
            + (&self.var - &other.var).norm_squared())
        .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Order parameters of a parameter state.
pub fn measure_macro(state: &MicroState, cfg: &GenerativeConfig) -> MacroState {
    let n = state.n() as f64;
    let ws = &cfg.w_star;
    let m = state.w.tr_mul(ws) / n;
    let d = state.v.tr_mul(ws) / n;
    let q = SymMatrix::from_dmatrix(&(state.w.tr_mul(&state.w) / n));
    let e = SymMatrix::from_dmatrix(&(state.v.tr_mul(&state.v) / n));
    let r = state.w.tr_mul(&state.v) / n;
    MacroState {
        m,
        d,
        q,
        e,
        r,
        var: state.d.clone(),
    }
}
