use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{functions::sigmoid, uniform_init, ParamId, ParameterStore, Scalar};
use crate::error::{Error, Result};

/// Batched recurrent state; one row per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Array2<T>,
    pub c: Array2<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros((batch, hidden)),
            c: Array2::zeros((batch, hidden)),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.nrows()
    }

    /// Zeroes the state of one row (episode start).
    pub fn reset_row(&mut self, row: usize) {
        self.h.row_mut(row).fill(T::zero());
        self.c.row_mut(row).fill(T::zero());
    }
}

/// LSTM cell with gate blocks laid out as `[input, forget, candidate, output]`
/// along the columns of the `4H`-wide parameter matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    input: Array2<T>,
    h_prev: Array2<T>,
    c_prev: Array2<T>,
    /// Post-activation gates, `[B, 4H]`.
    gates: Array2<T>,
    tanh_c: Array2<T>,
}

impl Lstm {
    /// Registers `{name}.w_input`, `{name}.w_hidden` and `{name}.bias`; the
    /// forget-gate bias starts at +1, every other bias at zero.
    pub fn register<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_input = store.register(
            format!("{name}.w_input"),
            uniform_init(in_dim, 4 * hidden, in_dim, rng),
        )?;
        let w_hidden = store.register(
            format!("{name}.w_hidden"),
            uniform_init(hidden, 4 * hidden, hidden, rng),
        )?;
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(s![.., hidden..2 * hidden]).fill(T::one());
        let bias = store.register(format!("{name}.bias"), b)?;
        Ok(Self {
            w_input,
            w_hidden,
            bias,
            in_dim,
            hidden,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        input: ArrayView2<T>,
        prev: &LstmState<T>,
    ) -> Result<(LstmState<T>, LstmCache<T>)> {
        let hsz = self.hidden;
        let batch = input.nrows();
        if input.ncols() != self.in_dim {
            return Err(Error::shape("lstm input", &[batch, self.in_dim], input.shape()));
        }
        if prev.h.dim() != (batch, hsz) || prev.c.dim() != (batch, hsz) {
            return Err(Error::shape("lstm state", &[batch, hsz], prev.h.shape()));
        }
        let mut gates = input.dot(store.value(self.w_input));
        general_mat_mul(
            T::one(),
            &prev.h,
            store.value(self.w_hidden),
            T::one(),
            &mut gates,
        );
        gates += store.value(self.bias);

        let mut h = Array2::zeros((batch, hsz));
        let mut c = Array2::zeros((batch, hsz));
        let mut tanh_c = Array2::zeros((batch, hsz));
        for r in 0..batch {
            let mut g = gates.row_mut(r);
            let c_prev = prev.c.row(r);
            for k in 0..hsz {
                let i = sigmoid(g[k]);
                let f = sigmoid(g[hsz + k]);
                let cand = g[2 * hsz + k].tanh();
                let o = sigmoid(g[3 * hsz + k]);
                g[k] = i;
                g[hsz + k] = f;
                g[2 * hsz + k] = cand;
                g[3 * hsz + k] = o;
                let cn = f * c_prev[k] + i * cand;
                let tc = cn.tanh();
                c[[r, k]] = cn;
                tanh_c[[r, k]] = tc;
                h[[r, k]] = o * tc;
            }
        }
        let cache = LstmCache {
            input: input.to_owned(),
            h_prev: prev.h.clone(),
            c_prev: prev.c.clone(),
            gates,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    /// Backward through one cell step. `grad_h` and `grad_c` are the loss
    /// gradients with respect to this step's outputs. Returns the gradients
    /// with respect to the input and the previous state.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParameterStore<T>,
        cache: &LstmCache<T>,
        grad_h: ArrayView2<T>,
        grad_c: ArrayView2<T>,
    ) -> (Array2<T>, LstmState<T>) {
        let hsz = self.hidden;
        let batch = cache.input.nrows();
        let mut d_gates = Array2::zeros((batch, 4 * hsz));
        let mut dc_prev = Array2::zeros((batch, hsz));
        for r in 0..batch {
            let g = cache.gates.row(r);
            let mut dg = d_gates.row_mut(r);
            for k in 0..hsz {
                let i = g[k];
                let f = g[hsz + k];
                let cand = g[2 * hsz + k];
                let o = g[3 * hsz + k];
                let tc = cache.tanh_c[[r, k]];
                let dh = grad_h[[r, k]];
                let dc = grad_c[[r, k]] + dh * o * (T::one() - tc * tc);
                dg[k] = dc * cand * i * (T::one() - i);
                dg[hsz + k] = dc * cache.c_prev[[r, k]] * f * (T::one() - f);
                dg[2 * hsz + k] = dc * i * (T::one() - cand * cand);
                dg[3 * hsz + k] = dh * tc * o * (T::one() - o);
                dc_prev[[r, k]] = dc * f;
            }
        }
        let (values, grads) = store.split_mut();
        general_mat_mul(
            T::one(),
            &cache.input.t(),
            &d_gates,
            T::one(),
            &mut grads[self.w_input.index()],
        );
        general_mat_mul(
            T::one(),
            &cache.h_prev.t(),
            &d_gates,
            T::one(),
            &mut grads[self.w_hidden.index()],
        );
        grads[self.bias.index()] += &d_gates.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_input = d_gates.dot(&values[self.w_input.index()].t());
        let dh_prev = d_gates.dot(&values[self.w_hidden.index()].t());
        (
            d_input,
            LstmState {
                h: dh_prev,
                c: dc_prev,
            },
        )
    }
}
