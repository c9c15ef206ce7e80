use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::{Error, Real, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Reshape(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    MaxConst(Var, T),
    Softmax(Var, Var),
    Dropout(Var, Vec<T>),
    Lstm {
        x: Var,
        h: Var,
        c: Var,
        w: Var,
        b: Var,
        /// Post-activation gates `[i, f, g, o]`.
        gates: Vec<T>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        kernel: usize,
        pad: usize,
    },
    Mse(Var, Var),
    BceLogits(Var, Var),
    Sum(Var),
    ReduceMax(Var, usize),
    WindowSum(Var, usize, usize),
    Gather(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records tensor operations for reverse-mode differentiation.
///
/// Every primitive checks its operand shapes and fails with
/// [`Error::Shape`] naming the primitive. Dropout draws its masks from a
/// generator seeded at construction, so a tape replays identically for a
/// fixed seed.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    rng: ChaCha8Rng,
    training: bool,
}

/// Gradients of one scalar with respect to every recorded value.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn check(op: &'static str, ok: bool, detail: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::shape(op, detail()))
    }
}

fn window_mass<T: Real>(x: &[T], i: usize, radius: usize) -> T {
    let lo = i.saturating_sub(radius);
    let hi = (i + radius + 1).min(x.len());
    x[lo..hi].iter().copied().sum()
}

/// Argmax whose ties go to the position with the largest window mass.
pub(crate) fn peak_index<T: Real>(x: &[T], radius: usize) -> usize {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut best = None;
    let mut best_mass = T::neg_infinity();
    for (i, &v) in x.iter().enumerate() {
        if v == m {
            let w = window_mass(x, i, radius);
            if w > best_mass {
                best = Some(i);
                best_mass = w;
            }
        }
    }
    best.unwrap_or(0)
}

fn argmax<T: Real>(x: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

impl<T: Real> Tape<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            training: true,
        }
    }

    /// Disables dropout.
    pub fn inference(seed: u64) -> Self {
        Self {
            training: false,
            ..Self::new(seed)
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Copies a value into a new constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        check("matmul", k == k2, || format!("{m}x{k} @ {k2}x{n}"))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == T::zero() {
                    continue;
                }
                for (o, &w) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * w;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_parts(m, n, out), Op::MatMul(a, b), rg))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check(name, sa == sb, || format!("{sa:?} vs {sb:?}"))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_parts(sa.0, sa.1, data), op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `1 x c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let sb = self.shape(b);
        check("add_row", sb == (1, c), || format!("{r}x{c} + {sb:?}"))?;
        let bv = self.value(b).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            for (x, &y) in row.iter_mut().zip(&bv) {
                *x += y;
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_parts(r, c, data), Op::AddRow(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let (r, c) = self.shape(a);
        let data = self.value(a).data().iter().map(|&x| x * s).collect();
        let rg = self.rg(&[a]);
        self.push(Tensor::from_parts(r, c, data), Op::Scale(a, s), rg)
    }

    /// Joins tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        check("concat_cols", !parts.is_empty(), || "no inputs".into())?;
        let r = self.shape(parts[0]).0;
        check(
            "concat_cols",
            parts.iter().all(|&p| self.shape(p).0 == r),
            || "row counts differ".into(),
        )?;
        let c: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::from_parts(r, c, data), Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        check("concat_rows", !parts.is_empty(), || "no inputs".into())?;
        let c = self.shape(parts[0]).1;
        check(
            "concat_rows",
            parts.iter().all(|&p| self.shape(p).1 == c),
            || "column counts differ".into(),
        )?;
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let r = data.len() / c.max(1);
        let rg = self.rg(parts);
        Ok(self.push(Tensor::from_parts(r, c, data), Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        check("slice_cols", start + len <= c, || {
            format!("cols {start}..{} of {c}", start + len)
        })?;
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&self.value(a).row_slice(i)[start..start + len]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_parts(r, len, data), Op::SliceCols(a, start), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        check("slice_rows", start + len <= r, || {
            format!("rows {start}..{} of {r}", start + len)
        })?;
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_parts(len, c, data), Op::SliceRows(a, start), rg))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let n = self.value(a).len();
        check("reshape", rows * cols == n, || format!("{n} values into {rows}x{cols}"))?;
        let data = self.value(a).data().to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_parts(rows, cols, data), Op::Reshape(a), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (r, c) = self.shape(a);
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        let rg = self.rg(&[a]);
        self.push(Tensor::from_parts(r, c, data), op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    /// Natural log; `log(0)` is `-inf` and is expected to be clamped by
    /// [`Tape::max_const`].
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.ln(), Op::Log(a))
    }

    /// `max(a, c)`; the gradient flows only where `a > c`.
    pub fn max_const(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| if x > c { x } else { c }, Op::MaxConst(a, c))
    }

    /// Row-wise `softmax(a + bias)`.
    pub fn softmax(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let sb = self.shape(bias);
        check("softmax", sb == (r, c), || format!("{r}x{c} + bias {sb:?}"))?;
        check("softmax", c > 0, || "empty rows".into())?;
        let mut data: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(bias).data())
            .map(|(&x, &y)| x + y)
            .collect();
        for row in data.chunks_mut(c) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let rg = self.rg(&[a, bias]);
        Ok(self.push(Tensor::from_parts(r, c, data), Op::Softmax(a, bias), rg))
    }

    /// Inverted dropout with drop probability `p`; identity outside training.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return a;
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let n = self.value(a).len();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        let rg = self.rg(&[a]);
        self.push(Tensor::from_parts(r, c, data), Op::Dropout(a, mask), rg)
    }

    /// One LSTM step. `x: 1 x I`, `h, c: 1 x H`, `w: (I + H) x 4H`,
    /// `b: 1 x 4H`, gate order input/forget/cell/output. Returns the
    /// `1 x 2H` row `[h', c']`.
    pub fn lstm_cell(&mut self, x: Var, h: Var, c: Var, w: Var, b: Var) -> Result<Var> {
        let (xr, i_dim) = self.shape(x);
        let (hr, hd) = self.shape(h);
        let ok = xr == 1
            && hr == 1
            && self.shape(c) == (1, hd)
            && self.shape(w) == (i_dim + hd, 4 * hd)
            && self.shape(b) == (1, 4 * hd);
        check("lstm_cell", ok, || {
            format!(
                "x {:?}, h {:?}, c {:?}, w {:?}, b {:?}",
                self.shape(x),
                self.shape(h),
                self.shape(c),
                self.shape(w),
                self.shape(b)
            )
        })?;
        let g4 = 4 * hd;
        let wv = self.value(w).data();
        let mut z = self.value(b).data().to_vec();
        let input = self
            .value(x)
            .data()
            .iter()
            .chain(self.value(h).data())
            .copied();
        for (p, xv) in input.enumerate() {
            if xv == T::zero() {
                continue;
            }
            for (o, &wv) in z.iter_mut().zip(&wv[p * g4..(p + 1) * g4]) {
                *o += xv * wv;
            }
        }
        let mut gates = z;
        for (j, g) in gates.iter_mut().enumerate() {
            *g = if (2 * hd..3 * hd).contains(&j) {
                g.tanh()
            } else {
                sigmoid(*g)
            };
        }
        let cv = self.value(c).data();
        let mut out = vec![T::zero(); 2 * hd];
        for j in 0..hd {
            let (ig, fg, gg, og) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            let cn = fg * cv[j] + ig * gg;
            out[hd + j] = cn;
            out[j] = og * cn.tanh();
        }
        let rg = self.rg(&[x, h, c, w, b]);
        Ok(self.push(
            Tensor::from_parts(1, 2 * hd, out),
            Op::Lstm {
                x,
                h,
                c,
                w,
                b,
                gates,
            },
            rg,
        ))
    }

    /// 1-D convolution over time. `x: T x Cin`, `w: (K * Cin) x Cout` with
    /// row `k * Cin + ci`, `b: 1 x Cout`; zero padding `pad` on both ends.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, kernel: usize, pad: usize) -> Result<Var> {
        let (t_in, cin) = self.shape(x);
        let (wr, cout) = self.shape(w);
        check(
            "conv1d",
            kernel > 0 && wr == kernel * cin && self.shape(b) == (1, cout),
            || format!("x {t_in}x{cin}, w {wr}x{cout}, kernel {kernel}"),
        )?;
        check("conv1d", t_in + 2 * pad + 1 > kernel, || {
            format!("sequence of {t_in} too short for kernel {kernel} with pad {pad}")
        })?;
        let t_out = t_in + 2 * pad + 1 - kernel;
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = Vec::with_capacity(t_out * cout);
        for _ in 0..t_out {
            out.extend_from_slice(bv);
        }
        for t in 0..t_out {
            let row = &mut out[t * cout..(t + 1) * cout];
            for k in 0..kernel {
                let src = t as isize + k as isize - pad as isize;
                if src < 0 || src as usize >= t_in {
                    continue;
                }
                let src = src as usize;
                for ci in 0..cin {
                    let xval = xv[src * cin + ci];
                    if xval == T::zero() {
                        continue;
                    }
                    let wrow = &wv[(k * cin + ci) * cout..(k * cin + ci + 1) * cout];
                    for (o, &wval) in row.iter_mut().zip(wrow) {
                        *o += xval * wval;
                    }
                }
            }
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(
            Tensor::from_parts(t_out, cout, out),
            Op::Conv1d {
                x,
                w,
                b,
                kernel,
                pad,
            },
            rg,
        ))
    }

    /// Mean squared error over all elements, as a `1 x 1` value.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check("mse", sa == sb && sa.0 * sa.1 > 0, || format!("{sa:?} vs {sb:?}"))?;
        let n = T::lit(self.value(a).len() as f64);
        let s: T = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(a, b), rg))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(logits), self.shape(targets));
        check("bce_with_logits", sa == sb && sa.0 * sa.1 > 0, || {
            format!("{sa:?} vs {sb:?}")
        })?;
        let n = T::lit(self.value(logits).len() as f64);
        let s: T = self
            .value(logits)
            .data()
            .iter()
            .zip(self.value(targets).data())
            .map(|(&x, &t)| x.max(T::zero()) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        let rg = self.rg(&[logits, targets]);
        Ok(self.push(Tensor::scalar(s / n), Op::BceLogits(logits, targets), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Largest element as a `1 x 1` value (first index on ties).
    pub fn reduce_max(&mut self, a: Var) -> Result<Var> {
        check("reduce_max", !self.value(a).is_empty(), || "empty input".into())?;
        let i = argmax(self.value(a).data());
        let v = self.value(a).data()[i];
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(v), Op::ReduceMax(a, i), rg))
    }

    /// Sum of the elements within `radius` of the (flattened) argmax.
    /// Among tied maxima the one with the largest window sum is used.
    pub fn window_sum_at_argmax(&mut self, a: Var, radius: usize) -> Result<Var> {
        check("window_sum_at_argmax", !self.value(a).is_empty(), || {
            "empty input".into()
        })?;
        let d = self.value(a).data();
        let i = peak_index(d, radius);
        let s = window_mass(d, i, radius);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::WindowSum(a, i, radius), rg))
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, e) = self.shape(table);
        check("gather", ids.iter().all(|&i| i < v), || {
            format!("id out of range for table of {v} rows")
        })?;
        let mut data = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            data.extend_from_slice(self.value(table).row_slice(i));
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Tensor::from_parts(ids.len(), e, data),
            Op::Gather(table, ids.to_vec()),
            rg,
        ))
    }

    /// Reverse pass from the `1 x 1` value `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        check("backward", self.shape(loss) == (1, 1), || {
            format!("loss must be 1x1, got {:?}", self.shape(loss))
        })?;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.backprop(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        // Accumulates into the gradient slot of `v` when it needs one.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]);
            f(slot);
        };
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = nodes[a.0].value.shape();
                let n = nodes[b.0].value.cols();
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let br = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] += gr.iter().zip(br).map(|(&x, &y)| x * y).sum::<T>();
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == T::zero() {
                                continue;
                            }
                            for (o, &y) in gb[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                *o += x * y;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, &x)| *o += x));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, &x)| *o -= x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((o, &x), &y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += x * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, &x), &y) in gb.iter_mut().zip(g).zip(av) {
                        *o += x * y;
                    }
                });
            }
            Op::AddRow(a, b) => {
                let c = nodes[b.0].value.cols();
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x));
                acc(*b, &mut |gb| {
                    for row in g.chunks(c.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(o, &x)| *o += x);
                    }
                });
            }
            Op::Scale(a, s) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x * *s));
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let c = nodes[p.0].value.cols();
                    acc(p, &mut |gp| {
                        for i in 0..rows {
                            let src = &g[i * total + off..i * total + off + c];
                            gp[i * c..(i + 1) * c]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(o, &x)| *o += x);
                        }
                    });
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = nodes[p.0].value.len();
                    acc(p, &mut |gp| {
                        gp.iter_mut()
                            .zip(&g[off..off + n])
                            .for_each(|(o, &x)| *o += x)
                    });
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, len) = node.value.shape();
                let c = nodes[a.0].value.cols();
                acc(*a, &mut |ga| {
                    for i in 0..rows {
                        ga[i * c + start..i * c + start + len]
                            .iter_mut()
                            .zip(&g[i * len..(i + 1) * len])
                            .for_each(|(o, &x)| *o += x);
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let c = node.value.cols();
                acc(*a, &mut |ga| {
                    ga[start * c..start * c + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(o, &x)| *o += x)
                });
            }
            Op::Reshape(a) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x));
            }
            Op::Sigmoid(a) => acc(*a, &mut |ga| {
                for ((o, &x), &y) in ga.iter_mut().zip(g).zip(out) {
                    *o += x * y * (T::one() - y);
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |ga| {
                for ((o, &x), &y) in ga.iter_mut().zip(g).zip(out) {
                    *o += x * (T::one() - y * y);
                }
            }),
            Op::Relu(a) => {
                let av = val(*a);
                acc(*a, &mut |ga| {
                    for ((o, &x), &v) in ga.iter_mut().zip(g).zip(av) {
                        if v > T::zero() {
                            *o += x;
                        }
                    }
                })
            }
            Op::Log(a) => {
                let av = val(*a);
                acc(*a, &mut |ga| {
                    for ((o, &x), &v) in ga.iter_mut().zip(g).zip(av) {
                        // Clamped branches send exactly zero; keep 0/0 out.
                        if x != T::zero() {
                            *o += x / v;
                        }
                    }
                })
            }
            Op::MaxConst(a, c) => {
                let av = val(*a);
                acc(*a, &mut |ga| {
                    for ((o, &x), &v) in ga.iter_mut().zip(g).zip(av) {
                        if v > *c {
                            *o += x;
                        }
                    }
                })
            }
            Op::Softmax(a, bias) => {
                let c = node.value.cols();
                let mut dz = vec![T::zero(); g.len()];
                for ((dzr, gr), yr) in dz.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c)) {
                    let dot: T = gr.iter().zip(yr).map(|(&x, &y)| x * y).sum();
                    for ((d, &x), &y) in dzr.iter_mut().zip(gr).zip(yr) {
                        *d = y * (x - dot);
                    }
                }
                acc(*a, &mut |ga| ga.iter_mut().zip(&dz).for_each(|(o, &x)| *o += x));
                acc(*bias, &mut |gb| gb.iter_mut().zip(&dz).for_each(|(o, &x)| *o += x));
            }
            Op::Dropout(a, mask) => acc(*a, &mut |ga| {
                for ((o, &x), &m) in ga.iter_mut().zip(g).zip(mask) {
                    *o += x * m;
                }
            }),
            Op::Lstm {
                x,
                h,
                c,
                w,
                b,
                gates,
            } => {
                let hd = nodes[h.0].value.cols();
                let i_dim = nodes[x.0].value.cols();
                let g4 = 4 * hd;
                let cv = val(*c);
                let (dh, dc_out) = g.split_at(hd);
                let mut dz = vec![T::zero(); g4];
                let mut dc_prev = vec![T::zero(); hd];
                for j in 0..hd {
                    let (ig, fg, gg, og) =
                        (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
                    let tc = out[hd + j].tanh();
                    let dct = dc_out[j] + dh[j] * og * (T::one() - tc * tc);
                    let d_o = dh[j] * tc;
                    let d_i = dct * gg;
                    let d_f = dct * cv[j];
                    let d_g = dct * ig;
                    dc_prev[j] = dct * fg;
                    dz[j] = d_i * ig * (T::one() - ig);
                    dz[hd + j] = d_f * fg * (T::one() - fg);
                    dz[2 * hd + j] = d_g * (T::one() - gg * gg);
                    dz[3 * hd + j] = d_o * og * (T::one() - og);
                }
                let wv = val(*w);
                let (xv, hv) = (val(*x), val(*h));
                acc(*w, &mut |gw| {
                    for (p, &inp) in xv.iter().chain(hv).enumerate() {
                        if inp == T::zero() {
                            continue;
                        }
                        for (o, &d) in gw[p * g4..(p + 1) * g4].iter_mut().zip(&dz) {
                            *o += inp * d;
                        }
                    }
                });
                acc(*b, &mut |gb| gb.iter_mut().zip(&dz).for_each(|(o, &d)| *o += d));
                let row_dot = |p: usize| -> T {
                    wv[p * g4..(p + 1) * g4]
                        .iter()
                        .zip(&dz)
                        .map(|(&a, &b)| a * b)
                        .sum()
                };
                acc(*x, &mut |gx| {
                    for (p, o) in gx.iter_mut().enumerate() {
                        *o += row_dot(p);
                    }
                });
                acc(*h, &mut |gh| {
                    for (p, o) in gh.iter_mut().enumerate() {
                        *o += row_dot(i_dim + p);
                    }
                });
                acc(*c, &mut |gc| gc.iter_mut().zip(&dc_prev).for_each(|(o, &d)| *o += d));
            }
            Op::Conv1d {
                x,
                w,
                b,
                kernel,
                pad,
            } => {
                let (t_in, cin) = nodes[x.0].value.shape();
                let cout = node.value.cols();
                let t_out = node.value.rows();
                let (xv, wv) = (val(*x), val(*w));
                let taps = |t: usize, k: usize| -> Option<usize> {
                    let src = t as isize + k as isize - *pad as isize;
                    (src >= 0 && (src as usize) < t_in).then_some(src as usize)
                };
                acc(*b, &mut |gb| {
                    for row in g.chunks(cout) {
                        gb.iter_mut().zip(row).for_each(|(o, &x)| *o += x);
                    }
                });
                acc(*w, &mut |gw| {
                    for t in 0..t_out {
                        let gr = &g[t * cout..(t + 1) * cout];
                        for k in 0..*kernel {
                            let Some(src) = taps(t, k) else { continue };
                            for ci in 0..cin {
                                let xval = xv[src * cin + ci];
                                if xval == T::zero() {
                                    continue;
                                }
                                let wr = &mut gw[(k * cin + ci) * cout..(k * cin + ci + 1) * cout];
                                wr.iter_mut().zip(gr).for_each(|(o, &d)| *o += xval * d);
                            }
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    for t in 0..t_out {
                        let gr = &g[t * cout..(t + 1) * cout];
                        for k in 0..*kernel {
                            let Some(src) = taps(t, k) else { continue };
                            for ci in 0..cin {
                                let wr = &wv[(k * cin + ci) * cout..(k * cin + ci + 1) * cout];
                                gx[src * cin + ci] +=
                                    wr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                            }
                        }
                    }
                });
            }
            Op::Mse(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let k = g[0] * T::lit(2.0) / T::lit(av.len() as f64);
                acc(*a, &mut |ga| {
                    for ((o, &x), &y) in ga.iter_mut().zip(av).zip(bv) {
                        *o += k * (x - y);
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, &x), &y) in gb.iter_mut().zip(av).zip(bv) {
                        *o -= k * (x - y);
                    }
                });
            }
            Op::BceLogits(l, t) => {
                let (lv, tv) = (val(*l), val(*t));
                let k = g[0] / T::lit(lv.len() as f64);
                acc(*l, &mut |gl| {
                    for ((o, &x), &y) in gl.iter_mut().zip(lv).zip(tv) {
                        *o += k * (sigmoid(x) - y);
                    }
                });
                acc(*t, &mut |gt| {
                    for (o, &x) in gt.iter_mut().zip(lv) {
                        *o -= k * x;
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0])),
            Op::ReduceMax(a, i) => acc(*a, &mut |ga| ga[*i] += g[0]),
            Op::WindowSum(a, i, radius) => acc(*a, &mut |ga| {
                let lo = i.saturating_sub(*radius);
                let hi = (i + radius + 1).min(ga.len());
                ga[lo..hi].iter_mut().for_each(|o| *o += g[0]);
            }),
            Op::Gather(table, ids) => {
                let e = node.value.cols();
                acc(*table, &mut |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        gt[id * e..(id + 1) * e]
                            .iter_mut()
                            .zip(&g[r * e..(r + 1) * e])
                            .for_each(|(o, &x)| *o += x);
                    }
                });
            }
        }
    }
}
