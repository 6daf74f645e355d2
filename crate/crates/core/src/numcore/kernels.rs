//! Forward kernels shared by the tape and by the untaped builders.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Boolean support pattern of a `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::shape(
                "Mask::new",
                format!("{rows}x{cols} mask needs {} bits, got {}", rows * cols, bits.len()),
            ));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                bits.push(f(i, j));
            }
        }
        Self { rows, cols, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn row_has_support(&self, i: usize) -> bool {
        self.bits[i * self.cols..(i + 1) * self.cols].iter().any(|&b| b)
    }
}

pub(crate) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (p, q) = a.dims2()?;
    let (q2, r) = b.dims2()?;
    if q != q2 {
        return Err(Error::shape(
            "matmul",
            format!("left is {p}x{q}, right is {q2}x{r}"),
        ));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = ad[i * q + k];
            if aik == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&bd[k * r..(k + 1) * r]) {
                *o += aik * bv;
            }
        }
    }
    Tensor::matrix(p, r, out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    let d = a.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::matrix(c, r, out)
}

/// Row-wise softmax restricted to the supported entries of `mask`.
///
/// Off-support entries are exactly zero. Every row needs at least one
/// supported entry; zero rows must be added explicitly with [`pad_rows`].
pub fn masked_row_softmax(w: &Tensor, mask: &Mask) -> Result<Tensor> {
    let (rows, cols) = w.dims2()?;
    if rows != mask.rows() || cols != mask.cols() {
        return Err(Error::shape(
            "masked_row_softmax",
            format!("logits {rows}x{cols}, mask {}x{}", mask.rows(), mask.cols()),
        ));
    }
    let wd = w.data();
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = &wd[i * cols..(i + 1) * cols];
        let bits = &mask.bits()[i * cols..(i + 1) * cols];
        let max = row
            .iter()
            .zip(bits)
            .filter(|(_, &b)| b)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Invalid(format!(
                "masked_row_softmax: row {i} has no supported entry"
            )));
        }
        let orow = &mut out[i * cols..(i + 1) * cols];
        let mut total = 0.0;
        for ((o, &v), &b) in orow.iter_mut().zip(row).zip(bits) {
            if b {
                *o = (v - max).exp();
                total += *o;
            }
        }
        for o in orow.iter_mut() {
            *o /= total;
        }
    }
    Tensor::matrix(rows, cols, out)
}

/// Causal 1-D convolution over the step axis of a `(series, step, c_in)`
/// block with a `(k, c_in, c_out)` kernel; the input is left-padded with
/// `k - 1` zeros so the output keeps the input length.
pub fn causal_conv1d(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, t, cin) = x.dims3()?;
    let (k, kcin, cout) = kernel.dims3()?;
    if k == 0 || kcin != cin || bias.len() != cout {
        return Err(Error::shape(
            "causal_conv1d",
            format!(
                "input {:?}, kernel {:?}, bias {:?}",
                x.shape(),
                kernel.shape(),
                bias.shape()
            ),
        ));
    }
    let (xd, kd, bd) = (x.data(), kernel.data(), bias.data());
    let mut out = vec![0.0; n * t * cout];
    for s in 0..n {
        for step in 0..t {
            let orow = &mut out[(s * t + step) * cout..(s * t + step + 1) * cout];
            orow.copy_from_slice(bd);
            for j in 0..k {
                // input index step - (k - 1) + j, skipped when in the zero padding
                let Some(src) = (step + j).checked_sub(k - 1) else {
                    continue;
                };
                let xrow = &xd[(s * t + src) * cin..(s * t + src + 1) * cin];
                for (c, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let krow = &kd[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                    for (o, &kv) in orow.iter_mut().zip(krow) {
                        *o += kv * xv;
                    }
                }
            }
        }
    }
    Tensor::tensor3(n, t, cout, out)
}

/// Applies a `(t_out, t_in)` map along the step axis of every series and
/// channel: `out[n, i, c] = sum_j m[i, j] * x[n, j, c]`.
pub fn time_map(m: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (to, ti) = m.dims2()?;
    let (n, t, c) = x.dims3()?;
    if ti != t {
        return Err(Error::shape(
            "time_map",
            format!("map is {to}x{ti}, input has {t} steps"),
        ));
    }
    let (md, xd) = (m.data(), x.data());
    let mut out = vec![0.0; n * to * c];
    for s in 0..n {
        let xs = &xd[s * t * c..(s + 1) * t * c];
        for i in 0..to {
            let orow = &mut out[(s * to + i) * c..(s * to + i + 1) * c];
            for j in 0..ti {
                let w = md[i * ti + j];
                if w == 0.0 {
                    continue;
                }
                for (o, &xv) in orow.iter_mut().zip(&xs[j * c..(j + 1) * c]) {
                    *o += w * xv;
                }
            }
        }
    }
    Tensor::tensor3(n, to, c, out)
}

/// `out[k] = src[index[k]]`, or zero where the index is `None`.
pub fn gather(src: &Tensor, index: &[Option<usize>], shape: &[usize]) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != index.len() {
        return Err(Error::shape(
            "gather",
            format!("shape {:?} vs {} indices", shape, index.len()),
        ));
    }
    let sd = src.data();
    let mut out = Vec::with_capacity(numel);
    for ix in index {
        match ix {
            Some(i) if *i < sd.len() => out.push(sd[*i]),
            Some(i) => {
                return Err(Error::shape(
                    "gather",
                    format!("index {i} out of range for {} values", sd.len()),
                ))
            }
            None => out.push(0.0),
        }
    }
    Tensor::new(shape.to_vec(), out)
}

/// Appends zero rows to a matrix until it has `total_rows` rows.
pub fn pad_rows(a: &Tensor, total_rows: usize) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if total_rows < r {
        return Err(Error::shape(
            "pad_rows",
            format!("cannot pad {r} rows down to {total_rows}"),
        ));
    }
    let mut data = a.data().to_vec();
    data.resize(total_rows * c, 0.0);
    Tensor::matrix(total_rows, c, data)
}

/// Concatenates rank-3 blocks along the channel axis, in order.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Err(Error::Invalid("concat_channels: no inputs".into()));
    };
    let (n, t, _) = first.dims3()?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (pn, pt, pc) = p.dims3()?;
        if pn != n || pt != t {
            return Err(Error::shape(
                "concat_channels",
                format!("{:?} vs {:?}", first.shape(), p.shape()),
            ));
        }
        widths.push(pc);
    }
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(n * t * total);
    for row in 0..n * t {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[row * w..(row + 1) * w]);
        }
    }
    Tensor::tensor3(n, t, total, out)
}

/// Per-step linear readout: `out[n, t] = b[t] + sum_c w[t, c] * x[n, t, c]`.
pub fn readout(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, t, c) = x.dims3()?;
    let (wt, wc) = w.dims2()?;
    if wt != t || wc != c || b.len() != t {
        return Err(Error::shape(
            "readout",
            format!("input {:?}, weights {:?}, bias {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut out = vec![0.0; n * t];
    for s in 0..n {
        for step in 0..t {
            let xr = &xd[(s * t + step) * c..(s * t + step + 1) * c];
            let wr = &wd[step * c..(step + 1) * c];
            out[s * t + step] = bd[step] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Tensor::matrix(n, t, out)
}
