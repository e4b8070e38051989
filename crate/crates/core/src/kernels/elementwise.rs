use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Parametric ReLU with one slope per channel: `x` if `x ≥ 0`, else `slope_c·x`.
pub fn prelu<T: Real>(x: &Tensor<T>, slopes: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if slopes.numel() != s.c {
        return Err(Error::contract(
            "prelu",
            format!("{} slopes for {} channels", slopes.numel(), s.c),
        ));
    }
    let p = s.plane();
    let sd = slopes.data();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if v >= T::zero() { v } else { sd[(i / p) % s.c] * v })
        .collect();
    Ok(Tensor::from_parts(s, data))
}

/// Gradients of [`prelu`] with respect to the input and the slopes.
pub fn prelu_backward<T: Real>(gy: &Tensor<T>, x: &Tensor<T>, slopes: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let s = x.shape();
    let p = s.plane();
    let sd = slopes.data();
    let mut gs = Tensor::zeros(slopes.shape());
    let mut gx = Vec::with_capacity(s.numel());
    {
        let gsd = gs.data_mut();
        for (i, (&g, &v)) in gy.data().iter().zip(x.data()).enumerate() {
            let c = (i / p) % s.c;
            if v >= T::zero() {
                gx.push(g);
            } else {
                gx.push(g * sd[c]);
                gsd[c] = gsd[c] + g * v;
            }
        }
    }
    (Tensor::from_parts(s, gx), gs)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            lhs: sa,
            rhs: sb,
        });
    }
    let out = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
    let mut data = Vec::with_capacity(out.numel());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * la..(n + 1) * la]);
        data.extend_from_slice(&b.data()[n * lb..(n + 1) * lb]);
    }
    Ok(Tensor::from_parts(out, data))
}

/// Inverse of [`concat_channels`]: the first `first` channels and the rest.
pub fn split_channels<T: Real>(t: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = t.shape().c;
    Ok((t.slice_channels(0, first)?, t.slice_channels(first, c - first)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn prelu_examples() {
        let slopes = Tensor::new([1, 1, 1, 1], vec![0.25f64]).unwrap();
        let x = Tensor::new([1, 1, 1, 2], vec![2.0, -2.0]).unwrap();
        assert_eq!(prelu(&x, &slopes).unwrap().data(), &[2.0, -0.5]);
        let ones = Tensor::full([1, 3, 1, 1], 1.0f64);
        let x = Tensor::from_fn([2, 3, 2, 2], |n, c, y, xx| (n + c) as f64 - (y * 2 + xx) as f64);
        assert_eq!(prelu(&x, &ones).unwrap(), x);
        assert!(prelu(&x, &slopes).is_err());
    }

    #[test]
    fn concat_order_and_split() {
        let a = Tensor::from_fn([1, 54, 8, 8], |_, c, y, _| (c * 8 + y) as f32);
        let b = Tensor::from_fn([1, 54, 8, 8], |_, c, _, x| -((c * 8 + x) as f32) - 1.0);
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), Shape::new(1, 108, 8, 8));
        let (a2, b2) = split_channels(&ab, 54).unwrap();
        assert_eq!((a2, b2), (a.clone(), b.clone()));
        assert_ne!(ab, concat_channels(&b, &a).unwrap());
        let c = Tensor::<f32>::zeros([1, 2, 4, 8]);
        assert!(concat_channels(&a, &c).is_err());
    }
}
