//! Raw forward and backward kernels over [`Tensor`](crate::Tensor) values.
//!
//! These are plain functions with no graph bookkeeping; the autodiff layer
//! pairs each forward kernel with its adjoint.

mod conv;
mod elementwise;
mod fft;
mod resample;
mod shuffle;

pub use conv::{conv2d, conv2d_backward_input, conv2d_backward_weight, conv_output_len};
pub use elementwise::{concat_channels, prelu, prelu_backward, split_channels};
pub use fft::{dft2, dft2_adjoint, dft2_stacked, idft2, ComplexPair};
pub use resample::{bilinear_resize, resize_bilinear, resize_bilinear_backward, Resize};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};

/// Runs `f(index, chunk)` over consecutive `chunk`-sized pieces of `data`.
///
/// With the `parallel` feature the chunks are processed on the rayon pool.
/// Every chunk is written by exactly one closure invocation, so results do
/// not depend on scheduling.
pub(crate) fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}
