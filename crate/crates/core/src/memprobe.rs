//! Accounting for retained activation buffers.
//!
//! Layer caches wrap their tensors in [`ActBuf`], which bumps a thread-local
//! live counter on creation and drops it on release. Tests read the peak to
//! verify that reconstruct-as-you-go backprop keeps a depth-independent
//! number of activation buffers alive, while cached backprop does not.

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::cell::Cell;

thread_local! {
    static LIVE: Cell<usize> = const { Cell::new(0) };
    static PEAK: Cell<usize> = const { Cell::new(0) };
}

/// Reset the counters (start of a measured region).
pub fn reset() {
    LIVE.with(|l| l.set(0));
    PEAK.with(|p| p.set(0));
}

/// Number of activation buffers currently alive.
pub fn live() -> usize {
    LIVE.with(|l| l.get())
}

/// High-water mark since the last [`reset`].
pub fn peak() -> usize {
    PEAK.with(|p| p.get())
}

fn on_alloc() {
    LIVE.with(|l| {
        let n = l.get() + 1;
        l.set(n);
        PEAK.with(|p| {
            if n > p.get() {
                p.set(n);
            }
        });
    });
}

fn on_free() {
    LIVE.with(|l| l.set(l.get().saturating_sub(1)));
}

/// A tensor retained for a later backward pass. Counted while alive.
#[derive(Debug)]
pub struct ActBuf<S: Scalar> {
    tensor: Option<Tensor<S>>,
}

impl<S: Scalar> ActBuf<S> {
    pub fn new(tensor: Tensor<S>) -> Self {
        on_alloc();
        ActBuf { tensor: Some(tensor) }
    }

    pub fn get(&self) -> &Tensor<S> {
        self.tensor.as_ref().expect("ActBuf already consumed")
    }

    pub fn into_inner(mut self) -> Tensor<S> {
        self.tensor.take().expect("ActBuf already consumed")
        // Drop runs next and decrements the live count.
    }
}

impl<S: Scalar> Drop for ActBuf<S> {
    fn drop(&mut self) {
        on_free();
    }
}
