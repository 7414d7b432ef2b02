"""Vectorized numpy implementations of the convolution and pooling kernels.

Shapes follow the batch-time-channel convention: inputs are
(batch, length, channels), convolution weights are
(kernel, in_channels, out_channels), and pooling is non-overlapping with
any trailing remainder discarded.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid 1-D convolution: out[n,t,o] = b[o] + sum_jc x[n,t+j,c] w[j,c,o]."""
    k = w.shape[0]
    windows = sliding_window_view(x, k, axis=1)          # (B, Lo, Ci, k)
    return np.tensordot(windows, w, axes=((2, 3), (1, 0))) + b


def conv1d_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv1d_forward w.r.t. input, weights, and bias."""
    k = w.shape[0]
    out_len = grad_out.shape[1]
    windows = sliding_window_view(x, k, axis=1)
    grad_b = grad_out.sum(axis=(0, 1))
    grad_w = np.tensordot(windows, grad_out, axes=((0, 1), (0, 1)))  # (Ci, k, Co)
    grad_w = grad_w.transpose(1, 0, 2)
    grad_x = np.zeros_like(x)
    for j in range(k):
        grad_x[:, j:j + out_len, :] += grad_out @ w[j].T
    return grad_x, grad_w, grad_b


def maxpool1d_forward(x: np.ndarray, pool: int) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping max pooling; returns values and block-local argmaxes.

    Ties resolve to the earliest position, matching np.argmax.
    """
    batch, length, channels = x.shape
    out_len = length // pool
    blocks = np.ascontiguousarray(x[:, : out_len * pool, :]).reshape(
        batch, out_len, pool, channels
    )
    idx = blocks.argmax(axis=2)
    out = np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return out, idx.astype(np.int64)


def maxpool1d_backward(
    idx: np.ndarray, grad_out: np.ndarray, length: int, pool: int
) -> np.ndarray:
    """Scatter pooled gradients back to the argmax positions."""
    batch, out_len, channels = grad_out.shape
    blocks = np.zeros((batch, out_len, pool, channels))
    np.put_along_axis(blocks, idx[:, :, None, :], grad_out[:, :, None, :], axis=2)
    grad_x = np.zeros((batch, length, channels))
    grad_x[:, : out_len * pool, :] = blocks.reshape(batch, out_len * pool, channels)
    return grad_x
