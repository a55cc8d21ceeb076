"""Elementwise functions, segment sums and batch normalization with their gradients."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def segment_sum(values: np.ndarray, segments: np.ndarray, n_segments: int) -> np.ndarray:
    """Sum rows of `values` into `n_segments` buckets by `segments`."""
    out = np.zeros((n_segments,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, segments, values)
    return out


@dataclass
class BatchNormCache:
    z_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def bn_forward(z: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               running_mean: np.ndarray, running_var: np.ndarray,
               train: bool) -> Tuple[np.ndarray, BatchNormCache]:
    """Normalize over rows; in train mode the running buffers are updated in place."""
    if train:
        mean = z.mean(axis=0)
        var = z.var(axis=0)
        running_mean *= BN_MOMENTUM
        running_mean += (1.0 - BN_MOMENTUM) * mean
        running_var *= BN_MOMENTUM
        running_var += (1.0 - BN_MOMENTUM) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    z_hat = (z - mean) * inv_std
    return gamma * z_hat + beta, BatchNormCache(z_hat, inv_std, gamma)


def bn_backward(dout: np.ndarray, cache: BatchNormCache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dz, dgamma, dbeta) through train-mode batch statistics."""
    n = dout.shape[0]
    dgamma = (dout * cache.z_hat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dz_hat = dout * cache.gamma
    dz = cache.inv_std / n * (
        n * dz_hat - dz_hat.sum(axis=0) - cache.z_hat * (dz_hat * cache.z_hat).sum(axis=0)
    )
    return dz, dgamma, dbeta
