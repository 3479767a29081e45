"""Minimal dense-network plumbing for the tiny policy.

One shared tanh trunk feeding named linear heads plus a scalar value head.
Parameters live in a flat dict of float64 arrays so finite-difference
checks and serialization stay trivial. Gradients are computed by hand;
`grad_sample` accumulates head-level upstream gradients through the trunk.
"""

from __future__ import annotations

import hashlib
import json
from typing import Mapping, Optional

import numpy as np

Params = dict  # str -> np.ndarray


class DimensionMismatch(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    pass


def init_params(seed: int, feature_dim: int, hidden: int, heads: Mapping[str, int]) -> Params:
    rng = np.random.default_rng(seed)
    params: Params = {
        "w_embed": rng.normal(0.0, 1.0 / np.sqrt(feature_dim), (hidden, feature_dim)),
        "b_embed": np.zeros(hidden),
        "w_value": np.zeros(hidden),
        "b_value": np.zeros(()),
    }
    for name, classes in heads.items():
        params[f"w_{name}"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), (classes, hidden))
        params[f"b_{name}"] = np.zeros(classes)
    return params


def head_names(params: Params) -> list[str]:
    reserved = {"w_embed", "w_value"}
    return sorted(
        k[2:] for k in params if k.startswith("w_") and k not in reserved
    )


def param_count(params: Params) -> int:
    return sum(int(np.size(v)) for v in params.values())


def hidden_forward(params: Params, x: np.ndarray) -> np.ndarray:
    if x.shape != (params["w_embed"].shape[1],):
        raise DimensionMismatch(
            f"feature vector of dim {x.shape} does not match "
            f"embedding dim {params['w_embed'].shape[1]}"
        )
    return np.tanh(params["w_embed"] @ x + params["b_embed"])


def head_logits(params: Params, name: str, h: np.ndarray) -> np.ndarray:
    return params[f"w_{name}"] @ h + params[f"b_{name}"]


def value_forward(params: Params, h: np.ndarray) -> float:
    return float(params["w_value"] @ h + params["b_value"])


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def masked_logits(z: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    """mask: boolean array of allowed classes; disallowed logits become -inf."""
    if mask is None:
        return z
    if mask.shape != z.shape:
        raise DimensionMismatch("mask shape does not match logits")
    out = np.where(mask, z, -np.inf)
    if not mask.any():
        raise ValueError("mask excludes every class")
    return out


def zero_grads(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def grad_sample(
    params: Params,
    x: np.ndarray,
    h: np.ndarray,
    head_dz: list[tuple[str, np.ndarray]],
    dvalue: float,
    grads: Params,
):
    """Accumulate dLoss/dparams for one sample into `grads`.

    head_dz holds upstream gradients w.r.t. each used head's logits; dvalue
    is the upstream gradient w.r.t. the value output. Masked-out classes
    must already carry zero upstream gradient.
    """
    dh = np.zeros_like(h)
    for name, dz in head_dz:
        grads[f"w_{name}"] += np.outer(dz, h)
        grads[f"b_{name}"] += dz
        dh += params[f"w_{name}"].T @ dz
    if dvalue:
        grads["w_value"] += dvalue * h
        grads["b_value"] += dvalue
        dh += dvalue * params["w_value"]
    dpre = dh * (1.0 - h * h)
    grads["w_embed"] += np.outer(dpre, x)
    grads["b_embed"] += dpre


class Adam:
    """Standard Adam over a params dict; state keyed by parameter name."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    def step(self, params: Params, grads: Params) -> Params:
        self.t += 1
        out: Params = {}
        for k, p in params.items():
            g = grads[k]
            m = self.m.get(k)
            if m is None:
                m = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            v = self.v[k]
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[k] = m
            self.v[k] = v
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            out[k] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


# --- flatten helpers (finite-difference checks, checkpoints) -------------------


def flatten(params: Params) -> tuple[np.ndarray, list[tuple[str, tuple]]]:
    spec = [(k, params[k].shape) for k in sorted(params)]
    flat = np.concatenate([params[k].ravel() for k, _ in spec]) if spec else np.empty(0)
    return flat, spec


def unflatten(flat: np.ndarray, spec: list[tuple[str, tuple]]) -> Params:
    out: Params = {}
    offset = 0
    for k, shape in spec:
        size = int(np.prod(shape)) if shape else 1
        out[k] = flat[offset : offset + size].reshape(shape).copy()
        offset += size
    return out


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def save_params(path: str, params: Params, config: Mapping):
    meta = dict(config)
    meta["config_hash"] = config_hash(config)
    np.savez(path, __meta__=json.dumps(meta, sort_keys=True), **params)


def load_params(path: str, expect_config: Optional[Mapping] = None) -> tuple[Params, dict]:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    params = {k: data[k] for k in data.files if k != "__meta__"}
    if expect_config is not None and meta.get("config_hash") != config_hash(expect_config):
        raise ValueError("checkpoint config hash does not match the requested config")
    return params, meta
