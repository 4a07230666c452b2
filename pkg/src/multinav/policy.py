"""Actor and critic networks with hand-written reverse mode.

Both networks share one trunk shape: two strided 1-D convolutions over
the three stacked scans, a fully connected layer, concatenation with the
goal and velocity inputs, a second fully connected layer and a linear
head.  The actor squashes its two outputs into the velocity bounds
(logistic for v, tanh for w) and owns a free ``log_std`` vector.

Parameters are plain ``dict[str, ndarray]``; computation follows the
parameters' dtype (float32 for training, float64 for gradient checks).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from numpy.lib.stride_tricks import as_strided

from .mdp import N_FRAMES, Observation

LOG_STD_INIT = -0.5
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

Params = dict


@dataclass(frozen=True)
class NetConfig:
    n_beams: int = 512
    conv1: tuple[int, int, int] = (32, 5, 2)   # filters, kernel, stride
    conv2: tuple[int, int, int] = (32, 3, 2)
    fc1: int = 256
    fc2: int = 128
    n_actions: int = 2

    def __post_init__(self):
        sizes = (*self.conv1, *self.conv2, self.fc1, self.fc2, self.n_beams)
        if any(int(s) <= 0 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if self.conv2_len < 1:
            raise ValueError(f"n_beams={self.n_beams} too small for the convolution stack")

    @property
    def conv1_len(self) -> int:
        _, k, s = self.conv1
        return (self.n_beams - k) // s + 1

    @property
    def conv2_len(self) -> int:
        _, k, s = self.conv2
        return (self.conv1_len - k) // s + 1 if self.conv1_len >= k else 0

    @property
    def flat_len(self) -> int:
        return self.conv2_len * self.conv2[0]


def _uniform(rng, fan_in, shape, gain=1.0):
    bound = gain / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_trunk(cfg: NetConfig, rng, n_out: int, out_gain: float, dtype) -> Params:
    f1, k1, _ = cfg.conv1
    f2, k2, _ = cfg.conv2
    extra = 4  # goal (2) + velocity (2)
    layers = {
        "conv1": ((f1, k1, N_FRAMES), N_FRAMES * k1, 1.0),
        "conv2": ((f2, k2, f1), f1 * k2, 1.0),
        "fc1": ((cfg.flat_len, cfg.fc1), cfg.flat_len, 1.0),
        "fc2": ((cfg.fc1 + extra, cfg.fc2), cfg.fc1 + extra, 1.0),
        "out": ((cfg.fc2, n_out), cfg.fc2, out_gain),
    }
    params = {}
    for name, (shape, fan_in, gain) in layers.items():
        params[f"{name}.w"] = _uniform(rng, fan_in, shape, gain).astype(dtype)
        n_bias = shape[0] if name.startswith("conv") else shape[1]
        params[f"{name}.b"] = _uniform(rng, fan_in, (n_bias,), gain).astype(dtype)
    return params


def init_params(cfg: NetConfig, seed: int, dtype=np.float32) -> tuple[Params, Params]:
    """Fan-in scaled uniform initialization of actor and critic."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6E6574]))
    policy = _init_trunk(cfg, rng, cfg.n_actions, 0.1, dtype)
    policy["log_std"] = np.full(cfg.n_actions, LOG_STD_INIT, dtype=dtype)
    value = _init_trunk(cfg, rng, 1, 1.0, dtype)
    return policy, value


def _windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Strided view (N, L_out, kernel * C) over channels-last input (N, L, C)."""
    n, length, c = x.shape
    n_out = (length - kernel) // stride + 1
    s0, s1, s2 = x.strides
    view = as_strided(x, (n, n_out, kernel, c), (s0, stride * s1, s1, s2), writeable=False)
    return view.reshape(n * n_out, kernel * c)


def _check_obs(cfg_beams: int, obs: Observation):
    if obs.scan_stack.ndim != 3 or obs.scan_stack.shape[1:] != (N_FRAMES, cfg_beams):
        raise ValueError(
            f"scan stack shape {obs.scan_stack.shape[1:]} does not match network "
            f"input ({N_FRAMES}, {cfg_beams})")
    n = obs.scan_stack.shape[0]
    if obs.goal_polar.shape != (n, 2) or obs.velocity.shape != (n, 2):
        raise ValueError("goal/velocity inputs must have shape (N, 2)")


def _as_batch(obs: Observation) -> tuple[Observation, bool]:
    if obs.scan_stack.ndim == 2:
        return Observation(obs.scan_stack[None], obs.goal_polar[None], obs.velocity[None]), True
    return obs, False


def _trunk_forward(params: Params, cfg: NetConfig, obs: Observation, cache: Optional[dict]):
    dtype = params["fc1.w"].dtype
    _check_obs(cfg.n_beams, obs)
    x = np.ascontiguousarray(np.asarray(obs.scan_stack, dtype=dtype).transpose(0, 2, 1))
    n = x.shape[0]
    f1, k1, s1 = cfg.conv1
    f2, k2, s2 = cfg.conv2
    # Convolutions run channels-last so each window is one contiguous row.
    p1 = _windows(x, k1, s1)                                  # (N*L1, k1*C)
    z1 = p1 @ params["conv1.w"].reshape(f1, -1).T + params["conv1.b"]
    h1 = np.maximum(z1, 0).reshape(n, cfg.conv1_len, f1)
    p2 = _windows(h1, k2, s2)                                 # (N*L2, k2*f1)
    z2 = p2 @ params["conv2.w"].reshape(f2, -1).T + params["conv2.b"]
    h2 = np.maximum(z2, 0).reshape(n, -1)                     # (N, L2*f2)

    z3 = h2 @ params["fc1.w"] + params["fc1.b"]
    h3 = np.maximum(z3, 0)
    extra = np.concatenate([obs.goal_polar, obs.velocity], axis=1).astype(dtype)
    h3x = np.concatenate([h3, extra], axis=1)
    z4 = h3x @ params["fc2.w"] + params["fc2.b"]
    h4 = np.maximum(z4, 0)
    out = h4 @ params["out.w"] + params["out.b"]
    if cache is not None:
        cache.update(n=n, p1=p1, z1=z1, p2=p2, z2=z2,
                     h2=h2, z3=z3, h3x=h3x, z4=z4, h4=h4)
    return out


def _trunk_backward(params: Params, cfg: NetConfig, cache: dict, g_out: np.ndarray) -> Params:
    f1, _, _ = cfg.conv1
    f2, _, _ = cfg.conv2
    n = cache["n"]
    grads = {}
    grads["out.w"] = cache["h4"].T @ g_out
    grads["out.b"] = g_out.sum(axis=0)
    g4 = (g_out @ params["out.w"].T) * (cache["z4"] > 0)
    grads["fc2.w"] = cache["h3x"].T @ g4
    grads["fc2.b"] = g4.sum(axis=0)
    g3 = (g4 @ params["fc2.w"].T)[:, :cfg.fc1] * (cache["z3"] > 0)
    grads["fc1.w"] = cache["h2"].T @ g3
    grads["fc1.b"] = g3.sum(axis=0)
    g2 = (g3 @ params["fc1.w"].T).reshape(-1, f2) * (cache["z2"] > 0)   # (N*L2, f2)
    grads["conv2.w"] = (g2.T @ cache["p2"]).reshape(params["conv2.w"].shape)
    grads["conv2.b"] = g2.sum(axis=0)
    gp2 = g2 @ params["conv2.w"].reshape(f2, -1)                         # (N*L2, k2*f1)
    gp2 = gp2.reshape(n, cfg.conv2_len, -1)
    gh1 = np.zeros((n, cfg.conv1_len, f1), dtype=g_out.dtype)
    _, k2, stride = cfg.conv2
    last = stride * (cfg.conv2_len - 1) + 1
    for k in range(k2):
        gh1[:, k:k + last:stride] += gp2[:, :, k * f1:(k + 1) * f1]
    g1 = gh1.reshape(-1, f1) * (cache["z1"] > 0)
    grads["conv1.w"] = (g1.T @ cache["p1"]).reshape(params["conv1.w"].shape)
    grads["conv1.b"] = g1.sum(axis=0)
    return grads


def policy_forward(params: Params, cfg: NetConfig, obs: Observation,
                   cache: Optional[dict] = None) -> np.ndarray:
    """Mean action (v, w) per observation; logistic/tanh squashed."""
    obs, single = _as_batch(obs)
    out = _trunk_forward(params, cfg, obs, cache)
    mean = np.empty_like(out)
    mean[:, 0] = 1.0 / (1.0 + np.exp(-out[:, 0]))
    mean[:, 1] = np.tanh(out[:, 1])
    if cache is not None:
        cache["mean"] = mean
        cache["kind"] = "policy"
    return mean[0] if single else mean


def value_forward(params: Params, cfg: NetConfig, obs: Observation,
                  cache: Optional[dict] = None) -> np.ndarray:
    obs, single = _as_batch(obs)
    out = _trunk_forward(params, cfg, obs, cache)[:, 0]
    if cache is not None:
        cache["kind"] = "value"
    return out[0] if single else out


def backward(params: Params, cfg: NetConfig, cache: Optional[dict], output_grad,
             log_std_grad=None) -> Params:
    """Gradients of ``sum(output * output_grad)`` w.r.t. every parameter.

    For the actor ``output_grad`` is taken w.r.t. the squashed mean
    (N, 2); ``log_std_grad`` (from :func:`log_prob_backward`) is passed
    straight through.  For the critic it is w.r.t. the scalar values (N,).
    """
    if not cache or "kind" not in cache:
        raise ValueError("backward needs the cache filled by the matching forward call")
    dtype = params["fc1.w"].dtype
    g = np.asarray(output_grad, dtype=dtype)
    if cache["kind"] == "policy":
        g = g.reshape(cache["n"], 2)
        mean = cache["mean"]
        g_out = np.empty_like(g)
        g_out[:, 0] = g[:, 0] * mean[:, 0] * (1.0 - mean[:, 0])
        g_out[:, 1] = g[:, 1] * (1.0 - mean[:, 1] ** 2)
        grads = _trunk_backward(params, cfg, cache, g_out)
        grads["log_std"] = (np.zeros_like(params["log_std"]) if log_std_grad is None
                            else np.asarray(log_std_grad, dtype=dtype).reshape(params["log_std"].shape))
    else:
        grads = _trunk_backward(params, cfg, cache, g.reshape(cache["n"], 1))
    return grads


def gaussian_log_prob(mean, log_std, action) -> np.ndarray:
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)


def gaussian_entropy(log_std) -> float:
    return float(np.sum(log_std + 0.5 + HALF_LOG_2PI))


def log_prob_and_entropy(v_mean, log_std, action_pre_clamp):
    return gaussian_log_prob(v_mean, log_std, action_pre_clamp), gaussian_entropy(log_std)


def log_prob_backward(v_mean, log_std, action, grad_logp):
    """Chain ``d loss / d log_prob`` (N,) to the mean (N, 2) and log_std (2,)."""
    inv_var = np.exp(-2.0 * log_std)
    diff = action - v_mean
    g = np.asarray(grad_logp)[:, None]
    g_mean = g * diff * inv_var
    g_log_std = (g * (diff * diff * inv_var - 1.0)).sum(axis=0)
    return g_mean, g_log_std


ACTION_LOW = np.array([0.0, -1.0])
ACTION_HIGH = np.array([1.0, 1.0])


def clamp_action(action: np.ndarray) -> np.ndarray:
    return np.clip(action, ACTION_LOW, ACTION_HIGH)


def sample_action(v_mean, log_std, rng: np.random.Generator):
    """Draw a Gaussian action; returns (clamped action, pre-clamp sample, log_prob).

    ``v_mean`` may be (2,) or batched (N, 2).  The log-probability refers
    to the pre-clamp sample.
    """
    v_mean = np.asarray(v_mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    eps = rng.standard_normal(v_mean.shape)
    raw = v_mean + np.exp(log_std) * eps
    return clamp_action(raw), raw, gaussian_log_prob(v_mean, log_std, raw)
