"""Actor and critic forward passes, Gaussian sampling and a gradient check."""
# %%
import numpy as np

from multinav.mdp import Observation
from multinav.policy import (NetConfig, backward, gaussian_log_prob, init_params,
                             log_prob_backward, policy_forward, sample_action, value_forward)

cfg = NetConfig(n_beams=128)
policy, value = init_params(cfg, seed=0)
print({k: v.shape for k, v in policy.items()})

rng = np.random.default_rng(1)
obs = Observation(rng.normal(size=(5, 3, 128)), rng.normal(size=(5, 2)), rng.normal(size=(5, 2)))
mean = policy_forward(policy, cfg, obs)
print("mean (v, w):", mean.astype(float).round(3).tolist())
print("values:", value_forward(value, cfg, obs).astype(float).round(3).tolist())

# %%
# Sampling perturbs the mean with the learned std, then clamps to the velocity box.
action, pre_clamp, logp = sample_action(mean, policy["log_std"], rng)
print("clamped", action.round(3)[:2].tolist(), "log-prob", logp.round(3)[:2].tolist())

# %%
# Central-difference check of d/dparam sum(log_prob) in float64.
small = NetConfig(n_beams=16, conv1=(4, 5, 2), conv2=(3, 3, 2), fc1=8, fc2=6)
p64, _ = init_params(small, 0, dtype=np.float64)
o = Observation(rng.normal(size=(2, 3, 16)), rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
a = rng.normal(0.5, 0.5, (2, 2))
cache = {}
m = policy_forward(p64, small, o, cache)
g_mean, g_ls = log_prob_backward(m, p64["log_std"], a, np.ones(2))
grads = backward(p64, small, cache, g_mean, g_ls)


def loss():
    return gaussian_log_prob(policy_forward(p64, small, o), p64["log_std"], a).sum()


h = 1e-4
for name in ("conv1.w", "fc1.b", "out.w", "log_std"):
    flat = p64[name].reshape(-1)
    keep = flat[0]
    flat[0] = keep + h
    up = loss()
    flat[0] = keep - h
    down = loss()
    flat[0] = keep
    print(f"{name:8s} analytic={grads[name].reshape(-1)[0]:+.6e} numeric={(up - down) / (2 * h):+.6e}")
