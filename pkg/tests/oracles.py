"""Independent reference computations used by the unit and acceptance tests."""
import math

import numpy as np

from multinav.mdp import Observation
from multinav.policy import (NetConfig, backward, gaussian_log_prob, init_params,
                             log_prob_backward, policy_forward, value_forward)

SMALL_NET = NetConfig(n_beams=16, conv1=(4, 5, 2), conv2=(3, 3, 2), fc1=8, fc2=6)


# ---------------------------------------------------------------- raycasting

def segment_cases(rng, n):
    """Rays with one wall crossing the beam at a known distance.

    Each case: (pose, n_beams, beam index, segment (x0,y0,x1,y1), expected).
    The segment is built around the hit point, so the expected range is the
    construction distance, independent of any intersection formula.
    """
    cases = []
    for _ in range(n):
        n_beams = int(rng.choice([3, 5, 9, 33, 181]))
        i = int(rng.integers(n_beams))
        pose = (rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi))
        phi = pose[2] - math.pi / 2 + i * math.pi / (n_beams - 1)
        d = rng.uniform(0.2, 3.8)
        hit = np.array([pose[0] + d * math.cos(phi), pose[1] + d * math.sin(phi)])
        tilt = phi + rng.uniform(0.3, math.pi - 0.3)        # never parallel to the beam
        direction = np.array([math.cos(tilt), math.sin(tilt)])
        a = hit - rng.uniform(0.05, 1.0) * direction
        b = hit + rng.uniform(0.05, 1.0) * direction
        cases.append((pose, n_beams, i, (*a, *b), d))
    return cases


def disc_cases(rng, n):
    """Rays hitting a disc centred c along the beam with lateral offset e: c - sqrt(r^2 - e^2)."""
    cases = []
    for _ in range(n):
        n_beams = int(rng.choice([3, 5, 9, 33, 181]))
        i = int(rng.integers(n_beams))
        pose = (rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi))
        phi = pose[2] - math.pi / 2 + i * math.pi / (n_beams - 1)
        r = rng.uniform(0.1, 0.4)
        e = rng.uniform(-0.9, 0.9) * r
        c = rng.uniform(0.3 + r, 3.5)
        u = np.array([math.cos(phi), math.sin(phi)])
        nrm = np.array([-u[1], u[0]])
        centre = np.array(pose[:2]) + c * u + e * nrm
        cases.append((pose, n_beams, i, (*centre, r), c - math.sqrt(r * r - e * e)))
    return cases


# -------------------------------------------------------------------- GAE

def gae_direct(rewards, values, dones, bootstrap, gamma, lam):
    """Sum over k of (gamma*lam)^k * delta_{t+k}, truncated at the first done."""
    T = len(rewards)
    nxt = np.append(values[1:], bootstrap)
    delta = [rewards[t] + gamma * nxt[t] * (1.0 - dones[t]) - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        total, coef = 0.0, 1.0
        for k in range(t, T):
            total += coef * delta[k]
            if dones[k]:
                break
            coef *= gamma * lam
        adv[t] = total
    return adv


# ---------------------------------------------------------- finite differences

def random_obs(rng, n, cfg=SMALL_NET):
    return Observation(rng.normal(size=(n, 3, cfg.n_beams)), rng.normal(size=(n, 2)),
                       rng.normal(size=(n, 2)))


def _pattern(cache):
    return np.concatenate([(cache[k] > 0).ravel() for k in ("z1", "z2", "z3", "z4")])


def _loss_policy(params, cfg, obs, actions, coef):
    cache = {}
    mean = policy_forward(params, cfg, obs, cache)
    return float(np.sum(coef * gaussian_log_prob(mean, params["log_std"], actions))), _pattern(cache)


def _loss_value(params, cfg, obs, coef):
    cache = {}
    return float(np.sum(coef * value_forward(params, cfg, obs, cache))), _pattern(cache)


def grad_check_draw(seed, h=1e-4, per_tensor=4, cfg=SMALL_NET):
    """Worst relative error between analytic and central-difference gradients.

    Covers the actor through the Gaussian log-probability (so log_std is
    included) and the critic's value output, on one random draw.  A probe
    whose +-h perturbation flips any rectifier is at a kink, where the loss
    is not differentiable; such probes are skipped and counted.

    Returns (worst relative error, skipped probes, total probes).
    """
    rng = np.random.default_rng(seed)
    policy, value = init_params(cfg, seed, dtype=np.float64)
    policy["log_std"] = rng.uniform(-1.0, 0.5, 2)
    for p in (policy, value):
        for k in p:
            if k.endswith(".b"):
                p[k] = p[k] + rng.normal(scale=0.1, size=p[k].shape)
    obs = random_obs(rng, 3, cfg)
    actions = rng.normal(0.5, 0.7, size=(3, 2))
    coef = rng.normal(size=3)

    cache = {}
    mean = policy_forward(policy, cfg, obs, cache)
    g_mean, g_ls = log_prob_backward(mean, policy["log_std"], actions, coef)
    pg = backward(policy, cfg, cache, g_mean, g_ls)
    vcache = {}
    value_forward(value, cfg, obs, vcache)
    vg = backward(value, cfg, vcache, coef)

    worst, skipped, total = 0.0, 0, 0
    checks = [(policy, pg, lambda p: _loss_policy(p, cfg, obs, actions, coef)),
              (value, vg, lambda p: _loss_value(p, cfg, obs, coef))]
    for params, grads, loss in checks:
        for name, tensor in params.items():
            flat = tensor.reshape(-1)
            for j in rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False):
                old = flat[j]
                _, base = loss(params)
                flat[j] = old + h
                up, pat_up = loss(params)
                flat[j] = old - h
                down, pat_down = loss(params)
                flat[j] = old
                total += 1
                if not (np.array_equal(pat_up, base) and np.array_equal(pat_down, base)):
                    skipped += 1
                    continue
                numeric = (up - down) / (2 * h)
                analytic = grads[name].reshape(-1)[j]
                err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
                worst = max(worst, err)
    return worst, skipped, total


def log_prob_quadrature(mean, log_std, lo=-8.0, hi=8.0, n=801):
    """Total probability mass of the density on a grid (should be ~1)."""
    xs = np.linspace(lo, hi, n)
    gx, gy = np.meshgrid(mean[0] + xs * math.exp(log_std[0]), mean[1] + xs * math.exp(log_std[1]))
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    dens = np.exp(gaussian_log_prob(mean, log_std, pts)).reshape(n, n)
    cell = (xs[1] - xs[0]) ** 2 * math.exp(log_std[0] + log_std[1])
    return float(dens.sum() * cell)
