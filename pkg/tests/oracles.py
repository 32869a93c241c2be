"""Independent reference implementations used only by the tests."""

import math

from sdcaf.env import Environment


def textbook_ucb_arms(instance, seed, delta):
    """Plain per-step UCB with index mean + sqrt(2 log(1/delta) / n); returns the arm sequence."""
    env = Environment(instance, seed)
    K = instance.n_arms
    n = [0] * K
    s = [0.0] * K
    log_term = math.log(1.0 / delta)
    arms = []
    for _ in range(instance.horizon):
        best, best_idx = 0, -math.inf
        for i in range(K):
            idx = math.inf if n[i] == 0 else s[i] / n[i] + math.sqrt(2.0 * log_term / n[i])
            if idx > best_idx:
                best, best_idx = i, idx
        x = env.step(best)
        n[best] += 1
        s[best] += x
        arms.append(best)
    return arms


def pull_bound_closed_form(gap, horizon, d):
    lt = math.log(horizon)
    return 289 * lt / (4 * gap * gap) + (d / 2) * math.sqrt(horizon / lt) + 2
