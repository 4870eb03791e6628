"""Algorithm hooks that run value training on the brute-force tiny instance."""

from __future__ import annotations

import numpy as np

import tiny_mdp as tm
from portfolio_pursuit.rl_pursuit import CustomerReplayBuffer, train_value_function


def tiny_training():
    buf = CustomerReplayBuffer(
        costs=np.array([s.cost for s in tm.TYPES]),
        markets=np.array([[s.market] * 3 for s in tm.TYPES]),
        members=np.array([[s.member] for s in tm.TYPES], dtype=float),
    )
    by_market = {s.market: s for s in tm.TYPES}

    def p(M, a):
        return np.array([by_market[m].accept(x) for m, x in zip(np.asarray(M)[:, 0], np.asarray(a))])

    def policy(M, k):
        M, k = np.asarray(M), np.asarray(k)
        acts = np.array(tm.ACTIONS)
        out = []
        for m, kk in zip(M[:, 0], k):
            out.append(acts[int(np.argmax([by_market[m].accept(a) * (a - kk) for a in acts]))])
        return np.array(out)

    def fit_next(F, V):
        table = {int(f[0]): v for f, v in zip(F, V)}
        return lambda G: np.array([table[int(g[0])] for g in np.atleast_2d(G)])

    def sampler(t, count, rng):
        return np.arange(t)[:, None]

    res = train_value_function(policy, p, buf, np.array([tm.TARGET]), tm.LAM, tm.T, None,
                               np.random.default_rng(0), J_plus=0, k_clip=None, fit_next=fit_next,
                               sampler=sampler, draw=lambda rng: np.array([0, 1]), fit_value=False)
    return res, policy
