import math

import numpy as np
from numba import njit

# exp() argument cap for rescaled weights; keeps n * exp(cap) finite
_EXP_CAP = 600.0


@njit(cache=True)
def onecoin_dp_messages(worker_ptr, edge_label, t2w, a1, a2, num_classes):
    n_edges, K = t2w.shape
    out = np.empty((n_edges, K))
    lk = math.log(K - 1) if K > 1 else 0.0
    n_workers = worker_ptr.shape[0] - 1
    maxdeg = 0
    for u in range(n_workers):
        maxdeg = max(maxdeg, worker_ptr[u + 1] - worker_ptr[u])
    prefix = np.zeros((maxdeg + 1, maxdeg + 1))
    p = np.empty(maxdeg)
    g1 = np.empty(maxdeg)
    g0 = np.empty(maxdeg)
    lw1 = np.empty(maxdeg)
    lw0 = np.empty(maxdeg)
    for u in range(n_workers):
        s = worker_ptr[u]
        n = worker_ptr[u + 1] - s
        if n == 0:
            continue
        for j in range(n):
            p[j] = t2w[s + j, edge_label[s + j]]
        # prefix[i, a]: probability that a of the first i neighbours are correct
        prefix[0, 0] = 1.0
        for i in range(n):
            pi = p[i]
            prefix[i + 1, 0] = prefix[i, 0] * (1.0 - pi)
            for a in range(1, i + 1):
                prefix[i + 1, a] = prefix[i, a] * (1.0 - pi) + prefix[i, a - 1] * pi
            prefix[i + 1, i + 1] = prefix[i, i] * pi
        scale = -np.inf
        for c in range(n):
            lw1[c] = math.lgamma(a1 + c + 1) + math.lgamma(a2 + n - 1 - c) - (n - 1 - c) * lk
            lw0[c] = math.lgamma(a1 + c) + math.lgamma(a2 + n - c) - (n - c) * lk
            pb = max(prefix[n, c], prefix[n, c + 1])
            if pb > 0.0:
                scale = max(scale, math.log(pb) + max(lw1[c], lw0[c]))
        for c in range(n):
            g1[c] = math.exp(min(lw1[c] - scale, _EXP_CAP))
            g0[c] = math.exp(min(lw0[c] - scale, _EXP_CAP))
        # backward pass: g(a) = sum_b P(b correct among later neighbours) * w(a + b)
        for i in range(n - 1, -1, -1):
            v1 = 0.0
            v0 = 0.0
            for a in range(i + 1):
                v1 += prefix[i, a] * g1[a]
                v0 += prefix[i, a] * g0[a]
            v1 = max(v1, 1e-300)
            v0 = max(v0, 1e-300)
            norm = v1 + (K - 1) * v0
            y = edge_label[s + i]
            for k in range(K):
                out[s + i, k] = v0 / norm
            out[s + i, y] = v1 / norm
            pi = p[i]
            for a in range(i):
                g1[a] = (1.0 - pi) * g1[a] + pi * g1[a + 1]
                g0[a] = (1.0 - pi) * g0[a] + pi * g0[a + 1]
    return out


@njit(cache=True)
def mc_worker_messages(theta, msgs, labels):
    S, K, _ = theta.shape
    n = msgs.shape[0]
    log_lin = np.empty((S, n))
    total = np.zeros(S)
    for s in range(S):
        for j in range(n):
            v = 0.0
            for z in range(K):
                v += theta[s, z, labels[j]] * msgs[j, z]
            lv = math.log(max(v, 1e-300))
            log_lin[s, j] = lv
            total[s] += lv
    out = np.empty((n, K))
    wts = np.empty(S)
    for i in range(n):
        m = -np.inf
        for s in range(S):
            wts[s] = total[s] - log_lin[s, i]
            m = max(m, wts[s])
        for s in range(S):
            wts[s] = math.exp(wts[s] - m)
        norm = 0.0
        for z in range(K):
            acc = 0.0
            for s in range(S):
                acc += theta[s, z, labels[i]] * wts[s]
            acc = max(acc, 1e-300)
            out[i, z] = acc
            norm += acc
        for z in range(K):
            out[i, z] /= norm
    return out
