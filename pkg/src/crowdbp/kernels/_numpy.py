import numpy as np
from scipy.special import gammaln

_EXP_CAP = 600.0


def onecoin_dp_messages(worker_ptr, edge_label, t2w, a1, a2, num_classes):
    """Vectorised over workers of equal degree; loops run over neighbour positions."""
    n_edges, K = t2w.shape
    out = np.empty((n_edges, K))
    lk = np.log(K - 1) if K > 1 else 0.0
    deg = np.diff(worker_ptr)
    for n in np.unique(deg[deg > 0]):
        n = int(n)
        ws = np.flatnonzero(deg == n)
        W = ws.size
        edges = worker_ptr[ws][:, None] + np.arange(n)
        labels = edge_label[edges]
        p = t2w[edges, labels]
        prefix = np.zeros((W, n + 1, n + 1))
        prefix[:, 0, 0] = 1.0
        for i in range(n):
            pi = p[:, i:i + 1]
            prefix[:, i + 1, :i + 1] = prefix[:, i, :i + 1] * (1.0 - pi)
            prefix[:, i + 1, 1:i + 2] += prefix[:, i, :i + 1] * pi
        c = np.arange(n)
        lw1 = gammaln(a1 + c + 1) + gammaln(a2 + n - 1 - c) - (n - 1 - c) * lk
        lw0 = gammaln(a1 + c) + gammaln(a2 + n - c) - (n - c) * lk
        full = prefix[:, n, :]
        with np.errstate(divide="ignore"):
            logpb = np.log(np.maximum(full[:, :-1], full[:, 1:]))
        scale = np.max(logpb + np.maximum(lw1, lw0), axis=1, keepdims=True)
        g1 = np.exp(np.minimum(lw1 - scale, _EXP_CAP))
        g0 = np.exp(np.minimum(lw0 - scale, _EXP_CAP))
        v1 = np.empty((W, n))
        v0 = np.empty((W, n))
        for i in range(n - 1, -1, -1):
            v1[:, i] = np.sum(prefix[:, i, :i + 1] * g1[:, :i + 1], axis=1)
            v0[:, i] = np.sum(prefix[:, i, :i + 1] * g0[:, :i + 1], axis=1)
            pi = p[:, i:i + 1]
            g1[:, :i] = (1.0 - pi) * g1[:, :i] + pi * g1[:, 1:i + 1]
            g0[:, :i] = (1.0 - pi) * g0[:, :i] + pi * g0[:, 1:i + 1]
        v1 = np.maximum(v1, 1e-300)
        v0 = np.maximum(v0, 1e-300)
        norm = v1 + (K - 1) * v0
        msg = np.repeat((v0 / norm)[..., None], K, axis=2)
        np.put_along_axis(msg, labels[..., None], (v1 / norm)[..., None], axis=2)
        out[edges] = msg
    return out


def mc_worker_messages(theta, msgs, labels):
    cols = theta[:, :, labels]                       # (S, K, n)
    lin = np.einsum("skn,nk->sn", cols, msgs)
    log_lin = np.log(np.maximum(lin, 1e-300))
    rest = log_lin.sum(axis=1, keepdims=True) - log_lin
    wts = np.exp(rest - rest.max(axis=0, keepdims=True))
    out = np.maximum(np.einsum("skn,sn->nk", cols, wts), 1e-300)
    return out / out.sum(axis=1, keepdims=True)
