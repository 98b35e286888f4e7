"""Pure-numpy reference versions of the hot kernels.

Signatures and semantics match the compiled ``_kernels`` module exactly;
``taskbal.kernels`` picks one of the two at import time.
"""

import numpy as np


def segment_sums(values, seg, n_seg):
    """Per-segment sums of ``values`` and element counts."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    seg = np.ascontiguousarray(seg, dtype=np.intp)
    sums = np.bincount(seg, weights=values, minlength=n_seg).astype(np.float64)
    counts = np.bincount(seg, minlength=n_seg).astype(np.int64)
    return sums, counts


def softmax_xent(logits, n_classes, targets, weights):
    """Masked softmax cross-entropy per row and its weighted logit gradient.

    Row ``t`` uses only its first ``n_classes[t]`` logits.  Returns the
    unweighted negative log-likelihood per row and ``weights[t] * (p - onehot)``
    (zero in masked columns).
    """
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    n, c = logits.shape
    n_classes = np.asarray(n_classes, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.intp)
    mask = np.arange(c)[None, :] < n_classes[:, None]
    z = np.where(mask, logits, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(z - zmax), 0.0)
    s = e.sum(axis=1)
    rows = np.arange(n)
    nll = np.log(s) - (logits[rows, targets] - zmax[:, 0])
    grad = e / s[:, None]
    grad[rows, targets] -= 1.0
    grad *= np.asarray(weights, dtype=np.float64)[:, None]
    return nll, grad


def head_forward(feats, unit, heads):
    """``logits[t] = heads[unit[t]] @ feats[t]``."""
    feats = np.asarray(feats, dtype=np.float64)
    unit = np.asarray(unit, dtype=np.intp)
    out = np.zeros((feats.shape[0], heads.shape[1]))
    for u in np.unique(unit):
        m = unit == u
        out[m] = feats[m] @ heads[u].T
    return out


def head_backward(feats, unit, heads, dlogits):
    """Gradients of ``head_forward`` w.r.t. the heads and the features."""
    feats = np.asarray(feats, dtype=np.float64)
    unit = np.asarray(unit, dtype=np.intp)
    dheads = np.zeros_like(heads, dtype=np.float64)
    dfeats = np.zeros_like(feats)
    for u in np.unique(unit):
        m = unit == u
        dheads[u] = dlogits[m].T @ feats[m]
        dfeats[m] = dlogits[m] @ heads[u]
    return dheads, dfeats
