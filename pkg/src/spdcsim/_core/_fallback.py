"""Numpy implementation of the correlation kernel, used when the extension is absent."""

import numpy as np


def correlate_into(t1, t2, span, bin_width, hist):
    t1 = np.asarray(t1, dtype=np.int64)
    t2 = np.asarray(t2, dtype=np.int64)
    if t1.size == 0 or t2.size == 0:
        return
    lo = np.searchsorted(t2, t1 - span, side="left")
    hi = np.searchsorted(t2, t1 + span, side="left")
    width = hi - lo
    nb = hist.shape[0]
    # walk the k-th partner of every start tag at once
    k = 0
    active = np.nonzero(width > 0)[0]
    while active.size:
        d = t2[lo[active] + k] - t1[active]
        idx = (d + span) // bin_width
        idx = idx[idx < nb]
        hist += np.bincount(idx, minlength=nb).astype(hist.dtype)
        k += 1
        active = active[width[active] > k]


def is_sorted(t):
    t = np.asarray(t)
    return t.size < 2 or bool(np.all(t[1:] >= t[:-1]))
