"""Pure-numpy fallback for the renewal-path scanner.

Outputs are bit-identical to the compiled kernel: partial sums are the same
left-to-right fold (cumsum seeded with the carried-in elapsed time), and
per-(row, site) occupation sums accumulate in column order via bincount,
matching the compiled kernel's sequential adds into the chunk buffer.
"""

from __future__ import annotations

import numpy as np


def process_chunk(site, hold, t, s, n, buf, done, over, rem):
    """See ``_pathcore.process_chunk``; same contract, same bit pattern."""
    rows, cols = site.shape
    act = np.flatnonzero(done == 0)
    if act.size == 0:
        return 0
    h = hold[act]
    si = site[act]
    # seeded cumsum reproduces the sequential s += h fold exactly
    cs = np.cumsum(np.concatenate([s[act, None], h], axis=1), axis=1)[:, 1:]
    reached = cs >= t
    finished = reached.any(axis=1)
    first = np.where(finished, reached.argmax(axis=1), cols)

    completed = np.arange(cols)[None, :] < first[:, None]
    n_sites = buf.shape[1]
    flat = act[:, None] * n_sites + si
    sums = np.bincount(flat[completed], weights=h[completed], minlength=rows * n_sites)
    buf += sums.reshape(rows, n_sites)
    n[act] += first

    # elapsed time after the chunk: the partial sum through the last
    # completed visit (finished rows stop at S_{N_t}, others take all cols)
    prev = cs[np.arange(act.size), np.maximum(first - 1, 0)]
    s_new = np.where(first > 0, prev, s[act])
    fin = np.flatnonzero(finished)
    if fin.size:
        rows_fin = act[fin]
        over[rows_fin] = si[fin, first[fin]]
        rem[rows_fin] = t - s_new[fin]
        done[rows_fin] = 1
    s[act] = s_new
    return int(act.size - fin.size)
