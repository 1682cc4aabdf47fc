# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled renewal-path scanner.

Semantics must stay bit-identical to the numpy fallback in
``_pathcore_py``: same left-to-right partial sums, same per-(row, site)
accumulation order into the per-chunk buffer.
"""

from libc.stdint cimport int64_t, uint8_t


def process_chunk(int64_t[:, ::1] site, double[:, ::1] hold, double t,
                  double[::1] s, int64_t[::1] n, double[:, ::1] buf,
                  uint8_t[::1] done, int64_t[::1] over, double[::1] rem):
    """Advance every unfinished row through one chunk of drawn visits.

    Completed holds accumulate into ``buf`` (a per-chunk occupation buffer,
    zeroed by the caller); the first visit whose arrival reaches ``t``
    finishes the row, recording the overshoot site and the remainder
    ``t - S_n``.  Returns the number of rows still unfinished.
    """
    cdef Py_ssize_t rows = site.shape[0]
    cdef Py_ssize_t cols = site.shape[1]
    cdef Py_ssize_t r, c
    cdef double h, ns
    cdef Py_ssize_t left = 0
    with nogil:
        for r in range(rows):
            if done[r]:
                continue
            for c in range(cols):
                h = hold[r, c]
                ns = s[r] + h
                if ns >= t:
                    done[r] = 1
                    over[r] = site[r, c]
                    rem[r] = t - s[r]
                    break
                s[r] = ns
                buf[r, site[r, c]] += h
                n[r] += 1
            if not done[r]:
                left += 1
    return left
