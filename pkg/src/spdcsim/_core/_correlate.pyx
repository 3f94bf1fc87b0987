# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Two-pointer cross-correlation kernel over sorted int64 time tags."""

from libc.stdint cimport int64_t


def correlate_into(const int64_t[::1] t1, const int64_t[::1] t2,
                   int64_t span, int64_t bin_width, int64_t[::1] hist):
    """Add every delay t2 - t1 in [-span, span) to ``hist``.

    Both inputs must be sorted. ``hist`` has ``2 * span // bin_width`` bins.
    """
    cdef Py_ssize_t n1 = t1.shape[0], n2 = t2.shape[0], nb = hist.shape[0]
    cdef Py_ssize_t i, j, start = 0
    cdef int64_t a, d, k
    with nogil:
        for i in range(n1):
            a = t1[i]
            while start < n2 and t2[start] < a - span:
                start += 1
            j = start
            while j < n2:
                d = t2[j] - a
                if d >= span:
                    break
                k = (d + span) // bin_width
                if k < nb:
                    hist[k] += 1
                j += 1


def is_sorted(const int64_t[::1] t):
    cdef Py_ssize_t i
    cdef bint ok = True
    with nogil:
        for i in range(1, t.shape[0]):
            if t[i] < t[i - 1]:
                ok = False
                break
    return ok
