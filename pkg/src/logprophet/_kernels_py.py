"""Pure-Python versions of the compiled kernels (same signatures, same results)."""

from __future__ import annotations

import numpy as np


def follow_pairs(src_tid, src_time, src_rank, dst_tid, dst_time, dst_rank, lag, n_templates, ordered):
    src_tid, src_time, src_rank = list(src_tid), list(src_time), list(src_rank)
    dst_tid, dst_time, dst_rank = list(dst_tid), list(dst_time), list(dst_rank)
    m = len(dst_tid)
    lo = 0
    out = []
    for i, t in enumerate(src_time):
        hi = t + lag
        while lo < m and dst_time[lo] < t:
            lo += 1
        seen = set()
        j = lo
        r = src_rank[i]
        while j < m and dst_time[j] <= hi:
            if not ordered or dst_rank[j] > r:
                eff = dst_tid[j]
                if eff not in seen:
                    seen.add(eff)
                    out.append(src_tid[i] * n_templates + eff)
            j += 1
    return np.asarray(out, dtype=np.int64)


def hit_mask(src_time, src_rank, dst_time, dst_rank, lag, ordered):
    src_time, src_rank = list(src_time), list(src_rank)
    dst_time, dst_rank = list(dst_time), list(dst_rank)
    m = len(dst_time)
    lo = 0
    out = np.zeros(len(src_time), dtype=np.uint8)
    for i, t in enumerate(src_time):
        hi = t + lag
        while lo < m and dst_time[lo] < t:
            lo += 1
        j = lo
        while j < m and dst_time[j] <= hi:
            if not ordered or dst_rank[j] > src_rank[i]:
                out[i] = 1
                break
            j += 1
    return out
