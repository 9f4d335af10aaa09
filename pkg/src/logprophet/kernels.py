"""Kernel dispatch: the Cython build when importable, else the pure-Python twin.

Set ``LOGPROPHET_PURE_PYTHON=1`` to force the fallback.

Both kernels take events sorted by (time, rank). ``ordered=True`` means source
and destination come from one device's stream, so a destination event must
also come strictly later in file order (happens-before); otherwise any
destination with ``0 <= dt <= lag`` counts.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("LOGPROPHET_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def follow_pairs(src_tid, src_time, src_rank, dst_tid, dst_time, dst_rank, lag, n_templates, ordered, impl=None):
    """Keys ``cause * n_templates + effect``, one per source event and distinct
    effect template seen within ``lag`` after it."""
    mod = impl or _impl
    return mod.follow_pairs(
        _i(src_tid), _f(src_time), _i(src_rank), _i(dst_tid), _f(dst_time), _i(dst_rank),
        float(lag), int(n_templates), bool(ordered),
    )


def hit_mask(src_time, src_rank, dst_time, dst_rank, lag, ordered, impl=None):
    """Per source event: 1 if some destination event falls within ``lag`` after it."""
    mod = impl or _impl
    return np.asarray(
        mod.hit_mask(_f(src_time), _i(src_rank), _f(dst_time), _i(dst_rank), float(lag), bool(ordered)),
        dtype=bool,
    )
