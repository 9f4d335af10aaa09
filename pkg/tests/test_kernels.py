from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logprophet import _kernels_py, kernels

try:
    from logprophet import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

IMPLS = [pytest.param(_kernels_py, id="python")]
if _compiled is not None:
    IMPLS.append(pytest.param(_compiled, id="cython"))


def brute_follow(st_, sts, srk, dt_, dts, drk, lag, n, ordered):
    out = []
    for a, ta, ra in zip(st_, sts, srk):
        seen = []
        for b, tb, rb in zip(dt_, dts, drk):
            if 0 <= tb - ta <= lag and (not ordered or rb > ra) and b not in seen:
                seen.append(b)
        out += [a * n + b for b in seen]
    return sorted(out)


def brute_hits(sts, srk, dts, drk, lag, ordered):
    return [any(0 <= tb - ta <= lag and (not ordered or rb > ra) for tb, rb in zip(dts, drk))
            for ta, ra in zip(sts, srk)]


@st.composite
def streams(draw):
    n = draw(st.integers(1, 5))

    def one(offset):
        k = draw(st.integers(0, 25))
        times = sorted(draw(st.lists(st.integers(0, 40), min_size=k, max_size=k)))
        tids = draw(st.lists(st.integers(0, n - 1), min_size=k, max_size=k))
        return np.array(tids), np.array(times, dtype=float), np.arange(k) * 2 + offset

    lag = draw(st.sampled_from([0.0, 1.0, 2.5, 5.0]))
    return n, one(0), one(1), lag


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("impl", IMPLS)
@settings(max_examples=200, deadline=None)
@given(data=streams(), ordered=st.booleans())
def test_follow_pairs_matches_brute_force(impl, data, ordered):
    n, (st_, sts, srk), (dt_, dts, drk), lag = data
    if ordered:  # same stream on both sides, as for one device
        dt_, dts, drk = st_, sts, srk
    got = kernels.follow_pairs(st_, sts, srk, dt_, dts, drk, lag, n, ordered, impl=impl)
    assert sorted(got.tolist()) == brute_follow(st_, sts, srk, dt_, dts, drk, lag, n, ordered)


@pytest.mark.parametrize("impl", IMPLS)
@settings(max_examples=200, deadline=None)
@given(data=streams(), ordered=st.booleans())
def test_hit_mask_matches_brute_force(impl, data, ordered):
    n, (_, sts, srk), (_, dts, drk), lag = data
    got = kernels.hit_mask(sts, srk, dts, drk, lag, ordered, impl=impl)
    assert got.tolist() == brute_hits(sts, srk, dts, drk, lag, ordered)


@pytest.mark.skipif(_compiled is None, reason="compiled extension not built")
def test_compiled_and_python_agree_exactly():
    rng = np.random.default_rng(0)
    k = 5000
    t = np.sort(rng.uniform(0, 2000, k))
    tid = rng.integers(0, 30, k)
    rk = np.arange(k)
    a = kernels.follow_pairs(tid, t, rk, tid, t, rk, 5.0, 30, True, impl=_compiled)
    b = kernels.follow_pairs(tid, t, rk, tid, t, rk, 5.0, 30, True, impl=_kernels_py)
    assert np.array_equal(a, b)
    assert np.array_equal(kernels.hit_mask(t, rk, t, rk, 3.0, False, impl=_compiled),
                          kernels.hit_mask(t, rk, t, rk, 3.0, False, impl=_kernels_py))


def test_ordered_same_timestamp_uses_rank():
    tid = np.array([0, 1])
    t = np.array([5.0, 5.0])
    rk = np.array([0, 1])
    assert kernels.follow_pairs(tid, t, rk, tid, t, rk, 5.0, 2, True).tolist() == [1]
