import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdcsim import _core
from spdcsim._core import _fallback
from spdcsim.selftest import brute_force_histogram

compiled = pytest.importorskip("spdcsim._core._correlate")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32), n1=st.integers(0, 600), n2=st.integers(0, 600))
def test_backends_agree(seed, n1, n2):
    r = np.random.default_rng(seed)
    t1 = np.sort(r.integers(-10 ** 6, 10 ** 6, n1)).astype(np.int64)
    t2 = np.sort(r.integers(-10 ** 6, 10 ** 6, n2)).astype(np.int64)
    span, bw = 100_000, 2000
    a = np.zeros(2 * span // bw, np.int64)
    b = np.zeros_like(a)
    compiled.correlate_into(t1, t2, span, bw, a)
    _fallback.correlate_into(t1, t2, span, bw, b)
    assert np.array_equal(a, b)
    assert np.array_equal(a, brute_force_histogram(t1, t2, span, bw))


def test_is_sorted_agrees():
    for t in ([], [1], [1, 1, 2], [2, 1], [0, 5, 3]):
        arr = np.asarray(t, np.int64)
        assert bool(compiled.is_sorted(arr)) == bool(_fallback.is_sorted(arr))


def test_compiled_backend_selected_by_default():
    assert _core.BACKEND == "cython"


def test_environment_variable_forces_fallback():
    env = dict(os.environ, SPDCSIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from spdcsim import _core; print(_core.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
