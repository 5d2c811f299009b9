import os
import subprocess
import sys

import numpy as np
import pytest

from mtlshare.autodiff import _kernels_py

compiled = pytest.importorskip("mtlshare.autodiff._kernels", reason="compiled extension not built")


@pytest.fixture(params=[0, 1, 2])
def arrays(request):
    rng = np.random.default_rng(request.param)
    n, c, h, w, o = 2, 3, 9, 8, 4
    return rng.standard_normal((n, c, h, w)), rng.standard_normal((o, c, 3, 2)), rng.standard_normal(o), rng


def test_conv_forward_agrees(arrays):
    x, k, b, _ = arrays
    np.testing.assert_allclose(compiled.conv2d_forward(x, k, b), _kernels_py.conv2d_forward(x, k, b), rtol=0, atol=1e-12)


def test_conv_backward_agrees(arrays):
    x, k, b, rng = arrays
    g = rng.standard_normal((2, 4, 7, 7))
    for got, want in zip(compiled.conv2d_backward(x, k, g), _kernels_py.conv2d_backward(x, k, g)):
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_maxpool_agrees(arrays):
    x, _, _, rng = arrays
    x = np.round(x, 1)  # force ties
    out_c, idx_c = compiled.maxpool2d_forward(x, 2)
    out_p, idx_p = _kernels_py.maxpool2d_forward(x, 2)
    np.testing.assert_array_equal(out_c, out_p)
    np.testing.assert_array_equal(idx_c, idx_p)
    g = rng.standard_normal(out_c.shape)
    np.testing.assert_array_equal(
        compiled.maxpool2d_backward(g, idx_c, x.shape[2], x.shape[3]),
        _kernels_py.maxpool2d_backward(g, idx_p, x.shape[2], x.shape[3]),
    )


def test_env_var_forces_fallback():
    code = "from mtlshare.autodiff import BACKEND; print(BACKEND)"
    env = dict(os.environ, MTLSHARE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
