"""Pure-numpy fallback for the compiled kernels in ``_kernels.pyx``.

Same signatures and return conventions; used when the extension is not
built or when ``MTLSHARE_PURE_PYTHON`` is set.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b):
    kh, kw = w.shape[2], w.shape[3]
    # (n, c, oh, ow, kh, kw)
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    out = np.einsum("ncyxuv,fcuv->nfyx", windows, w, optimize=False)
    return out + b[None, :, None, None]


def conv2d_backward(x, w, g):
    kh, kw = w.shape[2], w.shape[3]
    oh, ow = g.shape[2], g.shape[3]
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    gw = np.einsum("ncyxuv,nfyx->fcuv", windows, g, optimize=False)
    gb = g.sum(axis=(0, 2, 3))
    gx = np.zeros_like(x)
    for u in range(kh):
        for v in range(kw):
            gx[:, :, u:u + oh, v:v + ow] += np.einsum("nfyx,fc->ncyx", g, w[:, :, u, v], optimize=False)
    return gx, gw, gb


def maxpool2d_forward(x, k):
    n, c, h, wd = x.shape
    oh, ow = h // k, wd // k
    crop = x[:, :, :oh * k, :ow * k]
    blocks = crop.reshape(n, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, k * k)
    local = blocks.argmax(axis=-1)  # first maximum wins, matching the compiled kernel
    out = np.take_along_axis(blocks, local[..., None], axis=-1)[..., 0]
    rows = np.arange(oh)[:, None] * k + local // k
    cols = np.arange(ow)[None, :] * k + local % k
    return np.ascontiguousarray(out), (rows * wd + cols).astype(np.int64)


def maxpool2d_backward(g, idx, h, wd):
    n, c = g.shape[0], g.shape[1]
    gx = np.zeros((n, c, h * wd), dtype=np.float64)
    flat_idx = idx.reshape(n, c, -1)
    np.add.at(gx, (np.arange(n)[:, None, None], np.arange(c)[None, :, None], flat_idx), g.reshape(n, c, -1))
    return gx.reshape(n, c, h, wd)
