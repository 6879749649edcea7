"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

The compiled path is used by default. Set ``XDC_NO_NUMBA=1`` (or any
non-empty value other than ``0``) before import to force the numpy path;
the same flag lets CI exercise both. ``benchmarks/bench_kernels.py``
compares the two.

Both paths compute in float64. They agree to floating-point rounding but
are not guaranteed bit-identical to each other; within one path results
are deterministic.
"""

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
    _HAVE_NUMBA = False

_LOG2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# pure numpy implementations


def box_down_np(src, nh, nw):
    """Mean over nh x nw blocks. src is (H, W, C) with H, W divisible.

    Each block mean is anchored at the block's first sample so constant
    blocks come back bit-exact.
    """
    h, w, c = src.shape
    blocks = src.reshape(h // nh, nh, w // nw, nw, c)
    anchor = blocks[:, :1, :, :1, :]
    return (anchor + (blocks - anchor).mean(axis=(1, 3), keepdims=True))[
        :, 0, :, 0, :
    ]


def bilinear_resize_np(src, out_h, out_w):
    """Bilinear resize with half-pixel sample centers, edge clamped.

    Interpolation uses the a + w*(b - a) form so equal neighbors (and
    therefore constant grids) are preserved bit-exactly.
    """
    h, w, _ = src.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    tl, tr = src[y0][:, x0], src[y0][:, x1]
    bl, br = src[y1][:, x0], src[y1][:, x1]
    top = tl + (tr - tl) * wx
    bot = bl + (br - bl) * wx
    return top + (bot - top) * wy


def dilate4_np(mask):
    """Max over the 4-connected neighborhood and the pixel itself."""
    out = mask.copy()
    out[:-1, :] = np.maximum(out[:-1, :], mask[1:, :])
    out[1:, :] = np.maximum(out[1:, :], mask[:-1, :])
    out[:, :-1] = np.maximum(out[:, :-1], mask[:, 1:])
    out[:, 1:] = np.maximum(out[:, 1:], mask[:, :-1])
    return out


def gmm_posterior_np(x, means, stds, log_w, a_bar):
    """Posterior mean of the clean signal under a noised isotropic mixture.

    x is the flattened noisy state (D,), means is (K, D), stds and log_w
    are (K,). The state is assumed drawn as sqrt(a_bar) * x0 + noise with
    variance 1 - a_bar. Returns (posterior mean (D,), responsibilities (K,)).
    Component likelihoods are accumulated in the log domain so far-away
    states never underflow to NaN.
    """
    d = x.shape[0]
    sq_ab = np.sqrt(a_bar)
    var = a_bar * stds**2 + (1.0 - a_bar)  # (K,)
    diff = x[None, :] - sq_ab * means  # (K, D)
    sse = np.sum(diff * diff, axis=1)  # (K,)
    log_r = log_w - 0.5 * (d * (_LOG2PI + np.log(var)) + sse / var)
    log_r -= log_r.max()
    resp = np.exp(log_r)
    resp /= resp.sum()
    gain = sq_ab * stds**2 / var  # (K,)
    post = means + gain[:, None] * diff  # (K, D)
    return resp @ post, resp


# ---------------------------------------------------------------------------
# numba implementations

if _HAVE_NUMBA:

    @njit(cache=True)
    def box_down_nb(src, nh, nw):
        h, w, c = src.shape
        oh, ow = h // nh, w // nw
        out = np.empty((oh, ow, c), dtype=np.float64)
        inv = 1.0 / (nh * nw)
        for i in range(oh):
            for j in range(ow):
                for k in range(c):
                    anchor = src[i * nh, j * nw, k]
                    acc = 0.0
                    for di in range(nh):
                        for dj in range(nw):
                            acc += src[i * nh + di, j * nw + dj, k] - anchor
                    out[i, j, k] = anchor + acc * inv
        return out

    @njit(cache=True)
    def bilinear_resize_nb(src, out_h, out_w):
        h, w, c = src.shape
        out = np.empty((out_h, out_w, c), dtype=np.float64)
        for i in range(out_h):
            y = (i + 0.5) * (h / out_h) - 0.5
            if y < 0.0:
                y = 0.0
            elif y > h - 1.0:
                y = h - 1.0
            y0 = int(np.floor(y))
            y1 = min(y0 + 1, h - 1)
            wy = y - y0
            for j in range(out_w):
                x = (j + 0.5) * (w / out_w) - 0.5
                if x < 0.0:
                    x = 0.0
                elif x > w - 1.0:
                    x = w - 1.0
                x0 = int(np.floor(x))
                x1 = min(x0 + 1, w - 1)
                wx = x - x0
                for k in range(c):
                    top = src[y0, x0, k] + (src[y0, x1, k] - src[y0, x0, k]) * wx
                    bot = src[y1, x0, k] + (src[y1, x1, k] - src[y1, x0, k]) * wx
                    out[i, j, k] = top + (bot - top) * wy
        return out

    @njit(cache=True)
    def dilate4_nb(mask):
        h, w = mask.shape
        out = np.empty((h, w), dtype=np.float64)
        for i in range(h):
            for j in range(w):
                m = mask[i, j]
                if i > 0 and mask[i - 1, j] > m:
                    m = mask[i - 1, j]
                if i < h - 1 and mask[i + 1, j] > m:
                    m = mask[i + 1, j]
                if j > 0 and mask[i, j - 1] > m:
                    m = mask[i, j - 1]
                if j < w - 1 and mask[i, j + 1] > m:
                    m = mask[i, j + 1]
                out[i, j] = m
        return out

    @njit(cache=True)
    def gmm_posterior_nb(x, means, stds, log_w, a_bar):
        k, d = means.shape
        sq_ab = np.sqrt(a_bar)
        log_r = np.empty(k, dtype=np.float64)
        var = np.empty(k, dtype=np.float64)
        for c in range(k):
            v = a_bar * stds[c] * stds[c] + (1.0 - a_bar)
            var[c] = v
            sse = 0.0
            for i in range(d):
                diff = x[i] - sq_ab * means[c, i]
                sse += diff * diff
            log_r[c] = log_w[c] - 0.5 * (d * (_LOG2PI + np.log(v)) + sse / v)
        top = log_r.max()
        total = 0.0
        for c in range(k):
            log_r[c] = np.exp(log_r[c] - top)
            total += log_r[c]
        resp = log_r / total
        out = np.zeros(d, dtype=np.float64)
        for c in range(k):
            gain = sq_ab * stds[c] * stds[c] / var[c]
            r = resp[c]
            for i in range(d):
                out[i] += r * (means[c, i] + gain * (x[i] - sq_ab * means[c, i]))
        return out, resp


def _numba_disabled():
    flag = os.environ.get("XDC_NO_NUMBA", "")
    return flag not in ("", "0")


NUMBA_ENABLED = _HAVE_NUMBA and not _numba_disabled()

if NUMBA_ENABLED:
    box_down = box_down_nb
    bilinear_resize = bilinear_resize_nb
    dilate4 = dilate4_nb
    gmm_posterior = gmm_posterior_nb
else:
    box_down = box_down_np
    bilinear_resize = bilinear_resize_np
    dilate4 = dilate4_np
    gmm_posterior = gmm_posterior_np
