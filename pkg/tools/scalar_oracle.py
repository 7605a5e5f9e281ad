"""
Plain-loop deformable aggregation, independent of the src package.

Used by the tests as a second opinion on the vectorized kernels: one
Python loop per output element, per sample point, per bilinear corner,
all in float64. The module pieces (layer norm, GELU, dense layers) are
written the same way.

    python tools/scalar_oracle.py      # prints a tiny self-check
"""
import math

import numpy as np


def _grid(k):
    r = range(-(k // 2), k // 2 + 1)
    return [(dy, dx) for dy in r for dx in r]


def _sample(x, n, y, xx, c):
    H, W = x.shape[1], x.shape[2]
    y0, x0 = math.floor(y), math.floor(xx)
    ly, lx = y - y0, xx - x0
    total = 0.0
    for yy, xc, wgt in ((y0, x0, (1 - ly) * (1 - lx)), (y0, x0 + 1, (1 - ly) * lx),
                        (y0 + 1, x0, ly * (1 - lx)), (y0 + 1, x0 + 1, ly * lx)):
        if 0 <= yy < H and 0 <= xc < W:
            total += wgt * float(x[n, yy, xc, c])
    return total


def dcn_forward(x, off, w, groups, k, softmax=False, offset_scale=1.0):
    """
    x (N,H,W,C), off (N,H,W,G,K,2) as (dy, dx), w (N,H,W,G,K).
    Returns float64 (N,H,W,C).
    """
    x = np.asarray(x, dtype=np.float64)
    off = np.asarray(off, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    N, H, W, C = x.shape
    D = C // groups
    grid = _grid(k)
    y = np.zeros((N, H, W, C))
    for n in range(N):
        for h in range(H):
            for wi in range(W):
                for g in range(groups):
                    m = [float(v) for v in w[n, h, wi, g]]
                    if softmax:
                        top = max(m)
                        e = [math.exp(v - top) for v in m]
                        m = [v / sum(e) for v in e]
                    for c in range(g * D, (g + 1) * D):
                        acc = 0.0
                        for kk, (dy, dx) in enumerate(grid):
                            py = h + dy + offset_scale * off[n, h, wi, g, kk, 0]
                            px = wi + dx + offset_scale * off[n, h, wi, g, kk, 1]
                            acc += m[kk] * _sample(x, n, py, px, c)
                        y[n, h, wi, c] = acc
    return y


def dwconv(x, taps):
    """Depthwise k x k correlation, zero padded, stride 1. taps (k,k,C)."""
    x = np.asarray(x, dtype=np.float64)
    N, H, W, C = x.shape
    k = taps.shape[0]
    p = k // 2
    y = np.zeros_like(x)
    for n in range(N):
        for h in range(H):
            for wi in range(W):
                for c in range(C):
                    acc = 0.0
                    for i in range(k):
                        for j in range(k):
                            yy, xc = h + i - p, wi + j - p
                            if 0 <= yy < H and 0 <= xc < W:
                                acc += float(taps[i, j, c]) * float(x[n, yy, xc, c])
                    y[n, h, wi, c] = acc
    return y


def v4_branch(x, dw_w, fused_w, fused_b, groups, k):
    """v4 offset/weight branch: [dw] -> one linear C->3GK, split [2GK offsets | GK weights]."""
    x = np.asarray(x, dtype=np.float64)
    h = dwconv(x, dw_w) if dw_w is not None else x
    out = h @ np.asarray(fused_w, dtype=np.float64) + np.asarray(fused_b, dtype=np.float64)
    N, H, W = x.shape[:3]
    K = k * k
    off = out[..., :2 * groups * K].reshape(N, H, W, groups, K, 2)
    wt = out[..., 2 * groups * K:].reshape(N, H, W, groups, K)
    return off, wt


def _dense(h, w, b):
    """Per-pixel h @ w + b, one output column at a time."""
    h = np.asarray(h, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    N, H, W, C = h.shape
    out = np.zeros((N, H, W, w.shape[1]))
    for n in range(N):
        for y in range(H):
            for xx in range(W):
                row = [float(v) for v in h[n, y, xx]]
                for j in range(w.shape[1]):
                    acc = float(b[j])
                    for c in range(C):
                        acc += row[c] * float(w[c, j])
                    out[n, y, xx, j] = acc
    return out


def _ln_gelu(h, scale, shift, eps):
    """Layer norm over channels, then the exact erf GELU."""
    N, H, W, C = h.shape
    out = np.zeros_like(h)
    for n in range(N):
        for y in range(H):
            for xx in range(W):
                row = [float(v) for v in h[n, y, xx]]
                mean = sum(row) / C
                var = sum((v - mean) ** 2 for v in row) / C
                inv = 1.0 / math.sqrt(var + eps)
                for c in range(C):
                    z = (row[c] - mean) * inv * float(scale[c]) + float(shift[c])
                    out[n, y, xx, c] = 0.5 * z * (1.0 + math.erf(z / math.sqrt(2.0)))
    return out


def v3_branch(x, params, groups, k, eps=1e-6):
    """v3 offset/weight branch: dw -> LN -> GELU -> linear C->2GK and linear C->GK (logits)."""
    x = np.asarray(x, dtype=np.float64)
    N, H, W = x.shape[:3]
    K = k * k
    h = _ln_gelu(dwconv(x, params["dw_w"]), params["ln_scale"], params["ln_shift"], eps)
    off = _dense(h, params["offset_w"], params["offset_b"]).reshape(N, H, W, groups, K, 2)
    logits = _dense(h, params["weight_w"], params["weight_b"]).reshape(N, H, W, groups, K)
    return off, logits


def module_forward(x, params, style, groups, k, eps=1e-6):
    """
    Whole module: [input proj] -> branch on x -> aggregation of the
    projected value -> [output proj]. params maps tensor names to arrays;
    style is "v3", "v4" or "v4-lightweight".
    """
    x = np.asarray(x, dtype=np.float64)
    proj = style != "v4-lightweight"
    value = _dense(x, params["input_proj_w"], params["input_proj_b"]) if proj else x
    if style == "v3":
        off, wt = v3_branch(x, params, groups, k, eps)
    else:
        off, wt = v4_branch(x, params.get("dw_w"), params["fused_w"], params["fused_b"], groups, k)
    core = dcn_forward(value, off, wt, groups, k, softmax=style == "v3")
    return _dense(core, params["output_proj_w"], params["output_proj_b"]) if proj else core


if __name__ == "__main__":
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4, 1)
    off = np.zeros((1, 4, 4, 1, 1, 2))
    off[..., 0, 1] = 0.5
    y = dcn_forward(x, off, np.ones((1, 4, 4, 1, 1)), groups=1, k=1)
    print(y[0, :, :, 0])
