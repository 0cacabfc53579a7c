"""Independent reference implementations used by the test suite only."""
import numpy as np

from voxmaze.nca import GeneratorParams


def naive_forward(params: GeneratorParams, x: np.ndarray) -> np.ndarray:
    """Dense-loop generator forward pass: per-voxel window gathers and
    explicit per-channel sums, written independently of the production
    im2col/matmul pipeline."""
    w1, b1, w2, b2, w3, b3 = params.layers()
    cin, w, h, d = x.shape
    hid = params.arch.hidden
    out_c = params.arch.out_channels
    padded = np.zeros((cin, w + 2, h + 2, d + 2))
    padded[:, 1:-1, 1:-1, 1:-1] = x
    out = np.zeros((out_c, w, h, d))
    for xx in range(w):
        for yy in range(h):
            for zz in range(d):
                window = padded[:, xx : xx + 3, yy : yy + 3, zz : zz + 3]
                h1 = np.zeros(hid)
                for o in range(hid):
                    h1[o] = np.sum(w1[o] * window) + b1[o]
                h1 = np.where(h1 > 0, h1, 0.0)
                h2 = np.zeros(hid)
                for o in range(hid):
                    h2[o] = float(w2[o] @ h1) + b2[o]
                h2 = np.where(h2 > 0, h2, 0.0)
                for o in range(out_c):
                    z = float(w3[o] @ h2) + b3[o]
                    out[o, xx, yy, zz] = 1.0 / (1.0 + np.exp(-z))
    return out
