"""Independent reference implementations used only by the tests.

Written from the layer formulas with plain Python loops so they share no
code path with the vectorised package implementation.
"""
import math


def linear_layers(params, d, width, blocks, v):
    """Slice a flat parameter list into (W rows, b) per layer, canonical order."""
    shapes = [(width, d)] + [(width, width)] * (2 * blocks) + [(v, width)]
    out, k = [], 0
    for o, i in shapes:
        W = [[float(params[k + r * i + c]) for c in range(i)] for r in range(o)]
        k += o * i
        b = [float(params[k + r]) for r in range(o)]
        k += o
        out.append((W, b))
    assert k == len(params)
    return out


def affine(W, b, x):
    return [sum(W[r][c] * x[c] for c in range(len(x))) + b[r] for r in range(len(W))]


def straight_line_forward(params, x, d, width, blocks, v, omega0, scales=None):
    """Evaluate the residual sine MLP on one point.

    ``scales`` optionally maps block index to a per-unit multiplier applied to
    the block output (a dropout mask already divided by the keep probability).
    """
    layers = linear_layers(params, d, width, blocks, v)
    h = [math.sin(omega0 * z) for z in affine(*layers[0], list(x))]
    for k in range(blocks):
        a = [math.sin(omega0 * z) for z in affine(*layers[1 + 2 * k], h)]
        f = [math.sin(omega0 * z) for z in affine(*layers[2 + 2 * k], a)]
        h = [hi + fi for hi, fi in zip(h, f)]
        if scales is not None and k in scales:
            h = [hi * s for hi, s in zip(h, scales[k])]
    return affine(*layers[-1], h)


def adam_scalar(theta, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Spreadsheet-style scalar Adam recurrence; returns theta after each step."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
        out.append(theta)
    return out


def brute_chamfer(A, B):
    def nearest(p, S):
        return min(math.dist(p, q) for q in S)
    ab = sum(nearest(a, B) for a in A) / len(A)
    ba = sum(nearest(b, A) for b in B) / len(B)
    return 0.5 * (ab + ba)


def brute_hausdorff(A, B):
    best = 0.0
    for a in A:
        best = max(best, min(math.dist(a, b) for b in B))
    for b in B:
        best = max(best, min(math.dist(a, b) for a in A))
    return best


def two_pass_std(values):
    n = len(values)
    mu = sum(values) / n
    return math.sqrt(sum((x - mu) ** 2 for x in values) / n)


def finite_difference_gradient(fun, params, h=1e-6):
    grad = []
    for i in range(len(params)):
        up = params.copy()
        dn = params.copy()
        up[i] += h
        dn[i] -= h
        grad.append((fun(up) - fun(dn)) / (2 * h))
    return grad
