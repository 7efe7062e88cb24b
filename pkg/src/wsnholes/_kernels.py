"""Compiled inner loops for the spring model.

All kernels take the dense stiffness ``k`` and rest-length ``l`` matrices;
pairs with ``k == 0`` (unreachable, or the diagonal) contribute nothing.
"""

import math

import numpy as np
from numba import njit

_PHI1 = 0.6180339887498949
_PHI2 = 0.4142135623730951


@njit(cache=True)
def singular_direction(v, u):
    """Unit vector pointing from u to v, used when the two coincide.

    Derived from the node IDs only and antisymmetric in (v, u).
    """
    a = min(v, u)
    b = max(v, u)
    frac = (a * _PHI1 + b * _PHI2) % 1.0
    theta = 2.0 * math.pi * frac
    sign = 1.0 if v == a else -1.0
    return sign * math.cos(theta), sign * math.sin(theta)


@njit(cache=True)
def pair_gradient(xv, yv, xu, yu, k, l, v, u):
    dx = xv - xu
    dy = yv - yu
    dist = math.sqrt(dx * dx + dy * dy)
    if dist > 0.0:
        f = k * (dist - l) / dist
        return f * dx, f * dy
    ex, ey = singular_direction(v, u)
    return -k * l * ex, -k * l * ey


@njit(cache=True)
def full_gradient(pos, nodes, k, l, out):
    """out[v] = dE/dp_v over pairs inside ``nodes`` (rows outside untouched)."""
    m = nodes.shape[0]
    for i in range(m):
        v = nodes[i]
        gx = 0.0
        gy = 0.0
        for j in range(m):
            u = nodes[j]
            kv = k[v, u]
            if u == v or kv == 0.0:
                continue
            cx, cy = pair_gradient(pos[v, 0], pos[v, 1], pos[u, 0], pos[u, 1], kv, l[v, u], v, u)
            gx += cx
            gy += cy
        out[v, 0] = gx
        out[v, 1] = gy


@njit(cache=True)
def update_gradient(pos, old, moved, nodes, is_moved, k, l, grad):
    """Patch ``grad`` after the nodes in ``moved`` went from ``old`` to ``pos``."""
    # moved nodes: recompute from scratch
    for a in range(moved.shape[0]):
        v = moved[a]
        gx = 0.0
        gy = 0.0
        for j in range(nodes.shape[0]):
            u = nodes[j]
            kv = k[v, u]
            if u == v or kv == 0.0:
                continue
            cx, cy = pair_gradient(pos[v, 0], pos[v, 1], pos[u, 0], pos[u, 1], kv, l[v, u], v, u)
            gx += cx
            gy += cy
        grad[v, 0] = gx
        grad[v, 1] = gy
    # everyone else: swap the old contribution of each mover for the new one
    for j in range(nodes.shape[0]):
        v = nodes[j]
        if is_moved[v]:
            continue
        gx = 0.0
        gy = 0.0
        for a in range(moved.shape[0]):
            u = moved[a]
            kv = k[v, u]
            if kv == 0.0:
                continue
            nx, ny = pair_gradient(pos[v, 0], pos[v, 1], pos[u, 0], pos[u, 1], kv, l[v, u], v, u)
            ox, oy = pair_gradient(pos[v, 0], pos[v, 1], old[a, 0], old[a, 1], kv, l[v, u], v, u)
            gx += nx - ox
            gy += ny - oy
        grad[v, 0] += gx
        grad[v, 1] += gy


@njit(cache=True)
def energy(pos, nodes, k, l):
    m = nodes.shape[0]
    total = 0.0
    for i in range(m):
        v = nodes[i]
        for j in range(i + 1, m):
            u = nodes[j]
            kv = k[v, u]
            if kv == 0.0:
                continue
            dx = pos[v, 0] - pos[u, 0]
            dy = pos[v, 1] - pos[u, 1]
            r = math.sqrt(dx * dx + dy * dy) - l[v, u]
            total += 0.5 * kv * r * r
    return total


def warm_up():
    """Trigger compilation on a toy problem."""
    pos = np.array([[0.0, 0.0], [1.0, 0.0]])
    nodes = np.array([0, 1], dtype=np.int64)
    k = np.array([[0.0, 1.0], [1.0, 0.0]])
    l = k.copy()
    grad = np.zeros_like(pos)
    full_gradient(pos, nodes, k, l, grad)
    mask = np.array([True, False])
    update_gradient(pos, pos[:1].copy(), nodes[:1], nodes, mask, k, l, grad)
    energy(pos, nodes, k, l)
