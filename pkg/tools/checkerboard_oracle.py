#!/usr/bin/env python3
"""Standalone oracle: effective conductivity of the random two-phase
checkerboard by a periodic fine-grid cell solve.

Independent of the package's variational engine: plain 5-point finite
differences on the torus, conjugate gradient, effective tensor from the
mean flux of the two corrector problems.  For the fair iid mix of phases
(alpha, beta) the self-duality argument pins the value at sqrt(alpha*beta).

Usage: python checkerboard_oracle.py [grid_side] [n_samples]
"""

import sys

import numpy as np


def periodic_effective(a_cells, rtol=1e-10):
    """Effective 2x2 tensor of one periodic sample by edge-based FD."""
    n = a_cells.shape[0]
    # edge conductances: harmonic means of the two adjacent cells
    ax = 2.0 / (1.0 / a_cells + 1.0 / np.roll(a_cells, -1, axis=0))
    ay = 2.0 / (1.0 / a_cells + 1.0 / np.roll(a_cells, -1, axis=1))

    def apply_op(u):
        dx = np.roll(u, -1, axis=0) - u
        dy = np.roll(u, -1, axis=1) - u
        fx = ax * dx
        fy = ay * dy
        return -(fx - np.roll(fx, 1, axis=0) + fy - np.roll(fy, 1, axis=1))

    eff = np.zeros((2, 2))
    for k, e in enumerate((np.array([1.0, 0.0]), np.array([0.0, 1.0]))):
        b = -(apply_rhs(ax, ay, e))
        u = np.zeros_like(a_cells)
        r = b - apply_op(u)
        p = r.copy()
        rs = (r * r).sum()
        b_norm = np.sqrt((b * b).sum())
        for _ in range(20 * n * n):
            Ap = apply_op(p)
            alpha = rs / (p * Ap).sum()
            u += alpha * p
            r -= alpha * Ap
            rs_new = (r * r).sum()
            if np.sqrt(rs_new) <= rtol * b_norm:
                break
            p = r + (rs_new / rs) * p
            rs = rs_new
        dx = np.roll(u, -1, axis=0) - u + e[0]
        dy = np.roll(u, -1, axis=1) - u + e[1]
        eff[:, k] = [np.mean(ax * dx), np.mean(ay * dy)]
    return 0.5 * (eff + eff.T)


def apply_rhs(ax, ay, e):
    fx = ax * e[0]
    fy = ay * e[1]
    return -(fx - np.roll(fx, 1, axis=0) + fy - np.roll(fy, 1, axis=1))


def checkerboard_effective(alpha=1.0, beta=4.0, n=96, samples=8, seed=0):
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(samples):
        cells = np.where(rng.random((n, n)) < 0.5, alpha, beta)
        eff = periodic_effective(cells)
        vals.append(0.5 * np.trace(eff))
    return float(np.mean(vals)), float(np.std(vals) / np.sqrt(samples))


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 96
    samples = int(sys.argv[2]) if len(sys.argv) > 2 else 8
    mean, se = checkerboard_effective(n=n, samples=samples)
    print(f"effective conductivity: {mean:.6f} +- {se:.6f}")
    print(f"duality value sqrt(1*4) = 2.0; relative gap {(mean - 2.0) / 2.0:+.4%}")
