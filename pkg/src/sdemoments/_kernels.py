"""Compiled single-state engine for long fixed-step propagations.

Mirrors :func:`sdemoments.propagation.propagate_batch` term by term, looping
over samples and steps in machine code. Only models that provide a compiled
jet (see ``numba_kernel`` on the model classes) can use it, and only up to
their analytic derivative order.
"""

from __future__ import annotations

import numpy as np

try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None

OK, SINGULAR, NONFINITE = 0, 1, 2
# jet identifiers; dispatching on an integer keeps run_plan cacheable on disk
KEPLER, POLYNOMIAL = 0, 1


def available() -> bool:
    return nb is not None


if nb is not None:

    @nb.njit(cache=True)
    def kepler_jet(x, t, params, order, U, G):
        """Drift/diffusion jets of the planar two-body model, orders <= 2."""
        mu = params[0]
        px, py = x[0], x[1]
        r2 = px * px + py * py
        if r2 == 0.0 or not np.isfinite(r2):
            return False
        r = np.sqrt(r2)
        inv3 = mu / (r2 * r)
        U[:, :] = 0.0
        U[0, 0] = x[2]
        U[1, 0] = x[3]
        U[2, 0] = -px * inv3
        U[3, 0] = -py * inv3
        pos = (px, py)
        if order >= 1:
            U[0, 3] = 1.0
            U[1, 4] = 1.0
            inv5 = inv3 / r2
            for i in range(2):
                for j in range(2):
                    delta = 1.0 if i == j else 0.0
                    U[2 + i, 1 + j] = -delta * inv3 + 3.0 * pos[i] * pos[j] * inv5
        if order >= 2:
            inv5 = inv3 / r2
            inv7 = inv5 / r2
            # graded-lex slots of (2,0,0,0), (1,1,0,0), (0,2,0,0)
            slots = ((5, 6), (6, 9))
            for i in range(2):
                for j in range(2):
                    for l in range(j, 2):
                        sym = 0.0
                        if i == j:
                            sym += pos[l]
                        if i == l:
                            sym += pos[j]
                        if j == l:
                            sym += pos[i]
                        U[2 + i, slots[j][l]] = 3.0 * sym * inv5 - 15.0 * pos[i] * pos[j] * pos[l] * inv7
        G[:, :, :] = 0.0
        G[2, 2, 0] = params[1]
        G[3, 3, 0] = params[2]
        return True

    @nb.njit(cache=True)
    def _poly_derivs(coeffs, x, order, out):
        for p in range(order + 1):
            acc = 0.0
            for i in range(p, coeffs.size):
                falling = 1.0
                for q in range(p):
                    falling *= i - q
                acc += coeffs[i] * falling * x ** (i - p)
            out[p] = acc

    @nb.njit(cache=True)
    def polynomial_jet(x, t, params, order, U, G):
        """Scalar polynomial drift/diffusion; ``params = [nd, drift..., diffusion...]``."""
        nd = int(params[0])
        drift = params[1 : 1 + nd]
        diff = params[1 + nd :]
        _poly_derivs(drift, x[0], order, U[0])
        _poly_derivs(diff, x[0], G.shape[2] - 1, G[0, 0])
        return True

    @nb.njit(cache=True)
    def _jet(jet_id, x, t, params, order, U, G):
        if jet_id == KEPLER:
            return kepler_jet(x, t, params, order, U, G)
        return polynomial_jet(x, t, params, order, U, G)

    @nb.njit(cache=True)
    def run_plan(
        central, tables, lin_m, lin_S, first_step, n_steps, h, t0, jet_id, params, order,
        nU, nG, fk, fm, weights, sources, targets, ident, inv_fd, inv_fg, m1, m2,
    ):
        """Advance every sample by ``n_steps``; arrays are updated in place.

        Returns ``(status, step, sample)``.
        """
        B, v = central.shape
        d = m1.size
        n_terms, nf = fk.shape
        n_pure = nU - 1
        M = n_pure + d * nG
        U = np.zeros((v, nU))
        G = np.zeros((v, d, nG))
        C = np.ones((v, M + 1))
        new = np.zeros(tables.shape[1])
        A = np.zeros((v, v))
        Bm = np.zeros((v, d))
        for b in range(B):
            x = central[b]
            tab = tables[b]
            lm = lin_m[b]
            lS = lin_S[b]
            for n in range(first_step, first_step + n_steps):
                t = t0 + (n - 1) * h
                if not _jet(jet_id, x, t, params, order, U, G):
                    return SINGULAR, n, b
                for k in range(v):
                    for p in range(1, nU):
                        C[k, p - 1] = h * U[k, p] * inv_fd[p]
                    for j in range(d):
                        for q in range(nG):
                            C[k, n_pure + j * nG + q] = G[k, j, q] * inv_fg[q]
                    C[k, ident[k]] += 1.0
                new[:] = 0.0
                for T in range(n_terms):
                    val = weights[T] * tab[sources[T]]
                    for f in range(nf):
                        val *= C[fk[T, f], fm[T, f]]
                    new[targets[T]] += val
                new[0] = 1.0
                tab[:] = new

                for k in range(v):
                    for m in range(v):
                        A[k, m] = h * U[k, 1 + m]
                    A[k, k] += 1.0
                for k in range(v):
                    for j in range(d):
                        Bm[k, j] = G[k, j, 0]
                dm = A @ lm
                kick = Bm @ m1
                S_new = A @ lS @ A.T.copy() + Bm @ m2 @ Bm.T.copy()
                for k in range(v):
                    for m in range(v):
                        S_new[k, m] += dm[k] * kick[m] + kick[k] * dm[m]
                lS[:, :] = S_new
                lm[:] = dm + kick
                for k in range(v):
                    x[k] += h * U[k, 0]
                if not (np.all(np.isfinite(tab)) and np.all(np.isfinite(x))):
                    return NONFINITE, n, b
        return OK, 0, 0
