"""Pure-NumPy evaluation backend.

Mirrors the compiled extension exactly: same opcodes, same active-branch
tie-breaking, same safeguarded scalar solves.  Slower on market-sized
tables (it vectorizes within groups of identical opcode sequences), but
has no build requirements.
"""

from __future__ import annotations

import numpy as np

from ._compile import OP_ETU, OP_LTU, OP_MAX, OP_MIN, OP_NTU, OP_TU, CompiledTable, Program

NAME = "python"
IS_COMPILED = False


def _run_stack(codes, arg_at, u, v, grad):
    """Evaluate one opcode sequence; ``arg_at(i, j)`` yields arg slot j of op i.

    ``u`` and ``v`` are equal-shaped arrays; argument slots may be scalars
    (single program) or arrays aligned with ``u`` (grouped table rows).
    """
    stack: list[tuple] = []
    for i, op in enumerate(codes):
        if op == OP_TU:
            val = 0.5 * (u + v - arg_at(i, 0))
            ones = np.ones_like(val)
            stack.append((val, 0.5 * ones, 0.5 * ones) if grad else (val,))
        elif op == OP_NTU:
            a = u - arg_at(i, 0)
            b = v - arg_at(i, 1)
            first = a >= b
            val = np.where(first, a, b)
            if grad:
                du = np.where(first, 1.0, 0.0)
                stack.append((val, du, 1.0 - du))
            else:
                stack.append((val,))
        elif op == OP_LTU:
            wu = arg_at(i, 0)
            wv = arg_at(i, 1)
            val = wu * u + wv * v - arg_at(i, 2)
            if grad:
                ones = np.ones_like(val)
                stack.append((val, wu * ones, wv * ones))
            else:
                stack.append((val,))
        elif op == OP_ETU:
            tau = arg_at(i, 2)
            p = (u - arg_at(i, 0)) / tau
            q = (v - arg_at(i, 1)) / tau
            val = tau * (np.logaddexp(p, q) - arg_at(i, 3))
            if grad:
                first = p >= q
                s_hi = 1.0 / (1.0 + np.exp(-np.abs(p - q)))
                du = np.where(first, s_hi, 1.0 - s_hi)
                stack.append((val, du, 1.0 - du))
            else:
                stack.append((val,))
        elif op == OP_MIN or op == OP_MAX:
            k = int(np.asarray(arg_at(i, 0)).flat[0])
            block = stack[-k:]
            del stack[-k:]
            best = block[0]
            for cand in block[1:]:
                take = cand[0] < best[0] if op == OP_MIN else cand[0] > best[0]
                best = tuple(np.where(take, c, b) for c, b in zip(cand, best))
            stack.append(best)
        else:
            raise AssertionError(f"bad opcode {op}")
    return stack[0]


def eval_points(prog: Program, u: np.ndarray, v: np.ndarray, grad: bool = False):
    """Evaluate one program over point arrays ``u``, ``v``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    args = prog.args
    res = _run_stack(prog.codes, lambda i, j: args[i, j], u, v, grad)
    if grad:
        d, du, dv = res
        return np.asarray(d, dtype=float), np.asarray(du, dtype=float), np.asarray(dv, dtype=float)
    return np.asarray(res[0], dtype=float)


def eval_table(table: CompiledTable, u: np.ndarray, v: np.ndarray, grad: bool = False):
    """Evaluate row ``i`` of the table at ``(u[i], v[i])`` for all rows."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    out = np.empty(table.size, dtype=np.float64)
    du = np.empty(table.size, dtype=np.float64) if grad else None
    dv = np.empty(table.size, dtype=np.float64) if grad else None
    for idx, length in table.groups:
        codes = table.codes[idx[0], :length]
        args = table.args[idx, :length, :]
        res = _run_stack(codes, lambda i, j: args[:, i, j], u[idx], v[idx], grad)
        out[idx] = res[0]
        if grad:
            du[idx] = res[1]
            dv[idx] = res[2]
    if grad:
        return out, du, dv
    return out


# ---------------------------------------------------------------------------
# Hot solver sweeps (vectorized safeguarded Newton / bisection)


def ipfp_sweep(
    table: CompiledTable,
    n_rows: int,
    n_cols: int,
    row_side: bool,
    sigma: float,
    targets: np.ndarray,
    w_other: np.ndarray,
    log_guess: np.ndarray,
    ftol: np.ndarray,
) -> np.ndarray:
    """Solve the single-side rebalancing equations of the fixed-point solver.

    For every type ``i`` on the active side, finds ``log mu_i0`` solving

        exp(l) + sum_j M_ij(exp(l), mu_j_other) = target_i,

    where ``M = exp(-D(-sigma*l, w_other)/sigma)`` on the row side (and
    with swapped arguments on the column side) and ``w_other`` holds
    ``-sigma * log`` of the frozen side's masses.  The left side is
    strictly increasing in ``l``, so a bracketed Newton iteration with
    bisection fallback is used; working in log space keeps masses
    positive and reaches roots many orders of magnitude below the
    populations in a few bracket expansions.
    """
    if row_side:
        n_active = n_rows
        w_flat = np.tile(w_other, n_rows)
        expand = lambda l_vec: np.repeat(l_vec, n_cols)
        reduce_ = lambda cell: cell.reshape(n_rows, n_cols).sum(axis=1)
    else:
        n_active = n_cols
        w_flat = np.repeat(w_other, n_cols)
        expand = lambda l_vec: np.tile(l_vec, n_rows)
        reduce_ = lambda cell: cell.reshape(n_rows, n_cols).sum(axis=0)

    def f_and_fp(l_vec):
        own = -sigma * expand(l_vec)
        if row_side:
            d, dd, _ = eval_table(table, own, w_flat, grad=True)
        else:
            d, _, dd = eval_table(table, w_flat, own, grad=True)
        with np.errstate(over="ignore"):
            m = np.exp(-d / sigma)
        el = np.exp(l_vec)
        return el + reduce_(m) - targets, el + reduce_(m * dd)

    hi = np.log(targets)
    lo = np.minimum(log_guess, hi)
    f_lo, _ = f_and_fp(lo)
    # expand the lower bracket geometrically until the residual is negative
    step = np.ones(n_active)
    for _ in range(200):
        bad = f_lo > 0.0
        if not bad.any():
            break
        hi = np.where(bad & (lo < hi), lo, hi)
        lo = np.where(bad, lo - step, lo)
        step = np.where(bad, step * 2.0, step)
        f_lo, _ = f_and_fp(lo)

    x = 0.5 * (lo + hi)
    for _ in range(300):
        f, fp = f_and_fp(x)
        done = np.abs(f) <= ftol
        if done.all():
            break
        lo = np.where(f < 0.0, x, lo)
        hi = np.where(f > 0.0, x, hi)
        with np.errstate(all="ignore"):
            newton = x - f / fp
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        x = np.where(done, x, np.where(ok, newton, 0.5 * (lo + hi)))
        if np.max(hi - lo) < 1e-16:
            break
    return x


def _lse_excluding_own(vals: np.ndarray, axis: int) -> np.ndarray:
    """``log(1 + sum_others exp(vals))`` along ``axis``, own entry excluded.

    Stable for arbitrarily large entries; used for the frozen softmax
    denominators of the per-cell wedge solves.
    """
    X, Y = vals.shape
    if axis == 1:
        t = np.broadcast_to(vals[:, None, :], (X, Y, Y)).copy()
        i = np.arange(Y)
        t[:, i, i] = -np.inf
        rest = np.logaddexp.reduce(t, axis=2)
    else:
        t = np.broadcast_to(vals.T[:, None, :], (Y, X, X)).copy()
        i = np.arange(X)
        t[:, i, i] = -np.inf
        rest = np.logaddexp.reduce(t, axis=2).T
    return np.logaddexp(0.0, rest)


def jacobi_sweep(
    table: CompiledTable,
    W: np.ndarray,
    n: np.ndarray,
    m: np.ndarray,
    clamp_lo: np.ndarray,
    clamp_hi: np.ndarray,
    ztol: float,
) -> np.ndarray:
    """One simultaneous sweep of per-cell wedge root solves.

    Every cell solves its own excess-demand equation with all other
    wedges frozen at the incoming values; softmax denominators exclude
    the cell's own contribution, so each 1-D problem is strictly
    decreasing in the cell's wedge.  Updates are clamped to the
    admissible wedge range; when the root lies outside, the clamp value
    is returned.
    """
    X, Y = len(n), len(m)
    Wf = W.ravel()
    zeros = np.zeros_like(Wf)
    U = (-eval_table(table, zeros, -Wf)).reshape(X, Y)
    V = U - W
    r_u = _lse_excluding_own(U, axis=1).ravel()
    r_v = _lse_excluding_own(V, axis=0).ravel()
    n_cell = np.repeat(n, Y)
    m_cell = np.tile(m, X)

    def z_of(w):
        u_w = -eval_table(table, zeros, -w)
        v_w = u_w - w
        supply = n_cell * np.exp(u_w - np.logaddexp(r_u, u_w))
        demand = m_cell * np.exp(v_w - np.logaddexp(r_v, v_w))
        return demand - supply

    hi = np.minimum(Wf, clamp_hi)
    z_hi = z_of(hi)
    # push upward where the incoming wedge does not yet over-supply
    step = np.ones_like(hi)
    for _ in range(140):
        bad = (z_hi > 0.0) & (hi < clamp_hi)
        if not bad.any():
            break
        hi = np.where(bad, np.minimum(hi + step, clamp_hi), hi)
        step = np.where(bad, step * 2.0, step)
        z_hi = np.where(bad, z_of(hi), z_hi)

    lo = hi.copy()
    z_lo = z_hi.copy()
    step = np.ones_like(lo)
    for _ in range(200):
        bad = (z_lo < 0.0) & (lo > clamp_lo)
        if not bad.any():
            break
        lo = np.where(bad, np.maximum(lo - step, clamp_lo), lo)
        step = np.where(bad, step * 2.0, step)
        z_lo = np.where(bad, z_of(lo), z_lo)

    # roots outside the admissible range stick to the nearest clamp
    stuck_lo = z_lo < 0.0
    stuck_hi = z_hi > 0.0

    # Illinois hybrid: false-position steps with stale-endpoint halving,
    # periodic bisection as a safeguard (z is decreasing on [lo, hi])
    side = np.zeros(len(Wf))
    x = 0.5 * (lo + hi)
    for it in range(120):
        z = z_of(x)
        done = np.abs(z) <= ztol
        if done.all():
            break
        take_lo = z > 0.0
        z_lo = np.where(take_lo, z, np.where(side > 0.0, 0.5 * z_lo, z_lo))
        z_hi = np.where(~take_lo, z, np.where(side < 0.0, 0.5 * z_hi, z_hi))
        lo = np.where(take_lo, x, lo)
        hi = np.where(~take_lo, x, hi)
        side = np.where(take_lo, 1.0, -1.0)
        width = hi - lo
        if np.max(width / np.maximum(1.0, np.abs(x))) <= 1e-15:
            break
        with np.errstate(all="ignore"):
            frac = z_lo / (z_lo - z_hi)
        frac = np.clip(np.nan_to_num(frac, nan=0.5), 1e-3, 1.0 - 1e-3)
        cand = lo + width * frac if it % 4 else 0.5 * (lo + hi)
        x = np.where(done, x, cand)
    x = np.where(stuck_lo, clamp_lo, x)
    x = np.where(stuck_hi, np.where(np.isfinite(clamp_hi), clamp_hi, hi), x)
    return x
