"""Compiled inner loops for the conditional-mean recursions and likelihoods.

All kernels work on full-length arrays and only evaluate positions
``t >= start``; earlier entries of ``lam`` are taken from ``init``.
"""
import math

import numpy as np
from numba import njit

LAMBDA_FLOOR = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def cond_mean(x, z, branch, omega, alpha, beta, gamma, start, init):
    # alpha (B, p) acts on x, beta (B, q) on lam, gamma (B, g) on z
    n = x.shape[0]
    lam = np.empty(n)
    for t in range(min(start, n)):
        lam[t] = init[t]
    p = alpha.shape[1]
    q = beta.shape[1]
    g = gamma.shape[1]
    for t in range(start, n):
        b = branch[t]
        v = omega[b]
        for i in range(p):
            v += alpha[b, i] * x[t - 1 - i]
        for j in range(q):
            v += beta[b, j] * lam[t - 1 - j]
        for k in range(g):
            v += gamma[b, k] * z[t - 1 - k]
        lam[t] = v
    return lam


@njit(cache=True)
def exp_loglik(x, lam, start):
    s = 0.0
    for t in range(start, x.shape[0]):
        v = lam[t]
        if v < LAMBDA_FLOOR:
            v = LAMBDA_FLOOR
        s -= math.log(v) + x[t] / v
    return s


@njit(cache=True)
def lognormal_loglik(x, lam, branch, theta2, start):
    s = 0.0
    for t in range(start, x.shape[0]):
        v = lam[t]
        if v < LAMBDA_FLOOR:
            v = LAMBDA_FLOOR
        th = theta2[branch[t]]
        lx = math.log(x[t])
        dev = lx - math.log(v) + 0.5 * th
        s -= 0.5 * (_LOG_2PI + math.log(th) + 2.0 * lx + dev * dev / th)
    return s


@njit(cache=True)
def simulate_threshold(eps, split, branch_rule, l, d, threshold,
                       omega, alpha, beta, start, lam0):
    """Generate R, ru, rd sequentially for single-series families.

    branch_rule: 0 single branch, 1 up/down count over ``l`` days,
    2 lagged total range against ``threshold`` with delay ``d``.
    ``eps`` has shape (B, n): the innovation to use under each branch.
    """
    n = eps.shape[1]
    r = np.empty(n)
    ru = np.empty(n)
    rd = np.empty(n)
    lam = np.empty(n)
    branch = np.zeros(n, dtype=np.int64)
    p = alpha.shape[1]
    q = beta.shape[1]
    for t in range(n):
        if t < start:
            b = 0
            v = lam0
        else:
            if branch_rule == 1:
                cu = 0
                for i in range(1, l + 1):
                    if ru[t - i] >= rd[t - i]:
                        cu += 1
                b = 0 if 2 * cu >= l else 1
            elif branch_rule == 2:
                b = 0 if r[t - d] >= threshold else 1
            else:
                b = 0
            v = omega[b]
            for i in range(p):
                v += alpha[b, i] * r[t - 1 - i]
            for j in range(q):
                v += beta[b, j] * lam[t - 1 - j]
        branch[t] = b
        lam[t] = v
        total = v * eps[b, t]
        ru[t] = split[t] * total
        rd[t] = total - ru[t]
        r[t] = ru[t] + rd[t]
        if r[t] > 1e12:
            raise OverflowError("simulated range exceeded 1e12")
    return r, ru, rd, lam, branch


@njit(cache=True)
def cond_mean_flat(x, r, z, branch, off, stride, p, q, g, start, init):
    """Recursion reading coefficients straight from the flat vector ``x``.

    Branch ``b`` coefficients start at ``x[off + b * stride]``.
    """
    n = r.shape[0]
    lam = np.empty(n)
    for t in range(min(start, n)):
        lam[t] = init[t]
    if p == 1 and q == 1 and g == 0 and start >= 1:
        prev = lam[start - 1]
        for t in range(start, n):
            base = off + branch[t] * stride
            prev = x[base] + x[base + 1] * r[t - 1] + x[base + 2] * prev
            lam[t] = prev
        return lam
    for t in range(start, n):
        base = off + branch[t] * stride
        v = x[base]
        for i in range(p):
            v += x[base + 1 + i] * r[t - 1 - i]
        for j in range(q):
            v += x[base + 1 + p + j] * lam[t - 1 - j]
        for k in range(g):
            v += x[base + 1 + p + q + k] * z[t - 1 - k]
        lam[t] = v
    return lam


@njit(cache=True)
def free_to_native(u, fixed_values, pos_native, pos_slot, grp_ptr, grp_native, grp_slot, budgets):
    """Unconstrained optimiser coordinates to native parameters.

    Positive scalars are ``exp(u)``; each stationarity group maps onto the
    open simplex scaled by its budget.
    """
    x = fixed_values.copy()
    for k in range(pos_native.shape[0]):
        v = u[pos_slot[k]]
        if v > 700.0:
            v = 700.0
        x[pos_native[k]] = math.exp(v)
    for gi in range(budgets.shape[0]):
        a = grp_ptr[gi]
        b = grp_ptr[gi + 1]
        if b == a:
            continue
        m = 0.0
        for k in range(a, b):
            if u[grp_slot[k]] > m:
                m = u[grp_slot[k]]
        denom = math.exp(-m)
        for k in range(a, b):
            denom += math.exp(u[grp_slot[k]] - m)
        for k in range(a, b):
            x[grp_native[k]] = budgets[gi] * math.exp(u[grp_slot[k]] - m) / denom
    return x
