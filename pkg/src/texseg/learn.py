"""Filter-bank learning by geometric conjugate gradients.

The data term rewards filters whose responses change little between a patch
and its stencil-shifted copies inside homogeneous texture: per patch and
direction it accumulates log(1 + nu * ||sigma(response_shifted) -
sigma(response_center)||^2) with sigma(x) = log(1 + mu x^2), direction-weighted
and averaged over patches.  Two soft penalties keep the bank useful: a
coherence barrier -log(1 - <phi_i, phi_j>^2) over filter pairs pushes filters
apart, and a centering barrier on each filter's spatial mass centroid keeps
its energy away from the template border.

Minimization runs on the product manifold from `manifold`: Euclidean
gradient, tangent projection, Polak-Ribiere+ conjugate directions combined
via parallel transport, Armijo backtracking along exact geodesics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifold import FilterBank, geodesic_step, parallel_transport, project_tangent, random_init


@dataclass
class LearnParams:
    mu: float = 2000.0  # response-gain inside sigma
    nu: float = 2000.0  # contrast gain on the per-patch feature distance
    lam: float = 10.0  # coherence penalty weight
    kappa: float = 10.0  # centroid penalty weight
    grad_tol: float = 1e-5  # stop when the Riemannian gradient norm drops below
    max_iters: int = 1000
    armijo: tuple = (1.0, 0.5, 1e-4)  # initial step, shrink factor, slope fraction


@dataclass
class IterRecord:
    iteration: int
    objective: float
    data_term: float
    coherence: float
    centering: float
    grad_norm: float
    step: float


@dataclass
class LearnResult:
    bank: FilterBank
    iterations: int
    objective: float
    grad_norm: float
    status: str  # converged | max_iters | line_search_failed
    trace: list = field(default_factory=list)


def sigma(x, mu):
    """Even, bounded-growth response nonlinearity log(1 + mu x^2)."""
    return np.log1p(mu * np.square(x))


def _collapse_channels(patches):
    """Patch stacks as (n, M) matrices with channels summed.

    Filters are tied across channels and their responses summed, which equals
    responding to the channel-sum patch; collapsing once up front lets the
    objective and gradient work with plain matrix products.
    """
    u0 = np.ascontiguousarray(patches.center.sum(axis=2).T)
    us = tuple(np.ascontiguousarray(p.sum(axis=2).T) for p in patches.directional)
    return u0, us


def objective_f(bank, patches, stencil, params):
    """Direction-weighted mean of log(1 + nu ||sigma-feature jump||^2)."""
    u0, us = _collapse_channels(patches)
    m = u0.shape[1]
    cols = bank.columns
    if cols.shape[1] == 0:
        return 0.0
    sb = sigma(cols.T @ u0, params.mu)
    total = 0.0
    for w, u_s in zip(stencil.weights, us):
        d = sigma(cols.T @ u_s, params.mu) - sb
        sq = np.einsum("km,km->m", d, d)
        total += w * float(np.sum(np.log1p(params.nu * sq)))
    return total / m


def penalty_r(bank):
    """Coherence barrier -sum_{i<j} log(1 - <phi_i, phi_j>^2); +inf if collinear."""
    cols = bank.columns
    k = cols.shape[1]
    if k < 2:
        return 0.0
    gram = cols.T @ cols
    iu = np.triu_indices(k, 1)
    g2 = np.square(gram[iu])
    if np.any(g2 >= 1.0):
        return float("inf")
    return float(-np.sum(np.log1p(-g2)))


def _moment_axes(side):
    """1-based row and column index of each template entry, flattened row-major."""
    idx = np.arange(side * side)
    px = idx // side + 1.0
    py = idx % side + 1.0
    return px, py


def compute_centroid(filt, side):
    """Normalized spatial mass centroid of one filter.

    Mass is the squared coefficient; raw moments are shifted/scaled so that the
    template center maps to 0 and the borders to -1/+1.
    """
    px, py = _moment_axes(side)
    w = np.square(np.asarray(filt, dtype=np.float64))
    shift = (side + 1.0) / 2.0
    half = (side - 1.0) / 2.0
    cx = (float(px @ w) - shift) / half
    cy = (float(py @ w) - shift) / half
    return cx, cy


def _centroids(cols, side):
    px, py = _moment_axes(side)
    w = np.square(cols)
    shift = (side + 1.0) / 2.0
    half = (side - 1.0) / 2.0
    cx = (px @ w - shift) / half
    cy = (py @ w - shift) / half
    return cx, cy


def penalty_h(bank):
    """Centering barrier: log-barriers on both centroid coordinates plus a
    quadratic tie pulling them toward each other."""
    cols = bank.columns
    if cols.shape[1] == 0:
        return 0.0
    cx, cy = _centroids(cols, bank.side)
    if np.any(np.abs(cx) >= 1.0) or np.any(np.abs(cy) >= 1.0):
        return float("inf")
    barriers = -np.log((1.0 - np.square(cx)) * (1.0 - np.square(cy)))
    return float(np.sum(barriers + 0.5 * np.square(cx - cy)))


def objective_terms(bank, patches, stencil, params):
    """Total objective and its three pieces: (E, f, r, h)."""
    fv = objective_f(bank, patches, stencil, params)
    rv = penalty_r(bank)
    hv = penalty_h(bank)
    ev = fv + params.lam * rv + params.kappa * hv
    return ev, fv, rv, hv


def grad_e(bank, patches, stencil, params):
    """Euclidean (ambient) gradient of the full objective, shape n x K."""
    cols = bank.columns
    n, k = cols.shape
    grad = np.zeros((n, k))
    if k == 0:
        return grad
    mu, nu = params.mu, params.nu

    u0, us = _collapse_channels(patches)
    m = u0.shape[1]
    b = cols.T @ u0
    sb = sigma(b, mu)
    qb = b / (1.0 + mu * np.square(b))
    for w, u_s in zip(stencil.weights, us):
        a = cols.T @ u_s
        d = sigma(a, mu) - sb
        den = 1.0 + nu * np.einsum("km,km->m", d, d)
        s = d / den
        ga = s * (a / (1.0 + mu * np.square(a)))
        gb = s * qb
        grad += (4.0 * nu * mu * w / m) * (u_s @ ga.T - u0 @ gb.T)

    if k >= 2:
        gram = cols.T @ cols
        g2 = np.square(gram)
        np.fill_diagonal(g2, 0.0)
        coupling = 2.0 * gram / (1.0 - g2)
        np.fill_diagonal(coupling, 0.0)
        grad += params.lam * (cols @ coupling)

    px, py = _moment_axes(bank.side)
    cx, cy = _centroids(cols, bank.side)
    half = (bank.side - 1.0) / 2.0
    gx = px[:, None] * cols
    gy = py[:, None] * cols
    coefx = cx / (1.0 - np.square(cx))
    coefy = cy / (1.0 - np.square(cy))
    tie = 0.5 * (cx - cy)
    grad += (params.kappa * 4.0 / half) * (
        gx * coefx[None, :] + gy * coefy[None, :] + (gx - gy) * tie[None, :]
    )
    return grad


def riemannian_grad(bank, patches, stencil, params):
    return project_tangent(bank, grad_e(bank, patches, stencil, params))


def _frob(x):
    return float(np.sqrt(np.sum(np.square(x))))


def cg_learn(
    patches,
    stencil,
    params=None,
    k=5,
    seed=0,
    include_mean=True,
    inspect_cb=None,
):
    """Learn k filters from a patch set; returns bank + convergence record.

    inspect_cb, when given, is called after every accepted step with
    (bank, riem_grad, step, transport_checks) where transport_checks pairs the
    norms of transported tangents with their pre-transport norms -- used by
    invariant tests, ignored otherwise.
    """
    if params is None:
        params = LearnParams()
    side = patches.filter_side
    bank = random_init(side, k, seed)
    if k == 0:
        return LearnResult(
            bank=FilterBank(bank.columns, side, include_mean),
            iterations=0,
            objective=0.0,
            grad_norm=0.0,
            status="converged",
            trace=[],
        )

    t0, shrink, c1 = params.armijo
    max_halvings = 40
    restart_every = bank.n * k

    ev, fv, rv, hv = objective_terms(bank, patches, stencil, params)
    g = riemannian_grad(bank, patches, stencil, params)
    direction = -g
    since_restart = 0
    t_init = t0
    status = "max_iters"
    steps = 0
    trace = []

    while steps < params.max_iters:
        gnorm = _frob(g)
        if gnorm < params.grad_tol:
            status = "converged"
            break

        slope = float(np.sum(g * direction))
        is_steepest = False
        if slope >= 0.0 or since_restart >= restart_every:
            direction = -g
            slope = -gnorm * gnorm
            since_restart = 0
            is_steepest = True

        accepted = False
        while True:
            t = t_init
            for _ in range(max_halvings):
                cand = geodesic_step(bank, direction, t)
                ev_new, fv_new, rv_new, hv_new = objective_terms(cand, patches, stencil, params)
                if np.isfinite(ev_new) and ev_new <= ev + c1 * t * slope:
                    accepted = True
                    break
                t *= shrink
            if accepted or is_steepest:
                break
            # conjugate direction stalled: retry once along steepest descent
            direction = -g
            slope = -gnorm * gnorm
            since_restart = 0
            is_steepest = True
        if not accepted:
            status = "line_search_failed"
            break

        g_moved = parallel_transport(g, bank, direction, t)
        d_moved = parallel_transport(direction, bank, direction, t)
        checks = ((gnorm, _frob(g_moved)), (_frob(direction), _frob(d_moved)))
        bank = cand
        ev, fv, rv, hv = ev_new, fv_new, rv_new, hv_new
        g_new = riemannian_grad(bank, patches, stencil, params)
        g_moved = project_tangent(bank, g_moved)
        d_moved = project_tangent(bank, d_moved)

        beta = max(0.0, float(np.sum(g_new * (g_new - g_moved))) / (gnorm * gnorm))
        direction = -g_new + beta * d_moved
        g = g_new
        steps += 1
        since_restart += 1
        trace.append(IterRecord(steps, ev, fv, rv, hv, _frob(g), t))
        if inspect_cb is not None:
            inspect_cb(bank, g, t, checks)
        # warm-start the next search a bit above the step that just worked
        t_init = min(t0, t / (shrink * shrink)) if t > 0 else t0

    out_bank = FilterBank(bank.columns, side, include_mean)
    return LearnResult(
        bank=out_bank,
        iterations=steps,
        objective=ev,
        grad_norm=_frob(g),
        status=status,
        trace=trace,
    )
