"""Monte Carlo pricing for the payoffs under study plus closed-form oracles.

Estimators are chunked with a fixed chunk size and reduced in chunk order,
so totals are bitwise independent of the worker count.  Path substreams are
keyed by (seed, path index); two estimators coupled on purpose (common
random numbers) simply share a seed, while statistically independent dual
estimates are run under different seeds derived by the caller.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, roots_hermite

from .levy import JointJumpStructure, LevyMeasure, levy_functional, levy_transform
from .noise import TimeGrid, batch_noise, batch_pair_noise, reverse_batch
from .flow import DriftSpec, _evolve_log
from .volmodel import ConstantVol, VolModel


class BarrierHypothesisError(ValueError):
    """Raised when a barrier estimate is requested outside m = 0, r = delta.

    Error code: barrier-hypothesis-violation.
    """


@dataclass(frozen=True)
class MarketParams:
    """Rates, horizon and the spot/strike/barrier levels in play."""

    r: float
    delta: float
    T: float
    x: float
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.x <= 0:
            raise ValueError("spot x must be positive")
        if self.y < 0 or self.z < 0:
            raise ValueError("strike and barrier must be >= 0")

    @property
    def rate_gap(self) -> float:
        return self.r - self.delta


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    n_steps: int
    seed: int
    workers: int = 1
    chunk_size: int = 16384

    def __post_init__(self):
        if self.n_paths < 2 or self.n_steps < 1:
            raise ValueError("need n_paths >= 2 and n_steps >= 1")
        if self.workers < 1 or self.chunk_size < 1:
            raise ValueError("workers and chunk_size must be >= 1")

    def grid(self, T: float) -> TimeGrid:
        return TimeGrid(T, self.n_steps)


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_paths: int
    n_steps: int
    seed: int


@dataclass(frozen=True)
class TwoAssetParams:
    """Two correlated local-volatility assets with a joint jump structure.

    ``rho`` is the constant instantaneous Brownian correlation; alternatively
    ``q_fn(t, x1, x2)`` gives the state-dependent form with correlation
    ``-q``.  The dual grid estimators support constant correlation only.
    """

    vol1: VolModel
    vol2: VolModel
    delta1: float
    delta2: float
    x1: float
    x2: float
    jumps: JointJumpStructure
    rho: float = 0.0
    q_fn: object = None

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.x1 <= 0 or self.x2 < 0:
            raise ValueError("spots must be positive (x2 may be tiny but >= 0)")

    def corr_at(self, t, x1, x2):
        if self.q_fn is None:
            return self.rho
        return np.clip(-np.asarray(self.q_fn(t, x1, x2), float), -1.0, 1.0)


# ----------------------------------------------------------------------
# chunked accumulation
# ----------------------------------------------------------------------

def _eval_chunk(task, start: int, count: int) -> np.ndarray:
    """Per-path discounted payoff values for one chunk of a single-asset task."""
    kind, m, v, gen_measure, grid, seed = task
    dw, jsum = batch_noise(grid, gen_measure, seed, start, count)

    if kind == "call" or kind == "binary_call":
        drift = DriftSpec.rate_gap(m.r, m.delta)
        k1 = levy_functional(gen_measure, "k1")
        ln, _, _, _ = _evolve_log("forward", np.full((count, 1), math.log(m.x)),
                                  v, drift, grid, dw, jsum, -k1)
        X_T = np.exp(ln[:, 0])
        if kind == "call":
            return math.exp(-m.r * m.T) * np.maximum(X_T - m.y, 0.0)
        return math.exp(-m.r * m.T) * (X_T >= m.z).astype(float)

    if kind == "dual_put":
        # gen_measure is tilt(m); reversal makes the stored sizes follow
        # m_Y = reflect(tilt(m)) with forward-style compensation -k1(m_Y)
        dwr, jsumr = reverse_batch(dw, jsum)
        m_y = levy_transform(gen_measure, "reflect")
        k1_y = levy_functional(m_y, "k1")
        ln, _, _, _ = _evolve_log("dual", np.full((count, 1), math.log(m.y)),
                                  v, m.delta - m.r, grid, dwr, jsumr, -k1_y)
        Y_T = np.exp(ln[:, 0])
        return math.exp(-m.delta * m.T) * np.maximum(m.x - Y_T, 0.0)

    if kind == "binary_dual":
        dwr, jsumr = reverse_batch(dw, jsum)
        drift = DriftSpec.rate_gap(m.r, m.delta)
        k1 = levy_functional(gen_measure, "k1")
        ln, _, _, _ = _evolve_log("backward", np.full((count, 1), math.log(m.z)),
                                  v, drift, grid, dwr, jsumr, k1)
        Z_T = np.exp(ln[:, 0])
        return math.exp(-m.r * m.T) * (m.x >= Z_T).astype(float)

    if kind == "barrier_lhs":
        drift = DriftSpec.rate_gap(m.r, m.delta)
        ln, _, _, min_ln = _evolve_log("forward", np.full((count, 1), math.log(m.x)),
                                       v, drift, grid, dw, jsum, 0.0, want_min=True)
        alive = min_ln[:, 0] > math.log(m.z)
        return np.maximum(np.exp(ln[:, 0]) - m.y, 0.0) * alive

    if kind == "barrier_rhs":
        dwr, jsumr = reverse_batch(dw, jsum)
        ln, _, _, min_ln = _evolve_log("dual", np.full((count, 1), math.log(m.y)),
                                       v, m.delta - m.r, grid, dwr, jsumr, 0.0,
                                       want_min=True)
        hit = min_ln[:, 0] <= math.log(m.z)
        # jump-free paths hit the barrier continuously, so the stopped value
        # is the level itself; the hitting time stays discrete
        stopped = np.where(hit, m.z, np.exp(ln[:, 0]))
        return np.maximum(m.x - stopped, 0.0)

    raise ValueError(f"unknown task kind {kind!r}")


def _reduce_chunks(eval_fn, task, sim: SimConfig, n_steps: int) -> McEstimate:
    """Deterministic ordered reduction over fixed-size chunks."""
    starts = list(range(0, sim.n_paths, sim.chunk_size))
    if sim.workers > 1 and len(starts) > 1:
        with ProcessPoolExecutor(max_workers=sim.workers) as pool:
            futs = [pool.submit(_chunk_stats, eval_fn, task, s,
                                min(sim.chunk_size, sim.n_paths - s))
                    for s in starts]
            parts = [f.result() for f in futs]
    else:
        parts = [_chunk_stats(eval_fn, task, s, min(sim.chunk_size, sim.n_paths - s))
                 for s in starts]
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    n = sum(p[2] for p in parts)
    mean = total / n
    var = max(total_sq - n * mean * mean, 0.0) / (n - 1)
    return McEstimate(mean, math.sqrt(var / n), n, n_steps, sim.seed)


def _chunk_stats(eval_fn, task, start, count):
    vals = eval_fn(task, start, count)
    return float(vals.sum()), float(vals @ vals), len(vals)


_PAYOFFS = ("call", "dual_put", "binary_call", "binary_dual")


def mc_price(payoff: str, m: MarketParams, v: VolModel, levy: LevyMeasure,
             sim: SimConfig) -> McEstimate:
    """Discounted Monte Carlo price of a single-asset payoff.

    ``call``/``binary_call`` simulate the forward flow; ``dual_put`` runs the
    rate-swapped dual process on reversed tilted bundles; ``binary_dual``
    runs the backward inverse flow on reversed bundles.  Binary payoffs
    strike at ``m.z``, vanilla payoffs at ``m.y``.
    """
    if payoff not in _PAYOFFS:
        raise ValueError(f"unknown payoff {payoff!r}; expected one of {_PAYOFFS}")
    if payoff in ("binary_call", "binary_dual") and m.z <= 0:
        raise ValueError("binary payoffs need a positive strike level z")
    if payoff == "dual_put" and m.y <= 0:
        raise ValueError("dual put needs a positive strike y (it seeds the dual flow)")
    gen_measure = levy_transform(levy, "tilt") if payoff == "dual_put" else levy
    task = (payoff, m, v, gen_measure, sim.grid(m.T), sim.seed)
    return _reduce_chunks(_eval_chunk, task, sim)


def mc_barrier(m: MarketParams, v: VolModel, sim: SimConfig,
               levy: LevyMeasure | None = None) -> tuple[McEstimate, McEstimate]:
    """Both sides of the barrier identity, undiscounted, with discrete
    monitoring at every grid point on both sides.

    Requires the jump-free, equal-rates regime and x, y >= z > 0.
    """
    if levy is not None and not levy.is_zero:
        raise BarrierHypothesisError("barrier-hypothesis-violation: jumps present")
    if m.r != m.delta:
        raise BarrierHypothesisError("barrier-hypothesis-violation: r != delta")
    if not (m.z > 0 and m.x >= m.z and m.y >= m.z):
        raise BarrierHypothesisError("barrier-hypothesis-violation: need x, y >= z > 0")
    zero = LevyMeasure.zero()
    grid = sim.grid(m.T)
    lhs = _reduce_chunks(_eval_chunk, ("barrier_lhs", m, v, zero, grid, sim.seed), sim)
    rhs = _reduce_chunks(_eval_chunk, ("barrier_rhs", m, v, zero, grid, sim.seed), sim)
    return lhs, rhs


# ----------------------------------------------------------------------
# two-asset estimators
# ----------------------------------------------------------------------

def _evolve_pair_forward(p: TwoAssetParams, r: float, grid: TimeGrid,
                         dw1, dwp, js1, js2):
    """Joint forward evolution; returns terminal (X1, X2) arrays."""
    B = dw1.shape[0]
    ln1 = np.full(B, math.log(p.x1))
    ln2 = np.full(B, math.log(max(p.x2, 1e-300)))
    dt = grid.dt
    k1_1 = p.jumps.marginal_k1(1)
    k1_2 = p.jumps.marginal_k1(2)
    for k in range(grid.n_steps):
        t_k = k * dt
        x1 = np.exp(ln1)
        x2 = np.exp(ln2)
        s1 = np.asarray(p.vol1.sigma(t_k, x1), float)
        s2 = np.asarray(p.vol2.sigma(t_k, x2), float)
        rho = p.corr_at(t_k, x1, x2)
        dw2 = rho * dw1[:, k] + np.sqrt(1.0 - np.square(rho)) * dwp[:, k]
        ln1 = ln1 + s1 * dw1[:, k] + (r - p.delta1 - 0.5 * s1**2) * dt + js1[:, k] - k1_1 * dt
        ln2 = ln2 + s2 * dw2 + (r - p.delta2 - 0.5 * s2**2) * dt + js2[:, k] - k1_2 * dt
    return np.exp(ln1), np.exp(ln2)


def _evolve_pair_dual(p: TwoAssetParams, r: float, grid: TimeGrid,
                      dw1r, dwpr, js1r, js2r, z1_init, z2_init):
    """Joint backward flows on reversed noise for vectors of start levels.

    Constant correlation only (a state-dependent form would need one
    simulation per (z1, z2) pair).  Returns terminal (Z1, Z2) with shapes
    (B, len(z1_init)) and (B, len(z2_init)).
    """
    if p.q_fn is not None:
        raise ValueError("dual grid estimators support constant correlation only")
    B = dw1r.shape[0]
    ln1 = np.broadcast_to(np.log(z1_init)[None, :], (B, len(z1_init))).copy()
    ln2 = np.broadcast_to(np.log(z2_init)[None, :], (B, len(z2_init))).copy()
    dt = grid.dt
    T = grid.T
    k1_1 = p.jumps.marginal_k1(1)
    k1_2 = p.jumps.marginal_k1(2)
    rho = p.rho
    c = math.sqrt(1.0 - rho * rho)
    for k in range(grid.n_steps):
        t_rev = T - k * dt
        dw2r = rho * dw1r[:, k] + c * dwpr[:, k]
        s1 = np.asarray(p.vol1.sigma(t_rev, np.exp(ln1)), float)
        s2 = np.asarray(p.vol2.sigma(t_rev, np.exp(ln2)), float)
        ln1 += s1 * dw1r[:, k, None] + (p.delta1 - r - 0.5 * s1**2) * dt \
            + js1r[:, k, None] + k1_1 * dt
        ln2 += s2 * dw2r[:, None] + (p.delta2 - r - 0.5 * s2**2) * dt \
            + js2r[:, k, None] + k1_2 * dt
    return np.exp(ln1), np.exp(ln2)


def _dual_exponents_constant(p: TwoAssetParams, r: float, grid: TimeGrid,
                             dw1r, dwpr, js1r, js2r):
    """Constant-vol shortcut: ln Z^z_T = ln z + E_i with E_i z-independent."""
    s1 = float(p.vol1.sigma0)
    s2 = float(p.vol2.sigma0)
    rho = p.rho
    c = math.sqrt(1.0 - rho * rho)
    w1 = dw1r.sum(axis=1)
    w2 = rho * w1 + c * dwpr.sum(axis=1)
    T = grid.T
    e1 = s1 * w1 + (p.delta1 - r - 0.5 * s1 * s1) * T + js1r.sum(axis=1) \
        + p.jumps.marginal_k1(1) * T
    e2 = s2 * w2 + (p.delta2 - r - 0.5 * s2 * s2) * T + js2r.sum(axis=1) \
        + p.jumps.marginal_k1(2) * T
    return e1, e2


@dataclass(frozen=True)
class DualGridConfig:
    """Quadrature grids for the dual integral representation."""

    ladder_nodes: int = 201     # nodes on [0, y]
    tail_nodes: int = 257       # nodes on [y, z_max]
    z_max: float | None = None  # auto bound when None


def _z_upper_bound(p: TwoAssetParams, m: MarketParams) -> float:
    """Level beyond which the joint survivor w is negligible (< 1e-6)."""
    T = m.T
    bound = 0.0
    for i, (vol, delta, x) in enumerate(((p.vol1, p.delta1, p.x1),
                                         (p.vol2, p.delta2, p.x2)), start=1):
        xs = np.geomspace(0.05, 20.0, 41)
        smax = float(np.max(vol.sigma(np.linspace(0, T, 9)[:, None], xs[None, :])))
        idio = p.jumps.idio1 if i == 1 else p.jumps.idio2
        jvar = idio.intensity * T * idio._law_mean_of(lambda l: np.square(l)) \
            if not idio.is_zero else 0.0
        jabs = idio.intensity * T * idio._law_mean_of(np.abs) if not idio.is_zero else 0.0
        for l1, l2, w in p.jumps.common_atoms:
            l = l1 if i == 1 else l2
            jvar += p.jumps.common_intensity * T * w * l * l
            jabs += p.jumps.common_intensity * T * w * abs(l)
        spread = (abs(delta - m.r) + 0.5 * smax**2) * T + 8.0 * smax * math.sqrt(T) \
            + abs(p.jumps.marginal_k1(i)) * T + jabs + 8.0 * math.sqrt(max(jvar, 0.0))
        bound = max(bound, max(x, 1e-12) * math.exp(spread))
    return bound


def _dual_integrals(kind: str, zeta1, zeta2, y: float, z_max: float,
                    ladder_nodes: int, tail_nodes: int):
    """Per-path dual integral values from indicator crossing levels.

    ``zeta_i`` is the level below which z satisfies x_i >= Z^{i,z}_T for the
    path (the backward flows are increasing in z).  Implements the ladder
    integral of the joint survivor on [0, y] and the tail integral on
    [y, z_max] by trapezoid quadrature of the indicator values; the z = 0
    endpoints use the limit convention that the indicator is 1.
    """
    zeta1 = np.asarray(zeta1, float)
    zeta2 = np.asarray(zeta2, float)
    total = np.zeros(zeta1.shape)
    if y > 0:
        zl = np.linspace(0.0, y, ladder_nodes)
        i1 = zl[None, :] <= zeta1[:, None]
        i2 = zl[None, :] <= zeta2[:, None]
        joint = (i1 & i2[:, ::-1]).astype(float)   # I2 evaluated at y - z
        total += np.trapezoid(joint, dx=zl[1] - zl[0], axis=1)
    zt = np.linspace(y, z_max, tail_nodes)
    i1t = (zt[None, :] <= zeta1[:, None]).astype(float)
    i2t = (zt[None, :] <= zeta2[:, None]).astype(float)
    if kind == "basket":
        integrand = i1t + i2t
    elif kind == "best_of":
        integrand = i1t + i2t - i1t * i2t
    else:
        raise ValueError(f"unknown dual integral kind {kind!r}")
    total += np.trapezoid(integrand, dx=zt[1] - zt[0], axis=1)
    return total


def _eval_chunk_two(task, start: int, count: int) -> np.ndarray:
    kind, p, m, grid, seed, dual_cfg = task
    dw1, dwp, js1, js2 = batch_pair_noise(grid, p.jumps, seed, start, count)

    if kind in ("basket_forward", "best_of_forward"):
        x1, x2 = _evolve_pair_forward(p, m.r, grid, dw1, dwp, js1, js2)
        combined = x1 + x2 if kind == "basket_forward" else np.maximum(x1, x2)
        return math.exp(-m.r * m.T) * np.maximum(combined - m.y, 0.0)

    dw1r, dwpr = -dw1[:, ::-1], -dwp[:, ::-1]
    js1r, js2r = -js1[:, ::-1], -js2[:, ::-1]

    if kind == "w_point":
        z1, z2 = dual_cfg   # reused slot: the (z1, z2) evaluation point
        vals = []
        for zi, xi in ((z1, p.x1), (z2, p.x2)):
            pass
        Z1, Z2 = _evolve_pair_dual(p, m.r, grid, dw1r, dwpr, js1r, js2r,
                                   np.array([max(z1, 1e-300)]),
                                   np.array([max(z2, 1e-300)]))
        ind1 = np.ones(count) if z1 <= 0 else (p.x1 >= Z1[:, 0]).astype(float)
        ind2 = np.ones(count) if z2 <= 0 else (p.x2 >= Z2[:, 0]).astype(float)
        return math.exp(-m.r * m.T) * ind1 * ind2

    # dual integral estimators
    z_max = dual_cfg.z_max if dual_cfg.z_max is not None else _z_upper_bound(p, m)
    which = "basket" if kind == "basket_dual" else "best_of"
    if p.vol1.is_constant and p.vol2.is_constant and p.q_fn is None:
        e1, e2 = _dual_exponents_constant(p, m.r, grid, dw1r, dwpr, js1r, js2r)
        zeta1 = p.x1 * np.exp(-e1)
        zeta2 = p.x2 * np.exp(-e2)
    else:
        # simulate the backward flows on the union of quadrature nodes and
        # locate each path's crossing level by interpolation-free bracketing
        nodes = np.unique(np.concatenate([
            np.linspace(0.0, m.y, dual_cfg.ladder_nodes)[1:],
            np.linspace(max(m.y, 1e-12), z_max, dual_cfg.tail_nodes)]))
        nodes = nodes[nodes > 0]
        Z1, Z2 = _evolve_pair_dual(p, m.r, grid, dw1r, dwpr, js1r, js2r, nodes, nodes)
        # crossing level: largest node with Z <= x (monotone in z)
        zeta1 = np.where((Z1 <= p.x1).any(axis=1),
                         nodes[np.maximum((Z1 <= p.x1).sum(axis=1) - 1, 0)], 0.0)
        zeta2 = np.where((Z2 <= p.x2).any(axis=1),
                         nodes[np.maximum((Z2 <= p.x2).sum(axis=1) - 1, 0)], 0.0)
    return math.exp(-m.r * m.T) * _dual_integrals(
        which, zeta1, zeta2, m.y, z_max, dual_cfg.ladder_nodes, dual_cfg.tail_nodes)


_TWO_ASSET_PAYOFFS = ("basket_call", "best_of_call", "w_point")


def mc_two_asset(payoff: str, p: TwoAssetParams, m: MarketParams, sim: SimConfig,
                 method: str = "forward", w_args: tuple[float, float] | None = None,
                 dual_грид=None, dual_grid: DualGridConfig | None = None) -> McEstimate:
    """Two-asset estimators.

    ``basket_call`` and ``best_of_call`` are priced either by forward
    simulation (``method='forward'``) or through the dual integral
    representation (``method='dual'``), which shares one reversed bundle per
    path across every quadrature level z.  ``w_point`` evaluates the joint
    survivor probability at ``w_args = (z1, z2)``.  All values are
    discounted at r over [0, T].
    """
    if payoff not in _TWO_ASSET_PAYOFFS:
        raise ValueError(f"unknown payoff {payoff!r}; expected one of {_TWO_ASSET_PAYOFFS}")
    grid = sim.grid(m.T)
    if payoff == "w_point":
        if w_args is None:
            raise ValueError("w_point needs w_args=(z1, z2)")
        task = ("w_point", p, m, grid, sim.seed, w_args)
        return _reduce_chunks(_eval_chunk_two, task, sim)
    if method == "forward":
        kind = "basket_forward" if payoff == "basket_call" else "best_of_forward"
        task = (kind, p, m, grid, sim.seed, None)
        return _reduce_chunks(_eval_chunk_two, task, sim)
    if method == "dual":
        kind = "basket_dual" if payoff == "basket_call" else "best_of_dual"
        task = (kind, p, m, grid, sim.seed, dual_grid or DualGridConfig())
        return _reduce_chunks(_eval_chunk_two, task, sim)
    raise ValueError(f"unknown method {method!r}; expected 'forward' or 'dual'")


# ----------------------------------------------------------------------
# closed-form oracles
# ----------------------------------------------------------------------

def _black_terms(forward: float, strike: float, vol_sqrt_t: float):
    if strike <= 0:
        return 1.0, 1.0
    if vol_sqrt_t < 1e-12:
        itm = 1.0 if forward >= strike else 0.0
        return itm, itm
    d1 = (math.log(forward / strike) + 0.5 * vol_sqrt_t**2) / vol_sqrt_t
    return ndtr(d1), ndtr(d1 - vol_sqrt_t)


def bs_closed_form(sigma: float, m: MarketParams, kind: str = "call") -> float:
    """Lognormal closed form with continuous rates r and dividend delta.

    ``call``/``put`` strike at m.y; ``binary`` is the cash-or-nothing value
    ``exp(-rT) P(X_T >= z)`` striking at m.z, matching the MC binary payoffs.
    Degenerate sigma = 0 collapses to the deterministic-forward values.
    """
    fwd = m.x * math.exp((m.r - m.delta) * m.T)
    vst = sigma * math.sqrt(m.T)
    disc = math.exp(-m.r * m.T)
    if kind == "call":
        n1, n2 = _black_terms(fwd, m.y, vst)
        return disc * (fwd * n1 - m.y * n2)
    if kind == "put":
        n1, n2 = _black_terms(fwd, m.y, vst)
        return disc * (m.y * (1.0 - n2) - fwd * (1.0 - n1))
    if kind == "binary":
        _, n2 = _black_terms(fwd, m.z, vst)
        return disc * n2
    raise ValueError(f"unknown kind {kind!r}; expected call, put or binary")


def bs_delta(sigma: float, m: MarketParams) -> float:
    """Spot delta of the call: exp(-delta T) N(d1)."""
    fwd = m.x * math.exp((m.r - m.delta) * m.T)
    n1, _ = _black_terms(fwd, m.y, sigma * math.sqrt(m.T))
    return math.exp(-m.delta * m.T) * n1


def call_series_atomic(sigma: float, m: MarketParams, measure: LevyMeasure,
                       tail_tol: float = 1e-13) -> float:
    """Constant-sigma call price with atomic jumps via Poisson conditioning.

    Conditional on the per-atom jump counts the terminal value is lognormal,
    so the price is a Poisson-weighted sum of Black formulas; enumeration is
    truncated when the residual Poisson mass per atom drops below
    ``tail_tol``.  Independent of the simulation and PIDE code paths.
    """
    from .levy import AtomicLaw
    if not isinstance(measure.law, AtomicLaw) and not measure.is_zero:
        raise ValueError("series oracle needs an atomic measure")
    disc = math.exp(-m.r * m.T)
    vst = sigma * math.sqrt(m.T)
    base_fwd = m.x * math.exp((m.r - m.delta) * m.T - measure.k1 * m.T)

    def black(forward):
        n1, n2 = _black_terms(forward, m.y, vst)
        return disc * (forward * n1 - m.y * n2)

    if measure.is_zero:
        return black(m.x * math.exp((m.r - m.delta) * m.T))

    locs = measure.law.locations
    lams = measure.intensity * measure.law.weights * m.T

    def atom_terms(lam):
        terms = []
        pmf = math.exp(-lam)
        k = 0
        cum = 0.0
        while cum < 1.0 - tail_tol:
            terms.append((k, pmf))
            cum += pmf
            k += 1
            pmf *= lam / k
            if k > 500:
                break
        return terms

    per_atom = [atom_terms(lam) for lam in lams]
    combos = [(0.0, 1.0)]
    for i, terms in enumerate(per_atom):
        combos = [(shift + k * locs[i], w * pk)
                  for shift, w in combos for k, pk in terms]
    return sum(w * black(base_fwd * math.exp(shift)) for shift, w in combos)


def basket_lognormal_quadrature(p: TwoAssetParams, m: MarketParams,
                                payoff: str = "basket_call",
                                n_nodes: int = 160) -> float:
    """Jump-free constant-vol two-asset oracle by tensor Gauss-Hermite
    quadrature over the correlated terminal lognormals."""
    if not (p.vol1.is_constant and p.vol2.is_constant):
        raise ValueError("quadrature oracle needs constant volatilities")
    if not p.jumps.is_zero:
        raise ValueError("quadrature oracle is jump-free")
    s1 = p.vol1.sigma0 * math.sqrt(m.T)
    s2 = p.vol2.sigma0 * math.sqrt(m.T)
    mu1 = math.log(p.x1) + (m.r - p.delta1) * m.T - 0.5 * s1 * s1
    mu2 = math.log(max(p.x2, 1e-300)) + (m.r - p.delta2) * m.T - 0.5 * s2 * s2
    a, w = roots_hermite(n_nodes)
    u = a[:, None]
    vv = a[None, :]
    rho = p.rho
    g1 = np.exp(mu1 + s1 * math.sqrt(2.0) * u)
    g2 = np.exp(mu2 + s2 * math.sqrt(2.0) * (rho * u + math.sqrt(1 - rho * rho) * vv))
    if payoff == "basket_call":
        pay = np.maximum(g1 + g2 - m.y, 0.0)
    elif payoff == "best_of_call":
        pay = np.maximum(np.maximum(g1, g2) - m.y, 0.0)
    else:
        raise ValueError(f"unknown payoff {payoff!r}")
    weight = w[:, None] * w[None, :] / math.pi
    return math.exp(-m.r * m.T) * float(np.sum(weight * pay))
