"""Finite-activity jump measures: characteristic exponent, moment functionals,
reflect/tilt transforms and compound-Poisson jump sampling.

A measure is ``intensity * law`` where ``law`` is a normalized jump-size
distribution.  Three families are supported (atomic, double-exponential/Kou,
truncated normal) because each one stays inside the family under reflection
and exponential tilting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri


class MomentDivergenceError(ValueError):
    """Raised when a requested integral against the measure diverges.

    Error code: measure-moment-divergence.
    """


def _as_complex(u) -> complex:
    return complex(u)


@dataclass(frozen=True)
class AtomicLaw:
    """Discrete jump-size law: atoms ((location, weight), ...), weights sum to 1."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("atomic law needs at least one atom")
        w = np.array([a[1] for a in self.atoms], float)
        if np.any(w <= 0):
            raise ValueError("atom weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom weights must sum to 1, got {w.sum()!r}")

    @property
    def locations(self) -> np.ndarray:
        return np.array([a[0] for a in self.atoms], float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([a[1] for a in self.atoms], float)


@dataclass(frozen=True)
class DoubleExponentialLaw:
    """Kou law: up-jump Exp(alpha_plus) with prob p, down-jump -Exp(alpha_minus)."""

    p: float
    alpha_plus: float
    alpha_minus: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("p must lie in [0, 1]")
        if self.alpha_plus <= 0 or self.alpha_minus <= 0:
            raise ValueError("exponential rates must be positive")

    def density(self, l):
        l = np.asarray(l, float)
        up = self.p * self.alpha_plus * np.exp(-self.alpha_plus * l) * (l > 0)
        dn = (1.0 - self.p) * self.alpha_minus * np.exp(self.alpha_minus * l) * (l < 0)
        return up + dn


@dataclass(frozen=True)
class TruncatedNormalLaw:
    """Normal(mean, stdev) conditioned on [lo, hi]."""

    mean: float
    stdev: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.stdev <= 0:
            raise ValueError("stdev must be positive")
        if not self.lo < self.hi:
            raise ValueError("truncation bounds must satisfy lo < hi")

    @property
    def _norm_mass(self) -> float:
        a = (self.lo - self.mean) / self.stdev
        b = (self.hi - self.mean) / self.stdev
        return float(ndtr(b) - ndtr(a))

    def density(self, l):
        l = np.asarray(l, float)
        z = (l - self.mean) / self.stdev
        phi = np.exp(-0.5 * z * z) / (self.stdev * math.sqrt(2 * math.pi))
        return np.where((l >= self.lo) & (l <= self.hi), phi / self._norm_mass, 0.0)


JumpLaw = AtomicLaw | DoubleExponentialLaw | TruncatedNormalLaw

_QUAD_TOL = 1e-12


def _quad_against_density(law, f, component_tol=_QUAD_TOL) -> float:
    """Adaptive quadrature of f against the law's density (mass one)."""
    if isinstance(law, TruncatedNormalLaw):
        lo, hi = law.lo, law.hi
        pts = [p for p in (-1.0, 0.0, 1.0) if lo < p < hi]
        val, _ = integrate.quad(lambda l: f(l) * float(law.density(l)), lo, hi,
                                points=pts or None, epsabs=component_tol, limit=200)
        return float(val)
    if isinstance(law, DoubleExponentialLaw):
        total = 0.0
        for a, b in ((-np.inf, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, np.inf)):
            v, _ = integrate.quad(lambda l: f(l) * float(law.density(l)), a, b,
                                  epsabs=component_tol, limit=200)
            total += v
        if not np.isfinite(total):
            raise MomentDivergenceError("measure-moment-divergence: quadrature diverged")
        return float(total)
    raise TypeError(f"no density for law {type(law).__name__}")


@dataclass(frozen=True)
class LevyMeasure:
    """Finite-activity Levy measure: total mass ``intensity`` (jumps per unit
    time) with jump sizes drawn from ``law``.

    The moment functionals used throughout the flows are cached on first use:

    * ``k1``  = int (e^l - 1) m(dl)                  (drift compensator)
    * ``k2``  = int (e^l - 1 - l 1_{|l|<=1}) m(dl)
    * ``k3``  = int (e^l - 1 - l e^l 1_{|l|<=1}) m(dl)
    * ``tilted_mass`` = int e^l m(dl)
    """

    intensity: float
    law: JumpLaw

    def __post_init__(self):
        if self.intensity < 0 or not math.isfinite(self.intensity):
            raise ValueError("intensity must be finite and >= 0")

    @classmethod
    def zero(cls) -> "LevyMeasure":
        return cls(0.0, AtomicLaw(((0.0, 1.0),)))

    @classmethod
    def single_atom(cls, intensity: float, location: float) -> "LevyMeasure":
        return cls(intensity, AtomicLaw(((location, 1.0),)))

    @property
    def is_zero(self) -> bool:
        return self.intensity == 0.0

    @property
    def has_exp_moment(self) -> bool:
        """True when int e^l m(dl) < infinity."""
        if isinstance(self.law, DoubleExponentialLaw):
            return self.law.alpha_plus > 1.0
        return True

    def _require_exp_moment(self, what: str):
        if not self.has_exp_moment:
            raise MomentDivergenceError(
                f"measure-moment-divergence: {what} needs int e^l m(dl) < inf "
                f"(double-exponential law requires alpha_plus > 1)")

    # ------------------------------------------------------------------
    # moment functionals
    # ------------------------------------------------------------------

    def _law_mean_of(self, f) -> float:
        """E[f(l)] under the jump-size law."""
        if isinstance(self.law, AtomicLaw):
            return float(np.sum(self.law.weights * f(self.law.locations)))
        return _quad_against_density(self.law, f)

    @cached_property
    def _mean_exp(self) -> float:
        """E[e^l] under the law (closed form where available)."""
        law = self.law
        if isinstance(law, AtomicLaw):
            return float(np.sum(law.weights * np.exp(law.locations)))
        if isinstance(law, DoubleExponentialLaw):
            self._require_exp_moment("E[e^l]")
            up = law.p * law.alpha_plus / (law.alpha_plus - 1.0)
            dn = (1.0 - law.p) * law.alpha_minus / (law.alpha_minus + 1.0)
            return up + dn
        # truncated normal: exact lognormal-segment formula
        mu, s, lo, hi = law.mean, law.stdev, law.lo, law.hi
        a, b = (lo - mu) / s, (hi - mu) / s
        num = ndtr(b - s) - ndtr(a - s)
        return float(math.exp(mu + 0.5 * s * s) * num / law._norm_mass)

    @cached_property
    def k1(self) -> float:
        if self.is_zero:
            return 0.0
        self._require_exp_moment("k1")
        return self.intensity * (self._mean_exp - 1.0)

    @cached_property
    def k2(self) -> float:
        if self.is_zero:
            return 0.0
        self._require_exp_moment("k2")
        f = lambda l: np.exp(l) - 1.0 - l * (np.abs(l) <= 1.0)
        if isinstance(self.law, AtomicLaw):
            return self.intensity * self._law_mean_of(f)
        return self.intensity * _quad_against_density(self.law, lambda l: f(np.asarray(l)))

    @cached_property
    def k3(self) -> float:
        if self.is_zero:
            return 0.0
        self._require_exp_moment("k3")
        f = lambda l: np.exp(l) - 1.0 - l * np.exp(l) * (np.abs(l) <= 1.0)
        if isinstance(self.law, AtomicLaw):
            return self.intensity * self._law_mean_of(f)
        return self.intensity * _quad_against_density(self.law, lambda l: f(np.asarray(l)))

    @cached_property
    def tilted_mass(self) -> float:
        if self.is_zero:
            return 0.0
        self._require_exp_moment("tilted_mass")
        return self.intensity * self._mean_exp

    # ------------------------------------------------------------------
    # sampling
    # ------------------------------------------------------------------

    def sample_sizes(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` i.i.d. jump sizes from the law."""
        if count == 0:
            return np.empty(0)
        law = self.law
        if isinstance(law, AtomicLaw):
            idx = rng.choice(len(law.atoms), size=count, p=law.weights)
            return law.locations[idx]
        if isinstance(law, DoubleExponentialLaw):
            up = rng.random(count) < law.p
            mags = rng.exponential(1.0, size=count)
            out = np.where(up, mags / law.alpha_plus, -mags / law.alpha_minus)
            return out
        # truncated normal via inverse CDF (deterministic given the stream)
        a = (law.lo - law.mean) / law.stdev
        b = (law.hi - law.mean) / law.stdev
        fa, fb = ndtr(a), ndtr(b)
        u = rng.random(count)
        return law.mean + law.stdev * ndtri(fa + u * (fb - fa))


def levy_psi(measure: LevyMeasure, u) -> complex:
    """Characteristic exponent psi(u) = int (e^{iul} - 1 - iu (e^l - 1)) m(dl),
    so that E[exp(iu L_t)] = exp(t psi(u)).

    Closed form for atomic and double-exponential laws, adaptive quadrature
    (abs tol 1e-12) for truncated-normal laws.  Accepts complex ``u``; the
    identities psi(0) = psi(-1j) = 0 hold exactly for valid measures.
    """
    u = _as_complex(u)
    if measure.is_zero:
        return 0.0 + 0.0j
    measure._require_exp_moment("psi")
    lam = measure.intensity
    law = measure.law
    if isinstance(law, AtomicLaw):
        l = law.locations
        w = law.weights
        vals = np.exp(1j * u * l) - 1.0 - 1j * u * (np.exp(l) - 1.0)
        return complex(lam * np.sum(w * vals))
    if isinstance(law, DoubleExponentialLaw):
        ap, am, p = law.alpha_plus, law.alpha_minus, law.p
        # E[e^{iul}] converges for Im(u) > -alpha_plus (up side) and
        # Im(u) < alpha_minus (down side).
        if not (u.imag > -ap and u.imag < am):
            raise MomentDivergenceError(
                "measure-moment-divergence: characteristic function diverges at this u")
        phi = p * ap / (ap - 1j * u) + (1.0 - p) * am / (am + 1j * u)
        return complex(lam * (phi - 1.0 - 1j * u * (measure._mean_exp - 1.0)))
    # truncated normal: quadrature on the compact support, real and imag parts
    def integrand(l, part):
        val = np.exp(1j * u * l) - 1.0 - 1j * u * (math.exp(l) - 1.0)
        return val.real if part == 0 else val.imag

    re = _quad_against_density(law, lambda l: integrand(l, 0))
    im = _quad_against_density(law, lambda l: integrand(l, 1))
    return complex(lam * (re + 1j * im))


_FUNCTIONAL_KINDS = ("k1", "k2", "k3", "tilted_mass")


def levy_functional(measure: LevyMeasure, kind: str) -> float:
    """Named moment integral of the measure; see :class:`LevyMeasure` docs."""
    if kind not in _FUNCTIONAL_KINDS:
        raise ValueError(f"unknown functional kind {kind!r}; expected one of {_FUNCTIONAL_KINDS}")
    return float(getattr(measure, kind))


def levy_transform(measure: LevyMeasure, kind: str) -> LevyMeasure:
    """Derived measure: ``reflect`` is the image under l -> -l, ``tilt``
    multiplies the density by e^l (intensity rescales by int e^l q(l) dl).
    """
    law = measure.law
    if kind == "reflect":
        if isinstance(law, AtomicLaw):
            new = AtomicLaw(tuple((-l, w) for l, w in law.atoms))
        elif isinstance(law, DoubleExponentialLaw):
            new = DoubleExponentialLaw(1.0 - law.p, law.alpha_minus, law.alpha_plus)
        else:
            new = TruncatedNormalLaw(-law.mean, law.stdev, -law.hi, -law.lo)
        return LevyMeasure(measure.intensity, new)
    if kind == "tilt":
        if measure.is_zero:
            return LevyMeasure(0.0, law)
        measure._require_exp_moment("tilt")
        if isinstance(law, AtomicLaw):
            raw = law.weights * np.exp(law.locations)
            norm = raw.sum()
            new_law = AtomicLaw(tuple(zip(law.locations.tolist(), (raw / norm).tolist())))
            return LevyMeasure(measure.intensity * float(norm), new_law)
        if isinstance(law, DoubleExponentialLaw):
            p, ap, am = law.p, law.alpha_plus, law.alpha_minus
            mass_up = p * ap / (ap - 1.0)
            mass_dn = (1.0 - p) * am / (am + 1.0)
            total = mass_up + mass_dn
            new_law = DoubleExponentialLaw(mass_up / total, ap - 1.0, am + 1.0)
            return LevyMeasure(measure.intensity * total, new_law)
        # truncated normal: e^l shifts the location by stdev^2
        s = law.stdev
        new_law = TruncatedNormalLaw(law.mean + s * s, s, law.lo, law.hi)
        return LevyMeasure(measure.tilted_mass, new_law)
    raise ValueError(f"unknown transform kind {kind!r}; expected 'reflect' or 'tilt'")


def sample_jumps(measure: LevyMeasure, T: float, rng: np.random.Generator):
    """Compound-Poisson event list on (0, T]: returns (times, sizes), times
    sorted ascending.  Deterministic given the generator state; the draw
    order is count, then times, then sizes.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if measure.is_zero:
        return np.empty(0), np.empty(0)
    count = int(rng.poisson(measure.intensity * T))
    if count == 0:
        return np.empty(0), np.empty(0)
    times = np.sort((1.0 - rng.random(count)) * T)   # uniform on (0, T]
    sizes = measure.sample_sizes(count, rng)
    return times, sizes


@dataclass(frozen=True)
class LevyProcessSpec:
    """A measure together with a running direction.

    The forward process is the compensated compound Poisson
    ``L_t = sum_{jumps <= t} l_j - t k1(m)``; the reversed spec describes
    ``L-hat_t = L_{T-t} - L_T`` whose stored jump sizes follow the reflected
    measure and whose deterministic drift carries the opposite sign.
    """

    measure: LevyMeasure
    direction: str = "forward"

    def __post_init__(self):
        if self.direction not in ("forward", "reversed"):
            raise ValueError("direction must be 'forward' or 'reversed'")

    def drift_per_unit_time(self) -> float:
        """Deterministic drift added to the running jump sum."""
        if self.direction == "forward":
            return -self.measure.k1
        # reversed: +k1 of the un-reflected measure
        return levy_transform(self.measure, "reflect").k1


@dataclass(frozen=True)
class JointJumpStructure:
    """Two-asset jump structure: independent marginal measures plus an
    optional common component with bivariate atoms ((l1, l2, weight), ...).
    """

    idio1: LevyMeasure
    idio2: LevyMeasure
    common_intensity: float = 0.0
    common_atoms: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if self.common_intensity < 0:
            raise ValueError("common intensity must be >= 0")
        if self.common_intensity > 0:
            if not self.common_atoms:
                raise ValueError("common component needs at least one atom")
            w = sum(a[2] for a in self.common_atoms)
            if abs(w - 1.0) > 1e-12:
                raise ValueError("common atom weights must sum to 1")

    @property
    def is_zero(self) -> bool:
        return self.idio1.is_zero and self.idio2.is_zero and self.common_intensity == 0.0

    def marginal_k1(self, asset: int) -> float:
        """int (e^{l_i} - 1) over the joint measure's i-th marginal."""
        idio = self.idio1 if asset == 1 else self.idio2
        k = idio.k1
        for l1, l2, w in self.common_atoms:
            l = l1 if asset == 1 else l2
            k += self.common_intensity * w * (math.exp(l) - 1.0)
        return k

    def reflect(self) -> "JointJumpStructure":
        return JointJumpStructure(
            levy_transform(self.idio1, "reflect"),
            levy_transform(self.idio2, "reflect"),
            self.common_intensity,
            tuple((-l1, -l2, w) for l1, l2, w in self.common_atoms),
        )

    def sample(self, T: float, rng: np.random.Generator):
        """Joint event list: (times, l1_sizes, l2_sizes), times sorted.

        Draw order is idio1, idio2, common; deterministic given the stream.
        """
        t1, s1 = sample_jumps(self.idio1, T, rng)
        t2, s2 = sample_jumps(self.idio2, T, rng)
        if self.common_intensity > 0:
            count = int(rng.poisson(self.common_intensity * T))
            tc = np.sort((1.0 - rng.random(count)) * T) if count else np.empty(0)
            if count:
                w = np.array([a[2] for a in self.common_atoms])
                idx = rng.choice(len(self.common_atoms), size=count, p=w)
                c1 = np.array([self.common_atoms[i][0] for i in idx])
                c2 = np.array([self.common_atoms[i][1] for i in idx])
            else:
                c1 = c2 = np.empty(0)
        else:
            tc = c1 = c2 = np.empty(0)
        times = np.concatenate([t1, t2, tc])
        l1 = np.concatenate([s1, np.zeros(len(t2)), c1])
        l2 = np.concatenate([np.zeros(len(t1)), s2, c2])
        order = np.argsort(times, kind="stable")
        return times[order], l1[order], l2[order]
