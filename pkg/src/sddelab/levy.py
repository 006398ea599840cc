"""Finite-activity jump-diffusion drivers: triplets, sampling, moment queries.

The driver L is described by its characteristic triplet (b, sigma^2, nu) with
respect to the truncation x * 1_{[-1,1]}(x).  The jump part is a compound
Poisson family, so paths decompose exactly into a linear drift, a Brownian
part, and finitely many jumps with exact times; ``sample_path`` returns the
per-step continuous increments together with the ordered jump list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# log-heavy sampling caps the inverse-CDF exponent so draws stay finite floats;
# the family still has infinite log-moment and absurdly heavy tails.
_LOG_HEAVY_CAP = 300.0


def derive_seed(master: int, *indices: int) -> int:
    """Stable per-task seed derived from a master seed and integer indices.

    Uses numpy's SeedSequence so parallel replicate farms get independent,
    scheduling-independent streams.
    """
    ss = np.random.SeedSequence((int(master),) + tuple(int(i) for i in indices))
    return int(ss.generate_state(1, np.uint64)[0])


# -- jump size families ------------------------------------------------------


@dataclass(frozen=True)
class ConstantJump:
    """All jumps have the same signed size."""

    size: float

    def mean(self) -> float:
        return self.size

    def second_moment(self) -> float:
        return self.size**2

    def mean_within_unit(self) -> float:
        return self.size if abs(self.size) <= 1.0 else 0.0

    @property
    def log_moment_finite(self) -> bool:
        return True

    def sample(self, rng, n: int) -> np.ndarray:
        return np.full(n, self.size)

    def config(self) -> dict:
        return {"family": "constant", "J": self.size}


@dataclass(frozen=True)
class ExponentialJump:
    """Positive jumps, Exp(mean)."""

    mean_size: float

    def __post_init__(self):
        if self.mean_size <= 0:
            raise ConfigError("exponential jump mean must be positive")

    def mean(self) -> float:
        return self.mean_size

    def second_moment(self) -> float:
        return 2.0 * self.mean_size**2

    def mean_within_unit(self) -> float:
        m = self.mean_size
        return m - (1.0 + m) * math.exp(-1.0 / m)

    @property
    def log_moment_finite(self) -> bool:
        return True

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.exponential(self.mean_size, n)

    def config(self) -> dict:
        return {"family": "exponential", "mean": self.mean_size}


@dataclass(frozen=True)
class TwoSidedExponentialJump:
    """Exp(mean_pos) with probability p_pos, else -Exp(mean_neg)."""

    mean_pos: float
    mean_neg: float
    p_pos: float

    def __post_init__(self):
        if self.mean_pos <= 0 or self.mean_neg <= 0 or not 0.0 <= self.p_pos <= 1.0:
            raise ConfigError("two-sided exponential needs positive means and p_pos in [0,1]")

    def mean(self) -> float:
        return self.p_pos * self.mean_pos - (1.0 - self.p_pos) * self.mean_neg

    def second_moment(self) -> float:
        return 2.0 * (self.p_pos * self.mean_pos**2 + (1.0 - self.p_pos) * self.mean_neg**2)

    def mean_within_unit(self) -> float:
        def one_sided(m):
            return m - (1.0 + m) * math.exp(-1.0 / m)

        return self.p_pos * one_sided(self.mean_pos) - (1.0 - self.p_pos) * one_sided(
            self.mean_neg
        )

    @property
    def log_moment_finite(self) -> bool:
        return True

    def sample(self, rng, n: int) -> np.ndarray:
        pos = rng.random(n) < self.p_pos
        mags = rng.exponential(1.0, n)
        return np.where(pos, self.mean_pos * mags, -self.mean_neg * mags)

    def config(self) -> dict:
        return {
            "family": "two_sided_exponential",
            "mean_pos": self.mean_pos,
            "mean_neg": self.mean_neg,
            "p_pos": self.p_pos,
        }


@dataclass(frozen=True)
class ParetoJump:
    """Positive power-tail jumps: density a x_min^a / x^{a+1} on [x_min, inf)."""

    x_min: float
    tail_index: float

    def __post_init__(self):
        if self.x_min <= 0 or self.tail_index <= 0:
            raise ConfigError("pareto jumps need x_min > 0 and tail_index > 0")

    def mean(self) -> float:
        a = self.tail_index
        return a * self.x_min / (a - 1.0) if a > 1.0 else math.inf

    def second_moment(self) -> float:
        a = self.tail_index
        return a * self.x_min**2 / (a - 2.0) if a > 2.0 else math.inf

    def mean_within_unit(self) -> float:
        xm, a = self.x_min, self.tail_index
        if xm >= 1.0:
            return 0.0
        if a == 1.0:
            return -xm * math.log(xm)
        return a / (1.0 - a) * (xm**a - xm)

    @property
    def log_moment_finite(self) -> bool:
        return True

    def sample(self, rng, n: int) -> np.ndarray:
        u = rng.random(n)
        return self.x_min * (1.0 - u) ** (-1.0 / self.tail_index)

    def config(self) -> dict:
        return {"family": "pareto", "x_min": self.x_min, "tail_index": self.tail_index}


@dataclass(frozen=True)
class LogHeavyJump:
    """Demo family with density 1/(x log^2 x) on (e, inf).

    Every power moment and even the log moment diverge; this is the canonical
    counterexample driving the long-run growth diagnostics.
    """

    def mean(self) -> float:
        return math.inf

    def second_moment(self) -> float:
        return math.inf

    def mean_within_unit(self) -> float:
        return 0.0

    @property
    def log_moment_finite(self) -> bool:
        return False

    def sample(self, rng, n: int) -> np.ndarray:
        u = rng.random(n)
        return np.exp(np.minimum(1.0 / (1.0 - u), _LOG_HEAVY_CAP))

    def config(self) -> dict:
        return {"family": "log_heavy"}


JUMP_FAMILIES = {
    "constant": ConstantJump,
    "exponential": ExponentialJump,
    "two_sided_exponential": TwoSidedExponentialJump,
    "pareto": ParetoJump,
    "log_heavy": LogHeavyJump,
}


@dataclass(frozen=True)
class JumpSpec:
    """Compound-Poisson jump part: intensity plus an i.i.d. size family."""

    intensity: float
    family: object
    second_moment: float = field(init=False)
    log_moment_finite: bool = field(init=False)

    def __post_init__(self):
        if self.intensity <= 0:
            raise ConfigError("jump intensity must be positive")
        object.__setattr__(self, "second_moment", self.family.second_moment())
        object.__setattr__(self, "log_moment_finite", self.family.log_moment_finite)


# -- the triplet -------------------------------------------------------------


@dataclass(frozen=True)
class LevyTriplet:
    """Characteristics (b, sigma^2, nu) with truncation x 1_{[-1,1]}(x)."""

    b: float = 0.0
    sigma2: float = 0.0
    jump: JumpSpec | None = None

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be nonnegative")

    @classmethod
    def wiener(cls, sigma2: float = 1.0, b: float = 0.0) -> "LevyTriplet":
        return cls(b=b, sigma2=sigma2)

    @classmethod
    def compound_poisson(cls, jump: JumpSpec) -> "LevyTriplet":
        """Pure compound Poisson: the drift entry offsets the small-jump part
        of the truncation so the path is constant between jumps."""
        b = jump.intensity * jump.family.mean_within_unit()
        return cls(b=b, sigma2=0.0, jump=jump)

    # -- moment queries ----------------------------------------------------

    def small_jump_mean_rate(self) -> float:
        if self.jump is None:
            return 0.0
        return self.jump.intensity * self.jump.family.mean_within_unit()

    def path_drift(self) -> float:
        """Slope of the continuous part once jumps are realized exactly."""
        return self.b - self.small_jump_mean_rate()

    def mean_rate(self) -> float:
        """E L(1) = b + lambda E[J 1_{|J|>1}]."""
        if self.jump is None:
            return self.b
        mean = self.jump.family.mean()
        if math.isinf(mean):
            return math.inf
        return self.b + self.jump.intensity * (mean - self.jump.family.mean_within_unit())

    def second_moment_rate(self) -> float:
        """Var L(1) = sigma^2 + lambda E[J^2]; +inf when the family has none."""
        if self.jump is None:
            return self.sigma2
        m2 = self.jump.second_moment
        if math.isinf(m2):
            return math.inf
        return self.sigma2 + self.jump.intensity * m2

    variance_rate = second_moment_rate

    def config(self) -> dict:
        out = {"b": self.b, "sigma2": self.sigma2}
        if self.jump is not None:
            out["lambda"] = self.jump.intensity
            out.update(self.jump.family.config())
        return out


# -- path sampling -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LevyIncrements:
    """One realization of the driver on [0, T]: per-step continuous increments
    plus the exact jump times and sizes."""

    h: float
    T: float
    cont: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    seed: int | None = None

    @property
    def n_steps(self) -> int:
        return len(self.cont)

    def step_of_jump(self) -> np.ndarray:
        """Index k of the cell (t_k, t_{k+1}] holding each jump."""
        if len(self.jump_times) == 0:
            return np.empty(0, dtype=int)
        k = np.ceil(self.jump_times / self.h - 1e-12).astype(int) - 1
        return np.clip(k, 0, self.n_steps - 1)

    def total(self) -> float:
        return float(self.cont.sum() + self.jump_sizes.sum())

    def coarsen(self, factor: int) -> "LevyIncrements":
        """Aggregate to a grid coarser by an integer factor; jumps unchanged."""
        if self.n_steps % factor != 0:
            raise ValueError("factor must divide the number of steps")
        cont = self.cont.reshape(-1, factor).sum(axis=1)
        return LevyIncrements(
            self.h * factor, self.T, cont, self.jump_times, self.jump_sizes, self.seed
        )


def sample_path(triplet: LevyTriplet, T: float, h: float, seed: int) -> LevyIncrements:
    """Sample the driver: Gaussian-plus-drift step increments and exact jumps.

    Deterministic given (triplet, T, h, seed).  Draw order is fixed: Gaussian
    steps (only when sigma2 > 0), then inter-arrival times, then jump sizes.
    """
    if h <= 0 or T <= 0:
        raise ConfigError("T and h must be positive")
    N = round(T / h)
    if N < 1 or abs(N * h - T) > 1e-9 * max(1.0, T):
        raise ConfigError("h must divide the horizon T")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    cont = np.full(N, triplet.path_drift() * h)
    if triplet.sigma2 > 0:
        cont = cont + math.sqrt(triplet.sigma2 * h) * rng.standard_normal(N)
    times = np.empty(0)
    sizes = np.empty(0)
    if triplet.jump is not None:
        lam = triplet.jump.intensity
        expected = lam * T
        chunk = int(expected + 6.0 * math.sqrt(expected) + 16.0)
        gaps = rng.exponential(1.0 / lam, chunk)
        while gaps.sum() < T:
            gaps = np.concatenate([gaps, rng.exponential(1.0 / lam, chunk)])
        times = np.cumsum(gaps)
        times = times[times < T]
        sizes = np.asarray(triplet.jump.family.sample(rng, len(times)), dtype=float)
    return LevyIncrements(h, N * h, cont, times, sizes, seed)


# -- assumption gate ----------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Stationarity prerequisites: stable drift, finite log moment of the big
    jumps, bounded diffusion functional.  None means undecidable, not false."""

    drift_stable: bool | None
    v0_value: float | None
    log_moment_finite: bool
    functional_bounded: bool | None
    messages: tuple[str, ...] = ()

    @property
    def all_satisfied(self) -> bool:
        return bool(self.drift_stable) and self.log_moment_finite and bool(
            self.functional_bounded
        )


def check_assumptions(mu, triplet: LevyTriplet, functional) -> AssumptionReport:
    from .delay_measure import v0 as _v0
    from .errors import RootCountError

    messages = []
    try:
        v0_val = _v0(mu, tol=1e-6)
        stable = v0_val < 0
        if not stable:
            messages.append(f"drift is not stable: v0 = {v0_val}")
    except RootCountError as exc:
        v0_val, stable = None, None
        messages.append(f"stability undecided: {exc}")
    log_ok = True if triplet.jump is None else triplet.jump.log_moment_finite
    if not log_ok:
        messages.append("jump family has infinite log moment beyond the unit ball")
    bounded = functional.sup_bound
    bounded_flag: bool | None
    if bounded is not None:
        bounded_flag = True
    elif functional.known_unbounded:
        bounded_flag = False
        messages.append("diffusion functional is unbounded")
    else:
        bounded_flag = None
        messages.append("boundedness of the diffusion functional is unknown")
    return AssumptionReport(stable, v0_val, log_ok, bounded_flag, tuple(messages))
