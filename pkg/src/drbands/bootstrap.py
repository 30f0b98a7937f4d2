"""Gaussian-multiplier bootstrap and confidence bands.

The band half-width couples a critical value to each cell's standard error:
simultaneous bands use the (1 - alpha) quantile of the bootstrapped sup of
|n^{-1/2} sum_i xi_i psi_hat_i| over cells; pointwise bands use the normal
quantile. Each bootstrap replication draws its multipliers from a
counter-based substream keyed by (seed, replication), so serial and
partitioned runs produce identical draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.stats import norm

from .errors import ConfigurationError, InvalidArgumentError
from .inference import CellEstimate, ScorePanel

__all__ = [
    "BootstrapConfig",
    "BandTable",
    "multiplier_generator",
    "multiplier_sup_draw",
    "sup_draws",
    "critical_value",
    "build_bands",
]


@dataclass(frozen=True)
class BootstrapConfig:
    """Multiplier-bootstrap settings.

    ``streams`` names the substream rule; only the per-replication rule is
    defined (replication r is keyed by (seed, r) alone, independent of how
    work is scheduled).
    """

    b: int = 5000
    alpha: float = 0.05
    seed: int = 0
    streams: str = "per-replication"

    def __post_init__(self):
        if self.b < 1:
            raise ConfigurationError("bootstrap replication count must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if self.streams != "per-replication":
            raise ConfigurationError(f"unknown substream rule {self.streams!r}")


def multiplier_generator(seed: int, replication: int) -> Generator:
    """Counter-based generator for one bootstrap replication."""
    return Generator(Philox(SeedSequence(entropy=(int(seed), int(replication)))))


def multiplier_sup_draw(psi: np.ndarray, xi: np.ndarray) -> float:
    """sup over cells of |n^{-1/2} sum_i xi_i psi_ik| for one multiplier draw."""
    psi = np.asarray(psi, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if psi.ndim != 2 or xi.shape != (psi.shape[0],):
        raise InvalidArgumentError("psi must be (n, cells) and xi length n")
    return float(np.max(np.abs(psi.T @ xi)) / math.sqrt(psi.shape[0]))


def sup_draws(psi: np.ndarray, cfg: BootstrapConfig) -> np.ndarray:
    """All b bootstrap sup statistics, ordered by replication index."""
    psi = np.ascontiguousarray(psi, dtype=np.float64)
    if psi.ndim != 2 or psi.shape[1] == 0:
        raise InvalidArgumentError("psi must be a non-empty (n, cells) matrix")
    n = psi.shape[0]
    root_n = math.sqrt(n)
    psi_t = psi.T
    out = np.empty(cfg.b)
    block = 512
    xi = np.empty((n, block))
    for start in range(0, cfg.b, block):
        stop = min(start + block, cfg.b)
        width = stop - start
        for t in range(width):
            xi[:, t] = multiplier_generator(cfg.seed, start + t).standard_normal(n)
        out[start:stop] = np.max(np.abs(psi_t @ xi[:, :width]), axis=0) / root_n
    return out


def critical_value(panel: ScorePanel | np.ndarray, cfg: BootstrapConfig) -> float:
    """(1 - alpha) bootstrap critical value via the ceil((1 - alpha) b) order
    statistic of the sup draws."""
    psi = panel.psi if isinstance(panel, ScorePanel) else np.asarray(panel)
    draws = np.sort(sup_draws(psi, cfg))
    rank = math.ceil((1.0 - cfg.alpha) * cfg.b)
    rank = min(max(rank, 1), cfg.b)
    return float(draws[rank - 1])


@dataclass(frozen=True)
class BandTable:
    """Per-cell confidence bands plus the critical values that made them."""

    u: np.ndarray
    j: np.ndarray
    names: tuple[str, ...]
    theta: np.ndarray
    sigma: np.ndarray
    lo_simultaneous: np.ndarray
    hi_simultaneous: np.ndarray
    lo_pointwise: np.ndarray
    hi_pointwise: np.ndarray
    flags: tuple[str, ...]
    c_alpha: float
    z_pointwise: float
    alpha: float
    n: int
    b: int | None = None

    def __post_init__(self):
        size = len(self.theta)
        for name in ("u", "j", "theta", "sigma", "lo_simultaneous", "hi_simultaneous",
                     "lo_pointwise", "hi_pointwise"):
            a = np.asarray(getattr(self, name))
            if a.shape != (size,):
                raise InvalidArgumentError(f"band column {name} has wrong length")
            a = np.ascontiguousarray(a, dtype=np.float64 if name != "j" else np.int64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if len(self.names) != size or len(self.flags) != size:
            raise InvalidArgumentError("names/flags must align with cells")

    @property
    def size(self) -> int:
        return len(self.theta)


def _cell_flag_string(cell: CellEstimate) -> str:
    active = sorted(k for k, v in cell.flags.items() if v is True and k != "pilot_converged"
                    and k != "gamma_converged" and k != "refit_converged")
    for k in ("pilot_converged", "gamma_converged", "refit_converged"):
        if cell.flags.get(k) is False:
            active.append(f"not_{k}")
    return ";".join(active)


def build_bands(
    cells,
    c_alpha: float,
    n: int,
    alpha: float,
    b: int | None = None,
    names: tuple[str, ...] | None = None,
) -> BandTable:
    """Simultaneous and pointwise bands around the cell estimates."""
    cells = tuple(cells)
    if not cells:
        raise InvalidArgumentError("need at least one cell")
    if c_alpha < 0 or not math.isfinite(c_alpha):
        raise InvalidArgumentError("c_alpha must be finite and non-negative")
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError("alpha must lie in (0, 1)")
    if n < 1:
        raise InvalidArgumentError("n must be positive")
    z = float(norm.ppf(1.0 - alpha / 2.0))
    theta = np.array([c.theta_check for c in cells])
    sigma = np.array([c.sigma_hat for c in cells])
    half_sim = c_alpha * sigma / math.sqrt(n)
    half_pt = z * sigma / math.sqrt(n)
    if names is None:
        names = tuple(f"d{c.j}" for c in cells)
    return BandTable(
        u=np.array([c.u for c in cells]),
        j=np.array([c.j for c in cells], dtype=np.int64),
        names=tuple(names),
        theta=theta,
        sigma=sigma,
        lo_simultaneous=theta - half_sim,
        hi_simultaneous=theta + half_sim,
        lo_pointwise=theta - half_pt,
        hi_pointwise=theta + half_pt,
        flags=tuple(_cell_flag_string(c) for c in cells),
        c_alpha=float(c_alpha),
        z_pointwise=z,
        alpha=float(alpha),
        n=int(n),
        b=b,
    )
