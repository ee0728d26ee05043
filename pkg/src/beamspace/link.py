"""Single-path LOS link simulation with zero-forcing recovery.

A two-element receive array samples the transmitted far field at two
nearby solid angles.  The channel matrix holds the response of each
receiver to each virtual basis pattern; it is built from the perturbed
basis, which models a receiver whose pilot-derived channel estimate has
absorbed the perturbation.  Decoding is a plain zero-forcing inverse, so
symbol pairs whose ratio is +-1 always recover exactly while the other
states land away from their ideal constellation points.

The Monte-Carlo sweep draws receive geometries area-uniformly, evaluates
every symbol pair of the constellation noiselessly, and accumulates
per-stream constellation-error CDFs.  All randomness is drawn up front
from one seeded generator and scenarios are processed in fixed-size
chunks, so results are bitwise independent of the worker count.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidArgumentError,
    RatioSetMismatchError,
    SingularChannelError,
    UndefinedRatioError,
)
from .modulation import PskConstellation
from .patterns import BasisPair, StatePatternSet
from .sphere import require_same_grid, sample_pattern

__all__ = [
    "DEFAULT_CONDITION_CAP",
    "NoiseModel",
    "LinkScenario",
    "ErrorRecord",
    "ConstellationPoint",
    "MonteCarloResult",
    "CdfSummary",
    "build_channel",
    "transmit_and_receive",
    "zf_equalize",
    "quantize_symbols",
    "evaluate_scenario",
    "received_constellation",
    "constellation_at_angle",
    "great_circle_offset",
    "run_monte_carlo",
    "cdf_summary",
]

DEFAULT_CONDITION_CAP = 1e8

# Scenario chunk size; fixed (not derived from the worker count) so the
# processing order and therefore the output bytes never depend on it.
_CHUNK = 4096

THETA_POL = (1.0 + 0.0j, 0.0j)
PHI_POL = (0.0j, 1.0 + 0.0j)


@dataclass(frozen=True)
class NoiseModel:
    """Circularly symmetric complex receive noise, one variance per branch.

    Both variances zero (the default) disables noise, which is the
    reference configuration for constellation-error statistics.
    """

    variances: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        v = (float(self.variances[0]), float(self.variances[1]))
        if v[0] < 0.0 or v[1] < 0.0:
            raise InvalidArgumentError("noise variances must be nonnegative")
        object.__setattr__(self, "variances", v)

    @property
    def enabled(self) -> bool:
        return self.variances[0] > 0.0 or self.variances[1] > 0.0

    def sample(self, rng: np.random.Generator, shape=()) -> np.ndarray:
        """Draw noise of the given leading shape; last axis is the branch."""
        sigma = np.sqrt(np.asarray(self.variances) / 2.0)
        full = tuple(np.atleast_1d(shape).astype(int)) + (2,)
        return sigma * (rng.standard_normal(full) + 1j * rng.standard_normal(full))


@dataclass(frozen=True, eq=False)
class LinkScenario:
    """Receive geometry, polarizations, and the derived channel matrix."""

    rx_angles: np.ndarray         # (2, 2) [(theta, phi)] radians
    rx_polarizations: np.ndarray  # (2, 2) complex unit vectors in (theta, phi)
    channel: np.ndarray           # (2, 2) complex
    condition_number: float
    constellation: PskConstellation
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self) -> None:
        angles = np.ascontiguousarray(self.rx_angles, dtype=float)
        pols = np.ascontiguousarray(self.rx_polarizations, dtype=complex)
        channel = np.ascontiguousarray(self.channel, dtype=complex)
        if angles.shape != (2, 2) or pols.shape != (2, 2) or channel.shape != (2, 2):
            raise InvalidArgumentError("scenario arrays must all be 2x2")
        norms = np.linalg.norm(pols, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidArgumentError("receive polarization vectors must be unit norm")
        if not np.all(np.isfinite(channel)):
            raise InvalidArgumentError("channel matrix must be finite")
        for name, arr in (("rx_angles", angles), ("rx_polarizations", pols),
                          ("channel", channel)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def singular(self) -> bool:
        return not np.isfinite(self.condition_number)


def _condition_2x2(h: np.ndarray) -> float:
    """Spectral condition number of a single 2x2 complex matrix."""
    det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    if det == 0.0:
        return np.inf
    f2 = float(np.sum(np.abs(h) ** 2))
    s2max = 0.5 * (f2 + np.sqrt(max(f2 * f2 - 4.0 * abs(det) ** 2, 0.0)))
    return float(s2max / abs(det))


def build_channel(
    basis_hat: BasisPair,
    rx_angles,
    constellation: PskConstellation,
    rx_polarizations=(THETA_POL, THETA_POL),
    noise: NoiseModel | None = None,
) -> LinkScenario:
    """Channel matrix entries p_m^H . b_n at each receive angle.

    The basis patterns are sampled bilinearly at the two receive solid
    angles and projected onto the receive polarization vectors.  Singular
    geometries are flagged through ``condition_number`` (inf), not raised;
    rejection happens at equalization time.
    """
    angles = np.asarray(rx_angles, dtype=float)
    pols = np.asarray(rx_polarizations, dtype=complex)
    h = np.empty((2, 2), dtype=complex)
    for n, b in enumerate((basis_hat.b1, basis_hat.b2)):
        et, ep = sample_pattern(b, angles[:, 0], angles[:, 1])
        h[:, n] = np.conj(pols[:, 0]) * et + np.conj(pols[:, 1]) * ep
    return LinkScenario(
        rx_angles=angles,
        rx_polarizations=pols,
        channel=h,
        condition_number=_condition_2x2(h),
        constellation=constellation,
        noise=noise if noise is not None else NoiseModel(),
    )


def transmit_and_receive(
    s_hat: StatePatternSet,
    x1: complex,
    x2: complex,
    scenario: LinkScenario,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Receive vector for one symbol pair radiated through the physical field.

    The antenna radiates x1 times the state pattern selected by the ratio
    x2/x1; each receiver projects that field at its own solid angle.  The
    basis decomposition is not used on the transmit side.
    """
    if x1 == 0:
        raise UndefinedRatioError("x1 = 0 leaves the symbol ratio x2/x1 undefined")
    k = scenario.constellation.ratio_set.index_of(x2 / x1)
    pattern = s_hat.state(k)
    angles, pols = scenario.rx_angles, scenario.rx_polarizations
    et, ep = sample_pattern(pattern, angles[:, 0], angles[:, 1])
    y = x1 * (np.conj(pols[:, 0]) * et + np.conj(pols[:, 1]) * ep)
    if scenario.noise.enabled:
        if rng is None:
            raise InvalidArgumentError("noise is enabled but no rng was provided")
        y = y + scenario.noise.sample(rng)
    return y


def zf_equalize(
    y, scenario: LinkScenario, condition_cap: float = DEFAULT_CONDITION_CAP
) -> np.ndarray:
    """Zero-forcing estimate H^-1 y of the transmitted symbol pair.

    Quantization to the constellation is a separate explicit step
    (:func:`quantize_symbols`).

    Raises:
        SingularChannelError: channel singular or conditioned above the cap.
    """
    cond = scenario.condition_number
    if not np.isfinite(cond) or cond > condition_cap:
        raise SingularChannelError(
            f"channel condition number {cond:.3g} exceeds cap {condition_cap:.3g}"
        )
    return np.linalg.solve(scenario.channel, np.asarray(y, dtype=complex))


def quantize_symbols(xhat, constellation: PskConstellation) -> np.ndarray:
    """Component-wise quantization to the nearest constellation points."""
    return constellation.nearest(xhat)


@dataclass(frozen=True)
class ErrorRecord:
    """Constellation error of one decoded stream for one symbol pair."""

    stream: int           # 1 or 2
    ratio_index: int
    transmitted: complex
    error: complex        # decoded minus transmitted
    magnitude: float


@dataclass(frozen=True)
class ConstellationPoint:
    """Ideal and actual I/Q location of one stream for one symbol pair."""

    stream: int
    k1: int
    k2: int
    ideal: complex
    actual: complex


def _decode_all_pairs(
    s_hat: StatePatternSet,
    scenario: LinkScenario,
    condition_cap: float,
) -> list[ConstellationPoint]:
    # constellation products are reference (noiseless) quantities even
    # when the scenario itself carries a noise model
    if scenario.noise.enabled:
        scenario = dataclasses.replace(scenario, noise=NoiseModel())
    points = scenario.constellation.points
    m = scenario.constellation.order
    out = []
    for k1 in range(m):
        for k2 in range(m):
            x = np.array([points[k1], points[k2]])
            y = transmit_and_receive(s_hat, x[0], x[1], scenario)
            xhat = zf_equalize(y, scenario, condition_cap)
            out.append(ConstellationPoint(1, k1, k2, complex(x[0]), complex(xhat[0])))
            out.append(ConstellationPoint(2, k1, k2, complex(x[1]), complex(xhat[1])))
    return out


def received_constellation(
    s_hat: StatePatternSet,
    scenario: LinkScenario,
    condition_cap: float = DEFAULT_CONDITION_CAP,
) -> list[ConstellationPoint]:
    """Equalized constellation for every symbol pair, noiselessly."""
    return _decode_all_pairs(s_hat, scenario, condition_cap)


def evaluate_scenario(
    s_hat: StatePatternSet,
    scenario: LinkScenario,
    condition_cap: float = DEFAULT_CONDITION_CAP,
) -> list[ErrorRecord]:
    """Noiseless per-pair error records for one receive geometry."""
    m = scenario.constellation.order
    records = []
    for pt in _decode_all_pairs(s_hat, scenario, condition_cap):
        err = pt.actual - pt.ideal
        records.append(
            ErrorRecord(
                stream=pt.stream,
                ratio_index=(pt.k2 - pt.k1) % m,
                transmitted=pt.ideal,
                error=err,
                magnitude=abs(err),
            )
        )
    return records


def constellation_at_angle(
    basis_hat: BasisPair,
    s_hat: StatePatternSet,
    constellation: PskConstellation,
    theta: float,
    phi: float,
    condition_cap: float = DEFAULT_CONDITION_CAP,
) -> list[ConstellationPoint]:
    """Transmit-side constellation observed in the radiated field at one angle.

    The physical field of each symbol pair is decomposed onto the two
    basis patterns sampled at the same angle (a 2x2 solve across the two
    polarization components); ideal points are the transmitted symbols.
    """
    b = np.empty((2, 2), dtype=complex)
    for n, bp in enumerate((basis_hat.b1, basis_hat.b2)):
        et, ep = sample_pattern(bp, theta, phi)
        b[0, n] = et
        b[1, n] = ep
    cond = _condition_2x2(b)
    if not np.isfinite(cond) or cond > condition_cap:
        raise SingularChannelError(
            f"basis polarization matrix at the angle is degenerate (cond {cond:.3g})"
        )
    points = constellation.points
    m = constellation.order
    ratios = constellation.ratio_set
    out = []
    for k1 in range(m):
        for k2 in range(m):
            x1, x2 = points[k1], points[k2]
            k = ratios.index_of(x2 / x1)
            et, ep = sample_pattern(s_hat.state(k), theta, phi)
            c = np.linalg.solve(b, x1 * np.array([et, ep]))
            out.append(ConstellationPoint(1, k1, k2, complex(x1), complex(c[0])))
            out.append(ConstellationPoint(2, k1, k2, complex(x2), complex(c[1])))
    return out


def great_circle_offset(theta, phi, distance, bearing):
    """Destination of a great-circle step from (theta, phi).

    Bearing 0 heads toward the north pole (decreasing theta); angles are
    radians.  Vectorized over all inputs.
    """
    ct1 = np.cos(theta)
    st1 = np.sin(theta)
    cd, sd = np.cos(distance), np.sin(distance)
    ct2 = np.clip(ct1 * cd + st1 * sd * np.cos(bearing), -1.0, 1.0)
    theta2 = np.arccos(ct2)
    dphi = np.arctan2(np.sin(bearing) * sd * st1, cd - ct1 * ct2)
    return theta2, np.mod(phi + dphi, 2.0 * np.pi)


@dataclass(frozen=True)
class CdfSummary:
    """Quantiles and threshold-exceedance fractions of one error stream."""

    count: int
    quantiles: dict[float, float]
    exceedance: dict[float, float]


_QUANTILES = (1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0)
_EXCEEDANCE_THRESHOLDS = tuple(10.0 ** e for e in range(-6, 1))


def cdf_summary(records) -> CdfSummary:
    """Summary statistics of error magnitudes (linear interpolation quantiles)."""
    values = np.asarray(records, dtype=float).ravel()
    if values.size == 0:
        raise InvalidArgumentError("cdf summary needs at least one record")
    q = np.percentile(values, _QUANTILES)
    return CdfSummary(
        count=int(values.size),
        quantiles={p: float(v) for p, v in zip(_QUANTILES, q)},
        exceedance={t: float(np.mean(values > t)) for t in _EXCEEDANCE_THRESHOLDS},
    )


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    """Per-stream sorted error magnitudes plus the rejection tally."""

    stream_errors: tuple[np.ndarray, np.ndarray]
    n_scenarios: int
    n_rejected: int
    seed: int
    separation_deg: tuple[float, float]

    def cdf(self, stream: int) -> tuple[np.ndarray, np.ndarray]:
        """Sorted errors and empirical cumulative probabilities for a stream."""
        e = self.stream_errors[stream - 1]
        return e, np.arange(1, e.size + 1) / e.size

    def summaries(self) -> tuple[CdfSummary, CdfSummary]:
        return cdf_summary(self.stream_errors[0]), cdf_summary(self.stream_errors[1])


def _sample_fields(pattern_stack, grid, theta, phi):
    """Bilinear sample of stacked complex fields (k, nt, np) at (theta, phi)."""
    ht, hp = grid.theta_step, grid.phi_step
    it = np.minimum((theta / ht).astype(int), grid.n_theta - 2)
    ft = theta / ht - it
    jr = np.floor(phi / hp).astype(int)
    fp = phi / hp - jr
    j0 = jr % grid.n_phi
    j1 = (jr + 1) % grid.n_phi
    return (
        (1.0 - ft) * (1.0 - fp) * pattern_stack[:, it, j0]
        + (1.0 - ft) * fp * pattern_stack[:, it, j1]
        + ft * (1.0 - fp) * pattern_stack[:, it + 1, j0]
        + ft * fp * pattern_stack[:, it + 1, j1]
    )


def _mc_chunk(args):
    """Evaluate one scenario chunk; pure function of its inputs."""
    (basis_fields, state_fields, grid, pols, points, theta, phi,
     condition_cap) = args
    m = points.size
    n = theta.shape[1]

    # Receiver responses to the two basis patterns and the M states:
    # project the sampled (theta, phi) components onto each polarization.
    resp = []
    for rx in range(2):
        et = _sample_fields(basis_fields[0], grid, theta[rx], phi[rx])
        ep = _sample_fields(basis_fields[1], grid, theta[rx], phi[rx])
        resp.append(np.conj(pols[rx, 0]) * et + np.conj(pols[rx, 1]) * ep)
    h = np.empty((n, 2, 2), dtype=complex)
    h[:, 0, :] = resp[0].T
    h[:, 1, :] = resp[1].T

    f = np.empty((n, 2, m), dtype=complex)
    for rx in range(2):
        et = _sample_fields(state_fields[0], grid, theta[rx], phi[rx])
        ep = _sample_fields(state_fields[1], grid, theta[rx], phi[rx])
        f[:, rx, :] = (np.conj(pols[rx, 0]) * et + np.conj(pols[rx, 1]) * ep).T

    det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
    f2 = np.sum(np.abs(h) ** 2, axis=(1, 2))
    s2max = 0.5 * (f2 + np.sqrt(np.maximum(f2 * f2 - 4.0 * np.abs(det) ** 2, 0.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(np.abs(det) > 0.0, s2max / np.abs(det), np.inf)
    keep = cond <= condition_cap
    n_rejected = int(n - np.count_nonzero(keep))

    hk, fk, detk = h[keep], f[keep], det[keep]
    e1 = np.empty((hk.shape[0], m * m))
    e2 = np.empty_like(e1)
    col = 0
    for k1 in range(m):
        for k2 in range(m):
            x1, x2 = points[k1], points[k2]
            k = (k2 - k1) % m
            y1 = x1 * fk[:, 0, k]
            y2 = x1 * fk[:, 1, k]
            xh1 = (hk[:, 1, 1] * y1 - hk[:, 0, 1] * y2) / detk
            xh2 = (hk[:, 0, 0] * y2 - hk[:, 1, 0] * y1) / detk
            e1[:, col] = np.abs(xh1 - x1)
            e2[:, col] = np.abs(xh2 - x2)
            col += 1
    return e1.ravel(), e2.ravel(), n_rejected


def run_monte_carlo(
    s_hat: StatePatternSet,
    basis_hat: BasisPair,
    constellation: PskConstellation,
    n_scenarios: int,
    separation_deg: tuple[float, float] = (3.0, 5.0),
    seed: int = 0,
    threads: int = 1,
    rx_polarizations=(THETA_POL, THETA_POL),
    condition_cap: float = DEFAULT_CONDITION_CAP,
) -> MonteCarloResult:
    """Seeded sweep over random single-path LOS receive geometries.

    Per scenario the first receive angle is drawn area-uniformly on the
    sphere and the second lies at a great-circle distance uniform in
    ``separation_deg`` along a uniform random bearing.  Every symbol pair
    of the constellation is evaluated noiselessly; geometries whose
    channel condition number exceeds ``condition_cap`` are rejected and
    tallied.  Identical (seed, parameters) give bitwise-identical output
    for any ``threads``.
    """
    if n_scenarios < 1:
        raise InvalidArgumentError("n_scenarios must be >= 1")
    lo, hi = float(separation_deg[0]), float(separation_deg[1])
    if not (0.0 < lo <= hi):
        raise InvalidArgumentError(
            f"separation interval must satisfy 0 < min <= max, got ({lo}, {hi})"
        )
    if threads < 1:
        raise InvalidArgumentError("threads must be >= 1")
    if constellation.order != s_hat.ratios.order:
        raise RatioSetMismatchError(
            "constellation order does not match the state-pattern alphabet"
        )
    require_same_grid(s_hat.grid, basis_hat.grid)
    pols = np.asarray(rx_polarizations, dtype=complex)
    if pols.shape != (2, 2) or np.any(np.abs(np.linalg.norm(pols, axis=1) - 1.0) > 1e-6):
        raise InvalidArgumentError("rx_polarizations must be two unit 2-vectors")

    n = int(n_scenarios)
    rng = np.random.default_rng(seed)
    u = rng.random((4, n))
    theta1 = np.arccos(1.0 - 2.0 * u[0])
    phi1 = 2.0 * np.pi * u[1]
    dist = np.deg2rad(lo) + (np.deg2rad(hi) - np.deg2rad(lo)) * u[2]
    bearing = 2.0 * np.pi * u[3]
    theta2, phi2 = great_circle_offset(theta1, phi1, dist, bearing)
    theta = np.stack([theta1, theta2])
    phi = np.stack([phi1, phi2])

    grid = s_hat.grid
    m = constellation.order
    basis_fields = (
        np.stack([basis_hat.b1.e_theta, basis_hat.b2.e_theta]),
        np.stack([basis_hat.b1.e_phi, basis_hat.b2.e_phi]),
    )
    state_fields = (
        np.stack([s_hat.state(k).e_theta for k in range(m)]),
        np.stack([s_hat.state(k).e_phi for k in range(m)]),
    )
    points = constellation.points

    chunks = [
        (basis_fields, state_fields, grid, pols, points,
         theta[:, i:i + _CHUNK], phi[:, i:i + _CHUNK], condition_cap)
        for i in range(0, n, _CHUNK)
    ]
    if threads == 1 or len(chunks) == 1:
        results = [_mc_chunk(c) for c in chunks]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_mc_chunk, chunks))

    e1 = np.sort(np.concatenate([r[0] for r in results]))
    e2 = np.sort(np.concatenate([r[1] for r in results]))
    n_rejected = sum(r[2] for r in results)
    e1.setflags(write=False)
    e2.setflags(write=False)
    return MonteCarloResult(
        stream_errors=(e1, e2),
        n_scenarios=n,
        n_rejected=n_rejected,
        seed=int(seed),
        separation_deg=(lo, hi),
    )
