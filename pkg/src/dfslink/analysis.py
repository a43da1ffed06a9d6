"""Statistical and information-theoretic analysis of simulated experiments.

Covers the Bell-correlation test with Poisson error propagation, coincidence
count generation, two-qubit state tomography (linear inversion plus
maximum-likelihood on a Cholesky parametrization), Wootters concurrence and
entanglement of formation, parametric-bootstrap error bars, and the
path-delay interference model with its Gaussian fit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .qmath import (
    KET_D,
    KET_DBAR,
    KET_H,
    KET_L,
    KET_R,
    KET_V,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    DensityOperator,
    Operator,
    StateVector,
    eig_hermitian,
    projector,
)

__all__ = [
    "MeasSetting",
    "CountRecord",
    "TomographyResult",
    "DEFAULT_CHSH_ANGLES",
    "chsh_value",
    "chsh_settings",
    "chsh_from_counts",
    "tomography_settings",
    "stokes_settings",
    "simulate_counts",
    "tomo_linear",
    "tomo_mle",
    "concurrence",
    "entanglement_of_formation",
    "monte_carlo_sd",
    "bell_fidelity_from_counts",
    "DelayScanModel",
    "GaussianFitResult",
    "delay_scan",
    "gaussian_fit",
    "transform_limited_fwhm",
]

logger = logging.getLogger(__name__)

# Analyzer settings optimal for the target Bell pair; degrees.
DEFAULT_CHSH_ANGLES = (0.0, 45.0, -22.5, -67.5)

_NAMED_ANALYZERS = {
    "H": KET_H,
    "V": KET_V,
    "D": KET_D,
    "A": KET_DBAR,
    "L": KET_L,
    "R": KET_R,
}

Analyzer = Union[str, float]


def _analyzer_ket(a: Analyzer) -> StateVector:
    if isinstance(a, str):
        try:
            return _NAMED_ANALYZERS[a]
        except KeyError:
            raise ValueError(f"unknown analyzer label {a!r}") from None
    theta = math.radians(float(a))
    return StateVector([math.cos(theta), math.sin(theta)])


@dataclass(frozen=True, eq=True)
class MeasSetting:
    """One joint analyzer setting: a polarization name (H/V/D/A/L/R) or a
    linear-polarizer angle in degrees per side."""

    analyzer_a: Analyzer
    analyzer_b: Analyzer
    label: str = ""

    def __post_init__(self):
        for name in ("analyzer_a", "analyzer_b"):
            a = getattr(self, name)
            if isinstance(a, str):
                if a not in _NAMED_ANALYZERS:
                    raise ValueError(f"unknown analyzer label {a!r}")
            else:
                object.__setattr__(self, name, round(float(a) % 180.0, 9))

    def projector_a(self) -> np.ndarray:
        return projector(_analyzer_ket(self.analyzer_a))

    def projector_b(self) -> np.ndarray:
        return projector(_analyzer_ket(self.analyzer_b))

    def joint_projector(self) -> np.ndarray:
        return np.kron(self.projector_a(), self.projector_b())


@dataclass(frozen=True, eq=False)
class CountRecord:
    """A coincidence count at one setting.

    ``scale`` carries the Poisson normalization (expected total used when the
    counts were generated); tomography fitters fall back to estimating it
    from a complete basis subset when absent.
    """

    setting: MeasSetting
    count: float
    duration_s: float = 1.0
    scale: Optional[float] = None

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True, eq=False)
class TomographyResult:
    rho_hat: DensityOperator
    log_likelihood: float
    iterations: int
    converged: bool
    log_likelihood_history: tuple = ()


def _pauli_observable(theta_deg: float) -> np.ndarray:
    t = math.radians(theta_deg)
    return math.cos(2 * t) * PAULI_Z + math.sin(2 * t) * PAULI_X


def chsh_value(rho, settings: Sequence[float] = DEFAULT_CHSH_ANGLES) -> float:
    """Bell parameter S = E(a,b) - E(a,b') + E(a',b) + E(a',b').

    E(ta, tb) is the expectation of sigma(ta) (x) sigma(tb) with
    sigma(t) = cos(2t) Z + sin(2t) X; angles in degrees.
    """
    mat = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    if mat.shape != (4, 4):
        raise ValueError("chsh_value requires a two-qubit state")
    a, ap, b, bp = settings

    def corr(ta, tb):
        obs = np.kron(_pauli_observable(ta), _pauli_observable(tb))
        return float(np.real(np.trace(mat @ obs)))

    return corr(a, b) - corr(a, bp) + corr(ap, b) + corr(ap, bp)


def chsh_settings(settings: Sequence[float] = DEFAULT_CHSH_ANGLES) -> list[MeasSetting]:
    """The 16 analyzer pairs {a, a+90} x {b, b+90} for the four CHSH terms."""
    a, ap, b, bp = settings
    out = []
    for ta in (a, ap):
        for tb in (b, bp):
            for da in (0.0, 90.0):
                for db in (0.0, 90.0):
                    out.append(
                        MeasSetting(
                            ta + da,
                            tb + db,
                            label=f"chsh({ta:+.1f}{'+' if da else ''},"
                                  f"{tb:+.1f}{'+' if db else ''})",
                        )
                    )
    return out


def _angle_key(a: Analyzer) -> float:
    ket = _analyzer_ket(a)
    # Linear analyzers only; map the ket back to its angle mod 180 degrees.
    theta = math.degrees(math.atan2(float(ket.amplitudes[1].real),
                                    float(ket.amplitudes[0].real)))
    return round(theta % 180.0, 6)


def chsh_from_counts(
    records: Sequence[CountRecord],
    settings: Sequence[float] = DEFAULT_CHSH_ANGLES,
) -> tuple[float, float]:
    """Estimate S and its standard deviation from 16 coincidence counts.

    Per CHSH term, E = (C(a,b) + C(a+,b+) - C(a,b+) - C(a+,b)) / sum(C); the
    error bar propagates Poisson variances through the ratio.
    """
    table = {}
    for rec in records:
        key = (_angle_key(rec.setting.analyzer_a), _angle_key(rec.setting.analyzer_b))
        table[key] = table.get(key, 0.0) + float(rec.count)
    a, ap, b, bp = settings
    s_total = 0.0
    var_total = 0.0
    for ta in (a, ap):
        for tb in (b, bp):
            sign = -1.0 if (ta == a and tb == bp) else 1.0
            counts = []
            for da in (0.0, 90.0):
                for db in (0.0, 90.0):
                    key = (round((ta + da) % 180.0, 6), round((tb + db) % 180.0, 6))
                    if key not in table:
                        raise ValueError(f"missing counts for analyzer pair {key}")
                    counts.append(table[key])
            c_pp, c_pm, c_mp, c_mm = counts
            total = c_pp + c_pm + c_mp + c_mm
            if total <= 0:
                raise ValueError(f"zero total counts for setting pair ({ta}, {tb})")
            e = (c_pp + c_mm - c_pm - c_mp) / total
            signs = np.array([1.0, -1.0, -1.0, 1.0])
            var_e = float(np.sum(np.array(counts) * (signs - e) ** 2)) / total**2
            s_total += sign * e
            var_total += var_e
    return s_total, math.sqrt(var_total)


def tomography_settings() -> list[MeasSetting]:
    """Product analyzer set {H, V, D, R} x {H, V, D, R}: 16 settings,
    informationally complete for two qubits."""
    names = ("H", "V", "D", "R")
    return [MeasSetting(a, b, label=f"{a}{b}") for a in names for b in names]


def stokes_settings() -> list[MeasSetting]:
    """Three complete correlation bases (HV, DA, RL products): 12 settings,
    enough for a direct Bell-state fidelity estimate."""
    out = []
    for pair in (("H", "V"), ("D", "A"), ("R", "L")):
        for a in pair:
            for b in pair:
                out.append(MeasSetting(a, b, label=f"{a}{b}"))
    return out


def simulate_counts(
    rho: DensityOperator,
    settings: Sequence[MeasSetting],
    totals: Union[float, Sequence[float]],
    seed: int,
    duration_s: float = 1.0,
) -> list[CountRecord]:
    """Poisson coincidence counts with mean total * <projector>.

    ``totals`` is the per-setting expected total (scalar broadcast).
    Deterministic for a fixed seed.
    """
    totals_arr = np.broadcast_to(np.asarray(totals, dtype=float), (len(settings),))
    if np.any(totals_arr <= 0):
        raise ValueError("totals must be positive")
    rng = np.random.default_rng(seed)
    records = []
    for setting, total in zip(settings, totals_arr):
        p = float(np.real(np.trace(rho.matrix @ setting.joint_projector())))
        p = min(max(p, 0.0), 1.0)
        count = int(rng.poisson(total * p))
        records.append(
            CountRecord(setting, count, duration_s=duration_s, scale=float(total))
        )
    return records


def _record_scales(records: Sequence[CountRecord]) -> np.ndarray:
    scales = np.array([r.scale if r.scale is not None else np.nan for r in records])
    if not np.any(np.isnan(scales)):
        return scales
    # Fall back to the complete H/V basis subset for the overall rate.
    total = 0.0
    for r in records:
        if {r.setting.analyzer_a, r.setting.analyzer_b} <= {"H", "V"}:
            total += float(r.count)
    if total <= 0:
        raise ValueError(
            "records carry no scale and no complete H/V subset to estimate it"
        )
    return np.where(np.isnan(scales), total, scales)


def tomo_linear(records: Sequence[CountRecord]) -> Operator:
    """Linear inversion of measured frequencies.

    Returns a Hermitian, trace-one estimate; positivity is not guaranteed.
    """
    projs = [r.setting.joint_projector() for r in records]
    design = np.array([p.T.reshape(-1) for p in projs])
    if design.shape[0] < 16 or np.linalg.matrix_rank(design) < 16:
        raise ValueError("settings are not informationally complete")
    counts = np.array([float(r.count) for r in records])
    sol, *_ = np.linalg.lstsq(design, counts.astype(complex), rcond=None)
    chi = sol.reshape(4, 4)
    chi = 0.5 * (chi + chi.conj().T)
    tr = float(np.real(np.trace(chi)))
    if abs(tr) < 1e-12:
        raise ValueError("degenerate counts: zero-trace linear estimate")
    return Operator(chi / tr)


def _physical_projection(hermitian: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    vals, vecs = eig_hermitian(hermitian)
    vals = np.maximum(vals.real, floor)
    rho = (vecs * vals) @ vecs.conj().T
    return rho / np.real(np.trace(rho))


_LOWER_INDICES = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]


def _t_from_params(t: np.ndarray) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    m[np.diag_indices(4)] = t[:4]
    for k, (i, j) in enumerate(_LOWER_INDICES):
        m[i, j] = t[4 + 2 * k] + 1j * t[5 + 2 * k]
    return m


def _params_from_t(m: np.ndarray) -> np.ndarray:
    t = np.zeros(16)
    t[:4] = np.real(np.diag(m))
    for k, (i, j) in enumerate(_LOWER_INDICES):
        t[4 + 2 * k] = m[i, j].real
        t[5 + 2 * k] = m[i, j].imag
    return t


def _poisson_objective(t: np.ndarray, projs, counts, scales,
                       p_floor: float = 1e-12):
    """Log-likelihood and its gradient in the Cholesky parameters.

    rho(t) = T+T / tr(T+T); the gradient is the Wirtinger derivative wrt
    conj(T) mapped onto the real parameter vector.
    """
    tm = _t_from_params(t)
    g = tm.conj().T @ tm
    trg = float(np.real(np.trace(g)))
    if trg <= 0:
        raise FloatingPointError("degenerate Cholesky factor")
    probs = np.maximum(np.real(np.einsum("ij,kji->k", g, projs)) / trg, p_floor)
    mu = scales * probs
    ll = float(np.sum(counts * np.log(mu) - mu))
    w = counts / probs - scales
    omega = np.einsum("k,kij->ij", w, projs)
    g_t = tm @ (omega - float(np.sum(w * probs)) * np.eye(4)) / trg
    grad = np.zeros(16)
    grad[:4] = 2.0 * np.real(np.diag(g_t))
    for k, (i, j) in enumerate(_LOWER_INDICES):
        grad[4 + 2 * k] = 2.0 * g_t[i, j].real
        grad[5 + 2 * k] = 2.0 * g_t[i, j].imag
    return ll, grad


def tomo_mle(
    records: Sequence[CountRecord],
    init: Optional[np.ndarray] = None,
    improvement_tol: float = 1e-9,
    max_iterations: int = 10_000,
) -> TomographyResult:
    """Maximum-likelihood state reconstruction.

    The state is parametrized as rho = T+T / tr(T+T) with T lower-triangular
    (16 real parameters), so positivity and unit trace hold by construction.
    The Poisson log-likelihood sum_k (n_k log mu_k - mu_k) with
    mu_k = N_k <P_k> is maximized with L-BFGS (analytic gradient); the
    Armijo line search makes the likelihood non-decreasing across accepted
    iterations.  Non-convergence is reported through the ``converged`` flag.
    """
    projs = np.array([r.setting.joint_projector() for r in records])
    counts = np.array([float(r.count) for r in records])
    scales = _record_scales(records)
    design = np.array([p.T.reshape(-1) for p in projs])
    if np.linalg.matrix_rank(design) < 16:
        raise ValueError("settings are not informationally complete")

    def loglik(t):
        return _poisson_objective(t, projs, counts, scales)[0]

    def neg_loglik_and_grad(t):
        ll, grad = _poisson_objective(t, projs, counts, scales)
        return -ll, -grad

    if init is None:
        linear = tomo_linear(records).matrix
        t0 = _params_from_t(np.linalg.cholesky(_physical_projection(linear)))
    else:
        t0 = np.asarray(init, dtype=float)
        if t0.shape != (16,):
            raise ValueError("init must be a 16-vector of Cholesky parameters")

    history = [loglik(t0)]

    def callback(tk):
        history.append(loglik(tk))

    res = optimize.minimize(
        neg_loglik_and_grad,
        t0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": max_iterations, "ftol": 1e-15, "gtol": 1e-10},
    )
    tm = _t_from_params(res.x)
    g = tm.conj().T @ tm
    rho_hat = DensityOperator(g / np.real(np.trace(g)))
    final_ll = history[-1]
    improvements = np.diff(history)
    converged = bool(
        res.nit < max_iterations
        and (len(improvements) == 0 or abs(improvements[-1]) < improvement_tol
             or res.success)
    )
    if not converged:
        logger.warning("tomography MLE did not converge after %d iterations", res.nit)
    return TomographyResult(
        rho_hat=rho_hat,
        log_likelihood=final_ll,
        iterations=int(res.nit),
        converged=converged,
        log_likelihood_history=tuple(history),
    )


def concurrence(rho: DensityOperator) -> float:
    """Wootters concurrence of a two-qubit state.

    The lambdas are the square-root eigenvalues of rho rho~ with
    rho~ = (Y(x)Y) rho* (Y(x)Y); they are computed through the similar
    Hermitian matrix sqrt(rho) rho~ sqrt(rho) for numerical stability.
    """
    if rho.dim != 4:
        raise ValueError("concurrence requires a two-qubit state")
    yy = np.kron(PAULI_Y, PAULI_Y)
    vals, vecs = eig_hermitian(rho.matrix)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    rho_tilde = yy @ rho.matrix.conj() @ yy
    m = root @ rho_tilde @ root
    lams = np.sqrt(np.clip(np.linalg.eigvalsh(m), 0.0, None))
    return float(max(0.0, lams[3] - lams[2] - lams[1] - lams[0]))


def _binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * math.log2(x) - (1 - x) * math.log2(1 - x))


def entanglement_of_formation(rho: DensityOperator) -> float:
    """E = h((1 + sqrt(1 - C^2)) / 2) with h the binary entropy."""
    c = concurrence(rho)
    return _binary_entropy(0.5 * (1.0 + math.sqrt(max(0.0, 1.0 - c * c))))


def monte_carlo_sd(
    records: Sequence[CountRecord],
    statistic: Callable[[Sequence[CountRecord]], float],
    n_resamples: int = 100,
    seed: int = 0,
) -> float:
    """Parametric-bootstrap standard deviation of a count statistic.

    Each resample redraws every count as Poisson(observed) with a seed
    derived from (seed, index), recomputes the statistic, and the sample
    standard deviation is returned.  Resamples on which the statistic raises
    are excluded and reported via a warning log.
    """
    if n_resamples < 2:
        raise ValueError("need at least two resamples")
    values = []
    failures = 0
    for i in range(n_resamples):
        rng = np.random.default_rng((seed, i))
        resampled = [
            CountRecord(
                r.setting,
                int(rng.poisson(float(r.count))),
                duration_s=r.duration_s,
                scale=r.scale,
            )
            for r in records
        ]
        try:
            values.append(float(statistic(resampled)))
        except Exception:  # noqa: BLE001 - failed resamples are excluded by contract
            failures += 1
    if failures:
        logger.warning(
            "monte_carlo_sd: excluded %d of %d resamples after statistic failures",
            failures,
            n_resamples,
        )
    if len(values) < 2:
        raise ValueError("too few successful resamples to estimate a spread")
    return float(np.std(values, ddof=1))


def bell_fidelity_from_counts(records: Sequence[CountRecord]) -> tuple[float, float]:
    """Direct fidelity to the HH-VV Bell pair from three correlation bases.

    Uses F = (1 + <ZZ> - <XX> + <YY>) / 4 with each correlation estimated
    from its complete 4-outcome basis; the error bar propagates Poisson
    variances.
    """
    table = {}
    for r in records:
        table[(r.setting.analyzer_a, r.setting.analyzer_b)] = float(r.count)
    f = 0.25
    var = 0.0
    for pair, sign in ((("H", "V"), 1.0), (("D", "A"), -1.0), (("R", "L"), 1.0)):
        plus, minus = pair
        try:
            c_pp = table[(plus, plus)]
            c_pm = table[(plus, minus)]
            c_mp = table[(minus, plus)]
            c_mm = table[(minus, minus)]
        except KeyError as exc:
            raise ValueError(f"missing record for setting {exc}") from None
        total = c_pp + c_pm + c_mp + c_mm
        if total <= 0:
            raise ValueError(f"zero total counts in basis {pair}")
        e = (c_pp + c_mm - c_pm - c_mp) / total
        signs = np.array([1.0, -1.0, -1.0, 1.0])
        var_e = float(np.sum(np.array([c_pp, c_pm, c_mp, c_mm]) * (signs - e) ** 2)) / total**2
        f += 0.25 * sign * e
        var += (0.25) ** 2 * var_e
    return f, math.sqrt(var)


@dataclass(frozen=True)
class DelayScanModel:
    """Complementary-basis coincidence model against path delay.

    ``coherence_fwhm`` is the FWHM of the Gaussian interference envelope in
    the same units as the delays (micrometres by convention);
    ``wavelength`` is kept for the coherence-length-to-wavelength ratio.
    """

    background: float
    visibility: float
    coherence_fwhm: float
    wavelength: float = 0.79

    def __post_init__(self):
        if self.coherence_fwhm <= 0:
            raise ValueError("coherence FWHM must be positive")
        if self.background <= 0:
            raise ValueError("background count level must be positive")


def _envelope(delays: np.ndarray, fwhm: float) -> np.ndarray:
    return np.exp(-4.0 * math.log(2.0) * (delays / fwhm) ** 2)


def delay_scan(model: DelayScanModel, delays) -> tuple[np.ndarray, np.ndarray]:
    """Coincidence curves for parallel (DD) and crossed (D,Dbar) analyzers.

    C_DD = B (1 + V g) / 2 and C_DDbar = B (1 - V g) / 2 with a Gaussian
    envelope g of FWHM equal to the coherence length.
    """
    d = np.asarray(delays, dtype=float)
    g = _envelope(d, model.coherence_fwhm)
    c_dd = model.background * (1.0 + model.visibility * g) / 2.0
    c_ddbar = model.background * (1.0 - model.visibility * g) / 2.0
    return c_dd, c_ddbar


@dataclass(frozen=True, eq=False)
class GaussianFitResult:
    visibility: float
    coherence_fwhm: float
    background: float
    residuals: np.ndarray
    converged: bool


def gaussian_fit(delays, counts_dd, counts_ddbar) -> GaussianFitResult:
    """Weighted least-squares fit of the delay-scan model.

    Poisson weights (1/sqrt(max(c, 1))) on both curves jointly; returns the
    estimates with per-point weighted residuals.  Non-convergence is
    reported through the ``converged`` flag.
    """
    d = np.asarray(delays, dtype=float)
    dd = np.asarray(counts_dd, dtype=float)
    ddbar = np.asarray(counts_ddbar, dtype=float)
    if d.size < 5:
        raise ValueError("need at least five delay points")
    span = float(d.max() - d.min())
    if span <= 0:
        raise ValueError("delay points must span a nonzero range")

    w_dd = 1.0 / np.sqrt(np.maximum(dd, 1.0))
    w_ddbar = 1.0 / np.sqrt(np.maximum(ddbar, 1.0))

    def residual(params):
        v0, lc, b = params
        g = _envelope(d, max(lc, 1e-9))
        r1 = (b * (1.0 + v0 * g) / 2.0 - dd) * w_dd
        r2 = (b * (1.0 - v0 * g) / 2.0 - ddbar) * w_ddbar
        return np.concatenate([r1, r2])

    b0 = float(np.mean(dd + ddbar))
    contrast = (dd - ddbar) / np.maximum(dd + ddbar, 1e-9)
    v0 = float(np.clip(np.max(contrast), 0.05, 1.0))
    # Width guess: spread of the delays where the contrast stays above half
    # its peak.
    above = d[contrast > v0 / 2.0]
    l0 = float(above.max() - above.min()) if above.size >= 2 else span / 4.0
    l0 = max(l0, span / 50.0)
    res = optimize.least_squares(
        residual,
        x0=[v0, l0, b0],
        bounds=([0.0, 1e-6, 1e-6], [1.5, 10.0 * span, np.inf]),
    )
    v_fit, l_fit, b_fit = res.x
    return GaussianFitResult(
        visibility=float(v_fit),
        coherence_fwhm=float(l_fit),
        background=float(b_fit),
        residuals=res.fun.copy(),
        converged=bool(res.success),
    )


def transform_limited_fwhm(wavelength: float, bandwidth: float) -> float:
    """Coherence length (FWHM) of a Gaussian spectrum:
    (2 ln2 / pi) lambda^2 / dlambda, same length units in and out."""
    if wavelength <= 0 or bandwidth <= 0:
        raise ValueError("wavelength and bandwidth must be positive")
    return (2.0 * math.log(2.0) / math.pi) * wavelength**2 / bandwidth
