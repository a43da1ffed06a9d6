"""Qubit-layer dephasing channels for the fibre transmission.

A polarization-maintaining fibre transmits the two basis polarizations
faithfully but scrambles their relative phase.  Photons sent through it
within the phase correlation time pick up a *common* random phase
(collective dephasing); a residual inter-photon jitter can be added on top.
All maps here are computed analytically: an off-diagonal element whose
channel photons differ by m excitations of the dephasing basis state 1 is
multiplied by the characteristic function E[exp(i m phi)] of the phase
distribution.  A Monte-Carlo phase-sampling route exists only as a test
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .qmath import ATOL_STRICT, DensityOperator

__all__ = [
    "DephasingSpec",
    "ChannelPhotonSet",
    "collective_dephase",
    "correlated_dephase",
    "rotate_basis",
    "apply_phase_damping",
    "CIRCULAR_BASIS",
]

# Columns are the circular basis states L, R expressed in H/V.
CIRCULAR_BASIS = np.array([[1.0, 1.0], [1.0j, -1.0j]], dtype=complex) / np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class DephasingSpec:
    """Parametrization of the channel phase noise.

    Attributes
    ----------
    basis : (2, 2) ndarray
        Columns are the orthonormal dephasing basis states (default H/V,
        i.e. the identity; pass ``CIRCULAR_BASIS`` for the reference-frame
        scenario).
    mean_phase : float
        Mean of the common phase, radians.
    per_photon_sigma : float
        Spread of the common phase for the gaussian distribution, radians.
    delta_sigma : float
        Spread of the inter-photon phase difference, radians.  Zero means
        strictly collective noise.
    distribution : {"uniform", "gaussian"}
        Law of the common phase.  "uniform" covers [0, 2*pi) and models a
        fully scrambled fibre.
    """

    basis: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex))
    mean_phase: float = 0.0
    per_photon_sigma: float = 0.0
    delta_sigma: float = 0.0
    distribution: str = "uniform"

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.shape != (2, 2):
            raise ValueError("dephasing basis must be a 2x2 matrix of column states")
        if np.max(np.abs(b.conj().T @ b - np.eye(2))) >= ATOL_STRICT:
            raise ValueError("dephasing basis is not orthonormal within 1e-12")
        if self.per_photon_sigma < 0 or self.delta_sigma < 0:
            raise ValueError("sigma parameters must be non-negative")
        if self.distribution not in ("uniform", "gaussian"):
            raise ValueError(f"unknown phase distribution {self.distribution!r}")
        object.__setattr__(self, "basis", b.copy())

    def is_computational(self) -> bool:
        return bool(np.max(np.abs(self.basis - np.eye(2))) < ATOL_STRICT)

    def common_characteristic(self, m: int) -> complex:
        """E[exp(i m phi)] for the common phase phi."""
        if m == 0:
            return 1.0 + 0.0j
        if self.distribution == "uniform":
            return 0.0 + 0.0j
        s = self.per_photon_sigma
        return np.exp(1j * self.mean_phase * m - 0.5 * (s * m) ** 2)


@dataclass(frozen=True)
class ChannelPhotonSet:
    """Indices of the qubits that physically traverse the channel."""

    indices: frozenset

    def __init__(self, indices: Iterable[int]):
        object.__setattr__(self, "indices", frozenset(int(i) for i in indices))


def _photon_indices(photons, n: int) -> list[int]:
    if isinstance(photons, ChannelPhotonSet):
        idx = sorted(photons.indices)
    else:
        idx = sorted(set(int(i) for i in photons))
    if not idx:
        raise ValueError("channel photon set is empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError(f"photon indices {idx} out of range for {n} qubits")
    return idx


def _basis_one_counts(n: int, channel: Sequence[int]) -> np.ndarray:
    """Number of channel qubits in basis state 1 for every basis ket."""
    dim = 2**n
    counts = np.zeros(dim, dtype=int)
    for q in channel:
        bit = (np.arange(dim) >> (n - 1 - q)) & 1
        counts += bit
    return counts


def apply_phase_damping(
    rho: DensityOperator,
    photons,
    damping: Callable[[np.ndarray], np.ndarray],
) -> DensityOperator:
    """Shared kernel: scale each off-diagonal block by a function of the
    difference in channel basis-1 occupation between bra and ket.

    ``damping`` receives the integer difference matrix and must return the
    complex multipliers elementwise.
    """
    n = rho.num_qubits
    idx = _photon_indices(photons, n)
    k = _basis_one_counts(n, idx)
    diff = k[:, None] - k[None, :]
    return DensityOperator(rho.matrix * damping(diff))


def collective_dephase(rho: DensityOperator, photons, spec: DephasingSpec) -> DensityOperator:
    """All channel photons receive one common random phase.

    Requires ``spec.delta_sigma == 0`` (use :func:`correlated_dephase` for
    residual jitter) and a computational-basis spec (use
    :func:`rotate_basis` for other bases).
    """
    if spec.delta_sigma != 0.0:
        raise ValueError("delta_sigma != 0: route through correlated_dephase")
    if not spec.is_computational():
        raise ValueError("non-computational dephasing basis: route through rotate_basis")
    table = {m: spec.common_characteristic(m) for m in range(-4, 5)}

    def damping(diff):
        out = np.empty(diff.shape, dtype=complex)
        for m in np.unique(diff):
            out[diff == m] = table.get(int(m), spec.common_characteristic(int(m)))
        return out

    return apply_phase_damping(rho, photons, damping)


def correlated_dephase(rho: DensityOperator, photons, spec: DephasingSpec) -> DensityOperator:
    """Common phase plus gaussian jitter on the first photon of the pair.

    ``photons`` is the ordered pair (s, s_prime); the second photon sees the
    common phase, the first sees it plus a zero-mean gaussian offset of
    spread ``delta_sigma``.  Each off-diagonal picks up
    E[exp(i(m_s phi_s + m_s' phi_s'))], which factorizes into the common
    characteristic function at m_s + m_s' and a gaussian damping at m_s.
    """
    if not spec.is_computational():
        raise ValueError("non-computational dephasing basis: route through rotate_basis")
    try:
        s, sprime = (int(p) for p in photons)
    except (TypeError, ValueError):
        raise ValueError("correlated_dephase requires exactly two channel photons")
    if s == sprime:
        raise ValueError("channel photons must be distinct")
    n = rho.num_qubits
    _photon_indices((s, sprime), n)
    ks = _basis_one_counts(n, [s])
    kp = _basis_one_counts(n, [sprime])
    ds = ks[:, None] - ks[None, :]
    dp = kp[:, None] - kp[None, :]
    total = ds + dp
    char = np.empty(total.shape, dtype=complex)
    for m in np.unique(total):
        char[total == m] = spec.common_characteristic(int(m))
    jitter = np.exp(-0.5 * (spec.delta_sigma * ds) ** 2)
    return DensityOperator(rho.matrix * (char * jitter))


def rotate_basis(spec: DephasingSpec, rho: DensityOperator, photons) -> DensityOperator:
    """Dephase in an arbitrary single-qubit basis.

    Conjugates the channel photons into the spec basis, delegates to
    :func:`collective_dephase` or :func:`correlated_dephase` depending on
    ``delta_sigma``, and conjugates back.
    """
    n = rho.num_qubits
    if isinstance(photons, ChannelPhotonSet):
        ordered = sorted(photons.indices)
    else:
        ordered = list(dict.fromkeys(int(i) for i in photons))
    idx = set(_photon_indices(ordered, n))
    w = np.array([[1.0]], dtype=complex)
    binv = spec.basis.conj().T
    for q in range(n):
        w = np.kron(w, binv if q in idx else np.eye(2, dtype=complex))
    rotated = DensityOperator(w @ rho.matrix @ w.conj().T)
    flat = replace(spec, basis=np.eye(2, dtype=complex))
    if spec.delta_sigma == 0.0:
        out = collective_dephase(rotated, idx, flat)
    else:
        if len(ordered) != 2:
            raise ValueError("correlated dephasing needs an ordered photon pair")
        out = correlated_dephase(rotated, tuple(ordered), flat)
    return DensityOperator(w.conj().T @ out.matrix @ w)
