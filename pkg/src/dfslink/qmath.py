"""Complex linear algebra and finite-dimensional quantum state primitives.

Conventions used throughout the package:

* single-qubit polarization basis is H = 0, V = 1;
* multi-qubit states order their tensor factors most-significant first,
  so qubit 0 owns the leftmost Kronecker factor;
* states are dense (protocol-layer dimensions never exceed 16);
* conditional (post-selected) states are kept sub-normalized and carry an
  explicit ``norm`` field instead of being silently renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "StateVector",
    "DensityOperator",
    "Operator",
    "tensor",
    "partial_trace",
    "apply_kraus",
    "fidelity_with_pure",
    "eig_hermitian",
    "trace_distance",
    "projector",
    "KET_H",
    "KET_V",
    "KET_D",
    "KET_DBAR",
    "KET_L",
    "KET_R",
    "PAULI_X",
    "PAULI_Y",
    "PAULI_Z",
]

# Construction-time tolerance (double precision headroom for dim <= 16) and
# the looser tolerance used for channel completeness / positivity checks.
ATOL_STRICT = 1e-12
ATOL_CHANNEL = 1e-10


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state over a finite-dimensional Hilbert space.

    Parameters
    ----------
    amplitudes : array_like
        Complex amplitudes; length fixes the dimension.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size < 1:
            raise ValueError("state vector needs at least one amplitude")
        if not np.all(np.isfinite(amp.view(float))):
            raise ValueError("state vector amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _freeze(amp.copy()))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def num_qubits(self) -> int:
        n = int(round(np.log2(self.dim)))
        if 2**n != self.dim:
            raise ValueError(f"dimension {self.dim} is not a power of two")
        return n

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / n)

    def density(self) -> "DensityOperator":
        """Return |psi><psi| (sub-normalized if the vector is)."""
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "StateVector") -> complex:
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, positive semidefinite state matrix.

    The matrix may be sub-normalized (post-selected conditional states); its
    trace is recorded in ``norm``.  ``normalized()`` divides it out.
    """

    matrix: np.ndarray
    norm: float = field(init=False)  # trace, recorded at construction

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got {m.shape}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) >= ATOL_STRICT:
            raise ValueError("density matrix is not Hermitian within 1e-12")
        tr = np.trace(m)
        if abs(tr.imag) >= ATOL_STRICT:
            raise ValueError("density matrix trace is not real")
        if tr.real < -ATOL_STRICT or tr.real > 1.0 + 1e-9:
            raise ValueError(f"density matrix trace {tr.real} outside [0, 1]")
        if m.shape[0] <= 64:
            lam_min = float(np.linalg.eigvalsh(m)[0])
            if lam_min < -ATOL_CHANNEL:
                raise ValueError(f"density matrix not PSD: min eigenvalue {lam_min}")
        object.__setattr__(self, "matrix", _freeze(m.copy()))
        object.__setattr__(self, "norm", float(tr.real))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_qubits(self) -> int:
        n = int(round(np.log2(self.dim)))
        if 2**n != self.dim:
            raise ValueError(f"dimension {self.dim} is not a power of two")
        return n

    def normalized(self) -> "DensityOperator":
        if self.norm <= 0.0:
            raise ValueError("cannot normalize a zero-trace state")
        return DensityOperator(self.matrix / self.norm)


@dataclass(frozen=True, eq=False)
class Operator:
    """General linear map between finite-dimensional spaces.

    ``is_unitary=True`` is validated on construction (||U+ U - I||_max < 1e-12).
    """

    matrix: np.ndarray
    is_unitary: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2:
            raise ValueError("operator matrix must be two-dimensional")
        if self.is_unitary:
            if m.shape[0] != m.shape[1]:
                raise ValueError("unitary operators must be square")
            err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
            if err >= ATOL_STRICT:
                raise ValueError(f"matrix fails unitarity check: residual {err}")
        object.__setattr__(self, "matrix", _freeze(m.copy()))

    @property
    def dim_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def dim_out(self) -> int:
        return self.matrix.shape[0]


KindType = Union[StateVector, DensityOperator, Operator]


def _matrix_of(x) -> np.ndarray:
    if isinstance(x, (DensityOperator, Operator)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def tensor(a: KindType, b: KindType) -> KindType:
    """Kronecker product of two like objects, a's indices most significant."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(np.kron(a.matrix, b.matrix))
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(np.kron(a.matrix, b.matrix),
                        is_unitary=a.is_unitary and b.is_unitary)
    raise TypeError(
        f"tensor requires two objects of the same kind, got "
        f"{type(a).__name__} and {type(b).__name__}"
    )


def partial_trace(rho: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    """Reduced state on the qubits in ``keep`` (ascending order), trace kept.

    Parameters
    ----------
    rho : DensityOperator
        State over n qubits (dimension must be a power of two).
    keep : iterable of int
        Qubit indices to retain, 0 = most significant factor.
    """
    n = rho.num_qubits
    keep_sorted = sorted(set(int(k) for k in keep))
    if not keep_sorted:
        raise ValueError("must keep at least one qubit")
    if keep_sorted[0] < 0 or keep_sorted[-1] >= n:
        raise ValueError(f"keep indices {keep_sorted} out of range for {n} qubits")
    drop = [q for q in range(n) if q not in keep_sorted]
    tens = rho.matrix.reshape([2] * (2 * n))
    for q in sorted(drop, reverse=True):
        m = tens.ndim // 2
        tens = np.trace(tens, axis1=q, axis2=q + m)
    d = 2 ** len(keep_sorted)
    return DensityOperator(tens.reshape(d, d))


def apply_kraus(rho: DensityOperator, kraus: Sequence) -> DensityOperator:
    """Apply sum_i K_i rho K_i^dagger.

    The Kraus set must satisfy sum_i K_i^dagger K_i <= I within 1e-10
    (equality for trace-preserving channels); trace-decreasing maps return a
    sub-normalized state whose ``norm`` records the success probability.
    """
    mats = [_matrix_of(k) for k in kraus]
    if not mats:
        raise ValueError("empty Kraus set")
    d = rho.dim
    for m in mats:
        if m.shape != (d, d):
            raise ValueError(f"Kraus operator shape {m.shape} does not match dim {d}")
    comp = sum(m.conj().T @ m for m in mats)
    excess = float(np.linalg.eigvalsh(comp - np.eye(d))[-1])
    if excess > ATOL_CHANNEL:
        raise ValueError(
            f"Kraus completeness violated: sum K+K exceeds identity by {excess}"
        )
    out = np.zeros((d, d), dtype=complex)
    for m in mats:
        out += m @ rho.matrix @ m.conj().T
    out = 0.5 * (out + out.conj().T)  # scrub rounding asymmetry
    return DensityOperator(out)


def fidelity_with_pure(rho: DensityOperator, psi: StateVector) -> float:
    """<psi| rho |psi> for a normalized pure target, clipped to [0, 1]."""
    if psi.dim != rho.dim:
        raise ValueError(f"dimension mismatch: rho {rho.dim}, psi {psi.dim}")
    val = complex(psi.amplitudes.conj() @ rho.matrix @ psi.amplitudes)
    if abs(val.imag) >= ATOL_STRICT:
        raise ValueError(f"fidelity came out complex: {val}")
    return float(min(max(val.real, 0.0), 1.0))


def eig_hermitian(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and matching eigenvector columns.

    Raises on inputs that are not Hermitian within 1e-10.
    """
    mat = _matrix_of(m)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("eig_hermitian requires a square matrix")
    if np.max(np.abs(mat - mat.conj().T), initial=0.0) >= ATOL_CHANNEL:
        raise ValueError("matrix is not Hermitian within 1e-10")
    vals, vecs = np.linalg.eigh(mat)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def trace_distance(a: DensityOperator, b: DensityOperator) -> float:
    """(1/2) ||a - b||_1 between two states of equal dimension."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    diff = a.matrix - b.matrix
    vals = np.linalg.eigvalsh(diff)
    return float(0.5 * np.sum(np.abs(vals)))


def projector(psi: StateVector) -> np.ndarray:
    return np.outer(psi.amplitudes, psi.amplitudes.conj())


_SQ2 = np.sqrt(2.0)

KET_H = StateVector([1.0, 0.0])
KET_V = StateVector([0.0, 1.0])
KET_D = StateVector([1.0 / _SQ2, 1.0 / _SQ2])
KET_DBAR = StateVector([1.0 / _SQ2, -1.0 / _SQ2])
# Circular basis: L is the +1 eigenstate of Pauli Y, R the -1 eigenstate.
KET_L = StateVector([1.0 / _SQ2, 1.0j / _SQ2])
KET_R = StateVector([1.0 / _SQ2, -1.0j / _SQ2])

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
