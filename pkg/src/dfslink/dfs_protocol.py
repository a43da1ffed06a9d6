"""End-to-end qubit-layer protocol for channel-protected entanglement transfer.

The sender holds a photon S that may be entangled with arbitrary spectator
qubits.  She appends an ancilla photon in the diagonal state and sends both
through the collectively dephasing channel.  The receiver sifts the photon
pair onto the noise-protected subspace span{|HV>, |VH>} with a parity check
(a polarizing beam splitter plus post-selection at the optics layer) and
decodes by measuring the redundant photon diagonally, applying a pi phase
correction when the minus outcome is kept.  The encoding never looks at the
input amplitudes, so entanglement with the spectators survives untouched.

State bookkeeping: the protocol input orders qubits (spectators..., S); the
ancilla is appended last, and after sifting the surviving logical qubit takes
S's position, so outputs are ordered (spectators..., Y).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .channels import DephasingSpec, apply_phase_damping, rotate_basis
from .qmath import (
    KET_D,
    PAULI_Z,
    DensityOperator,
    StateVector,
    tensor,
)

__all__ = [
    "ProtocolInput",
    "ProtocolOutcome",
    "prepare_phi_minus",
    "prepare_ancilla",
    "encode_append",
    "qpg_sift",
    "decode",
    "distribute",
    "baseline_direct",
]

# Protocol-layer states stay small and dense; five qubits after encoding
# covers up to three spectators plus the channel pair.
MAX_QUBITS = 5


def prepare_phi_minus() -> StateVector:
    """The maximally entangled pair (|HH> - |VV>)/sqrt(2) on (A, S)."""
    s = 1.0 / np.sqrt(2.0)
    return StateVector([s, 0.0, 0.0, -s])


def prepare_ancilla() -> StateVector:
    """Diagonal ancilla (|H> + |V>)/sqrt(2)."""
    return KET_D


@dataclass(frozen=True, eq=False)
class ProtocolInput:
    """Input to the distribution pipeline.

    ``state`` is a density operator over (spectators..., S) with S the last
    qubit; ``channel_spec`` parametrizes the fibre noise; the minus-outcome
    decode branch is discarded unless ``keep_dbar_branch`` is set.
    """

    state: DensityOperator
    channel_spec: DephasingSpec = field(default_factory=DephasingSpec)
    keep_dbar_branch: bool = False

    def __post_init__(self):
        n = self.state.num_qubits
        if n < 1:
            raise ValueError("protocol input needs at least the channel qubit S")
        if n + 1 > MAX_QUBITS:
            raise ValueError(
                f"protocol layer supports at most {MAX_QUBITS} qubits after encoding"
            )
        if abs(self.state.norm - 1.0) > 1e-9:
            raise ValueError("protocol input state must be normalized")


@dataclass(frozen=True, eq=False)
class ProtocolOutcome:
    """Post-selected output state plus the probability bookkeeping."""

    state: DensityOperator
    success_probability: float
    branch_probabilities: Dict[str, float]

    def __post_init__(self):
        kept = self.branch_probabilities.get("D", 0.0)
        if "Dbar_corrected" in self.branch_probabilities:
            kept += self.branch_probabilities["Dbar_corrected"]
        if abs(kept - self.success_probability) > 1e-10:
            raise ValueError("success probability does not match kept branches")


def encode_append(inp: ProtocolInput) -> DensityOperator:
    """Append the ancilla: state (spectators..., S) -> (spectators..., S, S')."""
    return tensor(inp.state, prepare_ancilla().density())


def _sift_isometry(n: int, s_index: int, sprime_index: int) -> np.ndarray:
    """Map span{|H_s V_s'>, |V_s H_s'>} onto one logical qubit.

    The logical qubit sits at S's position with S' removed; kets outside the
    protected subspace are annihilated.  Relabeling |HV> -> |H>, |VH> -> |V>
    absorbs the receiver's 90 degree rotation of the long-arm photon.
    """
    dim_in = 2**n
    dim_out = 2 ** (n - 1)
    iso = np.zeros((dim_out, dim_in), dtype=complex)
    for i in range(dim_in):
        bits = [(i >> (n - 1 - q)) & 1 for q in range(n)]
        bs, bp = bits[s_index], bits[sprime_index]
        if (bs, bp) not in ((0, 1), (1, 0)):
            continue
        out_bits = list(bits)
        out_bits[s_index] = bs  # logical 0 -> H, logical 1 -> V
        del out_bits[sprime_index]
        j = 0
        for b in out_bits:
            j = (j << 1) | b
        iso[j, i] = 1.0
    return iso


def qpg_sift(
    rho: DensityOperator, s_index: int, sprime_index: int
) -> tuple[DensityOperator, float]:
    """Parity-gate sift onto the protected subspace.

    Returns the sub-normalized conditional state (one qubit fewer, logical
    qubit at S's slot) and the sift probability.
    """
    n = rho.num_qubits
    if s_index == sprime_index:
        raise ValueError("channel qubit indices must be distinct")
    for ix in (s_index, sprime_index):
        if ix < 0 or ix >= n:
            raise ValueError(f"qubit index {ix} out of range for {n} qubits")
    iso = _sift_isometry(n, s_index, sprime_index)
    cond = iso @ rho.matrix @ iso.conj().T
    cond = 0.5 * (cond + cond.conj().T)
    out = DensityOperator(cond)
    return out, out.norm


def _embed_z(n: int, index: int) -> np.ndarray:
    op = np.array([[1.0]], dtype=complex)
    for q in range(n):
        op = np.kron(op, PAULI_Z if q == index else np.eye(2, dtype=complex))
    return op


def decode(rho: DensityOperator, x_index: int, keep_dbar: bool = False) -> ProtocolOutcome:
    """Diagonal-basis measurement of the redundant photon.

    On the sifted logical space the plus outcome leaves the state untouched
    and the minus outcome imprints a Z, each with half the input weight.  The
    minus branch is discarded by default (the correction is a pi phase shift
    on qubit ``x_index``; ``keep_dbar`` applies it and keeps the branch).

    Branch probabilities are absolute, i.e. they inherit the norm of a
    sub-normalized input.
    """
    n = rho.num_qubits
    if x_index < 0 or x_index >= n:
        raise ValueError(f"qubit index {x_index} out of range for {n} qubits")
    z = _embed_z(n, x_index)
    p_d = 0.5 * rho.norm
    p_dbar = 0.5 * rho.norm
    kept = 0.5 * rho.matrix
    dbar_backaction = 0.5 * (z @ rho.matrix @ z.conj().T)
    branches = {"D": p_d}
    if keep_dbar:
        # The pi phase shift on Y undoes the measurement back-action.
        kept = kept + z @ dbar_backaction @ z.conj().T
        branches["Dbar_corrected"] = p_dbar
    else:
        branches["Dbar_discarded"] = p_dbar
    success = p_d + (p_dbar if keep_dbar else 0.0)
    if success <= 0.0:
        state = DensityOperator(np.zeros_like(rho.matrix))
    else:
        state = DensityOperator(kept / success)
    return ProtocolOutcome(state, success, branches)


def distribute(inp: ProtocolInput) -> ProtocolOutcome:
    """Full pipeline: encode, dephase, sift, decode.

    The output state lives on (spectators..., Y) and the branch map covers
    {D, Dbar, sift_fail}; the success probability multiplies the sift and
    kept-decode probabilities.
    """
    encoded = encode_append(inp)
    n = encoded.num_qubits
    s_index, sprime_index = n - 2, n - 1
    noisy = rotate_basis(inp.channel_spec, encoded, (s_index, sprime_index))
    sifted, p_sift = qpg_sift(noisy, s_index, sprime_index)
    outcome = decode(sifted, x_index=s_index, keep_dbar=inp.keep_dbar_branch)
    branches = dict(outcome.branch_probabilities)
    branches["sift_fail"] = 1.0 - p_sift
    return ProtocolOutcome(outcome.state, outcome.success_probability, branches)


def baseline_direct(inp: ProtocolInput) -> DensityOperator:
    """Send S through the channel without the protection layer.

    Single-photon marginal of the channel: the common phase and any jitter
    riding on S combine into one characteristic function.  Success
    probability is 1 (nothing is post-selected).
    """
    spec = inp.channel_spec
    n = inp.state.num_qubits
    s_index = n - 1
    if spec.is_computational():
        sd = spec.delta_sigma

        def damping(diff):
            out = np.empty(diff.shape, dtype=complex)
            for m in np.unique(diff):
                out[diff == m] = spec.common_characteristic(int(m)) * np.exp(
                    -0.5 * (sd * int(m)) ** 2
                )
            return out

        return apply_phase_damping(inp.state, [s_index], damping)
    if spec.delta_sigma == 0.0:
        return rotate_basis(spec, inp.state, [s_index])
    # Rotate by hand so the single-photon jitter convention matches above.
    w = np.array([[1.0]], dtype=complex)
    for q in range(n):
        w = np.kron(
            w, spec.basis.conj().T if q == s_index else np.eye(2, dtype=complex)
        )
    rotated = DensityOperator(w @ inp.state.matrix @ w.conj().T)
    flat_input = ProtocolInput(
        rotated,
        DephasingSpec(
            mean_phase=spec.mean_phase,
            per_photon_sigma=spec.per_photon_sigma,
            delta_sigma=spec.delta_sigma,
            distribution=spec.distribution,
        ),
        inp.keep_dbar_branch,
    )
    out = baseline_direct(flat_input)
    return DensityOperator(w.conj().T @ out.matrix @ w)
