"""Finite tensor-product Hilbert spaces over named, labelled subsystems.

Everything in this module is immutable and pure: spaces are ordered lists of
named subsystems, states are dense complex amplitude vectors over a space,
and maps are dense square matrices.  The basis convention is mixed-radix:
the flat amplitude index enumerates subsystem labels in space order with the
*last* subsystem varying fastest, so `kron` and `embed` reduce to radix
arithmetic on indices.

Tolerances are fixed module constants.  Constructors reject bad input
(non-finite amplitudes, non-unit norms, non-unitary matrices flagged
unitary) instead of silently repairing it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

#: Max-entry tolerance on M†M - I for maps flagged unitary.
ATOL_UNITARY = 1e-10
#: Tolerance on probabilities and amplitude-level comparisons.
ATOL_PROB = 1e-12
#: Tolerance on |<a|b>| for global-phase equality of normalized states.
ATOL_GLOBAL_PHASE = 1e-10
#: Norm tolerance for states tagged normalized.
ATOL_NORM = 1e-10
#: Idempotence/Hermiticity tolerance for projectors.
ATOL_PROJECTOR = 1e-12

#: Hard cap on composite dimension; this library targets small spaces.
MAX_TOTAL_DIM = 10**6


class SpaceMismatchError(ValueError):
    """Two objects live on different spaces (or a subsystem is unknown)."""


def _as_complex_array(values, shape_name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128).copy()
    if not np.all(np.isfinite(arr.view(np.float64))):
        raise ValueError(f"non-finite entries in {shape_name}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SubsystemSpec:
    """A named subsystem with an ordered set of basis labels."""

    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValueError(f"subsystem {self.name!r} needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate labels in subsystem {self.name!r}")

    @property
    def dim(self) -> int:
        return len(self.labels)

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown label {label!r} in subsystem {self.name!r}") from None


def direction() -> SubsystemSpec:
    """Propagation direction of the interfering particle: x or y."""
    return SubsystemSpec("direction", ("x", "y"))


def photon() -> SubsystemSpec:
    """Which-way marker photon: no photon (vac), or emitted on path A / B."""
    return SubsystemSpec("photon", ("vac", "A", "B"))


def atom() -> SubsystemSpec:
    """Internal state of the interfering atom: excited (e) or ground (g)."""
    return SubsystemSpec("atom", ("e", "g"))


def eraser() -> SubsystemSpec:
    """Auxiliary absorber atom: ground (gamma) or excited (epsilon)."""
    return SubsystemSpec("eraser", ("gamma", "epsilon"))


@dataclass(frozen=True)
class SpaceSpec:
    """Ordered tensor product of subsystems; fixes the flat basis ordering."""

    subsystems: tuple[SubsystemSpec, ...]

    def __post_init__(self):
        names = [s.name for s in self.subsystems]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate subsystem names: {names}")
        if self.dim > MAX_TOTAL_DIM:
            raise ValueError(f"total dimension {self.dim} exceeds {MAX_TOTAL_DIM}")

    @property
    def dim(self) -> int:
        return math.prod(s.dim for s in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.subsystems)

    def axis(self, name: str) -> int:
        for k, sub in enumerate(self.subsystems):
            if sub.name == name:
                return k
        raise SpaceMismatchError(f"unknown subsystem {name!r} (have {self.names})")

    def subsystem(self, name: str) -> SubsystemSpec:
        return self.subsystems[self.axis(name)]

    def strides(self) -> tuple[int, ...]:
        """Mixed-radix place values; last subsystem varies fastest."""
        out, acc = [], 1
        for d in reversed(self.dims):
            out.append(acc)
            acc *= d
        return tuple(reversed(out))

    def index_of(self, labels: Mapping[str, str] | Sequence[str]) -> int:
        """Flat basis index of the given label assignment (one per subsystem)."""
        if not isinstance(labels, Mapping):
            labels = dict(zip(self.names, labels, strict=True))
        extra = set(labels) - set(self.names)
        if extra:
            raise SpaceMismatchError(f"unknown subsystem(s) {sorted(extra)}")
        idx = 0
        for sub, stride in zip(self.subsystems, self.strides()):
            idx += sub.label_index(labels[sub.name]) * stride
        return idx

    def labels_at(self, index: int) -> tuple[str, ...]:
        """Label tuple (in subsystem order) of a flat basis index."""
        if not 0 <= index < self.dim:
            raise IndexError(f"basis index {index} out of range for dim {self.dim}")
        out = []
        for sub, stride in zip(self.subsystems, self.strides()):
            out.append(sub.labels[(index // stride) % sub.dim])
        return tuple(out)

    def restricted(self, names: Sequence[str]) -> "SpaceSpec":
        """Sub-space made of the named subsystems, in the order given."""
        return SpaceSpec(tuple(self.subsystem(n) for n in names))

    def basis_state(self, labels: Mapping[str, str] | Sequence[str]) -> "StateVector":
        amps = np.zeros(self.dim, dtype=np.complex128)
        amps[self.index_of(labels)] = 1.0
        return StateVector(self, amps)


def space_of(*subsystems: SubsystemSpec) -> SpaceSpec:
    return SpaceSpec(tuple(subsystems))


@dataclass(frozen=True, eq=False)
class StateVector:
    """Dense complex amplitude vector over a SpaceSpec.

    States are tagged `normalized` by default and rejected if their norm is
    off by more than ATOL_NORM; intermediate measurement residuals may be
    built with normalized=False.
    """

    space: SpaceSpec
    amps: np.ndarray
    normalized: bool = field(default=True)

    def __post_init__(self):
        arr = _as_complex_array(self.amps, "state vector")
        if arr.shape != (self.space.dim,):
            raise ValueError(f"amplitude count {arr.shape} != space dim {self.space.dim}")
        if self.normalized and abs(np.linalg.norm(arr) - 1.0) > ATOL_NORM:
            raise ValueError(
                f"state tagged normalized has norm {np.linalg.norm(arr)!r}; "
                "renormalize explicitly or pass normalized=False"
            )
        object.__setattr__(self, "amps", arr)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def renormalized(self) -> "StateVector":
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot renormalize the zero vector")
        return StateVector(self.space, self.amps / n)

    def scaled(self, factor: complex) -> "StateVector":
        return StateVector(self.space, self.amps * factor, normalized=False)

    def amplitude(self, labels: Mapping[str, str] | Sequence[str]) -> complex:
        return complex(self.amps[self.space.index_of(labels)])


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Dense square matrix over a SpaceSpec, optionally flagged unitary.

    The unitary flag is *checked* at construction: max|M†M - I| must not
    exceed ATOL_UNITARY.
    """

    space: SpaceSpec
    matrix: np.ndarray
    unitary: bool = field(default=False)

    def __post_init__(self):
        mat = _as_complex_array(self.matrix, "matrix")
        d = self.space.dim
        if mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape} != ({d}, {d})")
        if self.unitary:
            defect = np.max(np.abs(mat.conj().T @ mat - np.eye(d)))
            if defect > ATOL_UNITARY:
                raise ValueError(f"matrix flagged unitary but max|M†M-I| = {defect:.3e}")
        object.__setattr__(self, "matrix", mat)

    @property
    def dagger(self) -> "LinearMap":
        return LinearMap(self.space, self.matrix.conj().T, unitary=self.unitary)

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        if self.space != other.space:
            raise SpaceMismatchError("cannot compose maps on different spaces")
        return LinearMap(self.space, self.matrix @ other.matrix,
                         unitary=self.unitary and other.unitary)


def identity(space: SpaceSpec) -> LinearMap:
    return LinearMap(space, np.eye(space.dim), unitary=True)


def kron(a: LinearMap, b: LinearMap) -> LinearMap:
    """Tensor product acting on the concatenated space (a's subsystems first)."""
    space = SpaceSpec(a.space.subsystems + b.space.subsystems)
    return LinearMap(space, np.kron(a.matrix, b.matrix),
                     unitary=a.unitary and b.unitary)


def embed(op: LinearMap, targets: Sequence[str], space: SpaceSpec) -> LinearMap:
    """Extend `op` to act on `space`: `op` on the target subsystems, identity
    elsewhere.

    `op.space` must consist of `space`'s target subsystems in the order
    listed in `targets`; targets may be non-adjacent in `space`.
    """
    targets = tuple(targets)
    if len(set(targets)) != len(targets):
        raise SpaceMismatchError(f"repeated target subsystem in {targets}")
    expected = space.restricted(targets)
    if op.space != expected:
        raise SpaceMismatchError(
            f"operator space {op.space.names}/{op.space.dims} does not match "
            f"targets {targets} of {space.names}"
        )

    # Decompose flat indices into (target digits, rest digits), lay the
    # operator out as kron(op, I_rest) in that order, then scatter back.
    n = space.dim
    flat = np.arange(n)
    strides = space.strides()
    dims = space.dims
    target_axes = [space.axis(t) for t in targets]
    rest_axes = [k for k in range(len(dims)) if k not in target_axes]

    sub_index = np.zeros(n, dtype=np.int64)
    for ax in target_axes:
        sub_index = sub_index * dims[ax] + (flat // strides[ax]) % dims[ax]
    rest_index = np.zeros(n, dtype=np.int64)
    for ax in rest_axes:
        rest_index = rest_index * dims[ax] + (flat // strides[ax]) % dims[ax]

    rest_dim = n // op.space.dim
    permuted = sub_index * rest_dim + rest_index  # position in kron(op, I_rest)
    block = np.kron(op.matrix, np.eye(rest_dim))
    full = block[np.ix_(permuted, permuted)]
    return LinearMap(space, full, unitary=op.unitary)


def apply(op: LinearMap, psi: StateVector) -> StateVector:
    """Matrix-vector product; stays tagged normalized only under a unitary."""
    if op.space != psi.space:
        raise SpaceMismatchError("map and state live on different spaces")
    return StateVector(psi.space, op.matrix @ psi.amps,
                       normalized=psi.normalized and op.unitary)


def inner(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in the first argument."""
    if a.space != b.space:
        raise SpaceMismatchError("states live on different spaces")
    return complex(np.vdot(a.amps, b.amps))


def projector(space: SpaceSpec, subsystem: str, label: str) -> LinearMap:
    """Projector onto one basis label of a subsystem, identity elsewhere.

    Entries are exactly 0 or 1, so completeness over a subsystem's labels
    holds without rounding.
    """
    axis = space.axis(subsystem)
    sub = space.subsystems[axis]
    want = sub.label_index(label)
    stride = space.strides()[axis]
    mask = (np.arange(space.dim) // stride) % sub.dim == want
    return LinearMap(space, np.diag(mask.astype(np.complex128)))


def equal_up_to_global_phase(a: StateVector, b: StateVector,
                             tol: float = ATOL_GLOBAL_PHASE) -> bool:
    """True iff two normalized states differ only by a phase factor."""
    if a.space != b.space:
        raise SpaceMismatchError("states live on different spaces")
    if not (a.normalized and b.normalized):
        raise ValueError("global-phase comparison requires normalized states")
    return abs(inner(a, b)) >= 1.0 - tol


def branch_probability(op: LinearMap, psi: StateVector) -> float:
    """||K psi||^2: probability weight of the measurement branch K."""
    if op.space != psi.space:
        raise SpaceMismatchError("map and state live on different spaces")
    amp = op.matrix @ psi.amps
    return float(np.real(np.vdot(amp, amp)))
