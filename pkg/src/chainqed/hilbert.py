"""Truncated tensor-product Hilbert space and operator embedding.

The composite space is an ordered product of subsystems: first the two-level
sites (dimension 2 each), then the quantized field modes, then the phonon
modes.  Bosonic modes are hard-truncated Fock ladders: a mode declared with
``cutoff = m`` keeps the levels ``|0> .. |m>`` (local dimension ``m + 1``).
Basis states are enumerated in row-major (mixed-radix) order with the first
subsystem most significant, matching the Kronecker-product order used by
:func:`embed_local`.

Operators are stored as sparse complex (CSR) matrices wrapped in
:class:`Operator`, which carries the algebra used throughout the package
(products, adjoints, commutators, anticommutators).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

DEFAULT_DIMENSION_CAP = 2**20

# Hermiticity tolerance for operators flagged as Hermitian.
HERMITICITY_TOL = 1e-12


class SpaceTooLargeError(ValueError):
    """Raised when the composite dimension exceeds the configured cap."""


class DimensionMismatchError(ValueError):
    """Raised when operators or states of incompatible dimension are combined."""


@dataclass(frozen=True)
class ModeSpec:
    """Fock truncation of one bosonic mode (local dimension ``cutoff + 1``)."""

    cutoff: int

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError(f"mode cutoff must be >= 1, got {self.cutoff}")


@dataclass(frozen=True)
class SpaceSpec:
    """Declaration of the composite space: sites plus bosonic modes."""

    n_sites: int
    field_modes: tuple[ModeSpec, ...] = ()
    phonon_modes: tuple[ModeSpec, ...] = ()

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")
        object.__setattr__(self, "field_modes", tuple(self.field_modes))
        object.__setattr__(self, "phonon_modes", tuple(self.phonon_modes))

    @property
    def dimension(self) -> int:
        dim = 2**self.n_sites
        for mode in self.field_modes:
            dim *= mode.cutoff + 1
        for mode in self.phonon_modes:
            dim *= mode.cutoff + 1
        return dim


@dataclass(frozen=True)
class Subsystem:
    """One tensor factor: ``kind`` is 'site', 'field' or 'phonon'."""

    kind: str
    label: int
    dim: int


@dataclass(frozen=True)
class SpaceIndex:
    """Indexed composite space with mixed-radix basis bookkeeping.

    Attributes
    ----------
    subsystems:
        Ordered tensor factors (sites, then field modes, then phonon modes).
    dim:
        Total dimension, product of the local dimensions.
    """

    subsystems: tuple[Subsystem, ...]
    dim: int
    _strides: tuple[int, ...] = field(repr=False, default=())

    @property
    def n_sites(self) -> int:
        return sum(1 for s in self.subsystems if s.kind == "site")

    @property
    def n_field_modes(self) -> int:
        return sum(1 for s in self.subsystems if s.kind == "field")

    @property
    def n_phonon_modes(self) -> int:
        return sum(1 for s in self.subsystems if s.kind == "phonon")

    def slot(self, kind: str, label: int) -> int:
        """Position of a subsystem in the tensor order."""
        for pos, sub in enumerate(self.subsystems):
            if sub.kind == kind and sub.label == label:
                return pos
        raise IndexError(f"no subsystem {kind}[{label}] in space")

    def site_slot(self, site: int) -> int:
        return self.slot("site", site)

    def field_slot(self, mode: int) -> int:
        return self.slot("field", mode)

    def phonon_slot(self, mode: int) -> int:
        return self.slot("phonon", mode)

    def field_cutoff(self, mode: int) -> int:
        return self.subsystems[self.field_slot(mode)].dim - 1

    def phonon_cutoff(self, mode: int) -> int:
        return self.subsystems[self.phonon_slot(mode)].dim - 1

    def index_to_occupation(self, index: int) -> tuple[int, ...]:
        """Decompose a basis index into per-subsystem occupations."""
        if not 0 <= index < self.dim:
            raise IndexError(f"basis index {index} out of range 0..{self.dim - 1}")
        occ = []
        for sub, stride in zip(self.subsystems, self._strides):
            occ.append((index // stride) % sub.dim)
        return tuple(occ)

    def occupation_to_index(self, occupation) -> int:
        """Inverse of :meth:`index_to_occupation` (exact round trip)."""
        if len(occupation) != len(self.subsystems):
            raise DimensionMismatchError(
                f"occupation tuple has {len(occupation)} entries, "
                f"space has {len(self.subsystems)} subsystems"
            )
        index = 0
        for occ, sub, stride in zip(occupation, self.subsystems, self._strides):
            if not 0 <= occ < sub.dim:
                raise IndexError(f"occupation {occ} out of range for {sub}")
            index += occ * stride
        return index


def build_space(spec: SpaceSpec, dimension_cap: int = DEFAULT_DIMENSION_CAP) -> SpaceIndex:
    """Construct the indexed composite space for a :class:`SpaceSpec`.

    Raises
    ------
    SpaceTooLargeError
        If the total dimension exceeds ``dimension_cap``.
    """
    dim = spec.dimension
    if dim > dimension_cap:
        raise SpaceTooLargeError(
            f"space too large: dimension {dim} exceeds cap {dimension_cap}"
        )
    subsystems = [Subsystem("site", i, 2) for i in range(spec.n_sites)]
    subsystems += [
        Subsystem("field", k, m.cutoff + 1) for k, m in enumerate(spec.field_modes)
    ]
    subsystems += [
        Subsystem("phonon", q, m.cutoff + 1) for q, m in enumerate(spec.phonon_modes)
    ]
    # Row-major strides: first subsystem most significant.
    strides = []
    run = dim
    for sub in subsystems:
        run //= sub.dim
        strides.append(run)
    return SpaceIndex(tuple(subsystems), dim, tuple(strides))


class Operator:
    """Sparse complex operator on a composite space.

    Thin wrapper over ``scipy.sparse.csr_matrix`` providing the arithmetic
    the package needs.  Instances are immutable by convention and safe to
    share across workers.
    """

    __slots__ = ("matrix", "dim", "tag")

    def __init__(self, matrix, tag: str = ""):
        mat = sparse.csr_matrix(matrix, dtype=np.complex128)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionMismatchError(f"operator must be square, got {mat.shape}")
        self.matrix = mat
        self.dim = mat.shape[0]
        self.tag = tag

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "Operator"):
        if self.dim != other.dim:
            raise DimensionMismatchError(
                f"dimension mismatch: {self.dim} vs {other.dim} "
                f"({self.tag!r} vs {other.tag!r})"
            )

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.matrix + other.matrix, self.tag)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.matrix - other.matrix, self.tag)

    def __neg__(self) -> "Operator":
        return Operator(-self.matrix, self.tag)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.matrix * scalar, self.tag)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.matrix @ other.matrix, self.tag)

    def dag(self) -> "Operator":
        """Hermitian adjoint."""
        return Operator(self.matrix.conjugate().transpose().tocsr(), self.tag)

    # -- queries ------------------------------------------------------------

    def max_abs(self) -> float:
        """Largest absolute matrix entry (zero for the empty matrix)."""
        if self.matrix.nnz == 0:
            return 0.0
        return float(np.max(np.abs(self.matrix.data)))

    def hermiticity_defect(self) -> float:
        return (self - self.dag()).max_abs()

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return self.hermiticity_defect() <= tol

    def expect(self, psi: np.ndarray) -> complex:
        """Expectation value <psi|A|psi> (no normalization applied)."""
        if psi.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"state dimension {psi.shape[0]} != operator dimension {self.dim}"
            )
        return complex(np.vdot(psi, self.matrix @ psi))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def with_tag(self, tag: str) -> "Operator":
        return Operator(self.matrix, tag)

    def __repr__(self) -> str:
        return f"Operator(dim={self.dim}, nnz={self.matrix.nnz}, tag={self.tag!r})"


def identity(space: SpaceIndex, tag: str = "I") -> Operator:
    return Operator(sparse.identity(space.dim, dtype=np.complex128, format="csr"), tag)


def zero(space: SpaceIndex, tag: str = "0") -> Operator:
    return Operator(sparse.csr_matrix((space.dim, space.dim), dtype=np.complex128), tag)


def commutator(a: Operator, b: Operator) -> Operator:
    """[A, B] = AB - BA."""
    return a @ b - b @ a


def anticommutator(a: Operator, b: Operator) -> Operator:
    """{A, B} = AB + BA."""
    return a @ b + b @ a


def embed_local(space: SpaceIndex, subsystem: int, local, tag: str = "") -> Operator:
    """Embed a local operator at one tensor slot: I x .. x local x .. x I.

    Parameters
    ----------
    subsystem:
        Position in the declared subsystem order (see :meth:`SpaceIndex.slot`).
    local:
        Square matrix whose dimension matches the subsystem's local dimension.
    """
    if not 0 <= subsystem < len(space.subsystems):
        raise IndexError(f"subsystem slot {subsystem} out of range")
    sub = space.subsystems[subsystem]
    local = sparse.csr_matrix(local, dtype=np.complex128)
    if local.shape != (sub.dim, sub.dim):
        raise DimensionMismatchError(
            f"local operator shape {local.shape} does not match subsystem "
            f"{sub.kind}[{sub.label}] of dimension {sub.dim}"
        )
    dim_before = math.prod(s.dim for s in space.subsystems[:subsystem])
    dim_after = math.prod(s.dim for s in space.subsystems[subsystem + 1 :])
    mat = local
    if dim_before > 1:
        mat = sparse.kron(sparse.identity(dim_before, format="csr"), mat, format="csr")
    if dim_after > 1:
        mat = sparse.kron(mat, sparse.identity(dim_after, format="csr"), format="csr")
    return Operator(mat, tag)


# -- local bosonic operators -------------------------------------------------


def annihilation_local(cutoff: int) -> np.ndarray:
    """Truncated annihilation operator: sqrt(m) on the superdiagonal."""
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), k=1).astype(complex)


def creation_local(cutoff: int) -> np.ndarray:
    return annihilation_local(cutoff).conj().T


def number_local(cutoff: int) -> np.ndarray:
    return np.diag(np.arange(cutoff + 1, dtype=float)).astype(complex)


def top_level_projector_local(cutoff: int) -> np.ndarray:
    """|m><m| on the truncated ladder; monitors leakage into the top level."""
    proj = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    proj[cutoff, cutoff] = 1.0
    return proj


# -- state constructors -------------------------------------------------------


def site_local_state(kind: str = "ground", theta: float = 0.0, phi: float = 0.0) -> np.ndarray:
    """Local two-level state.

    ``ground``) the lower state, ``excited``) the upper state, ``angles``)
    cos(theta/2)|lower> + e^{i phi} sin(theta/2)|upper>.
    """
    if kind == "ground":
        return np.array([1.0, 0.0], dtype=complex)
    if kind == "excited":
        return np.array([0.0, 1.0], dtype=complex)
    if kind == "angles":
        return np.array(
            [np.cos(theta / 2.0), np.exp(1j * phi) * np.sin(theta / 2.0)], dtype=complex
        )
    raise ValueError(f"unknown site state kind {kind!r}")


def fock_local(n: int, cutoff: int) -> np.ndarray:
    if not 0 <= n <= cutoff:
        raise ValueError(f"Fock level {n} outside truncation 0..{cutoff}")
    vec = np.zeros(cutoff + 1, dtype=complex)
    vec[n] = 1.0
    return vec


def coherent_local(alpha: complex, cutoff: int) -> np.ndarray:
    """Coherent state truncated to the ladder and renormalized.

    The truncation error is the dropped Poisson tail; callers should keep
    ``cutoff`` well above ``|alpha|^2`` (the propagator monitors the top
    level population).
    """
    n = np.arange(cutoff + 1)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, cutoff + 1)))))
    amps = np.exp(n * np.log(complex(alpha)) - 0.5 * log_fact) if alpha != 0 else None
    if alpha == 0:
        return fock_local(0, cutoff)
    amps = np.asarray(amps, dtype=complex)
    amps /= np.linalg.norm(amps)
    return amps


def product_state(space: SpaceIndex, local_states) -> np.ndarray:
    """Kronecker product of per-subsystem local states, normalized."""
    if len(local_states) != len(space.subsystems):
        raise DimensionMismatchError(
            f"need {len(space.subsystems)} local states, got {len(local_states)}"
        )
    psi = np.array([1.0], dtype=complex)
    for vec, sub in zip(local_states, space.subsystems):
        vec = np.asarray(vec, dtype=complex)
        if vec.shape != (sub.dim,):
            raise DimensionMismatchError(
                f"local state of shape {vec.shape} does not match {sub}"
            )
        psi = np.kron(psi, vec)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("product state has zero norm")
    return psi / norm
