"""Hamiltonian builders for the dipole chain coupled to field and phonons.

Conventions
-----------
* hbar = 1 throughout: all energies are angular frequencies.
* Site basis order (lower, upper); ``E_upper > E_lower`` is required, with
  the transition frequency ``omega_v = E_upper - E_lower``.
* The exchange term is implemented literally with its Hermitian conjugate,
  which doubles the real coupling: the effective nearest-neighbour exchange
  is ``2 * exchange_j``.  Halve ``exchange_j`` to match conventions that
  write the exchange sum once.
* The site-field coupling keeps both rotating and counter-rotating terms
  (no rotating-wave approximation).
* ``coupling_mode`` selects how the plane-wave phase of the coupling is
  treated: ``static_phase_at_t0`` (default) freezes the exponential at
  t = 0, giving a time-independent, conservative total Hamiltonian;
  ``literal_time_dependent`` keeps the oscillating phase exp(-i omega_k t)
  in the coupling function, at the price of double-counting the free field
  evolution already generated by the field Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import (
    Operator,
    SpaceIndex,
    annihilation_local,
    creation_local,
    embed_local,
    number_local,
    zero,
)
from .transition_ops import (
    SIGMA_X_LOCAL,
    SIGMA_Z_LOCAL,
    build_transition_set,
)

STATIC_PHASE = "static_phase_at_t0"
LITERAL_TIME_DEPENDENT = "literal_time_dependent"
COUPLING_MODES = (STATIC_PHASE, LITERAL_TIME_DEPENDENT)

BOUNDARIES = ("open", "periodic")


@dataclass(frozen=True)
class FieldMode:
    """One quantized field mode.

    ``amplitude`` is the field-strength scale multiplying the coupling;
    ``polarization_overlap`` is the per-site projection of the mode
    polarization on the site dipole direction.
    """

    omega: float
    wavevector: float = 0.0
    amplitude: float = 0.0
    polarization_overlap: tuple[float, ...] = ()


@dataclass(frozen=True)
class PhononMode:
    """One phonon mode with frequency ``nu`` and coupling ``coupling``."""

    nu: float
    coupling: float = 0.0


@dataclass(frozen=True)
class ClassicalDrive:
    """Prescribed classical drive on the site dipoles.

    Adds ``2 Re(amplitude * exp(-i frequency t))`` times ``sigma_x`` on each
    driven site (all sites when ``sites`` is None).  ``amplitude`` plays the
    role of the product of coupling and coherent field amplitude.
    """

    amplitude: complex
    frequency: float
    sites: tuple[int, ...] | None = None


@dataclass(frozen=True)
class SystemParams:
    """All physical parameters of the chain-field-phonon system."""

    site_energies: tuple[tuple[float, float], ...]
    exchange_j: float = 0.0
    boundary: str = "open"
    field_modes: tuple[FieldMode, ...] = ()
    dipole: tuple[float, ...] = ()
    lattice_spacing: float = 1.0
    site_positions: tuple[float, ...] | None = None
    coupling_mode: str = STATIC_PHASE
    phonon_modes: tuple[PhononMode, ...] = ()
    drives: tuple[ClassicalDrive, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "site_energies", tuple(map(tuple, self.site_energies)))
        object.__setattr__(self, "field_modes", tuple(self.field_modes))
        object.__setattr__(self, "phonon_modes", tuple(self.phonon_modes))
        object.__setattr__(self, "drives", tuple(self.drives))
        if not self.dipole:
            object.__setattr__(self, "dipole", (1.0,) * self.n_sites)
        else:
            object.__setattr__(self, "dipole", tuple(self.dipole))
        for v, (e_low, e_up) in enumerate(self.site_energies):
            if not e_up > e_low:
                raise ValueError(
                    f"site {v}: upper level must lie above lower "
                    f"(got E_low={e_low}, E_up={e_up})"
                )
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.coupling_mode not in COUPLING_MODES:
            raise ValueError(f"coupling_mode must be one of {COUPLING_MODES}")
        for mode in self.field_modes:
            if mode.omega <= 0:
                raise ValueError("field mode frequencies must be positive")
        for mode in self.phonon_modes:
            if mode.nu <= 0:
                raise ValueError("phonon mode frequencies must be positive")

    @property
    def n_sites(self) -> int:
        return len(self.site_energies)

    @property
    def omegas(self) -> tuple[float, ...]:
        """Per-site transition frequencies E_upper - E_lower."""
        return tuple(e_up - e_low for e_low, e_up in self.site_energies)

    def position(self, site: int) -> float:
        if self.site_positions is not None:
            return self.site_positions[site]
        return site * self.lattice_spacing

    def neighbors(self, site: int) -> tuple[int, ...]:
        """Nearest neighbours under the boundary policy."""
        if self.boundary == "periodic":
            n = self.n_sites
            return ((site - 1) % n, (site + 1) % n)
        out = []
        if site - 1 >= 0:
            out.append(site - 1)
        if site + 1 < self.n_sites:
            out.append(site + 1)
        return tuple(out)

    def bonds(self) -> tuple[tuple[int, int], ...]:
        """Nearest-neighbour bonds summed once in the exchange Hamiltonian."""
        n = self.n_sites
        if self.boundary == "periodic":
            return tuple((v, (v + 1) % n) for v in range(n))
        return tuple((v, v + 1) for v in range(n - 1))

    @property
    def effective_exchange(self) -> float:
        """Exchange coupling after the literal Hermitian-conjugate doubling."""
        return 2.0 * self.exchange_j

    def validate_against(self, space: SpaceIndex) -> list[str]:
        """All consistency problems between these parameters and a space."""
        problems = []
        if self.n_sites != space.n_sites:
            problems.append(
                f"params declare {self.n_sites} sites, space has {space.n_sites}"
            )
        if len(self.field_modes) != space.n_field_modes:
            problems.append(
                f"params declare {len(self.field_modes)} field modes, "
                f"space has {space.n_field_modes}"
            )
        if len(self.phonon_modes) != space.n_phonon_modes:
            problems.append(
                f"params declare {len(self.phonon_modes)} phonon modes, "
                f"space has {space.n_phonon_modes}"
            )
        if len(self.dipole) != self.n_sites:
            problems.append("dipole list length does not match n_sites")
        if self.site_positions is not None and len(self.site_positions) != self.n_sites:
            problems.append("site_positions length does not match n_sites")
        for k, mode in enumerate(self.field_modes):
            if len(mode.polarization_overlap) not in (0, self.n_sites):
                problems.append(
                    f"field mode {k}: polarization_overlap must have one entry "
                    f"per site ({self.n_sites}), got {len(mode.polarization_overlap)}"
                )
        for d, drive in enumerate(self.drives):
            if drive.sites is not None:
                for s in drive.sites:
                    if not 0 <= s < self.n_sites:
                        problems.append(f"drive {d} references missing site {s}")
        if self.boundary == "periodic" and self.n_sites < 3:
            problems.append("periodic boundary requires at least 3 sites")
        return problems


def coupling_q(params: SystemParams, j: int, k: int, t: float) -> complex:
    """Site-mode coupling function q_jk(t).

    ``-p_j (e_k . e_Pj) E_k exp(-i omega_k t + i k r_j)`` with the
    exponential frozen at t = 0 in static mode.
    """
    mode = params.field_modes[k]
    overlap = mode.polarization_overlap[j] if mode.polarization_overlap else 1.0
    base = -params.dipole[j] * overlap * mode.amplitude
    phase = mode.wavevector * params.position(j)
    if params.coupling_mode == LITERAL_TIME_DEPENDENT:
        phase -= mode.omega * t
    return base * np.exp(1j * phase)


def drive_field(params: SystemParams, j: int, t: float) -> float:
    """Classical drive amplitude on site j at time t (real)."""
    total = 0.0
    for drive in params.drives:
        if drive.sites is None or j in drive.sites:
            total += 2.0 * (drive.amplitude * np.exp(-1j * drive.frequency * t)).real
    return total


# -- cached per-space elementary operators ------------------------------------


class OperatorCache:
    """Embedded elementary operators for one (space, params-independent) layout.

    Building the Kronecker embeddings dominates Hamiltonian construction;
    the cache makes repeated builds (time-dependent evaluation, equation
    oracles) cheap.
    """

    def __init__(self, space: SpaceIndex):
        self.space = space
        self.sigma = [build_transition_set(space, v) for v in range(space.n_sites)]
        self.sigma_x = [
            embed_local(space, space.site_slot(v), SIGMA_X_LOCAL, f"sigma_x[{v}]")
            for v in range(space.n_sites)
        ]
        self.a = [
            embed_local(
                space,
                space.field_slot(k),
                annihilation_local(space.field_cutoff(k)),
                f"a[{k}]",
            )
            for k in range(space.n_field_modes)
        ]
        self.a_dag = [op.dag() for op in self.a]
        self.a_num = [
            embed_local(
                space, space.field_slot(k), number_local(space.field_cutoff(k)), f"n[{k}]"
            )
            for k in range(space.n_field_modes)
        ]
        self.b = [
            embed_local(
                space,
                space.phonon_slot(q),
                annihilation_local(space.phonon_cutoff(q)),
                f"b[{q}]",
            )
            for q in range(space.n_phonon_modes)
        ]
        self.b_dag = [op.dag() for op in self.b]
        self.b_num = [
            embed_local(
                space, space.phonon_slot(q), number_local(space.phonon_cutoff(q)), f"nb[{q}]"
            )
            for q in range(space.n_phonon_modes)
        ]


def _cache(space: SpaceIndex, cache: OperatorCache | None) -> OperatorCache:
    return cache if cache is not None else OperatorCache(space)


# -- Hamiltonian builders -------------------------------------------------------


def build_h0(space: SpaceIndex, params: SystemParams, cache: OperatorCache | None = None) -> Operator:
    """Bare chain Hamiltonian: per-site level energies, diagonal.

    Equals ``sum_v [ (omega_v / 2) sigma_z_v + (E_low + E_up)/2 * unit ]``.
    """
    ops = _cache(space, cache)
    h = zero(space, "H0")
    for v, (e_low, e_up) in enumerate(params.site_energies):
        omega_v = e_up - e_low
        shift = 0.5 * (e_low + e_up)
        h = h + 0.5 * omega_v * ops.sigma[v].z + shift * ops.sigma[v].unit
    return h.with_tag("H0")


def build_exchange(
    space: SpaceIndex, params: SystemParams, cache: OperatorCache | None = None
) -> Operator:
    """Isotropic nearest-neighbour exchange, Hermitian conjugate included.

    ``sum_bonds [ J (s+ s- + s- s+ + z z / 2) + H.c. ]`` -- the bracket is
    already Hermitian, so the conjugate doubles it (effective coupling 2J).
    """
    ops = _cache(space, cache)
    h = zero(space, "HJ")
    j = params.exchange_j
    if j == 0.0 or space.n_sites < 2:
        return h
    for v, w in params.bonds():
        sv, sw = ops.sigma[v], ops.sigma[w]
        term = j * (sv.plus @ sw.minus + sv.minus @ sw.plus + 0.5 * (sv.z @ sw.z))
        h = h + term + term.dag()
    return h.with_tag("HJ")


def build_hc(space: SpaceIndex, params: SystemParams, cache: OperatorCache | None = None) -> Operator:
    """Chain Hamiltonian: bare levels plus exchange."""
    ops = _cache(space, cache)
    return (build_h0(space, params, ops) + build_exchange(space, params, ops)).with_tag("HC")


def build_hf(space: SpaceIndex, params: SystemParams, cache: OperatorCache | None = None) -> Operator:
    """Free field Hamiltonian: sum_k omega_k (n_k + 1/2)."""
    ops = _cache(space, cache)
    h = zero(space, "HF")
    for k, mode in enumerate(params.field_modes):
        h = h + mode.omega * (ops.a_num[k] + 0.5 * ops.sigma[0].unit)
    return h.with_tag("HF")


def build_hcf(
    space: SpaceIndex,
    params: SystemParams,
    t: float = 0.0,
    cache: OperatorCache | None = None,
) -> Operator:
    """Site-field coupling at time t (non-RWA).

    ``sum_jk [ q_jk(t) sigma_x_j a_k + sigma_x_j a_k^dag q_jk(t)^* ]``,
    Hermitian at every t.
    """
    ops = _cache(space, cache)
    h = zero(space, "HCF")
    for k in range(len(params.field_modes)):
        for j in range(params.n_sites):
            q = coupling_q(params, j, k, t)
            if q == 0:
                continue
            term = q * (ops.sigma_x[j] @ ops.a[k])
            h = h + term + term.dag()
    return h.with_tag("HCF")


def build_hdrive(
    space: SpaceIndex,
    params: SystemParams,
    t: float = 0.0,
    cache: OperatorCache | None = None,
) -> Operator:
    """Classical drive term: sum_j drive_field(j, t) sigma_x_j."""
    ops = _cache(space, cache)
    h = zero(space, "Hdrive")
    for j in range(params.n_sites):
        amp = drive_field(params, j, t)
        if amp != 0.0:
            h = h + amp * ops.sigma_x[j]
    return h.with_tag("Hdrive")


def build_hp(space: SpaceIndex, params: SystemParams, cache: OperatorCache | None = None) -> Operator:
    """Free phonon Hamiltonian: sum_q nu_q (n_q + 1/2)."""
    ops = _cache(space, cache)
    h = zero(space, "HP")
    for q, mode in enumerate(params.phonon_modes):
        h = h + mode.nu * (ops.b_num[q] + 0.5 * ops.sigma[0].unit)
    return h.with_tag("HP")


def build_hcp(space: SpaceIndex, params: SystemParams, cache: OperatorCache | None = None) -> Operator:
    """Site-phonon coupling: sum_jq lambda_q (b_q^dag + b_q) sigma_z_j."""
    ops = _cache(space, cache)
    h = zero(space, "HCP")
    for q, mode in enumerate(params.phonon_modes):
        lam = mode.coupling
        if lam == 0.0:
            continue
        b_plus_bdag = ops.b[q] + ops.b_dag[q]
        for j in range(params.n_sites):
            h = h + lam * (b_plus_bdag @ ops.sigma[j].z)
    return h.with_tag("HCP")


def build_total(
    space: SpaceIndex,
    params: SystemParams,
    t: float = 0.0,
    cache: OperatorCache | None = None,
) -> Operator:
    """Full Hamiltonian HC + HF + HCF(t) + HP + HCP (+ classical drives)."""
    ops = _cache(space, cache)
    h = (
        build_hc(space, params, ops)
        + build_hf(space, params, ops)
        + build_hcf(space, params, t, ops)
        + build_hp(space, params, ops)
        + build_hcp(space, params, ops)
    )
    if params.drives:
        h = h + build_hdrive(space, params, t, ops)
    return h.with_tag("H")


class TotalHamiltonian:
    """Precompiled total Hamiltonian for efficient time-dependent evaluation.

    The static part is assembled once; the coupling terms are stored per
    field mode so that the literal time dependence reduces to two phase
    factors per mode, and classical drives to one scalar per drive.
    """

    def __init__(self, space: SpaceIndex, params: SystemParams, cache: OperatorCache | None = None):
        ops = _cache(space, cache)
        self.space = space
        self.params = params
        self.cache = ops
        self.static = (
            build_hc(space, params, ops)
            + build_hf(space, params, ops)
            + build_hp(space, params, ops)
            + build_hcp(space, params, ops)
        )
        self._mode_terms: list[tuple[Operator, Operator]] = []
        if params.coupling_mode == LITERAL_TIME_DEPENDENT:
            # q_jk(t) = q_jk(0) * exp(-i omega_k t): per-mode lowering blocks
            # picking up a common phase.
            for k in range(len(params.field_modes)):
                block = zero(space)
                for j in range(params.n_sites):
                    q0 = coupling_q(params, j, k, 0.0)
                    if q0 != 0:
                        block = block + q0 * (ops.sigma_x[j] @ ops.a[k])
                self._mode_terms.append((block, block.dag()))
        else:
            self.static = self.static + build_hcf(space, params, 0.0, ops)
        self._drive_ops: list[tuple[ClassicalDrive, Operator]] = []
        for drive in params.drives:
            sites = drive.sites if drive.sites is not None else tuple(range(params.n_sites))
            op = zero(space)
            for j in sites:
                op = op + ops.sigma_x[j]
            self._drive_ops.append((drive, op))

    @property
    def is_static(self) -> bool:
        return not self._mode_terms and not self._drive_ops

    def at(self, t: float) -> Operator:
        """The Hamiltonian operator at time t."""
        h = self.static
        for k, (block, block_dag) in enumerate(self._mode_terms):
            phase = np.exp(-1j * self.params.field_modes[k].omega * t)
            h = h + phase * block + np.conj(phase) * block_dag
        for drive, op in self._drive_ops:
            amp = 2.0 * (drive.amplitude * np.exp(-1j * drive.frequency * t)).real
            if amp != 0.0:
                h = h + amp * op
        return h

    def apply(self, t: float, psi: np.ndarray) -> np.ndarray:
        """H(t) |psi> without assembling the summed matrix."""
        out = self.static.matrix @ psi
        for k, (block, block_dag) in enumerate(self._mode_terms):
            phase = np.exp(-1j * self.params.field_modes[k].omega * t)
            out += phase * (block.matrix @ psi)
            out += np.conj(phase) * (block_dag.matrix @ psi)
        for drive, op in self._drive_ops:
            amp = 2.0 * (drive.amplitude * np.exp(-1j * drive.frequency * t)).real
            if amp != 0.0:
                out += amp * (op.matrix @ psi)
        return out
