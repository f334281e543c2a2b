"""Semiclassical (mean-field) closure of the operator equations of motion.

Every operator is replaced by its expectation value and every symmetrized
product ``{A, B}/2`` by the product of expectations; the site equations
then collapse to the classical precession form ``ds/dt = g . (s x G)``
(the diagonal metric acting on the ordinary cross product), the field and
phonon equations become linear c-number oscillators driven by the site
coherences, and the per-site Bloch length ``s_z^2 + 4 s+ s-`` is an exact
invariant of the closed flow.

The module also houses the analytic Rabi oracle used to validate both the
exact propagator (classical-drive substitution) and the closure, a
windowed-FFT spectrum estimator with peak extraction, and trajectory
diagnostics (largest-Lyapunov estimate, spectral flatness, regime
classification) for probing driven regimes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import find_peaks, peak_widths

from .dynamics import PropagationError, Trajectory
from .hamiltonian import SystemParams, coupling_q, drive_field

BLOCH_TOL = 1e-9


@dataclass
class MeanFieldState:
    """c-number closure variables.

    ``s_minus`` per site (complex), ``s_z`` per site (real), ``a`` per field
    mode and ``b`` per phonon mode (complex).  ``s_plus`` is the conjugate
    of ``s_minus`` by construction.
    """

    s_minus: np.ndarray
    s_z: np.ndarray
    a: np.ndarray
    b: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.s_minus = np.atleast_1d(np.asarray(self.s_minus, dtype=np.complex128))
        self.s_z = np.atleast_1d(np.asarray(self.s_z, dtype=float))
        self.a = np.atleast_1d(np.asarray(self.a, dtype=np.complex128))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=np.complex128))

    @property
    def s_plus(self) -> np.ndarray:
        return np.conj(self.s_minus)

    @property
    def n_sites(self) -> int:
        return self.s_minus.size

    def bloch_lengths(self) -> np.ndarray:
        """Per-site invariant s_z^2 + 4 s+ s- (1 for pure product states)."""
        return self.s_z**2 + 4.0 * np.abs(self.s_minus) ** 2

    def pack(self) -> np.ndarray:
        """Flatten to the real vector integrated by the ODE solver."""
        return np.concatenate(
            [
                self.s_minus.real,
                self.s_minus.imag,
                self.s_z,
                self.a.real,
                self.a.imag,
                self.b.real,
                self.b.imag,
            ]
        )

    @classmethod
    def unpack(cls, y: np.ndarray, n: int, n_field: int, n_phonon: int, time: float = 0.0):
        sm = y[0:n] + 1j * y[n : 2 * n]
        sz = y[2 * n : 3 * n]
        base = 3 * n
        a = y[base : base + n_field] + 1j * y[base + n_field : base + 2 * n_field]
        base += 2 * n_field
        b = y[base : base + n_phonon] + 1j * y[base + n_phonon : base + 2 * n_phonon]
        return cls(sm, sz, a, b, time)


def bloch_state(theta: float = 0.0, phi: float = 0.0) -> tuple[complex, float]:
    """(s_minus, s_z) of the pure state cos(t/2)|lower> + e^{i phi} sin(t/2)|upper>."""
    return 0.5 * np.sin(theta) * np.exp(1j * phi), -float(np.cos(theta))


def _site_drive(params: SystemParams, mf: MeanFieldState, l: int, t: float) -> float:
    """Real driving field on site l: quantized-mode image plus classical drives."""
    total = drive_field(params, l, t)
    for k in range(len(params.field_modes)):
        total += 2.0 * (coupling_q(params, l, k, t) * mf.a[k]).real
    return total


def close_rhs(mf: MeanFieldState, params: SystemParams, t: float) -> MeanFieldState:
    """Time derivative of the closed (factorized) equations.

    Site l (J the nominal exchange, B_l the real site drive, L the phonon
    displacement sum):

    * ds-/dt = -i w_l s- + i s_z B_l + 2iJ (s_z S- - s- S_z) - 2i L s-
    * ds_z/dt = -4 Im(s-) B_l - 8 J Im(s- conj(S-))

    with S the neighbour sums; field and phonon amplitudes follow their
    linear equations driven by ``sum_j 2 Re(s-_j) q*`` and
    ``lambda_q sum_j s_z_j``.
    """
    n = mf.n_sites
    ds_minus = np.zeros(n, dtype=np.complex128)
    ds_z = np.zeros(n, dtype=float)
    omegas = params.omegas
    j = params.exchange_j
    lam_disp = 0.0
    for q, mode in enumerate(params.phonon_modes):
        lam_disp += mode.coupling * 2.0 * mf.b[q].real

    for l in range(n):
        b_l = _site_drive(params, mf, l, t)
        sm, sz = mf.s_minus[l], mf.s_z[l]
        ds_minus[l] = -1j * omegas[l] * sm + 1j * sz * b_l
        ds_z[l] = -4.0 * sm.imag * b_l
        if j != 0.0:
            s_minus_nb = sum(mf.s_minus[w] for w in params.neighbors(l))
            s_z_nb = sum(mf.s_z[w] for w in params.neighbors(l))
            ds_minus[l] += 2j * j * (sz * s_minus_nb - sm * s_z_nb)
            ds_z[l] += -8.0 * j * (sm * np.conj(s_minus_nb)).imag
        if lam_disp != 0.0:
            ds_minus[l] += -2j * lam_disp * sm

    da = np.zeros_like(mf.a)
    for k, mode in enumerate(params.field_modes):
        source = sum(
            2.0 * mf.s_minus[jj].real * np.conj(coupling_q(params, jj, k, t))
            for jj in range(n)
        )
        da[k] = -1j * mode.omega * mf.a[k] - 1j * source

    db = np.zeros_like(mf.b)
    sz_total = float(np.sum(mf.s_z))
    for q, mode in enumerate(params.phonon_modes):
        db[q] = -1j * mode.nu * mf.b[q] - 1j * mode.coupling * sz_total

    return MeanFieldState(ds_minus, ds_z, da, db, t)


def mean_field_energy(mf: MeanFieldState, params: SystemParams, t: float = 0.0) -> float:
    """Mean-field Hamiltonian function (conserved under static coupling)."""
    e = 0.0
    for l, (e_low, e_up) in enumerate(params.site_energies):
        e += 0.5 * (e_up - e_low) * mf.s_z[l] + 0.5 * (e_low + e_up)
    j = params.exchange_j
    if j != 0.0:
        for v, w in params.bonds():
            e += 2.0 * j * (
                2.0 * (np.conj(mf.s_minus[v]) * mf.s_minus[w]).real
                + 0.5 * mf.s_z[v] * mf.s_z[w]
            )
    for k, mode in enumerate(params.field_modes):
        e += mode.omega * (abs(mf.a[k]) ** 2 + 0.5)
    for l in range(mf.n_sites):
        e += _site_drive(params, mf, l, t) * 2.0 * mf.s_minus[l].real
    for q, mode in enumerate(params.phonon_modes):
        e += mode.nu * (abs(mf.b[q]) ** 2 + 0.5)
        e += mode.coupling * 2.0 * mf.b[q].real * float(np.sum(mf.s_z))
    return float(e)


def mf_propagate(
    mf: MeanFieldState,
    params: SystemParams,
    t_end: float,
    *,
    tol: float = 1e-10,
    n_out: int = 201,
    t_eval: np.ndarray | None = None,
    method: str = "DOP853",
) -> Trajectory:
    """Integrate the closed equations; records mirror the exact trajectory.

    ``norm`` records the root of the mean per-site Bloch length (the
    closure's analogue of state normalization) and ``bloch_l`` the per-site
    invariant itself.
    """
    n, n_field, n_phonon = mf.n_sites, len(params.field_modes), len(params.phonon_modes)
    if mf.a.size != n_field or mf.b.size != n_phonon:
        raise ValueError(
            f"state has {mf.a.size} field / {mf.b.size} phonon amplitudes, "
            f"params declare {n_field} / {n_phonon}"
        )
    t_start = mf.time
    if t_end <= t_start:
        raise ValueError(f"t_end {t_end} must exceed start time {t_start}")

    def rhs(t, y):
        state = MeanFieldState.unpack(y, n, n_field, n_phonon, t)
        return close_rhs(state, params, t).pack()

    if t_eval is None:
        t_eval = np.linspace(t_start, t_end, n_out)
    sol = solve_ivp(
        rhs,
        (t_start, t_end),
        mf.pack(),
        method=method,
        t_eval=t_eval,
        rtol=tol,
        atol=tol * 1e-2,
    )
    if not sol.success:
        raise PropagationError(f"mean-field propagation failed: {sol.message}")

    nt = sol.t.size
    records: dict[str, np.ndarray] = {}
    for l in range(n):
        records[f"sigma_minus_{l}"] = np.empty(nt, dtype=np.complex128)
        records[f"sigma_plus_{l}"] = np.empty(nt, dtype=np.complex128)
        records[f"sigma_z_{l}"] = np.empty(nt)
        records[f"bloch_{l}"] = np.empty(nt)
    for k in range(n_field):
        records[f"a_{k}"] = np.empty(nt, dtype=np.complex128)
        records[f"n_{k}"] = np.empty(nt)
    for q in range(n_phonon):
        records[f"b_{q}"] = np.empty(nt, dtype=np.complex128)
        records[f"nb_{q}"] = np.empty(nt)
    records["norm"] = np.empty(nt)
    records["energy"] = np.empty(nt)

    for i in range(nt):
        state = MeanFieldState.unpack(sol.y[:, i], n, n_field, n_phonon, sol.t[i])
        for l in range(n):
            records[f"sigma_minus_{l}"][i] = state.s_minus[l]
            records[f"sigma_plus_{l}"][i] = np.conj(state.s_minus[l])
            records[f"sigma_z_{l}"][i] = state.s_z[l]
            records[f"bloch_{l}"][i] = state.bloch_lengths()[l]
        for k in range(n_field):
            records[f"a_{k}"][i] = state.a[k]
            records[f"n_{k}"][i] = abs(state.a[k]) ** 2
        for q in range(n_phonon):
            records[f"b_{q}"][i] = state.b[q]
            records[f"nb_{q}"][i] = abs(state.b[q]) ** 2
        records["norm"][i] = np.sqrt(np.mean(state.bloch_lengths()))
        records["energy"][i] = mean_field_energy(state, params, sol.t[i])

    bloch_drift = max(
        float(np.max(np.abs(records[f"bloch_{l}"] - records[f"bloch_{l}"][0])))
        for l in range(n)
    )
    meta = {
        "bloch_drift": bloch_drift,
        "tol": tol,
        "method": method,
        "kind": "meanfield",
    }
    return Trajectory(times=sol.t.copy(), records=records, meta=meta)


# -- analytic Rabi oracle ---------------------------------------------------------


@dataclass(frozen=True)
class RabiOracle:
    """Closed-form driven two-level solution (rotating-wave regime).

    Derived from the closed equations for a single site with one classical
    drive ``2 Re(A e^{-i w_d t})`` starting in the lower state: in the
    frame rotating at the drive frequency the Bloch vector precesses about
    ``(-Omega_R, 0, Delta)`` with ``Omega_R = 2 |A|``; resonantly the
    inversion is ``-cos(Omega_R t)``, reaching +1 at ``t = pi / Omega_R``,
    and detuning reduces the oscillation amplitude to
    ``Omega_R^2 / (Omega_R^2 + Delta^2)``.
    """

    omega_site: float
    drive_amplitude: complex
    drive_frequency: float

    @property
    def detuning(self) -> float:
        return self.drive_frequency - self.omega_site

    @property
    def omega_rabi(self) -> float:
        return 2.0 * abs(self.drive_amplitude)

    @property
    def omega_generalized(self) -> float:
        return float(np.hypot(self.omega_rabi, self.detuning))

    @property
    def inversion_time(self) -> float:
        """Time of first maximum inversion (full inversion on resonance)."""
        if self.omega_generalized == 0.0:
            return np.inf
        return np.pi / self.omega_generalized

    @property
    def oscillation_amplitude(self) -> float:
        """Peak-to-valley fraction of full inversion: Omega_R^2 / Omega_gen^2."""
        if self.omega_generalized == 0.0:
            return 0.0
        return (self.omega_rabi / self.omega_generalized) ** 2

    def s_z(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return -1.0 + 2.0 * self.oscillation_amplitude * np.sin(
            0.5 * self.omega_generalized * t
        ) ** 2

    def s_minus(self, t) -> np.ndarray:
        """Lab-frame coherence from the rotating-frame Rodrigues rotation."""
        t = np.asarray(t, dtype=float)
        omega_r, delta, omega_g = self.omega_rabi, self.detuning, self.omega_generalized
        if omega_g == 0.0:
            return np.zeros_like(t, dtype=complex)
        theta = omega_g * t
        x = omega_r * delta * (1.0 - np.cos(theta)) / omega_g**2
        y = -(omega_r / omega_g) * np.sin(theta)
        phase = np.exp(1j * np.angle(self.drive_amplitude)) if self.drive_amplitude else 1.0
        u = 0.5 * (x + 1j * y) * phase
        return u * np.exp(-1j * self.drive_frequency * t)


def rabi_oracle(params: SystemParams, validity_ratio: float = 0.1) -> RabiOracle:
    """Build the analytic oracle for a single-site, single-drive system.

    Refuses configurations outside the rotating-wave validity window
    (drive strength or detuning beyond ``validity_ratio`` of the
    transition frequency), or with quantized field modes present.
    """
    if params.n_sites != 1:
        raise ValueError("Rabi oracle requires a single site")
    if params.field_modes:
        raise ValueError("Rabi oracle applies to a classical drive, not quantized modes")
    if len(params.drives) != 1:
        raise ValueError("Rabi oracle requires exactly one classical drive")
    drive = params.drives[0]
    omega0 = params.omegas[0]
    oracle = RabiOracle(omega0, drive.amplitude, drive.frequency)
    if oracle.omega_rabi > validity_ratio * omega0:
        raise ValueError(
            f"drive too strong for the rotating-wave window: "
            f"Omega_R = {oracle.omega_rabi:.3g} > {validity_ratio} * {omega0:.3g}"
        )
    if abs(oracle.detuning) > validity_ratio * omega0:
        raise ValueError(
            f"detuning {oracle.detuning:.3g} outside the rotating-wave window"
        )
    return oracle


# -- spectrum ----------------------------------------------------------------------


@dataclass
class SpectrumPeak:
    omega: float
    height: float
    width: float


@dataclass
class SpectrumResult:
    """Power spectral density on an angular-frequency grid, with peaks."""

    omegas: np.ndarray
    power: np.ndarray
    peaks: list[SpectrumPeak]
    parseval_ratio: float
    window: str

    def peak_omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.peaks])


def spectrum(
    traj: Trajectory,
    observable: str,
    *,
    window: str = "hann",
    resample: bool = False,
    peak_rel_height: float = 1e-3,
) -> SpectrumResult:
    """Windowed FFT power spectrum of a recorded observable.

    Frequencies are angular.  Real series yield a one-sided spectrum,
    complex series a two-sided one.  Peaks are local maxima above
    ``peak_rel_height`` times the maximum power.

    A non-uniform time grid is refused unless ``resample=True``, in which
    case the series is linearly interpolated onto a uniform grid.
    """
    times = traj.times
    series = traj.observable(observable)
    steps = np.diff(times)
    if steps.size < 3:
        raise ValueError("series too short for a spectrum")
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        if not resample:
            raise ValueError("non-uniform time grid; pass resample=True to interpolate")
        uniform = np.linspace(times[0], times[-1], times.size)
        series = np.interp(uniform, times, series.real) + (
            1j * np.interp(uniform, times, series.imag)
            if np.iscomplexobj(series)
            else 0.0
        )
        times = uniform
        steps = np.diff(times)
    dt = float(steps[0])
    n = series.size

    if window == "hann":
        win = np.hanning(n)
    elif window in ("rect", "boxcar"):
        win = np.ones(n)
    else:
        raise ValueError(f"unknown window {window!r}")
    u = float(np.mean(win**2))
    windowed = series * win

    if np.iscomplexobj(series):
        spec_vals = np.fft.fftshift(np.fft.fft(windowed))
        freqs = np.fft.fftshift(np.fft.fftfreq(n, d=dt))
        power = np.abs(spec_vals) ** 2 * dt / (n * u)
    else:
        spec_vals = np.fft.rfft(windowed)
        freqs = np.fft.rfftfreq(n, d=dt)
        power = np.abs(spec_vals) ** 2 * dt / (n * u)
        # one-sided: double the shared bins
        if n % 2 == 0:
            power[1:-1] *= 2.0
        else:
            power[1:] *= 2.0
    omegas = 2.0 * np.pi * freqs

    # Parseval check: integrated density vs mean square of the raw series.
    total_spectral = float(np.sum(power)) * (1.0 / (n * dt))
    mean_square = float(np.mean(np.abs(series) ** 2))
    parseval_ratio = total_spectral / mean_square if mean_square > 0 else 1.0

    floor = peak_rel_height * float(np.max(power)) if np.max(power) > 0 else 0.0
    idx, props = find_peaks(power, height=floor)
    peaks = []
    if idx.size:
        widths = peak_widths(power, idx, rel_height=0.5)[0]
        domega = omegas[1] - omegas[0] if omegas.size > 1 else 0.0
        order = np.argsort(props["peak_heights"])[::-1]
        for rank in order:
            i = idx[rank]
            peaks.append(
                SpectrumPeak(
                    omega=float(omegas[i]),
                    height=float(power[i]),
                    width=float(widths[rank] * domega),
                )
            )
    elif np.max(power) > 0 and np.argmax(power) == 0:
        # monotone spectra (e.g. constant series): report the DC maximum
        peaks.append(SpectrumPeak(omega=float(omegas[0]), height=float(power[0]), width=0.0))
    return SpectrumResult(
        omegas=omegas, power=power, peaks=peaks, parseval_ratio=parseval_ratio,
        window=window,
    )


# -- regime diagnostics --------------------------------------------------------------


@dataclass
class VolterraReport:
    """Regime diagnostics of the closed flow.

    ``lyapunov`` is the Benettin-style largest-exponent estimate with its
    per-interval standard error; ``flatness`` the spectral flatness (0 for
    a line spectrum, 1 for white noise) of the probed observables.  The
    classification is heuristic and exploratory.
    """

    lyapunov: float
    lyapunov_stderr: float
    flatness: dict[str, float]
    classification: str
    intervals: int


def spectral_flatness(power: np.ndarray) -> float:
    """Geometric over arithmetic mean of the nonzero spectral density."""
    p = np.asarray(power, dtype=float)
    p = p[p > 0]
    if p.size == 0:
        return 0.0
    return float(np.exp(np.mean(np.log(p))) / np.mean(p))


def volterra_diagnostics(
    params: SystemParams,
    mf0: MeanFieldState,
    t_end: float,
    *,
    observables: tuple[str, ...] = ("sigma_z_0",),
    renorm_interval: float | None = None,
    delta0: float = 1e-8,
    n_out: int = 1024,
    tol: float = 1e-10,
    seed: int = 0,
    flatness_periodic: float = 0.05,
    flatness_broadband: float = 0.25,
) -> VolterraReport:
    """Probe the closed flow for periodic / quasiperiodic / broadband regimes.

    The largest Lyapunov exponent is estimated from two-trajectory
    separation regrowth with renormalization every ``renorm_interval``
    (default: one twentieth of the run); spectral flatness is computed
    from the base trajectory.  Raises when the run is too short to fit at
    least five renormalization intervals.
    """
    t_span = t_end - mf0.time
    if renorm_interval is None:
        renorm_interval = t_span / 20.0
    n_intervals = int(np.floor(t_span / renorm_interval))
    if n_intervals < 5:
        raise ValueError(
            "trajectory too short for a separation estimate "
            f"({n_intervals} renormalization intervals, need >= 5)"
        )

    base = mf_propagate(mf0, params, t_end, tol=tol, n_out=n_out)
    flatness = {
        name: spectral_flatness(spectrum(base, name, window="hann").power)
        for name in observables
    }

    n, n_field, n_phonon = mf0.n_sites, len(params.field_modes), len(params.phonon_modes)
    rng = np.random.default_rng(seed)
    y_ref = mf0.pack()
    direction = rng.normal(size=y_ref.size)
    direction /= np.linalg.norm(direction)
    y_pert = y_ref + delta0 * direction

    def rhs(t, y):
        state = MeanFieldState.unpack(y, n, n_field, n_phonon, t)
        return close_rhs(state, params, t).pack()

    logs = []
    t0 = mf0.time
    for _ in range(n_intervals):
        t1 = t0 + renorm_interval
        sol_ref = solve_ivp(rhs, (t0, t1), y_ref, method="DOP853", rtol=tol, atol=tol * 1e-2)
        sol_pert = solve_ivp(rhs, (t0, t1), y_pert, method="DOP853", rtol=tol, atol=tol * 1e-2)
        if not (sol_ref.success and sol_pert.success):
            raise PropagationError("Lyapunov probe integration failed")
        y_ref = sol_ref.y[:, -1]
        y_end = sol_pert.y[:, -1]
        dist = np.linalg.norm(y_end - y_ref)
        if dist == 0.0:
            dist = np.finfo(float).tiny
        logs.append(np.log(dist / delta0) / renorm_interval)
        # renormalize the separation back to delta0 along the grown direction
        y_pert = y_ref + (y_end - y_ref) * (delta0 / dist)
        t0 = t1

    logs_arr = np.asarray(logs)
    lyap = float(np.mean(logs_arr))
    stderr = float(np.std(logs_arr) / np.sqrt(len(logs_arr)))

    max_flatness = max(flatness.values())
    growth_significant = lyap > max(3.0 * stderr, 2.0 / t_span)
    if growth_significant or max_flatness >= flatness_broadband:
        classification = "broadband"
    elif max_flatness < flatness_periodic:
        classification = "periodic"
    else:
        classification = "quasiperiodic"
    return VolterraReport(
        lyapunov=lyap,
        lyapunov_stderr=stderr,
        flatness=flatness,
        classification=classification,
        intervals=n_intervals,
    )
