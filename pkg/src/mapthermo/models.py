"""Concrete open-system models that produce map trajectories on a grid.

Three families:

* a sinusoidally driven qubit damped by constant thermal rates, the
  workhorse for driven-dissipative scans;
* a qubit exchanging excitations with a single bosonic mode (the resonant
  exchange model), whose exact reduced dynamics is phase covariant and
  generically non-Markovian, built here from the closed block formulas with
  analytic time derivatives;
* a closed drive acting on an initial state with coherences, for the
  modified-Hamiltonian work statistics.

The exchange model also ships an extraction routine that projects any
phase-covariant qubit trajectory back onto rate functions, which is how the
non-Markovian rate structure is exposed and how round trips against the
coefficient integrals are checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import MapTrajectory, map_derivative
from .errors import ConfigError, SingularMap, TruncationError
from .operators import (
    COND_THRESHOLD_DEFAULT,
    HermitianOperator,
    DensityMatrix,
    PAULI,
    condition_number,
    gibbs_state,
    pauli_transfer_matrix,
    superop_from_pauli_transfer,
)
from .phase_covariant import PCRates, pc_generator_transfer_matrix
from .quadrature import cumulative_simpson

TAIL_WEIGHT_MAX = 1e-10
PC_PATTERN_TOL = 1e-7


@dataclass(frozen=True)
class WeakCouplingParams:
    """Driven qubit with rates frozen at their initial-splitting values.

    The splitting is omega(t) = omega0 + delta sin^2(Omega t). Decay and
    excitation rates are gamma (n_th + 1) and gamma n_th with
    n_th = 1/(e^{beta omega0} - 1), held constant over the drive.
    drive_mode fixes the default duration: "monotonic" stops at the quarter
    period pi/(2 Omega) where the splitting peaks, "periodic" runs one full
    period 2 pi / Omega.
    """

    omega0: float = 1.0
    delta: float = 1.0
    Omega: float = math.pi / 20
    gamma: float = 0.01
    beta: float = 1.0
    drive_mode: str = "monotonic"
    gamma_z: float = 0.0

    def __post_init__(self):
        if self.drive_mode not in ("monotonic", "periodic"):
            raise ConfigError(f"unknown drive_mode {self.drive_mode!r}")
        if self.omega0 <= 0 or self.Omega <= 0:
            raise ConfigError("omega0 and Omega must be positive")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.gamma < 0 or self.gamma_z < 0:
            raise ConfigError("rates must be nonnegative")

    @property
    def default_t_f(self) -> float:
        if self.drive_mode == "monotonic":
            return math.pi / (2.0 * self.Omega)
        return 2.0 * math.pi / self.Omega

    def grid(self, n_steps: int = 1000) -> np.ndarray:
        return np.linspace(0.0, self.default_t_f, n_steps + 1)


def weak_coupling_rates(params: WeakCouplingParams) -> PCRates:
    n_th = 1.0 / math.expm1(params.beta * params.omega0)
    gp = params.gamma * n_th
    gm = params.gamma * (n_th + 1.0)
    omega0, delta, big_omega = params.omega0, params.delta, params.Omega
    gz = params.gamma_z

    def omega(t):
        t = np.asarray(t, dtype=float)
        return omega0 + delta * np.sin(big_omega * t) ** 2

    return PCRates(
        omega=omega,
        gamma_plus=lambda t: np.full_like(np.asarray(t, dtype=float), gp),
        gamma_minus=lambda t: np.full_like(np.asarray(t, dtype=float), gm),
        gamma_z=lambda t: np.full_like(np.asarray(t, dtype=float), gz),
    )


# ---------------------------------------------------------------------------
# single-mode exchange model


@dataclass(frozen=True)
class JCParams:
    """Qubit coupled to one bosonic mode under excitation exchange.

    H = (omega/2) sigma_z + omega_m a^dag a + g (sigma_+ a + sigma_- a^dag).

    beta is the mode inverse temperature; math.inf selects the vacuum. The
    mode space is truncated at n_max photons and the coupling out of the
    edge state is dropped, so the joint evolution stays exactly unitary and
    the reduced map exactly completely positive; the price is a tail error
    of the order of the discarded thermal weight q^{n_max+1}, q = e^{-beta
    omega_m}. Leave n_max as None to have it chosen from tail_margin.
    """

    omega: float = 1.0
    omega_m: float = 1.0
    g: float = 0.1
    beta: float = math.inf
    n_max: int | None = None
    tail_margin: float = 1e-12

    def __post_init__(self):
        if self.omega_m <= 0:
            raise ConfigError("omega_m must be positive")
        if self.beta <= 0:
            raise ConfigError("beta must be positive (math.inf for vacuum)")
        if self.n_max is not None and self.n_max < 1:
            raise ConfigError("n_max must be at least 1")


def jc_mode_count(params: JCParams) -> int:
    """Photon cutoff actually used, with the tail-weight invariant enforced.

    An explicit n_max must leave q^{n_max+1} below TAIL_WEIGHT_MAX or the
    truncated model is not a faithful stand-in for the infinite one;
    TruncationError then reports the smallest acceptable cutoff.
    """
    if math.isinf(params.beta):
        return params.n_max if params.n_max is not None else 1
    q = math.exp(-params.beta * params.omega_m)
    if params.n_max is not None:
        tail = q ** (params.n_max + 1)
        if tail >= TAIL_WEIGHT_MAX:
            needed = math.ceil(math.log(TAIL_WEIGHT_MAX) / math.log(q)) - 1
            raise TruncationError(
                f"thermal tail weight {tail:.3e} at n_max={params.n_max} "
                f"exceeds {TAIL_WEIGHT_MAX:.0e}",
                required_n_max=max(needed, params.n_max + 1))
        return params.n_max
    n = math.ceil(math.log(params.tail_margin) / math.log(q)) - 1
    return max(n, 1)


def _thermal_weights(params: JCParams, n_max: int) -> np.ndarray:
    if math.isinf(params.beta):
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    q = math.exp(-params.beta * params.omega_m)
    p = q ** np.arange(n_max + 1)
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class JCCoefficients:
    """Reduced-map data of the exchange model on the grid.

    f is the coherence factor <e|Phi[|e><g|]|g>; T_ee and T_gg the
    population survival probabilities of the excited and ground state. The
    transfer-matrix entries a, b, c, d_par and their time derivatives
    follow from these.
    """

    times: np.ndarray
    weights: np.ndarray
    f: np.ndarray
    T_ee: np.ndarray
    T_gg: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d_par: np.ndarray
    da: np.ndarray
    db: np.ndarray
    dc: np.ndarray
    dd_par: np.ndarray


def jc_reduced_map(params: JCParams, times: np.ndarray,
                   ) -> tuple[MapTrajectory, JCCoefficients]:
    """Exact reduced qubit trajectory with analytic derivatives.

    Excitation number is conserved, so the joint unitary is block diagonal
    on {|e,n>, |g,n+1>} and every block integrates in closed form. The
    reduced map is phase covariant; its transfer matrix is assembled from
    the block amplitudes averaged over the thermal mode occupation.
    """
    times = np.asarray(times, dtype=float)
    n_max = jc_mode_count(params)
    p = _thermal_weights(params, n_max)
    delta = params.omega - params.omega_m
    g = params.g
    t = times[None, :]

    def block_survival(n):
        """Survival amplitudes and derivatives inside blocks n, coupling
        g sqrt(n+1): (upper |e,n>, lower |g,n+1>) components."""
        c_n = (2 * n + 1) * params.omega_m / 2.0
        rabi = np.sqrt(delta ** 2 + 4.0 * g ** 2 * (n + 1.0))
        cos = np.cos(rabi * t / 2.0)
        sin = np.sin(rabi * t / 2.0)
        # sin(x t / 2) / x, finite as x -> 0
        snc = 0.5 * t * np.sinc(rabi * t / (2.0 * math.pi))
        phase = np.exp(-1j * c_n * t)
        u = cos - 1j * delta * snc
        du = -(rabi / 2.0) * sin - 1j * (delta / 2.0) * cos
        v = cos + 1j * delta * snc
        dv = -(rabi / 2.0) * sin + 1j * (delta / 2.0) * cos
        return (phase * u, phase * (du - 1j * c_n * u),
                phase * v, phase * (dv - 1j * c_n * v))

    def level_amplitudes(levels):
        """Per-level survival amplitudes A_n (excited, block n) and C_n
        (ground, block n-1), with the truncation edge and the uncoupled
        ground level handled in place."""
        nf = levels.astype(float)[:, None]
        A, dA, _, _ = block_survival(nf)
        _, _, C, dC = block_survival(nf - 1.0)
        if levels[-1] == n_max:
            # coupling out of the edge level is dropped, bare phase remains
            e_edge = params.omega / 2.0 + n_max * params.omega_m
            A[-1] = np.exp(-1j * e_edge * times)
            dA[-1] = -1j * e_edge * A[-1]
        if levels[0] == 0:
            C[0] = np.exp(0.5j * params.omega * times)
            dC[0] = 0.5j * params.omega * C[0]
        return A, dA, C, dC

    f = np.zeros(times.size, dtype=complex)
    df = np.zeros(times.size, dtype=complex)
    T_ee = np.zeros(times.size)
    dT_ee = np.zeros(times.size)
    T_gg = np.zeros(times.size)
    dT_gg = np.zeros(times.size)
    # chunk the level sum so very hot modes stay within memory
    chunk = max(1, 1_000_000 // max(times.size, 1))
    for lo in range(0, n_max + 1, chunk):
        levels = np.arange(lo, min(lo + chunk, n_max + 1))
        A, dA, C, dC = level_amplitudes(levels)
        pw = p[levels][:, None]
        f += (pw * A * C.conj()).sum(axis=0)
        df += (pw * (dA * C.conj() + A * dC.conj())).sum(axis=0)
        T_ee += (pw * (A.real ** 2 + A.imag ** 2)).sum(axis=0)
        dT_ee += (pw * 2.0 * (A.conj() * dA).real).sum(axis=0)
        T_gg += (pw * (C.real ** 2 + C.imag ** 2)).sum(axis=0)
        dT_gg += (pw * 2.0 * (C.conj() * dC).real).sum(axis=0)

    coeffs = JCCoefficients(
        times=times, weights=p, f=f, T_ee=T_ee, T_gg=T_gg,
        a=f.real, b=-f.imag, c=T_ee - T_gg, d_par=T_ee + T_gg - 1.0,
        da=df.real, db=-df.imag, dc=dT_ee - dT_gg, dd_par=dT_ee + dT_gg)

    maps = []
    derivs = []
    for i in range(times.size):
        m = np.array([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, coeffs.a[i], -coeffs.b[i], 0.0],
            [0.0, coeffs.b[i], coeffs.a[i], 0.0],
            [coeffs.c[i], 0.0, 0.0, coeffs.d_par[i]],
        ])
        dm = np.array([
            [0.0, 0.0, 0.0, 0.0],
            [0.0, coeffs.da[i], -coeffs.db[i], 0.0],
            [0.0, coeffs.db[i], coeffs.da[i], 0.0],
            [coeffs.dc[i], 0.0, 0.0, coeffs.dd_par[i]],
        ])
        maps.append(superop_from_pauli_transfer(m, trace_preserving=True))
        derivs.append(superop_from_pauli_transfer(dm).matrix)
    traj = MapTrajectory(times=times, maps=tuple(maps),
                         derivatives=tuple(derivs))
    return traj, coeffs


def vacuum_excited_population(traj: MapTrajectory) -> np.ndarray:
    """Excited-state survival probability from the maps themselves."""
    rho_e = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    out = np.empty(traj.times.size)
    for i, m in enumerate(traj.maps):
        evolved = (m.matrix @ rho_e.reshape(-1, order="F")).reshape(2, 2, order="F")
        out[i] = evolved[0, 0].real
    return out


# ---------------------------------------------------------------------------
# rate extraction from a phase-covariant trajectory


@dataclass(frozen=True, eq=False)
class ExtractedPCRates:
    """Rate functions recovered from a qubit trajectory on its grid.

    map_residual is the largest transfer-matrix entry outside the
    phase-covariant pattern; generator_residual the largest mismatch
    between the time-local generator and its phase-covariant form built
    from the extracted rates. Both stay at rounding level when the
    trajectory really is phase covariant.
    """

    times: np.ndarray
    omega: np.ndarray
    kappa: np.ndarray
    xi: np.ndarray
    gamma_z: np.ndarray
    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    map_residual: float
    generator_residual: float

    def as_rates(self) -> PCRates:
        """Callable rates that reproduce the grid samples exactly and
        interpolate linearly in between."""
        times = self.times

        def interp(samples):
            return lambda t: np.interp(np.asarray(t, dtype=float), times, samples)

        return PCRates(omega=interp(self.omega),
                       gamma_plus=interp(self.gamma_plus),
                       gamma_minus=interp(self.gamma_minus),
                       gamma_z=interp(self.gamma_z))


def extract_pc_rates(traj: MapTrajectory,
                     pattern_tol: float = PC_PATTERN_TOL,
                     cond_threshold: float = COND_THRESHOLD_DEFAULT,
                     ) -> ExtractedPCRates:
    """Project a qubit trajectory onto phase-covariant rate functions.

    Works from the transfer matrices M(t) and their derivatives: the
    time-local generator in transfer form is L = Mdot M^{-1}, and for a
    phase-covariant family its nonzero entries are functions of
    (omega, kappa, xi, gamma_z) alone. Raises ConfigError when the
    trajectory is not phase covariant to within pattern_tol, and
    SingularMap at grid times where the map cannot be inverted (the rates
    blow up at such isolated times; they are not interpolated over).
    """
    if traj.dim != 2:
        raise ConfigError("rate extraction requires a qubit trajectory")
    nt = traj.times.size
    a = np.empty(nt)
    b = np.empty(nt)
    c = np.empty(nt)
    d_par = np.empty(nt)
    map_residual = 0.0
    pattern = np.array([
        [1, 0, 0, 0],
        [0, 1, 1, 0],
        [0, 1, 1, 0],
        [1, 0, 0, 1],
    ], dtype=bool)
    for i, m in enumerate(traj.maps):
        r = pauli_transfer_matrix(m)
        off = float(np.max(np.abs(np.where(pattern, 0.0, r))))
        sym = max(abs(r[1, 1] - r[2, 2]), abs(r[1, 2] + r[2, 1]),
                  abs(r[0, 0] - 1.0))
        map_residual = max(map_residual, off, sym)
        a[i] = 0.5 * (r[1, 1] + r[2, 2])
        b[i] = 0.5 * (r[2, 1] - r[1, 2])
        c[i] = r[3, 0]
        d_par[i] = r[3, 3]
    if map_residual > pattern_tol:
        raise ConfigError(
            f"trajectory is not phase covariant: pattern residual "
            f"{map_residual:.3e} exceeds {pattern_tol:.0e}")
    for i in range(nt):
        cond = condition_number(traj.maps[i])
        if not np.isfinite(cond) or cond > cond_threshold:
            raise SingularMap(
                f"map at t = {traj.times[i]:.6g} is numerically singular "
                f"(cond = {cond:.3e}): the extracted rates diverge there",
                time=float(traj.times[i]), condition_number=cond)

    da = np.empty(nt)
    db = np.empty(nt)
    dc = np.empty(nt)
    dd = np.empty(nt)

    def entry(dm, j, k):
        image = (dm @ PAULI[k].reshape(-1, order="F")).reshape(2, 2, order="F")
        return 0.5 * float(np.trace(PAULI[j] @ image).real)

    for i in range(nt):
        dm = map_derivative(traj, i)
        da[i] = entry(dm, 1, 1)
        db[i] = entry(dm, 2, 1)
        dc[i] = entry(dm, 3, 0)
        dd[i] = entry(dm, 3, 3)

    sq = a ** 2 + b ** 2
    omega = (db * a - da * b) / sq
    damp = -(da * a + db * b) / sq
    kappa = -dd / d_par
    xi = dc - (dd / d_par) * c
    gamma_z = 0.5 * (damp - 0.5 * kappa)

    gen_residual = 0.0
    for i in range(nt):
        m_ptm = np.array([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, a[i], -b[i], 0.0],
            [0.0, b[i], a[i], 0.0],
            [c[i], 0.0, 0.0, d_par[i]],
        ])
        dm_ptm = np.array([
            [0.0, 0.0, 0.0, 0.0],
            [0.0, da[i], -db[i], 0.0],
            [0.0, db[i], da[i], 0.0],
            [dc[i], 0.0, 0.0, dd[i]],
        ])
        l_ptm = dm_ptm @ np.linalg.inv(m_ptm)
        l_pc = pc_generator_transfer_matrix(omega[i], kappa[i], xi[i],
                                            gamma_z[i])
        gen_residual = max(gen_residual, float(np.max(np.abs(l_ptm - l_pc))))

    return ExtractedPCRates(
        times=traj.times, omega=omega, kappa=kappa, xi=xi, gamma_z=gamma_z,
        gamma_plus=0.5 * (kappa + xi), gamma_minus=0.5 * (kappa - xi),
        map_residual=map_residual, generator_residual=gen_residual)


# ---------------------------------------------------------------------------
# closed drive from a coherent initial state


@dataclass(frozen=True)
class ClosedCoherentParams:
    """Closed sinusoidal drive applied to a rotated thermal state.

    The drive Hamiltonian is H(t) = (omega(t)/2) sigma_z with the same
    omega(t) as the weak-coupling family. The initial state is the Gibbs
    state of H(0) at beta0, rotated about the y axis by rotation_angle, so
    it carries coherences in the H(0) eigenbasis whenever the angle is not
    a multiple of pi.
    """

    omega0: float = 1.0
    delta: float = 1.0
    Omega: float = math.pi / 20
    beta0: float = 1.0
    rotation_angle: float = 0.5
    drive_mode: str = "monotonic"

    def __post_init__(self):
        if self.drive_mode not in ("monotonic", "periodic"):
            raise ConfigError(f"unknown drive_mode {self.drive_mode!r}")
        if self.beta0 <= 0 or self.omega0 <= 0 or self.Omega <= 0:
            raise ConfigError("beta0, omega0 and Omega must be positive")

    @property
    def default_t_f(self) -> float:
        if self.drive_mode == "monotonic":
            return math.pi / (2.0 * self.Omega)
        return 2.0 * math.pi / self.Omega

    def grid(self, n_steps: int = 1000) -> np.ndarray:
        return np.linspace(0.0, self.default_t_f, n_steps + 1)


def closed_coherent_protocol(params: ClosedCoherentParams, times: np.ndarray,
                             ) -> tuple[DensityMatrix, list[HermitianOperator],
                                        list[np.ndarray]]:
    """Initial state, Hamiltonian series and propagator series of the drive.

    H(t) commutes with itself at all times, so U(t) is a bare phase
    rotation by the accumulated angle int_0^t omega."""
    times = np.asarray(times, dtype=float)
    omega = params.omega0 + params.delta * np.sin(params.Omega * times) ** 2
    h = 0.0 if times.size < 2 else float(times[1] - times[0])
    theta = cumulative_simpson(omega, h)
    hams = [HermitianOperator(0.5 * w * PAULI[3]) for w in omega]
    unitaries = [np.diag([np.exp(-0.5j * th), np.exp(0.5j * th)])
                 for th in theta]
    ang = params.rotation_angle
    rot = np.array([[math.cos(ang / 2.0), -math.sin(ang / 2.0)],
                    [math.sin(ang / 2.0), math.cos(ang / 2.0)]])
    base = gibbs_state(hams[0], params.beta0)
    rho0 = DensityMatrix(rot @ base.matrix @ rot.T)
    return rho0, hams, unitaries
