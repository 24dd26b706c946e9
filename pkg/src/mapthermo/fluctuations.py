"""Two-point measurement statistics and the fluctuation-relation factors.

Measuring an observable projectively at time zero (eigenprojectors Pi_n,
outcomes o_n) and again at time t (projectors Pi_m(t), outcomes o_m(t))
defines the random variable x = o_m(t) - o_n(0) with distribution

    p(n, m) = Tr{ Pi_m(t)  Phi_t[ Pi_n rho(0) Pi_n ] } .

Projectors onto *clusters* of numerically degenerate eigenvalues are used
throughout, so a zero observable at time zero cleanly degenerates to a
one-point measurement of the final observable (the heat statistics case).

From the distributions come the exponential averages and the correction
factors to the Jarzynski equality:

    <e^{-beta u}> = Lambda_u e^{-beta deltaF},   Lambda_u = Tr{rho_G(t) Phi_t[1]}
    <e^{-beta w}> = Lambda_w e^{-beta deltaF},
        Lambda_w = Tr{ e^{-beta O_w(t)} Phi_t[1] } / Z(t)
    <e^{-beta q}> = Tr{ e^{-beta P(t)} Phi_t[rho(0)] }

for a Gibbs initial state at inverse temperature beta (the heat relation
holds for any initial state diagonal in the first measurement basis). Both
Lambda factors deviate from one only through the non-unitality of the map;
their bounds and the induced bound on the mean dissipated work are computed
alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError
from .operators import (
    DensityMatrix,
    HermitianOperator,
    Superoperator,
    apply,
    eig_hermitian,
    exp_hermitian,
    gibbs_state,
    hs_adjoint,
    partition_function,
    vec,
)

CLUSTER_TOL = 1e-9
NEGATIVE_PROB_TOL = 1e-12
PROB_SUM_TOL = 1e-9


def cluster_eigenvalues(values: np.ndarray, tol_scale: float | None = None,
                        ) -> list[np.ndarray]:
    """Group ascending eigenvalues into clusters of numerically equal
    outcomes. The clustering tolerance is 1e-9 * max(1, spectral range).

    Returns a list of index arrays, one per cluster.
    """
    values = np.asarray(values, dtype=float)
    if tol_scale is None:
        tol_scale = max(1.0, float(np.ptp(values)) if values.size else 1.0)
    tol = CLUSTER_TOL * tol_scale
    clusters: list[list[int]] = [[0]]
    for i in range(1, values.size):
        if values[i] - values[clusters[-1][0]] <= tol:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return [np.array(c) for c in clusters]


def _cluster_projectors(op: HermitianOperator,
                        ) -> tuple[np.ndarray, list[np.ndarray]]:
    """Outcome values (cluster means) and projectors of an observable."""
    vals, vecs = eig_hermitian(op)
    outcomes = []
    projectors = []
    for idx in cluster_eigenvalues(vals):
        outcomes.append(float(np.mean(vals[idx])))
        cols = vecs[:, idx]
        projectors.append(cols @ cols.conj().T)
    return np.array(outcomes), projectors


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Finite outcome list with probabilities, outcomes strictly increasing.

    Probabilities in [-1e-12, 0) are clipped to zero and the distribution is
    renormalized; anything more negative is an error (it means a
    non-positive map was used where a true dynamical map is required).
    `initial_coherence` records the Frobenius norm of the initial state's
    off-diagonal part in the first measurement's eigenbasis: when it is
    nonzero the distribution's mean need not equal the two-point mean
    change, because the first measurement destroys those coherences.
    """

    outcomes: np.ndarray
    probs: np.ndarray
    initial_coherence: float = 0.0

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if outcomes.shape != probs.shape or outcomes.ndim != 1:
            raise ConstructionError("outcomes and probs must be matching 1-d arrays")
        if np.any(np.diff(outcomes) <= 0):
            raise ConstructionError("outcomes must be strictly increasing")
        worst = float(probs.min(initial=0.0))
        if worst < -NEGATIVE_PROB_TOL:
            raise ConstructionError(
                f"negative probability {worst:.3e} below -{NEGATIVE_PROB_TOL}")
        probs = np.where(probs < 0.0, 0.0, probs)
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ConstructionError(f"probabilities sum to {total}, expected 1")
        probs = probs / total
        outcomes.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", probs)

    def mean(self) -> float:
        return float(np.dot(self.probs, self.outcomes))


def tpms_distribution(rho0: DensityMatrix, map_t: Superoperator,
                      O0: HermitianOperator, Ot: HermitianOperator,
                      ) -> OutcomeDistribution:
    """Distribution of o_m(t) - o_n(0) under the two-point scheme.

    All (n, m) cluster pairs are enumerated, zero-probability outcomes
    included; outcome values agreeing within the clustering tolerance are
    merged. No diagonality of rho0 in the O0 eigenbasis is required, but the
    initial measurement dephases the state in that basis, and
    `initial_coherence` reports how much was destroyed.
    """
    o0, proj0 = _cluster_projectors(O0)
    ot, projt = _cluster_projectors(Ot)
    coher = rho0.matrix.copy()
    for p in proj0:
        pr = p @ rho0.matrix @ p
        coher = coher - pr
    coherence_norm = float(np.linalg.norm(coher))

    raw_x = []
    raw_p = []
    for n, pn in enumerate(proj0):
        branch = apply(map_t, pn @ rho0.matrix @ pn)
        for m, pm in enumerate(projt):
            prob = float(np.trace(pm @ branch).real)
            raw_x.append(ot[m] - o0[n])
            raw_p.append(prob)
    raw_x = np.array(raw_x)
    raw_p = np.array(raw_p)
    order = np.argsort(raw_x, kind="stable")
    raw_x, raw_p = raw_x[order], raw_p[order]
    scale = max(1.0, float(np.ptp(o0)) if o0.size else 1.0,
                float(np.ptp(ot)) if ot.size else 1.0)
    xs: list[float] = []
    ps: list[float] = []
    for x, p in zip(raw_x, raw_p):
        if xs and x - xs[-1] <= CLUSTER_TOL * scale:
            # weighted merge keeps the outcome value consistent
            tot = ps[-1] + p
            if tot > 0:
                xs[-1] = (xs[-1] * ps[-1] + x * p) / tot
            ps[-1] = tot
        else:
            xs.append(float(x))
            ps.append(float(p))
    return OutcomeDistribution(outcomes=np.array(xs), probs=np.array(ps),
                               initial_coherence=coherence_norm)


def exp_average(dist: OutcomeDistribution, beta: float) -> float:
    """<e^{-beta x}> over the distribution."""
    return float(np.dot(dist.probs, np.exp(-beta * dist.outcomes)))


def moment(dist: OutcomeDistribution, k: int) -> float:
    return float(np.dot(dist.probs, dist.outcomes ** k))


@dataclass(frozen=True)
class LambdaU:
    value: float
    bound: float
    cross_check_residual: float
    """Largest disagreement among the three equivalent evaluation routes."""


def lambda_u(map_t: Superoperator, K_t: HermitianOperator, beta: float) -> LambdaU:
    """Internal-energy correction factor Lambda_u = Tr{rho_G(t) Phi_t[1]}.

    Evaluated three ways (direct, through the Hilbert-Schmidt adjoint, and
    as d times the overlap with the evolved maximally mixed state) and
    cross-checked; the bound is the largest eigenvalue of Phi_t[1].
    """
    d = map_t.dim
    rho_g = gibbs_state(K_t, beta)
    ident = np.eye(d, dtype=complex)
    phi_id = apply(map_t, ident)
    direct = float(np.trace(rho_g.matrix @ phi_id).real)
    adj = float(np.trace(apply(hs_adjoint(map_t), rho_g.matrix)).real)
    mixed = d * float(np.trace(rho_g.matrix @ apply(map_t, ident / d)).real)
    bound = float(np.linalg.eigvalsh(0.5 * (phi_id + phi_id.conj().T))[-1])
    residual = max(abs(direct - adj), abs(direct - mixed), abs(adj - mixed))
    return LambdaU(value=direct, bound=bound, cross_check_residual=residual)


def lambda_w(map_t: Superoperator, Ow_t: HermitianOperator,
             K_t: HermitianOperator, P_t: HermitianOperator, beta: float,
             ) -> tuple[float, float]:
    """Work correction factor and its bound.

    lambda = Tr{ e^{-beta O_w(t)} Phi_t[1] } / Z(t) with Z(t) = Tr{e^{-beta K(t)}};
    bound = e^{beta lambda_max{P(t)}} * lambda_max{Phi_t[1]}.
    """
    d = map_t.dim
    phi_id = apply(map_t, np.eye(d, dtype=complex))
    zt = partition_function(K_t, beta)
    lam = float(np.trace(exp_hermitian(Ow_t, -beta).matrix @ phi_id).real) / zt
    p_max = float(eig_hermitian(P_t)[0][-1])
    phi_max = float(np.linalg.eigvalsh(0.5 * (phi_id + phi_id.conj().T))[-1])
    return lam, float(np.exp(beta * p_max) * phi_max)


def heat_fluctuation(rho0: DensityMatrix, map_t: Superoperator,
                     P_t: HermitianOperator, beta: float) -> tuple[float, float]:
    """<e^{-beta q}> = Tr{ e^{-beta P(t)} Phi_t[rho0] } and its bound
    e^{-beta lambda_min{P(t)}}."""
    value = float(np.trace(exp_hermitian(P_t, -beta).matrix
                           @ apply(map_t, rho0.matrix)).real)
    p_min = float(eig_hermitian(P_t)[0][0])
    return value, float(np.exp(-beta * p_min))


def free_energies(K_t: HermitianOperator, K_0: HermitianOperator,
                  beta: float) -> tuple[float, float, float]:
    """(Z0, Zt, deltaF) for the instantaneous Gibbs references."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    z0 = partition_function(K_0, beta)
    zt = partition_function(K_t, beta)
    return z0, zt, float(-np.log(zt / z0) / beta)


def noneq_free_energy(rho: DensityMatrix, K: HermitianOperator,
                      beta: float) -> float:
    """U - S/beta with the von Neumann entropy (0 ln 0 = 0)."""
    vals, _ = eig_hermitian(HermitianOperator(rho.matrix))
    vals = np.clip(vals, 0.0, None)
    mask = vals > 0
    entropy = float(-np.sum(vals[mask] * np.log(vals[mask])))
    return K.expectation(rho) - entropy / beta


def dissipated_work_bound(map_t: Superoperator, P_t: HermitianOperator,
                          beta: float) -> float:
    """Lower bound on <w> - deltaF:
    -lambda_max{P(t)} - (1/beta) ln lambda_max{Phi_t[1]}."""
    d = map_t.dim
    phi_id = apply(map_t, np.eye(d, dtype=complex))
    p_max = float(eig_hermitian(P_t)[0][-1])
    phi_max = float(np.linalg.eigvalsh(0.5 * (phi_id + phi_id.conj().T))[-1])
    return float(-p_max - np.log(phi_max) / beta)


@dataclass(frozen=True)
class FluctuationReport:
    """Everything the fluctuation relations say at one (t, beta) cell."""

    time: float
    beta: float
    lambda_u: float
    lambda_w: float
    lambda_w_bound: float
    exp_avg_w: float
    exp_avg_q: float
    delta_F_bar: float
    mean_w: float
    dissipated_bound: float

    def check_invariants(self, tol: float = 1e-9) -> None:
        expect = self.lambda_w * np.exp(-self.beta * self.delta_F_bar)
        if abs(self.exp_avg_w - expect) > tol * max(1.0, abs(expect)):
            raise ConstructionError(
                f"exp average {self.exp_avg_w} != lambda * e^(-beta deltaF) {expect}")
        if self.lambda_w > self.lambda_w_bound + tol:
            raise ConstructionError("lambda_w exceeds its bound")

    CSV_HEADER = ("t,beta,lambda_u,lambda_w,lambda_w_bound,exp_avg_w,"
                  "exp_avg_q,delta_F_bar,mean_w,dissipated_bound")

    def csv_row(self) -> str:
        cells = (self.time, self.beta, self.lambda_u, self.lambda_w,
                 self.lambda_w_bound, self.exp_avg_w, self.exp_avg_q,
                 self.delta_F_bar, self.mean_w, self.dissipated_bound)
        return ",".join(f"{v:.17g}" for v in cells)


def fluctuation_report(pipeline, i_t: int, beta: float) -> FluctuationReport:
    """Assemble the full report row at grid index i_t from a ThermoPipeline.

    The initial state is the Gibbs state of the initial effective
    Hamiltonian at this beta; exponential averages use the trace formulas
    (the distribution route agrees with them to rounding, which the
    validation suite checks directly).
    """
    traj = pipeline.traj
    K_series = pipeline.effective_hamiltonian_series()
    K_0, K_t = K_series[0], K_series[i_t]
    P_t = pipeline.path_operator(i_t)
    Ow_t = HermitianOperator(K_t.matrix - P_t.matrix)
    map_t = traj.maps[i_t]
    lu = lambda_u(map_t, K_t, beta)
    lw, lw_bound = lambda_w(map_t, Ow_t, K_t, P_t, beta)
    _, _, dfb = free_energies(K_t, K_0, beta)
    rho0 = gibbs_state(K_0, beta)
    q_val, _ = heat_fluctuation(rho0, map_t, P_t, beta)
    rho_t = apply(map_t, rho0.matrix)
    mean_w = float((np.trace(Ow_t.matrix @ rho_t)
                    - np.trace(K_0.matrix @ rho0.matrix)).real)
    return FluctuationReport(
        time=float(traj.times[i_t]), beta=beta,
        lambda_u=lu.value, lambda_w=lw, lambda_w_bound=lw_bound,
        exp_avg_w=float(lw * np.exp(-beta * dfb)), exp_avg_q=q_val,
        delta_F_bar=dfb, mean_w=mean_w,
        dissipated_bound=dissipated_work_bound(map_t, P_t, beta))
