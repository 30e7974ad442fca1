"""Newton-Raphson power flow producing exact operating points."""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, SingularityError
from .grid import BusKind, bus_admittance_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StateVector:
    """Rectangular bus voltages, ordered like ``network.buses``."""
    v_re: np.ndarray
    v_im: np.ndarray

    def __post_init__(self):
        v_re = np.asarray(self.v_re, dtype=float)
        v_im = np.asarray(self.v_im, dtype=float)
        if v_re.shape != v_im.shape or v_re.ndim != 1:
            raise ValueError("v_re and v_im must be 1-d and equally long")
        if not (np.all(np.isfinite(v_re)) and np.all(np.isfinite(v_im))):
            raise ValueError("state contains non-finite entries")
        object.__setattr__(self, "v_re", v_re)
        object.__setattr__(self, "v_im", v_im)

    @classmethod
    def from_complex(cls, v):
        v = np.asarray(v, dtype=complex)
        return cls(v.real.copy(), v.imag.copy())

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n].copy(), x[n:].copy())

    @property
    def complex(self):
        return self.v_re + 1j * self.v_im

    def as_vector(self):
        """[Re V_1..Re V_n, Im V_1..Im V_n]."""
        return np.concatenate([self.v_re, self.v_im])

    def __len__(self):
        return self.v_re.size


@dataclass(frozen=True)
class LoadProfile:
    scale_p: np.ndarray
    scale_q: np.ndarray

    @classmethod
    def nominal(cls, network):
        return cls(np.ones(network.n_bus), np.ones(network.n_bus))


def sample_load_profile(network, bounds=(0.9, 1.1), rng=None):
    """Independent uniform P and Q multipliers per bus."""
    lo, hi = bounds
    if not (0 < lo <= hi):
        raise ValueError(f"load bounds must satisfy 0 < lo <= hi, got {bounds}")
    rng = np.random.default_rng(rng)
    n = network.n_bus
    return LoadProfile(rng.uniform(lo, hi, n), rng.uniform(lo, hi, n))


def _injections(Y, V):
    return V * np.conj(Y @ V)


def _dS_dV(Y, V):
    Ibus = Y @ V
    Vnorm = V / np.abs(V)
    dS_dVm = np.diag(V) @ np.conj(Y @ np.diag(Vnorm)) + np.diag(np.conj(Ibus) * Vnorm)
    dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(Ibus) - Y @ np.diag(V))
    return dS_dVa, dS_dVm


def newton_raphson(network, profile=None, tol=1e-8, max_iter=20):
    """Polar NR from a flat start.

    Returns ``(state, iterations, max_mismatch)``. PV buses hold |V| at the
    setpoint with no reactive limits.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if profile is None:
        profile = LoadProfile.nominal(network)
    Y = bus_admittance_matrix(network)
    kinds = [b.kind for b in network.buses]
    pv = [i for i, k in enumerate(kinds) if k is BusKind.PV]
    pq = [i for i, k in enumerate(kinds) if k is BusKind.PQ]
    pvpq = pv + pq
    load_p = np.array([b.load_p for b in network.buses]) * profile.scale_p
    load_q = np.array([b.load_q for b in network.buses]) * profile.scale_q
    gen_p = np.array([b.gen_p for b in network.buses])
    s_spec = (gen_p - load_p) - 1j * load_q

    vm = np.array([b.gen_v if k is not BusKind.PQ else 1.0 for b, k in zip(network.buses, kinds)])
    va = np.zeros(network.n_bus)
    V = vm * np.exp(1j * va)

    def mismatch(V):
        ds = _injections(Y, V) - s_spec
        return np.concatenate([ds[pvpq].real, ds[pq].imag])

    F = mismatch(V)
    norm = np.max(np.abs(F)) if F.size else 0.0
    it = 0
    while norm >= tol:
        if it >= max_iter:
            raise DivergenceError("power flow did not converge", norm, it)
        dS_dVa, dS_dVm = _dS_dV(Y, V)
        J = np.block([[dS_dVa[np.ix_(pvpq, pvpq)].real, dS_dVm[np.ix_(pvpq, pq)].real],
                      [dS_dVa[np.ix_(pq, pvpq)].imag, dS_dVm[np.ix_(pq, pq)].imag]])
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise SingularityError("power flow Jacobian is singular") from None
        va[pvpq] += dx[:len(pvpq)]
        vm[pq] += dx[len(pvpq):]
        V = vm * np.exp(1j * va)
        it += 1
        F = mismatch(V)
        norm = np.max(np.abs(F))
        if not np.isfinite(norm):
            raise DivergenceError("power flow diverged", norm, it)
    log.debug("power flow converged in %d iterations, mismatch %.2e", it, norm)
    return StateVector.from_complex(V), it, norm


def solve_power_flow(network, profile=None, tol=1e-8, max_iter=20):
    return newton_raphson(network, profile, tol, max_iter)[0]


def bus_injections(network, state):
    """Complex power injected at every bus (generation minus load)."""
    return _injections(bus_admittance_matrix(network), state.complex)


def branch_terminal_currents(network, state):
    """(I_ij, I_ji) for every branch, from the unified branch model."""
    if len(state) != network.n_bus:
        raise ValueError("state length does not match the network")
    V = state.complex
    i_from = np.empty(network.n_branch, dtype=complex)
    i_to = np.empty(network.n_branch, dtype=complex)
    for k, br in enumerate(network.branches):
        y = br.y
        ys = 1j * br.b_sh
        alpha = np.exp(-1j * br.phi) / br.tau
        vi, vj = V[br.from_bus], V[br.to_bus]
        i_from[k] = (y + ys) / br.tau ** 2 * vi - np.conj(alpha) * y * vj
        i_to[k] = -alpha * y * vi + (y + ys) * vj
    return i_from, i_to
