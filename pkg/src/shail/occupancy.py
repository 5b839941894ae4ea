"""Exact discounted occupancy measures for tabular MDPs, flat and with
options, via linear solves. Used to verify the hierarchical decomposition
of the state-action occupancy against independent constructions."""

from dataclasses import dataclass, field

import numpy as np


class SingularSystem(RuntimeError):
    pass


class NoInitiableOption(ValueError):
    pass


@dataclass
class TabularOption:
    initiation: np.ndarray  # (S,) bool
    pi_low: np.ndarray      # (S, A) row-stochastic
    beta: np.ndarray        # (S,) termination prob evaluated at the arrival state


@dataclass
class TabularOptionsMdp:
    transition: np.ndarray  # (S, A, S)
    b0: np.ndarray          # (S,)
    gamma: float
    options: list = field(default_factory=list)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    def validate(self, atol=1e-12):
        assert np.allclose(self.transition.sum(axis=2), 1.0, atol=atol)
        assert abs(self.b0.sum() - 1.0) <= atol
        assert 0.0 < self.gamma < 1.0
        for o in self.options:
            assert np.allclose(o.pi_low.sum(axis=1), 1.0, atol=atol)
            assert np.all((o.beta >= 0.0) & (o.beta <= 1.0))


def _solve(A, b):
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(str(e))
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    return x


def flat_occupancy(transition, b0, gamma, policy):
    """rho(s,a) = pi(a|s) * sum_t gamma^t P(s_t = s)."""
    S = transition.shape[0]
    P = np.einsum("sa,sat->st", policy, transition)
    rho_s = _solve(np.eye(S) - gamma * P.T, b0)
    return policy * rho_s[:, None]


def restrict_high_policy(mdp, pi_high):
    """Zero out non-initiable options and renormalize per state."""
    init = np.stack([o.initiation for o in mdp.options], axis=1)
    if np.any(~init.any(axis=1)):
        raise NoInitiableOption("a state has no initiable option")
    w = np.asarray(pi_high, dtype=float) * init
    tot = w.sum(axis=1, keepdims=True)
    if np.any(tot <= 0.0):
        raise NoInitiableOption("high-level policy has no mass on initiable options")
    return w / tot


def hierarchical_occupancy(mdp, pi_high):
    """rho(s,a) = sum_{h,o} rho_high(h,o) * rho_low(s,a | h,o).

    rho_high is the discounted occupancy over decision points (h, o) of the
    semi-Markov chain; rho_low is the within-option discounted occupancy
    with termination acting as beta-weighted absorption.
    """
    mdp.validate()
    pi_high = restrict_high_policy(mdp, pi_high)
    S = mdp.n_states
    I = np.eye(S)
    gamma = mdp.gamma

    M = []  # decision-to-decision discounted transfer, per option
    U = []  # within-option discounted state occupancy, per option
    for o in mdp.options:
        Q = np.einsum("sa,sat->st", o.pi_low, mdp.transition)
        cont = gamma * Q * (1.0 - o.beta)[None, :]
        inv = _solve(I - cont, I)
        M.append(inv @ (gamma * Q * o.beta[None, :]))
        U.append(inv)

    A = sum(pi_high[:, k][:, None] * M[k] for k in range(len(M)))
    d = _solve(I - A.T, mdp.b0)  # decision-point state occupancy

    rho = np.zeros((S, mdp.n_actions))
    for k, o in enumerate(mdp.options):
        weights = (d * pi_high[:, k]) @ U[k]  # (S,) occupancy under option k
        rho += weights[:, None] * o.pi_low
    return rho


def random_options_mdp(rng, n_states=6, n_actions=2, n_options=3, gamma=0.9,
                       all_initiable=True):
    """Random dense instance for property tests."""
    T = rng.random((n_states, n_actions, n_states)) + 0.1
    T /= T.sum(axis=2, keepdims=True)
    b0 = rng.random(n_states) + 0.1
    b0 /= b0.sum()
    options = []
    for _ in range(n_options):
        pi_low = rng.random((n_states, n_actions)) + 0.1
        pi_low /= pi_low.sum(axis=1, keepdims=True)
        beta = rng.random(n_states)
        init = np.ones(n_states, dtype=bool) if all_initiable else \
            rng.random(n_states) < 0.8
        options.append(TabularOption(initiation=init, pi_low=pi_low, beta=beta))
    if not all_initiable:
        stacked = np.stack([o.initiation for o in options], axis=1)
        for s in np.nonzero(~stacked.any(axis=1))[0]:
            options[0].initiation[s] = True
    return TabularOptionsMdp(transition=T, b0=b0, gamma=gamma, options=options)
