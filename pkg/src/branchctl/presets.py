"""Built-in models.  All are mean-field (label-free) and vectorised.

``lq`` and ``kinetic`` models are built from their solver specs in
:mod:`branchctl.riccati` and :mod:`branchctl.kinetic`; :func:`get_preset`
covers those through the default specs.
"""

from __future__ import annotations

import numpy as np

from .coefficients import (
    CostSpec,
    MeanFieldCoefficients,
    MeanFieldCost,
    ModelBounds,
    mf_lift,
    mf_lift_cost,
)


def _zeros_drift(dim):
    return lambda x, mu, a: np.zeros((x.shape[0], dim))


def _zeros_sigma(dim, nd):
    return lambda x, mu, a: np.zeros((x.shape[0], dim, nd))


def _const_rate(g):
    return lambda x, mu, a: np.full(x.shape[0], float(g))


def _const_law(p):
    p = np.asarray(p, dtype=float)
    return lambda x, mu, a: np.broadcast_to(p, (x.shape[0], p.size)).copy()


def kinetic_cost_mf(terminal_mass_weight: float = 1.0) -> MeanFieldCost:
    """psi = |a|^2/2 and Psi = weight * mass."""
    w = float(terminal_mass_weight)
    return MeanFieldCost(
        running=lambda x, mu, a: 0.5 * np.sum(a * a, axis=1),
        terminal=lambda mu: w * mu.group_mass().astype(float),
        C_Psi=max(1.0, abs(w)),
        c_psi=0.5,
        name="energy+mass",
    )


def yule(gamma: float = 0.5):
    """Binary branching at constant rate, no motion."""
    mf = MeanFieldCoefficients(
        drift=_zeros_drift(1),
        diffusion=_zeros_sigma(1, 1),
        rate=_const_rate(gamma),
        offspring=_const_law([0.0, 0.0, 1.0]),
        bounds=ModelBounds(L=0.0, C_b=0.0, C_sigma=0.0, C_gamma=gamma, C1_phi=2.0, C2_phi=2.0),
        motionless=True,
        name="yule",
    )
    return mf_lift(mf), mf_lift_cost(kinetic_cost_mf())


def pure_death(gamma: float = 1.0):
    mf = MeanFieldCoefficients(
        drift=_zeros_drift(1),
        diffusion=_zeros_sigma(1, 1),
        rate=_const_rate(gamma),
        offspring=_const_law([1.0, 0.0, 0.0]),
        bounds=ModelBounds(L=0.0, C_b=0.0, C_sigma=0.0, C_gamma=gamma, C1_phi=0.0, C2_phi=0.0),
        motionless=True,
        name="pure-death",
    )
    return mf_lift(mf), mf_lift_cost(kinetic_cost_mf())


def logistic_mf(gamma0: float = 1.0, capacity: float = 4.0, theta: float = 1.0, sigma: float = 1.0):
    """Binary branching at rate gamma0/(1 + mass/capacity) with mean reversion to the group mean.

    drift = -theta (x - mean) + a, diffusion = sigma.
    """

    def rate(x, mu, a):
        return gamma0 / (1.0 + mu.mass() / capacity)

    def drift(x, mu, a):
        return -theta * (x - mu.mean_position()) + a

    def diffusion(x, mu, a):
        return np.full((x.shape[0], 1, 1), float(sigma))

    mf = MeanFieldCoefficients(
        drift=drift,
        diffusion=diffusion,
        rate=rate,
        offspring=_const_law([0.0, 0.0, 1.0]),
        # |b| <= theta(|x| + |mean|) + |a|, mean bounded by the sup of |x_j| only, so C_b is
        # declared against the probe scale used by validate_assumptions
        bounds=ModelBounds(L=2.0 * theta + 1.0, C_b=1.0 + 2.0 * theta * 4.0, C_sigma=sigma,
                           C_gamma=gamma0, C1_phi=2.0, C2_phi=2.0),
        name="logistic-mf",
    )
    return mf_lift(mf), mf_lift_cost(kinetic_cost_mf())


PRESETS = ("yule", "pure-death", "logistic-mf", "lq", "kinetic")


def get_preset(name: str, **params):
    """Return ``(model, cost)`` for a preset name."""
    if name == "yule":
        return yule(**params)
    if name == "pure-death":
        return pure_death(**params)
    if name == "logistic-mf":
        return logistic_mf(**params)
    if name == "lq":
        from .riccati import LQSpec, lq_cost, lq_model

        spec = LQSpec.scalar_canonical(**params)
        return lq_model(spec), lq_cost(spec)
    if name == "kinetic":
        from .kinetic import KineticSpec, kinetic_cost, kinetic_model

        spec = KineticSpec.quadratic(**params)
        return kinetic_model(spec), kinetic_cost(spec)
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
