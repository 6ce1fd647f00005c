"""Sun direction, single-node thermal balance and battery energy rate.

Temperatures passed to :func:`heat_total` are absolute (K). The simulation state keeps
the node temperature in degrees C and converts at the call site.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from . import _layout as L

__all__ = [
    "KELVIN",
    "EARTH_DIR",
    "sun_vector",
    "incidence_angle",
    "heat_terms",
    "heat_total",
    "temperature_deriv",
    "energy_deriv",
    "equilibrium_temperature",
    "break_even_angle",
]

KELVIN = 273.15
# Earth direction in the Hill frame (chief at origin, Earth below along -x)
EARTH_DIR = np.array([-1.0, 0.0, 0.0])


@njit(cache=True)
def _sun(theta):
    return np.array([math.cos(theta), math.sin(theta), 0.0])


@njit(cache=True)
def _heat(TK, cos_sun, cos_earth, P):
    """Net heat into the node [W] from the two incidence cosines."""
    aAS = P[L.P_TH_ALPHA] * P[L.P_TH_A] * P[L.P_TH_S]
    seA = P[L.P_TH_SIGMA] * P[L.P_TH_EPS] * P[L.P_TH_A]
    q_sun = aAS * max(cos_sun, 0.0)
    view = P[L.P_TH_VF] * max(cos_earth, 0.0)
    q_alb = aAS * P[L.P_TH_AF] * view
    q_ir = seA * P[L.P_TH_TE] ** 4 * view
    q_rej = seA * TK**4
    return q_sun + q_alb + q_ir - q_rej


@njit(cache=True)
def _heat_rate_coeffs(TK, P):
    """Partial derivatives of net heat: (dQ/dcos_sun if lit, dQ/dcos_earth if facing, dQ/dT)."""
    aAS = P[L.P_TH_ALPHA] * P[L.P_TH_A] * P[L.P_TH_S]
    seA = P[L.P_TH_SIGMA] * P[L.P_TH_EPS] * P[L.P_TH_A]
    k_sun = aAS
    k_earth = P[L.P_TH_VF] * (aAS * P[L.P_TH_AF] + seA * P[L.P_TH_TE] ** 4)
    k_T = -4.0 * seA * TK**3
    return k_sun, k_earth, k_T


@njit(cache=True)
def _edot(cos_panel, P):
    """Battery energy rate [kJ/s]."""
    p_in = P[L.P_PW_PI] * P[L.P_PW_ID] * P[L.P_PW_A] * max(cos_panel, 0.0)
    return (p_in - P[L.P_PW_POUT]) / 1000.0


def _P(model):
    return L.resolve(model).P


def sun_vector(theta_S: float) -> np.ndarray:
    """Unit vector toward the Sun in the Hill frame."""
    return np.array([math.cos(theta_S), math.sin(theta_S), 0.0])


def incidence_angle(n_hat, r_hat) -> float:
    """Angle between two unit vectors, in [0, pi]."""
    c = float(np.dot(n_hat, r_hat))
    return math.acos(min(1.0, max(-1.0, c)))


def heat_terms(T_K: float, n_hat_hill, r_sun, model=None) -> dict:
    """The four flux terms [W]: solar, albedo, infrared and rejected (all non-negative)."""
    P = _P(model)
    n_hat_hill = np.asarray(n_hat_hill, dtype=float)
    cs = float(np.dot(n_hat_hill, r_sun))
    ce = float(np.dot(n_hat_hill, EARTH_DIR))
    aAS = P[L.P_TH_ALPHA] * P[L.P_TH_A] * P[L.P_TH_S]
    seA = P[L.P_TH_SIGMA] * P[L.P_TH_EPS] * P[L.P_TH_A]
    view = P[L.P_TH_VF] * max(ce, 0.0)
    return {
        "solar": aAS * max(cs, 0.0),
        "albedo": aAS * P[L.P_TH_AF] * view,
        "ir": seA * P[L.P_TH_TE] ** 4 * view,
        "rejected": seA * T_K**4,
    }


def heat_total(T_K: float, n_hat_hill, r_sun, model=None) -> float:
    """Net heat flow into the node [W] at absolute temperature ``T_K``."""
    n_hat_hill = np.asarray(n_hat_hill, dtype=float)
    cs = float(np.dot(n_hat_hill, r_sun))
    ce = float(np.dot(n_hat_hill, EARTH_DIR))
    return float(_heat(float(T_K), cs, ce, _P(model)))


def temperature_deriv(T_K: float, n_hat_hill, r_sun, model=None) -> float:
    """Node temperature rate [K/s]."""
    P = _P(model)
    return heat_total(T_K, n_hat_hill, r_sun, model) / (P[L.P_TH_MN] * P[L.P_TH_CP])


def energy_deriv(theta_SI: float, model=None) -> float:
    """Battery energy rate [kJ/s] for a panel at incidence ``theta_SI`` [rad]."""
    return float(_edot(math.cos(theta_SI), _P(model)))


def equilibrium_temperature(model=None) -> float:
    """Temperature [K] where full normal sunlight balances rejection (no Earth terms)."""
    P = _P(model)
    return (P[L.P_TH_ALPHA] * P[L.P_TH_S] / (P[L.P_TH_SIGMA] * P[L.P_TH_EPS])) ** 0.25


def break_even_angle(model=None) -> float:
    """Panel incidence angle [rad] at which generated power equals the bus load."""
    P = _P(model)
    return math.acos(P[L.P_PW_POUT] / (P[L.P_PW_PI] * P[L.P_PW_ID] * P[L.P_PW_A]))
