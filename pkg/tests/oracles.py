"""Independent reference values.

The hitting probabilities come from a Crank-Nicolson solve of the heat
equation ``u_t = u_xx / 2`` on (0, 1) with boundary data 1 at the target
endpoint and 0 at the other, on a 10^4-cell grid (a few implicit Euler
steps first to damp the corner discontinuity).  They were computed once,
before the series code existed, with 5000 and 20000 time steps; the two
runs agree to about 1e-8 and the frozen numbers keep 7 decimals.
"""
import numpy as np
from scipy.linalg import solve_banded

# P_x(tau_0 <= t)
HIT0_X05_T025 = 0.3146113
HIT0_X01_T01 = 0.7518296
HIT0_X05_T01 = 0.1138442
# P_x(tau_1 <= t)
HIT1_X01_T01 = 0.0039223
# entrance intensity at x=0.1, t=0.1 with lambda0 = lambda1 = 1
ENTRANCE_X01_T01_UNIT = HIT0_X01_T01 + HIT1_X01_T01
ORACLE_TOL = 1e-6


def cn_hitting(x_eval, t_end, nx=10_000, nt=20_000, left=1.0, right=0.0):
    """``P_x(exit at the endpoint carrying value 1 by time t_end)`` by finite differences."""
    x = np.linspace(0, 1, nx + 1)
    h = x[1] - x[0]
    dt = t_end / nt
    n = nx - 1
    u = np.zeros(n)
    r = 0.5 * dt / h ** 2
    for k in range(nt):
        theta = 1.0 if k < 8 else 0.5
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * r
        ab[1, :] = 1 + 2 * theta * r
        ab[2, :-1] = -theta * r
        lap = np.empty(n)
        lap[1:-1] = u[:-2] - 2 * u[1:-1] + u[2:]
        lap[0] = left - 2 * u[0] + u[1]
        lap[-1] = u[-2] - 2 * u[-1] + right
        rhs = u + (1 - theta) * r * lap
        rhs[0] += theta * r * left
        rhs[-1] += theta * r * right
        u = solve_banded((1, 1), ab, rhs)
    return np.interp(x_eval, x, np.concatenate([[left], u, [right]]))


def dual_exit_oracle(lambda0, lambda1, x):
    """Exit-at-1 probability of the drifted diffusion from its scale function.

    The scale density is ``exp(-int 2 b) = bar_lambda^{-2}``; both integrals
    are done by quadrature.
    """
    from scipy.integrate import quad
    lam = lambda u: lambda0 * (1 - u) + lambda1 * u  # noqa: E731
    num = quad(lambda u: lam(u) ** -2, 0, x)[0]
    den = quad(lambda u: lam(u) ** -2, 0, 1)[0]
    return num / den
