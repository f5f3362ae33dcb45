"""Fixed-step explicit integrators."""

import numpy as np

METHODS = ("rk4", "euler")


def rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = f(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_step(f, t, y, dt):
    return y + dt * f(t, y)


def get_stepper(method):
    if method == "rk4":
        return rk4_step
    if method == "euler":
        return euler_step
    raise ValueError(f"unknown integration method {method!r}; choose from {METHODS}")


def n_steps_for(dt, t_final):
    """Number of steps of size ``dt`` that land on ``t_final`` (rounded)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < dt:
        raise ValueError("t_final must be at least dt")
    return int(round(t_final / dt))


def integrate_fixed(f, y0, dt, t_final, method="rk4", record_every=1):
    """Integrate ``dy/dt = f(t, y)`` and return ``(times, states)`` samples.

    Time is computed as ``k * dt`` rather than accumulated, so runs are
    reproducible bit for bit.
    """
    step = get_stepper(method)
    n = n_steps_for(dt, t_final)
    y = np.array(y0, dtype=float)
    times, states = [0.0], [y.copy()]
    for k in range(n):
        y = step(f, k * dt, y, dt)
        if (k + 1) % record_every == 0 or k + 1 == n:
            times.append((k + 1) * dt)
            states.append(y.copy())
    return np.array(times), np.array(states)
