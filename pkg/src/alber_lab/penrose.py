"""Linear stability of homogeneous backgrounds: Volterra kernels, the
dispersion function on the Laplace side, margin scans, and the constants
entering the polynomial-propagator and stable-window estimates.

For a background symbol Gh and mode k != 0 the density perturbation obeys
the scalar Volterra equation

    rho_hat(k, t) = rho_hat_free(k, t)
                    + (i*q/2pi) * int_0^t Phi_k(t - s) rho_hat(k, s) ds,

with kernel Phi_k(tau) = sum_j (Gh(j+k) - Gh(j)) exp(i*p*k*(2j+k)*tau).
Its Laplace transform is a finite pole sum, and the dispersion function
F_k(lambda) = 1 - (i*q/2pi) * Phitilde_k(lambda) controls stability:
zeros of F_k with Re(lambda) > 0 are exponential growth rates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .spectral import TWO_PI
from .states import BackgroundSymbol, OperatorMatrix

ZERO_RESIDUAL = 1e-8
BOUNDARY_RE = 1e-9


class UnstableBackgroundError(ValueError):
    """Constants that require a positive Penrose margin were requested without one."""


def _kernel_terms(bg: BackgroundSymbol, p: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero coefficients c_j = Gh(j+k) - Gh(j) and frequencies p*k*(2j+k)."""
    if k == 0:
        raise ValueError("the k = 0 mode is conserved; kernels are defined for k != 0")
    j = np.arange(-bg.J - abs(k), bg.J + abs(k) + 1)
    c = bg.gamma_hat(j + k) - bg.gamma_hat(j)
    keep = c != 0.0
    omega = p * k * (2 * j + k)
    return c[keep], omega[keep].astype(float)


def volterra_kernel(bg: BackgroundSymbol, p: float, k: int, tau) -> np.ndarray:
    """Phi_k(tau); tau may be a scalar or an array."""
    c, omega = _kernel_terms(bg, p, k)
    tau = np.asarray(tau, dtype=float)
    out = np.sum(c * np.exp(1j * np.multiply.outer(tau, omega)), axis=-1)
    return out if out.shape else complex(out)


def laplace_symbol(bg: BackgroundSymbol, p: float, k: int, lam) -> np.ndarray:
    """Phitilde_k(lambda) = sum_j c_j / (lambda - i*omega_j), Re(lambda) > 0."""
    lam = np.asarray(lam, dtype=complex)
    if np.any(lam.real <= 0.0):
        raise ValueError("the Laplace symbol is defined on the open half-plane Re(lambda) > 0")
    c, omega = _kernel_terms(bg, p, k)
    out = np.sum(c / (lam[..., None] - 1j * omega), axis=-1)
    return out if out.shape else complex(out)


def _symbol_unchecked(c: np.ndarray, omega: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return np.sum(c / (np.asarray(lam, dtype=complex)[..., None] - 1j * omega), axis=-1)


def dispersion(bg: BackgroundSymbol, p: float, q: float, k: int, lam) -> np.ndarray:
    """F_k(lambda) = 1 - (i*q/2pi) * Phitilde_k(lambda)."""
    out = 1.0 - (1j * q / TWO_PI) * laplace_symbol(bg, p, k, lam)
    return out if np.asarray(out).shape else complex(out)


@dataclass(frozen=True)
class PenroseScan:
    """Scan controls for the margin search over lambda = eta + i*s.

    The infimum over the open half-plane is estimated on the region
    eta in [min(eta_grid), max(eta_grid)]; no extrapolation toward the
    eta -> 0+ boundary is attempted.  The s range covers every kernel
    resonance padded by s_padding, densified to >= s_density points per
    unit within two units of each resonance.
    """

    eta_grid: np.ndarray = field(default_factory=lambda: np.geomspace(1e-3, 10.0, 40))
    s_padding: float = 10.0
    s_density: float = 50.0
    refine_iters: int = 60


@dataclass
class PenroseReport:
    k: int
    margin: float
    argmin_lambda: complex
    zeros: list
    eta_line_margins: list

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "margin": self.margin,
            "argmin_lambda": [self.argmin_lambda.real, self.argmin_lambda.imag],
            "zeros": [[z.real, z.imag] for z in self.zeros],
            "eta_line_margins": [[e, m] for e, m in self.eta_line_margins],
        }


def _s_grid(omega: np.ndarray, scan: PenroseScan) -> np.ndarray:
    span = (float(np.abs(omega).max()) if omega.size else 0.0) + scan.s_padding
    coarse = np.linspace(-span, span, max(int(math.ceil(8 * span)), 81))
    fine = [coarse]
    step = 1.0 / scan.s_density
    for w in np.unique(omega):
        fine.append(np.arange(w - 2.0, w + 2.0 + step, step))
    return np.unique(np.concatenate(fine))


def penrose_margin(
    bg: BackgroundSymbol, p: float, q: float, k: int, scan: PenroseScan | None = None
) -> PenroseReport:
    """Estimate inf |F_k| over the scanned region of the right half-plane.

    Grid scan, then Nelder-Mead descent from the grid minimizer (eta
    clamped to the scanned interval), then Newton hunts for genuine zeros
    starting from every grid-local minimum with |F_k| < 0.1.  Zeros are
    only reported with Re(lambda) > 1e-9: rational-continuation zeros
    sitting on the imaginary axis are marginal modes, not growth.
    """
    scan = scan or PenroseScan()
    c, omega = _kernel_terms(bg, p, k)
    eta = np.asarray(scan.eta_grid, dtype=float)
    if c.size == 0:
        return PenroseReport(k, 1.0, complex(eta.min()), [], [(float(e), 1.0) for e in eta[:3]])

    def f_value(lam):
        return 1.0 - (1j * q / TWO_PI) * _symbol_unchecked(c, omega, lam)

    def f_deriv(lam):
        return (1j * q / TWO_PI) * np.sum(c / (np.asarray(lam, complex)[..., None] - 1j * omega) ** 2, axis=-1)

    s = _s_grid(omega, scan)
    lam = eta[:, None] + 1j * s[None, :]
    absf = np.abs(f_value(lam))
    i0, j0 = np.unravel_index(int(np.argmin(absf)), absf.shape)
    margin = float(absf[i0, j0])
    argmin = complex(lam[i0, j0])

    order = np.argsort(eta)
    eta_lines = [(float(eta[i]), float(absf[i].min())) for i in order[:3]]

    # local descent from the grid minimizer, eta clamped to the scan region
    lo, hi = float(eta.min()), float(eta.max())

    def objective(x):
        return abs(f_value(complex(np.clip(x[0], lo, hi), x[1])))

    res = minimize(
        objective,
        np.array([argmin.real, argmin.imag]),
        method="Nelder-Mead",
        options={"maxiter": 40 * scan.refine_iters, "xatol": 1e-12, "fatol": 1e-14},
    )
    if res.fun < margin:
        margin = float(res.fun)
        argmin = complex(np.clip(res.x[0], lo, hi), res.x[1])

    # Newton zero hunt from grid-local minima below 0.1
    candidates = [argmin]
    interior = absf[1:-1, 1:-1]
    local = (
        (interior < 0.1)
        & (interior <= absf[:-2, 1:-1]) & (interior <= absf[2:, 1:-1])
        & (interior <= absf[1:-1, :-2]) & (interior <= absf[1:-1, 2:])
    )
    for ii, jj in zip(*np.nonzero(local)):
        candidates.append(complex(lam[ii + 1, jj + 1]))
    zeros: list[complex] = []
    for z in candidates:
        for _ in range(scan.refine_iters):
            fz = f_value(z)
            if abs(fz) <= 1e-15:
                break
            dfz = f_deriv(z)
            if dfz == 0.0 or not np.isfinite(dfz):
                break
            step = fz / dfz
            z = z - step
            if abs(step) < 1e-14 * (1.0 + abs(z)):
                break
        if abs(f_value(z)) <= ZERO_RESIDUAL and z.real > BOUNDARY_RE:
            if all(abs(z - w) > 1e-6 for w in zeros):
                zeros.append(complex(z))
    for z in zeros:
        r = abs(f_value(z))
        if r < margin:
            margin, argmin = float(r), complex(z)
    zeros.sort(key=lambda w: (-w.real, abs(w.imag)))
    return PenroseReport(k, margin, argmin, zeros, eta_lines)


# ---- time-side oracle ----


def free_density(u0: OperatorMatrix, p: float, k: int, t) -> np.ndarray:
    """rho_hat_free(k, t) = sum_j exp(i*p*k*(2j+k)*t) * U0_{j+k, j}."""
    if k == 0:
        raise ValueError("k = 0 carries no free oscillation; use the trace")
    nm = u0.grid.n_modes
    if abs(k) >= nm:
        raise ValueError(f"|k|={abs(k)} outside the band of the matrix")
    d = np.diagonal(u0.entries, offset=-k)
    if k >= 0:
        j = np.arange(-u0.grid.N, u0.grid.N - k + 1)
    else:
        j = np.arange(-u0.grid.N - k, u0.grid.N + 1)
    omega = p * k * (2 * j + k)
    t = np.asarray(t, dtype=float)
    out = np.sum(d * np.exp(1j * np.multiply.outer(t, omega.astype(float))), axis=-1)
    return out if out.shape else complex(out)


def volterra_solve(
    bg: BackgroundSymbol,
    u0: OperatorMatrix,
    p: float,
    q: float,
    k: int,
    t_grid: np.ndarray,
) -> np.ndarray:
    """Product-trapezoidal march for the scalar density equation at mode k.

    t_grid must be uniform starting at 0.  O(n^2) work; warns when the
    step undersamples the fastest kernel oscillation (dt > 0.1 / max|omega|).
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
        raise ValueError("t_grid must be 1-d, start at 0 and have >= 2 points")
    dt = t[1] - t[0]
    if dt <= 0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
        raise ValueError("t_grid must be uniformly spaced")
    c, omega = _kernel_terms(bg, p, k)
    omega_max = float(np.abs(omega).max()) if omega.size else 0.0
    if omega_max > 0 and dt > 0.1 / omega_max:
        warnings.warn(
            f"dt={dt:.3g} undersamples the kernel (fastest resonance {omega_max:.3g}); "
            "expect degraded accuracy",
            RuntimeWarning,
            stacklevel=2,
        )
    rho_free = np.asarray(free_density(u0, p, k, t), dtype=complex)
    if c.size == 0:
        return rho_free
    phi = np.sum(c * np.exp(1j * np.multiply.outer(t, omega)), axis=-1)
    coef = 1j * q / TWO_PI
    denom = 1.0 - coef * 0.5 * dt * phi[0]
    rho = np.empty_like(rho_free)
    rho[0] = rho_free[0]
    for i in range(1, t.size):
        acc = 0.5 * phi[i] * rho[0]
        if i > 1:
            acc += np.dot(phi[1:i][::-1], rho[1:i])
        rho[i] = (rho_free[i] + coef * dt * acc) / denom
    return rho


# ---- constants for the propagator and the stable window ----


@dataclass
class PropagatorConstants:
    """Constants of the weighted-density propagator bound and the stable window.

    With A = C|q| * ||Gamma||_{H1 S1} and B = |q| * ||Gh||_{l1} / (2*pi*kappa):
    C_gamma_eta = 1 + A(1 + B/eta)/eta bounds the eta-weighted density
    response, C_star = 3(1 + A + A*B) the polynomial propagator, and the
    stable window is |t| <= T_star = c_gamma * epsilon^{-1/5} with
    c_gamma = (8 C_star^2 C_Q)^{-1/5}, C_Q = C|q|.  C is the bilinear
    constant, supplied empirically.
    """

    gamma_h1s1: float
    gamma_l1: float
    kappa: float
    q_abs: float
    c_bilinear: float
    eta: float
    epsilon: float
    c_gamma_eta: float
    c_star: float
    c_q: float
    c_gamma: float
    t_star: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def propagator_constants(
    gamma_h1s1: float,
    gamma_l1: float,
    kappa: float,
    q: float,
    eta: float,
    epsilon: float,
    c_bilinear: float,
) -> PropagatorConstants:
    if kappa <= 0.0:
        raise UnstableBackgroundError(
            f"propagator constants require a positive Penrose margin, got kappa={kappa}"
        )
    if min(gamma_h1s1, gamma_l1) < 0.0:
        raise ValueError("background norms must be >= 0")
    if eta <= 0.0 or epsilon <= 0.0 or c_bilinear <= 0.0 or q == 0.0:
        raise ValueError("eta, epsilon, c_bilinear must be positive and q nonzero")
    a = c_bilinear * abs(q) * gamma_h1s1
    b = abs(q) * gamma_l1 / (TWO_PI * kappa)
    c_gamma_eta = 1.0 + a * (1.0 + b / eta) / eta
    c_star = 3.0 * (1.0 + a + a * b)
    c_q = c_bilinear * abs(q)
    c_gamma = (8.0 * c_star**2 * c_q) ** (-0.2)
    t_star = c_gamma * epsilon ** (-0.2)
    return PropagatorConstants(
        gamma_h1s1=gamma_h1s1,
        gamma_l1=gamma_l1,
        kappa=kappa,
        q_abs=abs(q),
        c_bilinear=c_bilinear,
        eta=eta,
        epsilon=epsilon,
        c_gamma_eta=c_gamma_eta,
        c_star=c_star,
        c_q=c_q,
        c_gamma=c_gamma,
        t_star=t_star,
    )
