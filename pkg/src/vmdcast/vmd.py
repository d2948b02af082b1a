"""Variational mode decomposition of a single signal window.

Implements the alternating frequency-domain optimization of
Dragomiretskiy & Zosso (2014, IEEE TSP 62(3)): each mode's spectrum is
refined by a Wiener filter around its center frequency, center
frequencies move to the power-weighted spectral centroid, and a dual
variable enforces reconstruction. The signal is mirror-extended before
the transform to suppress periodic boundary artifacts.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .validation import check_series

_INITS = ("uniform", "zero", "random")


@dataclass(frozen=True)
class VmdConfig:
    """Knobs of one decomposition run.

    Parameters
    ----------
    k : int
        Number of modes to extract.
    alpha : float
        Bandwidth penalty weight; larger values give narrower modes.
    tau : float
        Dual-ascent step. 0 disables the reconstruction constraint,
        which tolerates additive noise.
    tol : float
        Exit threshold on the largest relative spectral change of any
        mode between sweeps.
    max_iter : int
        Sweep cap; hitting it is reported as a warning, not an error.
    init : str
        Center-frequency start: "uniform" spreads k frequencies over
        [0, 0.5), "zero" starts all at 0, "random" draws log-uniform
        frequencies from a generator seeded with ``seed``.
    dc_mode : bool
        Pin mode 1 at zero frequency (never updated).
    seed : int or None
        Only used by ``init="random"``.
    """

    k: int = 5
    alpha: float = 2000.0
    tau: float = 0.0
    tol: float = 1e-7
    max_iter: int = 500
    init: str = "uniform"
    dc_mode: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if not 0 < self.tol < 1:
            raise ConfigError(f"tol must be in (0, 1), got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.init not in _INITS:
            raise ConfigError(f"init must be one of {_INITS}, got {self.init!r}")


@dataclass
class VmdOutput:
    """Result of one decomposition.

    ``modes`` has shape (k, n) in the input's units; ``omegas`` holds the
    matching normalized center frequencies in [0, 0.5] (cycles/sample),
    sorted ascending together with the modes.
    """

    modes: np.ndarray
    omegas: np.ndarray
    iterations: int
    final_delta: float
    config: VmdConfig | None = field(default=None, repr=False)


def mirror_extend(signal) -> np.ndarray:
    """Reflect head and tail of ``signal`` so the result has length 2n.

    The first ceil(n/2) output samples are the reversed head, the last
    floor(n/2) the reversed tail, the middle the original signal.
    ``de_extend`` recovers the input exactly.
    """
    x = check_series(signal, "signal", min_len=2)
    n = x.shape[0]
    head = (n + 1) // 2
    tail = n // 2
    return np.concatenate([x[:head][::-1], x, x[n - tail:][::-1]])


def de_extend(extended) -> np.ndarray:
    """Undo :func:`mirror_extend`, returning the middle n samples."""
    ext = np.asarray(extended, dtype=np.float64)
    if ext.ndim != 1 or ext.shape[0] % 2:
        raise ConfigError("extended signal must be 1-d with even length")
    n = ext.shape[0] // 2
    head = (n + 1) // 2
    return ext[head:head + n].copy()


def _init_omegas(config: VmdConfig, n: int) -> np.ndarray:
    if config.init == "uniform":
        omegas = (0.5 / config.k) * np.arange(config.k, dtype=np.float64)
    elif config.init == "zero":
        omegas = np.zeros(config.k)
    else:
        rng = np.random.default_rng(config.seed)
        fs = 1.0 / n
        omegas = np.sort(
            np.exp(np.log(fs) + (np.log(0.5) - np.log(fs)) * rng.random(config.k))
        )
    if config.dc_mode:
        omegas[0] = 0.0
    return omegas


def vmd_decompose(signal, config: VmdConfig | None = None) -> VmdOutput:
    """Split ``signal`` into ``config.k`` band-limited modes.

    Per sweep every mode spectrum is updated by dividing the residual
    spectrum (input minus the other modes minus half the dual variable)
    by ``1 + 2*alpha*(freq - omega_k)**2``, then each center frequency
    moves to the power-weighted centroid of its mode over positive
    frequencies, then the dual variable takes a step of size ``tau``
    against the reconstruction error. Sweeps stop when the largest
    relative change of any mode spectrum drops below ``tol``.

    Modes come back in ascending center-frequency order so mode 1 is the
    slowest component regardless of initialization.
    """
    cfg = config or VmdConfig()
    x = check_series(signal, "signal", min_len=max(2, 2 * cfg.k))

    n = x.shape[0]
    ext = mirror_extend(x)
    t = ext.shape[0]
    half = slice(t // 2, t)
    freqs = np.arange(t, dtype=np.float64) / t - 0.5

    f_hat = np.fft.fftshift(np.fft.fft(ext))
    f_hat_plus = f_hat.copy()
    f_hat_plus[:t // 2] = 0.0

    omegas = _init_omegas(cfg, n)
    u_prev = np.zeros((cfg.k, t), dtype=complex)
    u_next = np.zeros_like(u_prev)
    lam = np.zeros(t, dtype=complex)

    delta = np.inf
    sweeps = 0
    while delta > cfg.tol and sweeps < cfg.max_iter:
        sum_mix = u_prev.sum(axis=0)
        for k in range(cfg.k):
            residual = f_hat_plus - (sum_mix - u_prev[k]) - lam / 2.0
            u_next[k] = residual / (1.0 + 2.0 * cfg.alpha * (freqs - omegas[k]) ** 2)
            sum_mix += u_next[k] - u_prev[k]
            if not (cfg.dc_mode and k == 0):
                power = np.abs(u_next[k, half]) ** 2
                total = power.sum()
                if total > 0.0:
                    omegas[k] = float(np.dot(freqs[half], power) / total)

        lam = lam + cfg.tau * (u_next.sum(axis=0) - f_hat_plus)

        delta = 0.0
        for k in range(cfg.k):
            num = float(np.sum(np.abs(u_next[k] - u_prev[k]) ** 2))
            den = float(np.sum(np.abs(u_prev[k]) ** 2))
            if den == 0.0:
                rel = 0.0 if num == 0.0 else np.inf
            else:
                rel = num / den
            delta = max(delta, rel)

        u_prev, u_next = u_next, u_prev
        sweeps += 1

    if delta > cfg.tol:
        warnings.warn(
            f"VMD stopped at max_iter={cfg.max_iter} before reaching tol; "
            "final_delta is recorded on the output",
            RuntimeWarning,
            stacklevel=2,
        )

    modes = np.empty((cfg.k, n))
    for k in range(cfg.k):
        spectrum = np.zeros(t, dtype=complex)
        spectrum[half] = u_prev[k, half]
        spectrum[1:t // 2 + 1] = np.conj(u_prev[k, half][::-1])
        spectrum[0] = np.conj(spectrum[-1])
        full = np.real(np.fft.ifft(np.fft.ifftshift(spectrum)))
        modes[k] = de_extend(full)

    order = np.argsort(omegas, kind="stable")
    return VmdOutput(
        modes=modes[order],
        omegas=np.clip(omegas[order], 0.0, 0.5),
        iterations=sweeps,
        final_delta=float(delta),
        config=cfg,
    )


def reconstruct(output: VmdOutput) -> np.ndarray:
    """Sum of all modes; approximates the decomposed window."""
    return np.asarray(output.modes).sum(axis=0)
