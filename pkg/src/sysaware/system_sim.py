"""End-to-end simulation: chirp source, noisy acquisition, rendering, sweeps.

The reference system blurs with a wide Gaussian kernel, subsamples, and adds
white noise; rendering replicates each coded sample back to the source grid.
Noise comes from numpy's Philox counter-based generator so any draw is
bit-reproducible from the recorded seed.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import admm
from .linops import Compose, Convolution, LinearMap, Replicate, Subsample

__all__ = [
    "SystemModel",
    "RDPoint",
    "make_chirp",
    "gaussian_kernel",
    "make_blur_subsample_system",
    "acquire",
    "render",
    "psnr",
    "ideal_distortion_check",
    "sweep",
    "rd_points_to_csv",
    "save_signal",
    "load_signal",
]

log = logging.getLogger(__name__)

PSNR_CAP_DB = 200.0


@dataclass(frozen=True)
class SystemModel:
    """Acquisition operator a, rendering operator b, noise level, and seed."""

    a: LinearMap
    b: LinearMap
    noise_std: float
    rng_seed: int

    def __post_init__(self):
        if self.a.in_dim != self.b.out_dim or self.a.out_dim != self.b.in_dim:
            raise ValueError(
                f"a ({self.a.in_dim}->{self.a.out_dim}) and "
                f"b ({self.b.in_dim}->{self.b.out_dim}) do not form a closed loop"
            )
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class RDPoint:
    """One operating point of a sweep. ``blob`` keeps the compressed bytes so
    callers can persist exactly what was measured."""

    nu_or_theta: float
    rate_bpp: float
    psnr_db: float
    method: str
    iterations: int
    blob: bytes = b""


def make_chirp(n: int) -> np.ndarray:
    """Length-n chirp in [0, 1]: 0.5 + 0.5 * t * sin(2*pi*(2t + 30t^2)), t = i/n."""
    if n < 2:
        raise ValueError("n must be >= 2")
    t = np.arange(n) / n
    return 0.5 + 0.5 * t * np.sin(2 * np.pi * (2 * t + 30 * t * t))


def gaussian_kernel(std: float = 15.0, support: int = 15) -> np.ndarray:
    """Unit-sum Gaussian taps at integer offsets centered on zero.

    With the default std wide relative to the support the kernel is close to
    a boxcar, which is the intended strong blur.
    """
    if support < 1 or support % 2 == 0:
        raise ValueError("support must be a positive odd integer")
    offsets = np.arange(support) - (support - 1) // 2
    taps = np.exp(-(offsets.astype(float) ** 2) / (2 * std * std))
    return taps / taps.sum()


def make_blur_subsample_system(
    n: int = 1024,
    kernel_std: float = 15.0,
    kernel_support: int = 15,
    factor: int = 4,
    noise_std: float = 1e-3,
    seed: int = 0,
) -> SystemModel:
    """Gaussian blur + subsample acquisition with replicating rendering."""
    if n % factor:
        raise ValueError(f"subsampling factor {factor} must divide n={n}")
    a = Compose([Convolution(n, gaussian_kernel(kernel_std, kernel_support)), Subsample(n, factor)])
    b = Replicate(n // factor, factor)
    return SystemModel(a=a, b=b, noise_std=float(noise_std), rng_seed=int(seed))


def acquire(x, system: SystemModel) -> np.ndarray:
    """Measure x through the acquisition operator plus white Gaussian noise.

    The noise draw uses Philox keyed with the model seed, so repeated calls
    return identical measurements.
    """
    w = system.a.apply(x)
    if system.noise_std > 0:
        rng = np.random.Generator(np.random.Philox(system.rng_seed))
        w = w + system.noise_std * rng.standard_normal(w.size)
    return w


def render(v, system: SystemModel) -> np.ndarray:
    return system.b.apply(v)


def psnr(x, y, peak: float = 1.0) -> float:
    """PSNR of y against reference x, capped at 200 dB (the cap flags a
    saturated, effectively exact reconstruction)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(((x - y) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(float(10 * np.log10(peak * peak / mse)), PSNR_CAP_DB)


def ideal_distortion_check(x, system: SystemModel) -> float:
    """Per-sample energy of the actual noise draw: (1/M)||w - A(x)||^2.

    For nonzero noise this concentrates around noise_std**2, which is the
    distortion an ideal system-aware coder approaches at high rate.
    """
    w = acquire(x, system)
    clean = system.a.apply(x)
    return float(((w - clean) ** 2).mean())


def sweep(
    x,
    system: SystemModel,
    codec,
    params,
    method: str,
    admm_cfg: admm.AdmmConfig | None = None,
) -> list[RDPoint]:
    """Rate-distortion sweep over codec parameters, sorted by rate.

    method "regular" compresses the measurements directly; "proposed" runs the
    ADMM loop (admm_cfg required; its theta is replaced by each parameter).
    A failing point is logged with its parameter and skipped.
    """
    if method not in ("regular", "proposed"):
        raise ValueError(f"method must be 'regular' or 'proposed', got {method!r}")
    if method == "proposed" and admm_cfg is None:
        raise ValueError("method 'proposed' needs an admm_cfg")
    x = np.asarray(x, dtype=float)
    w = acquire(x, system)
    m = w.size
    points = []
    for param in params:
        try:
            if method == "regular":
                blob = codec.compress(w, param)
                iterations = 1
            else:
                blob, trace = admm.run(w, system.a, system.b, codec, replace(admm_cfg, theta=param))
                iterations = len(trace)
            v = np.asarray(codec.decompress(blob), dtype=float)
            y = render(v, system)
            points.append(
                RDPoint(
                    nu_or_theta=float(param),
                    rate_bpp=codec.rate_bits(blob) / m,
                    psnr_db=psnr(x, y, peak=1.0),
                    method=method,
                    iterations=iterations,
                    blob=blob,
                )
            )
        except Exception:
            log.warning("sweep point failed (method=%s, param=%r)", method, param, exc_info=True)
    return sorted(points, key=lambda p: p.rate_bpp)


def rd_points_to_csv(points: list[RDPoint], seed: int) -> str:
    out = io.StringIO()
    out.write("method,param,rate_bpp,psnr_db,iterations,seed\n")
    for p in points:
        out.write(f"{p.method},{p.nu_or_theta!r},{p.rate_bpp!r},{p.psnr_db!r},{p.iterations},{seed}\n")
    return out.getvalue()


def save_signal(path, x) -> None:
    """Write a signal as plain text, one value per line."""
    with open(path, "w") as fh:
        for value in np.asarray(x, dtype=float).tolist():
            fh.write(f"{value!r}\n")


def load_signal(path) -> np.ndarray:
    with open(path) as fh:
        return np.array([float(line) for line in fh if line.strip()])
