"""Quantization, discretized Gaussian likelihoods and coder-table building.

The bridge between the network and the range coder.  The differentiable
path (training) composes engine ops; the table-building path runs in
float64 numpy so the probabilities the coder uses are the exact
discretized CDFs, integerized with largest-remainder apportionment to a
total of 65536 with every bin kept >= 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractViolation
from .rangecoder import CDF_TOTAL, CdfTable

__all__ = [
    "QuantizerMode", "FactorizedZ", "TableBatch",
    "quantize", "gaussian_likelihood", "z_likelihood", "rate_bits",
    "gaussian_bin_prob", "build_cdf_table", "build_cdf_tables",
    "SIGMA_MIN", "SIGMA_MAX", "LIKELIHOOD_FLOOR", "ALPHABET_MIN", "ALPHABET_MAX",
]

SIGMA_MIN = 0.01
SIGMA_MAX = 256.0
LIKELIHOOD_FLOOR = 2.0 ** -32
ALPHABET_MIN = -127
ALPHABET_MAX = 128

_LN2 = float(np.log(2.0))


class QuantizerMode(enum.Enum):
    TRAIN_NOISE = "train_noise"          # x + U(-0.5, 0.5), differentiable surrogate
    INFERENCE_ROUND = "inference_round"  # round half away from zero


def round_half_away(data: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(data) + 0.5), data).astype(np.float32)


def quantize(x: Tensor, mode: QuantizerMode, rng: np.random.Generator | None = None) -> Tensor:
    """Quantize a latent tensor.

    TRAIN_NOISE adds seeded i.i.d. uniform noise and keeps the graph alive;
    INFERENCE_ROUND returns a detached integer-valued tensor.
    """
    if mode is QuantizerMode.TRAIN_NOISE:
        if rng is None:
            raise ContractViolation("TRAIN_NOISE quantization needs an rng")
        noise = rng.uniform(-0.5, 0.5, size=x.shape).astype(np.float32)
        return ad.add(x, Tensor(noise))
    if mode is QuantizerMode.INFERENCE_ROUND:
        return Tensor(round_half_away(x.data))
    raise ContractViolation(f"unknown quantizer mode {mode!r}")


def gaussian_likelihood(xhat: Tensor, mu: Tensor, sigma: Tensor) -> Tensor:
    """Probability of each quantized value under N(mu, sigma) integrated
    over its unit bin, floored at LIKELIHOOD_FLOOR."""
    centered = ad.sub(xhat, mu)
    hi = ad.ndtr(ad.div(ad.add_const(centered, 0.5), sigma))
    lo = ad.ndtr(ad.div(ad.add_const(centered, -0.5), sigma))
    return ad.clamp(ad.sub(hi, lo), LIKELIHOOD_FLOOR, 1.0)


@dataclass
class FactorizedZ:
    """Zero-mean per-channel Gaussian model for the innermost latent.

    One trainable scale per channel, shared across all spatial positions.
    """

    log_sigma: Tensor  # (1, 1, 1, c)

    @classmethod
    def create(cls, channels: int, requires_grad: bool = True,
               sigma_init: float = 1.0) -> "FactorizedZ":
        value = float(np.log(sigma_init))
        return cls(Tensor(np.full((1, 1, 1, channels), value, np.float32),
                          requires_grad))

    @property
    def channels(self) -> int:
        return self.log_sigma.shape[3]

    def sigma(self) -> Tensor:
        return ad.clamp(ad.exp(self.log_sigma), SIGMA_MIN, SIGMA_MAX)

    def sigma_values(self) -> np.ndarray:
        return np.clip(np.exp(self.log_sigma.data.astype(np.float64)),
                       SIGMA_MIN, SIGMA_MAX).reshape(-1)


def z_likelihood(zhat: Tensor, fz: FactorizedZ) -> Tensor:
    if zhat.shape[3] != fz.channels:
        raise ContractViolation(
            f"z has {zhat.shape[3]} channels, model has {fz.channels}")
    sigma = fz.sigma()
    hi = ad.ndtr(ad.div(ad.add_const(zhat, 0.5), sigma))
    lo = ad.ndtr(ad.div(ad.add_const(zhat, -0.5), sigma))
    return ad.clamp(ad.sub(hi, lo), LIKELIHOOD_FLOOR, 1.0)


def rate_bits(*likelihoods: Tensor) -> Tensor:
    """Total modeled bits: -sum log2 q over every element of every stream.

    Implemented as a left-fold of per-stream scalars, so the total equals
    the float32 sum of the individual rate_bits() values exactly.
    """
    if not likelihoods:
        raise ContractViolation("rate_bits needs at least one likelihood tensor")
    total = None
    for q in likelihoods:
        term = ad.mul_const(ad.sum_all(ad.log(q)), -1.0 / _LN2)
        total = term if total is None else ad.add(total, term)
    return total


# ---------------------------------------------------------------------------
# float64 table math (what the coder actually sees)

def gaussian_bin_prob(x, mu, sigma):
    """Float64 discretized Gaussian bin probability; broadcasts."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    return special.ndtr((x + 0.5 - mu) / sigma) - special.ndtr((x - 0.5 - mu) / sigma)


def _integerize_rows(p: np.ndarray) -> np.ndarray:
    """Largest-remainder apportionment of probability rows to CDF_TOTAL.

    One count is reserved per bin up front (coder safety), the remaining
    budget is apportioned by floor + largest fractional remainder with
    ties broken by bin index.  Returns cumulative rows of width nbins+1.
    """
    n, nbins = p.shape
    budget = CDF_TOTAL - nbins
    scaled = p * budget
    base = np.floor(scaled).astype(np.int64)
    short = budget - base.sum(axis=1)
    order = np.argsort(-(scaled - base), axis=1, kind="stable")
    bonus_sorted = (np.arange(nbins)[None, :] < short[:, None]).astype(np.int64)
    bonus = np.zeros_like(base)
    np.put_along_axis(bonus, order, bonus_sorted, axis=1)
    freq = base + bonus + 1
    cum = np.zeros((n, nbins + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=cum[:, 1:])
    return cum


def build_cdf_tables(mu, sigma, smin: int = ALPHABET_MIN, smax: int = ALPHABET_MAX,
                     _chunk: int = 1 << 14) -> np.ndarray:
    """Cumulative rows (n, nsymbols+2) for per-element Gaussian models.

    Row layout: one bin per symbol in [smin, smax] plus a trailing escape
    bin that absorbs the tail mass outside the alphabet.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    if mu.shape != sigma.shape or mu.ndim != 1:
        raise ContractViolation("mu and sigma must be matching 1-D arrays")
    if smin >= smax:
        raise ContractViolation(f"bad alphabet [{smin}, {smax}]")
    n = mu.size
    nbins = (smax - smin + 1) + 1
    out = np.empty((n, nbins + 1), dtype=np.int64)
    edges = np.arange(smin, smax + 2, dtype=np.float64) - 0.5
    for lo_idx in range(0, n, _chunk):
        hi_idx = min(lo_idx + _chunk, n)
        m = mu[lo_idx:hi_idx, None]
        s = sigma[lo_idx:hi_idx, None]
        cdf_at_edges = special.ndtr((edges[None, :] - m) / s)
        p_sym = np.diff(cdf_at_edges, axis=1)
        p_esc = 1.0 - (cdf_at_edges[:, -1] - cdf_at_edges[:, 0])
        p = np.concatenate([p_sym, p_esc[:, None]], axis=1)
        p = np.clip(p, 0.0, None)
        p /= p.sum(axis=1, keepdims=True)
        out[lo_idx:hi_idx] = _integerize_rows(p)
    return out


def build_cdf_table(mu: float, sigma: float,
                    alphabet: tuple[int, int] = (ALPHABET_MIN, ALPHABET_MAX)) -> CdfTable:
    """Single integer CDF table for one Gaussian model."""
    smin, smax = alphabet
    rows = build_cdf_tables([mu], [sigma], smin, smax)
    return CdfTable(smin, rows[0], has_escape=True)


class TableBatch:
    """Per-symbol CdfTable sequence backed by shared cumulative rows.

    `row_of_symbol` maps symbol position to a row index, so spatially
    shared models (the Z stream) store one row per channel only.
    """

    def __init__(self, cum_rows: np.ndarray, smin: int,
                 row_of_symbol: np.ndarray | None = None):
        self.cum_rows = cum_rows
        self.smin = smin
        self.row_of_symbol = row_of_symbol

    def __len__(self) -> int:
        if self.row_of_symbol is None:
            return self.cum_rows.shape[0]
        return len(self.row_of_symbol)

    def __getitem__(self, i: int) -> CdfTable:
        row = i if self.row_of_symbol is None else self.row_of_symbol[i]
        return CdfTable(self.smin, self.cum_rows[row], has_escape=True)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]
