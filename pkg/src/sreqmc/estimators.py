"""Statistics of work ensembles, signal-to-noise scaling fits and projector-length bounds."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps


@dataclass(frozen=True)
class WorkStats:
    count: int
    mean: float
    variance: float
    skewness: float
    ks_statistic: float
    abandoned_fraction: float
    degenerate: bool

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return asdict(self)


def work_stats(works: Sequence[float], abandoned_fraction: Optional[float] = None) -> WorkStats:
    """Moments of a work sample and the KS distance to a Gaussian with fitted mean/std.

    Non-finite entries are treated as abandoned paths and dropped; their
    share is reported unless ``abandoned_fraction`` is given. A sample with
    zero spread is flagged ``degenerate`` and gets NaN shape statistics.
    """
    if hasattr(works, "results"):  # a WorkEnsemble
        if abandoned_fraction is None:
            abandoned_fraction = works.abandoned_fraction
        works = works.works()
    raw = np.asarray(works, dtype=float)
    if raw.ndim != 1:
        raise ValueError("need a 1-d work sample")
    w = raw[np.isfinite(raw)]
    if abandoned_fraction is None:
        abandoned_fraction = 1.0 - w.size / raw.size if raw.size else 0.0
    if w.size < 2:
        raise ValueError("need at least two completed paths")
    mean = float(w.mean())
    var = float(w.var(ddof=1))
    if var <= 1e-28 * max(1.0, mean * mean):
        return WorkStats(int(w.size), mean, 0.0, math.nan, math.nan, float(abandoned_fraction), True)
    skew = float(sps.skew(w, bias=True))
    ks = sps.kstest(w, "norm", args=(mean, math.sqrt(var)))
    return WorkStats(int(w.size), mean, var, skew, float(ks.statistic), float(abandoned_fraction), False)


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Asymptotic one-sample KS critical distance at level ``alpha``."""
    return math.sqrt(-0.5 * math.log(alpha / 2)) / math.sqrt(n)


def gaussian_consistency(stats: WorkStats, samples: Sequence[float], tol: float = 0.05) -> dict:
    """Compare mean and variance of exp(-W) with the Gaussian-work predictions.

    For W ~ N(Wbar, s2): mu = exp(-Wbar + s2/2) and
    tau2 = exp(-2 Wbar + s2) (exp(s2) - 1). Deviations are relative to the
    prediction (absolute when the predicted variance is zero).
    """
    w = np.asarray(samples, dtype=float)
    w = w[np.isfinite(w)]
    s2 = stats.variance
    shift = stats.mean  # factor exp(-Wbar) out to keep numbers O(1)
    e = np.exp(-(w - shift))
    mu_hat = float(e.mean())
    tau2_hat = float(e.var(ddof=1)) if e.size > 1 else 0.0
    mu_pred = math.exp(s2 / 2)
    tau2_pred = math.exp(s2) * math.expm1(s2)
    dev_mu = abs(mu_hat - mu_pred) / mu_pred
    dev_tau = abs(tau2_hat - tau2_pred) / tau2_pred if tau2_pred > 0 else abs(tau2_hat)
    scale = math.exp(-shift)
    return {"mu": mu_hat * scale, "mu_gaussian": mu_pred * scale,
            "tau2": tau2_hat * scale ** 2, "tau2_gaussian": tau2_pred * scale ** 2,
            "mu_deviation": dev_mu, "tau2_deviation": dev_tau,
            "deviation_flag": bool(dev_mu > tol or dev_tau > tol)}


def histogram(works: Sequence[float], bins: int = 20):
    """(counts, edges) with at least 20 bins."""
    if bins < 20:
        raise ValueError("histograms use at least 20 bins")
    w = np.asarray(works, dtype=float)
    return np.histogram(w[np.isfinite(w)], bins=bins)


# ---------------------------------------------------------------------------
# SNR scaling


@dataclass(frozen=True)
class SnrFit:
    alpha: float
    alpha_c: float
    gamma: Optional[float]
    sizes: tuple
    snr: tuple
    residuals: tuple

    def predict(self, n_sites) -> np.ndarray:
        """Fitted SNR = alpha_c^-1 N^-alpha."""
        return np.asarray(n_sites, dtype=float) ** (-self.alpha) / self.alpha_c

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "alpha_c": self.alpha_c, "gamma": self.gamma,
                "sizes": list(self.sizes), "snr": list(self.snr), "residuals": list(self.residuals)}


def snr_exp_work(works: Sequence[float]) -> float:
    """Signal-to-noise ratio mean/std of exp(-W), computed shift-invariantly."""
    w = np.asarray(works, dtype=float)
    w = w[np.isfinite(w)]
    e = np.exp(-(w - w.min()))
    sd = e.std(ddof=1)
    if sd == 0:
        raise ValueError("zero spread: SNR undefined")
    return float(e.mean() / sd)


def snr_work(works: Sequence[float]) -> float:
    """Signal-to-noise ratio |mean|/std of W itself."""
    w = np.asarray(works, dtype=float)
    w = w[np.isfinite(w)]
    sd = w.std(ddof=1)
    if sd == 0:
        raise ValueError("zero spread: SNR undefined")
    return float(abs(w.mean()) / sd)


def _loglog(sizes, values, what):
    n = np.asarray(sizes, dtype=float)
    v = np.asarray(values, dtype=float)
    if n.shape != v.shape or n.ndim != 1:
        raise ValueError(f"sizes and {what} must be matching 1-d sequences")
    if n.size < 3:
        raise ValueError("need at least three system sizes for a scaling fit")
    if np.any(n <= 0) or np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError(f"sizes and {what} must be positive")
    slope, intercept = np.polyfit(np.log(n), np.log(v), 1)
    resid = np.log(v) - (slope * np.log(n) + intercept)
    return n, v, float(slope), float(intercept), resid


def fit_snr_scaling(sizes: Sequence[float], snrs: Sequence[float],
                    work_snrs: Optional[Sequence[float]] = None) -> SnrFit:
    """Least-squares line in log-log space: ln SNR = -alpha ln N - ln alpha_c.

    ``snrs`` are SNRs of exp(-W). ``work_snrs`` optionally gives the SNR of W
    itself at the same sizes; gamma is then the slope of ln(SNR_W^2) vs ln N.
    Residuals are per point, in log space.
    """
    n, s, slope, intercept, resid = _loglog(sizes, snrs, "SNR values")
    gamma = None
    if work_snrs is not None:
        sw = np.asarray(work_snrs, dtype=float)
        gamma = 2.0 * _loglog(n, sw, "work SNR values")[2]
    return SnrFit(-slope, math.exp(-intercept), gamma, tuple(n.tolist()), tuple(s.tolist()),
                  tuple(resid.tolist()))


# ---------------------------------------------------------------------------
# projector length


@dataclass(frozen=True)
class SpectralData:
    """Inputs of the projector-length bound.

    ``e_g`` is the ground energy of the operator whose power is projected;
    only its magnitude enters. For the shifted operator C - H pass C - E_g.
    ``r0`` bounds the ratio of trial-state overlaps of excited and ground
    states.
    """

    e_g: float
    gap: float
    r0: float = 1.0

    @property
    def abs_ground_energy(self) -> float:
        return abs(self.e_g)


SMALLNESS_LIMIT = 0.1


def min_projector_length(spec: SpectralData, n: int, delta_r: float, m_n: float) -> int:
    """Smallest m keeping the relative bias of an order-n quantity below ``delta_r``.

    m >= |E_g| / (2 Delta) * ln(2 n r0^2 / ((n - 1) delta_r M_n)).
    """
    if not spec.gap > 0:
        raise ValueError("gap must be positive; degenerate ground state has no finite bound")
    if n < 2:
        raise ValueError("order n must be >= 2")
    if not (delta_r > 0 and m_n > 0 and spec.abs_ground_energy > 0 and spec.r0 > 0):
        raise ValueError("delta_r, M_n, |E_g| and r0 must be positive")
    small = (n - 1) * delta_r * m_n
    if small > SMALLNESS_LIMIT:
        warnings.warn(f"(n-1) delta_r M_n = {small:.3g} is not small; the bound is unreliable",
                      RuntimeWarning, stacklevel=2)
    arg = 2 * n * spec.r0 ** 2 / small
    val = spec.abs_ground_energy / (2 * spec.gap) * math.log(arg)
    return max(1, int(math.ceil(val - 1e-12)))


def jackknife(samples: Sequence[float], func) -> tuple:
    """(estimate, stderr) of ``func`` over leave-one-out subsamples."""
    x = np.asarray(samples, dtype=float)
    k = x.size
    if k < 2:
        raise ValueError("jackknife needs at least two samples")
    full = float(func(x))
    loo = np.array([func(np.delete(x, i)) for i in range(k)])
    return full, float(np.sqrt((k - 1) / k * np.sum((loo - loo.mean()) ** 2)))
