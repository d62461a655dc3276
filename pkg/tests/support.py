"""Adapters between oracle-style raw problem dicts and package types."""
from __future__ import annotations

import numpy as np

from isoc import ProblemArrays, StaticArrays


def psd_sqrt(S):
    """Symmetric PSD square root (eigh-based, robust to zero eigenvalues)."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T


def arrays_from_dict(d) -> ProblemArrays:
    """Package view of an oracle-style raw problem dict."""
    static = StaticArrays(
        As=d["A"], Bs=d["B"], Hs=d["H"], F=d["F"], G=d["G"],
        x0_mean=d["x0_mean"], x0_cov=d["x0_cov"],
    )
    return ProblemArrays(
        static=static,
        sigma_alpha=psd_sqrt(d["Om_xi"]),
        sigma_beta=psd_sqrt(d["Om_omega"]),
        sig_u=d["sig_u"],
        sig_x=d["sig_x"],
        om_xi=d["Om_xi"],
        om_omega=d["Om_omega"],
        Q=d["Q"],
        R=d["R"],
    )
