"""Spectral analysis of the symmetric part of the out-Laplacian.

The feedback path ``y -> g = B_o E^T y`` of the directed linear protocol is
passive iff ``y^T L_o y >= 0`` for all ``y``, i.e. iff the smallest
eigenvalue of ``sym(L_o) = (L_o + L_o^T) / 2`` is non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .graph_core import (
    Digraph,
    IncidenceSet,
    build_incidence,
    globally_reachable_nodes,
    is_balanced,
    random_digraph,
)

__all__ = [
    "SpectralError",
    "SymLoAnalysis",
    "analyze_sym_Lo",
    "kernel_basis",
    "check_proposition1",
    "check_proposition2_3",
    "fan_hoffman_gap",
    "random_reachable_digraph",
    "proposition_corpus",
    "run_proposition_suite",
]

EIG_RTOL = 1e-10
KERNEL_RTOL = 1e-10
EDGE_PROBABILITIES = (0.3, 0.5, 0.7)


class SpectralError(RuntimeError):
    pass


def default_tol(eigenvalues: np.ndarray) -> float:
    radius = float(np.abs(eigenvalues).max(initial=0.0))
    return EIG_RTOL * max(1.0, radius)


def kernel_basis(A: np.ndarray, rtol: float = KERNEL_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of ``ker(A)`` by singular value thresholding."""
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    if A.size == 0:
        return np.eye(n)
    _, s, vh = np.linalg.svd(A)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rtol * smax)) if smax > 0 else 0
    return vh[rank:].T.copy()


def _same_subspace(U: np.ndarray, V: np.ndarray, atol: float = 1e-8) -> bool:
    if U.shape[1] != V.shape[1]:
        return False
    return bool(np.allclose(U @ U.T, V @ V.T, atol=atol))


@dataclass(frozen=True, eq=False)
class SymLoAnalysis:
    sym_Lo: np.ndarray
    eigenvalues: np.ndarray
    min_eigenvalue: float
    min_eigenvector: np.ndarray
    kernel_Lo: np.ndarray
    kernel_LoT: np.ndarray
    kernels_equal: bool
    feedback_passive: bool
    tol_eig: float

    @property
    def has_zero_eigenvalue(self) -> bool:
        return bool(np.any(np.abs(self.eigenvalues) <= self.tol_eig))

    def to_dict(self) -> dict[str, Any]:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "min_eigenvalue": self.min_eigenvalue,
            "min_eigenvector": self.min_eigenvector.tolist(),
            "kernel_dim_Lo": int(self.kernel_Lo.shape[1]),
            "kernel_dim_LoT": int(self.kernel_LoT.shape[1]),
            "kernels_equal": self.kernels_equal,
            "has_zero_eigenvalue": self.has_zero_eigenvalue,
            "feedback_passive": self.feedback_passive,
            "tol_eig": self.tol_eig,
        }


def analyze_sym_Lo(inc: IncidenceSet, tol_eig: float | None = None) -> SymLoAnalysis:
    """Eigen- and kernel structure of ``sym(L_o)``.

    Parameters
    ----------
    inc : IncidenceSet
    tol_eig : float, optional
        Absolute eigenvalue tolerance. Defaults to ``1e-10 * max(1, rho)``
        with ``rho`` the spectral radius of ``sym(L_o)``.
    """
    L_o = inc.L_o.astype(float)
    sym = 0.5 * (L_o + L_o.T)
    try:
        w, v = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(sym) if sym.size else float("nan")
        raise SpectralError(f"eigensolver failed on sym(L_o) (n={sym.shape[0]}, cond={cond:.3e}): {exc}") from exc
    if tol_eig is None:
        tol_eig = default_tol(w)
    elif tol_eig <= 0:
        raise ValueError("tol_eig must be positive")
    ker = kernel_basis(L_o)
    kerT = kernel_basis(L_o.T)
    vec = v[:, 0]
    # fix sign for reproducible reports
    j = int(np.argmax(np.abs(vec)))
    if vec[j] < 0:
        vec = -vec
    return SymLoAnalysis(
        sym_Lo=sym,
        eigenvalues=w,
        min_eigenvalue=float(w[0]),
        min_eigenvector=vec,
        kernel_Lo=ker,
        kernel_LoT=kerT,
        kernels_equal=_same_subspace(ker, kerT),
        feedback_passive=bool(w[0] >= -tol_eig),
        tol_eig=float(tol_eig),
    )


def check_proposition1(g: Digraph, inc: IncidenceSet | None = None) -> dict[str, Any]:
    """A globally reachable node forces ``lambda_min(sym(L_o)) <= 0``."""
    inc = inc or build_incidence(g)
    if not globally_reachable_nodes(g):
        return {"applicable": False, "holds": None, "min_eigenvalue": None}
    an = analyze_sym_Lo(inc)
    return {
        "applicable": True,
        "holds": bool(an.min_eigenvalue <= an.tol_eig),
        "min_eigenvalue": an.min_eigenvalue,
    }


def check_proposition2_3(g: Digraph, inc: IncidenceSet | None = None) -> dict[str, Any]:
    """Check ``ker(L_o) = ker(L_o^T)`` iff ``0 in spec(sym(L_o))`` iff balanced."""
    inc = inc or build_incidence(g)
    if not globally_reachable_nodes(g):
        return {
            "applicable": False,
            "kernels_equal": None,
            "zero_eigenvalue": None,
            "balanced": None,
            "consistent": None,
        }
    an = analyze_sym_Lo(inc)
    flags = (an.kernels_equal, an.has_zero_eigenvalue, is_balanced(inc))
    return {
        "applicable": True,
        "kernels_equal": flags[0],
        "zero_eigenvalue": flags[1],
        "balanced": flags[2],
        "consistent": len(set(flags)) == 1,
    }


def fan_hoffman_gap(inc: IncidenceSet) -> float:
    """``max_j (lambda_j - s_j)`` with both sequences descending; non-positive in theory."""
    L_o = inc.L_o.astype(float)
    lam = np.linalg.eigvalsh(0.5 * (L_o + L_o.T))[::-1]
    s = np.linalg.svd(L_o, compute_uv=False)
    return float(np.max(lam - s))


def random_reachable_digraph(rng: np.random.Generator, n_max: int, n_min: int = 2) -> Digraph:
    """Rejection-sample an Erdos-Renyi digraph that has a globally reachable node."""
    n = int(rng.integers(n_min, n_max + 1))
    p = float(rng.choice(EDGE_PROBABILITIES))
    while True:
        g = random_digraph(rng, n, p)
        if globally_reachable_nodes(g):
            return g


def proposition_corpus(seed: int, count: int, n_max: int = 8) -> list[Digraph]:
    if count < 1:
        raise ValueError("count must be >= 1")
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    rng = np.random.default_rng(seed)
    return [random_reachable_digraph(rng, n_max) for _ in range(count)]


def run_proposition_suite(seed: int, count: int, n_max: int = 8) -> dict[str, Any]:
    """Run the randomized reachable-node and balance-equivalence checks over a seeded corpus.

    Counterexamples carry the graph verbatim so they can be replayed.
    """
    corpus = proposition_corpus(seed, count, n_max)
    report: dict[str, Any] = {
        "seed": seed,
        "count": count,
        "n_max": n_max,
        "edge_probabilities": list(EDGE_PROBABILITIES),
        "prop1": {"pass": 0, "fail": 0},
        "prop2_3": {"pass": 0, "fail": 0},
        "fan_hoffman": {"pass": 0, "fail": 0},
        "balanced_graphs": 0,
        "counterexamples": [],
    }
    for idx, g in enumerate(corpus):
        inc = build_incidence(g)
        p1 = check_proposition1(g, inc)
        p23 = check_proposition2_3(g, inc)
        gap = fan_hoffman_gap(inc)
        report["balanced_graphs"] += int(bool(p23["balanced"]))
        for key, ok, detail in (
            ("prop1", p1["holds"], p1),
            ("prop2_3", p23["consistent"], p23),
            ("fan_hoffman", gap <= 1e-9, {"gap": gap}),
        ):
            if ok:
                report[key]["pass"] += 1
            else:
                report[key]["fail"] += 1
                report["counterexamples"].append({"index": idx, "check": key, "graph": g.to_dict(), "detail": detail})
    report["all_pass"] = not report["counterexamples"]
    return report
