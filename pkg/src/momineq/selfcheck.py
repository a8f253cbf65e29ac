"""Fast invariant suite: approximation gaps, gradients, the projection
oracle, homogeneity, and the gradient Lipschitz bound.

These are the library's numerical health checks; `momineq selfcheck`
prints one line per check and the acceptance tests assert the same
bundle.  Everything is seeded and runs in well under a minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .smoothing import (
    IndexKind,
    IndexSpec,
    cone_projection_qlr,
    eval_S,
    eval_S_mu,
    gradient_check,
    qlr_active_set_enumeration,
)
from .streams import Stream

__all__ = ["CheckResult", "run_selfcheck"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_case(rng, kinds=(IndexKind.SUM_PLUS, IndexKind.MAX_PLUS)):
    j = int(rng.integers(1, 9))
    kind = kinds[int(rng.integers(0, len(kinds)))]
    m = rng.standard_normal(j) * 10.0 ** rng.uniform(-2, 1)
    sd = np.exp(rng.uniform(-1.0, 1.0, size=j))
    mu = 10.0 ** rng.uniform(math.log10(0.01), 0.0)
    return IndexSpec(kind, j), m, np.diag(sd**2), mu


def check_approximation_gaps(seed: int = 20240, sweeps: int = 10_000) -> CheckResult:
    """|S_mu - S| <= beta * mu for the two-sided kinds; the softmin obeys
    its one-sided bracket min - mu ln J <= softmin <= min."""
    rng = Stream.from_seed(seed).child("gaps").generator()
    worst = -math.inf
    for _ in range(sweeps):
        spec, m, sigma, mu = _random_case(rng)
        gap = eval_S_mu(spec, m, sigma, mu).value - eval_S(spec, m, sigma)
        worst = max(worst, abs(gap) - spec.beta * mu)
        soft = IndexSpec(IndexKind.SOFT_MIN_BOUNDARY, m.shape[0])
        sval = eval_S_mu(soft, m, None, mu).value
        excess = max(sval - m.min(), m.min() - mu * math.log(m.shape[0]) - sval)
        worst = max(worst, excess)
    ok = worst <= 1e-10
    return CheckResult("approximation_gaps", ok, f"max bound excess {worst:.2e}")


def check_gradients(seed: int = 20241, sweeps: int = 200) -> CheckResult:
    """Analytic gradients against central finite differences."""
    rng = Stream.from_seed(seed).child("grad").generator()
    worst = 0.0
    for _ in range(sweeps):
        spec, m, sigma, _ = _random_case(
            rng, (IndexKind.SUM_PLUS, IndexKind.MAX_PLUS, IndexKind.SOFT_MIN_BOUNDARY)
        )
        worst = max(worst, gradient_check(spec, m, sigma, mu=0.1, h=1e-5))
    ok = worst <= 1e-6
    return CheckResult("gradient_finite_differences", ok, f"max relative error {worst:.2e}")


def check_qlr_oracle(seed: int = 20242, cases: int = 100) -> CheckResult:
    """Fast cone projection against exhaustive KKT enumeration, J <= 3."""
    rng = Stream.from_seed(seed).child("qlr").generator()
    worst = 0.0
    for _ in range(cases):
        j = int(rng.integers(1, 4))
        a = rng.standard_normal((j, j))
        sigma = a @ a.T + 0.3 * np.eye(j)
        m = rng.standard_normal(j) * 2.0
        worst = max(
            worst, abs(cone_projection_qlr(m, sigma) - qlr_active_set_enumeration(m, sigma))
        )
    ok = worst <= 1e-8
    return CheckResult("qlr_vs_enumeration", ok, f"max abs deviation {worst:.2e}")


def check_homogeneity(seed: int = 20243, sweeps: int = 300) -> CheckResult:
    """S(a m, Sigma) = a^chi S(m, Sigma) for positive scalings."""
    rng = Stream.from_seed(seed).child("homog").generator()
    worst = 0.0
    kinds = (IndexKind.SUM_PLUS, IndexKind.MAX_PLUS, IndexKind.QLR, IndexKind.SUM_PLUS_SQ)
    for _ in range(sweeps):
        j = int(rng.integers(1, 6))
        kind = kinds[int(rng.integers(0, len(kinds)))]
        spec = IndexSpec(kind, j)
        a_mat = rng.standard_normal((j, j))
        sigma = a_mat @ a_mat.T + 0.5 * np.eye(j)
        if kind != IndexKind.QLR:
            sigma = np.diag(np.diag(sigma))
        m = rng.standard_normal(j) * 3.0
        scale = 10.0 ** rng.uniform(-2, 2)
        chi = spec.smooth_params.chi
        lhs = eval_S(spec, scale * m, sigma)
        rhs = scale**chi * eval_S(spec, m, sigma)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    ok = worst <= 1e-12
    return CheckResult("homogeneity", ok, f"max relative deviation {worst:.2e}")


def check_maxplus_lipschitz(seed: int = 20244, pairs: int = 1000) -> CheckResult:
    """||grad S_mu(m) - grad S_mu(m')|| <= (1/mu) ||m - m'|| for the
    softmax-with-slack family at unit scales."""
    rng = Stream.from_seed(seed).child("lip").generator()
    worst = -math.inf
    for _ in range(pairs):
        j = int(rng.integers(1, 9))
        spec = IndexSpec(IndexKind.MAX_PLUS, j)
        sigma = np.eye(j)
        mu = 10.0 ** rng.uniform(-2, 0)
        m1 = rng.standard_normal(j) * 2.0
        m2 = m1 + rng.standard_normal(j) * 10.0 ** rng.uniform(-3, 0)
        g1 = eval_S_mu(spec, m1, sigma, mu).gradient
        g2 = eval_S_mu(spec, m2, sigma, mu).gradient
        bound = np.linalg.norm(m1 - m2) / mu
        worst = max(worst, float(np.linalg.norm(g1 - g2) - bound))
    ok = worst <= 1e-12
    return CheckResult("maxplus_gradient_lipschitz", ok, f"max bound excess {worst:.2e}")


def run_selfcheck() -> list:
    return [
        check_approximation_gaps(),
        check_gradients(),
        check_qlr_oracle(),
        check_homogeneity(),
        check_maxplus_lipschitz(),
    ]
