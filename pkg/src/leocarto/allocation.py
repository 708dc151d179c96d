"""Power allocation over parallel Gaussian channels and beam scheduling.

Capacities are in nats unless ``bits=True``. Interference-side water levels
follow the sign convention mu = 1/(beta_i nu) - 1/(sigma_i + n_i), i.e. mu <= 0;
``lam = -mu`` is the adversary's positive Lagrange multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BUDGET_TOL = 1e-9


@dataclass
class ChannelSet:
    beta: np.ndarray
    sigma: np.ndarray
    P: float
    N: float = 0.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if self.beta.shape != self.sigma.shape or self.beta.size == 0:
            raise ValueError("beta and sigma must be nonempty and equal length")
        if np.any(self.beta <= 0) or np.any(self.sigma <= 0):
            raise ValueError("gains and noise powers must be positive")
        if not self.P > 0:
            raise ValueError("total power must be positive")
        if self.N < 0:
            raise ValueError("interference budget must be nonnegative")

    @property
    def m(self) -> int:
        return self.beta.size


@dataclass
class AllocationResult:
    p: np.ndarray
    n: np.ndarray
    nu: float
    mu: float
    active_set: list[int]
    kkt_residual: float
    capacity: float
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "p": self.p.tolist(), "n": self.n.tolist(), "nu": self.nu, "mu": self.mu,
            "active_set": list(self.active_set), "kkt_residual": self.kkt_residual,
            "capacity": self.capacity, "converged": self.converged,
        }


def capacity(beta, sigma, p, n=None, bits: bool = False) -> float:
    beta, sigma, p = (np.asarray(a, dtype=float) for a in (beta, sigma, p))
    n = np.zeros_like(p) if n is None else np.asarray(n, dtype=float)
    c = float(np.log1p(beta * p / (sigma + n)).sum())
    return c / np.log(2) if bits else c


# -- water-filling --------------------------------------------------------


def water_level(floors, P: float) -> float:
    """Exact level nu with sum(max(nu - floor, 0)) = P via sorted breakpoints."""
    a = np.sort(np.asarray(floors, dtype=float))
    csum = np.cumsum(a)
    m = a.size
    for k in range(1, m + 1):
        nu = (P + csum[k - 1]) / k
        if k == m or nu <= a[k]:
            return float(nu)
    raise AssertionError("unreachable")


def waterfill(beta, sigma_eff, P: float) -> AllocationResult:
    beta = np.asarray(beta, dtype=float)
    sigma_eff = np.asarray(sigma_eff, dtype=float)
    ChannelSet(beta, sigma_eff, P)
    floors = sigma_eff / beta
    nu = water_level(floors, P)
    p = np.maximum(nu - floors, 0.0)
    act = np.flatnonzero(p > 0)
    res = max(
        abs(p.sum() - P),
        float(np.abs(nu - floors[act] - p[act]).max(initial=0.0)),
        float(np.maximum(nu - floors[p == 0], 0.0).max(initial=0.0)),
    )
    return AllocationResult(
        p=p, n=np.zeros_like(p), nu=nu, mu=0.0, active_set=act.tolist(),
        kkt_residual=res, capacity=capacity(beta, sigma_eff, p),
    )


# -- adversary ------------------------------------------------------------


def _interference_at(lam, c, sigma):
    """Per-channel n solving c / ((s)(s + c)) = lam with s = sigma + n, clipped at 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        s = 0.5 * (-c + np.sqrt(c * c + 4.0 * c / lam))
    n = np.where(c > 0, s - sigma, 0.0)
    return np.maximum(n, 0.0)


def _bisect(f, lo, hi, iters=300):
    """Root of a decreasing function on [lo, hi] by bisection in log space."""
    for _ in range(iters):
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def adversary_response(p, beta, sigma, N: float) -> tuple[np.ndarray, float]:
    """Capacity-minimizing interference on the simplex 1^T n = N for fixed p.

    The objective is separable and convex in n, so the minimizer is a water
    level: n_i > 0 exactly where the marginal damage beta_i p_i /
    (s_i (s_i + beta_i p_i)) equals lam. Returns ``(n, mu)`` with mu = -lam.
    """
    p = np.asarray(p, dtype=float)
    beta = np.asarray(beta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(p < 0):
        raise ValueError("p must be nonnegative")
    if N < 0:
        raise ValueError("N must be nonnegative")
    c = beta * p
    if N == 0 or not np.any(c > 0):
        return np.zeros_like(p), 0.0
    active = c > 0
    if active.sum() == 1:
        n = np.where(active, N, 0.0)
        s = sigma + n
        return n, -float((c / (s * (s + c)))[active][0])
    slope0 = c / (sigma * (sigma + c))
    hi = float(slope0.max())
    lo = hi
    while _interference_at(lo, c, sigma).sum() < N:
        lo *= 0.5
    lam = _bisect(lambda l: _interference_at(l, c, sigma).sum() - N, lo, hi)
    n = _interference_at(lam, c, sigma)
    n *= N / n.sum()  # remove the last bisection ulp from the budget
    s = sigma + n
    lam = float(np.mean((c / (s * (s + c)))[n > 0]))
    return n, -lam


def adversary_kkt_residual(p, beta, sigma, n, mu) -> float:
    c = np.asarray(beta) * np.asarray(p)
    s = np.asarray(sigma) + np.asarray(n)
    slope = c / (s * (s + c))
    lam = -mu
    on = np.asarray(n) > 0
    r_on = np.abs(slope[on] - lam).max(initial=0.0)
    r_off = np.maximum(slope[~on] - lam, 0.0).max(initial=0.0)
    return float(max(r_on, r_off))


# -- minimax --------------------------------------------------------------


def _coupled(nu, lam, beta, sigma):
    """Joint (p, n) at transmit level nu and interference multiplier lam."""
    p = np.zeros_like(beta)
    n = np.zeros_like(beta)
    wet = sigma / beta < nu
    clean = wet & (1.0 / sigma - 1.0 / (beta * nu) <= lam)
    jam = wet & ~clean
    p[clean] = nu - sigma[clean] / beta[clean]
    with np.errstate(divide="ignore"):
        s = 1.0 / (lam + 1.0 / (beta[jam] * nu))
    n[jam] = s - sigma[jam]
    p[jam] = nu - s / beta[jam]
    return p, n


def _solve_lam(nu, beta, sigma, N):
    if N == 0:
        return np.inf
    wet = sigma / beta < nu
    hi = float((1.0 / sigma[wet] - 1.0 / (beta[wet] * nu)).max())
    lo = hi
    for _ in range(2000):
        if _coupled(nu, lo, beta, sigma)[1].sum() >= N:
            break
        lo *= 0.5
    return _bisect(lambda l: _coupled(nu, l, beta, sigma)[1].sum() - N, lo, hi)


def mu_nu_residual(beta, sigma, res: AllocationResult, tol: float = 1e-12) -> float:
    """Largest violation of mu = 1/(beta_i nu) - 1/(sigma_i + n_i) on jointly active channels."""
    beta, sigma = np.asarray(beta), np.asarray(sigma)
    both = (res.p > tol) & (res.n > tol)
    if not both.any():
        return 0.0
    rhs = 1.0 / (beta[both] * res.nu) - 1.0 / (sigma[both] + res.n[both])
    return float(np.abs(res.mu - rhs).max())


def minimax_waterfill(c: ChannelSet, max_rounds: int = 500, tol: float = 1e-10,
                      method: str = "coupled", damping: float = 0.5) -> AllocationResult:
    """Saddle point of max_p min_n sum log(1 + beta p / (sigma + n)).

    ``coupled`` solves the joint water levels directly (outer bisection on nu,
    inner on the adversary multiplier) and then runs best-response polishing.
    ``alternating`` iterates damped best responses from the interference-free
    water-filling. Either way the result is judged by its best-response gaps.
    """
    beta, sigma, P, N = c.beta, c.sigma, c.P, c.N
    if N == 0:
        return waterfill(beta, sigma, P)
    rounds = 0
    if method == "coupled":
        def budget(nu):
            p, _ = _coupled(nu, _solve_lam(nu, beta, sigma, N), beta, sigma)
            return P - p.sum()

        lo = float((sigma / beta).min())
        hi = lo + P
        while budget(hi) > 0:
            hi = lo + 2 * (hi - lo)
        nu = _bisect(budget, lo, hi)
        p, n = _coupled(nu, _solve_lam(nu, beta, sigma, N), beta, sigma)
        p = np.maximum(p, 0.0)
        p *= P / p.sum()
        n = np.maximum(n, 0.0)
        n *= N / n.sum()
    elif method == "alternating":
        p = waterfill(beta, sigma, P).p
        n = adversary_response(p, beta, sigma, N)[0]
        for rounds in range(1, max_rounds + 1):
            p_new = waterfill(beta, sigma + n, P).p
            n_new = adversary_response(p_new, beta, sigma, N)[0]
            move = max(np.abs(p_new - p).max(), np.abs(n_new - n).max())
            p = (1 - damping) * p + damping * p_new
            n = (1 - damping) * n + damping * n_new
            if move < tol:
                break
    else:
        raise ValueError(f"unknown method {method!r}")

    wf = waterfill(beta, sigma + n, P)
    n_br, mu = adversary_response(p, beta, sigma, N)
    gap_p = float(np.abs(wf.p - p).max())
    gap_n = float(np.abs(n_br - n).max())
    converged = max(gap_p, gap_n) < max(tol, 1e-7)
    res = AllocationResult(
        p=p, n=n, nu=wf.nu, mu=mu, active_set=np.flatnonzero(p > 0).tolist(),
        kkt_residual=0.0, capacity=capacity(beta, sigma, p, n), converged=converged,
        diagnostics={"best_response_gap_p": gap_p, "best_response_gap_n": gap_n, "rounds": rounds},
    )
    res.kkt_residual = max(
        wf.kkt_residual, gap_p, adversary_kkt_residual(p, beta, sigma, n, mu), mu_nu_residual(beta, sigma, res)
    )
    return res


def _simplex_samples(rng, m, total, k):
    return total * rng.dirichlet(np.ones(m), size=k)


def certify_saddle(c: ChannelSet, res: AllocationResult, n_checks: int = 100, seed: int = 0) -> dict:
    """Largest unilateral improvement found over random feasible deviations.

    Half of the deviations are uniform on the simplex, half are local
    mixtures toward such points (step 1e-3 .. 1e-1).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    f0 = capacity(c.beta, c.sigma, res.p, res.n)

    def deviations(x, total):
        far = _simplex_samples(rng, c.m, total, n_checks - n_checks // 2)
        tgt = _simplex_samples(rng, c.m, total, n_checks // 2)
        t = 10 ** rng.uniform(-3, -1, size=(n_checks // 2, 1))
        return np.vstack([far, (1 - t) * x + t * tgt])

    P_dev = deviations(res.p, c.P)
    tx_gain = max(capacity(c.beta, c.sigma, q, res.n) - f0 for q in P_dev)
    if c.N > 0:
        N_dev = deviations(res.n, c.N)
        adv_gain = max(f0 - capacity(c.beta, c.sigma, res.p, q) for q in N_dev)
    else:
        adv_gain = 0.0
    return {"transmitter_gain": float(tx_gain), "adversary_gain": float(adv_gain), "checks": int(n_checks)}


# -- beams ----------------------------------------------------------------


def beam_switch(rates) -> int:
    """1-based index of the best beam; ties go to the lowest index."""
    r = np.asarray(rates, dtype=float).reshape(-1)
    if r.size == 0:
        raise ValueError("need at least one beam")
    return int(np.argmax(r)) + 1


@dataclass
class BeamSchedule:
    schedule: np.ndarray  # (T, B) 0/1
    objective: float

    def feasible(self, Bmax: int) -> bool:
        s = self.schedule
        return bool(np.isin(s, (0, 1)).all() and (s.sum(axis=1) <= Bmax).all())


def beam_hop(rates, Bmax: int) -> BeamSchedule:
    """Per-slot top-Bmax activation; exact because slots decouple.

    Exactly Bmax beams are lit per slot, which is also optimal under the
    at-most constraint for nonnegative rates. Ties go to the lower beam index.
    """
    R = np.atleast_2d(np.asarray(rates, dtype=float))
    T, B = R.shape
    if not 1 <= Bmax <= B:
        raise ValueError("need 1 <= Bmax <= B")
    order = np.argsort(-R, axis=1, kind="stable")[:, :Bmax]
    S = np.zeros((T, B), dtype=int)
    np.put_along_axis(S, order, 1, axis=1)
    return BeamSchedule(S, float((S * R).sum()))
