"""Elementary sampling kernels.

Univariate truncated normal draws (inverse CDF in the bulk, exponential
rejection in the far tails), Gaussian conditionals, deterministic
variance-reduction maps (antithetic reflection, over-relaxation, the exact
Hamiltonian flow of a Gaussian), the leapfrog integrator, and a
No-U-Turn transition with dual-averaging step size adaptation.

The deterministic maps leave their Gaussian conditional invariant but are
not ergodic on their own; they must be composed with at least one
stochastic update elsewhere in a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "sample_truncated_normal",
    "truncated_normal_array",
    "conditional_normal_params",
    "antithetic_step",
    "over_relax_step",
    "exact_gauss_hmc",
    "leapfrog",
    "HmcConfig",
    "nuts_sample",
    "find_reasonable_step_size",
]

# Standardised bound beyond which the inverse CDF loses resolution and the
# exponential rejection sampler takes over.
_TAIL_SPLIT = 4.0


def sample_truncated_normal(
    mu: float, sigma: float, lo: float, hi: float, rng: np.random.Generator
) -> float:
    """One draw from N(mu, sigma^2) conditioned on (lo, hi).

    Bounds may be -inf or +inf.  Accurate for bounds at least eight
    standard deviations from the mean on either side.
    """
    out = truncated_normal_array(
        np.asarray([float(mu)]), np.asarray([float(sigma)]), lo, hi, rng
    )
    return float(out[0])


def truncated_normal_array(
    mu: np.ndarray,
    sigma: np.ndarray | float,
    lo: np.ndarray | float,
    hi: np.ndarray | float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Elementwise truncated normal draws; arguments broadcast together."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), mu.shape).astype(float)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), mu.shape).astype(float)
    if np.any(sigma <= 0.0):
        raise ValueError("sigma must be positive")
    if not np.all(lo < hi):
        raise ValueError("lo must be strictly below hi")

    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    z = np.empty(mu.shape, dtype=float)

    right = a >= _TAIL_SPLIT
    left = b <= -_TAIL_SPLIT
    bulk = ~(right | left)

    if np.any(bulk):
        z[bulk] = _bulk_inverse_cdf(a[bulk], b[bulk], rng)
    if np.any(right):
        z[right] = _tail_rejection(a[right], b[right], rng)
    if np.any(left):
        z[left] = -_tail_rejection(-b[left], -a[left], rng)
    return mu + sigma * z


def _bulk_inverse_cdf(
    a: np.ndarray, b: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    pa = ndtr(a)
    pb = ndtr(b)
    u = pa + (pb - pa) * rng.random(a.shape)
    # Guard the open interval; ndtri(0) and ndtri(1) are infinite.
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    return ndtri(u)


def _tail_rejection(
    a: np.ndarray, b: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Right-tail draws on [a, b), a >= _TAIL_SPLIT, via a shifted exponential
    proposal with the optimal rate (a + sqrt(a^2 + 4)) / 2."""
    rate = 0.5 * (a + np.sqrt(a * a + 4.0))
    out = np.empty(a.shape, dtype=float)
    todo = np.arange(a.size)
    a_flat, b_flat, rate_flat = a.ravel(), b.ravel(), rate.ravel()
    out_flat = out.ravel()
    while todo.size:
        aa, bb, rr = a_flat[todo], b_flat[todo], rate_flat[todo]
        u = rng.random(todo.size)
        finite = np.isfinite(bb)
        # Inverse CDF of the exponential proposal truncated to [a, b).
        span = np.where(finite, -np.expm1(-rr * (bb - aa)), 1.0)
        cand = aa - np.log1p(-u * span) / rr
        accept = np.log(rng.random(todo.size)) <= -0.5 * (cand - rr) ** 2
        out_flat[todo[accept]] = cand[accept]
        todo = todo[~accept]
    return out_flat.reshape(a.shape)


def conditional_normal_params(
    mu: np.ndarray, cov: np.ndarray, index: int, x_other: np.ndarray
) -> tuple[float, float]:
    """Mean and standard deviation of coordinate ``index`` of N(mu, cov)
    conditional on the remaining coordinates equalling ``x_other``."""
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mu.size
    if not 0 <= index < d:
        raise ValueError("index out of range")
    if d == 1:
        return float(mu[0]), float(np.sqrt(cov[0, 0]))
    keep = np.arange(d) != index
    c_oo = cov[np.ix_(keep, keep)]
    c_io = cov[index, keep]
    w = np.linalg.solve(c_oo, np.asarray(x_other, dtype=float) - mu[keep])
    mean = float(mu[index] + c_io @ w)
    var = float(cov[index, index] - c_io @ np.linalg.solve(c_oo, c_io))
    return mean, float(np.sqrt(var))


def antithetic_step(theta: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Reflection 2 mu - theta.  An involution; leaves any distribution
    symmetric about mu invariant with Metropolis acceptance one."""
    return 2.0 * np.asarray(mu, dtype=float) - np.asarray(theta, dtype=float)


def over_relax_step(
    theta: float, mu: float, sigma: float, kappa: float, rng: np.random.Generator
) -> float:
    """Gaussian over-relaxation: (1 + kappa) mu - kappa theta + sigma sqrt(1 - kappa^2) u.

    kappa in (-1, 1]; kappa = 1 degenerates to the antithetic reflection,
    kappa = 0 to an independent draw.  Leaves N(mu, sigma^2) invariant.
    """
    if not -1.0 < kappa <= 1.0:
        raise ValueError("kappa must lie in (-1, 1]")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    noise = sigma * np.sqrt(max(0.0, 1.0 - kappa * kappa)) * rng.standard_normal()
    return float((1.0 + kappa) * mu - kappa * theta + noise)


def exact_gauss_hmc(
    theta0: np.ndarray,
    u0: np.ndarray,
    t: float,
    mu: np.ndarray,
    cov: np.ndarray,
) -> np.ndarray:
    """Exact Hamiltonian flow for a N(mu, cov) target at integration time t.

    With mass matrix cov^{-1} the flow is a rotation with period 2 pi:

        theta(t) = mu + (theta0 - mu) cos t + cov @ u0 sin t

    where u0 is the initial momentum, distributed N(0, cov^{-1}) at
    equilibrium.  t = pi reproduces the antithetic reflection exactly;
    t = pi/2 returns mu + cov @ u0, an independent draw when u0 is fresh.
    """
    theta0 = np.asarray(theta0, dtype=float)
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    return mu + (theta0 - mu) * np.cos(t) + (cov @ np.asarray(u0, dtype=float)) * np.sin(t)


def leapfrog(
    theta: np.ndarray,
    u: np.ndarray,
    eps: float,
    n_steps: int,
    grad_log_target,
    mass_diag: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """n_steps leapfrog steps of size eps for H = -log pi(theta) + u' M^{-1} u / 2.

    Returns the final (theta, u).  Volume preserving and reversible up to
    momentum negation.
    """
    theta = np.array(theta, dtype=float)
    u = np.array(u, dtype=float)
    inv_mass = 1.0 if mass_diag is None else 1.0 / np.asarray(mass_diag, dtype=float)
    u = u + 0.5 * eps * grad_log_target(theta)
    for step in range(n_steps):
        theta = theta + eps * inv_mass * u
        if step != n_steps - 1:
            u = u + eps * grad_log_target(theta)
    u = u + 0.5 * eps * grad_log_target(theta)
    return theta, u


@dataclass
class HmcConfig:
    """No-U-Turn transition settings plus dual-averaging state.

    step_size None means: run the doubling heuristic on first use.  During
    adaptation the step size follows the dual-averaging recursion towards
    the target acceptance statistic; the first non-adapting call freezes it
    at the averaged iterate.
    """

    step_size: float | None = None
    mass_diag: np.ndarray | None = None
    target_accept: float = 0.8
    max_depth: int = 10
    divergence_threshold: float = 1000.0
    da_gamma: float = 0.05
    da_t0: float = 10.0
    da_kappa: float = 0.75
    da_mu: float = 0.0
    da_h_bar: float = 0.0
    da_log_eps_bar: float = 0.0
    da_count: int = 0
    n_divergences: int = 0
    frozen: bool = False
    last_accept_stat: float = float("nan")
    last_tree_depth: int = 0
    _ready: bool = field(default=False, repr=False)


def find_reasonable_step_size(
    log_target, grad_log_target, theta0: np.ndarray, rng: np.random.Generator,
    mass_diag: np.ndarray | None = None,
) -> float:
    """Doubling/halving search for a step size with acceptance near 1/2."""
    theta0 = np.asarray(theta0, dtype=float)
    mass = np.ones(theta0.size) if mass_diag is None else np.asarray(mass_diag, float)
    eps = 1.0
    u0 = np.sqrt(mass) * rng.standard_normal(theta0.size)
    h0 = -float(log_target(theta0)) + 0.5 * float(np.sum(u0 * u0 / mass))
    theta1, u1 = leapfrog(theta0, u0, eps, 1, grad_log_target, mass)
    h1 = _hamiltonian(log_target, theta1, u1, mass)
    while not np.isfinite(h1):
        eps *= 0.5
        theta1, u1 = leapfrog(theta0, u0, eps, 1, grad_log_target, mass)
        h1 = _hamiltonian(log_target, theta1, u1, mass)
        if eps < 1e-12:
            raise RuntimeError("could not find a finite starting step size")
    direction = 1.0 if (h0 - h1) > np.log(0.5) else -1.0
    while direction * (h0 - h1) > -direction * np.log(2.0):
        eps *= 2.0**direction
        if eps > 1e7 or eps < 1e-12:
            break
        theta1, u1 = leapfrog(theta0, u0, eps, 1, grad_log_target, mass)
        h1 = _hamiltonian(log_target, theta1, u1, mass)
        if not np.isfinite(h1):
            eps *= 0.5
            break
    return float(eps)


def _hamiltonian(log_target, theta, u, mass) -> float:
    lp = float(log_target(theta))
    if not np.isfinite(lp):
        return np.inf
    return -lp + 0.5 * float(np.sum(u * u / mass))


class _Tree:
    __slots__ = (
        "theta_minus", "u_minus", "theta_plus", "u_plus",
        "proposal", "log_weight", "stopped", "divergent",
        "accept_sum", "n_states",
    )

    def __init__(self, theta, u):
        self.theta_minus = theta
        self.u_minus = u
        self.theta_plus = theta
        self.u_plus = u
        self.proposal = theta
        self.log_weight = 0.0
        self.stopped = False
        self.divergent = False
        self.accept_sum = 0.0
        self.n_states = 0


def nuts_sample(
    log_target,
    grad_log_target,
    theta0: np.ndarray,
    cfg: HmcConfig,
    adapting: bool,
    rng: np.random.Generator,
) -> tuple[np.ndarray, HmcConfig]:
    """One No-U-Turn transition with multinomial state selection.

    Doubles the trajectory until a U-turn, a divergence
    (energy error above cfg.divergence_threshold), or cfg.max_depth.
    States are selected with probability proportional to exp(-H), biased
    towards the fresh subtree.  When ``adapting`` is true the step size is
    updated by dual averaging towards cfg.target_accept; the first
    non-adapting call freezes the averaged step size.  cfg is mutated in
    place and returned.
    """
    theta0 = np.asarray(theta0, dtype=float)
    dim = theta0.size
    mass = np.ones(dim) if cfg.mass_diag is None else np.asarray(cfg.mass_diag, float)

    if not cfg._ready:
        if cfg.step_size is None:
            cfg.step_size = find_reasonable_step_size(
                log_target, grad_log_target, theta0, rng, mass
            )
        cfg.da_mu = float(np.log(10.0 * cfg.step_size))
        cfg._ready = True
    if not adapting and cfg.da_count > 0 and not cfg.frozen:
        cfg.step_size = float(np.exp(cfg.da_log_eps_bar))
        cfg.frozen = True
    eps = float(cfg.step_size)

    u0 = np.sqrt(mass) * rng.standard_normal(dim)
    h0 = _hamiltonian(log_target, theta0, u0, mass)

    tree = _Tree(theta0, u0)
    accept_sum = 0.0
    n_states = 0
    divergent = False

    for depth in range(cfg.max_depth):
        go_right = rng.random() < 0.5
        if go_right:
            sub = _build_tree(
                tree.theta_plus, tree.u_plus, +1.0, depth, eps, h0,
                log_target, grad_log_target, mass, cfg.divergence_threshold, rng,
            )
            tree.theta_plus, tree.u_plus = sub.theta_plus, sub.u_plus
        else:
            sub = _build_tree(
                tree.theta_minus, tree.u_minus, -1.0, depth, eps, h0,
                log_target, grad_log_target, mass, cfg.divergence_threshold, rng,
            )
            tree.theta_minus, tree.u_minus = sub.theta_minus, sub.u_minus

        accept_sum += sub.accept_sum
        n_states += sub.n_states
        divergent = divergent or sub.divergent
        if sub.stopped:
            break
        # Biased progressive sampling towards the new subtree.
        if np.log(rng.random()) < sub.log_weight - tree.log_weight:
            tree.proposal = sub.proposal
        tree.log_weight = np.logaddexp(tree.log_weight, sub.log_weight)
        if _u_turn(tree.theta_minus, tree.theta_plus, tree.u_minus, tree.u_plus, mass):
            break

    if divergent:
        cfg.n_divergences += 1
    alpha = accept_sum / max(n_states, 1)
    cfg.last_accept_stat = float(alpha)
    cfg.last_tree_depth = depth + 1

    if adapting:
        cfg.da_count += 1
        m = cfg.da_count
        w = 1.0 / (m + cfg.da_t0)
        cfg.da_h_bar = (1.0 - w) * cfg.da_h_bar + w * (cfg.target_accept - alpha)
        log_eps = cfg.da_mu - np.sqrt(m) / cfg.da_gamma * cfg.da_h_bar
        shrink = m ** (-cfg.da_kappa)
        cfg.da_log_eps_bar = shrink * log_eps + (1.0 - shrink) * cfg.da_log_eps_bar
        cfg.step_size = float(np.exp(log_eps))
        cfg.frozen = False

    return np.asarray(tree.proposal, dtype=float), cfg


def _u_turn(theta_minus, theta_plus, u_minus, u_plus, mass) -> bool:
    span = theta_plus - theta_minus
    return (span @ (u_minus / mass)) < 0.0 or (span @ (u_plus / mass)) < 0.0


def _build_tree(
    theta, u, direction, depth, eps, h0,
    log_target, grad_log_target, mass, div_threshold, rng,
) -> _Tree:
    if depth == 0:
        theta1, u1 = leapfrog(theta, u, direction * eps, 1, grad_log_target, mass)
        h1 = _hamiltonian(log_target, theta1, u1, mass)
        leaf = _Tree(theta1, u1)
        energy_error = h1 - h0
        leaf.log_weight = -energy_error if np.isfinite(energy_error) else -np.inf
        leaf.divergent = (not np.isfinite(energy_error)) or energy_error > div_threshold
        leaf.stopped = leaf.divergent
        leaf.accept_sum = float(np.exp(min(0.0, -energy_error))) if np.isfinite(energy_error) else 0.0
        leaf.n_states = 1
        return leaf

    first = _build_tree(
        theta, u, direction, depth - 1, eps, h0,
        log_target, grad_log_target, mass, div_threshold, rng,
    )
    if first.stopped:
        return first
    if direction > 0:
        second = _build_tree(
            first.theta_plus, first.u_plus, direction, depth - 1, eps, h0,
            log_target, grad_log_target, mass, div_threshold, rng,
        )
        first.theta_plus, first.u_plus = second.theta_plus, second.u_plus
    else:
        second = _build_tree(
            first.theta_minus, first.u_minus, direction, depth - 1, eps, h0,
            log_target, grad_log_target, mass, div_threshold, rng,
        )
        first.theta_minus, first.u_minus = second.theta_minus, second.u_minus

    first.accept_sum += second.accept_sum
    first.n_states += second.n_states
    first.divergent = first.divergent or second.divergent
    if second.stopped:
        first.stopped = True
        return first

    total = np.logaddexp(first.log_weight, second.log_weight)
    if np.log(rng.random()) < second.log_weight - total:
        first.proposal = second.proposal
    first.log_weight = total
    first.stopped = _u_turn(
        first.theta_minus, first.theta_plus, first.u_minus, first.u_plus, mass
    )
    return first
