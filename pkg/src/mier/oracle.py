"""Fully tabulated finite models over (x, y, z) for exact verification.

With every distribution stored as a finite table, the marginal likelihood,
the unlabeled variational bound, the mutual information, and every KL
divergence become exact finite sums. The bound-decomposition identities the
training objectives rely on are measure-agnostic, so checking them on finite
worlds checks them, to machine precision, in the same form the continuous
model uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import logsumexp

TABLE_ATOL = 1e-12


def _xlogx(p: np.ndarray) -> np.ndarray:
    """p * log(p) with the 0 log 0 = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def _xlogy(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """p * log(q), defined as 0 wherever p == 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, q, 1.0)), 0.0)


@dataclass
class DiscreteWorld:
    """Finite joint model: tables for q(x), q(y|x), q(z|x,y), p(x|y,z), p(y), p(z).

    Shapes: q_x (Nx,), q_y_given_x (Nx, K), q_z_given_xy (Nx, K, Nz),
    p_x_given_yz (K, Nz, Nx), p_y (K,), p_z (Nz,). Every conditional slice
    is a probability vector.
    """

    q_x: np.ndarray
    q_y_given_x: np.ndarray
    q_z_given_xy: np.ndarray
    p_x_given_yz: np.ndarray
    p_y: np.ndarray
    p_z: np.ndarray

    def __post_init__(self):
        self.q_x = np.asarray(self.q_x, dtype=np.float64)
        self.q_y_given_x = np.asarray(self.q_y_given_x, dtype=np.float64)
        self.q_z_given_xy = np.asarray(self.q_z_given_xy, dtype=np.float64)
        self.p_x_given_yz = np.asarray(self.p_x_given_yz, dtype=np.float64)
        self.p_y = np.asarray(self.p_y, dtype=np.float64)
        self.p_z = np.asarray(self.p_z, dtype=np.float64)
        self.validate()

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.q_x.shape[0], self.p_y.shape[0], self.p_z.shape[0])

    def validate(self) -> None:
        nx, k, nz = self.sizes
        expected = {
            "q_x": (self.q_x, (nx,)),
            "q_y_given_x": (self.q_y_given_x, (nx, k)),
            "q_z_given_xy": (self.q_z_given_xy, (nx, k, nz)),
            "p_x_given_yz": (self.p_x_given_yz, (k, nz, nx)),
            "p_y": (self.p_y, (k,)),
            "p_z": (self.p_z, (nz,)),
        }
        for name, (table, shape) in expected.items():
            if table.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {table.shape}")
            if np.any(table < 0):
                raise ValueError(f"{name} has negative entries")
            sums = table.sum(axis=-1)
            if np.any(np.abs(sums - 1.0) > TABLE_ATOL):
                raise ValueError(
                    f"{name}: conditional slices must sum to 1, worst "
                    f"deviation {np.abs(sums - 1.0).max():.3e}"
                )


def random_world(num_x: int, num_y: int, num_z: int, rng) -> DiscreteWorld:
    """A fully supported random world: every table row is Dirichlet(1)."""
    return DiscreteWorld(
        q_x=rng.dirichlet(np.ones(num_x)),
        q_y_given_x=rng.dirichlet(np.ones(num_y), size=num_x),
        q_z_given_xy=rng.dirichlet(np.ones(num_z), size=(num_x, num_y)),
        p_x_given_yz=rng.dirichlet(np.ones(num_x), size=(num_y, num_z)),
        p_y=np.full(num_y, 1.0 / num_y),
        p_z=rng.dirichlet(np.ones(num_z)),
    )


def exact_log_marginal(world: DiscreteWorld, x_index: int) -> float:
    """log p(x) = log sum_y sum_z p(x|z,y) p(y) p(z), via log-sum-exp."""
    nx, _, _ = world.sizes
    if not 0 <= x_index < nx:
        raise IndexError(f"x_index {x_index} out of range [0, {nx})")
    joint = (
        world.p_x_given_yz[:, :, x_index]
        * world.p_y[:, None]
        * world.p_z[None, :]
    )
    if np.all(joint == 0.0):
        return -np.inf
    with np.errstate(divide="ignore"):
        return float(logsumexp(np.log(joint.ravel())))


def true_posterior_world(world: DiscreteWorld) -> DiscreteWorld:
    """Replace the variational tables with the generative model's posterior.

    q(y|x) and q(z|x,y) are set to the exact conditionals of
    p(x|z,y) p(y) p(z); with these tables the unlabeled bound is tight.
    """
    nx, k, nz = world.sizes
    q_y = np.zeros((nx, k))
    q_z = np.zeros((nx, k, nz))
    for xi in range(nx):
        joint = (
            world.p_x_given_yz[:, :, xi] * world.p_y[:, None] * world.p_z[None, :]
        )  # (K, Nz)
        total = joint.sum()
        per_y = joint.sum(axis=1)
        q_y[xi] = per_y / total
        for yi in range(k):
            if per_y[yi] > 0:
                q_z[xi, yi] = joint[yi] / per_y[yi]
            else:
                q_z[xi, yi] = np.full(nz, 1.0 / nz)
    return DiscreteWorld(
        q_x=world.q_x,
        q_y_given_x=q_y,
        q_z_given_xy=q_z,
        p_x_given_yz=world.p_x_given_yz,
        p_y=world.p_y,
        p_z=world.p_z,
    )


def exact_unlabeled_elbo(world: DiscreteWorld, x_index: int) -> float:
    """The unlabeled bound U(x) with every expectation as an exact finite sum.

    U(x) = E_q(y,z|x)[log p(x|z,y)] - KL(q(y|x) || p(y))
           - E_q(y|x)[KL(q(z|x,y) || p(z))]
    """
    nx, k, _ = world.sizes
    if not 0 <= x_index < nx:
        raise IndexError(f"x_index {x_index} out of range [0, {nx})")
    q_y = world.q_y_given_x[x_index]  # (K,)
    q_z = world.q_z_given_xy[x_index]  # (K, Nz)
    lik = world.p_x_given_yz[:, :, x_index]  # (K, Nz)

    joint_q = q_y[:, None] * q_z  # (K, Nz)
    if np.any((joint_q > 0) & (lik == 0.0)):
        return -np.inf
    recon = _xlogy(joint_q, lik).sum()
    kl_y = (_xlogx(q_y) - _xlogy(q_y, world.p_y)).sum()
    kl_z_rows = (_xlogx(q_z) - _xlogy(q_z, world.p_z[None, :])).sum(axis=1)
    kl_z = float((q_y * kl_z_rows).sum())
    return float(recon - kl_y - kl_z)


@dataclass
class IdentityReport:
    """Exact values and residuals of the bound-decomposition identities."""

    kl_mean: float            # E_q(x)[KL(q(y|x) || p(y))]
    mi_direct: float          # joint double sum
    mi_decomposed: float      # H(q(y)) - E_q(x)[H(q(y|x))]
    kl_marginal: float        # KL(q(y) || p(y))
    kl_decomposition_residual: float  # |kl_mean - mi_direct - kl_marginal|
    mi_decomposition_residual: float  # |mi_direct - mi_decomposed|


def exact_identity_suite(world: DiscreteWorld) -> IdentityReport:
    """Evaluate both decomposition identities on one world.

    The mean KL to the class prior splits exactly into the mutual
    information plus the KL of the aggregated class marginal to the prior;
    the mutual information itself splits into the marginal entropy minus the
    mean conditional entropy.
    """
    q_x = world.q_x
    rows = world.q_y_given_x
    marginal = q_x @ rows  # q(y) = E_q(x)[q(y|x)]

    kl_rows = (_xlogx(rows) - _xlogy(rows, world.p_y[None, :])).sum(axis=1)
    kl_mean = float(q_x @ kl_rows)

    mi_direct = float(
        (q_x[:, None] * (_xlogy(rows, rows) - _xlogy(rows, marginal[None, :]))).sum()
    )
    conditional_entropy = float(q_x @ (-_xlogx(rows).sum(axis=1)))
    marginal_entropy = float(-_xlogx(marginal).sum())
    mi_decomposed = marginal_entropy - conditional_entropy
    kl_marginal = float((_xlogx(marginal) - _xlogy(marginal, world.p_y)).sum())

    return IdentityReport(
        kl_mean=kl_mean,
        mi_direct=mi_direct,
        mi_decomposed=mi_decomposed,
        kl_marginal=kl_marginal,
        kl_decomposition_residual=abs(kl_mean - mi_direct - kl_marginal),
        mi_decomposition_residual=abs(mi_direct - mi_decomposed),
    )


@dataclass
class TrialSummary:
    name: str
    trials: int
    max_residual: float

    def passes(self, tolerance: float = 1e-10) -> bool:
        return self.max_residual < tolerance


def run_identity_trials(trials: int, seed: int,
                        max_x: int = 8, max_y: int = 6,
                        max_z: int = 7) -> list[TrialSummary]:
    """Random-world sweeps of every exactly checkable statement.

    Returns one summary per statement: the two decomposition identities, the
    bound-versus-marginal inequality (reported as the worst positive slack
    violation), and tightness of the bound at the true posterior.
    """
    rng = np.random.default_rng(seed)
    worst_kl_identity = 0.0
    worst_mi_identity = 0.0
    worst_bound_violation = 0.0
    worst_tightness = 0.0
    for _ in range(trials):
        sizes = (
            int(rng.integers(2, max_x + 1)),
            int(rng.integers(2, max_y + 1)),
            int(rng.integers(2, max_z + 1)),
        )
        world = random_world(*sizes, rng)
        report = exact_identity_suite(world)
        worst_kl_identity = max(worst_kl_identity,
                                report.kl_decomposition_residual)
        worst_mi_identity = max(worst_mi_identity,
                                report.mi_decomposition_residual)

        xi = int(rng.integers(0, sizes[0]))
        log_px = exact_log_marginal(world, xi)
        worst_bound_violation = max(
            worst_bound_violation, exact_unlabeled_elbo(world, xi) - log_px
        )
        tight = true_posterior_world(world)
        worst_tightness = max(
            worst_tightness, abs(exact_unlabeled_elbo(tight, xi) - log_px)
        )
    return [
        TrialSummary("kl-splits-into-mi-plus-marginal-kl", trials,
                     worst_kl_identity),
        TrialSummary("mi-entropy-decomposition", trials, worst_mi_identity),
        TrialSummary("bound-below-log-marginal", trials,
                     max(worst_bound_violation, 0.0)),
        TrialSummary("bound-tight-at-true-posterior", trials,
                     worst_tightness),
    ]
