"""Forward noising kernels, closed-form marginals, and the Bayes posterior.

One forward step perturbs both modalities independently:

    x_t ~ N(sqrt(1 - beta^N_t) x_{t-1}, beta^N_t I)
    y_t ~ C((1 - beta^C_t) onehot(y_{t-1}) + beta^C_t / K)

which composes into closed-form marginals from the clean sample,

    x_t ~ N(sqrt(abar^N_t) x_0, (1 - abar^N_t) I)
    y_t ~ C(abar^C_t onehot(y_0) + (1 - abar^C_t) / K)

and a Bayes posterior over z_{t-1} given (z_t, z_0) that stays factorized.
The categorical posterior is the normalized elementwise product

    [alpha^C_t onehot(y_t) + (1 - alpha^C_t)/K]
      * [abar^C_{t-1} theta_0 + (1 - abar^C_{t-1})/K]

where theta_0 is the one-hot of y_0, or a predicted PMF over y_0 inserted
in its place (the expectation of the one-hot posterior, renormalized).
These orientations are the ones consistent with the one-step kernel at
t = 1 and with brute-force Bayes enumeration; the posterior module is
oracle-checked against both.

All functions accept leading batch axes on the array arguments; the
JointSample wrappers are the single-sample surface.
"""

import numpy as np

from .distribution import FactorizedGCParams, JointSample, sample_rows
from .errors import ValidationError
from .schedules import NoiseSchedule

DENOM_FLOOR = 1e-12

# The posterior of a factorized joint is itself factorized; no extra fields.
PosteriorParams = FactorizedGCParams


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    """(..., M) 1-based labels -> (..., M, K) one-hot floats."""
    y = np.asarray(y)
    if np.any(y < 1) or np.any(y > n_classes):
        raise ValidationError("labels must lie in {1..K}")
    return (y[..., None] == np.arange(1, n_classes + 1)).astype(np.float64)


def step_theta(y_prev: np.ndarray, beta_c: float, n_classes: int) -> np.ndarray:
    """One-step categorical transition PMF rows from y_{t-1}."""
    return (1.0 - beta_c) * one_hot(y_prev, n_classes) + beta_c / n_classes


def marginal_theta(y0: np.ndarray, abar_c: float, n_classes: int) -> np.ndarray:
    """Marginal PMF rows of y_t given clean labels y_0."""
    return abar_c * one_hot(y0, n_classes) + (1.0 - abar_c) / n_classes


def q_step_arrays(
    x_prev: np.ndarray,
    y_prev: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    n_classes: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Apply one forward step to batched arrays; draws x noise then y uniforms."""
    t = sched._check_t(t)
    bn = float(sched.beta_gauss[t - 1])
    bc = float(sched.beta_cat[t - 1])
    x_t = np.sqrt(1.0 - bn) * x_prev + np.sqrt(bn) * rng.standard_normal(x_prev.shape)
    y_t = sample_rows(step_theta(y_prev, bc, n_classes), rng.random(y_prev.shape))
    return x_t, y_t


def q_marginal_arrays(
    x0: np.ndarray, y0: np.ndarray, t: int, sched: NoiseSchedule, n_classes: int
) -> tuple[np.ndarray, float, np.ndarray]:
    """(mu, var, theta) of q(z_t | z_0) for batched arrays; var is scalar."""
    t = sched._check_t(t)
    abar_n = sched.abar_gauss(t)
    mu = np.sqrt(abar_n) * x0
    var = max(1.0 - abar_n, DENOM_FLOOR)
    theta = marginal_theta(y0, sched.abar_cat(t), n_classes)
    return mu, var, theta


def gauss_posterior_coeffs(t: int, s: int, sched: NoiseSchedule) -> tuple[float, float, float]:
    """(c0, ct, var) with posterior mean c0 * x0_hat + ct * x_t for the
    transition t -> s, s < t. The stride collapses the skipped steps into
    one effective step with retention abar_t / abar_s; s = t-1 recovers the
    one-step coefficients."""
    abar_t = sched.abar_gauss(t)
    abar_s = sched.abar_gauss(s)
    alpha_eff = abar_t / abar_s
    beta_eff = 1.0 - alpha_eff
    denom = max(1.0 - abar_t, DENOM_FLOOR)
    c0 = np.sqrt(abar_s) * beta_eff / denom
    ct = np.sqrt(alpha_eff) * (1.0 - abar_s) / denom
    var = (1.0 - abar_s) * beta_eff / denom
    return float(c0), float(ct), float(var)


def cat_posterior_theta(
    theta0: np.ndarray, y_t: np.ndarray, alpha_eff: float, abar_s: float, n_classes: int
) -> np.ndarray:
    """Normalized elementwise product of the likelihood and prior factors.

    theta0: (..., M, K) PMF over the clean labels (one-hot or predicted);
    y_t: (..., M) 1-based observed labels.
    """
    like = alpha_eff * one_hot(y_t, n_classes) + (1.0 - alpha_eff) / n_classes
    prior = abar_s * theta0 + (1.0 - abar_s) / n_classes
    unnorm = like * prior
    z = np.maximum(unnorm.sum(axis=-1, keepdims=True), DENOM_FLOOR)
    return unnorm / z


def posterior_arrays(
    x0_hat: np.ndarray,
    theta0_hat: np.ndarray,
    x_t: np.ndarray,
    y_t: np.ndarray,
    t: int,
    s: int,
    sched: NoiseSchedule,
    n_classes: int,
) -> tuple[np.ndarray, float, np.ndarray]:
    """(mu, var, theta) of the posterior over z_s given z_t and clean-state
    estimates, for any stride 1 <= s < t <= T."""
    t = sched._check_t(t)
    if not (1 <= s < t):
        raise ValidationError(f"stride target s={s} must satisfy 1 <= s < t={t}")
    c0, ct, var = gauss_posterior_coeffs(t, s, sched)
    mu = c0 * x0_hat + ct * x_t
    alpha_eff = sched.abar_cat(t) / sched.abar_cat(s)
    theta = cat_posterior_theta(theta0_hat, y_t, alpha_eff, sched.abar_cat(s), n_classes)
    return mu, var, theta


def q_step(
    z_prev: JointSample, t: int, sched: NoiseSchedule, rng: np.random.Generator, n_classes: int
) -> JointSample:
    """Sample z_t ~ q(z_t | z_{t-1})."""
    x_t, y_t = q_step_arrays(z_prev.x, z_prev.y, t, sched, rng, n_classes)
    return JointSample(x=x_t, y=y_t)


def q_marginal_params(
    z0: JointSample, t: int, sched: NoiseSchedule, n_classes: int
) -> FactorizedGCParams:
    """Parameters of q(z_t | z_0)."""
    mu, var, theta = q_marginal_arrays(z0.x, z0.y, t, sched, n_classes)
    return FactorizedGCParams(mu=mu, var=np.full_like(mu, var), theta=theta)


def posterior_params(
    x0_hat: np.ndarray,
    theta0_hat: np.ndarray,
    z_t: JointSample,
    t: int,
    sched: NoiseSchedule,
) -> PosteriorParams:
    """Parameters of the one-step posterior over z_{t-1} given z_t.

    Requires t >= 2; the t = 1 emission is the decoder's job. theta0_hat
    rows may be one-hot (exact clean labels) or a predicted PMF.
    """
    t = int(t)
    if t < 2:
        raise ValidationError("posterior_params requires t >= 2")
    theta0_hat = np.asarray(theta0_hat, dtype=np.float64)
    if theta0_hat.ndim != 2:
        raise ValidationError("theta0_hat must be an M x K matrix")
    n_classes = theta0_hat.shape[1]
    mu, var, theta = posterior_arrays(
        np.asarray(x0_hat, dtype=np.float64),
        theta0_hat,
        z_t.x,
        z_t.y,
        t,
        t - 1,
        sched,
        n_classes,
    )
    return FactorizedGCParams(mu=mu, var=np.full_like(mu, var), theta=theta)


def posterior_from_clean(
    z0: JointSample, z_t: JointSample, t: int, sched: NoiseSchedule, n_classes: int
) -> PosteriorParams:
    """One-step posterior with the exact clean sample (one-hot labels)."""
    return posterior_params(z0.x, one_hot(z0.y, n_classes), z_t, t, sched)
